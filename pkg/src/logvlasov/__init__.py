"""Exact-flow Monte Carlo for linear kinetic transport above a diffusely reflecting wall
under a logarithmic gravity potential."""
import warnings

# numba probes TBB at import and warns when the system copy is too old; the
# OpenMP/workqueue layers are used instead.
warnings.filterwarnings("ignore", message="The TBB threading layer")

__version__ = "0.1.0"
