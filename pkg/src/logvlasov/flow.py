"""Logarithmic potential, exact characteristic flow and exit times.

The height potential is ``Phi(x3) = ln(1 + x3) / ln a``.  Along a trajectory the
vertical energy ``w^2 = v3^2 + 2 Phi(x3)`` is constant, which gives

    1 + X3 = a^{(w^2 - V3^2)/2},
    F_a(V3(s)) = F_a(v3) - a^{-w^2/2} s / ln a,

with ``F_a(u) = int_0^u a^{-y^2/2} dy = S erf(beta u)``, ``beta = sqrt(ln a / 2)``
and ``S = sqrt(pi / (2 ln a))``.  Everything below is a closed-form evaluation of
these two identities; no time stepping is involved.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, vectorize

from .errors import BoundaryCrossingError, DomainError

DEFAULT_LN_A = 0.125
_SQRT_PI = math.sqrt(math.pi)
_TWO_OVER_SQRT_PI = 2.0 / _SQRT_PI


# ---------------------------------------------------------------- special functions

@njit(cache=True)
def erfinv_scalar(y):
    """Inverse error function.

    Seeded with Giles' single-precision polynomial, then refined by Halley steps
    until the relative update drops below 1e-14.
    """
    if y == 0.0:
        return 0.0
    if y < 0.0:
        return -erfinv_scalar(-y)
    if y >= 1.0:
        return math.inf if y == 1.0 else math.nan
    w = -math.log((1.0 - y) * (1.0 + y))
    if w < 5.0:
        w -= 2.5
        p = 2.81022636e-08
        p = 3.43273939e-07 + p * w
        p = -3.5233877e-06 + p * w
        p = -4.39150654e-06 + p * w
        p = 0.00021858087 + p * w
        p = -0.00125372503 + p * w
        p = -0.00417768164 + p * w
        p = 0.246640727 + p * w
        p = 1.50140941 + p * w
    else:
        w = math.sqrt(w) - 3.0
        p = -0.000200214257
        p = 0.000100950558 + p * w
        p = 0.00134934322 + p * w
        p = -0.00367342844 + p * w
        p = 0.00573950773 + p * w
        p = -0.0076224613 + p * w
        p = 0.00943887047 + p * w
        p = 1.00167406 + p * w
        p = 2.83297682 + p * w
    x = p * y
    # near 1 the residual is formed from erfc, which keeps full relative precision
    tail = y > 0.5
    q = 1.0 - y
    for _ in range(8):
        f = q - math.erfc(x) if tail else math.erf(x) - y
        fp = _TWO_OVER_SQRT_PI * math.exp(-x * x)
        dx = f / (fp + x * f)
        x -= dx
        if abs(dx) <= 1e-14 * abs(x):
            break
    return x


@vectorize(["float64(float64)"], cache=True)
def erfinv(y):
    return erfinv_scalar(y)


@njit(cache=True)
def gauss_integral_scalar(ln_a, u):
    beta = math.sqrt(0.5 * ln_a)
    return 0.5 * _SQRT_PI / beta * math.erf(beta * u)


@njit(cache=True)
def gauss_integral_inv_scalar(ln_a, y):
    # odd extension, no range check
    beta = math.sqrt(0.5 * ln_a)
    return erfinv_scalar(y * 2.0 * beta / _SQRT_PI) / beta


@vectorize(["float64(float64, float64)"], cache=True)
def _gauss_integral_uf(ln_a, u):
    return gauss_integral_scalar(ln_a, u)


@vectorize(["float64(float64, float64)"], cache=True)
def _gauss_integral_inv_uf(ln_a, y):
    return gauss_integral_inv_scalar(ln_a, y)


# ---------------------------------------------------------------- parameters and states

@dataclass(frozen=True)
class PotentialParams:
    """Base ``a`` of the logarithmic potential plus the total mass.

    ``ln_a`` may be given instead of ``a`` to avoid a round trip through ``exp``.
    ``min_big_a`` is the smallest admissible integer exponent; the default 8 is
    the regime in which the decay results hold.
    """

    a: float = None
    mass: float = 1.0
    ln_a: float = None
    min_big_a: int = 8
    big_a: int = field(init=False)
    c_m: float = field(init=False)

    def __post_init__(self):
        if self.ln_a is None and self.a is None:
            object.__setattr__(self, "ln_a", DEFAULT_LN_A)
        if self.ln_a is None:
            a = float(self.a)
            if not a > 1.0:
                raise DomainError(f"base a must exceed 1, got {a}")
            object.__setattr__(self, "ln_a", math.log(a))
        ln_a = float(self.ln_a)
        object.__setattr__(self, "ln_a", ln_a)
        if self.a is None:
            object.__setattr__(self, "a", math.exp(ln_a))
        if not (0.0 < ln_a < 1.0):
            raise DomainError(f"need 1 < a < e, got ln a = {ln_a}")
        big_a = math.floor(1.0 / ln_a)
        if big_a < self.min_big_a:
            raise DomainError(f"exponent floor(1/ln a) = {big_a} is below {self.min_big_a}")
        if not self.mass >= 0.0:
            raise DomainError(f"mass must be non-negative, got {self.mass}")
        object.__setattr__(self, "big_a", big_a)
        # total mass of (c/2pi) exp(-|v|^2/2 - Phi) over the half-space
        object.__setattr__(self, "c_m", self.mass * (1.0 / ln_a - 1.0) / math.sqrt(2.0 * math.pi))

    @classmethod
    def from_ln_a(cls, ln_a, mass=1.0, min_big_a=8):
        return cls(ln_a=ln_a, mass=mass, min_big_a=min_big_a)

    @property
    def beta(self):
        return math.sqrt(0.5 * self.ln_a)

    @property
    def gauss_sup(self):
        """Supremum of ``F_a``."""
        return math.sqrt(math.pi / (2.0 * self.ln_a))

    @property
    def tb_ratio_sup(self):
        """Supremum of ``t_b / a^{v3^2/2}`` over boundary states."""
        return math.sqrt(2.0 * math.pi * self.ln_a)


def _wrap(x):
    y = x - math.floor(x)
    return 0.0 if y >= 1.0 else y


@dataclass(frozen=True)
class PhaseState:
    x_par: tuple
    x3: float
    v: tuple

    def __post_init__(self):
        x3 = float(self.x3)
        if not x3 >= 0.0:
            raise DomainError(f"height must be non-negative, got {x3}")
        x1, x2 = self.x_par
        object.__setattr__(self, "x_par", (_wrap(float(x1)), _wrap(float(x2))))
        object.__setattr__(self, "x3", x3)
        v1, v2, v3 = self.v
        object.__setattr__(self, "v", (float(v1), float(v2), float(v3)))

    @property
    def on_boundary(self):
        return self.x3 == 0.0


@dataclass(frozen=True)
class ExitEvent:
    """Flight to the previous (``backward``) or next (``forward``) wall contact.

    ``boundary_velocity`` is the velocity at the wall: pointing up for a
    backward footpoint, down for a forward one.  Its norm is the conserved
    energy speed ``sqrt(|v|^2 + 2 Phi(x3))``, which is ``|v|`` for wall states.
    """

    duration: float
    footpoint: tuple
    boundary_velocity: tuple
    direction: str
    degenerate: bool = False


# ---------------------------------------------------------------- scalar kernels

@njit(cache=True)
def phi_scalar(ln_a, x3):
    return math.log1p(x3) / ln_a


@njit(cache=True)
def energy_speed(ln_a, x3, v3):
    """``w = sqrt(v3^2 + 2 Phi(x3))``, the vertical speed at the wall."""
    if x3 == 0.0:
        return abs(v3)
    return math.sqrt(v3 * v3 + 2.0 * math.log1p(x3) / ln_a)


@njit(cache=True)
def exit_times_scalar(ln_a, x3, v3):
    """Return ``(t_b, t_f)`` by splitting the orbit at its apex."""
    w = energy_speed(ln_a, x3, v3)
    if w == 0.0:
        return 0.0, 0.0
    beta = math.sqrt(0.5 * ln_a)
    # 1/c = ln a * S * a^{w^2/2}, the time per unit of erf
    inv_c = ln_a * 0.5 * _SQRT_PI / beta * math.exp(0.5 * ln_a * w * w)
    half = math.erf(beta * w) * inv_c
    to_apex = math.erf(beta * v3) * inv_c
    t_b = half - to_apex
    t_f = half + to_apex
    if t_b < 0.0:
        t_b = 0.0
    if t_f < 0.0:
        t_f = 0.0
    return t_b, t_f


@njit(cache=True)
def vertical_scalar(ln_a, x3, v3, s):
    """Height and vertical velocity after time ``s`` (either sign)."""
    if s == 0.0:
        return x3, v3
    w = energy_speed(ln_a, x3, v3)
    beta = math.sqrt(0.5 * ln_a)
    c = _TWO_OVER_SQRT_PI * beta * math.exp(-0.5 * ln_a * w * w) / ln_a
    y = math.erf(beta * v3) - c * s
    lim = math.erf(beta * w)
    if y <= -lim:
        return 0.0, -w
    if y >= lim:
        return 0.0, w
    v3n = erfinv_scalar(y) / beta
    x3n = math.expm1(0.5 * ln_a * (w - v3n) * (w + v3n))
    if x3n < 0.0:
        x3n = 0.0
    return x3n, v3n


@njit(cache=True)
def wrap_scalar(x):
    y = x - math.floor(x)
    if y >= 1.0:
        y = 0.0
    return y


@njit(cache=True)
def flow_batch_kernel(ln_a, x, v, dt, out_x, out_v):
    for i in range(x.shape[0]):
        s = dt[i]
        out_x[i, 0] = wrap_scalar(x[i, 0] + v[i, 0] * s)
        out_x[i, 1] = wrap_scalar(x[i, 1] + v[i, 1] * s)
        x3n, v3n = vertical_scalar(ln_a, x[i, 2], v[i, 2], s)
        out_x[i, 2] = x3n
        out_v[i, 0] = v[i, 0]
        out_v[i, 1] = v[i, 1]
        out_v[i, 2] = v3n


@njit(cache=True)
def exit_batch_kernel(ln_a, x3, v3, t_b, t_f):
    for i in range(x3.shape[0]):
        t_b[i], t_f[i] = exit_times_scalar(ln_a, x3[i], v3[i])


# ---------------------------------------------------------------- public surface

def phi(params, x3):
    """Potential ``ln(1 + x3) / ln a``; accepts scalars or arrays."""
    x3 = np.asarray(x3, dtype=float)
    if np.any(x3 < 0) or np.any(np.isnan(x3)):
        raise DomainError("height must be non-negative")
    out = np.log1p(x3) / params.ln_a
    return float(out) if out.ndim == 0 else out


def gauss_integral(params, u):
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(np.isnan(u)):
        raise DomainError("F_a is defined here for u >= 0")
    out = _gauss_integral_uf(params.ln_a, u)
    return float(out) if np.ndim(out) == 0 else out


def gauss_integral_inv(params, y):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(~(y < params.gauss_sup)):
        raise DomainError(f"inverse of F_a needs y in [0, {params.gauss_sup})")
    out = _gauss_integral_inv_uf(params.ln_a, y)
    return float(out) if np.ndim(out) == 0 else out


def boundary_flight_time(params, w):
    """Flight time of a wall launch with vertical speed ``|w|``: ``2 ln a a^{w^2/2} F_a(|w|)``."""
    w = np.abs(np.asarray(w, dtype=float))
    out = 2.0 * params.ln_a * np.exp(0.5 * params.ln_a * w * w) * _gauss_integral_uf(params.ln_a, w)
    return float(out) if np.ndim(out) == 0 else out


def exit_times(params, x3, v3):
    """Vectorized ``(t_b, t_f)`` for arrays of heights and vertical velocities."""
    x3 = np.ascontiguousarray(x3, dtype=float)
    v3 = np.ascontiguousarray(v3, dtype=float)
    if np.any(x3 < 0):
        raise DomainError("height must be non-negative")
    t_b = np.empty_like(x3)
    t_f = np.empty_like(x3)
    exit_batch_kernel(params.ln_a, x3.ravel(), v3.ravel(), t_b.ravel(), t_f.ravel())
    return t_b, t_f


def flow_arrays(params, x, v, dt):
    """Flow ``n`` states (``x``, ``v`` of shape ``(n, 3)``) by ``dt`` (scalar or ``(n,)``).

    No exit check is made; callers must keep ``dt`` inside the exit window.
    """
    x = np.ascontiguousarray(x, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    dt = np.ascontiguousarray(np.broadcast_to(np.asarray(dt, dtype=float), (x.shape[0],)))
    out_x = np.empty_like(x)
    out_v = np.empty_like(v)
    flow_batch_kernel(params.ln_a, x, v, dt, out_x, out_v)
    return out_x, out_v


def _window_tol(t):
    return 1e-12 * max(1.0, t)


def flow(params, state, dt):
    """Exact characteristic flow of ``state`` for time ``dt``.

    Negative ``dt`` flows backward.  The trajectory must stay in the half-space,
    so ``-t_b <= dt <= t_f``.
    """
    dt = float(dt)
    if dt == 0.0:
        return state
    t_b, t_f = exit_times_scalar(params.ln_a, state.x3, state.v[2])
    if dt > t_f + _window_tol(t_f):
        raise BoundaryCrossingError(f"dt={dt} exceeds forward exit time {t_f}")
    if -dt > t_b + _window_tol(t_b):
        raise BoundaryCrossingError(f"-dt={-dt} exceeds backward exit time {t_b}")
    v1, v2, v3 = state.v
    x3n, v3n = vertical_scalar(params.ln_a, state.x3, v3, dt)
    x1, x2 = state.x_par
    return PhaseState((x1 + v1 * dt, x2 + v2 * dt), x3n, (v1, v2, v3n))


def exit_time(params, state, direction="backward"):
    if direction not in ("backward", "forward"):
        raise DomainError(f"direction must be 'backward' or 'forward', got {direction!r}")
    v1, v2, v3 = state.v
    t_b, t_f = exit_times_scalar(params.ln_a, state.x3, v3)
    w = energy_speed(params.ln_a, state.x3, v3)
    degenerate = state.x3 == 0.0 and v3 == 0.0
    x1, x2 = state.x_par
    if direction == "backward":
        t, sign = t_b, -1.0
        vb = (v1, v2, w)
    else:
        t, sign = t_f, 1.0
        vb = (v1, v2, -w)
    foot = (_wrap(x1 + sign * v1 * t), _wrap(x2 + sign * v2 * t))
    return ExitEvent(t, foot, vb, direction, degenerate)
