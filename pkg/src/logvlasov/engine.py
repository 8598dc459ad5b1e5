"""Two-population Monte Carlo for the fluctuation ``f = f_plus - f_minus``.

Each population is a cloud of unit-mass-normalized particles moved by exact
flights and wall re-emissions.  Particle ``i`` of a population draws all of its
randomness from the counter stream ``(seed, tag, i)``: event 0 at birth and
event ``k`` at its k-th wall contact.  Results are therefore identical for any
thread count.
"""
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from . import rng
from .boundary import birth_kernel
from .errors import ConfigError, DomainError
from .flow import exit_times, exit_times_scalar, vertical_scalar, wrap_scalar

CHECKPOINT_MAGIC = b"LVCK"
CHECKPOINT_VERSION = 1
NORMS_COLUMNS = ("t", "l1", "l1_se", "moment_theta", "moment_se")


# ---------------------------------------------------------------- particle kernel

@njit(cache=True)
def _advance_one(ln_a, key, x, v, ev, dt, arrivals, row, cap):
    x1, x2, x3 = x[0], x[1], x[2]
    v1, v2, v3 = v[0], v[1], v[2]
    rem = dt
    n_arr = 0
    while True:
        tf = exit_times_scalar(ln_a, x3, v3)[1]
        if tf > rem:
            break
        x1 = wrap_scalar(x1 + v1 * tf)
        x2 = wrap_scalar(x2 + v2 * tf)
        if n_arr < cap:
            arrivals[row, n_arr] = math.sqrt(v3 * v3 + 2.0 * math.log1p(x3) / ln_a)
        n_arr += 1
        rem -= tf
        ev += 1
        v1, v2, v3 = rng.outgoing_velocity(key, ev)
        x3 = 0.0
    x1 = wrap_scalar(x1 + v1 * rem)
    x2 = wrap_scalar(x2 + v2 * rem)
    x3, v3 = vertical_scalar(ln_a, x3, v3, rem)
    x[0], x[1], x[2] = x1, x2, x3
    v[0], v[1], v[2] = v1, v2, v3
    return ev, n_arr


@njit(cache=True, parallel=True)
def evolve_kernel(ln_a, seed, tag, x, v, events, dt, arrivals, n_arrivals):
    cap = arrivals.shape[1] if arrivals.shape[0] > 0 else 0
    for i in prange(x.shape[0]):
        key = rng.stream_key(seed, tag, i)
        events[i], n = _advance_one(ln_a, key, x[i], v[i], events[i], dt, arrivals, i, cap)
        n_arrivals[i] = n


# ---------------------------------------------------------------- populations

@dataclass
class Population:
    """Struct-of-arrays particle cloud carrying unit mass."""

    x: np.ndarray
    v: np.ndarray
    events: np.ndarray
    tag: int

    def __len__(self):
        return self.x.shape[0]

    def copy(self):
        return Population(self.x.copy(), self.v.copy(), self.events.copy(), self.tag)


def birth_population(params, n, seed, tag, shift=0.0):
    x = np.empty((n, 3))
    v = np.empty((n, 3))
    birth_kernel(seed, tag, params.ln_a, float(shift), x, v)
    return Population(x, v, np.zeros(n, dtype=np.int64), tag)


def advance_population(params, pop, dt, seed, arrival_cap=0):
    """Advance ``pop`` in place by ``dt``.

    Returns per-particle wall-arrival counts and, when ``arrival_cap > 0``,
    the vertical arrival speeds of the first ``arrival_cap`` contacts (NaN padded).
    """
    n = len(pop)
    arrivals = np.full((n if arrival_cap else 0, max(arrival_cap, 1)), np.nan)
    counts = np.zeros(n, dtype=np.int64)
    if dt > 0.0:
        evolve_kernel(params.ln_a, seed, pop.tag, pop.x, pop.v, pop.events,
                      float(dt), arrivals, counts)
    return counts, (arrivals if arrival_cap else None)


@dataclass(frozen=True)
class FluctuationSpec:
    """Initial fluctuation as the difference of two height-shifted stationary clouds."""

    plus_shift: float = 1.0
    minus_shift: float = 0.0

    def __post_init__(self):
        for name in ("plus_shift", "minus_shift"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val >= 0.0):
                raise ConfigError(name, f"height shift must be a finite non-negative number, got {val!r}")


NAMED_FLUCTUATIONS = {
    "default": FluctuationSpec(1.0, 0.0),
    "null": FluctuationSpec(0.0, 0.0),
}


@dataclass
class SignedEnsemble:
    plus: Population
    minus: Population
    seed: int
    time: float = 0.0
    weight_per_particle: float = field(init=False)

    def __post_init__(self):
        if len(self.plus) != len(self.minus):
            raise DomainError("plus and minus populations must have equal size")
        self.weight_per_particle = 1.0 / len(self.plus) if len(self.plus) else 0.0

    @property
    def n(self):
        return len(self.plus)

    def signed_mass(self):
        return (len(self.plus) - len(self.minus)) * self.weight_per_particle

    def copy(self):
        return SignedEnsemble(self.plus.copy(), self.minus.copy(), self.seed, self.time)


def init_fluctuation(params, n, seed, spec="default"):
    """Equal-size plus/minus clouds sampled from the two densities of ``spec``."""
    if isinstance(spec, str):
        if spec not in NAMED_FLUCTUATIONS:
            raise ConfigError("fluctuation", f"unknown initial fluctuation {spec!r}")
        spec = NAMED_FLUCTUATIONS[spec]
    if not isinstance(spec, FluctuationSpec):
        raise ConfigError("fluctuation", f"cannot sample {spec!r}")
    if n <= 0:
        raise ConfigError("n_particles", "must be positive")
    plus = birth_population(params, n, seed, rng.TAG_PLUS, spec.plus_shift)
    minus = birth_population(params, n, seed, rng.TAG_MINUS, spec.minus_shift)
    return SignedEnsemble(plus, minus, seed)


def initial_weight_bound(params, ens, spec=NAMED_FLUCTUATIONS["default"]):
    """Max over the samples of ``exp(|v|^2/2 + Phi) |f0|`` for a shifted-cloud spec."""
    p = 1.0 / params.ln_a

    def height_density(x3, shift):
        z = x3 - shift
        return np.where(z >= 0, (p - 1.0) * np.power(1.0 + np.maximum(z, 0.0), -p), 0.0)

    x3 = np.concatenate([ens.plus.x[:, 2], ens.minus.x[:, 2]])
    diff = np.abs(height_density(x3, spec.plus_shift) - height_density(x3, spec.minus_shift))
    # exp(|v|^2/2) cancels the Gaussian factor; exp(Phi) = (1 + x3)^p
    return float(np.max(diff * np.power(1.0 + x3, p)) / (2.0 * math.pi) ** 1.5)


def evolve(params, ens, t_target, arrival_cap=0):
    """Advance both populations to ``t_target`` in place and return the ensemble."""
    if t_target < ens.time:
        raise DomainError(f"cannot evolve backward from {ens.time} to {t_target}")
    dt = t_target - ens.time
    if dt > 0.0:
        advance_population(params, ens.plus, dt, ens.seed, arrival_cap)
        advance_population(params, ens.minus, dt, ens.seed, arrival_cap)
    ens.time = float(t_target)
    return ens


# ---------------------------------------------------------------- histograms

def _default_x3_top(ln_a, tail=1e-4):
    return math.expm1(-math.log(tail) / (1.0 / ln_a - 1.0))


@dataclass(frozen=True)
class HistogramSpec:
    """Cells on ``(x3, v3, |v_par|)``.

    Every axis also has overflow cells, so no particle is ever dropped; the
    ``truncation`` values are where the regular grid ends.
    """

    x3_edges: np.ndarray
    v3_edges: np.ndarray
    vpar_edges: np.ndarray

    def __post_init__(self):
        for name in ("x3_edges", "v3_edges", "vpar_edges"):
            e = np.asarray(getattr(self, name), dtype=float)
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
                raise DomainError(f"{name} must be strictly increasing with at least two edges")
            object.__setattr__(self, name, e)
        if self.x3_edges[0] != 0.0 or self.vpar_edges[0] != 0.0:
            raise DomainError("height and tangential-speed edges must start at 0")

    @classmethod
    def default(cls, params, n_x3=64, n_v3=32, n_vpar=16, v_max=6.0, tail=1e-4):
        top = _default_x3_top(params.ln_a, tail)
        x3 = np.expm1(np.linspace(0.0, math.log1p(top), n_x3 + 1))
        x3[0] = 0.0
        return cls(x3, np.linspace(-v_max, v_max, n_v3 + 1), np.linspace(0.0, v_max, n_vpar + 1))

    def refined(self, factor=2):
        def refine(e):
            sub = np.linspace(0.0, 1.0, factor + 1)[:-1]
            inner = (e[:-1, None] + np.diff(e)[:, None] * sub[None, :]).ravel()
            return np.append(inner, e[-1])

        x3 = np.expm1(refine(np.log1p(self.x3_edges)))
        x3[0] = 0.0
        return HistogramSpec(x3, refine(self.v3_edges), refine(self.vpar_edges))

    @property
    def truncation(self):
        return float(self.x3_edges[-1]), float(max(-self.v3_edges[0], self.v3_edges[-1], self.vpar_edges[-1]))

    @property
    def shape(self):
        # x3: bins + overflow; v3: underflow + bins + overflow; vpar: bins + overflow
        return (self.x3_edges.size, self.v3_edges.size + 1, self.vpar_edges.size)

    @property
    def n_cells(self):
        a, b, c = self.shape
        return a * b * c

    def cell_index(self, x, v):
        nx, nv, npar = self.shape
        ix = np.searchsorted(self.x3_edges, x[:, 2], side="right") - 1
        iv = np.searchsorted(self.v3_edges, v[:, 2], side="right")
        vp = np.hypot(v[:, 0], v[:, 1])
        ip = np.searchsorted(self.vpar_edges, vp, side="right") - 1
        np.minimum(ix, nx - 1, out=ix)
        np.minimum(ip, npar - 1, out=ip)
        return (ix * nv + iv) * npar + ip

    def cell_volumes(self):
        """Phase-space volume of each regular cell (unit torus); overflow cells get ``inf``."""
        dx = np.append(np.diff(self.x3_edges), np.inf)
        dv = np.concatenate([[np.inf], np.diff(self.v3_edges), [np.inf]])
        r = self.vpar_edges
        dp = np.append(np.pi * (r[1:] ** 2 - r[:-1] ** 2), np.inf)
        return (dx[:, None, None] * dv[None, :, None] * dp[None, None, :]).ravel()

    def cell_centers(self):
        """``(x3, v3, |v_par|)`` midpoints per cell; overflow cells use their inner edge."""
        def mids(e, lo_over, hi_over):
            m = 0.5 * (e[:-1] + e[1:])
            if lo_over:
                m = np.concatenate([[e[0]], m])
            if hi_over:
                m = np.append(m, e[-1])
            return m

        xc = mids(self.x3_edges, False, True)
        vc = mids(self.v3_edges, True, True)
        pc = mids(self.vpar_edges, False, True)
        X, V, P = np.meshgrid(xc, vc, pc, indexing="ij")
        return X.ravel(), V.ravel(), P.ravel()

    def regular_mask(self):
        return np.isfinite(self.cell_volumes())

    def mu_capture(self, params):
        """Fraction of stationary mass inside the regular grid."""
        from scipy.stats import chi2, norm

        p = 1.0 / params.ln_a
        hx = -math.expm1((1.0 - p) * math.log1p(self.x3_edges[-1]))
        hv = norm.cdf(self.v3_edges[-1]) - norm.cdf(self.v3_edges[0])
        hp = chi2.cdf(self.vpar_edges[-1] ** 2, 2)
        return hx * hv * hp


@dataclass
class CellHistogram:
    """Per-particle cell indices and forward exit times of an ensemble snapshot."""

    spec: HistogramSpec
    idx_plus: np.ndarray
    idx_minus: np.ndarray
    tf_plus: np.ndarray = None
    tf_minus: np.ndarray = None
    time: float = 0.0

    @property
    def n(self):
        return self.idx_plus.shape[0]

    def counts(self, which):
        idx = self.idx_plus if which == "plus" else self.idx_minus
        return np.bincount(idx, minlength=self.spec.n_cells)

    def has_tf(self):
        return self.tf_plus is not None and self.tf_minus is not None


def histogram(params, ens, spec, with_tf=True):
    if ens.n == 0:
        raise DomainError("empty ensemble")
    h = CellHistogram(spec, spec.cell_index(ens.plus.x, ens.plus.v),
                      spec.cell_index(ens.minus.x, ens.minus.v), time=ens.time)
    if with_tf:
        h.tf_plus = exit_times(params, ens.plus.x[:, 2], ens.plus.v[:, 2])[1]
        h.tf_minus = exit_times(params, ens.minus.x[:, 2], ens.minus.v[:, 2])[1]
    return h


def signed_l1(idx_p, idx_m, n_cells, n, w_p=None, w_m=None):
    """``sum_cells |m_plus - m_minus|`` with particle weights (default 1) over ``n``."""
    cp = np.bincount(idx_p, weights=w_p, minlength=n_cells)
    cm = np.bincount(idx_m, weights=w_m, minlength=n_cells)
    return float(np.sum(np.abs(cp - cm))) / n


def poisson_bootstrap(stat, n_plus, n_minus, n_boot, seed):
    """Bootstrap standard error of ``stat(resample_weights_plus, resample_weights_minus)``."""
    gen = np.random.default_rng([seed, 0xB007])
    vals = np.empty(n_boot)
    for b in range(n_boot):
        vals[b] = stat(gen.poisson(1.0, n_plus).astype(float), gen.poisson(1.0, n_minus).astype(float))
    return float(np.std(vals, ddof=1))


@dataclass
class L1Estimate:
    value: float
    se: float
    refined: float
    noise_floor: float


def estimate_l1(params, ens, spec, n_boot=32, boot_seed=0):
    """Histogram L1 distance between the two populations with bootstrap error.

    ``refined`` is the same estimate on a grid refined twice along each axis
    (a binning-bias proxy); ``noise_floor`` is ``sum_c 2 sqrt(n_c) / N`` with
    ``n_c`` the pooled mean count, the scale of the estimate for equal laws.
    """
    if ens.n == 0:
        raise DomainError("empty ensemble")
    h = histogram(params, ens, spec, with_tf=False)
    return estimate_l1_hist(h, n_boot, boot_seed, ens)


def estimate_l1_hist(h, n_boot=32, boot_seed=0, ens=None):
    n = h.n
    nc = h.spec.n_cells
    value = signed_l1(h.idx_plus, h.idx_minus, nc, n)
    se = poisson_bootstrap(lambda wp, wm: signed_l1(h.idx_plus, h.idx_minus, nc, n, wp, wm),
                           n, n, n_boot, boot_seed) if n_boot > 1 else float("nan")
    pooled = 0.5 * (h.counts("plus") + h.counts("minus"))
    floor = float(np.sum(2.0 * np.sqrt(pooled))) / n
    refined = float("nan")
    if ens is not None:
        rs = h.spec.refined()
        refined = signed_l1(rs.cell_index(ens.plus.x, ens.plus.v),
                            rs.cell_index(ens.minus.x, ens.minus.v), rs.n_cells, n)
    return L1Estimate(value, se, refined, floor)


def default_slabs(spec):
    return spec.x3_edges


@dataclass
class MomentEstimate:
    value: float
    se: float
    slab: int
    per_slab: np.ndarray


def _moment_per_slab(slab_p, vc_p, w_p, slab_m, vc_m, w_m, n_slabs, n_vc, widths, n):
    k = n_slabs * n_vc
    cp = np.bincount(slab_p * n_vc + vc_p, weights=w_p, minlength=k)
    cm = np.bincount(slab_m * n_vc + vc_m, weights=w_m, minlength=k)
    return np.abs(cp - cm).reshape(n_slabs, n_vc).sum(axis=1)[: widths.size] / (n * widths)


def estimate_exponential_moment(params, ens, theta, x3_slabs=None, spec=None, n_boot=32, boot_seed=0):
    """Max over height slabs of the slab-averaged ``int exp(theta(|v|^2 + 2 Phi)) |f| dv``.

    Velocities are binned on the ``(v3, |v_par|)`` grid of ``spec``; particles
    above the last slab edge are ignored.
    """
    if not (0.0 <= 2.0 * theta < 0.5):
        raise DomainError(f"need 0 <= 2 theta < 1/2, got theta = {theta}")
    if spec is None:
        spec = HistogramSpec.default(params)
    slabs = default_slabs(spec) if x3_slabs is None else np.asarray(x3_slabs, dtype=float)
    widths = np.diff(slabs)
    n_slabs = widths.size + 1  # last index collects out-of-range particles
    _, nv, npar = spec.shape

    def prep(pop):
        s = np.searchsorted(slabs, pop.x[:, 2], side="right") - 1
        s = np.where((s < 0) | (s >= widths.size), widths.size, s)
        iv = np.searchsorted(spec.v3_edges, pop.v[:, 2], side="right")
        ip = np.minimum(np.searchsorted(spec.vpar_edges, np.hypot(pop.v[:, 0], pop.v[:, 1]), side="right") - 1, npar - 1)
        e = np.sum(pop.v * pop.v, axis=1) + 2.0 * np.log1p(pop.x[:, 2]) / params.ln_a
        return s, iv * npar + ip, np.exp(theta * e)

    sp, vp, wp = prep(ens.plus)
    sm, vm, wm = prep(ens.minus)
    n = ens.n
    per = _moment_per_slab(sp, vp, wp, sm, vm, wm, n_slabs, nv * npar, widths, n)
    j = int(np.argmax(per))

    def stat(bp, bm):
        return float(np.max(_moment_per_slab(sp, vp, wp * bp, sm, vm, wm * bm, n_slabs, nv * npar, widths, n)))

    se = poisson_bootstrap(stat, n, n, n_boot, boot_seed) if n_boot > 1 else float("nan")
    return MomentEstimate(float(per[j]), se, j, per)


# ---------------------------------------------------------------- I/O

def write_checkpoint(path, params, ens):
    header = {
        "version": CHECKPOINT_VERSION,
        "seed": int(ens.seed),
        "ln_a": params.ln_a,
        "mass": params.mass,
        "time": ens.time,
        "n": ens.n,
        "tags": [ens.plus.tag, ens.minus.tag],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for pop in (ens.plus, ens.minus):
            fh.write(np.ascontiguousarray(pop.x, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(pop.v, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(pop.events, dtype="<i8").tobytes())


def read_checkpoint(path):
    """Return ``(ensemble, header)``."""
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise DomainError(f"{path}: not a checkpoint file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise DomainError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode())
        n = header["n"]
        pops = []
        for tag in header["tags"]:
            x = np.frombuffer(fh.read(24 * n), dtype="<f8").reshape(n, 3).copy()
            v = np.frombuffer(fh.read(24 * n), dtype="<f8").reshape(n, 3).copy()
            ev = np.frombuffer(fh.read(8 * n), dtype="<i8").copy()
            pops.append(Population(x, v, ev, tag))
    return SignedEnsemble(pops[0], pops[1], header["seed"], header["time"]), header


def fmt(x):
    return format(float(x), ".17g")


def write_norms_csv(path, rows):
    """``rows``: iterables of ``(t, l1, l1_se, moment_theta, moment_se)``."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(NORMS_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(fmt(c) for c in r) + "\n")
