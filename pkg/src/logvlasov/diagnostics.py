"""Weights, composite norms, the Doeblin minorant and decay fits."""
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .engine import poisson_bootstrap, signed_l1
from .errors import DomainError
from .flow import boundary_flight_time, exit_times

E = math.e


# ---------------------------------------------------------------- time weights

@dataclass(frozen=True)
class WeightSpec:
    index: int
    delta: float = 0.5
    big_a: int = 8

    def __post_init__(self):
        if self.index not in (1, 2, 3, 4):
            raise DomainError(f"weight index must be 1..4, got {self.index}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")


def phi_weight(spec, tau):
    """Time weight ``phi_index(tau)``; all four equal 1 at ``tau = 0``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("tau must be non-negative")
    s = E + tau
    lse = np.log(s)
    if spec.index == 1:
        out = s * np.log(E + lse) / (E * math.log(E + 1.0))
    elif spec.index == 2:
        out = s * s * np.log(E + lse) / (E * E * math.log(E + 1.0))
    else:
        k = spec.big_a - (5 if spec.index == 3 else 4)
        out = (s / E) ** k * lse ** (-(1.0 + spec.delta))
    return float(out) if out.ndim == 0 else out


def phi_weight_prime(spec, tau):
    """Exact derivative of :func:`phi_weight`."""
    tau = np.asarray(tau, dtype=float)
    s = E + tau
    lse = np.log(s)
    inner = E + lse
    if spec.index in (1, 2):
        p = spec.index
        out = (p * s ** (p - 1) * np.log(inner) + s ** (p - 1) / inner) / (E ** p * math.log(E + 1.0))
    else:
        k = spec.big_a - (5 if spec.index == 3 else 4)
        d = 1.0 + spec.delta
        out = (s / E) ** k * lse ** (-d) * (k - d / lse) / s
    return float(out) if out.ndim == 0 else out


def _log_phi_at_log_tau(spec, u):
    # log phi(e^u) without forming e^u
    ls = np.logaddexp(1.0, u)
    if spec.index in (1, 2):
        p = spec.index
        return p * (ls - 1.0) + math.log(math.log(E + ls)) - math.log(math.log(E + 1.0))
    k = spec.big_a - (5 if spec.index == 3 else 4)
    return k * (ls - 1.0) - (1.0 + spec.delta) * math.log(ls)


def weight_tail_ratio(spec, t_max=1e4):
    """Share of ``int_1^inf tau^{3-A} phi(tau) dtau`` lying beyond ``t_max``.

    Returns ``(ratio, head, tail)``.  Integrated in ``u = ln tau``.
    """
    def g(u):
        return math.exp((4 - spec.big_a) * u + _log_phi_at_log_tau(spec, u))

    head = integrate.quad(g, 0.0, math.log(t_max), limit=500, epsabs=0, epsrel=1e-12)[0]
    tail = integrate.quad(g, math.log(t_max), np.inf, limit=500, epsabs=0, epsrel=1e-10)[0]
    return tail / (head + tail), head, tail


# ---------------------------------------------------------------- Doeblin minorant

@dataclass(frozen=True)
class DoeblinSpec:
    t0: float
    m_norm: float

    def __post_init__(self):
        if not self.t0 > 20.0:
            raise DomainError(f"T0 must exceed 20, got {self.t0}")

    @classmethod
    def build(cls, params, t0):
        return cls(t0, minorant_l1_norm(params, t0))


def doeblin_minorant(params, x3, v, t0):
    """``1{t_b <= T0/4} T0^{-4-A} mu(v_b)`` at states ``(x3, v)``.

    ``|v_b|^2 = |v|^2 + 2 Phi(x3)`` by energy conservation, which reduces to
    ``|v|`` on the wall.
    """
    if not t0 > 20.0:
        raise DomainError(f"T0 must exceed 20, got {t0}")
    x3 = np.asarray(x3, dtype=float)
    v = np.asarray(v, dtype=float)
    t_b, _ = exit_times(params, np.atleast_1d(x3), np.atleast_1d(v[..., 2]))
    t_b = t_b.reshape(x3.shape)
    vb2 = np.sum(v * v, axis=-1) + 2.0 * np.log1p(x3) / params.ln_a
    out = np.where(t_b <= 0.25 * t0, t0 ** (-4.0 - params.big_a) * np.exp(-0.5 * vb2) / (2.0 * math.pi), 0.0)
    return float(out) if out.ndim == 0 else out


def minorant_l1_norm(params, t0):
    """``||m||_{L1} = T0^{-4-A} int_0^inf min(t_flight(w), T0/4) w exp(-w^2/2) dw``.

    Each wall launch with vertical speed ``w`` sweeps the states with
    ``t_b = s`` for ``s`` in ``[0, t_flight(w)]``; the flux measure makes
    the sweep volume ``w ds``.
    """
    cut = 0.25 * t0
    w_star = _flight_speed(params, cut)

    def g(w):
        return min(boundary_flight_time(params, w), cut) * w * math.exp(-0.5 * w * w)

    val = integrate.quad(g, 0.0, w_star, epsabs=0, epsrel=1e-13, limit=200)[0]
    val += cut * math.exp(-0.5 * w_star * w_star)
    return t0 ** (-4.0 - params.big_a) * val


def _flight_speed(params, t):
    """Vertical launch speed whose flight lasts ``t``."""
    from scipy.optimize import brentq

    hi = 1.0
    while boundary_flight_time(params, hi) < t:
        hi *= 2.0
    return brentq(lambda w: boundary_flight_time(params, w) - t, 0.0, hi, xtol=1e-15, rtol=1e-15)


def minorant_l1_mc(params, t0, x3, v):
    """Monte Carlo ``||m||_{L1}`` from stationary samples: ``T0^{-4-A} (mass/c_m) P(t_b <= T0/4)``."""
    t_b, _ = exit_times(params, x3, v[:, 2])
    hit = (t_b <= 0.25 * t0).astype(float)
    scale = t0 ** (-4.0 - params.big_a) * params.mass / params.c_m
    n = hit.size
    return scale * hit.mean(), scale * hit.std(ddof=1) / math.sqrt(n)


@dataclass
class DoeblinReport:
    n_checked: int
    n_violations: int
    defect: float
    mass: float

    @property
    def violation_fraction(self):
        return self.n_violations / self.n_checked if self.n_checked else 0.0


SIGMA3 = stats.norm.sf(3.0)


def cell_minorant(params, spec, t0):
    """Midpoint-rule ``int_cell m`` for each regular cell; overflow cells get NaN."""
    xc, vc, pc = spec.cell_centers()
    vol = spec.cell_volumes()
    v = np.stack([pc, np.zeros_like(pc), vc], axis=1)
    m = doeblin_minorant(params, xc, v, t0)
    return np.where(np.isfinite(vol), m * np.where(np.isfinite(vol), vol, 0.0), np.nan)


def doeblin_check(params, counts_prev, counts_now, tf_prev, spec, doeblin, min_expected=10.0):
    """Cell-wise ``f(N T0) >= m (mass - defect)`` for one non-negative population.

    ``counts_prev``/``counts_now`` are cell counts at ``(N-1) T0`` and ``N T0``;
    ``tf_prev`` holds the forward exit times at ``(N-1) T0``.  A cell violates
    when its count is below the bound's expected count at the one-sided
    3-sigma Poisson level.
    """
    if counts_prev.shape != counts_now.shape or counts_now.shape[0] != spec.n_cells:
        raise DomainError("histograms use different binnings")
    n = counts_now.sum()
    mass = counts_prev.sum() / n
    defect = float(np.count_nonzero(tf_prev >= 0.25 * doeblin.t0)) / n
    bound = cell_minorant(params, spec, doeblin.t0) * (mass - defect)
    expected = 0.5 * (counts_prev + counts_now)
    keep = np.isfinite(bound) & (expected >= min_expected)
    lam = np.where(keep, np.maximum(bound, 0.0), 0.0) * n
    bad = keep & (stats.poisson.cdf(counts_now, lam) < SIGMA3)
    return DoeblinReport(int(keep.sum()), int(bad.sum()), defect, float(mass))


# ---------------------------------------------------------------- composite norm

def triple_norm(hist, doeblin, i, delta=0.5, big_a=8, n_boot=0, boot_seed=0):
    """``||f|| + c1 ||phi_{i-1}(t_f) f|| + c2 ||phi_i(t_f) f||`` for ``i`` in ``{2, 4}``.

    ``c1 = 4 m_T0 / phi_{i-1}(3 T0/4)`` and ``c2 = e c1 / T0``.  Returns
    ``(value, se)``; the error is bootstrapped when ``n_boot > 1``.
    """
    if i not in (2, 4):
        raise DomainError(f"composite norm index must be 2 or 4, got {i}")
    if not hist.has_tf():
        raise DomainError("histogram lacks the forward exit time channel")
    lo = WeightSpec(i - 1, delta, big_a)
    hi = WeightSpec(i, delta, big_a)
    c1 = 4.0 * doeblin.m_norm / phi_weight(lo, 0.75 * doeblin.t0)
    c2 = E * c1 / doeblin.t0
    n = hist.n
    nc = hist.spec.n_cells
    lp, lm = phi_weight(lo, hist.tf_plus), phi_weight(lo, hist.tf_minus)
    hp, hm = phi_weight(hi, hist.tf_plus), phi_weight(hi, hist.tf_minus)

    def stat_plain(bp, bm):
        return (signed_l1(hist.idx_plus, hist.idx_minus, nc, n, bp, bm)
                + c1 * signed_l1(hist.idx_plus, hist.idx_minus, nc, n, lp * bp, lm * bm)
                + c2 * signed_l1(hist.idx_plus, hist.idx_minus, nc, n, hp * bp, hm * bm))

    ones = np.ones(n)
    value = stat_plain(ones, ones)
    se = poisson_bootstrap(stat_plain, n, n, n_boot, boot_seed) if n_boot > 1 else float("nan")
    return value, se


# ---------------------------------------------------------------- decay fitting

@dataclass
class DecayFit:
    exponent: float
    exponent_corrected: float
    residuals: np.ndarray
    residuals_corrected: np.ndarray
    dropped: list


def _slope(x, y):
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), y - A @ coef


def fit_decay(t, norms, big_a=8, delta=0.5, min_points=6):
    """Least-squares slope of ``ln ||f||`` on ``ln t``, raw and with ``(ln t)^{A-6-delta/2}`` divided out.

    Non-positive norms are dropped and listed in ``dropped``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(norms, dtype=float)
    ok = (y > 0) & np.isfinite(y)
    dropped = [float(s) for s in t[~ok]]
    t, y = t[ok], y[ok]
    if t.size < min_points:
        raise DomainError(f"need at least {min_points} positive points, have {t.size}")
    if t.min() <= 1.0 or t.max() / t.min() < 10.0 * (1 - 1e-12):
        raise DomainError("checkpoints must lie above t = 1 and span a decade")
    lt = np.log(t)
    ly = np.log(y)
    k, res = _slope(lt, ly)
    kc, resc = _slope(lt, ly - (big_a - 6 - 0.5 * delta) * np.log(lt))
    return DecayFit(k, kc, res, resc, dropped)


# ---------------------------------------------------------------- moment weights

@dataclass(frozen=True)
class MomentWeights:
    theta: float = 0.2
    theta_prime: float = 0.5
    big_a: int = 8

    def __post_init__(self):
        if not 0.0 <= 2.0 * self.theta < self.theta_prime:
            raise DomainError(f"need 0 <= 2 theta < theta' = {self.theta_prime}")

    def varrho(self, t):
        b = np.sqrt(1.0 + np.asarray(t, dtype=float) ** 2)
        return np.log(b) ** (6 - self.big_a) * b ** (self.big_a - 5)

    def varrho_prime(self, t):
        t = np.asarray(t, dtype=float)
        b = np.sqrt(1.0 + t * t)
        lb = np.log(b)
        db = t / b
        return ((6 - self.big_a) * lb ** (5 - self.big_a) * b ** (self.big_a - 6)
                + (self.big_a - 5) * lb ** (6 - self.big_a) * b ** (self.big_a - 6)) * db

    def envelope(self, t):
        b = np.sqrt(1.0 + np.asarray(t, dtype=float) ** 2)
        return np.log(b) ** (6 - self.big_a) * b ** (self.big_a - 6)

    def weight(self, x3, v, ln_a):
        v = np.asarray(v, dtype=float)
        return np.exp(self.theta * (np.sum(v * v, axis=-1) + 2.0 * np.log1p(x3) / ln_a))
