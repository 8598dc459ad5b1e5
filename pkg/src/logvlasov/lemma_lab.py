"""Deterministic numerical checks of the flight-map estimates.

Each check returns a :class:`Report` holding one row per grid point plus a
summary of fitted constants and pass/fail flags.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, PrecisionError, TruncationError
from .flow import boundary_flight_time, exit_times, flow_arrays


@dataclass
class Report:
    columns: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.summary.get("pass", False))

    def write_csv(self, path):
        names = list(self.columns)
        rows = zip(*(np.asarray(self.columns[k]).tolist() for k in names))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for r in rows:
                w.writerow([format(c, ".17g") if isinstance(c, float) else c for c in r])

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(_plain(self.summary), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


# ---------------------------------------------------------------- Jacobian of v -> (x_b, t_b)

def backward_map(params, v):
    """``(x_b1, x_b2, t_b)`` for wall arrivals at the origin with velocities ``v`` (``v3 < 0``).

    The footpoint is left unwrapped so the map is smooth.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    t_b = boundary_flight_time(params, v[:, 2])
    return np.stack([-v[:, 0] * t_b, -v[:, 1] * t_b, t_b], axis=1)


def fd_jacobian(params, v, h):
    """Central-difference Jacobian ``d(x_b1, x_b2, t_b)/d(v1, v2, v3)`` per row of ``v``."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), (v.shape[0],))
    jac = np.empty((v.shape[0], 3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        plus = backward_map(params, v + h[:, None] * e)
        minus = backward_map(params, v - h[:, None] * e)
        jac[:, :, j] = (plus - minus) / (2.0 * h[:, None])
    return jac


def tb_slope(params, v3):
    """Exact ``dt_b/dv3 = ln a (v3 t_b - 2)`` for arriving wall states."""
    v3 = np.asarray(v3, dtype=float)
    return params.ln_a * (v3 * boundary_flight_time(params, v3) - 2.0)


def richardson_order(params, v, h0=2e-2):
    """Observed order of the central difference for ``dt_b/dv3`` from steps ``h0, h0/2, h0/4``."""
    d = [fd_jacobian(params, v, h0 / 2 ** k)[:, 2, 2] for k in range(3)]
    e1 = np.abs(d[0] - d[1])
    e2 = np.abs(d[1] - d[2])
    return np.log2(e1 / e2)


def verify_jacobian_sandwich(params, v_grid=None, pair_tol=1e-7):
    """Finite-difference check of ``t_b^2 <~ |det d(x_b, t_b)/dv| <~ t_b^2 (1 + |v3| t_b)``."""
    if v_grid is None:
        v3 = -np.geomspace(0.1, 5.0, 60)
        v_grid = np.stack([0.3 * np.ones_like(v3), -0.7 * np.ones_like(v3), v3], axis=1)
    v = np.atleast_2d(np.asarray(v_grid, dtype=float))
    if np.any(v[:, 2] >= 0) or np.any(np.abs(v[:, 2]) < 1e-3):
        raise DomainError("grid must have v3 < 0 with |v3| >= 1e-3")
    h = np.maximum(1e-6, 1e-8 * np.abs(v[:, 2]))
    jac = fd_jacobian(params, v, h)
    jac_half = fd_jacobian(params, v, 0.5 * h)
    pair = np.abs(jac[:, 2, 2] - jac_half[:, 2, 2]) / np.maximum(1.0, np.abs(jac[:, 2, 2]))
    if np.any(pair > pair_tol):
        raise PrecisionError(f"finite-difference pair disagrees by {pair.max():.3g}")
    t_b = boundary_flight_time(params, v[:, 2])
    det = np.abs(np.linalg.det(jac))
    lower = det / t_b ** 2
    upper = det / (t_b ** 2 * (1.0 + np.abs(v[:, 2]) * t_b))
    slope = tb_slope(params, v[:, 2])
    order = richardson_order(params, v)
    cols = {
        "v1": v[:, 0], "v2": v[:, 1], "v3": v[:, 2], "t_b": t_b,
        "dtb_dv1": jac[:, 2, 0], "dtb_dv2": jac[:, 2, 1], "dtb_dv3": jac[:, 2, 2],
        "dtb_dv3_exact": slope, "det": det, "det_over_tb2": lower,
        "det_over_tb2_1p": upper, "richardson_order": order,
    }
    summary = {
        "c_lower": float(lower.min()),
        "c_upper": float(upper.max()),
        "max_dtb_dvpar": float(np.max(np.abs(jac[:, 2, :2]))),
        "max_slope_error": float(np.max(np.abs(jac[:, 2, 2] - slope))),
        "min_richardson_order": float(order.min()),
    }
    summary["pass"] = bool(summary["c_lower"] > 0 and np.isfinite(summary["c_upper"])
                           and summary["max_dtb_dvpar"] <= 1e-9 and summary["max_slope_error"] <= 1e-7
                           and summary["min_richardson_order"] >= 1.9)
    return Report(cols, summary)


# ---------------------------------------------------------------- winding sum

def flight_speed(params, t):
    """Vertical wall speed ``w`` whose flight time is ``t``."""
    if not t > 0:
        raise DomainError("flight time must be positive")
    hi = 1.0
    while boundary_flight_time(params, hi) < t:
        hi *= 2.0
    return brentq(lambda w: boundary_flight_time(params, w) - t, 0.0, hi, xtol=1e-15, rtol=1e-15)


def _axis_tail_bound(d, t, m_max):
    # relative mass of |m| > m_max in sum_m exp(-(d + m)^2 / (2 t^2)), |d| < 1
    r = m_max + 1 - abs(d)
    if r <= 0:
        return math.inf
    first = math.exp(-r * r / (2 * t * t))
    ratio = math.exp(-r / (t * t))
    head = math.exp(-min(abs(d), 1 - abs(d)) ** 2 / (2 * t * t))
    return 2.0 * first / (1.0 - ratio) / head


def winding_terms(params, d, t, m_max):
    """Array of ``mu(v_b^{m,n})`` for ``|m|, |n| <= m_max``; index ``[m + m_max, n + m_max]``."""
    w = flight_speed(params, t)
    k = np.arange(-m_max, m_max + 1)
    g1 = np.exp(-((d[0] + k) / t) ** 2 / 2)
    g2 = np.exp(-((d[1] + k) / t) ** 2 / 2)
    return math.exp(-0.5 * w * w) / (2.0 * math.pi) * np.outer(g1, g2)


def maxwellian_winding_sum(params, x, x_prev, t_b_val, m_max=None, tol=1e-12, return_terms=False):
    """``sum_{m,n} mu(v_b^{m,n})`` over horizontal windings joining ``x_prev`` to ``x`` in time ``t``.

    The winding velocity is ``v_par = (x - x_prev + (m, n)) / t`` and the wall
    speed follows from ``t_b(w) = t``.  With ``m_max=None`` the truncation is
    chosen to meet ``tol``; an explicit ``m_max`` that misses it raises
    :class:`TruncationError` carrying a sufficient value.
    """
    t = float(t_b_val)
    d = np.asarray(x, dtype=float)[:2] - np.asarray(x_prev, dtype=float)[:2]

    def tail(m):
        return _axis_tail_bound(d[0], t, m) + _axis_tail_bound(d[1], t, m)

    need = 1
    while tail(need) > tol:
        need += 1
    if m_max is None:
        m_max = need
    elif tail(m_max) > tol:
        raise TruncationError(f"m_max={m_max} leaves relative tail {tail(m_max):.3g} > {tol}", need)
    terms = winding_terms(params, d, t, m_max)
    s = float(np.sum(terms))
    return (s, terms, m_max) if return_terms else s


def near_diagonal(terms, m_max):
    """Sum of the nine terms with ``|m|, |n| < 2``."""
    c = m_max
    return float(np.sum(terms[c - 1:c + 2, c - 1:c + 2]))


def verify_winding_sum(params, ts_large=(1, 2, 5, 10, 20), ts_small=(0.05, 0.1, 0.2), n_pairs=100, seed=0):
    """Large-``t`` scaling ``S(t) t^{A-4}`` and small-``t`` tail envelope ``exp(-1/(2 t^2))``."""
    gen = np.random.default_rng(seed)
    pairs = gen.random((n_pairs, 2, 2))
    rows = {"t": [], "pair": [], "S": [], "scaled": [], "tail": [], "envelope": []}
    for t in list(ts_large) + list(ts_small):
        for j, (x, xp) in enumerate(pairs):
            s, terms, m = maxwellian_winding_sum(params, x, xp, t, return_terms=True)
            rows["t"].append(float(t))
            rows["pair"].append(j)
            rows["S"].append(s)
            rows["scaled"].append(s * t ** (params.big_a - 4))
            rows["tail"].append(s - near_diagonal(terms, m))
            rows["envelope"].append(math.exp(-1.0 / (2.0 * t * t)))
    cols = {k: np.asarray(v) for k, v in rows.items()}
    large = np.isin(cols["t"], np.asarray(ts_large, dtype=float))
    small = ~large
    const = float(cols["scaled"][large].max())
    tail_ok = bool(np.all(cols["tail"][small] <= cols["envelope"][small]))
    summary = {
        "scaled_constant": const,
        "scaled_max_by_t": {str(t): float(cols["scaled"][cols["t"] == t].max()) for t in ts_large},
        "max_tail_over_envelope": float(np.max(cols["tail"][small] / cols["envelope"][small])),
        "tail_ok": tail_ok,
    }
    summary["pass"] = bool(np.isfinite(const) and tail_ok)
    return Report(cols, summary)


# ---------------------------------------------------------------- change of variables

@dataclass
class CovIdentity:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def z(self):
        return abs(self.lhs - self.rhs) / math.hypot(self.lhs_se, self.rhs_se)


def stationary_over_mass(params):
    c = params.c_m / params.mass

    def g(x, v):
        e = 0.5 * np.sum(v * v, axis=1) + np.log1p(x[:, 2]) / params.ln_a
        return c / (2.0 * math.pi) * np.exp(-e)

    return g


def box_indicator(h, r):
    def g(x, v):
        return ((x[:, 2] <= h) & (np.sum(v * v, axis=1) <= r * r)).astype(float)

    return g


def cov_lhs(params, g, n, gen):
    """Estimate ``int_{arrivals} int_0^{t_b} g(flow back by s) |v3| ds dv dS``.

    Arrival velocities are drawn from the wall flux law ``mu |v3|`` and ``s``
    uniformly on ``[0, t_b]``, so the estimator is ``t_b g / mu``.
    """
    v = np.empty((n, 3))
    v[:, :2] = gen.standard_normal((n, 2))
    v[:, 2] = -np.sqrt(2.0 * gen.exponential(size=n))
    x = np.zeros((n, 3))
    x[:, :2] = gen.random((n, 2))
    t_b = boundary_flight_time(params, v[:, 2])
    s = gen.random(n) * t_b
    xs, vs = flow_arrays(params, x, v, -s)
    mu = np.exp(-0.5 * np.sum(v * v, axis=1)) / (2.0 * math.pi)
    vals = t_b * g(xs, vs) / mu
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def cov_rhs(g, n, gen, height, speed):
    """Uniform Monte Carlo of ``int g dx dv`` over ``[0,1)^2 x [0, height] x [-speed, speed]^3``."""
    x = np.empty((n, 3))
    x[:, :2] = gen.random((n, 2))
    x[:, 2] = gen.random(n) * height
    v = (2.0 * gen.random((n, 3)) - 1.0) * speed
    vol = height * (2.0 * speed) ** 3
    vals = vol * g(x, v)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def verify_cov_identity(params, g=None, n_samples=10 ** 6, seed=0, rhs_box=None):
    """Both sides of the flux/volume change-of-variables identity by Monte Carlo.

    Defaults to ``g`` = stationary state over mass restricted to ``x3 <= 3``,
    ``|v| <= 4``.  ``rhs_box = (height, speed)`` must contain the support of ``g``.
    """
    if g is None:
        base = stationary_over_mass(params)
        box = box_indicator(3.0, 4.0)

        def g(x, v):
            return base(x, v) * box(x, v)

        rhs_box = (3.0, 4.0)
    if rhs_box is None:
        raise DomainError("rhs_box is required for a custom test function")
    gen = np.random.default_rng([seed, 0xC0F])
    lhs, lse = cov_lhs(params, g, n_samples, gen)
    rhs, rse = cov_rhs(g, n_samples, gen, *rhs_box)
    return CovIdentity(lhs, lse, rhs, rse)


# ---------------------------------------------------------------- flight-time sandwich

def verify_tb_bounds(params, v3_grid=None):
    """Sandwich of ``t_b`` between ``a^{w^2/2} sqrt(1 - a^{-w^2/2})`` and ``a^{w^2/2}``."""
    if v3_grid is None:
        v3_grid = np.geomspace(1e-3, 8.0, 4001)
    w = np.abs(np.asarray(v3_grid, dtype=float))
    if np.any(w < 1e-3 * (1 - 1e-12)) or np.any(w > 8.0 * (1 + 1e-12)):
        raise DomainError("grid must lie in |v3| in [1e-3, 8]")
    t_b = boundary_flight_time(params, w)
    amp = np.exp(0.5 * params.ln_a * w * w)
    upper = t_b / amp
    lower = t_b / (amp * np.sqrt(-np.expm1(-0.5 * params.ln_a * w * w)))
    small = w <= 0.1
    per_speed = t_b / w
    cols = {"v3": w, "t_b": t_b, "upper_ratio": upper, "lower_ratio": lower, "tb_over_v3": per_speed}
    summary = {
        "upper_constant": float(upper.max()),
        "upper_sup": params.tb_ratio_sup,
        "lower_constant": float(lower.min()),
        "small_speed_constant": float(per_speed[small].min()) if small.any() else None,
        "small_speed_limit": 2.0 * params.ln_a,
    }
    summary["pass"] = bool(summary["upper_constant"] <= params.tb_ratio_sup + 1e-9
                           and summary["lower_constant"] > 0
                           and (summary["small_speed_constant"] is None or summary["small_speed_constant"] > 0))
    return Report(cols, summary)
