"""The six runnable experiments.

Each returns an :class:`Outcome`: named tables (column names plus rows) and a
dict of boolean verdicts.  Nothing here touches the file system.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import boundary, cycles, diagnostics, engine, lemma_lab
from .flow import boundary_flight_time, exit_times, flow_arrays


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)

    def column(self, name):
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])


@dataclass
class Outcome:
    tables: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.verdicts.values())


def monotone_within(values, ses, k=3.0):
    """True if every step up is within ``k`` pooled standard errors."""
    v = np.asarray(values)
    s = np.asarray(ses)
    return bool(np.all(v[1:] <= v[:-1] + k * np.hypot(s[1:], s[:-1])))


# ---------------------------------------------------------------- flow

def rk_flow(params, x, v, dt, rtol=1e-12, atol=1e-13):
    """Integrate the Hamilton equations for all states at once with DOP853.

    Time is rescaled to ``[0, 1]`` per state so a single call covers every ``dt``.
    """
    n = x.shape[0]
    y0 = np.concatenate([x[:, 2], v[:, 2]])
    dt = np.asarray(dt, dtype=float)
    ln_a = params.ln_a

    def rhs(_, y):
        x3 = y[:n]
        v3 = y[n:]
        return np.concatenate([dt * v3, -dt / (ln_a * (1.0 + x3))])

    sol = integrate.solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=rtol, atol=atol)
    xe = x.copy()
    ve = v.copy()
    xe[:, :2] = np.mod(x[:, :2] + v[:, :2] * dt[:, None], 1.0)
    xe[:, 2] = sol.y[:n, -1]
    ve[:, 2] = sol.y[n:, -1]
    return xe, ve


def event_exit_time(params, v3, rtol=1e-12, atol=1e-14):
    """Flight time of a wall launch found by integrating until ``X3`` returns to 0."""
    ln_a = params.ln_a

    def rhs(_, y):
        return [y[1], -1.0 / (ln_a * (1.0 + y[0]))]

    def hit(_, y):
        return y[0]

    hit.terminal = True
    hit.direction = -1
    t_max = 4.0 * boundary_flight_time(params, v3) + 1.0
    sol = integrate.solve_ivp(rhs, (0.0, t_max), [0.0, v3], method="DOP853", events=hit,
                              rtol=rtol, atol=atol)
    return float(sol.t_events[0][0])


def torus_gap(a, b):
    d = np.abs(a - b)
    return np.minimum(d, 1.0 - d)


def random_interior_flights(params, n, seed):
    gen = np.random.default_rng([seed, 0xF10])
    x = np.empty((n, 3))
    x[:, :2] = gen.random((n, 2))
    x[:, 2] = boundary.height_quantile(params.ln_a, gen.random(n))
    v = gen.standard_normal((n, 3))
    _, t_f = exit_times(params, x[:, 2], v[:, 2])
    dt = 0.95 * gen.random(n) * t_f
    return x, v, dt


def run_flow(cfg, n_states=10_000):
    params = cfg.params
    x, v, dt = random_interior_flights(params, n_states, cfg.seed)
    xc, vc = flow_arrays(params, x, v, dt)
    xo, vo = rk_flow(params, x, v, dt)
    err = np.column_stack([torus_gap(xc[:, 0], xo[:, 0]), torus_gap(xc[:, 1], xo[:, 1]),
                           np.abs(xc[:, 2] - xo[:, 2]), np.abs(vc - vo)])
    e0 = 0.5 * np.sum(v * v, axis=1) + np.log1p(x[:, 2]) / params.ln_a
    e1 = 0.5 * np.sum(vc * vc, axis=1) + np.log1p(xc[:, 2]) / params.ln_a
    drift = np.abs(e1 - e0)
    tb_closed = boundary_flight_time(params, 1.0)
    tb_event = event_exit_time(params, 1.0)
    bounds = lemma_lab.verify_tb_bounds(params)
    t = Table(("id", "dt", "max_coord_error", "energy_drift"))
    t.rows = [(i, dt[i], err[i].max(), drift[i]) for i in range(n_states)]
    s = Table(("quantity", "value"))
    s.rows = [("max_coord_error", float(err.max())), ("max_energy_drift", float(drift.max())),
              ("tb_closed_form", tb_closed), ("tb_event_oracle", tb_event),
              ("tb_upper_constant", bounds.summary["upper_constant"]),
              ("tb_lower_constant", bounds.summary["lower_constant"])]
    verdicts = {
        "flow_matches_rk": bool(err.max() < 1e-8),
        "energy_conserved": bool(drift.max() < 1e-10),
        "exit_time_matches_event": abs(tb_closed - tb_event) <= 1e-6,
        "tb_sandwich": bounds.passed,
    }
    return Outcome({"flow_check": t, "flow_summary": s}, verdicts)


# ---------------------------------------------------------------- lemmas

def flux_normalization():
    """``int_{v3 > 0} mu(v) v3 dv`` in cylindrical velocity coordinates by nested quadrature."""
    def inner(v3):
        return integrate.quad(lambda r: 2.0 * math.pi * r * boundary.wall_maxwellian([r, 0.0, v3]),
                              0.0, np.inf, epsabs=1e-15, epsrel=1e-14)[0]

    return integrate.quad(lambda v3: v3 * inner(v3), 0.0, np.inf, epsabs=1e-15, epsrel=1e-14)[0]


def run_lemmas(cfg):
    params = cfg.params
    jac = lemma_lab.verify_jacobian_sandwich(params)
    wind = lemma_lab.verify_winding_sum(params, seed=cfg.seed)
    tb = lemma_lab.verify_tb_bounds(params)
    n_cov = min(cfg.n_particles, 10 ** 6)
    cov = lemma_lab.verify_cov_identity(params, n_samples=n_cov, seed=cfg.seed)
    box = lemma_lab.verify_cov_identity(params, g=lemma_lab.box_indicator(0.5, 2.0), n_samples=n_cov,
                                        seed=cfg.seed + 1, rhs_box=(1.0, 2.5))
    flux = flux_normalization()
    tables = {}
    for name, rep in (("jacobian", jac), ("winding", wind), ("tb_bounds", tb)):
        cols = tuple(rep.columns)
        tables[name] = Table(cols, list(zip(*(np.asarray(rep.columns[c]).tolist() for c in cols))))
    s = Table(("quantity", "value"))
    s.rows = [("jacobian_c_lower", jac.summary["c_lower"]), ("jacobian_c_upper", jac.summary["c_upper"]),
              ("winding_constant", wind.summary["scaled_constant"]),
              ("winding_tail_over_envelope", wind.summary["max_tail_over_envelope"]),
              ("tb_upper_constant", tb.summary["upper_constant"]),
              ("tb_lower_constant", tb.summary["lower_constant"]),
              ("tb_small_speed_constant", tb.summary["small_speed_constant"]),
              ("cov_stationary_lhs", cov.lhs), ("cov_stationary_lhs_se", cov.lhs_se),
              ("cov_stationary_rhs", cov.rhs), ("cov_stationary_rhs_se", cov.rhs_se),
              ("cov_box_lhs", box.lhs), ("cov_box_lhs_se", box.lhs_se),
              ("cov_box_rhs", box.rhs), ("cov_box_rhs_se", box.rhs_se),
              ("flux_normalization", flux)]
    tables["lemma_summary"] = s
    verdicts = {
        "jacobian_sandwich": jac.passed,
        "winding_sum": wind.passed,
        "tb_sandwich": tb.passed,
        "cov_identity": cov.z <= 3.0 and box.z <= 3.0,
        "flux_normalization": abs(flux - 1.0) <= 1e-12,
    }
    return Outcome(tables, verdicts)


# ---------------------------------------------------------------- decay and Doeblin

def _doeblin_rows(params, t, prev, now, spec, doeblin):
    rows = []
    for name in ("plus", "minus"):
        tf_prev = prev.tf_plus if name == "plus" else prev.tf_minus
        rep = diagnostics.doeblin_check(params, prev.counts(name), now.counts(name), tf_prev, spec, doeblin)
        rows.append((t, name, rep.n_checked, rep.n_violations, rep.violation_fraction, rep.defect))
    return rows


def run_decay(cfg):
    params = cfg.params
    spec = cfg.histogram_spec()
    doeblin = diagnostics.DoeblinSpec.build(params, cfg.t0)
    ens = engine.init_fluctuation(params, cfg.n_particles, cfg.seed, cfg.fluctuation)
    prev = engine.histogram(params, ens, spec)
    l0 = engine.estimate_l1_hist(prev, cfg.n_boot, cfg.seed, ens)
    m0 = engine.estimate_exponential_moment(params, ens, cfg.theta, spec=spec, n_boot=cfg.n_boot, boot_seed=cfg.seed)
    norms = Table(engine.NORMS_COLUMNS, [(0.0, l0.value, l0.se, m0.value, m0.se)])
    triple = Table(("t", "triple2", "triple2_se", "triple4", "triple4_se", "l1_refined", "noise_floor"))
    doe = Table(("t", "population", "n_checked", "n_violations", "violation_fraction", "defect"))
    for k in range(1, cfg.n_checkpoints + 1):
        t = k * cfg.t0
        engine.evolve(params, ens, t)
        h = engine.histogram(params, ens, spec)
        bs = cfg.seed + k
        l1 = engine.estimate_l1_hist(h, cfg.n_boot, bs, ens)
        mom = engine.estimate_exponential_moment(params, ens, cfg.theta, spec=spec, n_boot=cfg.n_boot, boot_seed=bs)
        t2 = diagnostics.triple_norm(h, doeblin, 2, cfg.delta, params.big_a, cfg.n_boot, bs)
        t4 = diagnostics.triple_norm(h, doeblin, 4, cfg.delta, params.big_a, cfg.n_boot, bs)
        norms.rows.append((t, l1.value, l1.se, mom.value, mom.se))
        triple.rows.append((t, t2[0], t2[1], t4[0], t4[1], l1.refined, l1.noise_floor))
        doe.rows.extend(_doeblin_rows(params, t, prev, h, spec, doeblin))
        prev = h
    ts = norms.column("t")[1:]
    l1v = norms.column("l1")[1:]
    l1s = norms.column("l1_se")[1:]
    fit_tab = Table(("exponent", "exponent_corrected", "n_points", "n_dropped"))
    verdicts = {"l1_monotone": monotone_within(l1v, l1s)}
    try:
        fit = diagnostics.fit_decay(ts, l1v, params.big_a, cfg.delta)
        fit_tab.rows.append((fit.exponent, fit.exponent_corrected, len(ts) - len(fit.dropped), len(fit.dropped)))
        verdicts["exponent_in_band"] = bool(-3.0 <= fit.exponent_corrected <= -1.0)
    except Exception:
        fit_tab.rows.append((float("nan"), float("nan"), 0, len(ts)))
        verdicts["exponent_in_band"] = False
    first6 = triple.rows[:6]
    verdicts["triple2_monotone"] = monotone_within([r[1] for r in first6], [r[2] for r in first6])
    verdicts["triple4_monotone"] = monotone_within([r[3] for r in first6], [r[4] for r in first6])
    fracs = doe.column("violation_fraction")
    verdicts["doeblin_violations"] = bool(np.all(fracs <= 0.01))
    verdicts["minorant_below_one"] = doeblin.m_norm < 1.0
    m = norms.column("moment_theta")
    if cfg.n_checkpoints >= 10:
        verdicts["moment_ratio"] = bool(m[1] / m[10] >= 2.5)
    return Outcome({"norms": norms, "triple": triple, "doeblin": doe, "fit": fit_tab}, verdicts,
                   {"ensemble": ens, "doeblin_spec": doeblin})


def run_doeblin(cfg, t0_values=(24.0, 32.0, 48.0)):
    params = cfg.params
    x, v = boundary.sample_stationary_batch(params, cfg.n_particles, cfg.seed)
    norms = Table(("t0", "m_norm_quadrature", "m_norm_mc", "m_norm_mc_se", "envelope"))
    for t0 in t0_values:
        mc, se = diagnostics.minorant_l1_mc(params, t0, x[:, 2], v)
        norms.rows.append((t0, diagnostics.minorant_l1_norm(params, t0), mc, se, t0 ** (-3.0 - params.big_a) / 4.0))
    spec = cfg.histogram_spec()
    doeblin = diagnostics.DoeblinSpec.build(params, cfg.t0)
    ens = engine.init_fluctuation(params, cfg.n_particles, cfg.seed, cfg.fluctuation)
    prev = engine.histogram(params, ens, spec)
    engine.evolve(params, ens, cfg.t0)
    now = engine.histogram(params, ens, spec)
    doe = Table(("t", "population", "n_checked", "n_violations", "violation_fraction", "defect"),
                _doeblin_rows(params, cfg.t0, prev, now, spec, doeblin))
    q = norms.column("m_norm_quadrature")
    verdicts = {
        "minorant_below_one": bool(np.all(q < 1.0) and np.all(norms.column("m_norm_mc") < 1.0)),
        "minorant_envelope": bool(np.all(q <= norms.column("envelope"))),
        "doeblin_violations": bool(np.all(doe.column("violation_fraction") <= 0.01)),
    }
    return Outcome({"minorant": norms, "doeblin": doe}, verdicts)


def run_moments(cfg):
    params = cfg.params
    spec = cfg.histogram_spec()
    ens = engine.init_fluctuation(params, cfg.n_particles, cfg.seed, cfg.fluctuation)
    tab = Table(("t", "moment_theta", "moment_se", "slab"))
    for t in (cfg.t0, 10.0 * cfg.t0):
        engine.evolve(params, ens, t)
        m = engine.estimate_exponential_moment(params, ens, cfg.theta, spec=spec, n_boot=cfg.n_boot,
                                               boot_seed=cfg.seed)
        tab.rows.append((t, m.value, m.se, m.slab))
    m = tab.column("moment_theta")
    return Outcome({"moments": tab}, {"moment_ratio": bool(m[0] / m[1] >= 2.5)}, {"ratio": m[0] / m[1]})


def run_survival(cfg, ts=(5.0, 10.0, 20.0)):
    params = cfg.params
    sc = cycles.SurvivalConfig.measured(params, cfg.survival_delta)
    tab = Table(("t", "k", "survival", "se", "envelope", "threshold_k", "threshold_resolved",
                 "c_omega", "amp"))
    ok = True
    mono = True
    for t in ts:
        k = sc.k_of_t(t)
        counts = cycles.flight_counts(params, t, k, cfg.n_chains, cfg.seed)
        p, se = cycles.survival_curve(counts, [k])
        thr, resolved = cycles.empirical_threshold(counts, t)
        curve, _ = cycles.survival_curve(counts, np.arange(1, k + 1))
        mono &= bool(np.all(np.diff(curve) <= 0))
        env = math.exp(-t)
        ok &= bool(p[0] <= env + 3.0 * se[0])
        tab.rows.append((t, k, p[0], se[0], env, thr, int(resolved), sc.c_omega, sc.amp))
    return Outcome({"survival": tab}, {"survival_envelope": ok, "survival_monotone": mono})


RUNNERS = {
    "flow": run_flow,
    "lemmas": run_lemmas,
    "decay": run_decay,
    "doeblin": run_doeblin,
    "moments": run_moments,
    "survival": run_survival,
}
