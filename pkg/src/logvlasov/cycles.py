"""Free flight composed with diffuse reflection, and cycle-survival statistics."""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from . import rng
from .errors import DomainError
from .flow import (PhaseState, exit_times_scalar, flow, energy_speed,
                   wrap_scalar)


def advance(params, state, horizon):
    """Flow ``state`` until ``horizon`` or the next wall contact, whichever is first.

    Returns ``(new_state, hit)``.  On a hit the state sits at ``x3 = 0`` with
    its arrival velocity ``v3 = -w``.
    """
    horizon = float(horizon)
    if not horizon >= 0.0:
        raise DomainError(f"horizon must be non-negative, got {horizon}")
    if horizon == 0.0:
        return state, False
    _, t_f = exit_times_scalar(params.ln_a, state.x3, state.v[2])
    if t_f > horizon:
        return flow(params, state, horizon), False
    v1, v2, v3 = state.v
    w = energy_speed(params.ln_a, state.x3, v3)
    x1, x2 = state.x_par
    return PhaseState((x1 + v1 * t_f, x2 + v2 * t_f), 0.0, (v1, v2, -w)), True


@dataclass
class CycleRecord:
    """A stochastic cycle read on the backward clock.

    ``times[0]`` is the window length ``t``; ``times[k]`` is ``t`` minus the
    instant of the k-th wall return.  Leg ``k`` starts at ``footpoints[k]``
    with ``outgoing_velocities[k]`` and lasts ``flight_times[k]``.
    """

    times: list = field(default_factory=list)
    footpoints: list = field(default_factory=list)
    outgoing_velocities: list = field(default_factory=list)
    arrival_speeds: list = field(default_factory=list)
    flight_times: list = field(default_factory=list)

    def __len__(self):
        return len(self.flight_times)


def run_cycle_chain(params, x_par, v, t_stop, stream):
    """Alternate wall launches and flights until the next return would pass ``t_stop``.

    ``v`` is the first outgoing velocity (``v3 > 0``); later ones come from the
    wall flux law drawn on ``stream``.
    """
    if not v[2] > 0.0:
        raise DomainError("chain must start with an outgoing velocity")
    rec = CycleRecord(times=[float(t_stop)])
    x = (wrap_scalar(float(x_par[0])), wrap_scalar(float(x_par[1])))
    v = tuple(float(c) for c in v)
    elapsed = 0.0
    comp = 0.0
    while True:
        _, tf = exit_times_scalar(params.ln_a, 0.0, v[2])
        # Kahan step
        y = tf - comp
        s = elapsed + y
        if s > t_stop:
            break
        comp = (s - elapsed) - y
        elapsed = s
        rec.footpoints.append(x)
        rec.outgoing_velocities.append(v)
        rec.flight_times.append(tf)
        rec.arrival_speeds.append(math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2))
        rec.times.append(t_stop - elapsed)
        x = (wrap_scalar(x[0] + v[0] * tf), wrap_scalar(x[1] + v[1] * tf))
        v = stream.next_outgoing()
    return rec


@njit(cache=True)
def _tb_wall(ln_a, w):
    return exit_times_scalar(ln_a, 0.0, w)[1]


@njit(cache=True, parallel=True)
def _flight_count_kernel(ln_a, seed, t, k_max, out):
    # out[i] = number of consecutive flights whose running sum stays below t
    for i in prange(out.shape[0]):
        key = rng.stream_key(seed, rng.TAG_CHAIN, i)
        total = 0.0
        comp = 0.0
        count = 0
        for j in range(1, k_max + 1):
            e = -math.log1p(-rng.uniform(key, j, 0))
            tb = _tb_wall(ln_a, math.sqrt(2.0 * e))
            y = tb - comp
            s = total + y
            comp = (s - total) - y
            total = s
            if total >= t:
                break
            count += 1
        out[i] = count


@njit(cache=True, parallel=True)
def _flight_sample_kernel(ln_a, seed, out):
    for i in prange(out.shape[0]):
        key = rng.stream_key(seed, rng.TAG_FLUX, i)
        e = -math.log1p(-rng.uniform(key, 1, 0))
        out[i] = _tb_wall(ln_a, math.sqrt(2.0 * e))


def sample_flight_times(params, n, seed):
    """Flight durations of ``n`` independent wall launches."""
    out = np.empty(n)
    _flight_sample_kernel(params.ln_a, seed, out)
    return out


def flight_counts(params, t, k_max, n_samples, seed):
    """Per chain, how many consecutive flights fit strictly inside ``[0, t)`` (capped at ``k_max``)."""
    if n_samples <= 0:
        raise DomainError("n_samples must be positive")
    out = np.empty(int(n_samples), dtype=np.int64)
    _flight_count_kernel(params.ln_a, seed, float(t), int(k_max), out)
    return out


def empirical_c_omega(params, v3_grid=None):
    """Grid infimum of ``t_b / |v3|`` over wall states."""
    if v3_grid is None:
        v3_grid = np.geomspace(1e-3, 8.0, 2001)
    tb = np.array([_tb_wall(params.ln_a, float(w)) for w in np.abs(v3_grid)])
    return float(np.min(tb / np.abs(v3_grid)))


def choose_amp(delta, c_omega, max_amp=64):
    """Least integer ``amp >= 2`` with ``(delta^{2 amp} e amp)^{1/(c_omega delta)} <= e^{-2}``."""
    for amp in range(2, max_amp + 1):
        log_val = (2 * amp * math.log(delta) + 1.0 + math.log(amp)) / (c_omega * delta)
        if log_val <= -2.0:
            return amp
    raise DomainError(f"no admissible amplification factor up to {max_amp}")


@dataclass(frozen=True)
class SurvivalConfig:
    delta: float = 0.05
    c_omega: float = 0.25
    amp: int = 0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.c_omega > 0.0:
            raise DomainError("c_omega must be positive")
        if self.amp == 0:
            object.__setattr__(self, "amp", choose_amp(self.delta, self.c_omega))
        if self.amp < 2:
            raise DomainError("amp must be at least 2")

    @classmethod
    def measured(cls, params, delta=0.05):
        return cls(delta=delta, c_omega=empirical_c_omega(params))

    def k_of_t(self, t):
        return self.amp * (math.floor(t / (self.c_omega * self.delta)) + 1)


def survival_probability(config, t, k, n_samples, params, seed=0):
    """Monte Carlo ``P(k flight times sum to less than t)`` with its standard error."""
    if n_samples <= 0:
        raise DomainError("n_samples must be positive")
    if k < 1:
        raise DomainError("k must be at least 1")
    if not t >= 0:
        raise DomainError("t must be non-negative")
    counts = flight_counts(params, t, k, n_samples, seed)
    p = float(np.mean(counts >= k))
    return p, math.sqrt(p * (1.0 - p) / n_samples)


def survival_curve(counts, ks):
    """``P(K >= k)`` and standard errors for each ``k`` from per-chain flight counts."""
    n = counts.shape[0]
    hist = np.bincount(counts)
    tail = np.cumsum(hist[::-1])[::-1]
    ks = np.asarray(ks)
    p = np.where(ks < tail.shape[0], tail[np.minimum(ks, tail.shape[0] - 1)], 0) / n
    return p, np.sqrt(p * (1.0 - p) / n)


def empirical_threshold(counts, t):
    """Smallest ``k`` whose survival estimate is at or below ``exp(-t)``.

    ``resolved`` is False when ``exp(-t)`` is below the sampling resolution
    ``1/n``, in which case the threshold only marks where the estimate hits 0.
    """
    n = counts.shape[0]
    hist = np.bincount(counts)
    tail = np.cumsum(hist[::-1])[::-1] / n
    env = math.exp(-t)
    below = np.nonzero(tail <= env)[0]
    k = int(below[0]) if below.size else int(tail.shape[0])
    return k, env >= 1.0 / n
