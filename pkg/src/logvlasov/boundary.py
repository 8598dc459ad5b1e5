"""Diffuse reflection at the wall and the explicit stationary state.

The wall re-emits particles with the flux-weighted Maxwellian ``mu(v) v3``
on ``{v3 > 0}``, independently of how they arrived.  The stationary state is
``(c_m / 2pi) exp(-|v|^2/2 - Phi(x3))``, whose height marginal is the power
law ``(1 + x3)^{-1/ln a}``.
"""
import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from . import rng
from .errors import DivergentMassError, DomainError
from .flow import PhaseState, PotentialParams

_INV_2PI = 1.0 / (2.0 * math.pi)


def wall_maxwellian(v):
    """Unit-temperature wall density ``exp(-|v|^2/2) / 2pi`` for ``v`` of shape ``(..., 3)``."""
    v = np.asarray(v, dtype=float)
    out = _INV_2PI * np.exp(-0.5 * np.sum(v * v, axis=-1))
    return float(out) if out.ndim == 0 else out


@dataclass
class BoundaryLaw:
    params: PotentialParams
    rng_stream: rng.CounterStream


def sample_outgoing(law):
    """One outgoing velocity ``(v1, v2, v3)`` with ``v3 > 0`` from the wall flux law."""
    return np.array(law.rng_stream.next_outgoing())


def stationary_normalization(params, mass=None):
    """Constant ``c_m`` making the stationary state carry total mass ``mass``.

    ``params`` is either a :class:`PotentialParams` or a bare value of ``ln a``.
    """
    if isinstance(params, PotentialParams):
        ln_a = params.ln_a
        mass = params.mass if mass is None else mass
    else:
        ln_a = float(params)
        mass = 1.0 if mass is None else mass
    if not ln_a > 0.0:
        raise DomainError(f"ln a must be positive, got {ln_a}")
    if mass < 0:
        raise DomainError(f"mass must be non-negative, got {mass}")
    p = 1.0 / ln_a
    if p <= 1.0:
        raise DivergentMassError(f"1/ln a = {p} <= 1: the height integral diverges")
    return mass * (p - 1.0) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class StationaryState:
    params: PotentialParams

    @property
    def c_m(self):
        return stationary_normalization(self.params)

    def density(self, x3, v):
        x3 = np.asarray(x3, dtype=float)
        v = np.asarray(v, dtype=float)
        e = 0.5 * np.sum(v * v, axis=-1) + np.log1p(x3) / self.params.ln_a
        return self.c_m * _INV_2PI * np.exp(-e)

    def height_cdf(self, x3):
        p = 1.0 / self.params.ln_a
        return -np.expm1((1.0 - p) * np.log1p(np.asarray(x3, dtype=float)))

    def height_quantile(self, u):
        return height_quantile(self.params.ln_a, np.asarray(u, dtype=float))


@njit(cache=True)
def height_quantile_scalar(ln_a, u):
    # inverse of 1 - (1 + x)^{1 - 1/ln a}
    return math.expm1(-math.log1p(-u) / (1.0 / ln_a - 1.0))


def height_quantile(ln_a, u):
    return np.expm1(-np.log1p(-u) / (1.0 / ln_a - 1.0))


@njit(cache=True)
def birth_scalar(key, ln_a, shift):
    """Stationary draw from event 0 of a particle stream, height shifted by ``shift``."""
    x1 = rng.uniform(key, 0, 0)
    x2 = rng.uniform(key, 0, 1)
    x3 = height_quantile_scalar(ln_a, rng.uniform(key, 0, 2)) + shift
    v1, v2 = rng.normal_pair(rng.uniform(key, 0, 3), rng.uniform(key, 0, 4))
    v3, _ = rng.normal_pair(rng.uniform(key, 0, 5), rng.uniform(key, 0, 6))
    return x1, x2, x3, v1, v2, v3


@njit(cache=True, parallel=True)
def birth_kernel(seed, tag, ln_a, shift, x, v):
    for i in prange(x.shape[0]):
        key = rng.stream_key(seed, tag, i)
        x[i, 0], x[i, 1], x[i, 2], v[i, 0], v[i, 1], v[i, 2] = birth_scalar(key, ln_a, shift)


@njit(cache=True, parallel=True)
def outgoing_kernel(seed, tag, event, v):
    for i in prange(v.shape[0]):
        key = rng.stream_key(seed, tag, i)
        v[i, 0], v[i, 1], v[i, 2] = rng.outgoing_velocity(key, event)


def sample_stationary(state, stream):
    """One stationary phase-space draw using the next event of ``stream``."""
    u = stream.next_event()
    x3 = float(height_quantile(state.params.ln_a, u[2]))
    v1, v2 = rng.normal_pair(u[3], u[4])
    v3, _ = rng.normal_pair(u[5], u[6])
    return PhaseState((u[0], u[1]), x3, (v1, v2, v3))


def sample_stationary_batch(params, n, seed, tag=rng.TAG_STATIONARY, shift=0.0):
    """``n`` stationary draws as ``(x, v)`` arrays; particle ``i`` uses stream ``(seed, tag, i)``."""
    x = np.empty((n, 3))
    v = np.empty((n, 3))
    birth_kernel(seed, tag, params.ln_a, float(shift), x, v)
    return x, v


def sample_outgoing_batch(n, seed, tag=rng.TAG_FLUX, event=1):
    v = np.empty((n, 3))
    outgoing_kernel(seed, tag, event, v)
    return v
