"""Counter-based random streams.

Every random number is a pure function of ``(seed, tag, particle, event, lane)``
so results never depend on how particles are split across threads.  The mixer
is the SplitMix64 finalizer applied to a Weyl sequence offset by a hashed key.
"""
import math

import numpy as np
from numba import njit

from .errors import StreamError

LANES = 8
MAX_EVENT = 1 << 60
MAX_SEED = (1 << 63) - 1

# stream tags
TAG_PLUS = 1
TAG_MINUS = 2
TAG_SINGLE = 3
TAG_CHAIN = 4
TAG_FLUX = 5
TAG_STATIONARY = 6
TAG_LAB = 7

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(seed, tag, pid):
    k = mix64(np.uint64(seed) ^ mix64(np.uint64(tag) * _GOLDEN + _GOLDEN))
    return mix64(k + np.uint64(pid) * _GOLDEN)


def python_key(seed, tag, pid):
    return np.uint64(stream_key(seed, tag, pid))


@njit(cache=True)
def uniform(key, event, lane):
    """Uniform on [0, 1) with 53 random bits."""
    # all operands unsigned: mixed signed/unsigned arithmetic would promote to float
    key = np.uint64(key)
    c = np.uint64(event) * np.uint64(LANES) + np.uint64(lane) + np.uint64(1)
    z = mix64(key + c * _GOLDEN)
    return (z >> np.uint64(11)) * _TWO_M53


@njit(cache=True)
def normal_pair(u1, u2):
    r = math.sqrt(-2.0 * math.log1p(-u1))
    t = 2.0 * math.pi * u2
    return r * math.cos(t), r * math.sin(t)


@njit(cache=True)
def outgoing_velocity(key, event):
    """Flux-weighted wall draw: v3 = sqrt(2E) with E ~ Exp(1), Gaussian tangential part."""
    e = -math.log1p(-uniform(key, event, 0))
    v1, v2 = normal_pair(uniform(key, event, 1), uniform(key, event, 2))
    return v1, v2, math.sqrt(2.0 * e)


def _check_int(name, value, hi):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise StreamError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < 0 or value > hi:
        raise StreamError(f"{name}={value} outside [0, {hi}]")
    return value


class CounterStream:
    """A handle onto one particle's counter-based stream.

    Each call to :meth:`next_event` consumes one event index and returns its
    ``LANES`` uniforms.  A handle must not be shared between threads.
    """

    def __init__(self, seed, tag=TAG_LAB, pid=0, event=1):
        self.seed = _check_int("seed", seed, MAX_SEED)
        self.tag = _check_int("tag", tag, MAX_SEED)
        self.pid = _check_int("pid", pid, MAX_SEED)
        self.event = _check_int("event", event, MAX_EVENT)
        self.key = python_key(self.seed, self.tag, self.pid)
        self.closed = False

    def _advance(self):
        if self.closed:
            raise StreamError("stream handle is closed")
        if self.event >= MAX_EVENT:
            raise StreamError("stream exhausted")
        ev = self.event
        self.event += 1
        return ev

    def next_event(self):
        ev = self._advance()
        return np.array([uniform(self.key, ev, j) for j in range(LANES)])

    def next_outgoing(self):
        ev = self._advance()
        return outgoing_velocity(self.key, ev)

    def close(self):
        self.closed = True
