"""Independent reference computations.

Nothing here calls the package's closed forms: the flow is integrated with a
generic Runge-Kutta scheme and integrals are done by adaptive quadrature or
mpmath at high precision.
"""
import math

import mpmath
import numpy as np
from scipy import integrate, special

LN_A = 0.125


def hamilton_rhs(ln_a):
    def rhs(_, y):
        # y = (x1, x2, x3, v1, v2, v3)
        return [y[3], y[4], y[5], 0.0, 0.0, -1.0 / (ln_a * (1.0 + y[2]))]

    return rhs


def rk_state(ln_a, x, v, dt, rtol=1e-12, atol=1e-14):
    """Single trajectory by DOP853; horizontal coordinates returned unwrapped."""
    if dt == 0:
        return np.array(x, float), np.array(v, float)
    sol = integrate.solve_ivp(hamilton_rhs(ln_a), (0.0, dt), list(x) + list(v), method="DOP853",
                              rtol=rtol, atol=atol)
    y = sol.y[:, -1]
    return y[:3], y[3:]


def rk_batch(ln_a, x, v, dt, rtol=1e-12, atol=1e-13):
    """Vertical motion of many states in one stacked solve, in rescaled time."""
    n = x.shape[0]

    def rhs(_, y):
        return np.concatenate([dt * y[n:], -dt / (ln_a * (1.0 + y[:n]))])

    sol = integrate.solve_ivp(rhs, (0.0, 1.0), np.concatenate([x[:, 2], v[:, 2]]), method="DOP853",
                              rtol=rtol, atol=atol)
    return sol.y[:n, -1], sol.y[n:, -1]


def event_flight_time(ln_a, x3, v3, rtol=1e-12, atol=1e-14):
    """Time until the height returns to zero, by event location on a RK trajectory."""
    def hit(_, y):
        return y[0]

    hit.terminal = True
    hit.direction = -1

    def rhs(_, y):
        return [y[1], -1.0 / (ln_a * (1.0 + y[0]))]

    sol = integrate.solve_ivp(rhs, (0.0, 1e4), [x3, v3], method="DOP853", events=hit, rtol=rtol, atol=atol)
    return float(sol.t_events[0][0])


def gauss_integral_quad(ln_a, u):
    return integrate.quad(lambda y: math.exp(-0.5 * ln_a * y * y), 0.0, u, epsabs=1e-15, epsrel=1e-14)[0]


def gauss_integral_mp(ln_a, u, dps=30):
    with mpmath.workdps(dps):
        return mpmath.quad(lambda y: mpmath.e ** (-mpmath.mpf(ln_a) * y * y / 2), [0, u])


def flight_time_quad(ln_a, w):
    """Wall-to-wall flight time of vertical launch speed ``w`` from the energy integral.

    ``dt = dx3 / V3`` with ``V3 = sqrt(w^2 - 2 Phi)``; the apex singularity is
    removed by substituting ``x3 = apex (1 - s^2)``.
    """
    apex = math.expm1(0.5 * ln_a * w * w)

    def integrand(s):
        x3 = apex * (1.0 - s * s)
        v = math.sqrt(max(w * w - 2.0 * math.log1p(x3) / ln_a, 0.0))
        if v == 0.0:
            # limit as s -> 0: V3 ~ s sqrt(2 apex / (ln a (1 + apex)))
            return 2.0 * apex / math.sqrt(2.0 * apex / (ln_a * (1.0 + apex)))
        return 2.0 * apex * s / v

    return 2.0 * integrate.quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def stationary_height_pdf(ln_a, x3):
    p = 1.0 / ln_a
    return (p - 1.0) * (1.0 + x3) ** (-p)


def mean_phi_quad(ln_a):
    p = 1.0 / ln_a
    return integrate.quad(lambda x: math.log1p(x) / ln_a * (p - 1.0) * (1.0 + x) ** (-p), 0.0, np.inf,
                          epsabs=1e-14, epsrel=1e-12)[0]


def stationary_mass_quad(ln_a, c_m, x_top=1e6):
    """Total mass of ``(c_m/2pi) exp(-|v|^2/2 - Phi)``: the velocity integral is ``(2pi)^{3/2}``
    by a separate 1-D quadrature, the height integral by quadrature in ``log(1 + x3)``.
    """
    g1 = integrate.quad(lambda u: math.exp(-0.5 * u * u), -np.inf, np.inf, epsabs=1e-15)[0]
    hx = integrate.quad(lambda s: math.exp(s - s / ln_a), 0.0, math.log1p(x_top), epsabs=1e-15, limit=200)[0]
    return c_m / (2.0 * math.pi) * g1 ** 3 * hx


def mean_flight_time_quad(ln_a):
    """``int_0^inf t_flight(w) w exp(-w^2/2) dw`` with the flight time from quadrature."""
    return integrate.quad(lambda w: flight_time_quad(ln_a, w) * w * math.exp(-0.5 * w * w), 0.0, 12.0,
                          epsabs=1e-12, epsrel=1e-10, limit=200)[0]


def shifted_height_cdf(ln_a, x, shift):
    p = 1.0 / ln_a
    z = np.maximum(np.asarray(x, float) - shift, 0.0)
    return 1.0 - (1.0 + z) ** (1.0 - p)


def binned_l1_default_f0(ln_a, x_edges):
    """Expected histogram L1 of the default fluctuation on height bins (velocity factors cancel).

    Bins are ``x_edges`` plus one overflow bin.
    """
    e = np.append(np.asarray(x_edges, float), np.inf)
    fp = shifted_height_cdf(ln_a, e, 1.0)
    fm = shifted_height_cdf(ln_a, e, 0.0)
    fp[-1] = fm[-1] = 1.0
    return float(np.sum(np.abs(np.diff(fp) - np.diff(fm))))


def slab_moment_default_f0(ln_a, theta, lo, hi):
    """Slab average of ``int exp(theta(|v|^2 + 2 Phi)) |f0| dv`` for the default fluctuation."""
    p = 1.0 / ln_a

    def hdiff(x):
        plus = (p - 1.0) * x ** (-p) if x >= 1.0 else 0.0
        return plus - (p - 1.0) * (1.0 + x) ** (-p)

    pts = [1.0] if lo < 1.0 < hi else None
    val = integrate.quad(lambda x: hdiff(x) * (1.0 + x) ** (2.0 * theta / ln_a), lo, hi, points=pts,
                         epsabs=1e-13, epsrel=1e-11, limit=200)[0]
    return abs(val) / (hi - lo) * (1.0 - 2.0 * theta) ** -1.5


def erfinv_ref(y):
    return special.erfinv(y)
