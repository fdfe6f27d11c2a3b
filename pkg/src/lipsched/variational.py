"""Smooth L^{2p} relaxations of the uniform Lipschitz objective.

For a fixed spectral field the relaxed Lagrangian is

    lambda_p(tau, tau_dot) = tau_dot^{2p} * K_p(tau),
    K_p(x) = int_Omega (f / (1 + x f))^{2p} + (g / (1 + x g))^{2p} ds,

and its minimizer obeys ``tau_dot = K_p(tau)^{-1/2p} / Z_p``.  The ODE is
separable: ``dt/dtau = Z_p K_p(tau)^{1/2p}``, so ``t(tau)`` is a normalized
running integral and the schedule is its inverse.  No shooting is needed and
both boundary conditions hold by construction.  The limiting problem replaces
``K_p^{1/2p}`` by the pointwise maximum of the two reduced terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import TrivialTransportError
from .schedule import Schedule, TabulatedSchedule
from .spectral import SpectralBounds, SpectralField

_GL_ORDER = 8
_CHUNK = 1 << 22  # max elements per (x, s) block in K_p evaluation


def _require_nontrivial(field: SpectralField):
    if field.is_isometry():
        raise TrivialTransportError("trivial transport: spectral field vanishes identically")


def log_k_p(field: SpectralField, x, p: int):
    """``ln K_p(x)`` via a max-shifted exponential sum over grid cells.

    Zero entries of f or g contribute nothing; the evaluation is stable for
    ``p`` in the hundreds even when ``K_p`` itself would overflow.
    """
    _require_nontrivial(field)
    if p < 1 or int(p) != p:
        raise ValueError(f"p must be a positive integer, got {p}")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    logw = np.log(field.weights)
    vals = np.concatenate([field.f, field.g])
    logw2 = np.concatenate([logw, logw])
    nz = vals != 0.0
    vals, logw2 = vals[nz], logw2[nz]
    abs_log = np.log(np.abs(vals))
    out = np.empty(x_arr.size)
    rows = max(1, _CHUNK // max(vals.size, 1))
    for i in range(0, x_arr.size, rows):
        xs = x_arr[i:i + rows, None]
        # ln |v / (1 + x v)| ; 1 + x v > 0 for v > -1 and x in [0, 1]
        terms = logw2 + 2 * p * (abs_log - np.log1p(xs * vals))
        out[i:i + rows] = logsumexp(terms, axis=1)
    return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))


def k_p(field: SpectralField, x, p: int):
    """Alias of :func:`log_k_p`; the value is returned on a log scale."""
    return log_k_p(field, x, p)


def _gl_nodes(edges):
    """Gauss-Legendre nodes/weights on each cell of ``edges``."""
    xi, wi = np.polynomial.legendre.leggauss(_GL_ORDER)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) * 0.5 + half * xi
    weights = half * wi
    return nodes, weights


def clustered_grid(n: int, breakpoints=()):
    """Chebyshev-Lobatto nodes on [0, 1] plus any interior breakpoints."""
    j = np.arange(n)
    u = 0.5 * (1.0 - np.cos(np.pi * j / (n - 1)))
    u[0], u[-1] = 0.0, 1.0
    extra = [b for b in breakpoints if 0.0 < b < 1.0]
    if extra:
        u = np.unique(np.concatenate([u, extra]))
    return u


def _integrate_density(density, u):
    """Cumulative integral of a positive density over the nodes ``u``,
    cell by cell with Gauss-Legendre quadrature."""
    nodes, weights = _gl_nodes(u)
    vals = density(nodes.ravel()).reshape(nodes.shape)
    cell = np.sum(vals * weights, axis=1)
    return np.concatenate([[0.0], np.cumsum(cell)])


def _schedule_from_density(density, u):
    """Schedule with ``dt/dtau`` proportional to ``density(tau)``.

    Returns the tabulated schedule and the normalizer ``I = int_0^1 density``.
    """
    cum = _integrate_density(density, u)
    total = cum[-1]
    t = cum / total
    t[0], t[-1] = 0.0, 1.0
    dens = density(u)
    slopes = total / dens  # dtau/dt = 1 / (dt/dtau)
    return TabulatedSchedule(t, u, slopes), total


@dataclass(frozen=True, eq=False)
class LpSolution:
    p: int
    schedule: TabulatedSchedule
    z_p: float
    grid_size: int
    residual_sup: float

    def to_dict(self) -> dict:
        d = self.schedule.to_dict()
        d.update({"p": self.p, "z_p": self.z_p, "residual_sup": self.residual_sup})
        return d


def _lp_density(field, p):
    def density(u):
        return np.exp(log_k_p(field, u, p) / (2 * p))
    return density


def ode_residual(field: SpectralField, schedule: Schedule, p: int, z_p: float, t=None):
    """Sup of ``|tau_dot * K_p(tau)^{1/2p} * Z_p - 1|`` over interior points.

    By default the points are the interior table nodes together with the
    midpoints between consecutive nodes.
    """
    if t is None:
        nodes = schedule.t_nodes
        t = np.concatenate([nodes[1:-1], 0.5 * (nodes[:-1] + nodes[1:])])
    tau = schedule.value(t)
    lhs = schedule.deriv(t) * np.exp(log_k_p(field, tau, p) / (2 * p)) * z_p
    return float(np.max(np.abs(lhs - 1.0)))


def solve_lp(field: SpectralField, p: int, n_tau: int = 2048) -> LpSolution:
    """Minimizer of the L^{2p}-relaxed objective for a sampled field."""
    _require_nontrivial(field)
    if n_tau < 16:
        raise ValueError("n_tau must be at least 16")
    u = clustered_grid(n_tau)
    density = _lp_density(field, p)
    sched, total = _schedule_from_density(density, u)
    if not np.isfinite(total) or total <= 0.0:
        raise ArithmeticError("non-finite quadrature of K_p^(1/2p)")
    z_p = 1.0 / total
    res = ode_residual(field, sched, p, z_p)
    return LpSolution(int(p), sched, z_p, int(u.size), res)


def z_p_time_side(field: SpectralField, sol: LpSolution, n: int = 4001) -> float:
    """``Z_p`` recomputed as ``int_0^1 K_p(tau_p(t))^{-1/2p} dt`` (Simpson)."""
    if n % 2 == 0:
        n += 1
    t = np.linspace(0.0, 1.0, n)
    vals = np.exp(-log_k_p(field, sol.schedule.value(t), sol.p) / (2 * sol.p))
    return float(simpson_weights(n) @ vals)


def simpson_weights(n: int) -> np.ndarray:
    """Composite Simpson weights on a uniform grid of [0, 1] (n odd)."""
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson's rule needs an odd number of points >= 3")
    h = 1.0 / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def reduced_sup(f_star: float, g_star: float, tau):
    """``max{ f*/(1 + tau f*), -g*/(1 + tau g*) }``: the spatial supremum of
    the unscheduled Lipschitz integrand at interpolation level ``tau``."""
    tau = np.asarray(tau, dtype=float)
    return np.maximum(f_star / (1.0 + tau * f_star), -g_star / (1.0 + tau * g_star))


def solve_linf_numeric(bounds: SpectralBounds, n_tau: int = 2048) -> TabulatedSchedule:
    """Limiting (``p -> infinity``) schedule by quadrature, as an independent
    check of the closed form."""
    f, g = bounds.f_star, bounds.g_star

    def density(u):
        return reduced_sup(f, g, u)

    # the density has at most one kink, where the two terms cross
    def gap(u):
        return f / (1.0 + u * f) + g / (1.0 + u * g)

    breaks = []
    if gap(0.0) * gap(1.0) < 0.0:
        breaks.append(brentq(gap, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    u = clustered_grid(n_tau, breaks)
    sched, _ = _schedule_from_density(density, u)
    return sched


def lp_objective(field: SpectralField, schedule: Schedule, p: int, n_time: int = 4097) -> float:
    """``(int_0^1 lambda_p(tau, tau_dot) dt)^{1/2p}`` evaluated in log space."""
    _require_nontrivial(field)
    if n_time % 2 == 0:
        n_time += 1
    t = np.linspace(0.0, 1.0, n_time)
    tau_dot = schedule.deriv(t)
    w = simpson_weights(n_time)
    with np.errstate(divide="ignore"):
        log_lam = 2 * p * np.log(np.abs(tau_dot)) + log_k_p(field, schedule.value(t), p)
    return float(np.exp(logsumexp(log_lam + np.log(w)) / (2 * p)))


def l2_distance(a: Schedule, b: Schedule, n: int = 4001) -> float:
    """Trapezoid-rule L^2 distance between two schedules on [0, 1]."""
    t = np.linspace(0.0, 1.0, n)
    w = np.full(n, 1.0 / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    d = a.value(t) - b.value(t)
    return float(np.sqrt(np.sum(w * d * d)))


def sup_distance(a: Schedule, b: Schedule, n: int = 1001) -> float:
    t = np.linspace(0.0, 1.0, n)
    return float(np.max(np.abs(a.value(t) - b.value(t))))
