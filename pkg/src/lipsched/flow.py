"""One-dimensional transport maps and scheduled interpolation flows.

A schedule ``tau`` turns the displacement interpolation of a map ``T`` into the
flow ``X(x, t) = (1 - tau(t)) x + tau(t) T(x)`` whose velocity field is

    v(y, t) = tau_dot(t) (T(x) - x),   where  X(x, t) = y.

Maps are either affine (Gaussian to Gaussian) or the monotone rearrangement
``T = F_target^{-1} o F_source`` between two Gaussian mixtures, restricted to a
quantile box ``[F_source^{-1}(delta), F_source^{-1}(1 - delta)]`` of the
source.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from .errors import AdmissibilityError, DomainError
from .lipschitz import lambda_of_schedule
from .schedule import Schedule

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _solve_increasing(fdf, target, lo, hi, guess=None, max_iter=200):
    """Vectorized safeguarded Newton for ``func(x) = target`` with ``func``
    increasing and ``func(lo) <= target <= func(hi)``.

    ``fdf(x)`` returns ``(func(x), func'(x))``.  Newton steps that leave the
    current bracket are replaced by bisection, so the bracket always shrinks;
    iteration stops once the bracket collapses to a few ulps or the Newton
    correction is negligible.
    """
    shape = np.shape(target)
    target = np.atleast_1d(np.asarray(target, dtype=float))
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    if guess is None:
        x = 0.5 * (lo + hi)
    else:
        x = np.clip(np.broadcast_to(np.asarray(guess, dtype=float), target.shape), lo, hi)
    active = np.ones(target.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        xa = x[active]
        fx, dfx = fdf(xa)
        r = fx - target[active]
        lo_a = np.where(r < 0.0, xa, lo[active])
        hi_a = np.where(r > 0.0, xa, hi[active])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            xn = xa - r / dfx
        bad = ~np.isfinite(xn) | (xn <= lo_a) | (xn >= hi_a)
        xn = np.where(bad, 0.5 * (lo_a + hi_a), xn)
        scale = 1.0 + np.abs(xn)
        done = ((r == 0.0) | (hi_a - lo_a <= 4e-16 * scale)
                | (~bad & (np.abs(xn - xa) <= 1e-15 * scale)))
        xn = np.where(r == 0.0, xa, xn)
        lo[active], hi[active], x[active] = lo_a, hi_a, xn
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return x.reshape(shape)


def _lse(a):
    # log-sum-exp over the (short) component axis; scipy's version carries
    # too much per-call overhead for the inner Newton loops
    m = np.max(a, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.sum(np.exp(a - m), axis=-1)) + m[..., 0]


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Finite mixture of univariate normals."""

    weights: tuple
    means: tuple
    stds: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        s = np.asarray(self.stds, dtype=float)
        if w.ndim != 1 or w.size == 0 or w.shape != m.shape or w.shape != s.shape:
            raise AdmissibilityError("mixture needs equal-length weight/mean/std lists")
        if np.any(w <= 0.0) or abs(w.sum() - 1.0) > 1e-12:
            raise AdmissibilityError("mixture weights must be positive and sum to 1")
        if np.any(s <= 0.0) or not np.all(np.isfinite(m)):
            raise AdmissibilityError("mixture stds must be positive and means finite")
        object.__setattr__(self, "weights", tuple(w.tolist()))
        object.__setattr__(self, "means", tuple(m.tolist()))
        object.__setattr__(self, "stds", tuple(s.tolist()))
        object.__setattr__(self, "_w", w)
        object.__setattr__(self, "_m", m)
        object.__setattr__(self, "_s", s)
        object.__setattr__(self, "_logc", np.log(w) - np.log(s) - _LOG_SQRT_2PI)
        object.__setattr__(self, "_table", None)

    @classmethod
    def normal(cls, mean=0.0, std=1.0):
        return cls((1.0,), (mean,), (std,))

    @classmethod
    def from_dict(cls, d: dict):
        comps = d["components"]
        return cls(tuple(c["weight"] for c in comps), tuple(c["mean"] for c in comps),
                   tuple(c["std"] for c in comps))

    def to_dict(self) -> dict:
        return {"components": [{"weight": w, "mean": m, "std": s}
                               for w, m, s in zip(self.weights, self.means, self.stds)]}

    def _z(self, x):
        x = np.asarray(x, dtype=float)
        return (x[..., None] - self._m) / self._s

    def logpdf(self, x):
        z = self._z(x)
        return _lse(self._logc - 0.5 * z * z)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return np.sum(self._w * ndtr(self._z(x)), axis=-1)

    def logcdf(self, x):
        return _lse(np.log(self._w) + log_ndtr(self._z(x)))

    def _bracket_table(self, n_cache=4096):
        if self._table is None:
            per = max(8, n_cache // self._w.size)
            z = np.linspace(-12.0, 12.0, per)
            nodes = np.unique(np.concatenate(
                [m + s * z for m, s in zip(self._m, self._s)]
                + [[np.min(self._m - 40 * self._s), np.max(self._m + 40 * self._s)]]))
            object.__setattr__(self, "_table", (nodes, self.cdf(nodes)))
        return self._table

    def quantile(self, q):
        """Inverse CDF by bracketed safeguarded Newton, brackets from a cached
        monotone table."""
        q = np.asarray(q, dtype=float)
        if np.any(~(q > 0.0)) or np.any(~(q < 1.0)):
            raise DomainError("quantile levels must lie in (0, 1)")
        if self._w.size == 1:
            return self._m[0] + self._s[0] * ndtri(q)
        nodes, vals = self._bracket_table()
        k = np.searchsorted(vals, q, side="right")
        if np.any(k == 0) or np.any(k == nodes.size):
            raise DomainError("quantile level outside the cached bracket range")
        lo, hi = nodes[k - 1], nodes[k]
        return _solve_increasing(lambda y: (self.cdf(y), self.pdf(y)), q, lo, hi)


class TransportMap1D:
    """Strictly increasing scalar map on a working interval ``domain``."""

    kind = ""
    domain = (-math.inf, math.inf)

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def value_and_derivative(self, x):
        return self(x), self.derivative(x)

    def flow_map(self, x, tau):
        """``(1 - tau) x + tau T(x)``."""
        x = np.asarray(x, dtype=float)
        return (1.0 - tau) * x + tau * self(x)

    def flow_inverse(self, y, tau, guess=None):
        """Solve ``(1 - tau) x + tau T(x) = y`` for ``x`` in the domain.

        ``guess`` (e.g. the preimage from a previous time step) only seeds
        the iteration; the bracket is always the whole domain.
        """
        y = np.asarray(y, dtype=float)
        a, b = self.domain
        if tau == 0.0:
            if np.any(y < a) or np.any(y > b):
                raise DomainError("point outside the flow-map range")
            return y.copy()
        ya, yb = self.flow_map(a, tau), self.flow_map(b, tau)
        if np.any(y < ya) or np.any(y > yb):
            raise DomainError(f"point outside the flow-map range [{ya}, {yb}] at tau={tau}")
        def fdf(x):
            tx, dtx = self.value_and_derivative(x)
            return (1.0 - tau) * x + tau * tx, (1.0 - tau) + tau * dtx

        return _solve_increasing(fdf, y, a, b, guess)


class AffineMap(TransportMap1D):
    """``T(x) = slope * x + intercept``."""

    kind = "affine"

    def __init__(self, slope: float, intercept: float = 0.0, domain=(-math.inf, math.inf)):
        if not slope > 0:
            raise AdmissibilityError(f"map not admissible: slope must be positive, got {slope}")
        self.slope, self.intercept = float(slope), float(intercept)
        self.domain = (float(domain[0]), float(domain[1]))

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def derivative(self, x):
        return np.full(np.shape(x), self.slope)

    def flow_inverse(self, y, tau, guess=None):
        y = np.asarray(y, dtype=float)
        x = (y - tau * self.intercept) / (1.0 - tau + tau * self.slope)
        a, b = self.domain
        if np.any(x < a) or np.any(x > b):
            raise DomainError("point outside the flow-map range")
        return x

    def to_dict(self):
        return {"type": "affine", "slope": self.slope, "intercept": self.intercept}


class CDFMap(TransportMap1D):
    """Monotone rearrangement ``F_target^{-1} o F_source`` on the source's
    ``[delta, 1 - delta]`` quantile box."""

    kind = "cdf_composed"

    def __init__(self, source: GaussianMixture, target: GaussianMixture,
                 delta: float = 1e-4, n_cache: int = 4096):
        if not 0.0 < delta < 0.5:
            raise AdmissibilityError("truncation level delta must lie in (0, 0.5)")
        self.source, self.target, self.delta = source, target, float(delta)
        self.n_cache = int(n_cache)
        target._bracket_table(self.n_cache)
        lo_hi = source.quantile(np.array([delta, 1.0 - delta]))
        self.domain = (float(lo_hi[0]), float(lo_hi[1]))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.target.quantile(self.source.cdf(x))

    def derivative(self, x):
        return self.value_and_derivative(x)[1]

    def value_and_derivative(self, x):
        # change of variables: T'(x) = p_source(x) / p_target(T(x))
        x = np.asarray(x, dtype=float)
        tx = self(x)
        return tx, np.exp(self.source.logpdf(x) - self.target.logpdf(tx))

    def pushforward_residual(self, x):
        """``|F_target(T(x)) - F_source(x)|``."""
        x = np.asarray(x, dtype=float)
        return np.abs(self.target.cdf(self(x)) - self.source.cdf(x))

    def to_dict(self):
        return {"type": "gmm", "source": self.source.to_dict(), "target": self.target.to_dict(),
                "delta": self.delta}


def gaussian_map(mu1: float, theta1: float, mu2: float, theta2: float, domain=(-math.inf, math.inf)) -> AffineMap:
    """Optimal map ``N(mu1, theta1^2) -> N(mu2, theta2^2)``."""
    if not (theta1 > 0 and theta2 > 0):
        raise AdmissibilityError("standard deviations must be positive")
    r = theta2 / theta1
    return AffineMap(r, mu2 - r * mu1, domain)


def gmm_map(source: GaussianMixture, target: GaussianMixture, delta: float = 1e-4,
            n_cache: int = 4096) -> CDFMap:
    return CDFMap(source, target, delta, n_cache)


def figure3_map(delta: float = 1e-4) -> CDFMap:
    """Standard normal to ``0.8 N(-2, 0.02^2) + 0.2 N(2, 0.01^2)``."""
    return CDFMap(GaussianMixture.normal(),
                  GaussianMixture((0.8, 0.2), (-2.0, 2.0), (0.02, 0.01)), delta)


def map_from_dict(d: dict) -> TransportMap1D:
    kind = d.get("type")
    if kind == "gaussian":
        dom = d.get("domain", [-math.inf, math.inf])
        return gaussian_map(d.get("mu1", 0.0), d["theta1"], d.get("mu2", 0.0), d["theta2"], dom)
    if kind == "affine":
        return AffineMap(d["slope"], d.get("intercept", 0.0), d.get("domain", [-math.inf, math.inf]))
    if kind == "gmm":
        return CDFMap(GaussianMixture.from_dict(d["source"]), GaussianMixture.from_dict(d["target"]),
                      d.get("delta", 1e-4), d.get("n_cache", 4096))
    raise AdmissibilityError(f"unknown map type {kind!r}")


@dataclass(frozen=True, eq=False)
class FlowTrajectory:
    """Positions ``positions[k, j]`` at ``times[k]`` for start point ``x0[j]``."""

    x0: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    method: str
    h: float | None = None

    @property
    def final(self):
        return self.positions[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x0", "t", "x"])
        for j, x0 in enumerate(self.x0):
            for k, t in enumerate(self.times):
                w.writerow([format(x0, ".17g"), format(t, ".17g"), format(self.positions[k, j], ".17g")])
        return buf.getvalue()


def exact_flow(tmap: TransportMap1D, schedule: Schedule, x0, times) -> FlowTrajectory:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-D array")
    tau = schedule.value(times)[:, None]
    pos = (1.0 - tau) * x0 + tau * tmap(x0)
    return FlowTrajectory(x0, times, pos, "exact")


def velocity(tmap: TransportMap1D, schedule: Schedule, y, t: float, guess=None):
    """Scheduled velocity ``tau_dot(t) (T(x) - x)`` at the point ``y`` with
    ``X(x, t) = y``."""
    v, _ = _velocity_and_preimage(tmap, schedule, y, t, guess)
    return float(v) if np.ndim(y) == 0 else v


def _velocity_and_preimage(tmap, schedule, y, t, guess=None):
    tau = schedule.value(float(t))
    x = tmap.flow_inverse(y, tau, guess)
    return schedule.deriv(float(t)) * (tmap(x) - x), x


def euler_flow(tmap: TransportMap1D, schedule: Schedule, x0, n_steps: int) -> FlowTrajectory:
    """Explicit Euler with ``n_steps`` uniform steps on [0, 1]."""
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps}")
    n_steps = int(n_steps)
    h = 1.0 / n_steps
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    times = np.linspace(0.0, 1.0, n_steps + 1)
    pos = np.empty((n_steps + 1, x0.size))
    pos[0] = x0
    y = x0.copy()
    pre = x0.copy()
    for k in range(n_steps):
        v, pre = _velocity_and_preimage(tmap, schedule, y, times[k], pre)
        y = y + h * v
        pos[k + 1] = y
    return FlowTrajectory(x0, times, pos, "euler", h)


def second_derivative_constant(tmap: TransportMap1D, schedule: Schedule, omega=None,
                               n_t: int = 2001, n_x: int = 2001) -> float:
    """``M = sup_x sup_t |tau_ddot(t)| |T(x) - x|`` on grids, including the
    one-sided limits of ``tau_ddot`` at kinks."""
    a, b = tmap.domain if omega is None else omega
    if not (np.isfinite(a) and np.isfinite(b)):
        raise DomainError("second_derivative_constant needs a bounded interval")
    t = np.linspace(0.0, 1.0, n_t)
    tdd = max(float(np.max(np.abs(schedule.second_deriv(t)))),
              max(abs(v) for v in schedule.second_deriv_extremes()))
    x = np.linspace(a, b, n_x)
    disp = float(np.max(np.abs(tmap(x) - x)))
    return tdd * disp


def error_bound(bounds, tmap: TransportMap1D, schedule: Schedule, h: float, omega=None) -> float:
    """Forward-Euler global error bound ``h M / (2 L) (e^L - 1)`` with ``L``
    the uniform Lipschitz bound of the scheduled field."""
    m = second_derivative_constant(tmap, schedule, omega)
    if m == 0.0:
        return 0.0
    lam = lambda_of_schedule(bounds, schedule)
    growth = math.expm1(lam) / lam if lam > 0 else 1.0
    return h * m / 2.0 * growth


def w2_error_terms(bounds, eps: float, h: float) -> tuple[float, float]:
    """The two terms of the combined approximation/discretization estimate
    under the optimal schedule: ``(smax/smin) eps`` and
    ``smax / (smin (ln smax - ln smin)) h``.  Formula evaluation only.

    The second term is reported as ``inf`` when ``smax == smin``, where the
    expression has no finite value.
    """
    smax, smin = bounds.sigma_max, bounds.sigma_min
    spread = math.log(smax) - math.log(smin)
    second = math.inf if spread == 0.0 else smax / (smin * spread) * h
    return smax / smin * eps, second


def mixture_from_json(text: str) -> GaussianMixture:
    return GaussianMixture.from_dict(json.loads(text))
