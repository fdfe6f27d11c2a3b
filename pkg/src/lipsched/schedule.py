"""Time reparameterization schedules.

A schedule is a non-decreasing C^1 map ``tau: [0, 1] -> [0, 1]`` with
``tau(0) = 0`` and ``tau(1) = 1``.  The optimal schedule minimizing the uniform
Lipschitz bound of the scheduled velocity field depends only on the spectral
bounds ``(f_star, g_star)`` and is one of three closed forms:

* ``simple_f``:  ``tau(t) = ((f* + 1)^t - 1) / f*``
* ``simple_g``:  ``tau(t) = ((g* + 1)^t - 1) / g*``
* ``piecewise``: an exponential rise up to a transition time ``t0`` followed
  by an exponential saturation, matched at ``tau(t0) = -(1/f* + 1/g*) / 2``.

Closed forms are evaluated through ``expm1``/``log1p`` so that near-isometric
maps (``f*``, ``g*`` close to zero) do not lose precision.
"""

from __future__ import annotations

import json
import math
import warnings

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import AdmissibilityError, DomainError, TrivialTransportError
from .spectral import ISOMETRY_TOL, SpectralBounds


class TrivialTransportWarning(UserWarning):
    pass


def _as_bounds(bounds) -> tuple[float, float]:
    if isinstance(bounds, SpectralBounds):
        return bounds.f_star, bounds.g_star
    f, g = bounds
    return float(f), float(g)


def _check_unit(x, name="t"):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0.0)) or np.any(~(arr <= 1.0)):
        raise DomainError(f"{name} must lie in [0, 1]")
    return arr


def _ret(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


class Schedule:
    """Base class; subclasses implement ``_value``, ``_deriv``, ``_second``
    and ``_inverse`` on validated float arrays."""

    kind: str = ""

    def __call__(self, t):
        return self.value(t)

    def value(self, t):
        arr = _check_unit(t)
        return _ret(self._value(arr), t)

    def deriv(self, t):
        arr = _check_unit(t)
        return _ret(self._deriv(arr), t)

    def second_deriv(self, t):
        arr = _check_unit(t)
        return _ret(self._second(arr), t)

    def inverse(self, tau):
        arr = _check_unit(tau, "tau")
        return _ret(self._inverse(arr), tau)

    def second_deriv_extremes(self) -> list[float]:
        """Values of the second derivative where its magnitude can peak,
        including one-sided limits at kinks."""
        return [float(self._second(np.array(0.0))), float(self._second(np.array(1.0)))]

    def sample(self, n: int = 1001):
        """Uniform-grid samples ``(t, tau, tau_dot, tau_ddot)``."""
        t = np.linspace(0.0, 1.0, n)
        return t, self._value(t), self._deriv(t), self._second(t)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict() if self.kind != 'tabulated' else '...'})"


class TrivialSchedule(Schedule):
    """``tau(t) = t``: constant-speed straight-line interpolation."""

    kind = "trivial"

    def _value(self, t):
        return t.copy()

    def _deriv(self, t):
        return np.ones_like(t)

    def _second(self, t):
        return np.zeros_like(t)

    def _inverse(self, tau):
        return tau.copy()

    def to_dict(self):
        return {"kind": "trivial"}


class ExponentialSchedule(Schedule):
    """``tau(t) = ((1 + c)^t - 1) / c`` with ``c`` either ``f*`` or ``g*``."""

    def __init__(self, f_star: float, g_star: float, use: str):
        if use not in ("f", "g"):
            raise ValueError("use must be 'f' or 'g'")
        self.f_star, self.g_star = float(f_star), float(g_star)
        self.kind = f"simple_{use}"
        c = self.f_star if use == "f" else self.g_star
        if c <= -1.0 or c == 0.0:
            raise DomainError(f"exponential schedule needs c > -1 and c != 0, got {c}")
        self.c = c
        self.rate = math.log1p(c)  # log of the growth base (1 + c)

    def _value(self, t):
        # clamp the last-ulp overshoot of expm1(log1p(c)) / c near t = 1
        return np.clip(np.expm1(self.rate * t) / self.c, 0.0, 1.0)

    def _deriv(self, t):
        return self.rate * np.exp(self.rate * t) / self.c

    def _second(self, t):
        return self.rate ** 2 * np.exp(self.rate * t) / self.c

    def _inverse(self, tau):
        return np.clip(np.log1p(self.c * tau) / self.rate, 0.0, 1.0)

    def to_dict(self):
        return {"kind": self.kind, "f_star": self.f_star, "g_star": self.g_star,
                "t0": None, "tau0": None}


class PiecewiseSchedule(Schedule):
    """Two exponential branches joined at the transition time ``t0``.

    Before ``t0`` the dilation term binds and ``tau = (A^t - 1) / f*``; after
    ``t0`` the contraction term binds and
    ``tau = (1/g* - 1/f*)/2 * B^t * C^(1-t) - 1/g*`` with
    ``B = (g* + 1) / ((1 - g*/f*)/2)`` and ``C = (1 - f*/g*)/2``.
    """

    kind = "piecewise"

    def __init__(self, f_star: float, g_star: float, t0: float, tau0: float):
        f, g = float(f_star), float(g_star)
        if not (g < 0.0 < f):
            raise DomainError("piecewise schedule requires g* < 0 < f*")
        self.f_star, self.g_star, self.t0, self.tau0 = f, g, float(t0), float(tau0)
        # rate of the first branch; equals the optimal Lipschitz value
        self.rate = math.log((2.0 - f / g - g / f) / 4.0) - math.log1p(g)
        self.coef = 0.5 * (1.0 / g - 1.0 / f)
        self.log_b = math.log1p(g) - math.log(0.5 * (1.0 - g / f))
        self.log_c = math.log(0.5 * (1.0 - f / g))

    def _branch2_exp(self, t):
        return np.exp(t * self.log_b + (1.0 - t) * self.log_c)

    def _value(self, t):
        left = np.expm1(self.rate * t) / self.f_star
        right = self.coef * self._branch2_exp(t) - 1.0 / self.g_star
        return np.clip(np.where(t <= self.t0, left, right), 0.0, 1.0)

    def _deriv(self, t):
        left = self.rate * np.exp(self.rate * t) / self.f_star
        right = self.coef * (self.log_b - self.log_c) * self._branch2_exp(t)
        return np.where(t <= self.t0, left, right)

    def _second(self, t):
        left = self.rate ** 2 * np.exp(self.rate * t) / self.f_star
        right = self.coef * (self.log_b - self.log_c) ** 2 * self._branch2_exp(t)
        return np.where(t <= self.t0, left, right)

    def branch_values(self, t):
        """``(left, right)`` branch values at ``t``, ignoring the switch."""
        t = np.asarray(t, dtype=float)
        return (np.expm1(self.rate * t) / self.f_star,
                self.coef * self._branch2_exp(t) - 1.0 / self.g_star)

    def branch_derivs(self, t):
        t = np.asarray(t, dtype=float)
        return (self.rate * np.exp(self.rate * t) / self.f_star,
                self.coef * (self.log_b - self.log_c) * self._branch2_exp(t))

    def second_deriv_extremes(self):
        t0 = np.array(self.t0)
        left = self.rate ** 2 * np.exp(self.rate * t0) / self.f_star
        right = self.coef * (self.log_b - self.log_c) ** 2 * self._branch2_exp(t0)
        return super().second_deriv_extremes() + [float(left), float(right)]

    def _inverse(self, tau):
        left = np.log1p(self.f_star * tau) / self.rate
        with np.errstate(divide="ignore", invalid="ignore"):
            e = (tau + 1.0 / self.g_star) / self.coef
            right = (self.log_c - np.log(e)) / (self.log_c - self.log_b)
        return np.clip(np.where(tau <= self.tau0, left, right), 0.0, 1.0)

    def to_dict(self):
        return {"kind": "piecewise", "f_star": self.f_star, "g_star": self.g_star,
                "t0": self.t0, "tau0": self.tau0}


def _limit_slopes(x, y, m):
    """Fritsch-Carlson limiter: shrink nodal slopes so the cubic Hermite
    interpolant is monotone on every interval."""
    m = np.maximum(np.asarray(m, dtype=float).copy(), 0.0)
    h = np.diff(x)
    delta = np.diff(y) / h
    flat = delta <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(flat, 0.0, m[:-1] / delta)
        b = np.where(flat, 0.0, m[1:] / delta)
    r = np.hypot(a, b)
    scale = np.where(r > 3.0, 3.0 / np.where(r > 0, r, 1.0), 1.0)
    scale[flat] = 0.0
    node_scale = np.ones_like(m)
    node_scale[:-1] = np.minimum(node_scale[:-1], scale)
    node_scale[1:] = np.minimum(node_scale[1:], scale)
    return m * node_scale


class TabulatedSchedule(Schedule):
    """Monotone table ``(t_i, tau_i)`` interpolated by a shape-preserving
    piecewise cubic.

    With ``tau_dot`` given, nodal slopes are taken from it (after a
    Fritsch-Carlson limiter); otherwise PCHIP slopes are used.
    """

    kind = "tabulated"

    def __init__(self, t, tau, tau_dot=None):
        t = np.asarray(t, dtype=float)
        tau = np.asarray(tau, dtype=float)
        if t.ndim != 1 or t.shape != tau.shape or t.size < 2:
            raise AdmissibilityError("t and tau must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(t) <= 0.0):
            raise AdmissibilityError("t nodes must be strictly increasing")
        if np.any(np.diff(tau) < 0.0):
            raise AdmissibilityError("tau values must be non-decreasing")
        if t[0] != 0.0 or t[-1] != 1.0 or tau[0] != 0.0 or tau[-1] != 1.0:
            raise AdmissibilityError("table must run from (0, 0) to (1, 1)")
        if tau_dot is None:
            slopes = PchipInterpolator(t, tau).derivative()(t)
            self._given_slopes = False
        else:
            slopes = _limit_slopes(t, tau, tau_dot)
            self._given_slopes = True
        self.t_nodes, self.tau_nodes, self.slopes = t, tau, slopes
        self._spline = CubicHermiteSpline(t, tau, slopes)

    def _value(self, t):
        v = np.clip(self._spline(t), 0.0, 1.0)
        return np.where(t >= 1.0, 1.0, np.where(t <= 0.0, 0.0, v))

    def _deriv(self, t):
        return self._spline(t, 1)

    def _second(self, t):
        return self._spline(t, 2)

    def second_deriv_extremes(self):
        # piecewise-linear second derivative: extremes sit at node one-sided limits
        x = self.t_nodes
        mid = 0.5 * (x[:-1] + x[1:])
        h = 0.5 * np.diff(x)
        d2_mid = self._spline(mid, 2)
        d3 = self._spline(mid, 3)
        return list(np.concatenate([d2_mid - d3 * h, d2_mid + d3 * h]))

    def _inverse(self, tau, tol=1e-12):
        tau = np.atleast_1d(tau)
        k = np.clip(np.searchsorted(self.tau_nodes, tau, side="left") - 1, 0, self.t_nodes.size - 2)
        lo = self.t_nodes[k].copy()
        hi = self.t_nodes[k + 1].copy()
        # leftmost preimage; bisection to the requested tolerance
        for _ in range(200):
            if np.all(hi - lo <= tol):
                break
            mid = 0.5 * (lo + hi)
            below = self._spline(mid) < tau
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = np.where(tau <= 0.0, 0.0, np.where(tau >= 1.0, 1.0, hi))
        return out

    def inverse(self, tau):
        arr = _check_unit(tau, "tau")
        out = self._inverse(arr)
        return float(out[0]) if np.ndim(tau) == 0 else out.reshape(arr.shape)

    def to_dict(self):
        d = {"kind": "tabulated", "t": self.t_nodes.tolist(), "tau": self.tau_nodes.tolist()}
        if self._given_slopes:
            d["tau_dot"] = self.slopes.tolist()
        return d


def transition_time(bounds):
    """Transition time ``t0`` and level ``tau0`` of the optimal schedule.

    Returns ``None`` unless ``g* < 0 < f*`` and ``0 <= t0 <= 1``.
    """
    f, g = _as_bounds(bounds)
    if not (g < 0.0 < f):
        return None
    ratio = f / g
    num = math.log(0.5 * (1.0 - ratio))
    den = math.log(0.25 * (2.0 - ratio - g / f)) - math.log1p(g)
    if den == 0.0:
        return None
    t0 = num / den
    if not (0.0 <= t0 <= 1.0):
        return None
    tau0 = -0.5 * (1.0 / f + 1.0 / g)
    return t0, tau0


def trivial_schedule() -> TrivialSchedule:
    return TrivialSchedule()


def optimal_schedule(bounds) -> Schedule:
    """Closed-form minimizer of the uniform Lipschitz bound.

    ``bounds`` is a :class:`SpectralBounds` or an ``(f_star, g_star)`` pair.
    An isometric pair falls back to the trivial schedule with a
    :class:`TrivialTransportWarning`.
    """
    if not isinstance(bounds, SpectralBounds):
        f, g = _as_bounds(bounds)
        if abs(f) < ISOMETRY_TOL and abs(g) < ISOMETRY_TOL:
            warnings.warn("trivial transport: returning the trivial schedule",
                          TrivialTransportWarning, stacklevel=2)
            return TrivialSchedule()
        bounds = SpectralBounds(f, g)
    f, g = bounds.f_star, bounds.g_star
    tt = transition_time(bounds)
    if tt is not None:
        return PiecewiseSchedule(f, g, *tt)
    if f >= -g:
        return ExponentialSchedule(f, g, "f")
    return ExponentialSchedule(f, g, "g")


def schedule_from_dict(d: dict) -> Schedule:
    kind = d.get("kind")
    if kind == "trivial":
        return TrivialSchedule()
    if kind == "tabulated":
        return TabulatedSchedule(d["t"], d["tau"], d.get("tau_dot"))
    if kind in ("simple_f", "simple_g"):
        return ExponentialSchedule(d["f_star"], d["g_star"], kind[-1])
    if kind == "piecewise":
        return PiecewiseSchedule(d["f_star"], d["g_star"], d["t0"], d["tau0"])
    raise AdmissibilityError(f"unknown schedule kind {kind!r}")


def schedule_from_json(text: str) -> Schedule:
    return schedule_from_dict(json.loads(text))


__all__ = [
    "Schedule", "TrivialSchedule", "ExponentialSchedule", "PiecewiseSchedule",
    "TabulatedSchedule", "TrivialTransportWarning", "TrivialTransportError",
    "transition_time", "trivial_schedule", "optimal_schedule",
    "schedule_from_dict", "schedule_from_json",
]
