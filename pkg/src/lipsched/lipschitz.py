"""Uniform Lipschitz bound of a scheduled interpolation flow.

For a schedule ``tau`` the spatial Lipschitz constant of the velocity field at
time ``t`` is

    L(t) = tau_dot(t) * sup_s max{ |f(s) / (1 + tau f(s))|, |g(s) / (1 + tau g(s))| },

and the objective is ``Lambda[tau] = sup_t L(t)``.  Because ``x -> |x/(1+tau x)|``
is monotone on each side of zero, the spatial supremum only depends on
``f* = max f`` and ``g* = min g``; both the full-field and the reduced forms are
provided so each can check the other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .schedule import Schedule, optimal_schedule, transition_time, trivial_schedule
from .spectral import SpectralBounds, SpectralField, bounds_from_field
from .variational import reduced_sup

DEFAULT_N_TIME = 4096


def _bounds_of(obj) -> SpectralBounds:
    if isinstance(obj, SpectralBounds):
        return obj
    if isinstance(obj, SpectralField):
        return bounds_from_field(obj)
    return SpectralBounds(*obj)


def _field_sup(field: SpectralField, tau):
    """Spatial sup over the field samples, for each entry of ``tau``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    out = np.empty(tau.size)
    step = max(1, (1 << 21) // max(len(field), 1))
    for i in range(0, tau.size, step):
        x = tau[i:i + step, None]
        a = np.abs(field.f / (1.0 + x * field.f))
        b = np.abs(field.g / (1.0 + x * field.g))
        out[i:i + step] = np.maximum(a.max(axis=1), b.max(axis=1))
    return out


def _curve_fn(bounds_or_field, schedule: Schedule):
    if isinstance(bounds_or_field, SpectralField):
        fld = bounds_or_field

        def curve(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            return np.abs(schedule.deriv(t)) * _field_sup(fld, schedule.value(t))
    else:
        b = _bounds_of(bounds_or_field)

        def curve(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            return np.abs(schedule.deriv(t)) * reduced_sup(b.f_star, b.g_star, schedule.value(t))
    return curve


def _refined_sup(curve, n_time: int) -> float:
    """Grid maximum followed by a bounded scalar search around the argmax."""
    t = np.linspace(0.0, 1.0, n_time)
    vals = curve(t)
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo, hi = t[max(k - 1, 0)], t[min(k + 1, n_time - 1)]
    if hi > lo:
        res = minimize_scalar(lambda s: -float(curve(s)[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-13})
        best = max(best, -float(res.fun))
    return best


def lipschitz_curve(bounds_or_field, schedule: Schedule, n_time: int = 1001):
    """``(t, L(t))`` on a uniform time grid."""
    t = np.linspace(0.0, 1.0, n_time)
    return t, _curve_fn(bounds_or_field, schedule)(t)


def lambda_of_schedule(bounds, schedule: Schedule, n_time: int = DEFAULT_N_TIME) -> float:
    """``Lambda[tau]`` from the reduced (bounds-only) form."""
    return _refined_sup(_curve_fn(_bounds_of(bounds), schedule), n_time)


def lambda_of_schedule_field(field: SpectralField, schedule: Schedule,
                             n_time: int = DEFAULT_N_TIME) -> float:
    """``Lambda[tau]`` from the sup over the full (s, t) sample grid."""
    return _refined_sup(_curve_fn(field, schedule), n_time)


def lambda_trivial_closed(bounds) -> float:
    """``max{ sigma_max* - 1, (1 - sigma_min*) / sigma_min* }``."""
    b = _bounds_of(bounds)
    return max(b.f_star, -b.g_star / b.sigma_min)


def lambda_optimal_closed(bounds) -> float:
    """Optimal bound: the interior-transition formula when a transition time
    exists, otherwise ``ln sigma_max*`` or ``-ln sigma_min*``."""
    b = _bounds_of(bounds)
    if transition_time(b) is not None:
        smax, smin = b.sigma_max, b.sigma_min
        return (math.log((smax - 1.0) / smin)
                + math.log(0.25 * (1.0 / (1.0 - smin)
                                   + (1.0 - smin) / (smax - 1.0) ** 2
                                   + 2.0 / (smax - 1.0))))
    if b.sigma_max + b.sigma_min >= 2.0:
        return math.log1p(b.f_star)
    return -math.log1p(b.g_star)


@dataclass
class LipschitzReport:
    lambda_trivial: float
    lambda_optimal: float
    ratio: float
    lambda_of_input: Optional[float] = None
    bounds: Optional[SpectralBounds] = None
    curve: Optional[list] = dc_field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "lambda_trivial": self.lambda_trivial,
            "lambda_optimal": self.lambda_optimal,
            "lambda_of_input": self.lambda_of_input,
            "ratio": self.ratio,
        }
        if self.bounds is not None:
            d.update(self.bounds.to_dict())
        if self.curve is not None:
            d["curve"] = [[float(t), float(v)] for t, v in self.curve]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def report(bounds_or_field, schedule: Optional[Schedule] = None,
           n_time: int = DEFAULT_N_TIME, curve_points: int = 0) -> LipschitzReport:
    """Trivial vs optimal Lipschitz bounds, plus a user schedule if given."""
    b = _bounds_of(bounds_or_field)
    lt = lambda_trivial_closed(b)
    lo = lambda_optimal_closed(b)
    user = None
    curve = None
    if schedule is not None:
        user = lambda_of_schedule(b, schedule, n_time)
        if curve_points:
            curve = list(zip(*lipschitz_curve(bounds_or_field, schedule, curve_points)))
    return LipschitzReport(lt, lo, lt / lo, user, b, curve)


def random_monotone_schedule(rng: np.random.Generator, base: Optional[Schedule] = None,
                             n_knots: int = 12, weight: Optional[float] = None):
    """A random admissible schedule, optionally a convex blend with ``base``.

    The random part is a PCHIP through sorted uniform knots, so it is monotone
    and satisfies both boundary conditions.
    """
    from .schedule import TabulatedSchedule

    inner_t = np.unique(np.round(rng.uniform(0.01, 0.99, n_knots), 9))
    inner_tau = np.sort(rng.uniform(0.0, 1.0, inner_t.size))
    rand = TabulatedSchedule(np.concatenate([[0.0], inner_t, [1.0]]),
                             np.concatenate([[0.0], inner_tau, [1.0]]))
    if base is None:
        return rand
    w = rng.uniform(0.05, 0.5) if weight is None else weight
    t = np.linspace(0.0, 1.0, 2049)
    tau = (1 - w) * base.value(t) + w * rand.value(t)
    tau_dot = (1 - w) * base.deriv(t) + w * rand.deriv(t)
    tau[0], tau[-1] = 0.0, 1.0
    return TabulatedSchedule(t, tau, tau_dot)


__all__ = [
    "LipschitzReport", "lambda_of_schedule", "lambda_of_schedule_field",
    "lambda_trivial_closed", "lambda_optimal_closed", "lipschitz_curve", "report",
    "random_monotone_schedule", "optimal_schedule", "trivial_schedule",
]
