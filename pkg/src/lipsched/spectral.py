"""Spectral data of a transport map's Jacobian.

Every schedule formula in this package is driven by two functions on the
domain, the largest and smallest Jacobian eigenvalue minus one::

    f(s) = max_i sigma_i(s) - 1,    g(s) = min_i sigma_i(s) - 1,

and by their extreme values ``f_star = sup f`` and ``g_star = inf g``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError, TrivialTransportError

#: Below this magnitude everywhere, f and g are treated as identically zero.
ISOMETRY_TOL = 1e-14


@dataclass(frozen=True)
class SpectralBounds:
    """Extreme eigenvalue deviations ``f_star = sigma_max* - 1`` and
    ``g_star = sigma_min* - 1``."""

    f_star: float
    g_star: float

    def __post_init__(self):
        f, g = float(self.f_star), float(self.g_star)
        object.__setattr__(self, "f_star", f)
        object.__setattr__(self, "g_star", g)
        if not (np.isfinite(f) and np.isfinite(g)):
            raise AdmissibilityError(f"bounds must be finite, got ({f}, {g})")
        if g <= -1.0:
            raise AdmissibilityError(
                f"g_star must exceed -1 (positive definite Jacobian), got {g}")
        if g > f:
            raise AdmissibilityError(f"g_star={g} exceeds f_star={f}")
        if abs(f) < ISOMETRY_TOL and abs(g) < ISOMETRY_TOL:
            raise TrivialTransportError(
                "trivial transport: f_star = g_star = 0 (isometry)")

    @property
    def sigma_max(self) -> float:
        return self.f_star + 1.0

    @property
    def sigma_min(self) -> float:
        return self.g_star + 1.0

    def to_dict(self) -> dict:
        return {"f_star": self.f_star, "g_star": self.g_star}

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralBounds":
        return cls(float(d["f_star"]), float(d["g_star"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Sampled eigenvalue deviations on a discretized domain.

    ``weights`` are quadrature weights; their sum is the measure of the domain.
    """

    grid: np.ndarray
    f: np.ndarray
    g: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float).copy()
                  for a in (self.grid, self.f, self.g, self.weights)]
        n = arrays[0].shape
        if arrays[0].ndim != 1 or n[0] < 1 or any(a.shape != n for a in arrays):
            raise AdmissibilityError("grid, f, g, weights must be 1-D arrays of equal length")
        grid, f, g, w = arrays
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise AdmissibilityError("spectral field contains non-finite values")
        if np.any(f < g):
            raise AdmissibilityError("f must dominate g pointwise")
        if np.any(g <= -1.0):
            raise AdmissibilityError("g must exceed -1 everywhere (positive definite Jacobian)")
        if np.any(w <= 0.0):
            raise AdmissibilityError("quadrature weights must be strictly positive")
        for name, a in zip(("grid", "f", "g", "weights"), arrays):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self):
        return self.grid.size

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def is_isometry(self) -> bool:
        return bool(np.all(np.abs(self.f) < ISOMETRY_TOL)
                    and np.all(np.abs(self.g) < ISOMETRY_TOL))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "f", "g", "weight"])
        for row in zip(self.grid, self.f, self.g, self.weights):
            w.writerow([format(v, ".17g") for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SpectralField":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise AdmissibilityError("empty spectral field CSV")
        cols = {k: np.array([float(r[k]) for r in rows]) for k in ("s", "f", "g", "weight")}
        return cls(cols["s"], cols["f"], cols["g"], cols["weight"])


def trapezoid_weights(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform grid on [a, b] with composite-trapezoid weights."""
    if n < 2:
        raise ValueError("need at least two grid points")
    if not b > a:
        raise ValueError(f"empty interval [{a}, {b}]")
    s = np.linspace(a, b, n)
    w = np.full(n, (b - a) / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return s, w


def constant_field(f_value: float, g_value: float, omega=(0.0, 1.0), n: int = 2) -> SpectralField:
    s, w = trapezoid_weights(omega[0], omega[1], n)
    return SpectralField(s, np.full(n, float(f_value)), np.full(n, float(g_value)), w)


def bounds_from_field(field: SpectralField) -> SpectralBounds:
    """``f_star = max f``, ``g_star = min g`` over the sampled field."""
    if field.is_isometry():
        raise TrivialTransportError("trivial transport: spectral field vanishes identically")
    return SpectralBounds(float(field.f.max()), float(field.g.min()))


def bounds_from_potential(alpha: float, beta: float) -> SpectralBounds:
    """Bounds implied by ``alpha I <= Hess(phi) <= beta I`` for a Brenier
    potential ``phi``, taken with equality."""
    if not alpha > 0:
        raise AdmissibilityError(f"strong convexity constant must be positive, got {alpha}")
    if beta < alpha:
        raise AdmissibilityError(f"beta={beta} is smaller than alpha={alpha}")
    return SpectralBounds(beta - 1.0, alpha - 1.0)


def field_from_map1d(tmap, omega=None, n: int = 2001) -> SpectralField:
    """Spectral field of a scalar monotone map.

    In one dimension ``sigma_max = sigma_min = T'``, so ``f = g = T' - 1``.
    ``tmap`` needs a vectorized ``derivative`` method; ``omega`` defaults to
    the map's working domain.
    """
    if omega is None:
        omega = tmap.domain
    a, b = (float(v) for v in omega)
    if not (np.isfinite(a) and np.isfinite(b)):
        raise AdmissibilityError("field_from_map1d needs a bounded interval")
    s, w = trapezoid_weights(a, b, n)
    d = np.asarray(tmap.derivative(s), dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d <= 0.0):
        raise AdmissibilityError("map not admissible: derivative must be positive and finite on the grid")
    dev = d - 1.0
    meta = {"omega": [a, b]}
    if getattr(tmap, "delta", None) is not None:
        meta["delta"] = tmap.delta  # truncation level of the source quantile box
    return SpectralField(s, dev, dev.copy(), w, meta=meta)
