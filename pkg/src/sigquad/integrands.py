"""Analytic test integrands on [0,1]^d with closed-form reference integrals.

Four families: axis-aligned Gaussian mixtures (smooth), the same mixtures
gated by one step discontinuity per dimension, sums of indicator boxes
(piecewise constant), and the oscillatory zone plate.  References for the
first three factor into normal-CDF differences or overlap volumes; the
zone plate reference is a refinement-checked midpoint quadrature, cached
and flagged as oracle-derived rather than analytic.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

__all__ = [
    "GaussianMixture",
    "SteppedGaussianMixture",
    "IndicatorBoxSum",
    "ZonePlate",
    "FAMILIES",
    "sample_family",
    "eval_integrand",
    "reference_integral",
    "spec_to_dict",
    "spec_from_dict",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _as_points(x, d: int) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got {pts.shape[1]}")
    return pts, single


def _full_box(d: int):
    return np.zeros(d), np.ones(d)


@dataclass(frozen=True)
class GaussianMixture:
    """Sum of axis-aligned Gaussian densities: weights, means (c,d), scales (c,d)."""

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        weights = np.atleast_1d(np.array(self.weights, dtype=np.float64))
        means = np.atleast_2d(np.array(self.means, dtype=np.float64))
        scales = np.atleast_2d(np.array(self.scales, dtype=np.float64))
        if means.shape != scales.shape or means.shape[0] != weights.size:
            raise ValueError("weights, means and scales must agree in component count")
        if np.any(scales <= 0):
            raise ValueError("scales must be positive")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        for arr in (weights, means, scales):
            arr.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def evaluate(self, x):
        pts, single = _as_points(x, self.d)
        z = (pts[:, None, :] - self.means) / self.scales
        log_norm = np.log(self.scales * _SQRT_2PI).sum(axis=1)
        vals = np.exp(-0.5 * (z * z).sum(axis=2) - log_norm) @ self.weights
        return float(vals[0]) if single else vals

    def reference(self, lower=None, upper=None) -> float:
        if lower is None:
            lower, upper = _full_box(self.d)
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        hi = ndtr((upper - self.means) / self.scales)
        lo = ndtr((lower - self.means) / self.scales)
        return float(self.weights @ np.prod(hi - lo, axis=1))


@dataclass(frozen=True)
class SteppedGaussianMixture:
    """Gaussian mixture gated by a unit step per dimension (d discontinuities)."""

    base: GaussianMixture
    thresholds: np.ndarray

    def __post_init__(self):
        thresholds = np.atleast_1d(np.array(self.thresholds, dtype=np.float64))
        if thresholds.shape != (self.base.d,):
            raise ValueError("need one threshold per dimension")
        thresholds.flags.writeable = False
        object.__setattr__(self, "thresholds", thresholds)

    @property
    def d(self) -> int:
        return self.base.d

    def evaluate(self, x):
        pts, single = _as_points(x, self.d)
        vals = np.atleast_1d(self.base.evaluate(pts)) * np.all(pts >= self.thresholds, axis=1)
        return float(vals[0]) if single else vals

    def reference(self, lower=None, upper=None) -> float:
        if lower is None:
            lower, upper = _full_box(self.d)
        lower = np.maximum(np.asarray(lower, dtype=np.float64), self.thresholds)
        upper = np.asarray(upper, dtype=np.float64)
        if np.any(lower >= upper):
            return 0.0
        return self.base.reference(lower, upper)


@dataclass(frozen=True)
class IndicatorBoxSum:
    """Weighted sum of box indicator functions."""

    weights: np.ndarray
    lowers: np.ndarray
    uppers: np.ndarray

    def __post_init__(self):
        weights = np.atleast_1d(np.array(self.weights, dtype=np.float64))
        lowers = np.atleast_2d(np.array(self.lowers, dtype=np.float64))
        uppers = np.atleast_2d(np.array(self.uppers, dtype=np.float64))
        if lowers.shape != uppers.shape or lowers.shape[0] != weights.size:
            raise ValueError("weights, lowers and uppers must agree in box count")
        if np.any(lowers >= uppers):
            raise ValueError("boxes must have positive extent in every dimension")
        for arr in (weights, lowers, uppers):
            arr.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "lowers", lowers)
        object.__setattr__(self, "uppers", uppers)

    @property
    def d(self) -> int:
        return self.lowers.shape[1]

    def evaluate(self, x):
        pts, single = _as_points(x, self.d)
        inside = np.all(
            (pts[:, None, :] >= self.lowers) & (pts[:, None, :] <= self.uppers), axis=2
        )
        vals = inside @ self.weights
        return float(vals[0]) if single else vals

    def reference(self, lower=None, upper=None) -> float:
        if lower is None:
            lower, upper = _full_box(self.d)
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        overlap = np.clip(np.minimum(self.uppers, upper) - np.maximum(self.lowers, lower), 0.0, None)
        return float(self.weights @ np.prod(overlap, axis=1))


@dataclass(frozen=True)
class ZonePlate:
    """Oscillatory radial pattern (1 + cos(freq * x.x)) / 2 in [0,1]."""

    frequency: float = 220.0
    d: int = 2

    def evaluate(self, x):
        pts, single = _as_points(x, self.d)
        vals = 0.5 * (1.0 + np.cos(self.frequency * (pts * pts).sum(axis=1)))
        return float(vals[0]) if single else vals

    def reference(self, lower=None, upper=None) -> float:
        """Refinement-checked quadrature value (oracle-derived, not analytic).

        cos(freq * sum x_j^2) separates as Re prod_j exp(i freq x_j^2), so
        only 1D midpoint integrals are refined.
        """
        if lower is None:
            lower, upper = _full_box(self.d)
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        phase = complex(1.0, 0.0)
        for j in range(self.d):
            phase *= _fresnel_segment(self.frequency, float(lower[j]), float(upper[j]))
        volume = float(np.prod(upper - lower))
        return 0.5 * volume + 0.5 * phase.real


@functools.lru_cache(maxsize=4096)
def _fresnel_segment(freq: float, a: float, b: float) -> complex:
    """integral_a^b exp(i freq t^2) dt by doubling midpoint + Richardson."""
    previous = None
    n = 256
    while n <= 2 ** 22:
        t = a + (np.arange(n) + 0.5) * (b - a) / n
        val = np.exp(1j * freq * t * t).sum() * (b - a) / n
        if previous is not None:
            extrapolated = val + (val - previous) / 3.0
            if abs(val - previous) < 1e-12 * max(1.0, abs(val)):
                return complex(extrapolated)
            previous = val
        else:
            previous = val
        n *= 2
    return complex(previous)


FAMILIES = ("gm", "gmd", "hr", "zoneplate")

# Parameter distributions for randomly sampled family instances.
_GM_COMPONENTS = (5, 40)
_GM_WEIGHT_RANGE = (0.5, 1.5)
_GM_SCALE_RANGE = (0.03, 0.2)
_GMD_THRESHOLD_RANGE = (0.1, 0.9)
_HR_BOXES = (10, 50)
_HR_MIN_SIDE = 0.05


def _sample_gm(d: int, rng) -> GaussianMixture:
    c = int(rng.integers(_GM_COMPONENTS[0], _GM_COMPONENTS[1] + 1))
    return GaussianMixture(
        weights=rng.uniform(*_GM_WEIGHT_RANGE, size=c),
        means=rng.uniform(0.0, 1.0, size=(c, d)),
        scales=rng.uniform(*_GM_SCALE_RANGE, size=(c, d)),
    )


def _sample_hr(d: int, rng) -> IndicatorBoxSum:
    m = int(rng.integers(_HR_BOXES[0], _HR_BOXES[1] + 1))
    c1 = rng.uniform(0.0, 1.0, size=(m, d))
    c2 = rng.uniform(0.0, 1.0, size=(m, d))
    lowers = np.minimum(c1, c2)
    uppers = np.maximum(c1, c2)
    narrow = uppers - lowers < _HR_MIN_SIDE
    uppers = np.where(narrow, np.minimum(lowers + _HR_MIN_SIDE, 1.0), uppers)
    lowers = np.where(narrow & (uppers - lowers < _HR_MIN_SIDE), uppers - _HR_MIN_SIDE, lowers)
    return IndicatorBoxSum(weights=np.ones(m), lowers=lowers, uppers=uppers)


def sample_family(family: str, d: int, seed: int):
    """Deterministic random instance of a named integrand family."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    rng = np.random.default_rng(seed)
    family = family.lower()
    if family == "gm":
        return _sample_gm(d, rng)
    if family == "gmd":
        return SteppedGaussianMixture(
            base=_sample_gm(d, rng),
            thresholds=rng.uniform(*_GMD_THRESHOLD_RANGE, size=d),
        )
    if family == "hr":
        return _sample_hr(d, rng)
    if family == "zoneplate":
        return ZonePlate(frequency=220.0, d=d)
    raise ValueError(f"unknown integrand family: {family!r}")


def eval_integrand(spec, x):
    return spec.evaluate(x)


def reference_integral(spec, lower=None, upper=None) -> float:
    """Reference integral of an integrand over a box (default: full [0,1]^d)."""
    return spec.reference(lower, upper)


def spec_to_dict(spec) -> dict:
    if isinstance(spec, GaussianMixture):
        return {
            "family": "gm",
            "weights": spec.weights.tolist(),
            "means": spec.means.tolist(),
            "scales": spec.scales.tolist(),
        }
    if isinstance(spec, SteppedGaussianMixture):
        doc = spec_to_dict(spec.base)
        return {"family": "gmd", "base": doc, "thresholds": spec.thresholds.tolist()}
    if isinstance(spec, IndicatorBoxSum):
        return {
            "family": "hr",
            "weights": spec.weights.tolist(),
            "lowers": spec.lowers.tolist(),
            "uppers": spec.uppers.tolist(),
        }
    if isinstance(spec, ZonePlate):
        return {"family": "zoneplate", "frequency": spec.frequency, "d": spec.d}
    raise TypeError(f"not an integrand spec: {type(spec).__name__}")


def spec_from_dict(doc: dict):
    family = doc["family"]
    if family == "gm":
        return GaussianMixture(weights=doc["weights"], means=doc["means"], scales=doc["scales"])
    if family == "gmd":
        return SteppedGaussianMixture(base=spec_from_dict(doc["base"]), thresholds=doc["thresholds"])
    if family == "hr":
        return IndicatorBoxSum(weights=doc["weights"], lowers=doc["lowers"], uppers=doc["uppers"])
    if family == "zoneplate":
        return ZonePlate(frequency=float(doc["frequency"]), d=int(doc["d"]))
    raise ValueError(f"unknown integrand family: {family!r}")
