"""Distribution distances and estimators for the ergodicity and
discretization experiments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .rng import stream_generator

_SUBSAMPLE_SEED = 0x5731  # fixed stream for the documented unequal-size rule


@dataclass(frozen=True)
class SampleSet:
    """Uniformly weighted samples (n x d) with a provenance tag (scheme, time,
    seed of the run that produced them)."""

    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise ParameterError("SampleSet needs an (n, d) array with n >= 1")
        if not np.all(np.isfinite(v)):
            raise ParameterError("SampleSet values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _values_1d(s) -> np.ndarray:
    v = s.values if isinstance(s, SampleSet) else np.asarray(s, dtype=float)
    v = v.reshape(v.shape[0], -1) if v.ndim > 1 else v[:, None]
    if v.shape[1] != 1:
        raise ParameterError("w2_empirical_1d requires 1-d samples")
    return v[:, 0]


def _equalize(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Unequal sizes: deterministically subsample the larger without
    # replacement (fixed Philox stream keyed by both sizes).
    if a.size == b.size:
        return a, b
    gen = stream_generator(_SUBSAMPLE_SEED, a.size * 1000003 + b.size)
    if a.size > b.size:
        a = a[np.sort(gen.choice(a.size, size=b.size, replace=False))]
    else:
        b = b[np.sort(gen.choice(b.size, size=a.size, replace=False))]
    return a, b


def w2_empirical_1d(a, b) -> float:
    """Exact order-statistics Wasserstein-2 distance between two equal-size
    1-d sample multisets: sqrt(mean of squared sorted differences)."""
    x = _values_1d(a)
    y = _values_1d(b)
    if x.size == 0 or y.size == 0:
        raise ParameterError("w2_empirical_1d needs non-empty samples")
    x, y = _equalize(x, y)
    return float(np.sqrt(np.mean((np.sort(x) - np.sort(y)) ** 2)))


def sliced_w2(a, b, n_projections: int = 256, seed: int = 0) -> float:
    """Average 1-d W2 over uniformly random unit projection directions.

    A lower-bound-flavored multi-d proxy for W2 (never asserted equal to it);
    deterministic given the seed. Delegates to w2_empirical_1d for d = 1.
    """
    av = a.values if isinstance(a, SampleSet) else np.atleast_2d(np.asarray(a, float))
    bv = b.values if isinstance(b, SampleSet) else np.atleast_2d(np.asarray(b, float))
    if av.ndim == 1:
        av = av[:, None]
    if bv.ndim == 1:
        bv = bv[:, None]
    if av.shape[1] != bv.shape[1]:
        raise ParameterError("sample sets have different dimensions")
    d = av.shape[1]
    if d == 1:
        return w2_empirical_1d(av[:, 0], bv[:, 0])
    gen = stream_generator(seed, 0)
    total = 0.0
    for _ in range(n_projections):
        u = gen.standard_normal(d)
        u /= np.linalg.norm(u)
        total += w2_empirical_1d(av @ u, bv @ u)
    return total / n_projections


@dataclass(frozen=True)
class ContractionFit:
    slope: float
    intercept: float
    r_squared: float


def contraction_fit(coupled) -> ContractionFit:
    """Least-squares fit of ln E r(t) against t from a couple_paths batch.

    The slope is the empirical contraction exponent, comparable against the
    certified c_s (decoupled) or c_full. Accepts a CoupledBatch or a
    (times, r_sq) pair with r_sq shaped (n_paths, m).
    """
    if hasattr(coupled, "r_sq"):
        times = np.asarray(coupled.times, dtype=float)
        r_sq = np.asarray(coupled.r_sq, dtype=float)
    else:
        times, r_sq = coupled
        times = np.asarray(times, dtype=float)
        r_sq = np.atleast_2d(np.asarray(r_sq, dtype=float))
    if times.size < 5:
        raise ParameterError("contraction_fit needs >= 5 recorded times")
    mean_r = r_sq.mean(axis=0)
    if np.any(mean_r <= 0):
        raise ParameterError("degenerate coupling")
    y = np.log(mean_r)
    slope, intercept = np.polyfit(times, y, 1)
    resid = y - (slope * times + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return ContractionFit(slope=float(slope), intercept=float(intercept), r_squared=r2)


def empirical_moment(samples, order: int) -> np.ndarray:
    """Coordinate-wise mean of value^order (order 0 gives ones)."""
    v = samples.values if isinstance(samples, SampleSet) else np.asarray(samples, float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] == 0:
        raise ParameterError("empirical_moment needs non-empty samples")
    if order < 0:
        raise ParameterError("order must be >= 0")
    return np.mean(v**order, axis=0)
