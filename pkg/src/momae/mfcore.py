"""Intensity histograms, partition functions, Renyi entropy and scaling exponents.

The analysis bins the *codomain* of a pixel collection: intensities are grouped
into N_s = floor(G / s) bins of even spacing s over G intensity levels. From the
bin probabilities p_j the q-th moment partition function Z = sum_j p_j^q and the
Renyi entropy R = ln(Z) / (1 - q) are computed (natural log throughout; q = 1
falls back to Shannon entropy). The scaling exponent tau(q) is the slope of
ln Z against ln s across spacings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError

DEFAULT_LEVELS = 255

# Orders closer to 1 than this use the Shannon branch instead of ln(Z)/(1-q).
Q_TOL = 1e-9


@dataclass(frozen=True)
class IntensityHistogram:
    """Bin counts of a pixel collection at codomain spacing ``spacing``."""

    counts: np.ndarray
    spacing: int
    levels: int

    @property
    def n_bins(self) -> int:
        return self.levels // self.spacing

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ProbabilityDistribution:
    """Normalized bin probabilities; entries are >= 0 and sum to 1."""

    probs: np.ndarray

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.probs > 0.0))


@dataclass(frozen=True)
class RenyiResult:
    """Renyi entropy of order ``q`` at spacing ``s``, plus the partition value."""

    q: float
    s: int
    z: float
    entropy: float


@dataclass(frozen=True)
class TauEstimate:
    """Fitted scaling exponent of ln Z against ln s."""

    q: float
    tau: float
    scales: tuple[int, ...]
    r_squared: float


def build_histogram(
    pixels: Sequence[int] | np.ndarray, s: int, levels: int = DEFAULT_LEVELS
) -> IntensityHistogram:
    """Bin integer intensities into N_s = floor(levels / s) evenly spaced bins.

    Bin j (1-based) covers intensities (j-1)*s + 1 .. j*s. Intensity 0 is
    clamped into bin 1 and intensities above N_s * s into bin N_s, so no pixel
    is discarded.
    """
    if s < 1 or levels < 1:
        raise InvalidArgumentError(f"spacing and levels must be positive, got s={s}, levels={levels}")
    if s > levels:
        raise InvalidArgumentError(f"spacing s={s} exceeds intensity levels G={levels}")
    arr = np.asarray(pixels, dtype=np.int64).ravel()
    if arr.size == 0:
        raise DegenerateInputError("cannot build a histogram from an empty pixel collection")
    if arr.min() < 0 or arr.max() > levels:
        raise InvalidArgumentError(
            f"intensities must lie in [0, {levels}], got range [{arr.min()}, {arr.max()}]"
        )
    n_bins = levels // s
    # ceil(v / s) for non-negative ints, with 0 pulled up into bin 1.
    idx = (arr + s - 1) // s
    np.maximum(idx, 1, out=idx)
    np.minimum(idx, n_bins, out=idx)
    counts = np.bincount(idx - 1, minlength=n_bins)
    return IntensityHistogram(counts=counts, spacing=s, levels=levels)


def normalize(hist: IntensityHistogram) -> ProbabilityDistribution:
    """Turn bin counts into probabilities p_j = y_j / total."""
    total = hist.total
    if total == 0:
        raise DegenerateInputError("histogram has zero total count")
    probs = hist.counts.astype(np.float64) / float(total)
    return ProbabilityDistribution(probs=probs)


def partition_function(dist: ProbabilityDistribution, q: float) -> float:
    """q-th moment partition function Z = sum of p_j^q over positive bins.

    Zero-probability bins never contribute (0^q is excluded for every q, which
    keeps Z finite for q <= 0). Z is exactly 1 at q = 1 by normalization.
    """
    if q == 1.0:
        return 1.0
    p = dist.probs[dist.probs > 0.0]
    return float(np.sum(p**q))


def shannon_entropy(dist: ProbabilityDistribution) -> float:
    """Shannon entropy -sum p ln p over strictly positive entries, in nats."""
    p = dist.probs[dist.probs > 0.0]
    h = float(-np.sum(p * np.log(p)))
    return max(h, 0.0)


def renyi_entropy(dist: ProbabilityDistribution, q: float, s: int) -> RenyiResult:
    """Renyi entropy of order q: ln(Z) / (1 - q), Shannon in the q -> 1 limit."""
    z = partition_function(dist, q)
    if abs(q - 1.0) <= Q_TOL:
        entropy = shannon_entropy(dist)
    else:
        entropy = math.log(z) / (1.0 - q) + 0.0  # + 0.0 normalizes -0.0
        if q >= 0.0 and -1e-9 < entropy < 0.0:
            # Mathematically >= 0 for q >= 0; clear float residue near 0.
            entropy = 0.0
    return RenyiResult(q=q, s=s, z=z, entropy=entropy)


def fit_scaling_exponent(
    scales: Sequence[int], z_values: Sequence[float], q: float
) -> TauEstimate:
    """Least-squares slope of ln z against ln s, with its R^2.

    A zero-variance set of ln z values (e.g. a constant image, where Z = 1 at
    every scale) is an exact fit of a constant: tau = 0, R^2 = 1.
    """
    scale_list = sorted(set(int(s) for s in scales))
    if len(scale_list) < 2:
        raise InvalidArgumentError(f"need at least 2 distinct scales, got {scale_list}")
    if len(scale_list) != len(list(scales)):
        raise InvalidArgumentError("scales must be distinct")
    x = np.log(np.asarray(scale_list, dtype=np.float64))
    y = np.log(np.asarray(z_values, dtype=np.float64))
    if y.shape != x.shape:
        raise InvalidArgumentError(
            f"got {y.size} partition values for {x.size} scales"
        )
    xc = x - x.mean()
    yc = y - y.mean()
    ss_tot = float(np.sum(yc * yc))
    if ss_tot == 0.0:
        return TauEstimate(q=q, tau=0.0, scales=tuple(scale_list), r_squared=1.0)
    slope = float(np.sum(xc * yc) / np.sum(xc * xc))
    residuals = yc - slope * xc
    r_squared = 1.0 - float(np.sum(residuals * residuals)) / ss_tot
    return TauEstimate(q=q, tau=slope, scales=tuple(scale_list), r_squared=min(max(r_squared, 0.0), 1.0))


def estimate_tau(
    pixels: Sequence[int] | np.ndarray,
    scales: Sequence[int],
    q: float,
    levels: int = DEFAULT_LEVELS,
) -> TauEstimate:
    """Estimate the scaling exponent tau(q) of a pixel collection.

    Computes Z at each spacing in ``scales`` and fits ln Z ~ tau * ln s.
    Undefined at q = 1 where Z is identically 1.
    """
    if abs(q - 1.0) <= Q_TOL:
        raise InvalidArgumentError("tau is undefined at q = 1 (Z is identically 1)")
    scale_list = sorted(set(int(s) for s in scales))
    if len(scale_list) < 2:
        raise InvalidArgumentError(f"need at least 2 distinct scales, got {scale_list}")
    for s in scale_list:
        if s > levels:
            raise InvalidArgumentError(f"scale {s} exceeds intensity levels {levels}")
    z_values = [
        partition_function(normalize(build_histogram(pixels, s, levels)), q)
        for s in scale_list
    ]
    return fit_scaling_exponent(scale_list, z_values, q)
