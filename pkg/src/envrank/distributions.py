"""Per-feature binned distributions and distances between them.

Bin edges are shared across environments (pooled over all train samples per
feature) so that cross-environment CDF comparisons are well defined. Values
outside the trained range clamp to the end bins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from envrank.data import Dataset

DEFAULT_BINS = 100
DEFAULT_KL_EPS = 1e-6


@dataclass(frozen=True)
class BinningScheme:
    """Uniform per-feature bin edges: ``edges[f]`` has ``bins + 1`` strictly
    increasing entries spanning the pooled train range of feature ``f``."""

    edges: np.ndarray  # (n_features, bins + 1)
    bins: int

    def __post_init__(self):
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=np.float64))
        if self.edges.ndim != 2 or self.edges.shape[1] != self.bins + 1:
            raise ValueError(
                f"edges shape {self.edges.shape} inconsistent with bins={self.bins}"
            )

    @cached_property
    def lo(self) -> np.ndarray:
        return self.edges[:, 0]

    @cached_property
    def width(self) -> np.ndarray:
        return (self.edges[:, -1] - self.edges[:, 0]) / self.bins


@dataclass(frozen=True)
class Histogram:
    """Binned empirical distribution of one feature in one environment."""

    mass: np.ndarray
    edges: np.ndarray
    support_count: int
    feature: int = -1
    env: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mass", np.asarray(self.mass, dtype=np.float64))
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=np.float64))
        if self.mass.ndim != 1 or self.edges.ndim != 1:
            raise ValueError("mass and edges must be 1-D")
        if self.edges.size != self.mass.size + 1:
            raise ValueError("edges must have exactly one more entry than mass")
        if self.support_count < 1:
            raise ValueError("support_count must be >= 1")
        if abs(float(self.mass.sum()) - 1.0) > 1e-9:
            raise ValueError("histogram mass must sum to 1")

    @property
    def bins(self) -> int:
        return self.mass.size

    @property
    def width(self) -> float:
        return float(self.edges[-1] - self.edges[0]) / self.bins


def make_binning(dataset: Dataset, bins: int = DEFAULT_BINS) -> BinningScheme:
    """Build uniform per-feature edges spanning the pooled train min/max.

    A constant feature gets a synthetic width-1 span centered on its value.
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    train = dataset.split_values("train")
    if train.shape[0] == 0:
        raise ValueError("train split is empty")
    lo = train.min(axis=0)
    hi = train.max(axis=0)
    degenerate = lo == hi
    lo = np.where(degenerate, lo - 0.5, lo)
    hi = np.where(degenerate, hi + 0.5, hi)
    edges = np.linspace(lo, hi, num=bins + 1, axis=1)
    return BinningScheme(edges=edges, bins=bins)


def _bin_codes(values: np.ndarray, lo, width, bins: int) -> np.ndarray:
    """Bin index floor((v - lo) / width), clamped to [0, bins - 1]."""
    idx = np.floor((values - lo) / width)
    return np.clip(idx, 0, bins - 1).astype(np.intp)


def build_histogram(values, edges) -> Histogram:
    """Bin ``values`` with the given edges; mass is counts / total."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("cannot build a histogram from zero values")
    edges = np.asarray(edges, dtype=np.float64)
    bins = edges.size - 1
    width = float(edges[-1] - edges[0]) / bins
    if width <= 0:
        raise ValueError("edges must be strictly increasing")
    codes = _bin_codes(values, float(edges[0]), width, bins)
    counts = np.bincount(codes, minlength=bins)
    return Histogram(
        mass=counts / values.size, edges=edges, support_count=int(values.size)
    )


def binned_env_counts(
    dataset: Dataset, binning: BinningScheme
) -> tuple[tuple[str, ...], np.ndarray]:
    """Per-(environment, feature, bin) train counts under the shared binning.

    Returns the sorted train environment names and an integer array of shape
    (n_envs, n_features, bins).
    """
    train_mask = dataset.split_mask("train")
    train = dataset.values[train_mask]
    envs = dataset.train_envs
    env_col = dataset.env_array[train_mask]
    codes = _bin_codes(train, binning.lo[None, :], binning.width[None, :], binning.bins)
    counts = np.zeros((len(envs), dataset.n_features, binning.bins), dtype=np.int64)
    for e, env in enumerate(envs):
        sub = codes[env_col == env]
        for f in range(dataset.n_features):
            counts[e, f] = np.bincount(sub[:, f], minlength=binning.bins)
    return envs, counts


def _check_same_binning(a: Histogram, b: Histogram) -> None:
    if a.mass.size != b.mass.size or not np.array_equal(a.edges, b.edges):
        raise ValueError("histograms use different binning")


def w1_from_mass(mass_a: np.ndarray, mass_b: np.ndarray, width) -> np.ndarray:
    """Wasserstein-1 between mass vectors on shared uniform bins.

    Exact for distributions supported on the bin representatives:
    width * sum_k |CDF_a(k) - CDF_b(k)|. Broadcasts over leading axes.
    """
    cdf_diff = np.cumsum(mass_a - mass_b, axis=-1)
    return width * np.abs(cdf_diff).sum(axis=-1)


def wasserstein1_hist(a: Histogram, b: Histogram) -> float:
    """W1 distance between two histograms sharing the same edges."""
    _check_same_binning(a, b)
    return float(w1_from_mass(a.mass, b.mass, a.width))


def sym_kl_from_mass(
    mass_a: np.ndarray, mass_b: np.ndarray, eps: float
) -> np.ndarray:
    """Symmetric KL (nats) between eps-smoothed mass vectors.

    Smoothing: p~ = (p + eps) / (1 + bins * eps), likewise for q.
    Broadcasts over leading axes.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    bins = mass_a.shape[-1]
    p = (mass_a + eps) / (1.0 + bins * eps)
    q = (mass_b + eps) / (1.0 + bins * eps)
    log_ratio = np.log(p) - np.log(q)
    return ((p - q) * log_ratio).sum(axis=-1)


def symmetric_kl(a: Histogram, b: Histogram, eps: float = DEFAULT_KL_EPS) -> float:
    """KL(p~||q~) + KL(q~||p~) on eps-smoothed histograms with shared edges."""
    _check_same_binning(a, b)
    return float(sym_kl_from_mass(a.mass, b.mass, eps))


def wasserstein1_exact(a, b) -> float:
    """Exact W1 between two empirical samples of any (unequal) sizes.

    Integrates |Qa(t) - Qb(t)| over t in (0, 1) by walking the merged
    quantile breakpoints {i/n} and {j/m}; breakpoint comparisons use integer
    cross-multiplication, so segment boundaries are exact.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")
    ia = ib = 0
    prev = 0.0
    total = 0.0
    while ia < n and ib < m:
        gap = abs(float(a[ia]) - float(b[ib]))
        ca = (ia + 1) * m
        cb = (ib + 1) * n
        nxt = (ia + 1) / n if ca <= cb else (ib + 1) / m
        total += (nxt - prev) * gap
        if ca <= cb:
            ia += 1
        if cb <= ca:
            ib += 1
        prev = nxt
    return total
