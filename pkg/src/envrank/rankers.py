"""Per-feature environment-bias scoring.

Every ranker returns a :class:`Ranking` normalized to a single drop
convention: ``order[0]`` is the first feature to remove. Environment-aware
rankers drop high raw scores (most environment-biased first); the
informativeness rankers (MAD, dispersion, variance, PCA loadings) drop the
least informative features first, so their stored scores are the negated
raw statistic.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from envrank.data import Dataset
from envrank.distributions import (
    DEFAULT_BINS,
    DEFAULT_KL_EPS,
    BinningScheme,
    binned_env_counts,
    make_binning,
    sym_kl_from_mass,
    w1_from_mass,
)

DISTANCES = ("wasserstein", "sym_kl")
AGGREGATIONS = ("mean", "median", "median_ranking", "weighted_mean_ranking")
RANKERS = (
    "stylist",
    "env_infogain",
    "env_fisher",
    "mad",
    "dispersion",
    "variance",
    "pca_loadings",
)

# Fisher score when within-environment variance vanishes but means differ.
_FISHER_SENTINEL = 1e18


@dataclass(frozen=True)
class PairDistanceTable:
    """Distance between per-environment feature distributions, for every
    unordered pair of train environments (lexicographic pair order)."""

    pairs: tuple[tuple[str, str], ...]
    dist: np.ndarray  # (n_pairs, n_features)

    def __post_init__(self):
        object.__setattr__(self, "dist", np.asarray(self.dist, dtype=np.float64))
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        if self.dist.ndim != 2 or self.dist.shape[0] != len(self.pairs):
            raise ValueError("dist must be (n_pairs, n_features)")
        if self.dist.size and (not np.isfinite(self.dist).all() or self.dist.min() < 0):
            raise ValueError("distances must be finite and non-negative")


@dataclass(frozen=True)
class Ranking:
    """Per-feature bias scores plus the drop order they induce.

    ``order`` sorts features by score descending, ties broken by ascending
    feature index; higher score means more environment-biased, so
    ``order[0]`` is dropped first.
    """

    scores: np.ndarray
    order: np.ndarray
    method: str
    direction_note: str = "higher score = more environment-biased"

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        object.__setattr__(self, "order", np.asarray(self.order, dtype=np.intp))
        n = self.scores.size
        if self.order.size != n or not np.array_equal(np.sort(self.order), np.arange(n)):
            raise ValueError("order must be a permutation of feature indices")
        ordered = self.scores[self.order]
        if n > 1 and np.any(ordered[:-1] < ordered[1:]):
            raise ValueError("scores must be non-increasing along order")

    @property
    def n_features(self) -> int:
        return self.scores.size

    @classmethod
    def from_scores(cls, scores: np.ndarray, method: str) -> "Ranking":
        scores = np.asarray(scores, dtype=np.float64)
        order = np.argsort(-scores, kind="stable")
        return cls(scores=scores, order=order, method=method)


def pairwise_distances(
    dataset: Dataset,
    binning: BinningScheme,
    distance: str = "wasserstein",
    eps: float = DEFAULT_KL_EPS,
) -> PairDistanceTable:
    """Distance between the two per-environment histograms of every feature,
    for every unordered pair of train environments."""
    if distance not in DISTANCES:
        raise ValueError(f"unknown distance {distance!r}; expected one of {DISTANCES}")
    envs, counts = binned_env_counts(dataset, binning)
    totals = counts.sum(axis=2)  # (n_envs, n_features), constant per env
    mass = counts / totals[:, :, None]
    pairs = tuple(itertools.combinations(envs, 2))
    index = {env: i for i, env in enumerate(envs)}
    dist = np.empty((len(pairs), dataset.n_features), dtype=np.float64)
    for p, (ea, eb) in enumerate(pairs):
        ma, mb = mass[index[ea]], mass[index[eb]]
        if distance == "wasserstein":
            dist[p] = w1_from_mass(ma, mb, binning.width)
        else:
            dist[p] = sym_kl_from_mass(ma, mb, eps)
    return PairDistanceTable(pairs=pairs, dist=dist)


def _descending_ranks(row: np.ndarray) -> np.ndarray:
    """1-based rank of each feature when sorting ``row`` descending,
    ties broken by ascending feature index."""
    order = np.argsort(-row, kind="stable")
    ranks = np.empty(row.size, dtype=np.float64)
    ranks[order] = np.arange(1, row.size + 1)
    return ranks


def stylist_scores(table: PairDistanceTable, aggregation: str = "mean") -> Ranking:
    """Aggregate per-pair distribution distances into one bias score per
    feature.

    mean / median reduce the raw distances; median_ranking and
    weighted_mean_ranking reduce each pair's descending rank positions
    (negated so that higher score still means more biased). Weights for
    weighted_mean_ranking are each pair's share of the total distance mass.
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(
            f"unknown aggregation {aggregation!r}; expected one of {AGGREGATIONS}"
        )
    if table.dist.shape[0] == 0:
        raise ValueError("pair distance table is empty")
    if aggregation == "mean":
        scores = table.dist.mean(axis=0)
    elif aggregation == "median":
        scores = np.median(table.dist, axis=0)
    else:
        ranks = np.vstack([_descending_ranks(row) for row in table.dist])
        if aggregation == "median_ranking":
            scores = -np.median(ranks, axis=0)
        else:
            pair_mass = table.dist.sum(axis=1)
            total = pair_mass.sum()
            if total > 0:
                weights = pair_mass / total
            else:
                weights = np.full(len(table.pairs), 1.0 / len(table.pairs))
            scores = -(weights[:, None] * ranks).sum(axis=0)
    return Ranking.from_scores(scores, method=f"stylist:{aggregation}")


def env_infogain_scores(
    dataset: Dataset, binning: BinningScheme | None = None
) -> Ranking:
    """Plug-in mutual information (nats) between the binned feature value and
    the train environment label; higher = more environment-biased."""
    if binning is None:
        binning = make_binning(dataset)
    envs, counts = binned_env_counts(dataset, binning)
    total = counts[:, 0, :].sum()
    joint = counts / total  # (envs, features, bins)
    p_bin = joint.sum(axis=0)  # (features, bins)
    p_env = joint.sum(axis=2)[:, :1]  # (envs, 1), identical per feature
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.log(joint) - np.log(p_bin[None, :, :]) - np.log(p_env[:, :, None])
    terms = np.where(joint > 0, joint * log_term, 0.0)
    scores = terms.sum(axis=(0, 2))
    return Ranking.from_scores(scores, method="env_infogain")


def env_fisher_scores(dataset: Dataset) -> Ranking:
    """Between-environment over within-environment variance ratio
    (population within-env variance); higher = more environment-biased."""
    train_mask = dataset.split_mask("train")
    train = dataset.values[train_mask]
    env_col = dataset.env_array[train_mask]
    envs = dataset.train_envs
    grand = train.mean(axis=0)
    num = np.zeros(dataset.n_features)
    den = np.zeros(dataset.n_features)
    for env in envs:
        sub = train[env_col == env]
        if sub.shape[0] < 2:
            raise ValueError(
                f"environment {env!r} has {sub.shape[0]} train samples, needs >= 2"
            )
        mu = sub.mean(axis=0)
        num += sub.shape[0] * (mu - grand) ** 2
        den += sub.shape[0] * sub.var(axis=0)
    scores = np.zeros(dataset.n_features)
    ok = den > 0
    scores[ok] = num[ok] / den[ok]
    scores[(~ok) & (num > 0)] = _FISHER_SENTINEL
    return Ranking.from_scores(scores, method="env_fisher")


def mad_scores(dataset: Dataset) -> Ranking:
    """Mean absolute deviation from the train mean, negated so the least
    discriminative feature (lowest MAD) is dropped first."""
    train = dataset.split_values("train")
    if train.shape[0] == 0:
        raise ValueError("train split is empty")
    mad = np.abs(train - train.mean(axis=0)).mean(axis=0)
    return Ranking.from_scores(-mad, method="mad")


def dispersion_scores(dataset: Dataset) -> Ranking:
    """Arithmetic-to-geometric mean ratio of min-shifted train values
    (shift maps the minimum to 1), negated so low dispersion drops first."""
    train = dataset.split_values("train")
    if train.shape[0] == 0:
        raise ValueError("train split is empty")
    shifted = train + (1.0 - train.min(axis=0))
    am = shifted.mean(axis=0)
    gm = np.exp(np.log(shifted).mean(axis=0))
    return Ranking.from_scores(-(am / gm), method="dispersion")


def variance_scores(dataset: Dataset) -> Ranking:
    """Population variance over train, negated so low variance drops first."""
    train = dataset.split_values("train")
    if train.shape[0] == 0:
        raise ValueError("train split is empty")
    return Ranking.from_scores(-train.var(axis=0), method="variance")


def pca_loading_scores(dataset: Dataset, components: int | None = None) -> Ranking:
    """Explained-variance-weighted squared loadings over the leading
    principal components of the train covariance, negated so the feature
    contributing least is dropped first.

    ``components=None`` keeps the smallest set reaching 95% cumulative
    explained variance.
    """
    train = dataset.split_values("train")
    if train.shape[0] < 2:
        raise ValueError("PCA loadings need at least 2 train samples")
    d = dataset.n_features
    if components is not None and not (1 <= components <= d):
        raise ValueError(f"components must be in [1, {d}], got {components}")
    centered = train - train.mean(axis=0)
    cov = centered.T @ centered / train.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.maximum(eigvals[::-1], 0.0)
    eigvecs = eigvecs[:, ::-1]
    total = eigvals.sum()
    if total <= 0:
        return Ranking.from_scores(np.zeros(d), method="pca_loadings")
    if components is None:
        frac = np.cumsum(eigvals) / total
        components = int(np.searchsorted(frac, 0.95) + 1)
    lam = eigvals[:components]
    contrib = (lam[None, :] * eigvecs[:, :components] ** 2).sum(axis=1) / lam.sum()
    return Ranking.from_scores(-contrib, method="pca_loadings")


@dataclass(frozen=True)
class RankerSpec:
    """Everything needed to run one ranker on a dataset."""

    name: str = "stylist"
    distance: str = "wasserstein"
    aggregation: str = "mean"
    bins: int = DEFAULT_BINS
    kl_eps: float = DEFAULT_KL_EPS
    pca_components: int | None = None

    def __post_init__(self):
        if self.name not in RANKERS:
            raise ValueError(f"unknown ranker {self.name!r}; expected one of {RANKERS}")
        if self.distance not in DISTANCES:
            raise ValueError(
                f"unknown distance {self.distance!r}; expected one of {DISTANCES}"
            )
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(
                f"unknown aggregation {self.aggregation!r}; "
                f"expected one of {AGGREGATIONS}"
            )
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")
        if self.kl_eps <= 0:
            raise ValueError(f"kl_eps must be positive, got {self.kl_eps}")


def compute_ranking(dataset: Dataset, spec: RankerSpec) -> Ranking:
    """Run the ranker described by ``spec`` on the dataset's train split."""
    if spec.name == "stylist":
        binning = make_binning(dataset, spec.bins)
        table = pairwise_distances(dataset, binning, spec.distance, eps=spec.kl_eps)
        return stylist_scores(table, spec.aggregation)
    if spec.name == "env_infogain":
        return env_infogain_scores(dataset, make_binning(dataset, spec.bins))
    if spec.name == "env_fisher":
        return env_fisher_scores(dataset)
    if spec.name == "mad":
        return mad_scores(dataset)
    if spec.name == "dispersion":
        return dispersion_scores(dataset)
    if spec.name == "variance":
        return variance_scores(dataset)
    return pca_loading_scores(dataset, spec.pca_components)


def save_ranking(ranking: Ranking, path) -> None:
    """Write ``feature_index,score,drop_rank`` rows sorted by drop rank
    (drop_rank 1 = first feature to remove)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature_index", "score", "drop_rank"])
        for rank, idx in enumerate(ranking.order, start=1):
            writer.writerow([int(idx), repr(float(ranking.scores[idx])), rank])


def load_ranking(path, method: str = "loaded") -> Ranking:
    """Read a ranking file written by :func:`save_ranking`."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["feature_index", "score", "drop_rank"]:
            raise ValueError(f"{path}: not a ranking file (bad header)")
        rows = [(int(r[0]), float(r[1]), int(r[2])) for r in reader]
    if not rows:
        raise ValueError(f"{path}: ranking file has no rows")
    n = len(rows)
    scores = np.empty(n)
    order = np.empty(n, dtype=np.intp)
    for idx, score, rank in rows:
        if not (1 <= rank <= n) or not (0 <= idx < n):
            raise ValueError(f"{path}: invalid feature_index/drop_rank pair ({idx}, {rank})")
        scores[idx] = score
        order[rank - 1] = idx
    return Ranking(scores=scores, order=order, method=method)
