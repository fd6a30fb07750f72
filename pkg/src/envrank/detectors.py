"""Novelty scoring: kNN distance (raw and sample-normalized) and Local
Outlier Factor, all with exact brute-force Euclidean neighbor search.

Score convention: HIGHER = more novel. Queries are assumed disjoint from the
reference set (train and test splits never overlap in this pipeline), so no
self-match exclusion is applied when scoring.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

KINDS = ("knn", "knn_norm", "lof")
_DEFAULT_K = {"knn": 10, "knn_norm": 10, "lof": 20}

# Duplicate points would otherwise drive LOF reachability densities to
# infinity; all pairwise distances are floored here.
_DIST_FLOOR = 1e-12


@dataclass(frozen=True)
class DetectorSpec:
    """Detector kind plus neighbor count; ``k=None`` picks the kind's default
    (10 for kNN variants, 20 for LOF)."""

    kind: str
    k: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown detector {self.kind!r}; expected one of {KINDS}")
        if self.k is None:
            object.__setattr__(self, "k", _DEFAULT_K[self.kind])
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class FittedDetector:
    kind: str
    k: int
    reference: np.ndarray
    # LOF precomputation over the reference set; None for kNN variants.
    kdist: np.ndarray | None = None
    lrd: np.ndarray | None = None


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of ``a`` and rows of ``b``.

    Uses the direct difference (no inner-product expansion) so results match
    a scalar-loop computation bit for bit; chunked to bound memory.
    """
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    step = max(1, int(4_000_000 // max(b.size, 1)))
    for i in range(0, a.shape[0], step):
        diff = a[i : i + step, None, :] - b[None, :, :]
        out[i : i + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def _normalize_rows(x: np.ndarray, what: str) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        raise ValueError(f"zero-norm {what} row {bad} cannot be L2-normalized")
    return x / norms[:, None]


def fit(spec: DetectorSpec, train: np.ndarray) -> FittedDetector:
    """Fit a detector on the reference matrix (rows = training samples)."""
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 2 or train.shape[1] == 0:
        raise ValueError("training matrix must be 2-D with at least one feature")
    n = train.shape[0]
    if n < spec.k + 1:
        raise ValueError(
            f"need at least k+1={spec.k + 1} training rows for k={spec.k}, got {n}"
        )
    if spec.kind == "knn":
        return FittedDetector(kind=spec.kind, k=spec.k, reference=train.copy())
    if spec.kind == "knn_norm":
        return FittedDetector(
            kind=spec.kind, k=spec.k, reference=_normalize_rows(train, "training")
        )

    dist = _pairwise_distances(train, train)
    np.fill_diagonal(dist, np.inf)
    dist = np.maximum(dist, _DIST_FLOOR)
    nbrs = np.argsort(dist, axis=1, kind="stable")[:, : spec.k]
    rows = np.arange(n)[:, None]
    kdist = dist[rows, nbrs][:, -1]
    reach = np.maximum(kdist[nbrs], dist[rows, nbrs])
    lrd = 1.0 / reach.mean(axis=1)
    return FittedDetector(
        kind=spec.kind, k=spec.k, reference=train.copy(), kdist=kdist, lrd=lrd
    )


def score(model: FittedDetector, queries: np.ndarray) -> np.ndarray:
    """Novelty scores for query rows (higher = more novel).

    kNN variants return the Euclidean distance to the k-th nearest reference
    row; LOF returns mean(lrd of the k nearest references) / lrd(query).
    """
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != model.reference.shape[1]:
        raise ValueError(
            f"query matrix must have {model.reference.shape[1]} columns, "
            f"got shape {queries.shape}"
        )
    if model.kind == "knn_norm":
        queries = _normalize_rows(queries, "query")
    dist = _pairwise_distances(queries, model.reference)
    if model.kind in ("knn", "knn_norm"):
        return np.partition(dist, model.k - 1, axis=1)[:, model.k - 1]

    dist = np.maximum(dist, _DIST_FLOOR)
    nbrs = np.argsort(dist, axis=1, kind="stable")[:, : model.k]
    rows = np.arange(queries.shape[0])[:, None]
    reach = np.maximum(model.kdist[nbrs], dist[rows, nbrs])
    lrd_query = 1.0 / reach.mean(axis=1)
    return model.lrd[nbrs].mean(axis=1) / lrd_query


def save_scores(meta, scores: np.ndarray, path) -> None:
    """Write ``sample_id,env,label,score`` rows for the scored samples."""
    scores = np.asarray(scores, dtype=np.float64)
    meta = tuple(meta)
    if len(meta) != scores.size:
        raise ValueError("metadata and score lengths differ")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "env", "label", "score"])
        for m, s in zip(meta, scores):
            writer.writerow([m.sample_id, m.env, m.label, repr(float(s))])
