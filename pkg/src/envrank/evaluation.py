"""ROC-AUC metrics, per-environment aggregation, end-to-end sweep pipelines,
and the two feature-interpretability probes."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from envrank.data import Dataset, SampleMeta
from envrank.detectors import DetectorSpec
from envrank.rankers import Ranking, RankerSpec, compute_ranking
from envrank.selection import (
    CRITERIA,
    CRITERION_SPLIT,
    SelectionGrid,
    argmax_keep_pct,
    select_features,
    sweep_auc_curves,
)

logger = logging.getLogger(__name__)

_LABEL_TO_BINARY = {"normal": 0, "novel": 1}


def roc_auc(scores, labels) -> float:
    """Mid-rank ROC-AUC: positives are the novel samples, which should score
    higher. Tied scores receive their average rank.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.dtype == object or labels.dtype.kind in "US":
        labels = np.array([_LABEL_TO_BINARY[l] for l in labels.tolist()])
    labels = labels.astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and aligned")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    counts = np.diff(np.r_[starts, s.size])
    avg = starts + (counts + 1) / 2.0  # 1-based average rank per tie group
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(avg, counts)
    pos_rank_sum = ranks[labels].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def mean_env_auc(
    scores, meta, split: str
) -> tuple[dict[str, float], float]:
    """ROC-AUC within each environment of ``split``, then the unweighted mean
    over environments.

    ``meta`` must align with ``scores``. Rows labeled ``unknown`` are skipped;
    an environment missing one of the two classes is excluded with a warning.
    """
    scores = np.asarray(scores, dtype=np.float64)
    meta = tuple(meta)
    if len(meta) != scores.size:
        raise ValueError("scores and metadata lengths differ")
    by_env: dict[str, tuple[list[float], list[int]]] = {}
    for s, m in zip(scores, meta):
        if m.split != split or m.label == "unknown":
            continue
        sc, lb = by_env.setdefault(m.env, ([], []))
        sc.append(float(s))
        lb.append(_LABEL_TO_BINARY[m.label])
    per_env: dict[str, float] = {}
    for env in sorted(by_env):
        sc, lb = by_env[env]
        if len(set(lb)) < 2:
            logger.warning(
                "environment %r in split %s has a single label class; excluded "
                "from ROC-AUC", env, split,
            )
            continue
        per_env[env] = roc_auc(np.array(sc), np.array(lb))
    if not per_env:
        raise ValueError(
            f"no environment in split {split!r} has both label classes"
        )
    return per_env, float(np.mean(list(per_env.values())))


@dataclass(frozen=True)
class EvalReport:
    """Outcome of one ranking + selection + detection sweep.

    ``curve`` is the OOD-test sweep (keep_pct -> mean AUC over OOD
    environments); ``per_env_auc``/``mean_auc`` are taken at the chosen keep
    percentage and ``delta = mean_auc - baseline_auc`` where the baseline
    uses all features.
    """

    method: dict
    per_env_auc: dict[str, float]
    mean_auc: float
    baseline_auc: float
    delta: float
    chosen_keep_pct: int
    curve: tuple[dict, ...]
    seed: int
    excluded_envs: tuple[str, ...] = ()

    def to_json(self) -> str:
        payload = {
            "method": self.method,
            "per_env_auc": self.per_env_auc,
            "mean_auc": self.mean_auc,
            "baseline_auc": self.baseline_auc,
            "delta": self.delta,
            "chosen_keep_pct": self.chosen_keep_pct,
            "curve": list(self.curve),
            "seed": self.seed,
            "excluded_envs": list(self.excluded_envs),
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        return cls(
            method=raw["method"],
            per_env_auc=raw["per_env_auc"],
            mean_auc=raw["mean_auc"],
            baseline_auc=raw["baseline_auc"],
            delta=raw["delta"],
            chosen_keep_pct=raw["chosen_keep_pct"],
            curve=tuple(raw["curve"]),
            seed=raw["seed"],
            excluded_envs=tuple(raw["excluded_envs"]),
        )


def _split_envs_with_labels(dataset: Dataset, split: str) -> set[str]:
    mask = dataset.split_mask(split)
    return {
        m.env
        for m, keep in zip(dataset.meta, mask)
        if keep and m.label != "unknown"
    }


def evaluate_ranking(
    dataset: Dataset,
    ranking: Ranking,
    grid: SelectionGrid,
    detector_spec: DetectorSpec,
    criterion: str = "id_val",
    seed: int = 0,
    method: dict | None = None,
) -> EvalReport:
    """Sweep the keep-percentage grid with a precomputed ranking and report
    OOD-test performance at the criterion-chosen percentage.

    The criterion split and the OOD test split are both scored during the
    same sweep, so reports for ``id_val`` and ``ood_oracle`` share identical
    curves and differ only in the chosen percentage.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    crit_split = CRITERION_SPLIT[criterion]
    for split in {crit_split, "test_ood"}:
        if not dataset.split_mask(split).any():
            raise ValueError(f"evaluation requires a non-empty {split} split")

    pcts = sorted(set(grid.keep_percents) | {100})
    splits = sorted({crit_split, "test_ood"})
    curves = sweep_auc_curves(dataset, ranking, pcts, detector_spec, splits)

    chosen = argmax_keep_pct(curves[crit_split], grid.keep_percents)
    ood = curves["test_ood"]
    per_env, mean_auc = ood[chosen]
    baseline = ood[100][1]

    excluded: set[str] = set()
    for split in splits:
        with_labels = _split_envs_with_labels(dataset, split)
        for pct in pcts:
            excluded |= with_labels - set(curves[split][pct][0])

    curve = tuple(
        {"keep_pct": pct, "mean_auc": ood[pct][1]} for pct in grid.keep_percents
    )
    info = dict(method or {})
    info.setdefault("detector", detector_spec.kind)
    info.setdefault("k", detector_spec.k)
    info.setdefault("criterion", criterion)
    return EvalReport(
        method=info,
        per_env_auc=per_env,
        mean_auc=mean_auc,
        baseline_auc=baseline,
        delta=mean_auc - baseline,
        chosen_keep_pct=chosen,
        curve=curve,
        seed=seed,
        excluded_envs=tuple(sorted(excluded)),
    )


def run_pipeline(
    dataset: Dataset,
    ranker_spec: RankerSpec,
    grid: SelectionGrid,
    detector_spec: DetectorSpec,
    criterion: str = "id_val",
    seed: int = 0,
) -> EvalReport:
    """Rank on the train split, then sweep selection percentages and report
    OOD novelty-detection performance at the chosen percentage."""
    ranking = compute_ranking(dataset, ranker_spec)
    method = {
        "ranker": ranker_spec.name,
        "distance": ranker_spec.distance,
        "aggregation": ranker_spec.aggregation,
    }
    return evaluate_ranking(
        dataset, ranking, grid, detector_spec, criterion, seed=seed, method=method
    )


def style_identification_accuracy(
    ranking: Ranking, style_mask, top_fraction: float
) -> float:
    """Fraction of the top drop-ranked features that are truly style features.

    ``style_mask[i]`` is True when feature ``i`` carries style; the top
    ceil(top_fraction * n_features) entries of the drop order are checked.
    """
    style_mask = np.asarray(style_mask, dtype=bool)
    if style_mask.size != ranking.n_features:
        raise ValueError("style mask length must match the ranking")
    if not (0 < top_fraction <= 1):
        raise ValueError(f"top_fraction must be in (0, 1], got {top_fraction}")
    m = math.ceil(top_fraction * ranking.n_features)
    return float(style_mask[ranking.order[:m]].mean())


def probe_env_accuracy(dataset: Dataset, kept) -> float:
    """Accuracy of a linear softmax probe predicting the train environment
    label from the kept features, evaluated on the ID test split.

    Full-batch gradient descent: 500 iterations, step 0.1, inputs
    standardized with train statistics, L2 penalty 1e-4 on the weights.
    """
    kept = np.asarray(kept, dtype=np.intp)
    envs = dataset.train_envs
    if len(envs) < 2:
        raise ValueError("environment probe needs at least 2 train environments")
    env_index = {env: i for i, env in enumerate(envs)}

    train_mask = dataset.split_mask("train")
    x_train = dataset.values[train_mask][:, kept]
    y_train = np.array([env_index[e] for e in dataset.env_array[train_mask]])
    test_mask = dataset.split_mask("test_id")
    if not test_mask.any():
        raise ValueError("environment probe needs a non-empty test_id split")
    x_test = dataset.values[test_mask][:, kept]
    y_test = np.array([env_index.get(e, -1) for e in dataset.env_array[test_mask]])

    mu = x_train.mean(axis=0)
    sd = x_train.std(axis=0)
    sd = np.where(sd == 0, 1.0, sd)
    x_train = (x_train - mu) / sd
    x_test = (x_test - mu) / sd

    n, d = x_train.shape
    n_env = len(envs)
    onehot = np.zeros((n, n_env))
    onehot[np.arange(n), y_train] = 1.0
    weights = np.zeros((d, n_env))
    bias = np.zeros(n_env)
    for _ in range(500):
        logits = x_train @ weights + bias
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        weights -= 0.1 * (x_train.T @ g + 2e-4 * weights)
        bias -= 0.1 * g.sum(axis=0)

    pred = (x_test @ weights + bias).argmax(axis=1)
    return float((pred == y_test).mean())
