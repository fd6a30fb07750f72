"""Turning a ranking into kept-feature sets and sweeping keep percentages."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from envrank.data import Dataset
from envrank.detectors import DetectorSpec, fit, score
from envrank.rankers import Ranking

DEFAULT_KEEP_PERCENTS = tuple(range(5, 101, 5))

CRITERIA = ("id_val", "ood_oracle")
CRITERION_SPLIT = {"id_val": "val_id", "ood_oracle": "test_ood"}


@dataclass(frozen=True)
class SelectionGrid:
    """Ascending, unique keep percentages in (0, 100]."""

    keep_percents: tuple[int, ...] = DEFAULT_KEEP_PERCENTS

    def __post_init__(self):
        pcts = tuple(int(p) for p in self.keep_percents)
        object.__setattr__(self, "keep_percents", pcts)
        if not pcts:
            raise ValueError("selection grid must not be empty")
        if any(not (0 < p <= 100) for p in pcts):
            raise ValueError(f"keep percentages must be in (0, 100]: {pcts}")
        if len(set(pcts)) != len(pcts) or list(pcts) != sorted(pcts):
            raise ValueError(f"keep percentages must be unique and ascending: {pcts}")


def select_features(ranking: Ranking, keep_pct: int, n_features: int) -> np.ndarray:
    """Indices of the least-biased ``keep_pct`` percent of features,
    ascending by feature index.

    Keeps k = max(1, round-half-up(n_features * keep_pct / 100)) features,
    taken from the tail of the drop order.
    """
    if not (0 < keep_pct <= 100):
        raise ValueError(f"keep_pct must be in (0, 100], got {keep_pct}")
    if ranking.n_features != n_features:
        raise ValueError(
            f"ranking covers {ranking.n_features} features, dataset has {n_features}"
        )
    k = max(1, int(np.floor(n_features * keep_pct / 100 + 0.5)))
    return np.sort(ranking.order[n_features - k :])


def sweep_auc_curves(
    dataset: Dataset,
    ranking: Ranking,
    keep_percents,
    detector_spec: DetectorSpec,
    splits,
) -> dict[str, dict[int, tuple[dict[str, float], float]]]:
    """For each keep percentage: select features, fit the detector on the
    reduced train split, score the requested splits, and compute the
    per-environment / mean ROC-AUC.

    Returns ``{split: {keep_pct: (per_env_auc, mean_auc)}}``.
    """
    from envrank.evaluation import mean_env_auc

    splits = tuple(splits)
    train_values = dataset.split_values("train")
    queries = {s: dataset.split_values(s) for s in splits}
    metas = {s: dataset.split_meta(s) for s in splits}
    curves: dict[str, dict[int, tuple[dict[str, float], float]]] = {
        s: {} for s in splits
    }
    for pct in keep_percents:
        kept = select_features(ranking, pct, dataset.n_features)
        model = fit(detector_spec, train_values[:, kept])
        for s in splits:
            scores = score(model, queries[s][:, kept])
            curves[s][pct] = mean_env_auc(scores, metas[s], s)
    return curves


def argmax_keep_pct(curve: dict[int, tuple[dict[str, float], float]], grid) -> int:
    """Grid point with the highest mean AUC; ties go to the larger
    percentage (fewer features removed)."""
    best_pct, best_auc = None, -np.inf
    for pct in sorted(grid):
        auc = curve[pct][1]
        if auc >= best_auc:
            best_pct, best_auc = pct, auc
    return best_pct


def choose_percent(
    dataset: Dataset,
    ranking: Ranking,
    grid: SelectionGrid,
    detector_spec: DetectorSpec,
    criterion: str = "id_val",
) -> tuple[int, list[tuple[int, float, dict[str, float]]]]:
    """Pick the keep percentage maximizing mean per-environment ROC-AUC on
    the criterion split (``id_val`` -> val_id, ``ood_oracle`` -> test_ood).

    Returns the chosen percentage and the full sweep curve as
    ``[(keep_pct, mean_auc, per_env_auc), ...]``.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    split = CRITERION_SPLIT[criterion]
    if not dataset.split_mask(split).any():
        raise ValueError(f"criterion {criterion!r} requires a non-empty {split} split")
    curves = sweep_auc_curves(
        dataset, ranking, grid.keep_percents, detector_spec, [split]
    )
    curve = curves[split]
    chosen = argmax_keep_pct(curve, grid.keep_percents)
    rows = [(pct, curve[pct][1], curve[pct][0]) for pct in grid.keep_percents]
    return chosen, rows


def save_curve(curve_rows, env_names, path) -> None:
    """Write ``keep_pct,auc_mean,auc_<env>...`` rows; environments missing
    from a row (excluded for lacking a class) are written as empty fields."""
    env_names = list(env_names)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["keep_pct", "auc_mean"] + [f"auc_{e}" for e in env_names])
        for pct, mean_auc, per_env in curve_rows:
            row = [pct, repr(float(mean_auc))]
            row += [
                repr(float(per_env[e])) if e in per_env else "" for e in env_names
            ]
            writer.writerow(row)
