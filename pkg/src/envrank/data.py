"""Feature matrices with aligned environment/split/label metadata.

On-disk format: UTF-8 comma-delimited text with header
``sample_id,env,split,label[,class],f0,...,f{N-1}`` and one row per sample.
Floats are written with round-trip precision, so ``load(save(d))``
reproduces ``d`` exactly.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

SPLITS = ("train", "val_id", "test_id", "test_ood")
LABELS = ("normal", "novel", "unknown")

_META_COLUMNS = ("sample_id", "env", "split", "label")


@dataclass(frozen=True)
class SampleMeta:
    """Per-row metadata; ``cls`` is an optional subgroup label used only for
    class rebalancing."""

    sample_id: str
    env: str
    split: str
    label: str
    cls: str | None = None


@dataclass(frozen=True)
class Dataset:
    """Immutable (n_samples x n_features) feature matrix plus row metadata.

    Invariants enforced at construction: finite float values, at least one
    feature column, unique sample ids, valid split/label tags, all train
    rows labeled normal, ``unknown`` labels confined to test splits, and at
    least two distinct environments in the train split.
    """

    values: np.ndarray
    meta: tuple[SampleMeta, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meta", tuple(self.meta))
        self._validate()

    def _validate(self) -> None:
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        n, d = self.values.shape
        if d < 1:
            raise ValueError("dataset must have at least one feature column")
        if len(self.meta) != n:
            raise ValueError(
                f"metadata length {len(self.meta)} does not match {n} matrix rows"
            )
        bad = np.argwhere(~np.isfinite(self.values))
        if bad.size:
            r, c = bad[0]
            raise ValueError(f"non-finite value at row {r + 1}, column f{c}")
        seen: set[str] = set()
        has_cls = [m.cls is not None for m in self.meta]
        for i, m in enumerate(self.meta, start=1):
            if m.sample_id in seen:
                raise ValueError(f"duplicate sample_id {m.sample_id!r} at row {i}")
            seen.add(m.sample_id)
            if m.split not in SPLITS:
                raise ValueError(f"row {i}: unknown split {m.split!r}")
            if m.label not in LABELS:
                raise ValueError(f"row {i}: unknown label {m.label!r}")
            if m.split == "train" and m.label != "normal":
                raise ValueError(
                    f"row {i} ({m.sample_id!r}): train rows must be labeled normal, "
                    f"got {m.label!r}"
                )
            if m.label == "unknown" and not m.split.startswith("test_"):
                raise ValueError(
                    f"row {i} ({m.sample_id!r}): label=unknown is only allowed on "
                    f"test splits, got split {m.split!r}"
                )
        if any(has_cls) and not all(has_cls):
            raise ValueError("class labels must be present on all rows or none")
        if len(self.train_envs) < 2:
            raise ValueError(
                f"train split must cover at least 2 environments, "
                f"found {len(self.train_envs)}"
            )

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def has_class(self) -> bool:
        return bool(self.meta) and self.meta[0].cls is not None

    @cached_property
    def env_array(self) -> np.ndarray:
        return np.array([m.env for m in self.meta], dtype=object)

    @cached_property
    def split_array(self) -> np.ndarray:
        return np.array([m.split for m in self.meta], dtype=object)

    @cached_property
    def label_array(self) -> np.ndarray:
        return np.array([m.label for m in self.meta], dtype=object)

    @cached_property
    def train_envs(self) -> tuple[str, ...]:
        mask = self.split_array == "train"
        return tuple(sorted(set(self.env_array[mask])))

    def split_mask(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return self.split_array == split

    def split_values(self, split: str) -> np.ndarray:
        return self.values[self.split_mask(split)]

    def split_meta(self, split: str) -> tuple[SampleMeta, ...]:
        mask = self.split_mask(split)
        return tuple(m for m, keep in zip(self.meta, mask) if keep)


def load_dataset(path) -> Dataset:
    """Read a feature file and return a validated :class:`Dataset`.

    Raises ``ValueError`` naming the offending row/column for malformed
    headers, column-count mismatches, unparseable or non-finite values, and
    any violated dataset invariant.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if tuple(header[:4]) != _META_COLUMNS:
            raise ValueError(
                f"{path}: header must start with {','.join(_META_COLUMNS)}, "
                f"got {','.join(header[:4])}"
            )
        rest = header[4:]
        has_class = bool(rest) and rest[0] == "class"
        feat_names = rest[1:] if has_class else rest
        if not feat_names:
            raise ValueError(f"{path}: header declares no feature columns")
        for j, name in enumerate(feat_names):
            if name != f"f{j}":
                raise ValueError(
                    f"{path}: feature column {j} must be named f{j}, got {name!r}"
                )
        n_features = len(feat_names)
        offset = 5 if has_class else 4
        expected = offset + n_features

        metas: list[SampleMeta] = []
        rows: list[list[float]] = []
        for i, row in enumerate(reader, start=1):
            if len(row) != expected:
                raise ValueError(
                    f"{path}: row {i} has {len(row)} columns, expected {expected} "
                    f"under a {n_features}-feature header"
                )
            cls = row[4] if has_class else None
            if has_class and not cls:
                raise ValueError(f"{path}: row {i}: empty class label")
            try:
                feats = [float(tok) for tok in row[offset:]]
            except ValueError:
                for j, tok in enumerate(row[offset:]):
                    try:
                        float(tok)
                    except ValueError:
                        raise ValueError(
                            f"{path}: row {i}, column f{j}: not a number: {tok!r}"
                        ) from None
                raise
            metas.append(SampleMeta(row[0], row[1], row[2], row[3], cls))
            rows.append(feats)

    values = np.asarray(rows, dtype=np.float64).reshape(len(rows), n_features)
    return Dataset(values, tuple(metas))


def save_dataset(dataset: Dataset, path) -> None:
    """Write ``dataset`` in the feature-file format with full float precision."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(_META_COLUMNS)
        if dataset.has_class:
            header.append("class")
        header.extend(f"f{j}" for j in range(dataset.n_features))
        writer.writerow(header)
        for m, row in zip(dataset.meta, dataset.values):
            fields = [m.sample_id, m.env, m.split, m.label]
            if dataset.has_class:
                fields.append(m.cls)
            fields.extend(repr(float(v)) for v in row)
            writer.writerow(fields)


def subset_features(dataset: Dataset, kept) -> Dataset:
    """Return a dataset whose columns are ``kept`` (in the given order).

    Indices must be unique and in range; metadata is unchanged.
    """
    kept = np.asarray(kept, dtype=np.intp)
    if kept.ndim != 1 or kept.size == 0:
        raise ValueError("kept feature index set must be non-empty")
    if len(set(kept.tolist())) != kept.size:
        raise ValueError("kept feature indices must be unique")
    if kept.min() < 0 or kept.max() >= dataset.n_features:
        raise ValueError(
            f"feature index out of range: valid range is [0, {dataset.n_features})"
        )
    return Dataset(dataset.values[:, kept], dataset.meta)


def rebalance_classes(dataset: Dataset, seed: int) -> Dataset:
    """Down-sample train rows so every class has equal count within each
    train environment.

    Requires the optional ``class`` metadata column; without it this is a
    no-op with a warning. Non-train rows are never touched. Deterministic
    for a fixed ``seed``.
    """
    if not dataset.has_class:
        warnings.warn(
            "rebalance_classes: dataset has no class column; returning input unchanged",
            stacklevel=2,
        )
        return dataset

    train_idx = np.flatnonzero(dataset.split_mask("train"))
    classes = sorted({dataset.meta[i].cls for i in train_idx})
    rng = np.random.default_rng(seed)
    keep: set[int] = set(np.flatnonzero(~dataset.split_mask("train")).tolist())
    for env in dataset.train_envs:
        groups: dict[str, list[int]] = {c: [] for c in classes}
        for i in train_idx:
            if dataset.meta[i].env == env:
                groups[dataset.meta[i].cls].append(int(i))
        empty = [c for c, g in groups.items() if not g]
        if empty:
            raise ValueError(
                f"train environment {env!r} has no samples of class {empty[0]!r}"
            )
        floor = min(len(g) for g in groups.values())
        for c in classes:
            g = groups[c]
            if len(g) > floor:
                chosen = rng.choice(len(g), size=floor, replace=False)
                keep.update(g[j] for j in sorted(chosen.tolist()))
            else:
                keep.update(g)
    order = sorted(keep)
    return Dataset(dataset.values[order], tuple(dataset.meta[i] for i in order))
