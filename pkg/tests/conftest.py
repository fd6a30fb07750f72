import numpy as np
import pytest

from envrank.data import Dataset, SampleMeta


def build_dataset(values, envs, splits=None, labels=None, classes=None) -> Dataset:
    """Assemble a Dataset from parallel per-row attribute lists."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    splits = splits if splits is not None else ["train"] * n
    labels = labels if labels is not None else [
        "normal" if s == "train" else "normal" for s in splits
    ]
    classes = classes if classes is not None else [None] * n
    meta = tuple(
        SampleMeta(f"s{i:04d}", envs[i], splits[i], labels[i], classes[i])
        for i in range(n)
    )
    return Dataset(values, meta)


def train_only_dataset(columns: dict[str, list[list[float]]]) -> Dataset:
    """Dataset whose train rows are given per environment:
    {env: [[row features], ...]}."""
    values, envs = [], []
    for env in sorted(columns):
        for row in columns[env]:
            values.append(row)
            envs.append(env)
    return build_dataset(np.asarray(values, dtype=float), envs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
