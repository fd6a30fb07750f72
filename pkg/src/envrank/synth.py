"""Gaussian style/content factor-model benchmark with controllable
spuriousness between the normal class and a subset of environments.

Every random draw flows from one seed through named substreams, so adding a
new consumer cannot perturb existing streams, and datasets generated with the
same seed but different spuriousness levels share centers, noise, and all
evaluation splits; only the train environment assignment changes.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, replace

import numpy as np

from envrank.data import Dataset, SampleMeta


@dataclass(frozen=True)
class SynthConfig:
    """Generator knobs.

    Content factors separate the normal and novel classes by
    ``content_sep * noise_sigma`` per dimension on average
    (||mu_normal - mu_novel|| = content_sep * noise_sigma * sqrt(n_content));
    style factors get one center per environment drawn from
    N(0, style_sep^2 I). With ``entangled`` the two blocks are mixed by a
    seeded random orthogonal matrix, and the returned style mask refers to
    the pre-mixing coordinates (approximate ground truth).

    ``spuriousness`` skews the train environment assignment: the majority
    environments share total probability s uniformly, the remaining ID
    environments share 1 - s uniformly. Per-environment shares are equal
    when s = len(majority_envs) / len(envs_id).
    """

    n_content_feats: int = 32
    n_style_feats: int = 32
    envs_id: tuple[str, ...] = ("id_0", "id_1", "id_2", "id_3", "id_4")
    envs_ood: tuple[str, ...] = ("ood_0", "ood_1")
    majority_envs: tuple[str, ...] = ("id_0", "id_1")
    spuriousness: float = 0.95
    n_train: int = 3000
    n_val: int = 500
    n_test_id: int = 500
    n_test_ood: int = 1000
    content_sep: float = 1.5
    style_sep: float = 2.5
    noise_sigma: float = 1.0
    entangled: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.n_content_feats < 1:
            raise ValueError(f"n_content_feats must be >= 1, got {self.n_content_feats}")
        if self.n_style_feats < 1:
            raise ValueError(f"n_style_feats must be >= 1, got {self.n_style_feats}")
        if len(self.envs_id) < 2:
            raise ValueError("envs_id needs at least 2 environments")
        if len(self.envs_ood) < 1:
            raise ValueError("envs_ood needs at least 1 environment")
        if len(set(self.envs_id)) != len(self.envs_id):
            raise ValueError("envs_id contains duplicates")
        if len(set(self.envs_ood)) != len(self.envs_ood):
            raise ValueError("envs_ood contains duplicates")
        if set(self.envs_id) & set(self.envs_ood):
            raise ValueError("envs_id and envs_ood must be disjoint")
        maj = set(self.majority_envs)
        if not maj or not maj < set(self.envs_id):
            raise ValueError(
                "majority_envs must be a non-empty proper subset of envs_id"
            )
        if len(maj) != len(self.majority_envs):
            raise ValueError("majority_envs contains duplicates")
        if not (0.0 < self.spuriousness < 1.0):
            raise ValueError(
                f"spuriousness must be in (0, 1), got {self.spuriousness}"
            )
        for name in ("n_train", "n_val", "n_test_id", "n_test_ood"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.content_sep < 0:
            raise ValueError(f"content_sep must be >= 0, got {self.content_sep}")
        if self.style_sep < 0:
            raise ValueError(f"style_sep must be >= 0, got {self.style_sep}")
        if self.noise_sigma <= 0:
            raise ValueError(f"noise_sigma must be > 0, got {self.noise_sigma}")


def substream(seed: int, purpose: str) -> np.random.Generator:
    """Independent generator for one named purpose under a master seed."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), zlib.crc32(purpose.encode("utf-8"))])
    )


def _random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diagonal(r))
    return q * np.where(signs == 0, 1.0, signs)


def _train_env_probs(cfg: SynthConfig) -> np.ndarray:
    maj = set(cfg.majority_envs)
    p_major = cfg.spuriousness / len(maj)
    p_minor = (1.0 - cfg.spuriousness) / (len(cfg.envs_id) - len(maj))
    return np.array([p_major if e in maj else p_minor for e in cfg.envs_id])


def generate(cfg: SynthConfig) -> tuple[Dataset, np.ndarray]:
    """Build one dataset plus the per-feature style mask.

    Row order: train, val_id, test_id, test_ood. Train is all-normal with the
    spuriousness-skewed environment assignment; val/test splits draw the
    environment uniformly and the label uniformly from {normal, novel}.
    """
    cfg.validate()
    dc, ds = cfg.n_content_feats, cfg.n_style_feats
    sigma = cfg.noise_sigma

    direction = substream(cfg.seed, "content_centers").standard_normal(dc)
    direction /= np.sqrt((direction**2).sum())
    gap = cfg.content_sep * sigma * np.sqrt(dc)
    content_centers = np.stack([-0.5 * gap * direction, 0.5 * gap * direction])

    style_id = substream(cfg.seed, "style_centers_id").standard_normal(
        (len(cfg.envs_id), ds)
    ) * cfg.style_sep
    style_ood = substream(cfg.seed, "style_centers_ood").standard_normal(
        (len(cfg.envs_ood), ds)
    ) * cfg.style_sep

    blocks: list[np.ndarray] = []
    metas: list[SampleMeta] = []

    env_probs = _train_env_probs(cfg)
    u = substream(cfg.seed, "train_env").random(cfg.n_train)
    env_idx = np.minimum(
        np.searchsorted(np.cumsum(env_probs), u, side="right"),
        len(cfg.envs_id) - 1,
    )
    noise = substream(cfg.seed, "train_noise")
    content = content_centers[0] + sigma * noise.standard_normal((cfg.n_train, dc))
    style = style_id[env_idx] + sigma * noise.standard_normal((cfg.n_train, ds))
    blocks.append(np.hstack([content, style]))
    for i in range(cfg.n_train):
        metas.append(
            SampleMeta(f"tr-{i:05d}", cfg.envs_id[env_idx[i]], "train", "normal")
        )

    eval_splits = (
        ("val_id", "va", cfg.n_val, cfg.envs_id, style_id),
        ("test_id", "ti", cfg.n_test_id, cfg.envs_id, style_id),
        ("test_ood", "to", cfg.n_test_ood, cfg.envs_ood, style_ood),
    )
    for split, prefix, n, env_names, centers in eval_splits:
        g = substream(cfg.seed, split)
        env_idx = g.integers(0, len(env_names), size=n)
        labels = g.integers(0, 2, size=n)  # 1 = novel
        content = content_centers[labels] + sigma * g.standard_normal((n, dc))
        style = centers[env_idx] + sigma * g.standard_normal((n, ds))
        blocks.append(np.hstack([content, style]))
        for i in range(n):
            metas.append(
                SampleMeta(
                    f"{prefix}-{i:05d}",
                    env_names[env_idx[i]],
                    split,
                    "novel" if labels[i] else "normal",
                )
            )

    values = np.vstack(blocks)
    if cfg.entangled:
        mixing = _random_orthogonal(dc + ds, substream(cfg.seed, "mixing"))
        values = values @ mixing
    style_mask = np.array([False] * dc + [True] * ds)
    return Dataset(values, tuple(metas)), style_mask


def spuriousness_suite(base: SynthConfig, levels) -> list[Dataset]:
    """One dataset per spuriousness level, sharing every seed-derived draw
    (centers, noise, evaluation splits); only the train environment
    assignment distribution varies."""
    return [generate(replace(base, spuriousness=float(s)))[0] for s in levels]


def save_style_mask(style_mask, path) -> None:
    """Write the ``feature_index,is_style`` sidecar (is_style as 0/1)."""
    style_mask = np.asarray(style_mask, dtype=bool)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature_index", "is_style"])
        for i, flag in enumerate(style_mask):
            writer.writerow([i, int(flag)])


def load_style_mask(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["feature_index", "is_style"]:
            raise ValueError(f"{path}: not a style-mask file (bad header)")
        rows = [(int(r[0]), int(r[1])) for r in reader]
    if not rows:
        raise ValueError(f"{path}: style-mask file has no rows")
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: feature_index column must be 0..n-1 in order")
    return np.array([bool(r[1]) for r in rows])
