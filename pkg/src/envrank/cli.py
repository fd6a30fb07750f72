"""Command-line front end.

Subcommands: synth, rank, select, eval, probe, sweep-spuriousness. Options
can come from a ``key = value`` config file (``--config``); command-line
flags override file values. All outputs are deterministic for fixed inputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from envrank.data import load_dataset, save_dataset
from envrank.detectors import DetectorSpec, KINDS, fit, score, save_scores
from envrank.evaluation import evaluate_ranking, probe_env_accuracy, run_pipeline
from envrank.rankers import (
    AGGREGATIONS,
    DISTANCES,
    RANKERS,
    RankerSpec,
    compute_ranking,
    load_ranking,
    save_ranking,
)
from envrank.selection import (
    CRITERIA,
    DEFAULT_KEEP_PERCENTS,
    SelectionGrid,
    save_curve,
    select_features,
)
from envrank.synth import SynthConfig, generate, load_style_mask, save_style_mask
from envrank.evaluation import style_identification_accuracy

DEFAULT_FRACTIONS = tuple(range(5, 101, 5))


@dataclass(frozen=True)
class RunConfig:
    """Merged, validated view of every tunable the commands accept."""

    seed: int = 0
    bins: int = 100
    kl_eps: float = 1e-6
    ranker: str = "stylist"
    distance: str = "wasserstein"
    agg: str = "mean"
    pca_components: int | None = None
    detector: str = "knn"
    k: int | None = None
    grid: tuple[int, ...] = DEFAULT_KEEP_PERCENTS
    criterion: str = "id_val"
    n_content: int = 32
    n_style: int = 32
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

    def validate(self) -> None:
        if self.ranker not in RANKERS:
            raise ValueError(f"ranker: unknown value {self.ranker!r}")
        if self.distance not in DISTANCES:
            raise ValueError(f"distance: unknown value {self.distance!r}")
        if self.agg not in AGGREGATIONS:
            raise ValueError(f"agg: unknown value {self.agg!r}")
        if self.detector not in KINDS:
            raise ValueError(f"detector: unknown value {self.detector!r}")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion: unknown value {self.criterion!r}")
        if self.bins < 2:
            raise ValueError(f"bins: must be >= 2, got {self.bins}")
        if self.kl_eps <= 0:
            raise ValueError(f"kl_eps: must be > 0, got {self.kl_eps}")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k: must be >= 1, got {self.k}")
        SelectionGrid(self.grid)
        self.synth_config().validate()

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_content_feats=self.n_content,
            n_style_feats=self.n_style,
            envs_id=self.envs_id,
            envs_ood=self.envs_ood,
            majority_envs=self.majority_envs,
            spuriousness=self.spuriousness,
            n_train=self.n_train,
            n_val=self.n_val,
            n_test_id=self.n_test_id,
            n_test_ood=self.n_test_ood,
            content_sep=self.content_sep,
            style_sep=self.style_sep,
            noise_sigma=self.noise_sigma,
            entangled=self.entangled,
            seed=self.seed,
        )

    def ranker_spec(self) -> RankerSpec:
        return RankerSpec(
            name=self.ranker,
            distance=self.distance,
            aggregation=self.agg,
            bins=self.bins,
            kl_eps=self.kl_eps,
            pca_components=self.pca_components,
        )

    def detector_spec(self) -> DetectorSpec:
        return DetectorSpec(kind=self.detector, k=self.k)


_INT_FIELDS = {
    "seed", "bins", "pca_components", "k", "n_content", "n_style", "n_train",
    "n_val", "n_test_id", "n_test_ood",
}
_FLOAT_FIELDS = {
    "kl_eps", "spuriousness", "content_sep", "style_sep", "noise_sigma",
}
_LIST_FIELDS = {"envs_id", "envs_ood", "majority_envs"}
_BOOL_FIELDS = {"entangled"}


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"{key}: expected a boolean, got {raw!r}")


def _parse_int_list(key: str, raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise ValueError(f"{key}: expected comma-separated integers, got {raw!r}") from None


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults <- config file <- command-line flags, then validate."""
    values: dict = {}
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for key, raw in file_values.items():
        if key not in known:
            raise ValueError(f"config file: unknown key {key!r}")
        if key in _INT_FIELDS:
            values[key] = int(raw)
        elif key in _FLOAT_FIELDS:
            values[key] = float(raw)
        elif key in _BOOL_FIELDS:
            values[key] = _parse_bool(key, raw)
        elif key in _LIST_FIELDS:
            values[key] = tuple(tok.strip() for tok in raw.split(",") if tok.strip())
        elif key == "grid":
            values[key] = _parse_int_list(key, raw)
        else:
            values[key] = raw
    for key in known:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def cmd_synth(args) -> int:
    cfg = build_run_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset, mask = generate(cfg.synth_config())
    dataset_file = out_dir / "dataset.csv"
    mask_file = out_dir / "style_mask.csv"
    save_dataset(dataset, dataset_file)
    save_style_mask(mask, mask_file)
    manifest = {
        "config": dataclasses.asdict(cfg.synth_config()),
        "dataset_file": dataset_file.name,
        "mask_file": mask_file.name,
        "sha256": _sha256(dataset_file),
        "n_samples": dataset.n_samples,
        "n_features": dataset.n_features,
    }
    _write_json(manifest, out_dir / "manifest.json")
    print(f"wrote {dataset_file} ({dataset.n_samples} samples, "
          f"{dataset.n_features} features)")
    return 0


def cmd_rank(args) -> int:
    cfg = build_run_config(args)
    dataset = load_dataset(args.dataset)
    ranking = compute_ranking(dataset, cfg.ranker_spec())
    save_ranking(ranking, args.out)
    print(f"wrote {args.out} ({ranking.n_features} features, method "
          f"{ranking.method})")
    return 0


def cmd_select(args) -> int:
    dataset = load_dataset(args.dataset)
    ranking = load_ranking(args.ranking)
    if not (0 < args.keep_pct <= 100):
        raise ValueError(f"keep_pct: must be in (0, 100], got {args.keep_pct}")
    kept = select_features(ranking, args.keep_pct, dataset.n_features)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("feature_index\n")
        for idx in kept:
            fh.write(f"{int(idx)}\n")
    if args.dataset_out:
        from envrank.data import subset_features

        save_dataset(subset_features(dataset, kept), args.dataset_out)
    print(f"kept {kept.size} of {dataset.n_features} features at "
          f"{args.keep_pct}%")
    return 0


def cmd_eval(args) -> int:
    cfg = build_run_config(args)
    dataset = load_dataset(args.dataset)
    grid = SelectionGrid(cfg.grid)
    detector_spec = cfg.detector_spec()
    if args.ranking:
        ranking = load_ranking(args.ranking, method=Path(args.ranking).stem)
        method = {"ranker": ranking.method}
        report = evaluate_ranking(
            dataset, ranking, grid, detector_spec, cfg.criterion,
            seed=cfg.seed, method=method,
        )
    else:
        ranking = None
        report = run_pipeline(
            dataset, cfg.ranker_spec(), grid, detector_spec, cfg.criterion,
            seed=cfg.seed,
        )
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    if args.curve_out:
        rows = [
            (pt["keep_pct"], pt["mean_auc"], {}) for pt in report.curve
        ]
        save_curve(rows, [], args.curve_out)
    if args.scores_out:
        if ranking is None:
            ranking = compute_ranking(dataset, cfg.ranker_spec())
        kept = select_features(ranking, report.chosen_keep_pct, dataset.n_features)
        model = fit(detector_spec, dataset.split_values("train")[:, kept])
        ood_scores = score(model, dataset.split_values("test_ood")[:, kept])
        save_scores(dataset.split_meta("test_ood"), ood_scores, args.scores_out)
    print(
        f"chosen keep_pct {report.chosen_keep_pct}: OOD AUC "
        f"{report.mean_auc:.4f} (baseline {report.baseline_auc:.4f}, "
        f"delta {report.delta:+.4f})"
    )
    return 0


def cmd_probe(args) -> int:
    dataset = load_dataset(args.dataset)
    ranking = load_ranking(args.ranking)
    fractions = (
        _parse_int_list("fractions", args.fractions)
        if args.fractions
        else DEFAULT_FRACTIONS
    )
    if any(not (0 < f <= 100) for f in fractions):
        raise ValueError(f"fractions: values must be in (0, 100], got {fractions}")
    rows = []
    if args.mode == "identify":
        if not args.mask:
            raise ValueError("mask: --mask file is required with --mode identify")
        style_mask = load_style_mask(args.mask)
        for pct in fractions:
            acc = style_identification_accuracy(ranking, style_mask, pct / 100)
            rows.append({"fraction_pct": pct, "style_identification_accuracy": acc})
    else:
        for pct in fractions:
            kept = select_features(ranking, pct, dataset.n_features)
            acc = probe_env_accuracy(dataset, kept)
            rows.append({"fraction_pct": pct, "env_probe_accuracy": acc})
    _write_json({"mode": args.mode, "rows": rows}, Path(args.out))
    print(f"wrote {args.out} ({len(rows)} fractions)")
    return 0


def cmd_sweep_spuriousness(args) -> int:
    cfg = build_run_config(args)
    levels = [float(tok) for tok in args.levels.split(",") if tok.strip()]
    if not levels:
        raise ValueError("levels: at least one spuriousness level required")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = SelectionGrid(cfg.grid)
    rows = []
    for level in levels:
        synth_cfg = dataclasses.replace(cfg.synth_config(), spuriousness=level)
        synth_cfg.validate()
        dataset, _ = generate(synth_cfg)
        report = run_pipeline(
            dataset, cfg.ranker_spec(), grid, cfg.detector_spec(), cfg.criterion,
            seed=cfg.seed,
        )
        rows.append(
            {
                "spuriousness": level,
                "chosen_keep_pct": report.chosen_keep_pct,
                "mean_auc": report.mean_auc,
                "baseline_auc": report.baseline_auc,
                "delta": report.delta,
            }
        )
    _write_json({"levels": rows}, out_dir / "spuriousness_sweep.json")
    with open(out_dir / "spuriousness_sweep.csv", "w", encoding="utf-8") as fh:
        fh.write("spuriousness,chosen_keep_pct,mean_auc,baseline_auc,delta\n")
        for r in rows:
            fh.write(
                f"{r['spuriousness']!r},{r['chosen_keep_pct']},"
                f"{r['mean_auc']!r},{r['baseline_auc']!r},{r['delta']!r}\n"
            )
    print(f"wrote {out_dir / 'spuriousness_sweep.json'} ({len(rows)} levels)")
    return 0


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="envrank",
        description=(
            "Rank environment-biased features, drop them, and evaluate the "
            "out-of-distribution novelty-detection gain."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    _add_config_options(p)
    p.add_argument("--out-dir", required=True)
    for name in ("n_content", "n_style", "n_train", "n_val", "n_test_id",
                 "n_test_ood"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int,
                       default=None)
    for name in ("spuriousness", "content_sep", "style_sep", "noise_sigma"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float,
                       default=None)
    p.add_argument("--entangled", dest="entangled", default=None,
                   type=lambda raw: _parse_bool("entangled", raw))
    for name in ("envs_id", "envs_ood", "majority_envs"):
        p.add_argument(
            f"--{name.replace('_', '-')}", dest=name, default=None,
            type=lambda raw: tuple(t.strip() for t in raw.split(",") if t.strip()),
        )
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rank", help="score features by environment bias")
    _add_config_options(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ranker", choices=RANKERS, default=None)
    p.add_argument("--distance", choices=DISTANCES, default=None)
    p.add_argument("--agg", choices=AGGREGATIONS, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--kl-eps", dest="kl_eps", type=float, default=None)
    p.add_argument("--pca-components", dest="pca_components", type=int,
                   default=None)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("select", help="materialize a kept-feature set")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ranking", required=True)
    p.add_argument("--keep-pct", dest="keep_pct", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset-out", dest="dataset_out", default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", help="sweep keep percentages and report OOD AUC")
    _add_config_options(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--ranking", default=None,
                   help="precomputed ranking file; omitted = rank internally")
    p.add_argument("--out", required=True)
    p.add_argument("--curve-out", dest="curve_out", default=None)
    p.add_argument("--scores-out", dest="scores_out", default=None)
    p.add_argument("--ranker", choices=RANKERS, default=None)
    p.add_argument("--distance", choices=DISTANCES, default=None)
    p.add_argument("--agg", choices=AGGREGATIONS, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--kl-eps", dest="kl_eps", type=float, default=None)
    p.add_argument("--detector", choices=KINDS, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--grid", type=lambda raw: _parse_int_list("grid", raw),
                   default=None)
    p.add_argument("--criterion", choices=CRITERIA, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("probe", help="style/content interpretability probes")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ranking", required=True)
    p.add_argument("--mode", choices=("identify", "probe"), required=True)
    p.add_argument("--mask", default=None, help="style-mask sidecar file")
    p.add_argument("--fractions", default=None,
                   help="comma-separated keep percentages")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser(
        "sweep-spuriousness",
        help="generate + evaluate a shared-geometry suite of spuriousness levels",
    )
    _add_config_options(p)
    p.add_argument("--levels", required=True,
                   help="comma-separated spuriousness levels")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ranker", choices=RANKERS, default=None)
    p.add_argument("--distance", choices=DISTANCES, default=None)
    p.add_argument("--agg", choices=AGGREGATIONS, default=None)
    p.add_argument("--detector", choices=KINDS, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--grid", type=lambda raw: _parse_int_list("grid", raw),
                   default=None)
    p.add_argument("--criterion", choices=CRITERIA, default=None)
    p.set_defaults(func=cmd_sweep_spuriousness)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
