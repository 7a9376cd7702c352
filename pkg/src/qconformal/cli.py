"""Command line: ``generate``, ``run`` and ``report``.

Settings resolve as flags > ``--config`` JSON file > built-in defaults.
Exit status is 0 on success, 1 on data or runtime failure, 2 on bad usage.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

from . import conformal, dataset, forest
from .conformal import CSV_HEADER, DEFAULT_ALPHAS, CoverageReport, NormKind
from .errors import QConformalError
from .features import FeatureMode

MERGED_HEADER = ("run_id",) + CSV_HEADER


@dataclass
class GenerationSettings:
    num_samples: int = 5000
    min_depth: int = 1
    max_depth: int = 8
    shots: int = 1024
    bases: str = "Z"
    feature_mode: str = FeatureMode.FULL.value
    two_qubit_prob: float = 0.5

    def to_config(self) -> dataset.GenerationConfig:
        return dataset.GenerationConfig(
            num_samples=self.num_samples,
            min_depth=self.min_depth,
            max_depth=self.max_depth,
            shots=self.shots,
            bases=self.bases,
            feature_mode=self.feature_mode,
            two_qubit_prob=self.two_qubit_prob,
        )


@dataclass
class Seeds:
    generation: int = 0
    split: int = 0
    train: int = 42


@dataclass
class RunConfig:
    data: Optional[str] = None
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    norm: str = NormKind.L2.value
    forest: forest.ForestParams = field(default_factory=forest.ForestParams)
    seeds: Seeds = field(default_factory=Seeds)
    out: str = "reports/run"

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["fractions"] = list(self.fractions)
        doc["alphas"] = list(self.alphas)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise QConformalError(f"unknown config keys: {sorted(unknown)}")
        base = cls()
        return cls(
            data=doc.get("data", base.data),
            generation=replace(base.generation, **doc.get("generation", {})),
            fractions=tuple(doc.get("fractions", base.fractions)),
            alphas=tuple(doc.get("alphas", base.alphas)),
            norm=doc.get("norm", base.norm),
            forest=replace(base.forest, **doc.get("forest", {})),
            seeds=replace(base.seeds, **doc.get("seeds", {})),
            out=doc.get("out", base.out),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise QConformalError(f"cannot read config {path}: {exc}") from exc
        try:
            return cls.from_dict(doc)
        except TypeError as exc:
            raise QConformalError(f"invalid config {path}: {exc}") from exc


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_generation_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("generation")
    g.add_argument("--samples", type=int, dest="num_samples")
    g.add_argument("--min-depth", type=int)
    g.add_argument("--max-depth", type=int)
    g.add_argument("--shots", type=int)
    g.add_argument("--bases", help="z for 4-D targets, zxy for 12-D")
    g.add_argument("--features", dest="feature_mode", choices=[m.value for m in FeatureMode])
    g.add_argument("--two-qubit-prob", type=float)
    g.add_argument("--seed", type=int, help="generation seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qconformal",
        description="Conformal prediction sets for simulated two-qubit measurement distributions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="simulate circuits and write a dataset")
    gen.add_argument("--config", help="RunConfig JSON file")
    _add_generation_flags(gen)
    gen.add_argument("--out", help="output prefix; writes <out>.csv and <out>.manifest.json")

    run = sub.add_parser("run", help="split, fit, calibrate and report coverage")
    run.add_argument("--config", help="RunConfig JSON file")
    run.add_argument("--data", help="dataset prefix; generated in memory when omitted")
    _add_generation_flags(run)
    run.add_argument("--fractions", type=_float_list)
    run.add_argument("--alphas", type=_float_list)
    run.add_argument("--norm", choices=[n.value for n in NormKind])
    run.add_argument("--trees", type=int, dest="num_trees")
    run.add_argument("--tree-max-depth", type=int)
    run.add_argument("--min-samples-split", type=int)
    run.add_argument("--min-samples-leaf", type=int)
    run.add_argument("--no-bootstrap", action="store_true")
    run.add_argument("--split-seed", type=int)
    run.add_argument("--train-seed", type=int)
    run.add_argument("--out", help="output prefix; writes <out>.csv and <out>.json")

    rep = sub.add_parser("report", help="merge report JSON files into one long CSV")
    rep.add_argument("reports", nargs="+", help="report JSON files")
    rep.add_argument("--out", help="merged CSV path (stdout when omitted)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    gen_updates = {
        name: getattr(args, name)
        for name in ("num_samples", "min_depth", "max_depth", "shots", "bases",
                     "feature_mode", "two_qubit_prob")
        if getattr(args, name, None) is not None
    }
    cfg.generation = replace(cfg.generation, **gen_updates)
    if getattr(args, "seed", None) is not None:
        cfg.seeds.generation = args.seed
    if args.command != "run":
        return cfg

    if args.out is not None:
        cfg.out = args.out
    if args.data is not None:
        cfg.data = args.data
    if args.fractions is not None:
        cfg.fractions = args.fractions
    if args.alphas is not None:
        cfg.alphas = args.alphas
    if args.norm is not None:
        cfg.norm = args.norm
    forest_updates = {
        "num_trees": args.num_trees,
        "max_depth": args.tree_max_depth,
        "min_samples_split": args.min_samples_split,
        "min_samples_leaf": args.min_samples_leaf,
    }
    cfg.forest = replace(
        cfg.forest, **{k: v for k, v in forest_updates.items() if v is not None}
    )
    if args.no_bootstrap:
        cfg.forest = replace(cfg.forest, bootstrap=False)
    if args.split_seed is not None:
        cfg.seeds.split = args.split_seed
    if args.train_seed is not None:
        cfg.seeds.train = args.train_seed
    return cfg


def cmd_generate(cfg: RunConfig, out: Optional[str] = None) -> int:
    ds = dataset.generate(cfg.generation.to_config(), cfg.seeds.generation)
    csv_path, manifest_path = dataset.save(ds, out or cfg.data or "data/dataset")
    print(f"samples after dedup: {len(ds)} (requested {cfg.generation.num_samples})")
    print(f"wrote {csv_path}")
    print(f"wrote {manifest_path}")
    return 0


def _manifest_echo(ds: dataset.Dataset) -> dict:
    # the timestamp would make otherwise identical runs differ byte-for-byte
    echo = {k: v for k, v in ds.manifest.items() if k != "generated_at"}
    echo["checksum_fnv1a64"] = ds.checksum
    return echo


def execute_run(cfg: RunConfig) -> CoverageReport:
    """Load or generate the dataset, then split, fit and evaluate."""
    if cfg.data:
        ds = dataset.load(cfg.data)
    else:
        ds = dataset.generate(cfg.generation.to_config(), cfg.seeds.generation)
    splits = dataset.split(ds, cfg.fractions, cfg.seeds.split)
    X_train, Y_train = ds.arrays(splits.train)
    model = forest.fit(X_train, Y_train, cfg.forest, cfg.seeds.train)
    meta = {
        "run_id": Path(cfg.out).name,
        "dataset": _manifest_echo(ds),
        "split": {
            "seed": cfg.seeds.split,
            "fractions": list(cfg.fractions),
            "sizes": [len(splits.train), len(splits.cal), len(splits.test)],
        },
        "forest": {"seed": cfg.seeds.train, "params": asdict(cfg.forest)},
    }
    return conformal.evaluate(model, splits, ds, cfg.alphas, NormKind(cfg.norm), meta)


def cmd_run(cfg: RunConfig) -> int:
    report = execute_run(cfg)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out.with_name(out.name + ".csv")
    json_path = out.with_name(out.name + ".json")
    csv_path.write_text(report.to_csv())
    json_path.write_text(report.to_json())
    print(report.table(), end="")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return 0


def merge_reports(paths: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MERGED_HEADER)
    for path in paths:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise QConformalError(f"cannot read report {path}: {exc}") from exc
        report = CoverageReport.from_dict(doc)
        run_id = report.meta.get("run_id", Path(path).stem)
        for row in report.csv_rows():
            writer.writerow([run_id, *row])
    return buf.getvalue()


def cmd_report(args: argparse.Namespace) -> int:
    text = merge_reports(args.reports)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = resolve_config(args)
        if args.command == "generate":
            return cmd_generate(cfg, args.out)
        return cmd_run(cfg)
    except (QConformalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
