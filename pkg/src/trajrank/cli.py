"""Command-line interface.

Exit codes: 0 success, 2 config validation failure, 3 artifact lineage
mismatch, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .docio import save_doc
from .errors import ConfigError, DivergenceError, LineageError
from .ingestion import synth_trajectories, write_trajnet


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajrank",
                                     description="probabilistic trajectory forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic TrajNet corpus")
    p.add_argument("--scenario", default="three-regime",
                   help="preset name (two-regime | three-regime | constant-velocity)")
    p.add_argument("--scenario-file", default=None, help="custom scenario JSON")
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output .txt path")
    p.add_argument("--labels", default=None, help="label sidecar path (default <out>_labels.json)")

    for name, fn in [("cluster", None), ("train", None), ("propose", None),
                     ("rank", None), ("report", None)]:
        p = sub.add_parser(name, help=f"run the {name} stage")
        _add_common(p)

    p = sub.add_parser("evaluate", help="run the full pipeline over seeded runs")
    _add_common(p)
    p.add_argument("--runs", type=int, default=None, help="override metrics.runs")
    return parser


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        doc = dict(cfg.doc)
        doc["seed"] = int(args.seed)
        cfg = harness.make_config(doc, base_dir=cfg.base_dir)
    return cfg


def _run_synth(args) -> None:
    if args.scenario_file:
        from .docio import load_doc
        from .ingestion import Scenario
        scenario = Scenario.from_doc(load_doc(args.scenario_file))
    else:
        scenario = harness.scenario_preset(args.scenario)
    trajs, labels = synth_trajectories(scenario, args.n, args.seed)
    write_trajnet(args.out, trajs)
    label_path = args.labels or str(Path(args.out).with_suffix("")) + "_labels.json"
    save_doc(label_path, {
        "schema_version": 1,
        "kind": "labels",
        "scenario": scenario.to_doc(),
        "seed": args.seed,
        "labels": {t.agent_id: int(l) for t, l in zip(trajs, labels)},
    })
    print(f"wrote {args.n} trajectories to {args.out} (labels: {label_path})")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            _run_synth(args)
            return 0
        cfg = _load(args)
        out = Path(args.out)
        if args.command == "cluster":
            info = harness.cmd_cluster(cfg, out)
            print(f"cluster: k={info['k']} metric={info['metric']}")
        elif args.command == "train":
            info = harness.cmd_train(cfg, out)
            print(f"train: {info['kind']}")
        elif args.command == "propose":
            info = harness.cmd_propose(cfg, out)
            print(f"propose: {info['n']} samples")
        elif args.command == "rank":
            info = harness.cmd_rank(cfg, out)
            print(f"rank: {info['n']} samples")
        elif args.command == "evaluate":
            report = harness.cmd_evaluate(cfg, out, runs=args.runs)
            row = report.rows[0]
            print(f"evaluate: top1 {row.top1_ade:.3f}/{row.top1_fde:.3f} "
                  f"top3 {row.top3_ade:.3f}/{row.top3_fde:.3f} "
                  f"runs={row.runs}")
        elif args.command == "report":
            info = harness.cmd_report(cfg, out)
            print(f"report: {info['figures']} figures, {info['rows']} rows")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LineageError as exc:
        print(f"lineage error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
