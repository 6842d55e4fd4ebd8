"""
Command-line entry point.

Subcommands: ``synth``, ``nowcast``, ``train-power``, ``predict-power``,
``evaluate`` and ``aggregate``.  All but ``synth`` read a JSON
:class:`~pvnowcast.pipeline.RunConfig`; ``--seed``, ``--workers``,
``--alpha`` and ``--model`` override the file.  The output root can be
redirected with the ``PVNOWCAST_OUTPUT`` environment variable.

Exit codes: 0 when all requested work completed, 1 when nothing could be
done (or inputs are missing), 3 when some issue times were skipped.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .errors import PVNowcastError
from .synth import SyntheticSpec, generate_dataset

EXIT_OK, EXIT_FAIL, EXIT_PARTIAL = 0, 1, 3

log = logging.getLogger("pvnowcast")


def _load_config(args) -> pipeline.RunConfig:
    cfg = pipeline.RunConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.nowcast = replace(cfg.nowcast, seed=args.seed)
        cfg.perturbation = replace(cfg.perturbation, seed=args.seed)
    if args.workers is not None:
        cfg.workers = args.workers
    if args.alpha is not None:
        cfg.alpha = args.alpha
    if args.model is not None:
        if args.model not in pipeline.MODELS:
            raise ValueError(f"unknown model {args.model!r}; choose from {pipeline.MODELS}")
        cfg.model = args.model
    return cfg


def cmd_synth(args) -> int:
    params = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        params["seed"] = args.seed
    for name in ("p95_range", "elevation_range"):
        if name in params:
            params[name] = tuple(params[name])
    spec = SyntheticSpec(**params)
    manifest = generate_dataset(spec, args.out)
    log.info("synth: %d days, %d stations -> %s", spec.n_days, len(manifest["stations"]), args.out)
    return EXIT_OK


def cmd_nowcast(args) -> int:
    cfg = _load_config(args)
    result = pipeline.run_nowcast(cfg, args.issue_time or None)
    written, skipped = result["written"], result["skipped"]
    print(f"nowcast {cfg.model}: {len(written)} written, {len(skipped)} skipped")
    if not written:
        return EXIT_FAIL
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_train_power(args) -> int:
    cfg = _load_config(args)
    summary = pipeline.train_power(cfg)
    print(
        f"train-power: {summary['admitted']} admitted, {summary['rejected']} rejected, "
        f"fleet test nRMSE {summary['fleet_test_nrmse']:.4f}"
    )
    return EXIT_OK if summary["admitted"] else EXIT_FAIL


def cmd_predict_power(args) -> int:
    cfg = _load_config(args)
    path = pipeline.predict_fleet(cfg)
    print(f"predict-power: wrote {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    tables = pipeline.evaluate(cfg)
    for name, table in tables.items():
        print(f"evaluate: {len(table.rows)} {name} score cells")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    cfg = _load_config(args)
    report = pipeline.aggregate(cfg)
    s = report["seasons"]["all"]
    print(
        f"aggregate {report['model']}: {s['n_days']} days, "
        f"{s['frac_below_1pct']:.3f} below 1%, {s['frac_below_10pct']:.3f} below 10%"
    )
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "nowcast": cmd_nowcast,
    "train-power": cmd_train_power,
    "predict-power": cmd_predict_power,
    "evaluate": cmd_evaluate,
    "aggregate": cmd_aggregate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pvnowcast", description="PV nowcasting chain")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "synth", help="JSON configuration file")
        p.add_argument("--seed", type=int)
        if name == "synth":
            p.add_argument("--out", required=True, help="dataset directory")
            continue
        p.add_argument("--workers", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--model", choices=pipeline.MODELS)
        if name == "nowcast":
            p.add_argument("--issue-time", action="append", help="ISO-8601 UTC time (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (PVNowcastError, FileNotFoundError, ValueError) as exc:
        print(f"pvnowcast {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
