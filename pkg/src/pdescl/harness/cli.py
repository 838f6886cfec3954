"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from ..errors import ConfigError, PdesclError
from ..jets import load_checkpoint
from .presets import PRESETS, preset, preset_names
from .runner import (
    EXIT_ABORT,
    EXIT_CONFIG,
    EXIT_OK,
    complexity_report,
    evaluate,
    resolve_config,
    run_experiment,
    sample_diagnostics,
)


def _progress(every: int):
    def report(k, losses, dual):
        if every and k % every == 0:
            lam = " ".join(f"{n}={v:.4g}" for n, v in dual.as_dict().items())
            print(f"epoch {k}: losses {[float(f'{v:.4g}') for v in losses]} {lam}", file=sys.stderr, flush=True)

    return report


def _apply_overrides(source: str, args) -> object:
    cfg = resolve_config(source)
    train = {}
    if args.seed is not None:
        train["seed"] = args.seed
    if args.epochs is not None:
        train["epochs"] = args.epochs
    return cfg.with_overrides(**train) if train else cfg


def cmd_train(args) -> int:
    if len(args.config) > 1 and args.jobs > 1:
        # one process per experiment
        def launch(cfg):
            cmd = [sys.executable, "-m", "pdescl.harness.cli", "train", cfg]
            if args.output_root:
                cmd += ["--output-root", args.output_root]
            if args.seed is not None:
                cmd += ["--seed", str(args.seed)]
            if args.epochs is not None:
                cmd += ["--epochs", str(args.epochs)]
            return subprocess.run(cmd).returncode

        with ThreadPoolExecutor(args.jobs) as pool:
            codes = list(pool.map(launch, args.config))
        return max(codes)
    worst = EXIT_OK
    for source in args.config:
        try:
            cfg = _apply_overrides(source, args)
        except ConfigError as exc:
            print(str(exc), file=sys.stderr)
            worst = max(worst, EXIT_CONFIG)
            continue
        outcome = run_experiment(cfg, args.output_root, _progress(args.log_every))
        if outcome.status != EXIT_OK:
            print(outcome.message, file=sys.stderr)
        else:
            m = outcome.metrics
            print(f"{cfg.name}: relative_l2={m['relative_l2']:.6g} artifacts in {outcome.directory}")
        worst = max(worst, outcome.status)
    return worst


def cmd_evaluate(args) -> int:
    try:
        cfg = resolve_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    try:
        model, _ = load_checkpoint(args.checkpoint)
        spec = cfg.bvp()
        report = evaluate(model, spec, cfg.eval_grid(spec), cfg.coefficient_grid(), cfg.data["evaluation"]["dt"])
    except (PdesclError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ABORT
    out = report.to_dict()
    out.update({"config_hash": cfg.hash, "seed": cfg.seed})
    text = json.dumps(out, sort_keys=True, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    if report.per_coefficient is not None and args.heatmap:
        lines = [f"# config_hash={cfg.hash} seed={cfg.seed}", ",".join(list(spec.coeff_names) + ["relative_l2"])]
        lines += [",".join(repr(v) for v in c) + f",{e!r}" for c, e in report.per_coefficient]
        Path(args.heatmap).write_text("\n".join(lines) + "\n")
    print(text)
    return EXIT_OK


def cmd_sample_diagnostics(args) -> int:
    try:
        out = sample_diagnostics(args.config, args.checkpoint, args.output_root)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except PdesclError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ABORT
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        a = json.loads(Path(args.report_a).read_text())
        b = json.loads(Path(args.report_b).read_text())
        pct = complexity_report(a, b)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"cannot read reports: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PdesclError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ABORT
    print(f"{pct:.4f}%")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in preset_names():
        cfg = PRESETS[name]
        print(f"{name:36s} {cfg['problem']['id']:20s} {cfg['train']['mode']:5s} epochs={cfg['train']['epochs']}")
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        text = json.dumps(preset(args.name), indent=2)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    if args.path:
        Path(args.path).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdescl", description="Constrained-learning PDE surrogates")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train and evaluate one or more configs (file paths or preset names)")
    t.add_argument("config", nargs="+")
    t.add_argument("--output-root")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--jobs", type=int, default=1, help="run several configs as parallel processes")
    t.add_argument("--log-every", type=int, default=1000)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="error of a checkpoint against the oracle")
    e.add_argument("checkpoint")
    e.add_argument("config")
    e.add_argument("--output", help="write the error report JSON here")
    e.add_argument("--heatmap", help="write per-coefficient errors as CSV here")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sample-diagnostics", help="one epoch of MH samples: acceptance rates and histograms")
    s.add_argument("config")
    s.add_argument("--checkpoint")
    s.add_argument("--output-root")
    s.set_defaults(func=cmd_sample_diagnostics)

    c = sub.add_parser("compare-complexity", help="relative operator evaluations per epoch of two metrics files")
    c.add_argument("report_a")
    c.add_argument("report_b")
    c.set_defaults(func=cmd_compare)

    lp = sub.add_parser("list-presets", help="list built-in configurations")
    lp.set_defaults(func=cmd_list)

    x = sub.add_parser("export-preset", help="write a preset as an editable config file")
    x.add_argument("name")
    x.add_argument("path", nargs="?")
    x.set_defaults(func=cmd_export)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
