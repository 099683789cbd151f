"""Command line entry point ``acqsearch``."""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
import time

from . import __version__, acquisition, engine
from .afdsl import DslError, Program
from .mutation import MutatorConfigError
from .presets import get_preset, load_user_presets, PRESETS
from .search import SearchConfigError, load_config, run_search

logger = logging.getLogger("acqsearch")


def _resolve_af(spec: str):
    """(label, policy, DSL text or None) for an AF id or a DSL file path."""
    try:
        af_id = acquisition.parse_af_id(spec)
        return af_id, af_id, acquisition.DSL_FORMS.get(af_id)
    except ValueError:
        pass
    if not os.path.isfile(spec):
        raise ValueError(f"{spec!r} is neither a known AF ({', '.join(acquisition.AF_IDS)}) "
                         "nor a DSL file")
    with open(spec) as fh:
        prog = Program.from_text(fh.read())
    label = os.path.splitext(os.path.basename(spec))[0]
    return label, prog, prog.text


def _run_one(job):
    label, policy, experiment, inst, trials = job
    result = engine.run_bo(inst, policy, trials=trials, seed=inst.seed)
    return experiment, label, inst.seed, engine.regret_curve(result)


def cmd_eval(args) -> int:
    if args.presets_file:
        load_user_presets(args.presets_file)
    preset = get_preset(args.preset)
    afs = [_resolve_af(a) for a in (args.af or ["ei"])]
    labels = [a[0] for a in afs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate AF labels {labels}")
    trials = args.trials or preset.trials
    tests = list(preset.test_instances(args.instances, args.seed))
    jobs = [(label, policy, f"{preset.name}:{obj_id}", inst, trials)
            for label, policy, _ in afs for obj_id, _, inst in tests]
    start = time.monotonic()
    if args.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(args.workers) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(j) for j in jobs]
    os.makedirs(args.out, exist_ok=True)
    curves_path = os.path.join(args.out, "curves.csv")
    engine.write_curves(curves_path, rows)
    summary = engine.summarize(engine.read_curves(curves_path))
    engine.write_summary(os.path.join(args.out, "summary.csv"), summary)
    manifest = {
        "version": __version__,
        "command": "eval",
        "preset": preset.name,
        "trials": trials,
        "instances_per_function": args.instances,
        "seed": args.seed,
        "afs": [{"label": label, "dsl": text} for label, _, text in afs],
        "objectives": [inst.to_record() for _, _, inst in tests],
        "files": ["curves.csv", "summary.csv"],
        "elapsed_seconds": time.monotonic() - start,
    }
    if not args.no_plot:
        from .plotting import plot_summary

        plot_summary(summary, os.path.join(args.out, "regret.png"))
        manifest["files"].append("regret.png")
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    finals = {}
    for experiment, af, t, mean, _, _ in summary:
        if t == trials:
            finals[(experiment, af)] = mean
    for (experiment, af), mean in sorted(finals.items()):
        print(f"{experiment}\t{af}\tfinal mean normalized regret {mean:.4g}")
    print(f"wrote {args.out}")
    return 0


def cmd_search(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    report = run_search(cfg)
    print(json.dumps(report.to_dict()["program"]))
    print(f"train aggregate {report.program.aggregate:.6f} after {report.iterations} "
          f"iterations ({report.correct}/{report.proposed} candidates correct)")
    if report.archive_path:
        print(f"archive {report.archive_path}")
    return 0


def cmd_list_afs(args) -> int:
    for af_id in acquisition.AF_IDS:
        origin, formula = acquisition.CATALOG[af_id]
        print(f"{af_id:16s} {origin:36s} {formula}")
    return 0


def cmd_export_curves(args) -> int:
    curves = engine.read_curves(args.input)
    engine.write_curves(args.output, [(e, a, s, c) for (e, a, s), c in curves.items()])
    return 0


def cmd_validate_config(args) -> int:
    cfg = load_config(args.path)
    print(f"ok: {len(cfg.train_functions)} training and {len(cfg.validation_functions)} "
          f"validation functions, mutator {cfg.mutator.kind}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acqsearch", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="run BO with fixed AFs on a benchmark preset")
    p.add_argument("--af", action="append", help="AF id or DSL file; repeatable")
    p.add_argument("--preset", required=True, help=f"one of {', '.join(PRESETS)}")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="eval-out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--presets-file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="evolve an AF program from a JSON run config")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("list-afs", help="list builtin and discovered AFs")
    p.set_defaults(func=cmd_list_afs)

    p = sub.add_parser("export-curves", help="re-read and rewrite a curves CSV")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_export_curves)

    p = sub.add_parser("validate-config", help="check a search config without running it")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SearchConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MutatorConfigError as exc:
        print(f"mutator error: {exc}", file=sys.stderr)
        return 3
    except (KeyError, ValueError, DslError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
