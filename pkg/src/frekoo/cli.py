"""Command-line entry point: ``frekoo {generate,train,eval,ablate,sweep,theory}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure
(including training divergence), 3 theory-check violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import harness, theory
from .base_model import FlatParams
from .config import load_config
from .datasets import write_domain_csvs
from .exceptions import (DatasetUnavailableError, FrekooError, IngestionError, InvalidConfigError,
                         InvalidInputError, TrainingDivergedError)
from .trainer import load_outcome_arrays, save_outcome, train_frekoo, write_training_log

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_THEORY = 0, 1, 2, 3

log = logging.getLogger("frekoo")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    config: str
    out: str
    seeds: list[int]
    timestamp: str

    @classmethod
    def create(cls, command, config, out, seeds):
        # SOURCE_DATE_EPOCH pins the timestamp for reproducible manifests
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        when = time.gmtime(int(epoch)) if epoch else time.gmtime()
        return cls(command, str(config or "<default>"), str(out), [int(s) for s in seeds],
                   time.strftime("%Y-%m-%dT%H:%M:%SZ", when))

    def write(self, out_dir: Path):
        (out_dir / "manifest.json").write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _add_common(p, seeds=True):
    p.add_argument("--config", help="YAML config (default: shipped per-dataset settings)")
    p.add_argument("--dataset", default="2-moons", help="dataset section name")
    p.add_argument("--out", default="runs", help="output directory")
    if seeds:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--seed", type=int, help="single seed")
        g.add_argument("--seeds", type=int, nargs="+", help="seed list")
    p.add_argument("--epochs", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frekoo", description="Frequency-split Koopman parameter extrapolation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("generate", help="write a synthetic dataset as one CSV per domain")
    p.add_argument("--dataset", default="2-moons")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data")

    p = sub.add_parser("train", help="train one run and write log, checkpoint and trajectory dump")
    _add_common(p)
    p.add_argument("--variant", default="full", choices=harness.VARIANTS)

    p = sub.add_parser("eval", help="evaluate a checkpoint, or compare against the baselines")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint written by 'train'")

    p = sub.add_parser("ablate", help="run ablation variants")
    _add_common(p)
    p.add_argument("--variant", nargs="+", choices=harness.VARIANTS, default=list(harness.VARIANTS))

    p = sub.add_parser("sweep", help="sensitivity sweeps over tau and the loss weights")
    _add_common(p)
    p.add_argument("--param", nargs="+", choices=("tau", "alpha", "beta", "gamma"),
                   default=["tau", "alpha", "beta", "gamma"])

    p = sub.add_parser("theory", help="Monte-Carlo stability and random-walk gap checks")
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--sequences", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write a JSON report here")
    return parser


def _settings(args):
    settings = load_config(args.config).dataset(args.dataset)
    overrides = {k: getattr(args, k) for k in ("epochs", "tau", "alpha", "beta", "gamma")
                 if getattr(args, k, None) is not None}
    train = settings.train.replace(**overrides) if overrides else settings.train
    if getattr(args, "seeds", None):
        seeds = args.seeds
    elif getattr(args, "seed", None) is not None:
        seeds = [args.seed]
    else:
        seeds = list(settings.seeds)
    return settings, train, seeds


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    settings = load_config(args.config).dataset(args.dataset)
    if "generator" not in settings.source:
        raise UsageError(f"dataset {args.dataset!r} is not synthetic; only generator datasets can be written")
    ds = harness.load_dataset(settings.source, args.seed, args.dataset)
    out = _out_dir(args)
    paths = write_domain_csvs(ds, out)
    print(f"wrote {len(paths)} domain files to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    settings, train, seeds = _settings(args)
    train = harness.variant_config(args.variant, train)
    out = _out_dir(args)
    RunManifest.create("train", args.config, out, seeds).write(out)
    for seed in seeds:
        cfg = train.replace(seed=seed)
        ds = harness.load_dataset(settings.source, seed, settings.name)
        every = max(1, cfg.epochs // 10)

        def progress(epoch, _trainer, b):
            if (epoch + 1) % every == 0:
                log.info("seed %d epoch %d total %.6g", seed, epoch + 1, b.total)

        outcome = train_frekoo(ds, cfg, callback=progress)
        run_dir = out / f"seed_{seed}" if len(seeds) > 1 else out
        run_dir.mkdir(parents=True, exist_ok=True)
        write_training_log(run_dir / "train_log.csv", outcome.log)
        save_outcome(run_dir / "checkpoint.npz", outcome)
        harness.write_trajectory_dump(run_dir / "trajectory.csv", outcome)
        value = harness.evaluate(outcome.theta_next, outcome.head, ds.target,
                                 outcome.label_shift, outcome.label_scale)
        print(f"seed {seed}: target {harness.metric_for(ds.kind)} = {value:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    settings, train, seeds = _settings(args)
    out = _out_dir(args)
    if args.checkpoint:
        path = Path(args.checkpoint)
        if not path.exists():
            raise FileNotFoundError(f"checkpoint {path} not found")
        _state, _header, meta, _bank, theta_next, head = load_outcome_arrays(path)
        seed = meta["config"]["seed"]
        ds = harness.load_dataset(settings.source, seed, settings.name)
        value = harness.evaluate(FlatParams(theta_next, head.layout()), head, ds.target,
                                 meta["label_shift"], meta["label_scale"])
        res = harness.EvalResult("frekoo", ds.name, harness.metric_for(ds.kind), [value], [seed])
        results = [res]
    else:
        results = [harness.run_frekoo(settings.source, train, seeds, settings.name, args.jobs)]
        for kind in ("offline", "last_domain", "inc_finetune"):
            results.append(harness.run_baseline(kind, settings.source, train, seeds, settings.name, args.jobs))
    RunManifest.create("eval", args.config, out, seeds).write(out)
    harness.write_results(out / "results.csv", results)
    harness.write_summary(out / "summary.json", results)
    _print_table(results)
    return EXIT_OK


def cmd_ablate(args) -> int:
    settings, train, seeds = _settings(args)
    out = _out_dir(args)
    results = [harness.run_ablation(v, settings.source, train, seeds, settings.name, args.jobs)
               for v in args.variant]
    RunManifest.create("ablate", args.config, out, seeds).write(out)
    harness.write_results(out / "ablation.csv", results)
    harness.write_summary(out / "ablation_summary.json", results)
    _print_table(results)
    return EXIT_OK


def cmd_sweep(args) -> int:
    settings, train, seeds = _settings(args)
    out = _out_dir(args)
    RunManifest.create("sweep", args.config, out, seeds).write(out)
    for param in args.param:
        results = harness.run_sensitivity(settings.source, train, param, seeds=seeds,
                                          name=settings.name, jobs=args.jobs)
        harness.write_sweep(out / f"sweep_{param}.csv", param, results)
        _print_table(results)
    return EXIT_OK


def cmd_theory(args) -> int:
    stab = theory.stability_suite(n_cases=args.cases, seed=args.seed)
    gaps = theory.gap_suite(n_sequences=args.sequences, seed=args.seed)
    gaps_ok = all(g.ok() for g in gaps)
    print(f"stability: {stab.n_cases} operators, {stab.violations} violations, "
          f"max measured/bound {stab.max_ratio:.6f}, {stab.seconds:.2f} s")
    for g in gaps:
        print(f"gap {g.shape}: expected {g.expected:.12g}, spread {g.spread:.3e}, error {g.error:.3e}")
    if args.out:
        report = {"stability": {"cases": stab.n_cases, "violations": stab.violations,
                                "max_ratio": stab.max_ratio, "failures": stab.failures},
                  "gap": [{"shape": list(g.shape), "expected": g.expected, "spread": g.spread,
                           "error": g.error} for g in gaps]}
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if stab.ok and gaps_ok else EXIT_THEORY


def _print_table(results):
    for r in results:
        print(f"{r.method:<16} {r.dataset:<10} {r.metric:<18} {r.mean:8.3f} +- {r.std:.3f}  (n={len(r.values)})")


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate,
            "sweep": cmd_sweep, "theory": cmd_theory}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"frekoo: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"frekoo: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergedError as exc:
        print(f"frekoo: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (InvalidConfigError, InvalidInputError, IngestionError, DatasetUnavailableError,
            FileNotFoundError) as exc:
        print(f"frekoo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FrekooError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"frekoo: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
