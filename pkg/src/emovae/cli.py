"""Command-line entry point.

Exit status: 0 on success, 1 on a runtime or numeric failure, 2 on a usage
or configuration error. Each subcommand writes its resolved configuration to
``config.json`` in its output directory before doing any work.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import BUILD_ID, container, plotting
from .config import load_config
from .corpus import EMOTIONS, SyntheticConfig, generate_synthetic_corpus, load_manifest, map_categorical
from .errors import ConfigError, EmovaeError
from .experiment import (DEFAULT_SWEEP_SIZES, eligible_records, latent_sweep, load_segments,
                         representation_spec, run_experiment)
from .gradcheck import TOLERANCE, run_gradcheck, summarize
from .models import CVAE, FitConfig, SegmentAutoencoder, fit, one_hot
from .dsp import Standardizer
from .numeric import RngStream
from .report import write_json, write_report, write_sweep

log = logging.getLogger("emovae")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(EmovaeError):
    """Bad combination of flags that argparse cannot catch on its own."""


def _sizes(text):
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return sizes


def build_parser():
    p = argparse.ArgumentParser(prog="emovae",
                                description="LogMel + AE/VAE/CVAE + LSTM speech emotion pipeline")
    p.add_argument("--version", action="version", version=BUILD_ID)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("synth-corpus", help="write the deterministic synthetic corpus")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--utterances-per-speaker", type=int, default=12)

    def with_config(sp):
        sp.add_argument("--manifest", type=Path, help="overrides the manifest in the config")
        sp.add_argument("--config", type=Path, help="JSON run configuration; defaults if omitted")

    s = sub.add_parser("extract", help="cache LogMel segments in the container format")
    with_config(s)
    s.add_argument("--out", required=True, type=Path)

    s = sub.add_parser("train-rep", help="train one representation model on the whole corpus")
    s.add_argument("--kind", choices=("ae", "vae", "cvae"), required=True)
    with_config(s)
    s.add_argument("--out", required=True, type=Path)

    for name, help_ in (("run", "cross-validated experiment and report"),
                        ("sweep", "latent-size sweep")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--task", choices=("categorical", "dimensional"))
        s.add_argument("--kind", choices=("ae", "vae", "cvae"))
        with_config(s)
        s.add_argument("--report-dir", required=True, type=Path)
        s.add_argument("--jobs", type=int, help="parallel folds (default from config, 1)")
        s.add_argument("--no-figures", action="store_true", help="skip PNG output")
        if name == "sweep":
            s.add_argument("--sizes", type=_sizes, default=list(DEFAULT_SWEEP_SIZES),
                           help="comma-separated latent sizes (default 32,64,128,256,512)")

    s = sub.add_parser("gradcheck", help="finite-difference check of all backward passes")
    s.add_argument("--cases", type=int, default=400, help="random configurations, spread evenly over the four suites")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, help="optional directory for per-case results")
    return p


def _resolve(args, **extra):
    overrides = {k: v for k, v in extra.items() if v is not None}
    if getattr(args, "manifest", None) is not None:
        overrides["manifest"] = str(args.manifest)
    cfg = load_config(args.config, overrides)
    if cfg.manifest is None:
        raise UsageError("no manifest: pass --manifest or set \"manifest\" in the config")
    return cfg


def _echo(cfg_dict, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", cfg_dict)


def cmd_synth_corpus(args):
    if args.utterances_per_speaker < 1:
        raise UsageError("--utterances-per-speaker must be at least 1")
    cfg = SyntheticConfig(seed=args.seed, utterances_per_speaker=args.utterances_per_speaker)
    _echo({"build": BUILD_ID, "synthetic": vars(cfg)}, args.out)
    path = generate_synthetic_corpus(args.out, seed=args.seed,
                                     utterances_per_speaker=args.utterances_per_speaker)
    print(f"manifest: {path}")


def cmd_extract(args):
    cfg = _resolve(args)
    _echo(cfg.to_dict(), args.out)
    records = load_manifest(cfg.manifest)
    segments = load_segments(records, cfg.dsp)
    tensors = {}
    for r in records:
        for k, seg in enumerate(segments[r.id]):
            tensors[f"{r.id}/{k:05d}"] = seg
    meta = {"build": BUILD_ID, "kind": "segments", "dsp": cfg.to_dict()["dsp"],
            "utterances": {r.id: len(segments[r.id]) for r in records}}
    container.save(args.out / "segments.emovae", tensors, meta)
    print(f"{len(records)} utterances, {len(tensors)} segments -> {args.out / 'segments.emovae'}")


def cmd_train_rep(args):
    cfg = _resolve(args, model_kind=args.kind)
    _echo(cfg.to_dict(), args.out)
    records = load_manifest(cfg.manifest)
    if cfg.model_kind == CVAE:
        records = eligible_records(records, "categorical")
    if not records:
        raise EmovaeError("no usable records in the manifest")
    segments = load_segments(records, cfg.dsp)
    std = Standardizer.fit(np.vstack([segments[r.id] for r in records]))
    X = np.vstack([std.transform(segments[r.id]) for r in records])
    conditions = None
    if cfg.model_kind == CVAE:
        conditions = np.vstack([one_hot(np.full(len(segments[r.id]), map_categorical(r.categorical_raw)),
                                        len(EMOTIONS)) for r in records])
    seed = cfg.seeds[0]
    rng = RngStream(seed)
    model = SegmentAutoencoder(representation_spec(cfg, len(EMOTIONS)), rng.child(1),
                               cfg.representation.adam.build())
    rep = cfg.representation
    result = fit(model, X, conditions, FitConfig(rep.epochs, rep.batch_size, rep.recon_threshold,
                                                 rep.kl_weight), rng.child(2))
    model.save(args.out / "representation.emovae")
    container.save(args.out / "standardizer.emovae", {"mean": std.mean, "std": std.std},
                   {"build": BUILD_ID, "kind": "standardizer"})
    with open(args.out / "loss_history.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "total", "recon", "kl"))
        for e, h in enumerate(result.history, start=1):
            w.writerow((e, *h))
    plotting.plot_loss_history({cfg.model_kind: result.history}, args.out / "loss_history.png",
                               title=f"{cfg.model_kind.upper()} training loss")
    last = result.history[-1]
    print(f"{cfg.model_kind}: {len(result.history)} epochs, final recon {last.recon:.4f}, kl {last.kl:.4f}")


def cmd_run(args):
    cfg = _resolve(args, task=args.task, model_kind=args.kind, jobs=args.jobs)
    _echo(cfg.to_dict(), args.report_dir)
    records = load_manifest(cfg.manifest)
    ckpt = args.report_dir / "checkpoints" if cfg.save_checkpoints else None
    report = run_experiment(records, cfg, ckpt, cfg.jobs)
    write_report(report, args.report_dir, figures=not args.no_figures)
    print((args.report_dir / "report.md").read_text(encoding="utf-8"), end="")


def cmd_sweep(args):
    cfg = _resolve(args, task=args.task, model_kind=args.kind, jobs=args.jobs)
    cfg_dict = cfg.to_dict()
    cfg_dict["sweep_sizes"] = sorted(args.sizes)
    _echo(cfg_dict, args.report_dir)
    records = load_manifest(cfg.manifest)
    ckpt = args.report_dir / "checkpoints" if cfg.save_checkpoints else None
    rows, reports = latent_sweep(records, cfg, args.sizes, ckpt, cfg.jobs)
    for size, rep in reports.items():
        write_report(rep, args.report_dir / f"latent{size}", figures=not args.no_figures)
    write_sweep(rows, cfg.task, args.report_dir, figures=not args.no_figures)
    print((args.report_dir / "sweep.md").read_text(encoding="utf-8"), end="")


def cmd_gradcheck(args):
    if args.cases < 1:
        raise UsageError("--cases must be at least 1")
    if args.out is not None:
        _echo({"build": BUILD_ID, "cases": args.cases, "seed": args.seed, "tolerance": TOLERANCE},
              args.out)
    results = run_gradcheck(args.cases, args.seed)
    rows, ok = summarize(results)
    for suite, (n, worst, passed) in rows.items():
        print(f"{suite:5s} cases={n:3d} max_rel_error={worst:.3e} {'ok' if passed else 'FAIL'}")
    if args.out is not None:
        with open(args.out / "gradcheck.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("case", "suite", "parameter", "max_rel_error", "description"))
            for r in results:
                for name, err in r.errors.items():
                    w.writerow((r.index, r.suite, name, err, r.description))
    print("gradcheck passed" if ok else f"gradcheck FAILED (tolerance {TOLERANCE:g})")
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {"synth-corpus": cmd_synth_corpus, "extract": cmd_extract, "train-rep": cmd_train_rep,
            "run": cmd_run, "sweep": cmd_sweep, "gradcheck": cmd_gradcheck}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        status = COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"emovae {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EmovaeError, OSError) as exc:
        print(f"emovae {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if status is None else status


if __name__ == "__main__":
    sys.exit(main())
