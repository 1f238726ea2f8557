"""Command-line entry point: gen-synth, meta-train, eval-irrf, eval-fsocc,
eval-fsor, theory-check and serve.

Every command accepts ``--config FILE`` (JSON whose keys mirror the flag
names with dashes as underscores); explicit flags override config values and
unknown config keys are rejected. Every report embeds the fully resolved
configuration and seed so runs can be replayed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import RocchioWeights
from .corpus import SyntheticConfig, generate_synthetic, load_corpus, save_corpus
from .episodes import TaskConfig
from .metatrain import MetaTrainConfig, meta_train
from .model import AdaptConfig, load_checkpoint, resolve_params, save_checkpoint
from .protocols import (IrrfConfig, calibrate_fsocc_thresholds, evaluate_irrf,
                        run_fsocc, run_fsor)
from .theory import format_report_table, run_all_checks

_ABLATION_FLAGS = {"none": "none", "v": "v_only", "p": "p_only", "both": "both"}


def _add_common(p: argparse.ArgumentParser, suppress: bool):
    def default(value):
        return argparse.SUPPRESS if suppress else value

    p.add_argument("--config", default=default(None),
                   help="JSON config file; explicit flags override its values")
    p.add_argument("--seed", type=int, default=default(0), help="base random seed")
    p.add_argument("--threads", type=int, default=default(None),
                   help="worker cap for parallel sections (default: available parallelism)")


def build_parser(suppress: bool = False) -> argparse.ArgumentParser:
    """The CLI surface. With ``suppress``, omitted flags are absent from the
    namespace, which lets dispatch distinguish explicit flags from defaults."""

    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser = argparse.ArgumentParser(
        prog="hyperclass",
        description="Meta-learned linear classifiers for retrieval with relevance feedback",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic feature corpus",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--classes", type=int, default=default(50), help="number of classes")
    p.add_argument("--per-class", type=int, default=default(100), help="samples per class")
    p.add_argument("--dim", type=int, default=default(64), help="feature dimension")
    p.add_argument("--noise", type=float, default=default(0.35), help="per-axis noise std")
    p.add_argument("--mean-scale", type=float, default=default(1.0),
                   help="typical class-mean norm")
    p.add_argument("--splits", type=float, nargs=3, default=default([0.6, 0.2, 0.2]),
                   metavar=("TRAIN", "VAL", "TEST"), help="class fractions per split")
    p.add_argument("--no-normalize", action="store_true", default=default(False),
                   help="skip row L2 normalization")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p, suppress)

    p = sub.add_parser("meta-train", help="episodic training of the shared initialization",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--features", required=True, help="corpus directory or manifest path")
    p.add_argument("--task", choices=("irrf", "fsocc"), default=default("irrf"),
                   help="episode regime to train for")
    p.add_argument("--meta-batches", type=int, default=default(300), help="outer iterations")
    p.add_argument("--tasks-per-batch", type=int, default=default(100), help="episodes per outer step")
    p.add_argument("--inner-steps", type=int, default=default(5), help="inner-loop gradient steps")
    p.add_argument("--inner-lr", type=float, default=default(0.5), help="inner-loop learning rate")
    p.add_argument("--outer-lr", type=float, default=default(0.001), help="Adam learning rate")
    p.add_argument("--weight-decay", type=float, default=default(0.001),
                   help="decoupled outer weight decay")
    p.add_argument("--l2", type=float, default=default(1e-4), help="inner-loop L2 weight")
    p.add_argument("--ablation", choices=tuple(_ABLATION_FLAGS), default=default("both"),
                   help="which parameters receive outer updates")
    p.add_argument("--shots", type=int, default=default(0),
                   help="support shots (0 = per-episode uniform 1..10 for irrf, 5 for fsocc)")
    p.add_argument("--eval-every", type=int, default=default(10),
                   help="validation cadence in meta-batches")
    p.add_argument("--val-episodes", type=int, default=default(200),
                   help="validation episodes for model selection")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--quiet", action="store_true", default=default(False),
                   help="suppress progress lines")
    _add_common(p, suppress)

    p = sub.add_parser("eval-irrf", help="simulated relevance-feedback retrieval",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--features", required=True, help="corpus directory or manifest path")
    p.add_argument("--ckpt", default=default(None), help="checkpoint path (hc method)")
    p.add_argument("--method", choices=("hc", "lr", "proto", "rocchio"), default=default("hc"),
                   help="classifier refit per feedback round")
    p.add_argument("--iterations", type=int, default=default(3), help="feedback rounds")
    p.add_argument("--budget", type=int, default=default(10), help="labels per round")
    p.add_argument("--pos-ratio", type=float, default=default(0.8),
                   help="requested positive share of the budget")
    p.add_argument("--pool", type=int, default=default(100), help="candidate pool size")
    p.add_argument("--seeds", type=int, default=default(5), help="replicate seeds")
    p.add_argument("--queries-per-class", type=int, default=default(5),
                   help="initial queries per class")
    p.add_argument("--classes", type=int, nargs="*", default=default(None),
                   help="class ids to evaluate (default: all in split)")
    p.add_argument("--split", default=default("test"), help="corpus split to search")
    p.add_argument("--residual-eval", action="store_true", default=default(False),
                   help="exclude labeled items from metric computation")
    p.add_argument("--report", default=default(None), help="write JSON report here")
    _add_common(p, suppress)

    p = sub.add_parser("eval-fsocc", help="few-shot one-class evaluation",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--features", required=True, help="corpus directory or manifest path")
    p.add_argument("--ckpt", default=default(None), help="checkpoint path (hc method)")
    p.add_argument("--method", choices=("hc", "proto"), default=default("hc"))
    p.add_argument("--shots", type=int, default=default(5), help="positive support size")
    p.add_argument("--episodes", type=int, default=default(10000), help="test episodes")
    p.add_argument("--transductive", action="store_true", default=default(False),
                   help="use unlabeled query features during adaptation")
    p.add_argument("--val-episodes", type=int, default=default(500),
                   help="episodes for threshold calibration")
    p.add_argument("--report", default=default(None), help="write JSON report here")
    _add_common(p, suppress)

    p = sub.add_parser("eval-fsor", help="few-shot open-set negative detection",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--features", required=True, help="corpus directory or manifest path")
    p.add_argument("--ckpt", default=default(None), help="checkpoint path (hc method)")
    p.add_argument("--method", choices=("hc", "proto"), default=default("hc"))
    p.add_argument("--ways", type=int, default=default(5), help="support classes")
    p.add_argument("--shots", type=int, default=default(5), help="shots per support class")
    p.add_argument("--episodes", type=int, default=default(600), help="test episodes")
    p.add_argument("--report", default=default(None), help="write JSON report here")
    _add_common(p, suppress)

    p = sub.add_parser("theory-check", help="numeric verification of the update-scheme results",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--dim", type=int, default=default(16), help="classifier dimension")
    p.add_argument("--trials", type=int, default=default(200), help="random trials per check")
    p.add_argument("--report", default=default(None), help="write JSON report here")
    _add_common(p, suppress)

    p = sub.add_parser("serve", help="run the interactive feedback service",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--features", required=True, help="corpus directory or manifest path")
    p.add_argument("--ckpt", default=default(None), help="checkpoint path (hc method)")
    p.add_argument("--method", choices=("hc", "lr", "proto", "rocchio"), default=default("hc"))
    p.add_argument("--split", default=default("all"), help="corpus split to serve")
    p.add_argument("--host", default=default("127.0.0.1"), help="bind address")
    p.add_argument("--port", type=int, default=default(8000), help="bind port")
    p.add_argument("--assets-base", default=default(None),
                   help="base URL prefixed to display paths for thumbnails")
    _add_common(p, suppress)

    return parser


def _merge_config(args: argparse.Namespace, provided: argparse.Namespace) -> argparse.Namespace:
    """defaults < config file < explicit flags; unknown config keys rejected."""
    config_path = getattr(provided, "config", None) or args.config
    if not config_path:
        return args
    raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError("config file must hold a JSON object")
    known = set(vars(args))
    unknown = [k for k in raw if k.replace("-", "_") not in known]
    if unknown:
        raise ValueError(f"unknown config key(s): {sorted(unknown)}")
    merged = dict(vars(args))
    for key, value in raw.items():
        merged[key.replace("-", "_")] = value
    merged.update(vars(provided))  # explicit flags win
    return argparse.Namespace(**merged)


def _resolved_config(args: argparse.Namespace) -> dict:
    out = dict(vars(args))
    out.pop("config", None)
    out.pop("quiet", None)
    return out


def _write_report(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    print(text)


def _cmd_gen_synth(args) -> int:
    cfg = SyntheticConfig(
        num_classes=args.classes, per_class=args.per_class, dim=args.dim,
        noise_sigma=args.noise, mean_scale=args.mean_scale, seed=args.seed,
        split_fractions=tuple(args.splits), normalize=not args.no_normalize)
    corpus = generate_synthetic(cfg)
    manifest = save_corpus(corpus, args.out)
    print(json.dumps({"manifest": str(manifest), "rows": corpus.rows,
                      "dim": corpus.dim, "config": asdict(cfg)}, indent=2))
    return 0


def _cmd_meta_train(args) -> int:
    corpus = load_corpus(args.features)
    if args.task == "irrf":
        task = TaskConfig.irrf(shots=(args.shots, args.shots) if args.shots else (1, 10))
        selection = "AP"
    else:
        task = TaskConfig.fsocc(shots=args.shots or 5)
        selection = "AUROC"
    cfg = MetaTrainConfig(
        task=task, meta_batches=args.meta_batches, tasks_per_batch=args.tasks_per_batch,
        inner=AdaptConfig(steps=args.inner_steps, inner_lr=args.inner_lr,
                          l2_weight=args.l2, adapt_set=("v", "P", "b")),
        outer_lr=args.outer_lr, outer_weight_decay=args.weight_decay,
        ablation=_ABLATION_FLAGS[args.ablation], selection_metric=selection,
        eval_every=args.eval_every, val_episodes=args.val_episodes, seed=args.seed)

    def progress(batch, loss, val):
        if not args.quiet:
            msg = f"meta-batch {batch}/{cfg.meta_batches} query-loss {loss:.4f}"
            if val is not None:
                msg += f" val-{cfg.selection_metric} {val:.4f}"
            print(msg, file=sys.stderr)

    ckpt = meta_train(corpus, cfg, progress=progress)
    save_checkpoint(ckpt, args.out)
    print(json.dumps({"checkpoint": args.out,
                      "best_validation_score": ckpt.best_validation_score,
                      "meta_batch_index": ckpt.meta_batch_index,
                      "config": _resolved_config(args)}, indent=2, sort_keys=True))
    return 0


def _cmd_eval_irrf(args) -> int:
    corpus = load_corpus(args.features)
    params = load_checkpoint(args.ckpt) if args.ckpt else None
    cfg = IrrfConfig(iterations=args.iterations, budget=args.budget,
                     pos_ratio=args.pos_ratio, pool_k=args.pool, seeds=args.seeds,
                     queries_per_class=args.queries_per_class, method=args.method,
                     residual_eval=args.residual_eval)
    if args.method == "hc":
        params = resolve_params(params, dim=corpus.dim, seed=args.seed)
    curve = evaluate_irrf(corpus, params, cfg, classes=args.classes,
                          split=args.split, base_seed=args.seed, workers=args.threads)
    _write_report(args.report, {"command": "eval-irrf", "config": _resolved_config(args),
                                "curve": curve.to_dict()})
    return 0


def _cmd_eval_fsocc(args) -> int:
    corpus = load_corpus(args.features)
    params = None
    if args.method == "hc":
        params = resolve_params(load_checkpoint(args.ckpt) if args.ckpt else None,
                                dim=corpus.dim, seed=args.seed)
    thresholds = calibrate_fsocc_thresholds(
        corpus, params, args.shots, method=args.method, transductive=args.transductive,
        episodes=args.val_episodes, base_seed=args.seed + 1, workers=args.threads)
    reports = run_fsocc(corpus, params, args.shots, episodes=args.episodes,
                        transductive=args.transductive, method=args.method,
                        thresholds=thresholds, base_seed=args.seed, workers=args.threads)
    _write_report(args.report, {
        "command": "eval-fsocc", "config": _resolved_config(args),
        "thresholds": thresholds,
        "reports": {k: r.to_dict() for k, r in reports.items()}})
    return 0


def _cmd_eval_fsor(args) -> int:
    corpus = load_corpus(args.features)
    params = None
    if args.method == "hc":
        params = resolve_params(load_checkpoint(args.ckpt) if args.ckpt else None,
                                dim=corpus.dim, seed=args.seed)
    report = run_fsor(corpus, params, ways=args.ways, shots=args.shots,
                      episodes=args.episodes, method=args.method, base_seed=args.seed,
                      workers=args.threads)
    _write_report(args.report, {"command": "eval-fsor", "config": _resolved_config(args),
                                "report": report.to_dict()})
    return 0


def _cmd_theory_check(args) -> int:
    result = run_all_checks(dim=args.dim, trials=args.trials, seed=args.seed)
    print(format_report_table(result["reports"]))
    payload = {"command": "theory-check", "config": _resolved_config(args),
               "reports": [r.to_dict() for r in result["reports"]],
               "kstep": {str(k): {kk: vv for kk, vv in v.items() if kk != "reduced_residuals"}
                         for k, v in result["kstep"].items()}}
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    return 0 if all(r.passed for r in result["reports"]) else 1


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    corpus = load_corpus(args.features)
    params = load_checkpoint(args.ckpt) if args.ckpt else None
    app = create_app(corpus, params=params, method=args.method, split=args.split,
                     assets_base=args.assets_base)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "gen-synth": _cmd_gen_synth,
    "meta-train": _cmd_meta_train,
    "eval-irrf": _cmd_eval_irrf,
    "eval-fsocc": _cmd_eval_fsocc,
    "eval-fsor": _cmd_eval_fsor,
    "theory-check": _cmd_theory_check,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    provided = build_parser(suppress=True).parse_args(argv)
    try:
        args = _merge_config(args, provided)
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, FloatingPointError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
