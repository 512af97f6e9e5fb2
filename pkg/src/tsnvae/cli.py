"""Command-line pipeline: collect, train, eval, control, bench, plot.

One master seed fans out to per-stage seeds (see :mod:`tsnvae.config`), so
every stage is reproducible in isolation and the full pipeline is
bit-reproducible end to end.  Exit codes: 0 success, 1 usage error, 2
runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    RunConfig,
    config_from_json,
    config_to_json,
    default_config,
    derive_seed,
    hyperparams_from_config,
)
from .model import VARIANTS

__all__ = ["main", "entry"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def variant_filename(variant: str) -> str:
    return variant.replace("/", "_") + ".ckpt"


def _build_parser() -> _Parser:
    p = _Parser(prog="tsnvae", description=__doc__, add_help=True)
    p.add_argument("--config", type=str, help="JSON run configuration file")
    p.add_argument("--print-config", action="store_true",
                   help="print the full default-merged configuration and exit")
    p.add_argument("--seed", type=int, help="override the master seed")
    sub = p.add_subparsers(dest="command")

    c = sub.add_parser("collect", help="collect a dataset of random-walk episodes")
    c.add_argument("--episodes", type=int, help="episode count (default from config)")
    c.add_argument("--out", type=str, required=True)

    t = sub.add_parser("train", help="train one model variant")
    t.add_argument("--data", type=str, required=True)
    t.add_argument("--variant", type=str, default="TS-NVAE", choices=VARIANTS)
    t.add_argument("--steps", type=int, help="training steps (default from config)")
    t.add_argument("--out", type=str, required=True)
    t.add_argument("--quiet", action="store_true")

    e = sub.add_parser("eval", help="latent-map diagnostics on the validation split")
    e.add_argument("--ckpt", type=str, required=True)
    e.add_argument("--data", type=str, required=True)
    e.add_argument("--plot", type=str, help="write the latent map SVG here")
    e.add_argument("--report", type=str, help="stem for JSON/CSV/PNG reports")

    k = sub.add_parser("control", help="closed-loop positioning trials for one checkpoint")
    k.add_argument("--ckpt", type=str, required=True)
    k.add_argument("--trials", type=int, default=40)
    k.add_argument("--report", type=str, help="stem for the JSON report")

    b = sub.add_parser("bench", help="paired benchmark across methods")
    b.add_argument("--suite", choices=("all", "nvae", "cfil"), default="all")
    b.add_argument("--trials", type=int, help="trials per method (default from config)")
    b.add_argument("--data", type=str, required=True)
    b.add_argument("--models", type=str,
                   help="directory of trained checkpoints named <variant>.ckpt "
                        "(required for the nvae/all suites)")
    b.add_argument("--out", type=str, help="stem for JSON/TXT/CSV/PNG outputs")

    g = sub.add_parser("plot", help="render report figures from a checkpoint")
    g.add_argument("--ckpt", type=str, required=True)
    g.add_argument("--data", type=str, help="dataset for the latent map panels")
    g.add_argument("--out", type=str, required=True, help="output directory")
    return p


def _load_config(args) -> RunConfig:
    if args.config:
        try:
            cfg = config_from_json(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise UsageError(f"bad config {args.config}: {e}") from None
    else:
        cfg = default_config()
    if args.seed is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    return cfg


def _split_loaded(episodes, manifest):
    split = manifest.get("split")
    if not split:
        return episodes, []
    train = [ep for ep, tag in zip(episodes, split) if tag == "train"]
    val = [ep for ep, tag in zip(episodes, split) if tag == "val"]
    return train, val


def _cmd_collect(args, cfg: RunConfig) -> int:
    from .data import collect_dataset, save_dataset, split_dataset

    n = args.episodes if args.episodes is not None else cfg.collect.episodes
    seeds = [derive_seed(cfg.master_seed, "collect", i) for i in range(n)]
    episodes = collect_dataset(cfg.sim, n, seeds)
    train_count = min(cfg.collect.train_episodes, n)
    train, _ = split_dataset(episodes, train_count, derive_seed(cfg.master_seed, "split"))
    train_ids = {id(ep) for ep in train}
    labels = ["train" if id(ep) in train_ids else "val" for ep in episodes]
    save_dataset(episodes, args.out, cfg.sim, split=labels)
    transitions = sum(len(ep.frames) for ep in episodes)
    print(f"collected {n} episodes ({transitions} transitions) -> {args.out}")
    print(f"split: {train_count} train / {n - train_count} validation")
    return 0


def _cmd_train(args, cfg: RunConfig) -> int:
    from .data import load_dataset
    from .figures import loss_curve_figure
    from .model import train
    from .train import save_checkpoint

    episodes, manifest = load_dataset(args.data)
    train_eps, _ = _split_loaded(episodes, manifest)
    if not train_eps:
        train_eps = episodes
    overrides = {"train_steps": args.steps} if args.steps is not None else {}
    hp = hyperparams_from_config(cfg, args.variant, **overrides)
    progress = None
    if not args.quiet:
        progress = lambda s, v: print(f"step {s}: loss {v:.5g}", flush=True)
    bundle, losses = train(train_eps, hp, derive_seed(cfg.master_seed, "train", args.variant),
                           progress=progress)
    save_checkpoint(bundle, args.out, losses)
    loss_curve_figure(losses, str(Path(args.out).with_suffix(".loss.png")),
                      title=f"{args.variant} training loss")
    print(f"trained {args.variant} for {hp.train_steps} steps on {len(train_eps)} episodes "
          f"-> {args.out}")
    return 0


def _write_latent_csv(lmap, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["latent_1_m", "latent_2_m", "truth_x_m", "truth_y_m"])
        for (lx, ly), (tx, ty) in zip(lmap.latents, lmap.truths):
            w.writerow([repr(lx), repr(ly), repr(tx), repr(ty)])


def _cmd_eval(args, cfg: RunConfig) -> int:
    from .data import load_dataset
    from .evalvis import correlation_metrics, export_latent_map, goal_placement_error
    from .figures import latent_map_figure
    from .train import load_checkpoint

    bundle, _ = load_checkpoint(args.ckpt)
    episodes, manifest = load_dataset(args.data)
    _, val_eps = _split_loaded(episodes, manifest)
    if not val_eps:
        val_eps = episodes
    lmap = correlation_metrics(bundle, val_eps)
    goal_err = goal_placement_error(bundle, val_eps)
    print(f"validation frames: {lmap.latents.shape[0]} from {len(val_eps)} episodes")
    print(f"axis assignment: permutation {lmap.permutation}, signs {lmap.signs}")
    print(f"pearson r: ({lmap.pearson_r[0]:+.4f}, {lmap.pearson_r[1]:+.4f})")
    print(f"slopes:    ({lmap.slopes[0]:+.4f}, {lmap.slopes[1]:+.4f})")
    print(f"goal placement error: {goal_err * 1000:.3f} mm (latent units)")
    if args.plot:
        export_latent_map(lmap, args.plot)
        print(f"latent map SVG -> {args.plot}")
    if args.report:
        payload = {
            "frames": int(lmap.latents.shape[0]),
            "episodes": len(val_eps),
            "permutation": list(lmap.permutation),
            "signs": list(lmap.signs),
            "pearson_r": [float(v) for v in lmap.pearson_r],
            "slopes": [float(v) for v in lmap.slopes],
            "mean_abs_r": lmap.mean_abs_r,
            "goal_placement_m": goal_err,
            "variant": bundle.hp.variant,
        }
        with open(args.report + ".json", "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        _write_latent_csv(lmap, args.report + ".csv")
        latent_map_figure(lmap, args.report + ".png")
        print(f"eval report -> {args.report}.json/.csv/.png")
    return 0


def _cmd_control(args, cfg: RunConfig) -> int:
    from .control import ModelCoder, run_episode, trial_seed
    from .sim import PlanarInsertionEnv
    from .train import load_checkpoint

    bundle, _ = load_checkpoint(args.ckpt)
    errors = []
    for i in range(args.trials):
        env = PlanarInsertionEnv(cfg.sim)
        trace = run_episode(ModelCoder(bundle), env, cfg.controller,
                            trial_seed(cfg.master_seed, i))
        errors.append(trace.final_error)
    errors = np.array(errors)
    successes = int((errors <= cfg.controller.success_tol).sum())
    print(f"{bundle.hp.variant}: {successes}/{args.trials} successes "
          f"({100 * successes / args.trials:.0f}%), "
          f"error {1000 * errors.mean():.2f}±{1000 * errors.std(ddof=1) if args.trials > 1 else 0:.2f} mm")
    if args.report:
        payload = {
            "variant": bundle.hp.variant,
            "trials": args.trials,
            "successes": successes,
            "mean_error_m": float(errors.mean()),
            "std_error_m": float(errors.std(ddof=1)) if args.trials > 1 else 0.0,
        }
        with open(args.report + ".json", "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    return 0


def _bench_model_rows(cfg, trials, models_dir):
    from .control import run_benchmark
    from .train import load_checkpoint

    bundles = {}
    missing = []
    for variant in VARIANTS:
        path = Path(models_dir) / variant_filename(variant)
        if path.exists():
            bundles[variant], _ = load_checkpoint(path)
        else:
            missing.append(str(path))
    if missing:
        raise FileNotFoundError(
            "missing checkpoints (train each variant first): " + ", ".join(missing)
        )
    report = run_benchmark(bundles, cfg.sim, cfg.controller, trials, cfg.master_seed)
    return report.methods


def _bench_cfil_rows(cfg, trials, data_path):
    from .cfil import (
        CFIL_VARIANTS,
        mounted_frames,
        reference_template,
        run_cfil_trial,
        train_cfil,
    )
    from .control import trial_seed
    from .data import load_dataset
    from .evalvis import MethodResult
    from .sim import PlanarInsertionEnv

    episodes, manifest = load_dataset(data_path)
    train_eps, _ = _split_loaded(episodes, manifest)
    if not train_eps:
        train_eps = episodes
    env = PlanarInsertionEnv(cfg.sim)
    reg, _ = train_cfil(train_eps, derive_seed(cfg.master_seed, "cfil"), env,
                        steps=cfg.bench.cfil_steps)
    frames = mounted_frames(cfg.bench.mounting_error)
    template = reference_template(env)
    rows = []
    for variant in CFIL_VARIANTS:
        errs = []
        for i in range(trials):
            trial_env = PlanarInsertionEnv(cfg.sim)
            err, _ = run_cfil_trial(
                reg, frames, trial_env, variant, trial_seed(cfg.master_seed, i),
                template=template, start_offset=cfg.controller.start_offset,
                success_tol=cfg.controller.success_tol,
            )
            errs.append(err)
        errs = np.array(errs)
        rows.append(MethodResult(
            method=variant,
            trials=trials,
            successes=int((errs <= cfg.controller.success_tol).sum()),
            mean_error=float(errs.mean()),
            std_error=float(errs.std(ddof=1)) if trials > 1 else 0.0,
        ))
    return rows


def _cmd_bench(args, cfg: RunConfig) -> int:
    from .data import sim_config_fingerprint
    from .evalvis import BenchmarkReport, export_report, format_report_table
    from .figures import benchmark_figure

    trials = args.trials if args.trials is not None else cfg.bench.trials
    rows = []
    if args.suite in ("all", "nvae"):
        if not args.models:
            raise UsageError("bench --suite nvae/all needs --models DIR of checkpoints")
        rows.extend(_bench_model_rows(cfg, trials, args.models))
    if args.suite in ("all", "cfil"):
        rows.extend(_bench_cfil_rows(cfg, trials, args.data))
    rows.sort(key=lambda r: (-r.success_rate, r.mean_error))
    report = BenchmarkReport(methods=rows, trials=trials,
                             config_fingerprint=sim_config_fingerprint(cfg.sim))
    sys.stdout.write(format_report_table(report))
    if args.out:
        export_report(report, args.out)
        with open(args.out + ".csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["method", "trials", "successes", "success_rate",
                        "mean_error_m", "std_error_m"])
            for m in report.methods:
                w.writerow([m.method, m.trials, m.successes, repr(m.success_rate),
                            repr(m.mean_error), repr(m.std_error)])
        benchmark_figure(report, args.out + ".png")
        print(f"benchmark report -> {args.out}.json/.txt/.csv/.png")
    return 0


def _cmd_plot(args, cfg: RunConfig) -> int:
    from .figures import latent_map_figure, loss_curve_figure
    from .train import load_checkpoint

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle, losses = load_checkpoint(args.ckpt)
    made = []
    if losses is not None:
        loss_curve_figure(losses, out / "loss_curve.png",
                          title=f"{bundle.hp.variant} training loss")
        made.append("loss_curve.png")
    if args.data:
        from .data import load_dataset
        from .evalvis import correlation_metrics, export_latent_map

        episodes, manifest = load_dataset(args.data)
        _, val_eps = _split_loaded(episodes, manifest)
        if not val_eps:
            val_eps = episodes
        lmap = correlation_metrics(bundle, val_eps)
        export_latent_map(lmap, out / "latent_map.svg")
        latent_map_figure(lmap, out / "latent_map.png")
        made += ["latent_map.svg", "latent_map.png"]
    print(f"wrote {', '.join(made)} in {out}")
    return 0


_COMMANDS = {
    "collect": _cmd_collect,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "control": _cmd_control,
    "bench": _cmd_bench,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.print_config:
            cfg = _load_config(args)
            sys.stdout.write(config_to_json(cfg))
            return 0
        if not args.command:
            raise UsageError("no command given")
        cfg = _load_config(args)
        return _COMMANDS[args.command](args, cfg)
    except UsageError as e:
        sys.stderr.write(f"usage error: {e}\n")
        parser.print_usage(sys.stderr)
        return 1
    except (BrokenPipeError, KeyboardInterrupt):
        return 2
    except Exception as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return 2


def entry() -> None:
    sys.exit(main())
