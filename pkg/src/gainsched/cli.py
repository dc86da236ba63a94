"""Command-line entry points: certify, rollout, train, eval, export-figures-data."""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import agent as agent_mod
from . import harness
from .harness import (
    ParseError,
    ValidationError,
    build_library_from_config,
    config_hash,
    default_run_config,
    load_config,
    resolve_outdir,
    run_fixed_gain_episode,
    write_episode_csv,
    write_training_csv,
)


def _load(args):
    if args.config:
        return load_config(args.config)
    return default_run_config()


def _cmd_certify(args):
    cfg = _load(args)
    lib = build_library_from_config(cfg)
    print(f"# {len(lib)} certified entries, {len(lib.rejected)} rejected "
          f"(margin requirement {lib.margin} 1/s, rbar {lib.rbar:.6g})")
    print(f"{'idx':>3} {'lam':>5} {'mu':>5} {'margin':>9} {'alpha':>7} "
          f"{'c':>9} {'R':>9} {'rho*':>10}  status")
    for e in lib.entries:
        c = e.certificate
        print(f"{e.index:>3} {e.lam:>5.2f} {e.mu:>5.2f} {c.stability_margin:>9.4f} "
              f"{c.alpha:>7.3f} {c.c:>9.4f} {c.R:>9.4f} {c.rho_star:>10.4f}  HURWITZ")
    for e in lib.rejected:
        print(f"{'-':>3} {e.lam:>5.2f} {e.mu:>5.2f} "
              f"{e.certificate.stability_margin:>9.4f} {'-':>7} {'-':>9} {'-':>9} "
              f"{'-':>10}  REJECTED")
    if args.out:
        out = resolve_outdir(cfg, args.out)
        path = os.path.join(out, "library.csv")
        with open(path, "w") as fh:
            fh.write("index,lam,mu,margin,alpha,c,R,rho_star\n")
            for e in lib.entries:
                c = e.certificate
                fh.write(f"{e.index},{e.lam:.17g},{e.mu:.17g},"
                         f"{c.stability_margin:.17g},{c.alpha:.17g},{c.c:.17g},"
                         f"{c.R:.17g},{c.rho_star:.17g}\n")
        print(f"wrote {path}")
    return 0


def _cmd_rollout(args):
    cfg = _load(args)
    lib = build_library_from_config(cfg)
    if not 0 <= args.gain_index < len(lib):
        print(f"error: gain index out of range (library has {len(lib)} entries)",
              file=sys.stderr)
        return 1
    entry = lib.entries[args.gain_index]
    log = run_fixed_gain_episode(cfg, entry.gain, cert=entry.certificate,
                                 library_index=entry.index)
    out = resolve_outdir(cfg, args.out)
    path = os.path.join(out, f"rollout_gain{args.gain_index}.csv")
    write_episode_csv(log, path)
    final_err = float(np.linalg.norm(log.x[-1, 0:3] - np.asarray(cfg.traj.r_star)))
    print(f"wrote {path} ({len(log)} rows, termination {log.termination}, "
          f"final position error {final_err:.3e} m)")
    return 0


def _train_one(cfg, seed, outdir):
    cfg = harness.replace_seed(cfg, seed)
    lib = build_library_from_config(cfg)
    result = agent_mod.train(cfg, lib)
    ckpt_path = os.path.join(outdir, f"train_seed{seed}.npz")
    agent_mod.save_checkpoint(ckpt_path, result.net, seed, config_hash(cfg))
    csv_path = os.path.join(outdir, f"train_seed{seed}.csv")
    write_training_csv(result.history, csv_path, seed)
    first = np.mean([h.episode_return for h in result.history[:10]])
    last = np.mean([h.episode_return for h in result.history[-10:]])
    return seed, ckpt_path, csv_path, float(first), float(last)


def _cmd_train(args):
    cfg = _load(args)
    out = resolve_outdir(cfg, args.out)
    seeds = ([int(s) for s in args.seeds.split(",")] if args.seeds
             else [args.seed if args.seed is not None else cfg.seed])
    if len(seeds) == 1:
        results = [_train_one(cfg, seeds[0], out)]
    else:
        workers = min(len(seeds), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_one, [cfg] * len(seeds), seeds,
                                    [out] * len(seeds)))
    for seed, ckpt, csv, first, last in results:
        print(f"seed {seed}: wrote {ckpt} and {csv} "
              f"(mean return first 10 = {first:.4f}, last 10 = {last:.4f})")
    return 0


def _cmd_eval(args):
    cfg = _load(args)
    lib = build_library_from_config(cfg)
    net, meta = agent_mod.load_checkpoint(args.checkpoint)
    if net.n_actions != len(lib):
        print(f"error: checkpoint has {net.n_actions} actions, library has "
              f"{len(lib)} entries", file=sys.stderr)
        return 1
    if meta["config_hash"] != config_hash(cfg):
        print("warning: checkpoint config hash differs from the current config",
              file=sys.stderr)
    log = agent_mod.evaluate(net, cfg, lib)
    out = resolve_outdir(cfg, args.out)
    stem = os.path.splitext(os.path.basename(args.checkpoint))[0]
    path = os.path.join(out, f"eval_{stem}.csv")
    write_episode_csv(log, path)
    print(f"wrote {path} ({len(log)} rows, return {log.episode_return:.4f})")
    return 0


def _cmd_export_figures_data(args):
    cfg = _load(args)
    lib = build_library_from_config(cfg)
    if args.checkpoint:
        net, _ = agent_mod.load_checkpoint(args.checkpoint)
        if net.n_actions != len(lib):
            print("error: checkpoint action count does not match the library",
                  file=sys.stderr)
            return 1
    else:
        rng = np.random.default_rng(cfg.seed)
        ac = cfg.agent
        net = agent_mod.init_qnetwork((15, *ac.hidden, len(lib)), ac.activation, rng)
    log = agent_mod.evaluate(net, cfg, lib)
    out = resolve_outdir(cfg, args.out)
    fig_dir = os.path.join(out, "figures-data")
    os.makedirs(fig_dir, exist_ok=True)
    path = os.path.join(fig_dir, "eval_episode.csv")
    write_episode_csv(log, path)
    print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gainsched",
        description="Quadrotor snap-inversion control with a certified gain "
                    "library and an online DQN gain scheduler.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--out", help="output directory (default: config outdir, "
                       f"overridable via ${harness.OUTDIR_ENV_VAR})")

    p = sub.add_parser("certify", help="build and print the certified library")
    common(p)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("rollout", help="fixed-gain episode to CSV")
    common(p)
    p.add_argument("--gain-index", type=int, default=0,
                   help="library entry to fly (default 0)")
    p.set_defaults(func=_cmd_rollout)

    p = sub.add_parser("train", help="train the DQN scheduler")
    common(p)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--seeds", help="comma-separated seeds, run in parallel")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="greedy shielded rollout from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export-figures-data",
                       help="bundle an eval episode CSV for the figures package")
    common(p)
    p.add_argument("--checkpoint", help="optional trained checkpoint")
    p.set_defaults(func=_cmd_export_figures_data)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
