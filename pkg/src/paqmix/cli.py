"""Command line entry point: ``paqmix {train,eval,baseline,gradcheck,demo}``.

Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime, 4 verification failure.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import gradcheck
from .checkpoint import CheckpointError
from .config import PRESETS, RunConfig, dump_config, load_config, preset
from .env import HighwayEnv
from .sim import ConfigError, ContractError, ScenarioError
from .training import (
    IDMPolicy,
    QPolicy,
    RandomPolicy,
    eval_seeds,
    evaluate,
    load_model,
    run_episode,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--ablate-attention", action="store_true", help="skip the attention step (VQMIX)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = _Parser(prog="paqmix", description="Partial-attention QMIX for highway merging")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train and write metrics.csv plus checkpoints")
    _common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint with greedy actions")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-seeds", type=int, default=50)

    p = sub.add_parser("baseline", help="evaluate the IDM (or random) baseline")
    _common(p)
    p.add_argument("--policy", choices=("idm", "random"), default="idm")
    p.add_argument("--n-seeds", type=int, default=50)

    p = sub.add_parser("gradcheck", help="finite-difference verification of every layer")
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--suite", action="append", choices=sorted(gradcheck.SUITES))

    p = sub.add_parser("demo", help="one verbose episode")
    _common(p)
    p.add_argument("--checkpoint", help="policy checkpoint; IDM when omitted")
    p.add_argument("--reward-csv", help="write the per-step reward breakdown here")
    return parser


def resolve_config(args):
    base = preset(args.preset) if args.preset else None
    cfg = load_config(args.config, base) if args.config else (base or RunConfig())
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.ablate_attention:
        overrides["ablate_attention"] = True
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if args.max_steps is not None:
        overrides["max_steps"] = args.max_steps
    return cfg.with_values(**overrides) if overrides else cfg


def _print_report(report, out):
    summary = report.summary()
    print(json.dumps(summary, indent=2))
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, f"eval_{report.policy}.json"), "w") as fh:
            json.dump(summary, fh, indent=2)


def cmd_train(args):
    cfg = resolve_config(args)
    out = args.out or "runs/train"
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(dump_config(cfg))

    def log(row):
        print(f"episode {row['episode']:4d} steps {row['steps']:4d} return {row['return']:9.2f} "
              f"collisions {row['collisions']} eps {row['epsilon']:.3f}", flush=True)

    train(cfg, out_dir=out, log=log)
    return EXIT_OK


def _check_model_config(meta, cfg):
    if meta["n_agents"] != cfg.scenario.n_agents or meta["w"] != cfg.scenario.w:
        raise ConfigError(f"checkpoint built for n_agents={meta['n_agents']}, w={meta['w']}; "
                          f"configuration has n_agents={cfg.scenario.n_agents}, w={cfg.scenario.w}")


def cmd_eval(args):
    cfg = resolve_config(args)
    q_net, _, meta = load_model(args.checkpoint)
    _check_model_config(meta, cfg)
    _print_report(evaluate(QPolicy(q_net), cfg, eval_seeds(args.n_seeds), "qmix"), args.out)
    return EXIT_OK


def cmd_baseline(args):
    cfg = resolve_config(args)
    policy = IDMPolicy() if args.policy == "idm" else RandomPolicy(cfg.train.actions)
    _print_report(evaluate(policy, cfg, eval_seeds(args.n_seeds), args.policy), args.out)
    return EXIT_OK


def cmd_gradcheck(args):
    results = gradcheck.run_all(args.configs, args.seed, args.suite)
    failed = 0
    for name, rows in results.items():
        worst = max(r.max_rel_error for r in rows)
        bad = sum(not r.passed for r in rows)
        failed += bad
        print(f"{name:22s} configs={len(rows):3d} max_rel_error={worst:.3e} {'FAIL' if bad else 'ok'}")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_demo(args):
    cfg = resolve_config(args)
    if args.checkpoint:
        q_net, _, meta = load_model(args.checkpoint)
        _check_model_config(meta, cfg)
        policy = QPolicy(q_net)
    else:
        policy = IDMPolicy()
    env = HighwayEnv(cfg.scenario, cfg.reward)
    rows = []

    def on_step(env, events, r):
        for line in events.log_lines():
            print(line)
        rows.append([env.world.step, r] + [env.last_terms[k] for k in sorted(env.last_terms)])

    seed = cfg.train.seed
    stats = run_episode(env, policy, 0.0, np.random.default_rng(seed), seed=seed,
                        gamma=cfg.train.gamma, on_step=on_step)
    print(f"steps={stats.steps} return={stats.return_:.3f} total_reward={stats.total_reward:.3f} "
          f"collisions={stats.collisions} arrivals={stats.arrivals}")
    if args.reward_csv:
        keys = sorted(env.last_terms) if env.last_terms else []
        with open(args.reward_csv, "w") as fh:
            fh.write(",".join(["step", "reward"] + keys) + "\n")
            for row in rows:
                fh.write(",".join(repr(float(x)) if i else str(x) for i, x in enumerate(row)) + "\n")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "baseline": cmd_baseline,
            "gradcheck": cmd_gradcheck, "demo": cmd_demo}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, ScenarioError, ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
