"""Command-line entry point: ``cdrl {train,eval,action-dist,align-offline,plotdata}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import envs
from .alignment import AlignmentNetwork, collect_logit_pairs, offline_train_alignment
from .checkpoint import checkpoint_load, checkpoint_save
from .config import load_config
from .exceptions import CDRLError, ConfigError
from .losses import tempered_kl_rows
from .metrics import plotdata, read_metrics
from .evaluation import action_distribution, evaluate
from .networks import TeacherNetwork, pad_or_truncate
from .orchestrator import default_workers, run_experiment


def load_policy(path, env_name=None) -> TeacherNetwork:
    """Load any checkpoint with ``policy`` and ``value`` heads as a read-only network."""
    ck = checkpoint_load(path)
    if ck.kind == "align":
        raise ConfigError(f"{path} holds an alignment network, not a policy")
    env = envs.describe(env_name or ck.env)
    if ck.spec.input_dim != env.obs_dim:
        raise ConfigError(f"checkpoint reads {ck.spec.input_dim} observation values, {env.name} emits {env.obs_dim}")
    return TeacherNetwork(env, params=ck.params, spec=ck.spec)


def load_alignment(path) -> AlignmentNetwork:
    ck = checkpoint_load(path)
    if ck.kind != "align":
        raise ConfigError(f"{path} is a {ck.kind} checkpoint, expected an alignment network")
    return AlignmentNetwork.from_params(ck.spec, ck.params)


def cmd_train(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    spec = load_config(args.config, overrides)
    if args.workers is not None:
        spec.workers = args.workers
    else:
        spec.workers = default_workers(spec.workers)
    result = run_experiment(spec, out_dir=args.out)
    print(f"steps {result.final_step}  episodes {len(result.episode_rewards())}  "
          f"last-100 reward {result.final_reward():.3f}")
    return 0


def cmd_eval(args):
    net = load_policy(args.checkpoint, args.env)
    rets = evaluate(net, args.env, args.episodes, args.greedy, args.seed)
    print(f"mean {rets.mean():.4f} +- {rets.std():.4f}  N={rets.size}")
    return 0


def cmd_action_dist(args):
    desc = envs.describe(args.env)
    net = load_policy(args.checkpoint, None if (args.align or args.pad) else args.env)
    if net.spec.input_dim != desc.obs_dim:
        raise ConfigError("checkpoint cannot read this environment's observations")
    align = load_alignment(args.align) if args.align else None
    behavior = load_policy(args.behavior, args.env) if args.behavior else None
    probs = action_distribution(net, args.env, args.steps, align, args.pad, behavior, args.seed)
    print("action,label,probability")
    for i, (label, p) in enumerate(zip(desc.action_labels, probs)):
        print(f"{i},{label},{p:.6f}")
    return 0


def cmd_align_offline(args):
    teacher = load_policy(args.teacher, None)
    expert = load_policy(args.expert, args.env)
    env = envs.make_env(args.env)
    if teacher.spec.input_dim != env.obs_dim:
        raise ConfigError("teacher cannot read this environment's observations")
    cfg = {"tau": args.tau, "learning_rate": args.lr}
    net = offline_train_alignment(teacher, expert, env, args.steps, cfg, args.samples, args.seed)
    checkpoint_save(args.out, net.spec_, net.params_, env=None, kind="align")
    z_alpha, z_beta, _ = collect_logit_pairs(teacher, expert, env, args.samples, seed=args.seed + 1)
    aligned = tempered_kl_rows(z_beta, net.transform(z_alpha), 1.0).mean()
    padded = tempered_kl_rows(z_beta, pad_or_truncate(z_alpha, expert.action_dim), 1.0).mean()
    print(f"steps {net.n_iter_}  held-out KL aligned {aligned:.4f}  padded {padded:.4f}")
    return 0


def cmd_plotdata(args):
    parts = []
    for i, run in enumerate(args.runs):
        run = Path(run)
        records = read_metrics(run / "metrics.jsonl")
        label = _run_mode(run)
        text = plotdata(records, args.factor, label)
        parts.append(text if i == 0 else text.split("\n", 1)[1])
    out = "".join(parts)
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    return 0


def _run_mode(run_dir):
    cfg = run_dir / "config.resolved"
    if cfg.exists():
        spec = load_config(cfg)
        return spec.mode
    return run_dir.name


def build_parser():
    p = argparse.ArgumentParser(prog="cdrl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run an experiment from a config file")
    t.add_argument("config")
    t.add_argument("--seed", type=int)
    t.add_argument("--workers", type=int, help="overrides CDRL_THREADS and the config")
    t.add_argument("--out", required=True, help="run directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("env", choices=sorted(envs.ENVIRONMENTS))
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--greedy", action="store_true")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("action-dist", help="mean action probabilities over visited states")
    a.add_argument("checkpoint")
    a.add_argument("env", choices=sorted(envs.ENVIRONMENTS))
    a.add_argument("--steps", type=int, default=10000)
    a.add_argument("--align", help="alignment checkpoint applied to the policy logits")
    a.add_argument("--pad", action="store_true", help="zero-pad or truncate logits to the env's action count")
    a.add_argument("--behavior", help="checkpoint whose policy chooses the visited states")
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_action_dist)

    o = sub.add_parser("align-offline", help="fit an alignment network from a teacher to an expert")
    o.add_argument("teacher")
    o.add_argument("expert")
    o.add_argument("env", choices=sorted(envs.ENVIRONMENTS))
    o.add_argument("--steps", type=int, default=20000)
    o.add_argument("--samples", type=int, default=10000)
    o.add_argument("--tau", type=float, default=1.0)
    o.add_argument("--lr", type=float, default=0.001)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_align_offline)

    c = sub.add_parser("plotdata", help="smoothed reward curves from run directories as CSV")
    c.add_argument("runs", nargs="+")
    c.add_argument("--factor", type=float, default=0.9)
    c.add_argument("--out")
    c.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CDRLError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
