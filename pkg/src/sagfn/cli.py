"""Command-line front-end: experiment runner and diagnostics.

Subcommands:

* enumerate  -- build the state DAG, print counts, optionally export it
* train      -- run tabular training, write metrics CSV and checkpoint
* eval       -- exact terminating distribution of a checkpoint vs target
* likelihood -- backward-sampling likelihood estimates over a grid of M
* symcheck   -- automorphism order / orbit diagnostics for graph files

Exit codes: 0 success, 1 configuration error, 2 runtime error.  The
seed falls back to the SAGFN_SEED environment variable when no --seed
is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from .env import make_env
from .graph_core import (automorphism_group, canonical_form,
                         graph_from_json_dict)
from .policy import PolicyTable, load_checkpoint, save_checkpoint
from .state_space import (class_size, enumerate_states,
                          exact_terminating_distribution, export_dag_jsonl,
                          l1_error, target_distribution)
from .training import MODES, Trainer, estimate_likelihood


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated training-run description; unknown keys are rejected."""

    env: str = "illustrative"
    objective: str = "tb"
    mode: str = "vanilla"
    steps: int = 1000
    batch_new: int = 32
    batch_size: int = 64
    transition_batch: int = 256
    epsilon: float = 0.1
    beta: float = 1.0
    seed: int = 0
    eval_every: int = 1000
    outdir: str = "."
    max_nodes: int = 0        # 0 = environment default
    max_edges: int = 0
    max_degree: int = 0
    max_fragments: int = 0
    reward_floor: float = 0.1

    def validate(self):
        if self.env not in ("illustrative", "clique", "cycle", "fragment"):
            raise ConfigError(f"unknown env {self.env!r}")
        if self.objective not in ("tb", "db", "fm"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.steps < 0 or self.batch_new <= 0 or self.batch_size <= 0:
            raise ConfigError("steps must be >= 0 and batch sizes positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        return self

    @classmethod
    def load(cls, path=None, overrides=None):
        known = {f.name for f in fields(cls)}
        data = {}
        if path:
            with open(path) as f:
                data = json.load(f)
            unknown = set(data) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if overrides:
            data.update({k: v for k, v in overrides.items()
                         if v is not None and k in known})
        return cls(**data).validate()

    def env_config(self):
        cfg = {"env": self.env, "reward_floor": self.reward_floor}
        for key in ("max_nodes", "max_edges", "max_degree", "max_fragments"):
            if getattr(self, key):
                cfg[key] = getattr(self, key)
        return cfg


def _seed_from(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(os.environ.get("SAGFN_SEED", "0"))


def _build_dag(config):
    return enumerate_states(make_env(config))


def _read_graphs(path):
    """Yield (line number, graph or None, error or None) per JSON line."""
    with open(path) as f:
        for i, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                yield i, graph_from_json_dict(json.loads(line)), None
            except (ValueError, KeyError, TypeError) as exc:
                yield i, None, str(exc)


# -- subcommands ---------------------------------------------------------

def cmd_enumerate(args):
    cfg = RunConfig.load(args.config, vars(args))
    t0 = time.time()
    dag = _build_dag(cfg.env_config())
    dt = time.time() - t0
    print(f"env={cfg.env} states={dag.n_states} "
          f"terminals={len(dag.terminal_ids)} edges={dag.n_edges} "
          f"seconds={dt:.1f}")
    if args.out:
        export_dag_jsonl(dag, args.out)
    return 0


def cmd_train(args):
    cfg = RunConfig.load(args.config, vars(args))
    cfg = RunConfig(**{**cfg.__dict__, "seed": _seed_from(args)}).validate()
    os.makedirs(cfg.outdir, exist_ok=True)
    dag = _build_dag(cfg.env_config())
    trainer = Trainer(dag, objective=cfg.objective, mode=cfg.mode,
                      epsilon=cfg.epsilon, seed=cfg.seed,
                      batch_new=cfg.batch_new, batch_size=cfg.batch_size,
                      transition_batch=cfg.transition_batch, beta=cfg.beta)
    metrics_path = os.path.join(cfg.outdir, "metrics.csv")
    with open(metrics_path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["step", "l1_error", "log_z", "loss_mean"])
        writer.writeheader()
        trainer.train(cfg.steps, eval_every=cfg.eval_every,
                      on_eval=writer.writerow)
    save_checkpoint(trainer.policy, os.path.join(cfg.outdir,
                                                 "checkpoint.json"))
    with open(os.path.join(cfg.outdir, "config.json"), "w") as f:
        json.dump(cfg.__dict__, f, indent=2)
    final = trainer.eval_metrics()
    print(f"trained {cfg.steps} steps; final l1={final['l1_error']:.4g} "
          f"log_z={final['log_z']:.4g}")
    return 0


def cmd_eval(args):
    cfg = RunConfig.load(args.config, vars(args))
    dag = _build_dag(cfg.env_config())
    if args.checkpoint:
        policy = load_checkpoint(dag, args.checkpoint)
    else:
        policy = PolicyTable(dag)
    model = exact_terminating_distribution(dag, policy.all_edge_probs())
    target = target_distribution(dag)
    out = args.out or "-"
    rows = []
    for i, s in enumerate(map(int, dag.terminal_ids)):
        g = dag.graphs[s]
        rows.append({"state": canonical_form(g).hex(),
                     "aut": int(dag.aut_order[s]),
                     "class_size": class_size(g.n, int(dag.aut_order[s])),
                     "reward": float(dag.reward[s]),
                     "p_model": float(model.probs[i]),
                     "p_target": float(target.probs[i])})
    _write_csv(out, rows)
    print(f"terminals={len(rows)} l1={l1_error(model, target):.6g}",
          file=sys.stderr)
    return 0


def cmd_likelihood(args):
    cfg = RunConfig.load(args.config, vars(args))
    dag = _build_dag(cfg.env_config())
    if args.checkpoint:
        policy = load_checkpoint(dag, args.checkpoint)
    else:
        policy = PolicyTable(dag)
    rng = np.random.default_rng(_seed_from(args))
    model = exact_terminating_distribution(dag, policy.all_edge_probs())
    exact = dict(zip(map(int, model.terminal_ids), model.probs))
    ms = [int(m) for m in args.samples.split(",")]
    rows = []
    for i, g, err in _read_graphs(args.terminals):
        if err is not None:
            rows.append({"line": i, "error": err})
            continue
        try:
            sid = dag.state_id(g)
            if not dag.terminal[sid]:
                raise ValueError("graph is not a terminal state")
        except (KeyError, ValueError) as exc:
            rows.append({"line": i, "error": str(exc)})
            continue
        for m in ms:
            est, se = estimate_likelihood(policy, dag.graphs[sid], m, rng)
            rows.append({"line": i, "state": canonical_form(g).hex(),
                         "samples": m, "estimate": est, "stderr": se,
                         "exact": exact[sid],
                         "error": abs(est - exact[sid])})
    _write_csv(args.out or "-", rows)
    return 0


def cmd_symcheck(args):
    rows = []
    for i, g, err in _read_graphs(args.graphs):
        if err is not None:
            rows.append({"graph": i, "error": err})
            continue
        t0 = time.perf_counter()
        aut = automorphism_group(g)
        usec = (time.perf_counter() - t0) * 1e6
        rows.append({"graph": i, "n": g.n, "aut": aut.order,
                     "node_orbits": len(aut.node_orbit_partition),
                     "microseconds": round(usec, 1)})
    _write_csv(args.out or "-", rows)
    return 0


def _write_csv(path, rows):
    names = []
    for r in rows:
        for k in r:
            if k not in names:
                names.append(k)
    f = sys.stdout if path == "-" else open(path, "w", newline="")
    try:
        writer = csv.DictWriter(f, fieldnames=names, restval="")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if f is not sys.stdout:
            f.close()


# -- argument parsing ----------------------------------------------------

def _add_env_flags(p):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--env", choices=["illustrative", "clique", "cycle",
                                     "fragment"])
    p.add_argument("--max-nodes", dest="max_nodes", type=int)
    p.add_argument("--max-edges", dest="max_edges", type=int)
    p.add_argument("--max-degree", dest="max_degree", type=int)
    p.add_argument("--max-fragments", dest="max_fragments", type=int)
    p.add_argument("--reward-floor", dest="reward_floor", type=float)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sagfn",
        description="Symmetry-aware GFlowNet experiments on graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="build and summarize a state DAG")
    _add_env_flags(p)
    p.add_argument("--out", help="export DAG as JSONL")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("train", help="train a tabular policy")
    _add_env_flags(p)
    p.add_argument("--objective", choices=["tb", "db", "fm"])
    p.add_argument("--mode", choices=list(MODES))
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-new", dest="batch_new", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--transition-batch", dest="transition_batch", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    p.add_argument("--outdir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="exact distribution of a checkpoint")
    _add_env_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("likelihood", help="likelihood estimates")
    _add_env_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--terminals", required=True,
                   help="JSONL file of terminal graphs")
    p.add_argument("--samples", default="1,10,100,1000",
                   help="comma-separated grid of sample counts M")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_likelihood)

    p = sub.add_parser("symcheck", help="automorphism diagnostics")
    p.add_argument("--graphs", required=True,
                   help="JSONL file of graphs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_symcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
