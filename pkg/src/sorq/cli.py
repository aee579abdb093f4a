"""Command-line entry point: ``sorq {generate,solve,learn,experiment,rerun}``.

Every command writes a run manifest before it computes anything. A manifest is
a ``key = value`` file holding the command, the tool version and every resolved
option, and ``sorq rerun MANIFEST`` repeats the run exactly.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, format_config, parse_config, split_lines
from .exact import q_value_iteration, value_iteration, w_star
from .experiments import W_TOKENS, resolve_w, run_experiment, write_experiment_csvs
from .learn import LearnerConfig, StepSchedule, run_learner
from .mdp import GeneratorConfig, generate_random_mdp, read_mdp, write_mdp

ORACLE_TOL = 1e-8
EXPERIMENT_MANIFEST = "manifest.txt"


def _g(x: float) -> str:
    return format(float(x), ".17g")


def _write_text(path: str, text: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _manifest_text(command: str, options: dict, extra: str = "") -> str:
    lines = ["# sorq run manifest", f"command = {command}", f"version = {__version__}"]
    lines += [f"args.{key} = {value}" for key, value in options.items()]
    return "\n".join(lines) + "\n" + extra


def _options(args: argparse.Namespace) -> dict:
    skip = {"command", "func"}
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def _resolve_w(token: str, mdp) -> float:
    limit = w_star(mdp)
    if token in W_TOKENS:
        return resolve_w(token, limit)[0]
    w = float(token)
    if not 0 < w <= limit + 1e-12:
        raise ValueError(f"w={w} outside (0, w*={_g(limit)}]")
    return w


def cmd_generate(args) -> int:
    cfg = GeneratorConfig(
        num_states=args.states,
        num_actions=args.actions,
        discount=args.discount,
        min_self_loop=args.min_self_loop,
        reward_low=args.reward_low,
        reward_high=args.reward_high,
        seed=args.seed,
    )
    _write_text(args.out + ".manifest", _manifest_text("generate", _options(args)))
    mdp = generate_random_mdp(cfg)
    write_mdp(mdp, args.out)
    print(_g(w_star(mdp)))
    return 0


def cmd_solve(args) -> int:
    _write_text(args.out + ".manifest", _manifest_text("solve", _options(args)))
    mdp = read_mdp(args.mdp)
    w = _resolve_w(args.w, mdp)
    if args.kind == "v":
        res = value_iteration(mdp, w, tol=args.tol, max_iter=args.max_iter)
        names = [f"v_{i}" for i in range(mdp.num_states)]
    else:
        res = q_value_iteration(mdp, w, tol=args.tol, max_iter=args.max_iter)
        names = [f"q_{i}_{a}" for i in range(mdp.num_states) for a in range(mdp.num_actions)]
    header = ["w", "iterations", "final_residual", "converged", *names]
    row = [_g(w), str(res.iterations), _g(res.final_residual), str(int(res.converged))]
    row += [_g(x) for x in res.solution.ravel()]
    _write_text(args.out, ",".join(header) + "\n" + ",".join(row) + "\n")
    if not res.converged:
        print(f"not converged after {res.iterations} iterations", file=sys.stderr)
        return 3
    return 0


def _q_csv(q: np.ndarray) -> str:
    rows = ["state," + ",".join(f"a{a}" for a in range(q.shape[1]))]
    rows += [f"{i}," + ",".join(_g(x) for x in q[i]) for i in range(q.shape[0])]
    return "\n".join(rows) + "\n"


def cmd_learn(args) -> int:
    q_out = args.q_out or os.path.splitext(args.out)[0] + "_q.csv"
    args.q_out = q_out
    _write_text(args.out + ".manifest", _manifest_text("learn", _options(args)))
    mdp = read_mdp(args.mdp)
    algorithm = "sor_q" if args.algo == "sorq" else "standard_q"
    w = _resolve_w(args.w, mdp) if algorithm == "sor_q" else 1.0
    cfg = LearnerConfig(
        algorithm=algorithm,
        w=w,
        schedule=StepSchedule(args.schedule, args.c0, args.theta),
        total_steps=args.steps,
        seed=args.seed,
        record_every=args.record_every,
        initial_q=args.initial_q,
    )
    oracle = value_iteration(mdp, 1.0, tol=ORACLE_TOL)
    if not oracle.converged:
        raise RuntimeError("oracle value iteration did not converge")
    run = run_learner(mdp, cfg, oracle.solution)
    _write_text(args.out, run.trace.to_csv())
    _write_text(q_out, _q_csv(run.state.q))
    print(f"final error {run.trace.errors[-1]:.6g} (initial {run.trace.errors[0]:.6g})")
    return 0


def _experiment(cfg, out: str, jobs: int, source: dict) -> int:
    os.makedirs(out, exist_ok=True)
    manifest = _manifest_text("experiment", {**source, "out": out, "jobs": jobs}, format_config(cfg))
    _write_text(os.path.join(out, EXPERIMENT_MANIFEST), manifest)
    summary = run_experiment(cfg, jobs=jobs)
    write_experiment_csvs(summary, out)
    print(
        "; ".join(
            f"{arm.name}: final avg error {summary.final_avg_error[arm.name]:.6g}, "
            f"avg policy difference {summary.avg_policy_difference[arm.name]:.6g}"
            for arm in summary.arms
        )
    )
    return 0


def cmd_experiment(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    return _experiment(cfg, args.out, args.jobs, {"config": args.config})


def cmd_rerun(args) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        text = fh.read()
    entries = {key: value for _, key, value in split_lines(text)}
    command = entries.get("command")
    if command == "experiment":
        cfg = parse_config(text, ignore=tuple(k for k in entries if k in ("command", "version") or k.startswith("args.")))
        source = {"config": entries.get("args.config", "")}
        return _experiment(cfg, entries["args.out"], int(entries["args.jobs"]), source)
    if command not in ("generate", "solve", "learn"):
        raise ValueError(f"manifest names unknown command {command!r}")
    argv = [command]
    for key, value in entries.items():
        if key.startswith("args."):
            argv += ["--" + key[5:].replace("_", "-"), value]
    return main(argv)


def _jobs_default() -> int:
    return int(os.environ.get("SORQ_JOBS", "1"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sorq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random MDP and print its w*")
    p.add_argument("--states", type=int, default=10)
    p.add_argument("--actions", type=int, default=5)
    p.add_argument("--discount", type=float, default=0.9)
    p.add_argument("--min-self-loop", type=float, default=0.05)
    p.add_argument("--reward-low", type=float, default=-1.0)
    p.add_argument("--reward-high", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="value iteration or Q-value iteration with relaxation factor w")
    p.add_argument("--mdp", required=True)
    p.add_argument("--w", default="1", help="number, 'w_star' or 'midpoint'")
    p.add_argument("--kind", choices=("v", "q"), default="v")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=1_000_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("learn", help="one learning run; writes the error trace and final Q")
    p.add_argument("--mdp", required=True)
    p.add_argument("--algo", choices=("q", "sorq"), default="sorq")
    p.add_argument("--w", default="1", help="number, 'w_star' or 'midpoint' (sorq only)")
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--schedule", choices=("polynomial", "constant"), default="polynomial")
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-every", type=int, default=100)
    p.add_argument("--initial-q", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--q-out", help="final Q-table CSV (default: <out stem>_q.csv)")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("experiment", help="batch comparison over random MDPs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=_jobs_default())
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, ConfigError) as exc:
        print(f"sorq {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
