"""Command-line entry point: solve, rollout, bench, sweep, verify, swarm, summary.

Exit status is 0 on success, 1 when a golden value or property check fails
(or a run aborts, e.g. over budget) and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

from .benchmarks import REGISTRY, SpecError, UnknownEnv, build_model, make
from .benchmarks.envspec import load_spec
from .benchmarks.policies import PolicySpec, build_policy, large_eta, parse_policy
from .cutoff_solver import BudgetError, CoverageError, CutoffConfig, solve_cutoff, split_group
from .mmdp import ModelError
from .rollout_engine import (atomic_write, expected_return, horizon_for, rollout, rollout_mean,
                             write_summary_csv, write_trace)

OK, FAILED, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_model(args):
    if args.spec:
        return build_model(load_spec(args.spec))
    if not args.env:
        raise UsageError("one of --env or --spec is required")
    return make(args.env)


def _add_env(p):
    p.add_argument("--env", help=f"registered environment ({', '.join(REGISTRY)})")
    p.add_argument("--spec", help="path to a JSON environment spec")


def _policy_spec(model, args) -> PolicySpec:
    if args.v_comp is not None and args.xi is not None:
        raise UsageError("--xi and --v-comp are exclusive")
    xi = args.xi if args.v_comp is None else args.v_comp - model.V
    if xi is not None and xi < 0:
        raise UsageError("xi must be non-negative (V_comp >= V_exec)")
    try:
        return parse_policy(model, args.policy, xi, args.eta)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _out(text: str):
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# subcommands

def cmd_solve(args) -> int:
    model = _load_model(args)
    if args.v_comp is not None and args.xi is not None:
        raise UsageError("--xi and --v-comp are exclusive")
    xi = args.xi if args.v_comp is None else args.v_comp - model.V
    xi = 0.0 if xi is None else xi
    if xi < 0:
        raise UsageError("xi must be non-negative (V_comp >= V_exec)")
    eta = large_eta(model) if args.eta is None else args.eta
    sol = solve_cutoff(model, CutoffConfig(model.V, xi, eta, share=args.share))
    start = split_group(model, tuple(range(model.n)), model.start, sol.V_comp)
    if args.out:
        sol.save(args.out)
    if args.jsonl:
        sol.export_jsonl(args.jsonl)
    value = sum(sol.group_value(m, st) for m, st in start)
    _out(f"group states: {len(sol.keys)}")
    _out(f"V_comp={sol.V_comp:g} H={sol.H} value(start)={value:.6f}")
    return OK


def cmd_rollout(args) -> int:
    model = _load_model(args)
    spec = _policy_spec(model, args)
    policy = build_policy(model, spec)
    T = args.T or horizon_for(model, args.tol)
    stochastic = any(len(model.kernel(i, si, a)) > 1 for i in range(model.n)
                     for si in model.local_states(i) for a in model.actions(i, si))
    stderr, cycle = None, None
    if stochastic and args.reps:
        ret, stderr, tail = rollout_mean(model, policy, T, args.reps, args.seed)
    elif stochastic and not args.trace:
        res = expected_return(model, policy, T)
        ret, tail = res.ret, res.tail
    else:
        res = rollout(model, policy, T, seed=args.seed, record=bool(args.trace))
        ret, tail, cycle = res.ret, res.tail, res.cycle
        if args.trace:
            write_trace(args.trace, res, model.space)
    line = f"return={ret:.6f} tail<={tail:.3g} T={T}"
    if stderr is not None:
        line += f" stderr={stderr:.4f} reps={args.reps}"
    if cycle is not None:
        line += f" cycle: entry t={cycle[0]} period={cycle[1]}"
    _out(line)
    if args.summary:
        write_summary_csv(args.summary, [{
            "env": args.env or args.spec, "policy": args.policy, "xi": spec.xi, "eta": spec.eta,
            "return": ret, "tail": tail, "cycle_period": cycle[1] if cycle else ""}])
    return OK


def cmd_bench(args) -> int:
    if args.reconstruct:
        from .benchmarks.reconstruct import reconstruct
        try:
            rep = reconstruct(args.reconstruct, exhaustive=args.exhaustive, limit=args.limit,
                              log=(lambda r: print(json.dumps(r), file=sys.stderr))
                              if args.verbose else None)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from exc
        _out(json.dumps(rep, indent=2, default=str))
        return OK if rep["matched"] else FAILED
    from .benchmarks.suite import GOLDENS, failed, run_benchmark_suite, write_report
    envs = args.envs.split(",") if args.envs else None
    for env in envs or ():
        if env not in GOLDENS:
            raise UnknownEnv(env)
    policies = args.policies.split(",") if args.policies else None
    rows = run_benchmark_suite(envs, policies)
    if args.report:
        write_report(args.report, rows)
    for r in rows:
        _out(f"{r['env']:<24} {r['policy']:<16} {_fmt(r.get('return')):>12} "
             f"golden={_fmt(r.get('golden')):>9} cycle={r.get('cycle_period', '')!s:<3} "
             f"{r['status']}")
    bad = failed(rows)
    _out(f"{len(rows) - len(bad)}/{len(rows)} cells ok")
    return FAILED if bad else OK


def _fmt(x):
    return "" if x is None or x == "" else f"{x:.2f}"


def cmd_sweep(args) -> int:
    from .benchmarks.suite import long_journey_sweep, sweep_corners
    if args.env != "long_journey":
        raise UsageError("sweep supports --env long_journey")
    xis = [float(x) for x in args.xis.split(",")] if args.xis else None
    etas = [int(x) for x in args.etas.split(",")] if args.etas else None
    rows = long_journey_sweep(args.gamma, xis, etas, tuple(args.methods.split(",")))
    if args.out:
        write_summary_csv(args.out, rows, ["method", "xi", "eta", "return", "tail"])
    for (method, corner), v in sorted(sweep_corners(rows).items()):
        _out(f"{method:<8} {corner:<15} {v:.2f}")
    return OK


def cmd_verify(args) -> int:
    from .verification import PROPERTIES, verify
    props = list(PROPERTIES) if args.property == "all" else [args.property]
    report = {}
    for prop in props:
        if prop not in PROPERTIES:
            raise UsageError(f"unknown property {prop!r}; available: {', '.join(PROPERTIES)}, all")
        report[prop] = verify(prop, args.instances, args.seed)
    text = json.dumps(report, indent=2, default=str)
    if args.out:
        atomic_write(args.out, text + "\n")
    _out(text)
    return OK if all(r["pass"] for r in report.values()) else FAILED


def cmd_swarm(args) -> int:
    from .benchmarks.swarm import SwarmConfig, run_swarm
    cfg = SwarmConfig(rooms_x=args.rooms_x, rooms_y=args.rooms_y, agents=args.agents,
                      steps=args.steps, seed=args.seed,
                      checkpoints=tuple(c for c in (50, 150, 500, 1000) if c <= args.steps))
    stats, trace = run_swarm(cfg, args.stats, record=bool(args.trace))
    if args.trace:
        atomic_write(args.trace, "".join(json.dumps(r) + "\n" for r in trace))
    for st in stats:
        _out(json.dumps({k: v for k, v in asdict(st).items() if k != "runtime"}))
    return OK if stats and stats[-1].collisions == 0 else FAILED


def cmd_summary(args) -> int:
    _out(export_trace_summary(args.trace))
    return OK


# trace summary

class TraceError(ValueError):
    pass


def _read_trace(path: str) -> list[dict]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"{path}:{n}: malformed trace line ({exc.msg})") from exc
            if not isinstance(rec, dict) or "t" not in rec:
                raise TraceError(f"{path}:{n}: trace record without a 't' field")
            out.append(rec)
    return out


def export_trace_summary(path: str, checkpoints=(50, 150, 500, 1000)) -> str:
    """Human-readable table of a rollout or swarm trace."""
    recs = _read_trace(path)
    if not recs:
        return ""
    if "occupancy" in recs[0]:
        return _swarm_summary(recs, checkpoints)
    for n, rec in enumerate(recs, 1):
        missing = {"state", "partition", "action", "reward", "return"} - set(rec)
        if missing:
            raise TraceError(f"{path}:{n}: missing fields {sorted(missing)}")
    lines = [f"{'t':>4}  {'positions':<28} {'partition':<18} {'reward':>10} {'return':>12}"]
    cycle = _terminal_cycle([json.dumps(r["state"]) for r in recs])
    if cycle is not None:
        cycle = (recs[cycle[0]]["t"], cycle[1])
    for rec in recs:
        pos = " ".join(_short(p) for p, _ in rec["state"])
        part = " ".join("{" + ",".join(map(str, b)) + "}" for b in rec["partition"])
        lines.append(f"{rec['t']:>4}  {pos:<28} {part:<18} {rec['reward']:>10.3f} "
                     f"{rec['return']:>12.4f}")
    if cycle is not None:
        kind = "absorbing fixed point" if cycle[1] == 1 else "cycle"
        lines.append(f"{kind}: joint state at t={cycle[0] + cycle[1]} repeats t={cycle[0]} "
                     f"(period {cycle[1]})")
    return "\n".join(lines)


def _terminal_cycle(keys):
    """(start index, period) of the periodic regime the trace ends in.

    Memory-based policies can revisit a state without repeating, so a single
    revisit is not enough: the period must hold to the end of the trace for
    at least two full periods.
    """
    n = len(keys)
    for p in range(1, n // 2 + 1):
        t0 = n - p
        while t0 > 0 and keys[t0 - 1] == keys[t0 - 1 + p]:
            t0 -= 1
        if n - t0 >= 2 * p:
            return t0, p
    return None


def _short(p):
    return "(" + ",".join(map(str, p)) + ")" if isinstance(p, list) else str(p)


def _swarm_summary(recs, checkpoints) -> str:
    from .benchmarks.swarm import stats_from_trace
    agents = max((i for r in recs for i in r["completed"]), default=0) + 1
    agents = max(agents, sum(recs[0]["occupancy"]) + recs[0]["queued"])
    marks = [c for c in checkpoints if c <= len(recs)] or [len(recs)]
    lines = [f"{'t':>5} {'coll':>5} {'mean obj':>9} {'min':>4} {'max':>4} {'total':>6} "
             f"{'room max':>8} {'grp max':>7} {'grp mean':>8} {'>=4':>7} {'heur':>7}"]
    for st in stats_from_trace(recs, agents, marks):
        big = sum(v for k, v in st.group_sizes.items() if k >= 4)
        lines.append(f"{st.t:>5} {st.collisions:>5} {st.mean_objectives:>9.2f} "
                     f"{st.min_objectives:>4} {st.max_objectives:>4} {st.total_objectives:>6} "
                     f"{st.max_room_agents:>8} {st.max_group:>7} {st.mean_group:>8.3f} "
                     f"{big:>7.3%} {st.heuristic_fraction:>7.3%}")
    return "\n".join(lines)


# parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="locim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a Cutoff table and write it")
    _add_env(p)
    p.add_argument("--xi", type=float)
    p.add_argument("--v-comp", type=float)
    p.add_argument("--eta", type=int, help="default: smallest eta with a negligible tail")
    p.add_argument("--share", action="store_true", help="share tables among identical agents")
    p.add_argument("--out", help="binary table path")
    p.add_argument("--jsonl", help="JSONL table export")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("rollout", help="run a policy and report its return")
    _add_env(p)
    p.add_argument("--policy", default="trivial:cutoff",
                   help="joint | trivial[:corner] | smbe[:V_comp]")
    p.add_argument("--xi", type=float)
    p.add_argument("--v-comp", type=float)
    p.add_argument("--eta", type=int)
    p.add_argument("--T", type=int, help="horizon (default: tail below --tol)")
    p.add_argument("--tol", type=float, default=0.005)
    p.add_argument("--reps", type=int, default=0, help="sampled repetitions for stochastic envs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="JSONL trace path")
    p.add_argument("--summary", help="CSV summary path")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("bench", help="benchmark suite against golden values")
    p.add_argument("--suite", default="appendix-a", choices=["appendix-a"])
    p.add_argument("--envs", help="comma-separated subset")
    p.add_argument("--policies", help="comma-separated policy labels")
    p.add_argument("--report", help="CSV report path")
    p.add_argument("--reconstruct", metavar="ENV", help="run the layout reconstruction search")
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--limit", type=int)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="(xi, eta) grid on Long Journey")
    p.add_argument("--env", default="long_journey")
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--methods", default="trivial,smbe")
    p.add_argument("--xis", help="comma-separated; the last is the large corner")
    p.add_argument("--etas", help="comma-separated; the last is the large corner")
    p.add_argument("--out", help="CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="property suites")
    p.add_argument("--property", default="all")
    p.add_argument("--instances", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("swarm", help="100-agent room navigation")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--agents", type=int, default=100)
    p.add_argument("--rooms-x", type=int, default=6)
    p.add_argument("--rooms-y", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stats", help="JSONL stats path")
    p.add_argument("--trace", help="JSONL per-step trace path")
    p.set_defaults(func=cmd_swarm)

    p = sub.add_parser("summary", help="readable table of a JSONL trace")
    p.add_argument("trace")
    p.set_defaults(func=cmd_summary)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, UnknownEnv, SpecError, ModelError, TraceError, FileNotFoundError) as exc:
        print(f"locim {args.command}: {exc}", file=sys.stderr)
        return USAGE
    except (BudgetError, CoverageError) as exc:
        print(f"locim {args.command}: {exc}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
