"""Command-line front end.

Exit codes: 0 for a true verdict, a reached goal or a passing check; 1 for
false, not reached or a counterexample; 2 for errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import __version__
from .core import (
    Fault,
    GossipError,
    GossipState,
    agent_index,
    agent_name,
    all_positive,
    format_call,
    format_distribution,
    format_initial,
    format_sequence,
    parse_initial,
    parse_sequence,
)
from .formulas import parse_formula, print_formula
from .oracle import PROPERTIES, verify
from .protocols import (
    At,
    GoalNotReached,
    NoFault,
    RandomOnce,
    RoundRobin,
    RunBudgetExceeded,
    Scripted,
    SeededRandom,
    run,
)
from .semantics import DEFAULT_BUDGET, Model
from .variants import ErrorFreeModel, KvMode, LastCallModel


class UsageError(GossipError):
    pass


def _state(args) -> GossipState:
    if args.init:
        initial = parse_initial(args.init)
        if args.agents and args.agents != len(initial):
            raise UsageError(f"--agents {args.agents} disagrees with --init {args.init}")
    else:
        initial = all_positive(args.agents or 2)
    return GossipState(initial, tuple(parse_sequence(args.seq or "", len(initial))))


def _inputs(args, *names) -> dict:
    return {k: getattr(args, k) for k in names if getattr(args, k, None) is not None}


def _emit(args, command: str, inputs: dict, body: dict, text: str) -> None:
    if args.format == "structured":
        doc = {"command": command, "inputs": inputs, **body, "version": __version__,
               "seed": args.seed}
        print(json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False))
    else:
        print(text)


# -- subcommands ------------------------------------------------------------

def cmd_dist(args) -> int:
    s = _state(args)
    model = Model(len(s.initial), args.budget)
    rows = []
    for k in range(len(s.sequence) + 1):
        d = model.result_distribution(s.initial, s.sequence[:k])
        rows.append((k, format_call(s.sequence[k - 1]) if k else "", format_distribution(d)))
    width = max(len(r[1]) for r in rows)
    lines = []
    for k, call, d in rows:
        mark = "=>" if k == len(rows) - 1 else "  "
        lines.append(f"{mark} {k:>3}  {call:<{width}}  {d}")
    body = {"rows": [{"prefix": k, "call": c, "distribution": d} for k, c, d in rows],
            "verdict": rows[-1][2]}
    _emit(args, "dist", _inputs(args, "init", "seq", "agents"), body, "\n".join(lines))
    return 0


def _evaluate(args, s: GossipState, f) -> bool:
    n = len(s.initial)
    if args.semantics == "last":
        return LastCallModel(n, KvMode(args.kv_mode), args.error_free, args.budget).eval(s, f)
    if args.semantics == "full":
        return ErrorFreeModel(n, s.initial, True, args.budget).eval(s.sequence, f)
    if args.error_free:
        return ErrorFreeModel(n, s.initial, False, args.budget).eval(s.sequence, f)
    return Model(n, args.budget).eval(s, f)


def cmd_eval(args) -> int:
    s = _state(args)
    f = parse_formula(args.formula, len(s.initial))
    verdict = _evaluate(args, s, f)
    inputs = _inputs(args, "init", "seq", "agents", "semantics", "kv_mode", "error_free")
    inputs["formula"] = print_formula(f)
    _emit(args, "eval", inputs, {"verdict": verdict},
          f"{s} {'|=' if verdict else '|/='} {print_formula(f)}")
    return 0 if verdict else 1


def cmd_class(args) -> int:
    s = _state(args)
    agent = agent_index(args.agent)
    model = Model(len(s.initial), args.budget)
    members = sorted(model.equivalence_class(agent, s),
                     key=lambda t: (t.initial, format_sequence(t.sequence)))
    listing = [{"initial": format_initial(t.initial), "sequence": format_sequence(t.sequence),
                "valuation": format_distribution(model.result_distribution(t.initial, t.sequence))}
               for t in members]
    lines = [f"{len(listing)} states indistinguishable for {args.agent} from {s}"]
    lines += [f"  ({m['initial']}, {m['sequence'] or 'eps'})  {m['valuation']}" for m in listing]
    inputs = _inputs(args, "init", "seq", "agents", "agent")
    _emit(args, "class", inputs, {"verdict": len(listing), "members": listing}, "\n".join(lines))
    return 0


def _scheduler(cfg: dict, n: int):
    kind = cfg.get("scheduler", "roundrobin")
    if kind == "roundrobin":
        return RoundRobin(cfg.get("window"))
    if kind == "random":
        return SeededRandom(cfg.get("seed") or 0)
    if kind == "scripted":
        return Scripted(tuple(parse_sequence(cfg.get("seq") or "", n)))
    raise UsageError(f"unknown scheduler {kind!r}")


def _fault_plan(text: str | None, seed: int | None, n: int):
    """``none``, ``at:ROUND:caller|callee:SECRET`` or ``random:P``."""
    if not text or text == "none":
        return NoFault()
    kind, _, rest = text.partition(":")
    if kind == "at":
        try:
            round_no, side, secret = rest.split(":")
            return At(int(round_no), Fault[side.upper()], agent_index(secret))
        except (ValueError, KeyError) as e:
            raise UsageError(f"bad fault plan {text!r}: expected at:ROUND:caller|callee:SECRET") from e
    if kind == "random":
        try:
            return RandomOnce(seed or 0, float(rest))
        except ValueError as e:
            raise UsageError(f"bad fault plan {text!r}: expected random:P") from e
    raise UsageError(f"unknown fault plan {text!r}")


RUN_FIELDS = ("agents", "init", "seq", "scheduler", "window", "fault", "goal", "max_rounds",
              "settle", "seed", "budget")


def _run_config(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        unknown = set(cfg) - set(RUN_FIELDS)
        if unknown:
            raise UsageError(f"unknown run config fields: {', '.join(sorted(unknown))}")
    for k in RUN_FIELDS:
        v = getattr(args, k, None)
        # the shared budget flag always has a value; a config file may set its own
        if v is not None and not (k == "budget" and v == DEFAULT_BUDGET and k in cfg):
            cfg[k] = v
    for k, v in RUN_DEFAULTS.items():
        cfg.setdefault(k, v)
    if isinstance(cfg["goal"], str):
        cfg["goal"] = [cfg["goal"]]
    return cfg


RUN_DEFAULTS = {"scheduler": "roundrobin", "max_rounds": 100, "settle": 0, "goal": ["cSuperAll"],
                "budget": DEFAULT_BUDGET}


def cmd_run(args) -> int:
    cfg = _run_config(args)
    args.seed = cfg.get("seed")
    ns = argparse.Namespace(init=cfg.get("init"), agents=cfg.get("agents"), seq=None)
    initial = _state(ns).initial
    n = len(initial)
    goals = [parse_formula(g, n) for g in cfg["goal"]]
    scheduler = _scheduler(cfg, n)
    plan = _fault_plan(cfg.get("fault"), cfg.get("seed"), n)
    status = "reached"
    try:
        trace = run(initial, scheduler, plan, goals, cfg["max_rounds"], settle=cfg["settle"],
                    budget=cfg["budget"])
    except GoalNotReached as e:
        trace, status = e.trace, "not reached"
    except RunBudgetExceeded as e:
        trace, status = e.trace, f"undecided: {e}"
    report = trace.to_dict()
    lines = [f"initial {report['initial']}, {len(trace.sequence)} rounds: {report['sequence'] or 'eps'}"]
    if trace.fault_round:
        lines.append(f"fault in round {trace.fault_round}: {format_call(trace.sequence[trace.fault_round - 1])}")
    for g in report["goals"]:
        hit = "never" if g["hit"] is None else f"at prefix {g['hit']}"
        lines.append(f"{g['formula']}: {hit}{'' if g['stable'] else ' (not stable)'}")
    lines.append(status)
    _emit(args, "run", {k: v for k, v in cfg.items() if v is not None},
          {"verdict": status, "trace": report}, "\n".join(lines))
    return 0 if status == "reached" else 1 if status == "not reached" else 2


def cmd_check(args) -> int:
    report = verify(args.property, args.n, args.max_len, args.budget)
    body = {"verdict": "pass" if report.passed else "counterexample",
            "checked": report.checked, "counterexample": report.counterexample,
            "detail": report.detail}
    _emit(args, "check", {"property": args.property, "n": args.n, "max_len": args.max_len},
          body, str(report))
    return 0 if report.passed else 1


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--agents", type=int, help="number of agents (default: from --init, else 2)")
    shared.add_argument("--init", help="initial distribution, e.g. a|~b|c")
    shared.add_argument("--seq", help="call sequence, e.g. ab;ac[a];bc")
    shared.add_argument("--semantics", choices=("standard", "last", "full"), default="standard")
    shared.add_argument("--kv-mode", choices=[m.value for m in KvMode], default=KvMode.UNANIMITY.value)
    shared.add_argument("--error-free", action="store_true",
                        help="quantify only over error-free sequences from the given initial")
    shared.add_argument("--format", choices=("text", "structured"), default="text")
    shared.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="state budget")
    shared.add_argument("--seed", type=int, help="seed for random schedulers and faults")

    parser = argparse.ArgumentParser(prog="gossipsec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist", parents=[shared], help="distribution after each call")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("eval", parents=[shared], help="evaluate a formula")
    p.add_argument("formula")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("class", parents=[shared], help="list an agent's indistinguishable states")
    p.add_argument("--agent", required=True, help="agent letter")
    p.set_defaults(func=cmd_class)

    p = sub.add_parser("run", parents=[shared], help="run the protocol until the goals hold")
    p.add_argument("--config", help="JSON file with run fields")
    p.add_argument("--scheduler", choices=("roundrobin", "random", "scripted"))
    p.add_argument("--window", type=int)
    p.add_argument("--fault", help="none, at:ROUND:caller|callee:SECRET or random:P")
    p.add_argument("--goal", action="append", help="goal formula (repeatable)")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--settle", type=int, help="rounds to keep monitoring after all goals hold")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", parents=[shared], help="exhaustively verify a property")
    p.add_argument("--property", required=True, choices=PROPERTIES)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--max-len", type=int, default=4)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GossipError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
