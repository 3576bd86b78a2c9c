"""Runs of the ANY protocol under fair schedulers with at most one transmission error.

A run draws one call per round from a scheduler, optionally corrupts one
of them according to a fault plan, and evaluates goal formulas on every
prefix.  Goals keep being monitored after their first hit so that a goal
which later fails again is visible in the trace.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .core import (
    Call,
    Fault,
    GossipError,
    GossipState,
    ResourceLimit,
    agent_name,
    format_distribution,
    format_initial,
    format_sequence,
    parse_sequence,
)
from .formulas import (
    Formula,
    Implies,
    all_correct_experts,
    all_experts,
    correct_super_goal,
    print_formula,
    super_goal,
)
from .semantics import DEFAULT_BUDGET, Model


def ordered_pairs(n: int) -> list[tuple[int, int]]:
    """All (caller, callee) pairs in lexicographic order."""
    return [(x, y) for x in range(n) for y in range(n) if x != y]


# schedulers


@dataclass(frozen=True)
class RoundRobin:
    """Cycles through the ordered pairs in lexicographic order.

    Every ordered pair occurs once in every ``window`` consecutive rounds,
    where the window defaults to ``n(n-1)``.
    """

    window: int | None = None

    def calls(self, n: int) -> Iterator[tuple[int, int]]:
        pairs = ordered_pairs(n)
        if self.window is not None and self.window < len(pairs):
            raise ValueError(f"a round-robin window needs at least {len(pairs)} rounds")
        while True:
            yield from pairs

    def fairness_window(self, n: int) -> int:
        return self.window or n * (n - 1)

    def describe(self) -> dict:
        return {"kind": "round-robin", "window": self.window}


@dataclass(frozen=True)
class SeededRandom:
    """Shuffled blocks of all ordered pairs, one fresh permutation per block.

    Each ordered pair occurs in every ``2n(n-1) - 1`` consecutive rounds.
    """

    seed: int = 0

    def calls(self, n: int) -> Iterator[tuple[int, int]]:
        rng = random.Random(self.seed)
        pairs = ordered_pairs(n)
        while True:
            block = pairs[:]
            rng.shuffle(block)
            yield from block

    def fairness_window(self, n: int) -> int:
        return 2 * n * (n - 1) - 1

    def describe(self) -> dict:
        return {"kind": "seeded-random", "seed": self.seed}


@dataclass(frozen=True)
class Scripted:
    """A fixed call sequence; the run ends when it is used up."""

    sequence: tuple[Call, ...]

    @classmethod
    def parse(cls, text: str, n: int | None = None) -> "Scripted":
        return cls(tuple(parse_sequence(text, n)))

    def calls(self, n: int) -> Iterator[Call]:
        for c in self.sequence:
            if max(c.caller, c.callee) >= n:
                raise ValueError(f"call {c} mentions an agent beyond {agent_name(n - 1)}")
            yield c

    def fairness_window(self, n: int) -> int | None:
        return None

    def describe(self) -> dict:
        return {"kind": "scripted", "sequence": format_sequence(self.sequence)}


Scheduler = RoundRobin | SeededRandom | Scripted


# fault plans


@dataclass(frozen=True)
class NoFault:
    def fault(self, round_no: int, n: int) -> tuple[Fault, int] | None:
        return None

    def describe(self) -> dict:
        return {"kind": "none"}


@dataclass(frozen=True)
class At:
    """Corrupt the call of round ``round`` (1-based) on one side, flipping ``secret``."""

    round: int
    side: Fault
    secret: int

    def __post_init__(self):
        if self.round < 1:
            raise ValueError("fault rounds count from 1")
        if self.side == Fault.NONE:
            raise ValueError("a fault needs a side: caller or callee")

    def fault(self, round_no: int, n: int) -> tuple[Fault, int] | None:
        if round_no != self.round:
            return None
        if self.secret >= n:
            raise ValueError(f"secret {agent_name(self.secret)} is beyond {agent_name(n - 1)}")
        return self.side, self.secret

    def describe(self) -> dict:
        return {"kind": "at", "round": self.round, "side": self.side.name.lower(),
                "secret": agent_name(self.secret)}


@dataclass(frozen=True)
class RandomOnce:
    """Each round, with probability ``p``, corrupt the call at a random side and secret."""

    seed: int = 0
    p: float = 0.1

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("the fault probability must lie in [0, 1]")

    def fault(self, round_no: int, n: int) -> tuple[Fault, int] | None:
        # one draw stream per round keeps the plan independent of the scheduler
        rng = random.Random(f"{self.seed}:{round_no}")
        if rng.random() >= self.p:
            return None
        return rng.choice((Fault.CALLER, Fault.CALLEE)), rng.randrange(n)

    def describe(self) -> dict:
        return {"kind": "random-once", "seed": self.seed, "p": self.p}


FaultPlan = NoFault | At | RandomOnce


# traces


class GoalNotReached(GossipError):
    """Some goal never held within the round limit; ``trace`` has the whole run."""

    def __init__(self, trace: "Trace"):
        missing = [g for g, hit in zip(trace.goal_names, trace.hits) if hit is None]
        super().__init__(f"not reached within {len(trace.sequence)} rounds: {', '.join(missing)}")
        self.trace = trace


class RunBudgetExceeded(ResourceLimit):
    """Goal evaluation ran out of budget; ``trace`` holds the rounds decided so far."""

    def __init__(self, trace: "Trace", cause: ResourceLimit):
        super().__init__(f"{cause} after {len(trace.sequence)} rounds")
        self.trace = trace


@dataclass
class Trace:
    initial: tuple
    goals: tuple[Formula, ...]
    scheduler: dict
    fault_plan: dict
    sequence: list[Call] = field(default_factory=list)
    snapshots: list[tuple] = field(default_factory=list)
    history: list[list[bool]] = field(default_factory=list)
    fault_round: int | None = None

    @property
    def goal_names(self) -> list[str]:
        return [print_formula(g) for g in self.goals]

    @property
    def hits(self) -> list[int | None]:
        """First prefix length at which each goal holds, or None."""
        return [next((k for k, v in enumerate(h) if v), None) for h in self.history]

    def stable(self, goal: int = 0) -> bool:
        """Whether the goal holds at every prefix from its first hit on."""
        h = self.history[goal]
        hit = self.hits[goal]
        return hit is None or all(h[hit:])

    def state(self, length: int | None = None) -> GossipState:
        seq = self.sequence if length is None else self.sequence[:length]
        return GossipState(self.initial, tuple(seq))

    def to_dict(self) -> dict:
        return {
            "initial": format_initial(self.initial),
            "scheduler": self.scheduler,
            "fault_plan": self.fault_plan,
            "sequence": format_sequence(self.sequence),
            "fault_round": self.fault_round,
            "snapshots": [format_distribution(d) for d in self.snapshots],
            "goals": [
                {"formula": name, "hit": hit, "stable": self.stable(i), "history": h}
                for i, (name, hit, h) in enumerate(zip(self.goal_names, self.hits, self.history))
            ],
        }


def run(initial: Sequence[int], scheduler: Scheduler, plan: FaultPlan = NoFault(),
        goals: Sequence[Formula] = (), max_rounds: int = 100, *, settle: int = 0,
        strict: bool = True, model: Model | None = None,
        budget: int = DEFAULT_BUDGET) -> Trace:
    """Run ANY from ``initial`` until every goal has held, then ``settle`` more rounds.

    Stops at ``max_rounds`` or when a scripted schedule is used up.  Without
    goals the run always goes on to one of those ends.  With
    ``strict`` a goal that never held raises :class:`GoalNotReached`.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    initial = tuple(initial)
    n = len(initial)
    model = model or Model(n, budget)
    if model.n != n:
        raise ValueError(f"model is for {model.n} agents, initial has {n}")
    trace = Trace(initial, tuple(goals), scheduler.describe(), plan.describe())
    trace.history = [[] for _ in goals]
    faulted = any(c.faulty for c in getattr(scheduler, "sequence", ()))

    def observe() -> bool:
        s = trace.state()
        try:
            trace.snapshots.append(model.result_distribution(s.initial, s.sequence))
            for h, g in zip(trace.history, trace.goals):
                h.append(model.eval(s, g))
        except ResourceLimit as e:
            raise RunBudgetExceeded(trace, e) from e
        return bool(trace.history) and all(any(h) for h in trace.history)

    done_at = 0 if observe() else None
    calls = scheduler.calls(n)
    for round_no in range(1, max_rounds + 1):
        if done_at is not None and round_no > done_at + settle:
            break
        c = next(calls, None)
        if c is None:
            break
        if not isinstance(c, Call):
            c = Call(*c)
        f = plan.fault(round_no, n)
        if f is not None and not faulted:
            if c.faulty:
                raise ValueError(f"round {round_no} is already faulty in the script")
            c = Call(c.caller, c.callee, *f)
        if c.faulty:
            if trace.fault_round is not None:
                raise ValueError("a run may contain at most one faulty call")
            trace.fault_round = round_no
            faulted = True
        trace.sequence.append(c)
        if observe() and done_at is None:
            done_at = round_no
    if strict and goals and done_at is None:
        raise GoalNotReached(trace)
    return trace


def check_fairness(trace: Trace, window: int) -> bool:
    """Every ordered pair occurs in each full window of ``window`` rounds of the trace."""
    n = len(trace.initial)
    need = set(ordered_pairs(n))
    seq = [(c.caller, c.callee) for c in trace.sequence]
    return all(need <= set(seq[i:i + window]) for i in range(len(seq) - window + 1))


# success taxonomy


SUCCESS_GOALS = ("successful", "supersuccessful", "correct successful",
                 "correct supersuccessful")


@dataclass
class Classification:
    runs: int
    flags: dict[str, bool]
    first_correct: dict[str, bool]
    witnesses: dict[str, str | None]

    def to_dict(self) -> dict:
        return {"runs": self.runs, **self.flags,
                **{f"first-correct {k}": v for k, v in self.first_correct.items()},
                "witnesses": self.witnesses}


def classify(traces: Sequence[Trace], model: Model | None = None) -> Classification:
    """Success flags of a family of runs.

    A flag holds when every run reaches the goal.  First-correctness
    holds when no prefix of any run satisfies the goal without its correct
    counterpart; the first violating prefix is kept as a witness.
    """
    if not traces:
        raise ValueError("nothing to classify")
    n = len(traces[0].initial)
    model = model or Model(n)
    goals = [all_experts(n), super_goal(n), all_correct_experts(n), correct_super_goal(n)]
    reached = dict.fromkeys(SUCCESS_GOALS, True)
    first = {"successful": True, "supersuccessful": True}
    witnesses: dict[str, str | None] = {"successful": None, "supersuccessful": None}
    for t in traces:
        verdicts = [[model.eval(t.state(k), g) for g in goals] for k in range(len(t.sequence) + 1)]
        for i, name in enumerate(SUCCESS_GOALS):
            reached[name] &= any(v[i] for v in verdicts)
        for name, (plain, correct) in (("successful", (0, 2)), ("supersuccessful", (1, 3))):
            bad = next((k for k, v in enumerate(verdicts) if v[plain] and not v[correct]), None)
            if bad is not None and first[name]:
                first[name] = False
                s = t.state(bad)
                witnesses[name] = f"({format_initial(s.initial)}, {format_sequence(s.sequence)})"
    return Classification(len(traces), reached, first, witnesses)


def first_correct_formula(n: int, super_: bool = False) -> Formula:
    """The validity that first-correct (super)success asks for."""
    if super_:
        return Implies(super_goal(n), correct_super_goal(n))
    return Implies(all_experts(n), all_correct_experts(n))
