"""Two alternative message semantics: last-call storage and full information.

Under last-call storage each agent keeps, per other agent, only the pair
(X, Y) of what it sent and what it received in their most recent call.
Holdings, knowledge and the observation relation are read off these
stores alone.

Under full information (error-free gossip only) calls also exchange the
agents' complete views, so an agent observes its partner's whole history.
The same incremental machinery also gives the standard observation
relation restricted to error-free gossip, which is the baseline the full
semantics is compared against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Iterator

from .core import (
    Call,
    GossipError,
    GossipState,
    ResourceLimit,
    all_initials,
    contribution,
    expand,
    format_sequence,
    restrict,
    value_bit,
)
from .formulas import Formula
from .semantics import DEFAULT_BUDGET, canonical, canonical_calls


class UnsupportedFragment(GossipError, ValueError):
    """The formula uses a construct the variant semantics does not define."""


class FaultInSequence(GossipError, ValueError):
    """The full-information semantics is only defined for error-free gossip."""


class KvMode(enum.Enum):
    LAST_CALL = "lastcall"  # the value received in the last call with the owner
    UNANIMITY = "unanimity"  # the one value received from every agent that sent one


# -- last-call stores -------------------------------------------------------

Store = tuple  # per agent: a tuple over all agents of (X, Y); the own slot is unused


def _initial_stores(initial: tuple) -> tuple:
    n = len(initial)
    return tuple(
        tuple((value_bit(a, initial[a]), 0) for _ in range(n)) for a in range(n)
    )


def holding_last(store: Store, agent: int | None = None) -> int:
    """Union of every stored X and Y of one agent."""
    h = 0
    for b, (x, y) in enumerate(store):
        if b != agent:
            h |= x | y
    return h


def _apply(stores: tuple, c: Call) -> tuple:
    x, y = c.caller, c.callee
    hx, hy = holding_last(stores[x], x), holding_last(stores[y], y)
    sx = list(stores[x])
    sy = list(stores[y])
    sx[y] = (hx, contribution(c, x, hy))
    sy[x] = (hy, contribution(c, y, hx))
    out = list(stores)
    out[x], out[y] = tuple(sx), tuple(sy)
    return tuple(out)


@lru_cache(maxsize=1 << 18)
def last_stores(initial: tuple, seq: tuple) -> tuple:
    """Every agent's store after ``seq``, computed left to right."""
    if not seq:
        return _initial_stores(tuple(initial))
    return _apply(last_stores(initial, seq[:-1]), seq[-1])


def last_store(initial, seq, agent: int) -> dict[int, tuple[int, int]]:
    """Agent's stored (X, Y) per other agent."""
    store = last_stores(tuple(initial), tuple(seq))[agent]
    return {b: xy for b, xy in enumerate(store) if b != agent}


def known_value_last(initial, seq, a: int, b: int, mode: KvMode = KvMode.UNANIMITY) -> int | None:
    """The polarity of ``b`` that ``a`` takes as known from its store, or None."""
    if a == b:
        return initial[a]
    store = last_stores(tuple(initial), tuple(seq))[a]
    if mode == KvMode.LAST_CALL:
        seen = {restrict(store[b][1], b)}
    else:
        seen = {restrict(y, b) for c, (_, y) in enumerate(store) if c != a and restrict(y, b)}
    if len(seen) != 1:
        return None
    r = seen.pop()
    return {2: 1, 1: 0}.get(r)


# -- evaluation under last-call storage -------------------------------------

def _sequences(n: int, length: int, error_free: bool) -> Iterator[tuple]:
    calls = canonical_calls(n)
    clean = [c for c in calls if not c.faulty]
    yield from product(clean, repeat=length)
    if error_free:
        return
    faulty = [c for c in calls if c.faulty]
    for at in range(length):
        for pre in product(clean, repeat=at):
            for f in faulty:
                for post in product(clean, repeat=length - at - 1):
                    yield pre + (f,) + post


def _universe_size(n: int, length: int, error_free: bool, initials: int) -> int:
    p = n * (n - 1) // 2
    size = p ** length
    if not error_free:
        size += length * p * 2 * n * p ** (length - 1)
    return size * initials


class LastCallModel:
    """``K`` under last-call storage.

    ``K_a`` quantifies over states of the same length whose initial value
    of ``a`` agrees and whose store for ``a`` is equal.  With
    ``error_free`` the states range over error-free sequences from the
    evaluated initial distribution; otherwise over every initial
    distribution and every sequence with at most one faulty call.
    Direction reversal is an automorphism here too, so calls are taken
    with the lower agent first.
    """

    def __init__(self, n: int, kv_mode: KvMode = KvMode.UNANIMITY, error_free: bool = False,
                 budget: int = DEFAULT_BUDGET):
        self.n = n
        self.kv_mode = kv_mode
        self.error_free = error_free
        self.budget = budget
        self._groups: dict = {}
        self._truth: dict = {}

    def _key(self, agent: int, initial: tuple, seq: tuple) -> tuple:
        return initial[agent], last_stores(initial, seq)[agent]

    def _group(self, agent: int, length: int, initial: tuple) -> dict:
        scope = (agent, length, initial if self.error_free else None)
        groups = self._groups.get(scope)
        if groups is not None:
            return groups
        initials = [initial] if self.error_free else all_initials(self.n)
        size = _universe_size(self.n, length, self.error_free, len(initials))
        if size > self.budget:
            raise ResourceLimit(f"last-call universe of {size} states exceeds the budget of {self.budget}")
        groups = {}
        for seq in _sequences(self.n, length, self.error_free):
            for i in initials:
                groups.setdefault(self._key(agent, i, seq), []).append((i, seq))
        self._groups[scope] = groups
        return groups

    def _mutations(self, agent: int, initial: tuple, seq: tuple) -> Iterator[tuple]:
        """Cheap candidates: the state itself, then one unobserved call made faulty."""
        yield initial, seq
        if self.error_free or any(c.faulty for c in seq):
            return
        faulty = [c for c in canonical_calls(self.n) if c.faulty]
        for t in range(len(seq) - 1, -1, -1):
            if seq[t].involves(agent):
                continue
            for f in faulty:
                if (f.caller, f.callee) == (seq[t].caller, seq[t].callee):
                    yield initial, seq[:t] + (f,) + seq[t + 1:]

    def states(self, length: int, initial: tuple | None = None) -> Iterator[tuple]:
        """Every (initial, sequence) pair of one length in this model's universe."""
        initials = [tuple(initial)] if initial is not None else all_initials(self.n)
        for seq in _sequences(self.n, length, self.error_free):
            for i in initials:
                yield i, seq

    def members(self, agent: int, initial: tuple, seq: tuple) -> list[tuple]:
        return self._group(agent, len(seq), initial)[self._key(agent, initial, seq)]

    def holds(self, initial: tuple, seq: tuple, f: Formula) -> bool:
        k = f.kind
        if k == "atom":
            b, a, polarity = f.args
            h = holding_last(last_stores(initial, seq)[a], a)
            return bool(h >> (2 * b + polarity) & 1)
        if k == "sugar":
            op, operands, body = f.args
            if op == "Kv":
                a, b = operands
                return known_value_last(initial, seq, a, b, self.kv_mode) is not None
            return self.holds(initial, seq, body)
        if k == "not":
            return not self.holds(initial, seq, f.args[0])
        if k == "and":
            return self.holds(initial, seq, f.args[0]) and self.holds(initial, seq, f.args[1])
        if k == "k":
            agent, g = f.args
            key = (agent, len(seq), initial if self.error_free else None,
                   self._key(agent, initial, seq), g.uid)
            verdict = self._truth.get(key)
            if verdict is None:
                verdict = self._knows(agent, initial, seq, g)
                self._truth[key] = verdict
            return verdict
        raise UnsupportedFragment(f"no last-call reading for {f.kind}")

    def _knows(self, agent: int, initial: tuple, seq: tuple, g: Formula) -> bool:
        key = self._key(agent, initial, seq)
        for i, t in self._mutations(agent, initial, seq):
            if self._key(agent, i, t) == key and not self.holds(i, t, g):
                return False
        return all(self.holds(i, t, g) for i, t in self.members(agent, initial, seq))

    def eval(self, s: GossipState, f: Formula) -> bool:
        if len(s.initial) != self.n:
            raise ValueError(f"expected {self.n} agents")
        return self.holds(tuple(s.initial), tuple(canonical(c) for c in s.sequence), f)


def eval_last(s: GossipState, f: Formula, kv_mode: KvMode = KvMode.UNANIMITY,
              error_free: bool = False, budget: int = DEFAULT_BUDGET) -> bool:
    return LastCallModel(len(s.initial), kv_mode, error_free, budget).eval(s, f)


# -- full views -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FullView:
    """A node of the view dag; equal views are the same object."""

    kind: str  # "eps", "tick" or "call"
    parts: tuple = ()

    def __str__(self) -> str:
        if self.kind == "eps":
            return "ε"
        if self.kind == "tick":
            (inner,) = self.parts
            text = str(inner)
            return f"({text}).•" if inner.kind == "call" else f"{text}.•"
        left, right, c = self.parts
        return f"({left},{right}).{format_sequence((c,))}"

    @property
    def length(self) -> int:
        if self.kind == "eps":
            return 0
        return 1 + self.parts[0].length


_VIEWS: dict[tuple, FullView] = {}


def _view(kind: str, parts: tuple = ()) -> FullView:
    key = (kind, tuple(id(p) if isinstance(p, FullView) else p for p in parts))
    v = _VIEWS.get(key)
    if v is None:
        v = _VIEWS[key] = FullView(kind, parts)
    return v


EMPTY_VIEW = _view("eps")


def full_view(a: int, seq, n: int | None = None) -> FullView:
    """Agent ``a``'s full view of an error-free sequence."""
    seq = tuple(seq)
    if any(c.faulty for c in seq):
        raise FaultInSequence("full views are defined for error-free sequences only")
    n = n or max([a + 1] + [max(c.caller, c.callee) + 1 for c in seq])
    views = [EMPTY_VIEW] * n
    for c in seq:
        node = _view("call", (views[c.caller], views[c.callee], c))
        views = [node if x in (c.caller, c.callee) else _view("tick", (views[x],)) for x in range(n)]
    return views[a]


# -- error-free models: full information and the standard baseline ----------

class ErrorFreeModel:
    """``K`` over error-free sequences of the same length from one initial distribution.

    With ``full`` an agent in a call observes the partner's whole view;
    otherwise it observes the partner's holding, which is the standard
    relation restricted to error-free gossip.  Either way a class is built
    from the previous round's class: uninvolved rounds branch over every
    call among the other agents, involved rounds keep the members where
    the partner observation agrees.
    """

    def __init__(self, n: int, initial: tuple | None = None, full: bool = True,
                 budget: int = DEFAULT_BUDGET):
        self.n = n
        self.initial = tuple(initial) if initial is not None else (1,) * n
        self.full = full
        self.budget = budget
        self.calls = [Call(x, y) for x in range(n) for y in range(n) if x != y]
        self._others = [[i for i, c in enumerate(self.calls) if not c.involves(a)] for a in range(n)]
        self._index = {c: i for i, c in enumerate(self.calls)}
        self._parent = [-1]
        self._callno = [-1]
        self._holding = [expand(self.initial)]
        self._views = [(0,) * n]
        self._view_ids: dict[tuple, int] = {("eps",): 0}
        self._child: dict[tuple, int] = {}
        self._classes: dict[tuple, list[int]] = {}
        self._truth: dict[tuple, bool] = {}

    def _intern(self, key: tuple) -> int:
        vid = self._view_ids.get(key)
        if vid is None:
            vid = self._view_ids[key] = len(self._view_ids)
        return vid

    def child(self, w: int, ci: int) -> int:
        out = self._child.get((w, ci))
        if out is not None:
            return out
        if len(self._parent) >= self.budget:
            raise ResourceLimit(f"model exceeds the budget of {self.budget} states")
        c = self.calls[ci]
        x, y = c.caller, c.callee
        h = list(self._holding[w])
        h[x] = h[y] = h[x] | h[y]
        v = self._views[w]
        views = []
        for a in range(self.n):
            if a == x or a == y:
                if self.full:
                    key = ("call", v[x], v[y], ci)
                else:
                    key = ("obs", v[a], ci, self._holding[w][c.partner(a)])
            else:
                key = ("tick", v[a])
            views.append(self._intern(key))
        out = len(self._parent)
        self._parent.append(w)
        self._callno.append(ci)
        self._holding.append(tuple(h))
        self._views.append(tuple(views))
        self._child[(w, ci)] = out
        return out

    def world(self, seq) -> int:
        w = 0
        for c in seq:
            if c.faulty:
                raise FaultInSequence("error-free semantics cannot evaluate a faulty call")
            w = self.child(w, self._index[Call(c.caller, c.callee)])
        return w

    def class_members(self, agent: int, w: int) -> list[int]:
        key = (agent, self._views[w][agent])
        members = self._classes.get(key)
        if members is not None:
            return members
        p = self._parent[w]
        if p < 0:
            members = [0]
        else:
            parent = self.class_members(agent, p)
            ci = self._callno[w]
            c = self.calls[ci]
            if c.involves(agent):
                b = c.partner(agent)
                want = self._views[p][b] if self.full else self._holding[p][b]
                table = self._views if self.full else self._holding
                members = [self.child(m, ci) for m in parent if table[m][b] == want]
            else:
                others = self._others[agent]
                if len(parent) * len(others) > self.budget:
                    raise ResourceLimit(f"observation class exceeds the budget of {self.budget} states")
                members = [self.child(m, ci) for m in parent for ci in others]
        self._classes[key] = members
        return members

    def holds(self, w: int, f: Formula) -> bool:
        k = f.kind
        if k == "atom":
            b, a, polarity = f.args
            return bool(self._holding[w][a] >> (2 * b + polarity) & 1)
        if k == "sugar":
            return self.holds(w, f.args[2])
        if k == "not":
            return not self.holds(w, f.args[0])
        if k == "and":
            return self.holds(w, f.args[0]) and self.holds(w, f.args[1])
        agent, g = f.args
        key = (agent, self._views[w][agent], g.uid)
        verdict = self._truth.get(key)
        if verdict is None:
            verdict = all(self.holds(m, g) for m in self.class_members(agent, w))
            self._truth[key] = verdict
        return verdict

    def eval(self, seq, f: Formula) -> bool:
        return self.holds(self.world(seq), f)

    def class_size(self, agent: int, seq) -> int:
        return len(self.class_members(agent, self.world(seq)))


def eval_full(seq, f: Formula, n: int | None = None, initial: tuple | None = None,
              budget: int = DEFAULT_BUDGET) -> bool:
    """Satisfaction under full information, from ``initial`` (all positive by default)."""
    n = n or (len(initial) if initial else None)
    if n is None:
        raise ValueError("the number of agents is needed")
    return ErrorFreeModel(n, initial, True, budget).eval(seq, f)


def eval_error_free(seq, f: Formula, n: int | None = None, initial: tuple | None = None,
                    budget: int = DEFAULT_BUDGET) -> bool:
    """Satisfaction under the standard relation restricted to error-free gossip."""
    n = n or (len(initial) if initial else None)
    if n is None:
        raise ValueError("the number of agents is needed")
    return ErrorFreeModel(n, initial, False, budget).eval(seq, f)
