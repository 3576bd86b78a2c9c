"""Result distributions, the observation relation and satisfaction.

The three notions are mutually recursive: a call's effect may depend on
what the receiver knows, knowledge quantifies over observation classes,
and observations compare what agents received in calls.  Every recursive
step either shortens the call sequence or, at equal length, shrinks the
formula, so evaluation terminates.

Two facts keep the computation small.

* Reversing the direction of a call (and moving a transmission error to
  the matching side) is an automorphism of the whole model, so truth never
  depends on directions.  :class:`Model` stores worlds with every call
  written caller-first in agent order; a literal class is the canonical
  class with every unobserved call taken in both directions.
* Knowledge only ever decides the fate of conflicting values, and knowing
  the value of a secret is knowing its initial polarity.  A state with the
  other polarity of ``s`` that the agent cannot tell apart exists outright
  when the agent holds no correct value of ``s``; otherwise its one error
  must be an effective error on ``s``.  Such a witness is found by a
  pruned search instead of building the whole observation class.

Explicit observation classes are still built, incrementally per call, for
``K`` over formulas that mention other agents' holdings.  Before building
one, a capped search looks for a member falsifying the formula, trying
late errors first and then seeded random restarts; finding one settles
the verdict, and giving up falls back to the full class.

The budget bounds both the size of one observation class and the number of
interned worlds; exceeding it raises :class:`ResourceLimit`.
"""

from __future__ import annotations

import random
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Iterable, Iterator

from .core import (
    Call,
    Fault,
    GossipState,
    ResourceLimit,
    all_calls,
    all_initials,
    even_mask,
    expand,
    format_initial,
    restrict,
    swap,
    value_bit,
)
from .formulas import Formula

DEFAULT_BUDGET = 10 ** 7
DEFAULT_PROBE = 20_000

sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))


def canonical(c: Call) -> Call:
    """The same call written with the lower agent first."""
    if c.caller < c.callee:
        return c
    kind = c.fault
    if kind == Fault.CALLER:
        kind = Fault.CALLEE
    elif kind == Fault.CALLEE:
        kind = Fault.CALLER
    return Call(c.callee, c.caller, kind, c.secret)


def reversed_call(c: Call) -> Call:
    """The same exchange with caller and callee exchanged."""
    kind = c.fault
    if kind == Fault.CALLER:
        kind = Fault.CALLEE
    elif kind == Fault.CALLEE:
        kind = Fault.CALLER
    return Call(c.callee, c.caller, kind, c.secret)


@lru_cache(maxsize=None)
def canonical_calls(n: int) -> tuple[Call, ...]:
    return tuple(c for c in all_calls(n) if c.caller < c.callee)


@dataclass
class Verdict:
    valid: bool
    checked: int
    counterexample: GossipState | None = None
    notes: list[str] = field(default_factory=list)


class _GiveUp(Exception):
    """A bounded counter-member search ran out of nodes."""


class _Formula:
    """Per-formula facts used to pick an evaluation strategy under ``K``."""

    __slots__ = ("holders", "modal", "own_only")

    def __init__(self, f: Formula):
        self.holders: set[int] = set()
        self.modal: set[int] = set()
        self.own_only = True  # every atom about another holder is of the form b_b
        self._scan(f)

    def _scan(self, f: Formula) -> None:
        stack = [f]
        while stack:
            g = stack.pop()
            k = g.kind
            if k == "atom":
                b, a, _ = g.args
                self.holders.add(a)
            elif k == "sugar":
                stack.append(g.args[2])
            elif k == "k":
                self.modal.add(g.args[0])
                stack.append(g.args[1])
            else:
                stack.extend(g.args)


class Model:
    """Evaluation context for a fixed number of agents.

    Worlds are interned as integer ids in a prefix tree over canonical
    calls.  Distributions, observation views, knowledge of secrets,
    observation classes and ``K`` verdicts are memoized.
    """

    def __init__(self, n: int, budget: int = DEFAULT_BUDGET, probe: int = DEFAULT_PROBE):
        if n < 2:
            raise ValueError("at least two agents are needed")
        self.n = n
        self.budget = budget
        self.probe = probe
        self._probing = False
        self._probe_left = 0
        self._probe_total = 0
        self.dives = 20
        self.calls = canonical_calls(n)
        self.index = {c: i for i, c in enumerate(self.calls)}
        self._nc = len(self.calls)
        self._even = even_mask(n)
        self._full = (1 << (2 * n)) - 1
        self._call_faulty = [c.faulty for c in self.calls]
        self._pairs = [(x, y) for x in range(n) for y in range(x + 1, n)]
        # per pair: correct call, errors on the lower agent's transmission, on the higher's
        self._pair = {}
        for i, c in enumerate(self.calls):
            entry = self._pair.setdefault((c.caller, c.callee), [None, [None] * n, [None] * n])
            if c.fault == Fault.NONE:
                entry[0] = i
            elif c.fault == Fault.CALLER:
                entry[1][c.secret] = i
            else:
                entry[2][c.secret] = i
        self._others = [[i for i, c in enumerate(self.calls) if not c.involves(a)] for a in range(n)]
        self._other_pairs = [[p for p in self._pairs if a not in p] for a in range(n)]
        # world table
        self._roots: dict[tuple, int] = {}
        self._child: dict[int, int] = {}
        self._initial: list[tuple] = []
        self._parent: list[int] = []
        self._callno: list[int] = []
        self._depth: list[int] = []
        self._faulty: list[bool] = []
        self._dist: list = []
        # views and memo tables
        self._view: list[dict[int, int]] = [dict() for _ in range(n)]
        self._view_ids: dict[tuple, int] = {}
        self._flip: dict[tuple, bool] = {}
        self._classes: dict[tuple, list[int]] = {}
        self._truth: dict[tuple, bool] = {}
        self._facts: dict[int, _Formula] = {}
        self.searched = 0

    # -- world ids ----------------------------------------------------------

    def _new(self, initial, parent, ci, depth, faulty, dist) -> int:
        wid = len(self._initial)
        if wid >= self.budget:
            raise ResourceLimit(f"model exceeds the budget of {self.budget} states")
        self._initial.append(initial)
        self._parent.append(parent)
        self._callno.append(ci)
        self._depth.append(depth)
        self._faulty.append(faulty)
        self._dist.append(dist)
        return wid

    def root(self, initial) -> int:
        initial = tuple(initial)
        wid = self._roots.get(initial)
        if wid is None:
            if len(initial) != self.n:
                raise ValueError(f"expected {self.n} agents, got {format_initial(initial)}")
            wid = self._new(initial, -1, -1, 0, False, expand(initial))
            self._roots[initial] = wid
        return wid

    def child(self, wid: int, ci: int) -> int:
        key = wid * self._nc + ci
        out = self._child.get(key)
        if out is None:
            cf = self._call_faulty[ci]
            if cf and self._faulty[wid]:
                raise ValueError("a call sequence may contain at most one faulty call")
            out = self._new(self._initial[wid], wid, ci, self._depth[wid] + 1,
                            self._faulty[wid] or cf, None)
            self._child[key] = out
        return out

    def world(self, s: GossipState) -> int:
        wid = self.root(s.initial)
        for c in s.sequence:
            wid = self.child(wid, self.index[canonical(c)])
        return wid

    def state(self, wid: int) -> GossipState:
        """The canonical gossip state of a world id."""
        calls = []
        initial = self._initial[wid]
        while self._parent[wid] >= 0:
            calls.append(self.calls[self._callno[wid]])
            wid = self._parent[wid]
        return GossipState(initial, tuple(reversed(calls)))

    def chain(self, wid: int) -> list[int]:
        """World ids of all non-empty prefixes, shortest first."""
        out = []
        while self._parent[wid] >= 0:
            out.append(wid)
            wid = self._parent[wid]
        out.reverse()
        return out

    def size(self) -> int:
        """Number of interned gossip states."""
        return len(self._initial)

    # -- distributions ------------------------------------------------------

    def dist(self, wid: int) -> tuple:
        d = self._dist[wid]
        if d is None:
            pending = []
            w = wid
            while self._dist[w] is None:
                pending.append(w)
                w = self._parent[w]
            for w in reversed(pending):
                self._dist[w] = self._step(w)
            d = self._dist[wid]
        return d

    def _sent(self, c: Call, receiver: int, D: tuple) -> int:
        h = D[c.partner(receiver)]
        return swap(h, c.secret) if c.corrupts_towards(receiver) else h

    def _step(self, wid: int) -> tuple:
        p = self._parent[wid]
        c = self.calls[self._callno[wid]]
        D = self._dist[p]
        new = list(D)
        for r in (c.caller, c.callee):
            new[r] = self._receive(p, wid, r, D[r], self._sent(c, r, D))
        return tuple(new)

    def _receive(self, p: int, wid: int, r: int, old: int, sent: int) -> int:
        u = old | sent
        both = u & (u >> 1) & self._even
        if not both:
            return u
        # A conflict can only be on the one secret touched by the one error.
        # Refusing (*) or discarding (**) only ever removes the wrong value,
        # since the receiver's knowledge is correct.
        s = (both.bit_length() - 1) // 2
        wrong = value_bit(s, 1 - self._initial[p][s])
        if not self.has_value(r, p, s, 1 - self._initial[p][s]):
            return old | (sent & ~wrong)
        if not self._flip_search(r, wid, s):
            return u & ~wrong
        return u

    def result_distribution(self, initial, seq=()) -> tuple:
        return self.dist(self.world(GossipState(tuple(initial), tuple(seq))))

    def _known_wrong(self, r: int, wid: int, s: int, part: int) -> bool:
        """Whether ``r`` knows the value of ``s`` at ``wid``, given r's ``s``-part there."""
        if s == r:
            return True
        if not part & (2 if self._initial[wid][s] else 1):
            return False
        return not self._flip_search(r, wid, s)

    def star_set(self, s: GossipState, receiver: int) -> int:
        """Values ``receiver`` knows to be incorrect at ``s``, as a holding bitmask."""
        wid = self.world(s)
        h = self.dist(wid)[receiver]
        out = 0
        for d in range(self.n):
            if self._known_wrong(receiver, wid, d, restrict(h, d)):
                out |= value_bit(d, 1 - self._initial[wid][d])
        return out

    def starstar_set(self, s: GossipState, call: Call, receiver: int) -> int:
        """Values ``receiver`` would discard in ``call`` made after ``s``."""
        if not call.involves(receiver):
            raise ValueError("the receiver must take part in the call")
        p = self.world(s)
        c = canonical(call)
        wid = self.child(p, self.index[c])
        D = self.dist(p)
        sent = self._sent(c, receiver, D)
        star = self.star_set(s, receiver)
        u = D[receiver] | (sent & ~star)
        out = 0
        for d in range(self.n):
            if self._known_wrong(receiver, wid, d, restrict(u, d)):
                out |= value_bit(d, 1 - self._initial[wid][d])
        return out

    # -- views and the observation relation ---------------------------------

    def received(self, wid: int, agent: int) -> int | None:
        """What ``agent`` received in the last call of ``wid``; None if not involved."""
        c = self.calls[self._callno[wid]]
        if not c.involves(agent):
            return None
        return self._sent(c, agent, self.dist(self._parent[wid]))

    def view(self, agent: int, wid: int) -> int:
        """Interned id of everything ``agent`` observed in ``wid``."""
        table = self._view[agent]
        v = table.get(wid)
        if v is not None:
            return v
        pending = []
        w = wid
        while w not in table and self._parent[w] >= 0:
            pending.append(w)
            w = self._parent[w]
        if w not in table:
            table[w] = self._intern(("init", agent, self._initial[w][agent]))
        v = table[w]
        for w in reversed(pending):
            c = self.calls[self._callno[w]]
            if c.involves(agent):
                obs = (c.partner(agent), self.received(w, agent))
            else:
                obs = None
            v = self._intern((v, obs))
            table[w] = v
        return v

    def _intern(self, key: tuple) -> int:
        v = self._view_ids.get(key)
        if v is None:
            v = len(self._view_ids)
            self._view_ids[key] = v
        return v

    def related(self, agent: int, w1: int, w2: int) -> bool:
        if self._depth[w1] != self._depth[w2]:
            return False
        return self.view(agent, w1) == self.view(agent, w2)

    def indistinguishable(self, agent: int, s: GossipState, t: GossipState) -> bool:
        if len(s.sequence) != len(t.sequence):
            return False
        for c1, c2 in zip(s.sequence, t.sequence):
            if c1.involves(agent) and (c1.caller, c1.callee) != (c2.caller, c2.callee):
                return False
        return self.related(agent, self.world(s), self.world(t))

    # -- knowledge of secrets ----------------------------------------------

    def has_value(self, r: int, wid: int, s: int, v: int) -> bool:
        """Whether some state ``r`` cannot tell from ``wid`` starts with polarity ``v`` for ``s``."""
        if self._initial[wid][s] == v:
            return True
        if s == r:
            return False
        part = restrict(self.dist(wid)[r], s)
        if not part & (2 if self._initial[wid][s] else 1):
            return True
        return self._flip_search(r, wid, s)

    def knows(self, r: int, wid: int, s: int) -> bool:
        return not self.has_value(r, wid, s, 1 - self._initial[wid][s])

    def _flip_search(self, r: int, wid: int, s: int) -> bool:
        """Search for an indistinguishable state with the other initial polarity of ``s``.

        Only meaningful when ``r`` holds the correct value of ``s`` (possibly
        together with the wrong one): the witness then needs its single error
        to be an effective error on ``s``, and secrets other than ``s`` spread
        by plain union, so their parts only grow.
        """
        v = 1 - self._initial[wid][s]
        key = (r, self.view(r, wid), s, v)
        hit = self._flip.get(key)
        if hit is not None:
            return hit
        hit = self._search(r, wid, {s: v}, s) is not None
        self._flip[key] = hit
        return hit

    def _search(self, r: int, wid: int, fixed: dict[int, int], fault: int | None) -> int | None:
        """First world indistinguishable from ``wid`` for ``r`` with the given initial bits.

        ``fault`` restricts the one transmission error to an effective one on
        that secret; None allows any error and no error.
        """
        n = self.n
        chain = self.chain(wid)
        length = len(chain)
        keep = self._full if fault is None else self._full & ~(3 << (2 * fault))
        obs = []
        for w in chain:
            c = self.calls[self._callno[w]]
            if c.involves(r):
                obs.append((c.caller, c.callee, c.partner(r), self.received(w, r)))
            else:
                obs.append(None)
        # upper bounds on what each agent may hold (restricted to ``keep``) before each round
        upper = [[self._full] * n for _ in range(length + 1)]
        if fault is not None:
            for t in range(length - 1, -1, -1):
                row = list(upper[t + 1])
                o = obs[t]
                if o is not None:
                    row[o[2]] &= o[3] | ~keep
                upper[t] = row
        own = self._initial[wid][r]
        free = [b for b in range(n) if b != r and b not in fixed]
        base = self._initial[wid]
        visits = [0]
        for bits in product((1, 0), repeat=len(free)):
            initial = list(base)
            for b, bit in zip(free, bits):
                initial[b] = bit if base[b] else 1 - bit
            for b, bit in fixed.items():
                initial[b] = bit
            initial[r] = own
            w0 = self.root(tuple(initial))
            D = self._dist[w0]
            if any(D[q] & keep & ~upper[0][q] for q in range(n) if q != r):
                continue
            found = self._dfs(r, w0, 0, obs, upper, keep, fault, visits)
            if found is not None:
                return found
        return None

    def _dfs(self, r, node, t, obs, upper, keep, fault, visits):
        if t == len(obs):
            return node
        self.searched += 1
        visits[0] += 1
        if self._probing:
            self._probe_left -= 1
            if self._probe_left < 0:
                raise _GiveUp
        if visits[0] > self.budget:
            raise ResourceLimit(f"knowledge search exceeds the budget of {self.budget} states")
        D = self.dist(node)
        clean = not self._faulty[node]
        o = obs[t]
        bound = upper[t + 1]
        if o is not None:
            x, y, p, want = o
            correct, low, high = self._pair[(x, y)]
            options = [correct]
            if clean:
                options.extend(self._errors(low, high, D, x, y, fault))
            for ci in options:
                c = self.calls[ci]
                if self._sent(c, r, D) != want:
                    continue
                if (D[x] | D[y]) & keep & ~bound[p]:
                    continue
                found = self._dfs(r, self.child(node, ci), t + 1, obs, upper, keep, fault, visits)
                if found is not None:
                    return found
            return None
        for x, y in self._other_pairs[r]:
            u = (D[x] | D[y]) & keep
            if u & ~bound[x] or u & ~bound[y]:
                continue
            correct, low, high = self._pair[(x, y)]
            options = [correct]
            if clean:
                options.extend(self._errors(low, high, D, x, y, fault))
            for ci in options:
                found = self._dfs(r, self.child(node, ci), t + 1, obs, upper, keep, fault, visits)
                if found is not None:
                    return found
        return None

    def _errors(self, low, high, D, x, y, fault):
        if fault is None:
            return [ci for ci in low + high]
        out = []
        if restrict(D[x], fault) in (1, 2):
            out.append(low[fault])
        if restrict(D[y], fault) in (1, 2):
            out.append(high[fault])
        return out

    def initials(self, r: int, wid: int) -> list[tuple]:
        """Initial distributions of the states ``r`` cannot tell from ``wid``."""
        I = self._initial[wid]
        h = self.dist(wid)[r]
        out = []
        for J in all_initials(self.n):
            if J[r] != I[r]:
                continue
            flipped = [s for s in range(self.n) if J[s] != I[s]]
            contradicted = [s for s in flipped if restrict(h, s) & (2 if I[s] else 1)]
            if not contradicted:
                out.append(J)
            elif len(contradicted) == 1:
                s = contradicted[0]
                if self._search(r, wid, {b: J[b] for b in range(self.n) if b != r}, s) is not None:
                    out.append(J)
        return out

    # -- observation classes ------------------------------------------------

    def class_members(self, agent: int, wid: int) -> list[int]:
        """The canonical observation class of ``agent`` at ``wid``."""
        key = (agent, self.view(agent, wid))
        members = self._classes.get(key)
        if members is not None:
            return members
        p = self._parent[wid]
        if p < 0:
            bit = self._initial[wid][agent]
            members = [self.root(i) for i in all_initials(self.n) if i[agent] == bit]
        else:
            parent = self.class_members(agent, p)
            c = self.calls[self._callno[wid]]
            if c.involves(agent):
                members = self._involved_group(parent, agent, c, self.received(wid, agent))
            else:
                members = self._uninvolved_group(parent, agent)
        self._classes[key] = members
        return members

    def _check_budget(self, size: int) -> None:
        if size > self.budget:
            raise ResourceLimit(f"observation class exceeds the budget of {self.budget} states")

    def _uninvolved_group(self, parents: list[int], agent: int) -> list[int]:
        others = self._others[agent]
        clean = [ci for ci in others if not self._call_faulty[ci]]
        n_clean = sum(1 for m in parents if not self._faulty[m])
        self._check_budget(n_clean * len(others) + (len(parents) - n_clean) * len(clean))
        child = self.child
        out = []
        for m in parents:
            for ci in (clean if self._faulty[m] else others):
                out.append(child(m, ci))
        return out

    def _involved_group(self, parents: list[int], agent: int, c: Call, sent: int) -> list[int]:
        child = self.child
        out = []
        for m in parents:
            for ci in sorted(self._observed_options(m, agent, c, sent)):
                out.append(child(m, ci))
        self._check_budget(len(out))
        return out

    def unobserved_rounds(self, agent: int, seq) -> int:
        return sum(1 for c in seq if not c.involves(agent))

    def class_size(self, agent: int, s: GossipState) -> int:
        """Number of literal states in the class, counting both directions of unobserved calls."""
        members = self.class_members(agent, self.world(s))
        return len(members) << self.unobserved_rounds(agent, s.sequence)

    def equivalence_class(self, agent: int, s: GossipState) -> Iterator[GossipState]:
        """The literal class of ``agent`` at ``s``, canonical members in order, directions expanded."""
        for m in self.class_members(agent, self.world(s)):
            t = self.state(m)
            yield from _directions(agent, s.sequence, t)

    # -- satisfaction -------------------------------------------------------

    def equivalence_class_list(self, agent: int, s: GossipState) -> list[GossipState]:
        return list(self.equivalence_class(agent, s))

    def facts(self, f: Formula) -> _Formula:
        info = self._facts.get(f.uid)
        if info is None:
            info = _Formula(f)
            self._facts[f.uid] = info
        return info

    def holds(self, wid: int, f: Formula) -> bool:
        k = f.kind
        if k == "atom":
            b, a, polarity = f.args
            return bool((self.dist(wid)[a] >> (2 * b + polarity)) & 1)
        if k == "sugar":
            return self.holds(wid, f.args[2])
        if k == "not":
            return not self.holds(wid, f.args[0])
        if k == "and":
            return self.holds(wid, f.args[0]) and self.holds(wid, f.args[1])
        agent, g = f.args
        key = (agent, self.view(agent, wid), g.uid)
        verdict = self._truth.get(key)
        if verdict is None:
            verdict = self._knows(agent, wid, g)
            self._truth[key] = verdict
        return verdict

    def _knows(self, agent: int, wid: int, g: Formula) -> bool:
        info = self.facts(g)
        if info.holders <= {agent} and info.modal <= {agent}:
            # every member shares the agent's holding and classes
            return self.holds(wid, g)
        if not info.modal and self._own_atoms_only(g, agent):
            h = self.dist(wid)[agent]
            return all(_eval_initial(g, J, agent, h) for J in self.initials(agent, wid))
        key = (agent, self.view(agent, wid))
        if key not in self._classes:
            try:
                if self._counter_member(agent, wid, g) is not None:
                    return False
            except _GiveUp:
                pass
        holds = self.holds
        return all(holds(m, g) for m in self.class_members(agent, wid))

    def _counter_member(self, agent: int, wid: int, g: Formula) -> int | None:
        """Depth-first search for a class member falsifying ``g``, capped at ``probe`` nodes.

        Members with their one error in round ``t`` come first, for ``t``
        from the last round back over the last ``n(n-1)/2 + 1`` rounds, then
        error-free members; each phase has its own cap.  Late errors leave
        few calls in which a conflict needs a knowledge search.  Raises
        :class:`_GiveUp` if nothing is found and some phase hit its cap; the
        caller then builds the class.
        """
        chain = self.chain(wid)
        obs = []
        for w in chain:
            c = self.calls[self._callno[w]]
            obs.append((c, self.received(w, agent)) if c.involves(agent) else None)
        unobserved = self._others[agent]
        clean = [ci for ci in unobserved if not self._call_faulty[ci]]
        faulty = [ci for ci in unobserved if self._call_faulty[ci]]
        bit = self._initial[wid][agent]
        roots = [self.root(i) for i in all_initials(self.n) if i[agent] == bit]
        roots.sort(key=lambda w: w != self._roots[self._initial[wid]])
        length = len(obs)
        phases = list(range(length - 1, max(-1, length - len(self._pairs) - 2), -1)) + [-1]
        gave_up = False
        self._probe_total = self.probe * 10
        for at in phases:
            visits = [0]
            try:
                for w0 in roots:
                    found = self._probe(agent, w0, 0, obs, at, clean, faulty, g, visits)
                    if found is not None:
                        return found
            except _GiveUp:
                gave_up = True
        if gave_up:
            found = self._dive(agent, roots, obs, clean, faulty, g, wid)
            if found is not None:
                return found
            raise _GiveUp
        return None

    def _dive(self, agent, roots, obs, clean, faulty, g, wid):
        """Seeded restarts of the capped search with shuffled options and a random error round."""
        rng = random.Random(wid * 4 + agent)
        length = len(obs)
        for _ in range(self.dives):
            at = rng.randrange(max(0, length - len(self._pairs) - 1), length)
            self._probe_total = self.probe
            try:
                found = self._probe(agent, rng.choice(roots), 0, obs, at, clean, faulty, g,
                                    [self.probe - self.probe // 10], rng)
            except _GiveUp:
                continue
            if found is not None:
                return found
        return None

    def _probe(self, agent, node, t, obs, at, clean, faulty, g, visits, rng=None):
        if t == len(obs):
            return None if self.holds(node, g) else node
        visits[0] += 1
        self._probe_total -= 1
        if visits[0] > self.probe or self._probe_total < 0:
            raise _GiveUp
        o = obs[t]
        if o is not None:
            options = [ci for ci in self._observed_options(node, agent, *o)
                       if self._call_faulty[ci] == (t == at)]
        else:
            options = faulty if t == at else clean
        if rng is not None:
            options = rng.sample(options, len(options))
        for ci in options:
            w = self.child(node, ci)
            if self._dist[w] is None and not self._probing:
                # knowledge searches for a probed world share one small allowance
                allowance = min(self.probe // 20, self._probe_total)
                self._probing, self._probe_left = True, allowance
                try:
                    self.dist(w)
                except _GiveUp:
                    continue
                finally:
                    self._probing = False
                    self._probe_total -= allowance - max(self._probe_left, 0)
            found = self._probe(agent, w, t + 1, obs, at, clean, faulty, g, visits, rng)
            if found is not None:
                return found
        return None

    def _observed_options(self, node: int, agent: int, c: Call, sent: int) -> list[int]:
        """Calls of ``c``'s pair after ``node`` through which ``agent`` receives ``sent``."""
        correct, low, high = self._pair[(c.caller, c.callee)]
        own, theirs = (low, high) if agent == c.caller else (high, low)
        hq = self.dist(node)[c.partner(agent)]
        clean = not self._faulty[node]
        picks = []
        if hq == sent:
            picks.append(correct)
            if clean:
                picks.extend(own)
                picks.extend(ci for e, ci in enumerate(theirs) if restrict(hq, e) in (0, 3))
        elif clean:
            picks.extend(ci for e, ci in enumerate(theirs) if swap(hq, e) == sent)
        return picks

    def _own_atoms_only(self, g: Formula, agent: int) -> bool:
        stack = [g]
        while stack:
            f = stack.pop()
            if f.kind == "atom":
                b, a, _ = f.args
                if a != agent and a != b:
                    return False
            elif f.kind == "sugar":
                stack.append(f.args[2])
            else:
                stack.extend(f.args)
        return True

    def eval(self, s: GossipState, f: Formula) -> bool:
        return self.holds(self.world(s), f)

    # -- bounded validity ---------------------------------------------------

    def states(self, length: int, initials: Iterable | None = None,
               error_free: bool = False) -> Iterator[tuple[GossipState, int]]:
        """All literal states of one length with their world ids.

        Initials are visited all-positive first, sequences lexicographically
        in literal call order.
        """
        literal = [c for c in all_calls(self.n) if not (error_free and c.faulty)]
        for initial in (all_initials(self.n) if initials is None else initials):
            yield from self._extend(GossipState(tuple(initial), ()), self.root(initial),
                                    length, literal)

    def _extend(self, s: GossipState, wid: int, left: int, literal) -> Iterator:
        if left == 0:
            yield s, wid
            return
        faulty = self._faulty[wid]
        for c in literal:
            if faulty and c.faulty:
                continue
            yield from self._extend(GossipState(s.initial, s.sequence + (c,)),
                                    self.child(wid, self.index[canonical(c)]), left - 1, literal)

    def check_validity(self, f: Formula, max_len: int, *, min_len: int = 0,
                       initials: Iterable | None = None, error_free: bool = False,
                       scope: Formula | None = None,
                       candidates: Iterable[GossipState] | None = None) -> Verdict:
        """Search for the first state falsifying ``f``.

        States are visited by increasing length, then by initial distribution
        (all-positive first), then lexicographically in literal call order.
        With a ``scope`` only states satisfying it are considered; with
        ``candidates`` only the given states are, in the given order.
        """
        initials = None if initials is None else [tuple(i) for i in initials]
        checked = 0
        seen: dict[int, bool] = {}
        if candidates is not None:
            pool = ((s, self.world(s)) for s in candidates)
        else:
            pool = (sw for length in range(min_len, max_len + 1)
                    for sw in self.states(length, initials, error_free))
        for s, wid in pool:
            verdict = seen.get(wid)
            if verdict is None:
                verdict = (scope is not None and not self.holds(wid, scope)) or self.holds(wid, f)
                seen[wid] = verdict
            checked += 1
            if checked > self.budget:
                raise ResourceLimit(f"validity check exceeds the budget of {self.budget} states")
            if not verdict:
                return Verdict(False, checked, s)
        return Verdict(True, checked)


def _eval_initial(g: Formula, J: tuple, agent: int, h: int) -> bool:
    """Evaluate a formula over own-secret atoms and ``agent``'s atoms."""
    k = g.kind
    if k == "atom":
        b, a, polarity = g.args
        if a == agent:
            return bool((h >> (2 * b + polarity)) & 1)
        return J[b] == polarity
    if k == "sugar":
        return _eval_initial(g.args[2], J, agent, h)
    if k == "not":
        return not _eval_initial(g.args[0], J, agent, h)
    return _eval_initial(g.args[0], J, agent, h) and _eval_initial(g.args[1], J, agent, h)


def _directions(agent: int, seq, t: GossipState) -> Iterator[GossipState]:
    """Literal states for canonical ``t``: observed calls as in ``seq``, others both ways."""
    options = []
    for c, m in zip(seq, t.sequence):
        if c.involves(agent):
            options.append((m if (c.caller, c.callee) == (m.caller, m.callee) else reversed_call(m),))
        else:
            options.append((m, reversed_call(m)))
    for calls in product(*options):
        yield GossipState(t.initial, calls)


@lru_cache(maxsize=8)
def shared_model(n: int) -> Model:
    """A process-wide model per agent count, for the convenience functions below."""
    return Model(n)


def _shared(n: int, method: str, *args):
    """Call a method of the shared model, dropping the model if it ran out of budget."""
    try:
        return getattr(shared_model(n), method)(*args)
    except ResourceLimit:
        shared_model.cache_clear()
        raise


def result_distribution(initial, seq=()) -> tuple:
    return _shared(len(initial), "result_distribution", initial, seq)


def star_set(s: GossipState, receiver: int) -> int:
    return _shared(len(s.initial), "star_set", s, receiver)


def starstar_set(s: GossipState, call: Call, receiver: int) -> int:
    return _shared(len(s.initial), "starstar_set", s, call, receiver)


def indistinguishable(agent: int, s: GossipState, t: GossipState) -> bool:
    if len(s.initial) != len(t.initial):
        return False
    return _shared(len(s.initial), "indistinguishable", agent, s, t)


def equivalence_class(agent: int, s: GossipState) -> list[GossipState]:
    return _shared(len(s.initial), "equivalence_class_list", agent, s)


def evaluate(s: GossipState, f: Formula) -> bool:
    return _shared(len(s.initial), "eval", s, f)


def check_validity(f: Formula, n: int, max_len: int, **kwargs) -> Verdict:
    try:
        return shared_model(n).check_validity(f, max_len, **kwargs)
    except ResourceLimit:
        shared_model.cache_clear()
        raise
