"""Naive reference semantics and the bounded property verifier.

The reference builds every literal gossip state level by level: all
initial distributions times every valid sequence of a given length, in
literal call order.  Observation classes are found by grouping states on
everything an agent observed, and the refusal and discard sets of a call
are read straight off the pre-call class.  Nothing depends on the
optimized engine in :mod:`gossipsec.semantics`, so the two can be compared.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

from .core import (
    Call,
    GossipError,
    GossipState,
    all_calls,
    all_initials,
    calls_per_round,
    conflicts,
    contribution,
    correct_sequence,
    expand,
    format_initial,
    restrict,
    switch_initial,
    value_bit,
)
from .formulas import (
    Formula,
    Implies,
    K,
    Not,
    all_experts,
    correct_expert,
    correct_super_goal,
    expert,
)
from .semantics import DEFAULT_BUDGET, Model

MAX_AGENTS = 3
MAX_LENGTH = 4


class BoundsExceeded(GossipError):
    """A query outside the oracle's agent or length bounds."""


def sequence_count(n: int, length: int) -> int:
    """Number of valid call sequences of one length: no fault, or exactly one."""
    correct = n * (n - 1)
    faulty = calls_per_round(n) - correct
    if length == 0:
        return 1
    return correct ** length + length * faulty * correct ** (length - 1)


def _initial_mask(initial) -> int:
    return sum(value_bit(d, bit) for d, bit in enumerate(initial))


@dataclass
class _Level:
    states: list = field(default_factory=list)
    dists: list = field(default_factory=list)
    faulty: list = field(default_factory=list)
    keys: list = field(default_factory=list)  # keys[agent][i]
    classes: list = field(default_factory=list)  # classes[agent]: key -> [i]
    index: dict = field(default_factory=dict)


class Oracle:
    """Generate-then-group reference model for ``n`` agents.

    Levels are built on demand up to ``max_len``.  Verdicts of ``K`` are
    shared by all members of a class, which is the only memoization beyond
    keeping the levels themselves.
    """

    def __init__(self, n: int, max_len: int = MAX_LENGTH, max_agents: int = MAX_AGENTS):
        if n < 2:
            raise ValueError("at least two agents are needed")
        if n > max_agents:
            raise BoundsExceeded(f"the oracle handles at most {max_agents} agents, got {n}")
        self.n = n
        self.max_len = max_len
        self.calls = all_calls(n)
        self._levels: list[_Level] = []
        self._k: dict[tuple, bool] = {}
        self._initials: dict[tuple, dict] = {}
        self._tables: dict[tuple, dict] = {}

    # -- levels -------------------------------------------------------------

    def level(self, length: int) -> _Level:
        if length > self.max_len:
            raise BoundsExceeded(f"the oracle handles sequences of at most {self.max_len} calls")
        while len(self._levels) <= length:
            if not self._levels:
                self._levels.append(self._base())
            else:
                self._levels.append(self._next(self._levels[-1]))
        return self._levels[length]

    def _finish(self, lv: _Level) -> _Level:
        lv.index = {s: i for i, s in enumerate(lv.states)}
        lv.classes = []
        for a in range(self.n):
            groups: dict = {}
            for i, key in enumerate(lv.keys[a]):
                groups.setdefault(key, []).append(i)
            lv.classes.append(groups)
        return lv

    def _base(self) -> _Level:
        lv = _Level()
        for initial in all_initials(self.n):
            lv.states.append(GossipState(initial, ()))
            lv.dists.append(expand(initial))
            lv.faulty.append(False)
        lv.keys = [[s.initial[a] for s in lv.states] for a in range(self.n)]
        return self._finish(lv)

    def _next(self, lv: _Level) -> _Level:
        n = self.n
        known = [self.class_initials(lv, a) for a in range(n)]
        out = _Level()
        out.keys = [[] for _ in range(n)]
        for i, s in enumerate(lv.states):
            D = lv.dists[i]
            for c in self.calls:
                if c.faulty and lv.faulty[i]:
                    continue
                new = list(D)
                got = {}
                for r in (c.caller, c.callee):
                    sent = contribution(c, r, D[c.partner(r)])
                    got[r] = sent
                    key = lv.keys[r][i]
                    star = _wrong_values(known[r][key], n)
                    cands = self._candidates(lv, r, key)[(c.caller, c.callee, sent)]
                    starstar = _wrong_values(cands, n)
                    new[r] = (D[r] | (sent & ~star)) & ~starstar
                out.states.append(GossipState(s.initial, s.sequence + (c,)))
                out.dists.append(tuple(new))
                out.faulty.append(lv.faulty[i] or c.faulty)
                for a in range(n):
                    obs = (c.caller, c.callee, got[a]) if a in got else None
                    out.keys[a].append((lv.keys[a][i], obs))
        return self._finish(out)

    def _class_initials(self, lv: _Level, agent: int) -> dict:
        """Per class: union of the members' initial values."""
        out = {}
        for key, members in lv.classes[agent].items():
            m = 0
            for i in members:
                m |= _initial_mask(lv.states[i].initial)
            out[key] = m
        return out

    def class_initials(self, lv: _Level, agent: int) -> dict:
        key = (len(lv.states[0].sequence), agent)
        table = self._initials.get(key)
        if table is None:
            table = self._initials[key] = self._class_initials(lv, agent)
        return table

    def _candidates(self, lv: _Level, agent: int, key) -> dict:
        """Per (caller, callee, received) for one class: union of the initial values
        of the members where some valid call of that shape delivers that holding."""
        memo = (len(lv.states[0].sequence), agent, key)
        table = self._tables.get(memo)
        if table is not None:
            return table
        involving = [c for c in self.calls if c.involves(agent)]
        table = {}
        for i in lv.classes[agent][key]:
            D = lv.dists[i]
            mask = _initial_mask(lv.states[i].initial)
            for c in involving:
                if c.faulty and lv.faulty[i]:
                    continue
                k = (c.caller, c.callee, contribution(c, agent, D[c.partner(agent)]))
                table[k] = table.get(k, 0) | mask
        self._tables[memo] = table
        return table

    # -- queries ------------------------------------------------------------

    def _locate(self, s: GossipState) -> tuple[_Level, int]:
        if len(s.initial) != self.n:
            raise ValueError(f"expected {self.n} agents, got {format_initial(s.initial)}")
        lv = self.level(len(s.sequence))
        return lv, lv.index[GossipState(tuple(s.initial), tuple(s.sequence))]

    def states(self, length: int) -> list[GossipState]:
        return self.level(length).states

    def result_distribution(self, initial, seq=()) -> tuple:
        lv, i = self._locate(GossipState(tuple(initial), tuple(seq)))
        return lv.dists[i]

    def equivalence_class(self, agent: int, s: GossipState) -> list[GossipState]:
        lv, i = self._locate(s)
        return [lv.states[j] for j in lv.classes[agent][lv.keys[agent][i]]]

    def indistinguishable(self, agent: int, s: GossipState, t: GossipState) -> bool:
        if len(s.sequence) != len(t.sequence):
            return False
        lv, i = self._locate(s)
        _, j = self._locate(t)
        return lv.keys[agent][i] == lv.keys[agent][j]

    def star_set(self, s: GossipState, receiver: int) -> int:
        lv, i = self._locate(s)
        return _wrong_values(self.class_initials(lv, receiver)[lv.keys[receiver][i]], self.n)

    def starstar_set(self, s: GossipState, call: Call, receiver: int) -> int:
        if not call.involves(receiver):
            raise ValueError("the receiver must take part in the call")
        lv, i = self._locate(s)
        sent = contribution(call, receiver, lv.dists[i][call.partner(receiver)])
        table = self._candidates(lv, receiver, lv.keys[receiver][i])
        return _wrong_values(table[(call.caller, call.callee, sent)], self.n)

    def naive_eval(self, s: GossipState, f: Formula) -> bool:
        lv, i = self._locate(s)
        return self._holds(lv, i, f)

    def _holds(self, lv: _Level, i: int, f: Formula) -> bool:
        k = f.kind
        if k == "atom":
            b, a, polarity = f.args
            return bool((lv.dists[i][a] >> (2 * b + polarity)) & 1)
        if k == "sugar":
            return self._holds(lv, i, f.args[2])
        if k == "not":
            return not self._holds(lv, i, f.args[0])
        if k == "and":
            return self._holds(lv, i, f.args[0]) and self._holds(lv, i, f.args[1])
        agent, g = f.args
        key = lv.keys[agent][i]
        memo = (len(lv.states[i].sequence), agent, key, g.uid)
        verdict = self._k.get(memo)
        if verdict is None:
            verdict = all(self._holds(lv, j, g) for j in lv.classes[agent][key])
            self._k[memo] = verdict
        return verdict


def _wrong_values(initial_mask: int, n: int) -> int:
    """Values contradicted by every initial distribution in a union of initial values."""
    out = 0
    for d in range(n):
        part = restrict(initial_mask, d)
        if part == 2:
            out |= value_bit(d, 0)
        elif part == 1:
            out |= value_bit(d, 1)
    return out


# -- property verifier ------------------------------------------------------

@dataclass
class Report:
    property: str
    n: int
    max_len: int
    passed: bool
    checked: int
    counterexample: str | None = None
    detail: str = ""

    def __str__(self) -> str:
        head = f"{self.property} n={self.n} max-len={self.max_len}: "
        if self.passed:
            return head + f"pass ({self.checked} checks)"
        return head + f"counterexample {self.counterexample} {self.detail}".rstrip()


class _Fail(Exception):
    def __init__(self, state: GossipState, detail: str = ""):
        self.state = state
        self.detail = detail


def _all_states(o: Oracle, max_len: int) -> Iterator[tuple[_Level, int]]:
    for length in range(max_len + 1):
        lv = o.level(length)
        for i in range(len(lv.states)):
            yield lv, i


def _knowledge(o: Oracle, lv: _Level, i: int, a: int) -> int:
    """Values ``a`` knows to be correct at state ``i``, as a holding bitmask."""
    m = o.class_initials(lv, a)[lv.keys[a][i]]
    known = 0
    for d in range(o.n):
        part = restrict(m, d)
        if part in (1, 2):
            known |= part << (2 * d)
    return known


def _check_same_holding(o, max_len):
    count = 0
    for length in range(max_len + 1):
        lv = o.level(length)
        for a in range(o.n):
            for members in lv.classes[a].values():
                h = lv.dists[members[0]][a]
                for j in members:
                    count += 1
                    if lv.dists[j][a] != h:
                        raise _Fail(lv.states[j], f"agent {a} holds differently from {lv.states[members[0]]}")
    return count


def _check_locality(o, max_len):
    count = 0
    for length in range(max_len + 1):
        lv = o.level(length)
        for a in range(o.n):
            for members in lv.classes[a].values():
                for b in range(o.n):
                    for polarity in (0, 1):
                        bit = value_bit(b, polarity)
                        values = {bool(lv.dists[j][a] & bit) for j in members}
                        count += 1
                        if len(values) > 1:
                            raise _Fail(lv.states[members[0]], f"atom of {b} at {a} not known")
    return count


def _check_stubbornness(o, max_len):
    count = 0
    for lv, i in _all_states(o, max_len):
        s = lv.states[i]
        for a in range(o.n):
            count += 1
            if restrict(lv.dists[i][a], a) != 1 << s.initial[a]:
                raise _Fail(s, f"agent {a} lost its own value")
    return count


def _check_preservation(o, max_len):
    count = 0
    for length in range(max_len):
        lv, nxt = o.level(length), o.level(length + 1)
        for i, s in enumerate(lv.states):
            for a in range(o.n):
                before = _knowledge(o, lv, i, a)
                for c in o.calls:
                    if c.faulty and lv.faulty[i]:
                        continue
                    j = nxt.index[GossipState(s.initial, s.sequence + (c,))]
                    count += 1
                    if before & ~_knowledge(o, nxt, j, a):
                        raise _Fail(nxt.states[j], f"agent {a} forgot a value")
    return count


def _check_correct_belief(o, max_len):
    count = 0
    for lv, i in _all_states(o, max_len):
        s = lv.states[i]
        for a in range(o.n):
            known = _knowledge(o, lv, i, a)
            for d in range(o.n):
                part = restrict(known, d)
                count += 1
                if part and (part != 1 << s.initial[d] or restrict(lv.dists[i][a], d) != part):
                    raise _Fail(s, f"agent {a} knows {d} without holding exactly its correct value")
    return count


def _check_justified(o, max_len):
    """K_a b_b iff K_a(b_b & b_a & !~b_a), and the negative dual."""
    count = 0
    for length in range(max_len + 1):
        lv = o.level(length)
        for a in range(o.n):
            for members in lv.classes[a].values():
                for b in range(o.n):
                    for polarity in (0, 1):
                        left = all(lv.states[j].initial[b] == polarity for j in members)
                        right = left and all(restrict(lv.dists[j][a], b) == 1 << polarity
                                             for j in members)
                        count += len(members)
                        if left != right:
                            raise _Fail(lv.states[members[0]], f"agent {a} on secret {b}")
    return count


def _check_cor_lemma(o, max_len):
    count = 0
    for lv, i in _all_states(o, max_len):
        s = lv.states[i]
        for a in range(o.n):
            for b in range(o.n):
                if a == b:
                    continue
                part = restrict(lv.dists[i][a], b)
                if part & (1 << s.initial[b]):
                    continue
                t = GossipState(switch_initial(s.initial, b), correct_sequence(s.sequence, b))
                count += 1
                if not o.indistinguishable(a, s, t):
                    raise _Fail(s, f"agent {a} tells apart {t}")
    return count


def _check_star_disjoint(o, max_len):
    """The values actually refused and actually discarded in one call never both exist."""
    count = 0
    for length in range(max_len):
        lv = o.level(length)
        known = [o.class_initials(lv, a) for a in range(o.n)]
        for i, s in enumerate(lv.states):
            D = lv.dists[i]
            for c in o.calls:
                if c.faulty and lv.faulty[i]:
                    continue
                for r in (c.caller, c.callee):
                    sent = contribution(c, r, D[c.partner(r)])
                    key = lv.keys[r][i]
                    star = _wrong_values(known[r][key], o.n)
                    refused = sent & star
                    kept = D[r] | (sent & ~star)
                    discarded = kept & _wrong_values(o._candidates(lv, r, key)[(c.caller, c.callee, sent)], o.n)
                    count += 1
                    if refused and discarded:
                        raise _Fail(GossipState(s.initial, s.sequence + (c,)),
                                    f"agent {r} both refuses and discards")
    return count


def _check_single_conflict(o, max_len):
    count = 0
    for lv, i in _all_states(o, max_len):
        secrets = set()
        for h in lv.dists[i]:
            secrets.update(conflicts(h, o.n))
        count += 1
        if len(secrets) > 1:
            raise _Fail(lv.states[i], "conflicts on more than one secret")
    return count


def _check_equivalence(o, max_len):
    """The grouped classes form the partition the optimized engine computes,
    and every one-step observation clause stays inside one class.

    A clause joins extensions of related prefixes by calls of one pair and
    direction when the agent receives the same holding and one of the two
    calls is correct; unobserved calls are joined when one is correct.
    """
    model = Model(o.n)
    count = 0
    for length in range(max_len + 1):
        lv = o.level(length)
        wids = [model.world(s) for s in lv.states]
        for a in range(o.n):
            seen: dict = {}
            for key, members in lv.classes[a].items():
                for j in members:
                    s = lv.states[j]
                    tag = (model.view(a, wids[j]),
                           tuple((c.caller, c.callee) for c in s.sequence if c.involves(a)))
                    count += 1
                    if seen.setdefault(tag, key) != key:
                        raise _Fail(s, f"agent {a}: the engine merges two oracle classes")
                    if tag != (model.view(a, wids[members[0]]),
                               tuple((c.caller, c.callee) for c in lv.states[members[0]].sequence
                                     if c.involves(a))):
                        raise _Fail(s, f"agent {a}: the engine splits an oracle class")
        if length == 0:
            continue
        prev = o.level(length - 1)
        for a in range(o.n):
            for members in prev.classes[a].values():
                anchors: dict = {}
                extensions = []
                for i in members:
                    s = prev.states[i]
                    for c in o.calls:
                        if c.faulty and prev.faulty[i]:
                            continue
                        j = lv.index[GossipState(s.initial, s.sequence + (c,))]
                        k = None
                        if c.involves(a):
                            k = (c.caller, c.callee, contribution(c, a, prev.dists[i][c.partner(a)]))
                        extensions.append((j, k))
                        if not c.faulty:
                            anchors.setdefault(k, j)
                for j, k in extensions:
                    count += 1
                    if k in anchors and lv.keys[a][j] != lv.keys[a][anchors[k]]:
                        raise _Fail(lv.states[j], f"agent {a}: a clause crosses classes")
    return count


def _check_exp_introspection(o, max_len):
    n = o.n
    count = 0
    for a in range(n):
        e = expert(a, n)
        for f in (Implies(e, K(a, e)), Implies(Not(e), K(a, Not(e)))):
            for lv, i in _all_states(o, max_len):
                count += 1
                if not o._holds(lv, i, f):
                    raise _Fail(lv.states[i], f"for agent {a}")
    return count


def _check_stability(o, max_len):
    goal = correct_super_goal(o.n)
    count = 0
    for length in range(max_len):
        lv, nxt = o.level(length), o.level(length + 1)
        for i, s in enumerate(lv.states):
            if not o._holds(lv, i, goal):
                continue
            for c in o.calls:
                if c.faulty and lv.faulty[i]:
                    continue
                j = nxt.index[GossipState(s.initial, s.sequence + (c,))]
                count += 1
                if not o._holds(nxt, j, goal):
                    raise _Fail(nxt.states[j], "the correct super goal was lost")
    return count


def _check_sequence_count(o, max_len):
    count = 0
    for length in range(max_len + 1):
        got = len(o.level(length).states)
        want = 2 ** o.n * sequence_count(o.n, length)
        count += 1
        if got != want:
            raise _Fail(GossipState(all_initials(o.n)[0], ()),
                        f"length {length}: enumerated {got}, expected {want}")
    return count


ORACLE_PROPERTIES: dict[str, Callable] = {
    "same-holding": _check_same_holding,
    "locality": _check_locality,
    "stubbornness": _check_stubbornness,
    "knowledge-preservation": _check_preservation,
    "knowledge-correct-belief": _check_correct_belief,
    "justified-belief-corollary": _check_justified,
    "cor-lemma": _check_cor_lemma,
    "star-disjointness": _check_star_disjoint,
    "single-conflict": _check_single_conflict,
    "equivalence-relation": _check_equivalence,
    "exp-introspection": _check_exp_introspection,
    "stability": _check_stability,
    "sequence-count": _check_sequence_count,
}

# The counterexample search for correct-expert introspection needs four agents,
# beyond the oracle, so it runs on the optimized engine over error-free
# sequences from the all-positive distribution where every agent is an expert.
ENGINE_PROPERTIES = ("exp-introspection-cexp",)

PROPERTIES = tuple(ORACLE_PROPERTIES) + ENGINE_PROPERTIES


def _verify_cexp(n: int, max_len: int, budget: int) -> Report:
    model = Model(n, budget)
    f = Implies(correct_expert(0, n), K(0, correct_expert(0, n)))
    verdict = model.check_validity(f, max_len, initials=[(1,) * n], error_free=True,
                                   scope=all_experts(n))
    if verdict.valid:
        return Report("exp-introspection-cexp", n, max_len, True, verdict.checked)
    return Report("exp-introspection-cexp", n, max_len, False, verdict.checked,
                  str(verdict.counterexample), "falsifies cExp[a] -> K[a](cExp[a])")


_ORACLES: dict[tuple[int, int], Oracle] = {}


def oracle(n: int, max_len: int = MAX_LENGTH) -> Oracle:
    """A cached oracle per agent count and length bound."""
    key = (n, max_len)
    if key not in _ORACLES:
        _ORACLES[key] = Oracle(n, max_len)
    return _ORACLES[key]


def verify(property_id: str, n: int, max_len: int, budget: int = DEFAULT_BUDGET) -> Report:
    """Exhaustively check one property over all states with at most ``max_len`` calls."""
    if property_id in ENGINE_PROPERTIES:
        return _verify_cexp(n, max_len, budget)
    check = ORACLE_PROPERTIES.get(property_id)
    if check is None:
        raise ValueError(f"unknown property {property_id!r}; expected one of {', '.join(PROPERTIES)}")
    o = oracle(n, max(max_len, MAX_LENGTH))
    try:
        checked = check(o, max_len)
    except _Fail as fail:
        return Report(property_id, n, max_len, False, 0, str(fail.state), fail.detail)
    return Report(property_id, n, max_len, True, checked)

