"""Agents, signed secret values, holdings, calls and their ASCII notation.

Encoding used throughout the package:

* An agent is an int in ``0..n-1``, printed as a letter (``a``, ``b``, ...).
* A signed value of agent ``d`` lives at bit ``2*d + polarity`` of an int,
  so a holding is a plain int bitmask (positive bit above negative bit).
* An initial distribution is a tuple of polarity bits, one per agent.
* A distribution is a tuple of holdings, one per agent.
* A call is a :class:`Call` named tuple; a sequence is a tuple of calls.
"""

from __future__ import annotations

import re
from enum import IntEnum
from functools import lru_cache
from typing import Iterable, NamedTuple

LETTERS = "abcdefghijklmnopqrstuvwxyz"

Initial = tuple  # tuple[int, ...] of polarity bits
Distribution = tuple  # tuple[int, ...] of holding bitmasks
Sequence = tuple  # tuple[Call, ...]


class GossipError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(GossipError, ValueError):
    def __init__(self, message: str, text: str = "", position: int = 0):
        self.text = text
        self.position = position
        where = f" at position {position}" if text else ""
        super().__init__(f"{message}{where}")


class TooManyFaultsError(ParseError):
    """A call sequence with more than one faulty call."""


class ResourceLimit(GossipError):
    """A state budget was exhausted; no partial answer is returned."""


class Fault(IntEnum):
    NONE = 0
    CALLER = 1  # the caller's transmission to the callee is corrupted
    CALLEE = 2  # the callee's transmission to the caller is corrupted


class Call(NamedTuple):
    caller: int
    callee: int
    fault: Fault = Fault.NONE
    secret: int = -1

    @property
    def faulty(self) -> bool:
        return self.fault != Fault.NONE

    def involves(self, agent: int) -> bool:
        return agent == self.caller or agent == self.callee

    def partner(self, agent: int) -> int:
        return self.callee if agent == self.caller else self.caller

    def corrupts_towards(self, receiver: int) -> bool:
        """True if what ``receiver`` gets in this call has the fault secret flipped."""
        if self.fault == Fault.CALLEE:
            return receiver == self.caller
        if self.fault == Fault.CALLER:
            return receiver == self.callee
        return False

    def corrected(self) -> "Call":
        return Call(self.caller, self.callee)

    def __str__(self) -> str:
        return format_call(self)


class GossipState(NamedTuple):
    initial: Initial
    sequence: Sequence

    def __str__(self) -> str:
        return f"({format_initial(self.initial)}, {format_sequence(self.sequence) or 'eps'})"


# -- agents and values ------------------------------------------------------

def agent_name(agent: int) -> str:
    return LETTERS[agent]


def agent_index(letter: str) -> int:
    i = LETTERS.find(letter)
    if len(letter) != 1 or i < 0:
        raise ParseError(f"not an agent letter: {letter!r}")
    return i


def value_bit(agent: int, polarity: int) -> int:
    return 1 << (2 * agent + polarity)


def pos(agent: int) -> int:
    return value_bit(agent, 1)


def neg(agent: int) -> int:
    return value_bit(agent, 0)


def holding(values: Iterable[tuple[int, int]]) -> int:
    h = 0
    for agent, polarity in values:
        h |= value_bit(agent, polarity)
    return h


def values_of(h: int) -> list[tuple[int, int]]:
    out = []
    i = 0
    while h >> i:
        if (h >> i) & 1:
            out.append((i // 2, i & 1))
        i += 1
    return out


def swap(h: int, b: int) -> int:
    """Exchange both polarities of ``b`` in holding ``h``."""
    pair = (h >> (2 * b)) & 3
    if pair == 0 or pair == 3:
        return h
    return h ^ (3 << (2 * b))


def restrict(h: int, b: int) -> int:
    """The ``b``-part of holding ``h`` as a two-bit number (neg bit 0, pos bit 1)."""
    return (h >> (2 * b)) & 3


@lru_cache(maxsize=None)
def even_mask(n: int) -> int:
    return sum(1 << (2 * d) for d in range(n))


def conflicts(h: int, n: int) -> list[int]:
    """Agents whose secret appears with both polarities in ``h``."""
    both = h & (h >> 1) & even_mask(n)
    return [i // 2 for i in range(0, 2 * n, 2) if (both >> i) & 1]


# -- initial distributions --------------------------------------------------

def all_positive(n: int) -> Initial:
    return (1,) * n


def expand(initial: Initial) -> Distribution:
    return tuple(value_bit(a, bit) for a, bit in enumerate(initial))


def switch_initial(initial: Initial, b: int) -> Initial:
    return initial[:b] + (1 - initial[b],) + initial[b + 1:]


def all_initials(n: int) -> list[Initial]:
    """All 2^n initial distributions, all-positive first, then counting down."""
    out = []
    for code in range(2 ** n - 1, -1, -1):
        out.append(tuple((code >> (n - 1 - a)) & 1 for a in range(n)))
    return out


# -- calls and sequences ----------------------------------------------------

@lru_cache(maxsize=None)
def all_calls(n: int) -> tuple[Call, ...]:
    """Every call among ``n`` agents, in enumeration order."""
    out = []
    for x in range(n):
        for y in range(n):
            if x == y:
                continue
            out.append(Call(x, y))
            for kind in (Fault.CALLER, Fault.CALLEE):
                for e in range(n):
                    out.append(Call(x, y, kind, e))
    return tuple(out)


def calls_per_round(n: int) -> int:
    pairs = n * (n - 1)
    return pairs + 2 * pairs * n


def has_fault(seq: Sequence) -> bool:
    return any(c.fault for c in seq)


def correct_sequence(seq: Sequence, b: int) -> Sequence:
    """Replace any fault on secret ``b`` by the correct call in the same direction."""
    return tuple(c.corrected() if c.fault and c.secret == b else c for c in seq)


def contribution(call: Call, receiver: int, partner_holding: int) -> int:
    """What ``receiver`` is sent by its partner in ``call``."""
    if call.corrupts_towards(receiver):
        return swap(partner_holding, call.secret)
    return partner_holding


# -- notation ---------------------------------------------------------------

def format_holding(h: int, n: int | None = None) -> str:
    if n is None:
        n = (h.bit_length() + 1) // 2
    parts = []
    for d in range(n):
        r = restrict(h, d)
        if r == 3:
            parts.append("#" + LETTERS[d])
        elif r == 2:
            parts.append(LETTERS[d])
        elif r == 1:
            parts.append("~" + LETTERS[d])
    return "".join(parts)


def format_distribution(dist: Distribution) -> str:
    n = len(dist)
    return "|".join(format_holding(h, n) for h in dist)


def format_initial(initial: Initial) -> str:
    return "|".join(("" if bit else "~") + LETTERS[a] for a, bit in enumerate(initial))


def format_call(c: Call) -> str:
    x, y = LETTERS[c.caller], LETTERS[c.callee]
    if c.fault == Fault.CALLER:
        return f"{x}[{LETTERS[c.secret]}]{y}"
    if c.fault == Fault.CALLEE:
        return f"{x}{y}[{LETTERS[c.secret]}]"
    return x + y


def format_sequence(seq: Sequence) -> str:
    return ";".join(format_call(c) for c in seq)


_HOLDING_TOKEN = re.compile(r"#[a-z]|~?[a-z]")
_CALL = re.compile(r"([a-z])(?:\[([a-z])\])?([a-z])(?:\[([a-z])\])?")


def _check_agent(i: int, n: int | None, text: str, at: int) -> None:
    if n is not None and i >= n:
        raise ParseError(f"agent {LETTERS[i]!r} out of range for {n} agents", text, at)


def parse_holding(text: str, n: int | None = None) -> int:
    h, i = 0, 0
    while i < len(text):
        m = _HOLDING_TOKEN.match(text, i)
        if not m:
            raise ParseError(f"unexpected {text[i]!r} in holding", text, i)
        tok = m.group()
        a = agent_index(tok[-1])
        _check_agent(a, n, text, i)
        if tok[0] == "#":
            h |= pos(a) | neg(a)
        elif tok[0] == "~":
            h |= neg(a)
        else:
            h |= pos(a)
        i = m.end()
    return h


def parse_distribution(text: str) -> Distribution:
    """Parse a full distribution such as ``a#bc|abc|ac``."""
    parts = text.strip().split("|")
    if len(parts) < 2:
        raise ParseError("a distribution needs at least two agents", text, 0)
    n = len(parts)
    return tuple(parse_holding(p.strip(), n) for p in parts)


def parse_initial(text: str) -> Initial:
    """Parse an initial distribution such as ``a|~b|c``."""
    text = text.strip()
    bits = []
    offset = 0
    for k, part in enumerate(text.split("|")):
        p = part.strip()
        at = offset + (len(part) - len(part.lstrip()))
        if p not in (LETTERS[k], "~" + LETTERS[k]):
            raise ParseError(f"expected {LETTERS[k]!r} or '~{LETTERS[k]}'", text, at)
        bits.append(0 if p.startswith("~") else 1)
        offset += len(part) + 1
    if len(bits) < 2:
        raise ParseError("an initial distribution needs at least two agents", text, 0)
    return tuple(bits)


def parse_call(text: str, n: int | None = None, _offset: int = 0, _full: str | None = None) -> Call:
    full = text if _full is None else _full
    m = _CALL.fullmatch(text)
    if not m or (m.group(2) and m.group(4)):
        raise ParseError(f"malformed call {text!r}", full, _offset)
    x, e1, y, e2 = m.groups()
    caller, callee = agent_index(x), agent_index(y)
    if caller == callee:
        raise ParseError(f"agent {x!r} cannot call itself", full, _offset)
    for letter in (x, y, e1, e2):
        if letter:
            _check_agent(agent_index(letter), n, full, _offset)
    if e1:
        return Call(caller, callee, Fault.CALLER, agent_index(e1))
    if e2:
        return Call(caller, callee, Fault.CALLEE, agent_index(e2))
    return Call(caller, callee)


def parse_sequence(text: str, n: int | None = None) -> Sequence:
    """Parse ``ab;ab[b];ab``; the empty string is the empty sequence."""
    stripped = text.strip()
    if stripped in ("", "eps"):
        return ()
    calls = []
    offset = 0
    fault_at = None
    for part in text.split(";"):
        lead = len(part) - len(part.lstrip())
        at = offset + lead
        c = parse_call(part.strip(), n, at, text)
        if c.fault:
            if fault_at is not None:
                raise TooManyFaultsError(
                    f"two faulty calls (the first at position {fault_at})", text, at)
            fault_at = at
        calls.append(c)
        offset += len(part) + 1
    return tuple(calls)


def state(initial: str | Initial, seq: str | Sequence = ()) -> GossipState:
    """Convenience constructor accepting notation strings."""
    if isinstance(initial, str):
        initial = parse_initial(initial)
    if isinstance(seq, str):
        seq = parse_sequence(seq, len(initial))
    return GossipState(tuple(initial), tuple(seq))
