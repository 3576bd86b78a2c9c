"""Epistemic formulas: interned AST, parser, printer and the defined notions.

The primitive basis is signed atoms, negation, conjunction and knowledge.
Everything else (disjunction, implication, possibility, Kv, experts, ...)
is a :class:`Formula` of kind ``"sugar"`` that records how it was written
and carries its primitive expansion as ``body``.  Evaluators only look at
the body; the printer can show either form.

Formulas are hash-consed, so structurally equal formulas are the same
object and identity hashing is safe.
"""

from __future__ import annotations

from .core import LETTERS, ParseError, agent_index

_TABLE: dict = {}


class Formula:
    __slots__ = ("kind", "args", "size", "uid", "__weakref__")

    def __repr__(self) -> str:
        return f"Formula({print_formula(self)!r})"

    def __str__(self) -> str:
        return print_formula(self)

    def __reduce__(self):
        return (_rebuild, (self.kind, self.args))

    @property
    def body(self) -> "Formula":
        return self.args[2] if self.kind == "sugar" else self


def _rebuild(kind, args):
    return _make(kind, args)


def _make(kind: str, args: tuple) -> Formula:
    key = (kind, args)
    f = _TABLE.get(key)
    if f is not None:
        return f
    f = Formula()
    f.kind = kind
    f.args = args
    if kind == "atom":
        f.size = 1
    elif kind == "not":
        f.size = 1 + args[0].size
    elif kind == "and":
        f.size = 1 + args[0].size + args[1].size
    elif kind == "k":
        f.size = 1 + args[1].size
    else:
        f.size = args[2].size
    f.uid = len(_TABLE)
    _TABLE[key] = f
    return f


# -- primitives -------------------------------------------------------------

def atom(secret: int, holder: int, polarity: int = 1) -> Formula:
    """``secret_holder`` (polarity 1) or its negative value (polarity 0)."""
    return _make("atom", (secret, holder, polarity))


def Not(f: Formula) -> Formula:
    return _make("not", (f,))


def And(f: Formula, g: Formula) -> Formula:
    return _make("and", (f, g))


def K(agent: int, f: Formula) -> Formula:
    return _make("k", (agent, f))


def sugar(op: str, operands: tuple, body: Formula) -> Formula:
    return _make("sugar", (op, operands, body.body))


def strip(f: Formula) -> Formula:
    """Drop all sugar, leaving the primitive expansion."""
    k = f.kind
    if k == "sugar":
        return strip(f.args[2])
    if k == "not":
        return Not(strip(f.args[0]))
    if k == "and":
        return And(strip(f.args[0]), strip(f.args[1]))
    if k == "k":
        return K(f.args[0], strip(f.args[1]))
    return f


# -- derived connectives ----------------------------------------------------

def Or(f: Formula, g: Formula) -> Formula:
    return sugar("or", (f, g), Not(And(Not(f), Not(g))))


def Implies(f: Formula, g: Formula) -> Formula:
    return sugar("imp", (f, g), Not(And(f, Not(g))))


def M(agent: int, f: Formula) -> Formula:
    return sugar("M", (agent, f), Not(K(agent, Not(f))))


def conj(fs) -> Formula:
    fs = list(fs)
    if not fs:
        raise ValueError("empty conjunction")
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


# -- defined notions --------------------------------------------------------

def kv(a: int, b: int) -> Formula:
    """``a`` knows the value of ``b``'s secret."""
    return sugar("Kv", (a, b), Or(K(a, atom(b, b, 1)), K(a, atom(b, b, 0))))


def believes(a: int, b: int, polarity: int = 1) -> Formula:
    """``a`` holds exactly the given value of ``b``'s secret."""
    return sugar("B", (a, b, polarity), And(atom(b, a, polarity), Not(atom(b, a, 1 - polarity))))


def _single_value(a: int, b: int) -> Formula:
    p, q = atom(b, a, 1), atom(b, a, 0)
    return Or(And(p, Not(q)), And(Not(p), q))


def _single_correct_value(a: int, b: int) -> Formula:
    p, q = atom(b, a, 1), atom(b, a, 0)
    return Or(And(And(atom(b, b, 1), p), Not(q)), And(And(atom(b, b, 0), Not(p)), q))


def expert(a: int, n: int) -> Formula:
    return sugar("Exp", (a,), conj(_single_value(a, b) for b in range(n)))


def correct_expert(a: int, n: int) -> Formula:
    return sugar("cExp", (a,), conj(_single_correct_value(a, b) for b in range(n)))


def all_experts(n: int) -> Formula:
    return sugar("ExpAll", (n,), conj(expert(a, n) for a in range(n)))


def all_correct_experts(n: int) -> Formula:
    return sugar("cExpAll", (n,), conj(correct_expert(a, n) for a in range(n)))


def everyone_knows(group, f: Formula) -> Formula:
    group = tuple(group)
    return sugar("E", (group, f), conj(K(a, f) for a in group))


def super_goal(n: int) -> Formula:
    return sugar("SuperAll", (n,), everyone_knows(range(n), all_experts(n)))


def correct_super_goal(n: int) -> Formula:
    return sugar("cSuperAll", (n,), everyone_knows(range(n), all_correct_experts(n)))


def agents_of(f: Formula) -> set[int]:
    """Every agent index mentioned in ``f`` (after expansion)."""
    out: set[int] = set()
    stack = [f.body]
    seen = set()
    while stack:
        g = stack.pop()
        if g.uid in seen:
            continue
        seen.add(g.uid)
        if g.kind == "atom":
            out.update(g.args[:2])
        elif g.kind == "k":
            out.add(g.args[0])
            stack.append(g.args[1].body)
        else:
            stack.extend(x.body for x in g.args)
    return out


def modal_depth(f: Formula) -> int:
    f = f.body
    if f.kind == "atom":
        return 0
    if f.kind == "k":
        return 1 + modal_depth(f.args[1])
    return max(modal_depth(g) for g in f.args)


# -- printer ----------------------------------------------------------------

_IMP, _OR, _AND, _UNARY = 1, 2, 3, 4


def print_formula(f: Formula, expand: bool = False) -> str:
    """Concrete syntax; with ``expand`` all sugar is written out in primitives."""
    return _show(f, expand)[0]


def _paren(text_prec, need):
    text, prec = text_prec
    return f"({text})" if prec < need else text


def _show(f: Formula, expand: bool) -> tuple[str, int]:
    k = f.kind
    if k == "atom":
        b, a, p = f.args
        return ("" if p else "~") + f"{LETTERS[b]}@{LETTERS[a]}", _UNARY
    if k == "not":
        return "!" + _paren(_show(f.args[0], expand), _UNARY), _UNARY
    if k == "and":
        left = _paren(_show(f.args[0], expand), _AND)
        right = _paren(_show(f.args[1], expand), _UNARY)
        return f"{left} & {right}", _AND
    if k == "k":
        return f"K[{LETTERS[f.args[0]]}]" + _paren(_show(f.args[1], expand), _UNARY), _UNARY
    op, xs, body = f.args
    if expand:
        return _show(body, expand)
    if op == "or":
        left = _paren(_show(xs[0], expand), _OR)
        right = _paren(_show(xs[1], expand), _AND)
        return f"{left} | {right}", _OR
    if op == "imp":
        left = _paren(_show(xs[0], expand), _OR)
        right = _paren(_show(xs[1], expand), _IMP)
        return f"{left} -> {right}", _IMP
    if op == "M":
        return f"M[{LETTERS[xs[0]]}]" + _paren(_show(xs[1], expand), _UNARY), _UNARY
    if op == "Kv":
        return f"Kv[{LETTERS[xs[0]]}]({LETTERS[xs[1]]})", _UNARY
    if op == "B":
        a, b, p = xs
        return f"B[{LETTERS[a]}]({'' if p else '~'}{LETTERS[b]})", _UNARY
    if op in ("Exp", "cExp"):
        return f"{op}[{LETTERS[xs[0]]}]", _UNARY
    if op in ("ExpAll", "cExpAll", "SuperAll", "cSuperAll"):
        return op, _UNARY
    if op == "E":
        group = "".join(LETTERS[a] for a in xs[0])
        return f"E[{group}]({_show(xs[1], expand)[0]})", _UNARY
    raise ValueError(f"unknown sugar {op!r}")


# -- parser -----------------------------------------------------------------

_WORDS = ("cSuperAll", "SuperAll", "cExpAll", "ExpAll", "cExp", "Exp", "Kv", "K", "M", "B", "E")


class _Parser:
    def __init__(self, text: str, n: int | None):
        self.text = text
        self.n = n
        self.i = 0

    def fail(self, message: str):
        raise ParseError(message, self.text, self.i)

    def skip(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def peek(self, s: str) -> bool:
        self.skip()
        return self.text.startswith(s, self.i)

    def eat(self, s: str):
        if not self.peek(s):
            self.fail(f"expected {s!r}")
        self.i += len(s)

    def letter(self) -> int:
        self.skip()
        if self.i >= len(self.text) or self.text[self.i] not in LETTERS:
            self.fail("expected an agent letter")
        a = agent_index(self.text[self.i])
        if self.n is not None and a >= self.n:
            self.fail(f"agent {self.text[self.i]!r} out of range for {self.n} agents")
        self.i += 1
        return a

    def need_n(self, word: str) -> int:
        if self.n is None:
            self.fail(f"{word} needs the number of agents")
        return self.n

    def parse(self) -> Formula:
        f = self.imp()
        self.skip()
        if self.i != len(self.text):
            self.fail("unexpected trailing input")
        return f

    def imp(self) -> Formula:
        left = self.disj()
        if self.peek("->"):
            self.i += 2
            return Implies(left, self.imp())
        return left

    def disj(self) -> Formula:
        f = self.conj()
        while self.peek("|"):
            self.i += 1
            f = Or(f, self.conj())
        return f

    def conj(self) -> Formula:
        f = self.unary()
        while self.peek("&"):
            self.i += 1
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        self.skip()
        if self.peek("!"):
            self.i += 1
            return Not(self.unary())
        if self.peek("("):
            self.i += 1
            f = self.imp()
            self.eat(")")
            return f
        if self.peek("~"):
            self.i += 1
            b = self.letter()
            self.eat("@")
            return atom(b, self.letter(), 0)
        for word in _WORDS:
            if self.text.startswith(word, self.i) and not self._atom_ahead():
                self.i += len(word)
                return self.macro(word)
        b = self.letter()
        self.eat("@")
        return atom(b, self.letter(), 1)

    def _atom_ahead(self) -> bool:
        j = self.i + 1
        while j < len(self.text) and self.text[j].isspace():
            j += 1
        return j < len(self.text) and self.text[j] == "@"

    def bracket_agent(self) -> int:
        self.eat("[")
        a = self.letter()
        self.eat("]")
        return a

    def macro(self, word: str) -> Formula:
        if word == "K":
            return K(self.bracket_agent(), self.unary())
        if word == "M":
            return M(self.bracket_agent(), self.unary())
        if word == "Kv":
            a = self.bracket_agent()
            self.eat("(")
            b = self.letter()
            self.eat(")")
            return kv(a, b)
        if word == "B":
            a = self.bracket_agent()
            self.eat("(")
            polarity = 1
            if self.peek("~"):
                self.i += 1
                polarity = 0
            b = self.letter()
            self.eat(")")
            return believes(a, b, polarity)
        if word == "Exp":
            return expert(self.bracket_agent(), self.need_n(word))
        if word == "cExp":
            return correct_expert(self.bracket_agent(), self.need_n(word))
        if word == "E":
            self.eat("[")
            group = []
            while not self.peek("]"):
                group.append(self.letter())
            self.eat("]")
            if not group:
                self.fail("empty agent group")
            self.eat("(")
            f = self.imp()
            self.eat(")")
            return everyone_knows(group, f)
        n = self.need_n(word)
        return {"ExpAll": all_experts, "cExpAll": all_correct_experts,
                "SuperAll": super_goal, "cSuperAll": correct_super_goal}[word](n)


def parse_formula(text: str, n: int | None = None) -> Formula:
    """Parse concrete syntax; ``n`` is required by the group macros."""
    return _Parser(text, n).parse()
