"""Seeded random formulas for differential checks."""

import random

from gossipsec.formulas import (
    And,
    K,
    Not,
    atom,
    correct_expert,
    expert,
    kv,
)


def random_formula(rng: random.Random, n: int, depth: int):
    r = rng.random()
    if depth == 0 or r < 0.25:
        return atom(rng.randrange(n), rng.randrange(n), rng.randrange(2))
    if r < 0.32:
        return kv(rng.randrange(n), rng.randrange(n))
    if r < 0.37:
        return (expert if rng.random() < 0.5 else correct_expert)(rng.randrange(n), n)
    if r < 0.5:
        return Not(random_formula(rng, n, depth - 1))
    if r < 0.68:
        return And(random_formula(rng, n, depth - 1), random_formula(rng, n, depth - 1))
    return K(rng.randrange(n), random_formula(rng, n, depth - 1))
