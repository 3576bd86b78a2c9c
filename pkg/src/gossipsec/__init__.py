"""Model checking and simulation for gossip with at most one transmission error."""

from .core import (
    Call,
    Fault,
    GossipError,
    GossipState,
    ParseError,
    ResourceLimit,
    TooManyFaultsError,
    format_distribution,
    format_sequence,
    parse_distribution,
    parse_initial,
    parse_sequence,
    state,
)
from .formulas import Formula, parse_formula, print_formula
from .semantics import (
    Model,
    check_validity,
    equivalence_class,
    evaluate,
    indistinguishable,
    result_distribution,
    star_set,
    starstar_set,
)

__version__ = "0.1.0"

__all__ = [
    "Call",
    "Fault",
    "Formula",
    "GossipError",
    "GossipState",
    "Model",
    "ParseError",
    "ResourceLimit",
    "TooManyFaultsError",
    "__version__",
    "check_validity",
    "equivalence_class",
    "evaluate",
    "format_distribution",
    "format_sequence",
    "indistinguishable",
    "parse_distribution",
    "parse_formula",
    "parse_initial",
    "parse_sequence",
    "print_formula",
    "result_distribution",
    "star_set",
    "starstar_set",
    "state",
]
