"""Forward slicer for a first-order flat functional-logic language.

Given a program and a slicing criterion (a possibly partially instantiated
function call), compute an executable slice containing exactly the code
reachable from the criterion. Ships with a reference narrowing interpreter
and a differential checker for slice correctness.
"""

from .interp import Answer, EvalResult, evaluate
from .reach import FuelExhausted, reachable_states
from .slicer import (
    CheckLimits,
    SliceReport,
    check_correct_slice,
    enumerate_goals,
    residual_calls,
    slice_program,
)
from .surface import SurfaceError, load_program, parse_goal, parse_program, print_program
from .terms import Program, Rule, State, Subst, Term, abstraction_holds

__all__ = [
    "Answer",
    "CheckLimits",
    "EvalResult",
    "FuelExhausted",
    "Program",
    "Rule",
    "SliceReport",
    "State",
    "Subst",
    "SurfaceError",
    "Term",
    "abstraction_holds",
    "check_correct_slice",
    "enumerate_goals",
    "evaluate",
    "load_program",
    "parse_goal",
    "parse_program",
    "print_program",
    "reachable_states",
    "residual_calls",
    "slice_program",
]

__version__ = "0.1.0"
