"""Concrete index notation: statements, printing, scheduling and interpretation."""

from .backend import BackendFunc, lookup, register
from .interp import InterpretError, interpret_cin
from .printer import alpha_equal, alpha_normalize, format_stmt, parse_stmt
from .stmt import (Assign, EnvBinding, Forall, Fuse, Increment, MappedCall, MapTag, Scope,
                   Sequence, SplitDown, SplitUp, Stmt, SuchThat, Where)
from .transforms import (ScheduleError, accelerate, environment, find_substmt, fuse,
                         inline_where, map_stmt, precompute, reorder, split, split_down,
                         split_up)

__all__ = [
    "Assign", "BackendFunc", "EnvBinding", "Forall", "Fuse", "Increment", "InterpretError",
    "MapTag", "MappedCall", "ScheduleError", "Scope", "Sequence", "SplitDown", "SplitUp",
    "Stmt", "SuchThat", "Where", "accelerate", "alpha_equal", "alpha_normalize",
    "environment", "find_substmt", "format_stmt", "fuse", "inline_where", "interpret_cin",
    "lookup", "map_stmt", "parse_stmt", "precompute", "register", "reorder", "split",
    "split_down", "split_up",
]
