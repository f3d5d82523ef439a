"""Lowering from scheduled index notation to parallel patterns."""

from .analysis import LoweringError, analyze, derive_contraction
from .bitvector import pack_bitvector
from .contraction import lower_iter
from .ir import MemoryKind, PatternProgram, dump_json


def lower(s, plan=None, name: str = "kernel") -> PatternProgram:
    """Lower a scheduled statement to a pattern program (see :mod:`.lowerer`)."""
    from .lowerer import lower as _lower
    return _lower(s, plan, name)

__all__ = ["LoweringError", "MemoryKind", "PatternProgram", "analyze", "derive_contraction",
           "dump_json", "lower", "lower_iter", "pack_bitvector"]
