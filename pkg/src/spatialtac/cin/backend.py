"""Registry of backend functions that ``map`` may target."""

from __future__ import annotations

import dataclasses
from typing import Callable

from .stmt import MappedCall, Stmt

# A reference implementation receives the call and a callback that runs a
# CIN statement in the current interpreter context.
Reference = Callable[[MappedCall, Callable[[Stmt], None]], None]


def run_original(call: MappedCall, run: Callable[[Stmt], None]) -> None:
    run(call.original)


@dataclasses.dataclass(frozen=True)
class BackendFunc:
    name: str
    backend: str
    min_tensors: int = 1
    max_tensors: int | None = None
    reference: Reference = run_original
    description: str = ""

    def check_arity(self, n: int) -> None:
        if n < self.min_tensors or (self.max_tensors is not None and n > self.max_tensors):
            hi = "∞" if self.max_tensors is None else self.max_tensors
            raise ValueError(f"{self.backend}.{self.name} takes {self.min_tensors}..{hi} "
                             f"tensors, got {n}")


_REGISTRY: dict[tuple[str, str], BackendFunc] = {}


def register(func: BackendFunc, replace: bool = False) -> BackendFunc:
    key = (func.backend, func.name)
    if key in _REGISTRY and not replace:
        raise ValueError(f"{func.backend}.{func.name} is already registered")
    _REGISTRY[key] = func
    return func


def lookup(backend: str, name: str) -> BackendFunc:
    try:
        return _REGISTRY[(backend, name)]
    except KeyError:
        raise KeyError(f"no backend function {name!r} registered for {backend!r}") from None


def registered() -> list[BackendFunc]:
    return list(_REGISTRY.values())


register(BackendFunc("Reduction", "Spatial", 2, None,
                     description="fold a loop nest into a register with '+'"))
register(BackendFunc("BulkLoad", "Spatial", 2, 2,
                     description="copy a tensor slice on-chip"))
register(BackendFunc("BulkStore", "Spatial", 2, 2,
                     description="copy an on-chip tensor slice to DRAM"))
