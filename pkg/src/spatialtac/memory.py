"""Memory analysis: bind every tensor array to a memory kind and place it.

Each stored tensor contributes ``pos``/``crd`` arrays per compressed level
plus a ``vals`` array. Binding follows how the array is traversed:

* ``pos`` arrays and dense sub-blocks read at affine addresses live in
  dense scratchpads;
* arrays visited once, in storage order, by a single loop become FIFOs;
* coordinates that feed a bit-vector generator become bit-vector streams;
* values reached at data-dependent addresses live in sparse scratchpads
  (or, when nothing stages them, are gathered directly from DRAM);
* scalars live in registers.

Placement puts each allocation (and its DRAM load) at the copy site chosen
by the schedule, or otherwise in the loop just above the first use; outputs
are stored back from the same place.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Iterable

from .cin.stmt import Fuse, SplitDown, SplitUp, Stmt, schedule_relations
from .lowering.analysis import (TOP, Analysis, LoopInfo, Site, SourceAccess, analyze,
                                is_ancestor)
from .lowering.contraction import Role
from .lowering.ir import MemoryKind
from .tensor import COMPRESSED, UNCOMPRESSED

__all__ = ["ArrayId", "Bindings", "MemoryKind", "MemoryPlan", "PlanEntry", "Use",
           "bind_memories", "check_plan", "place_allocations_and_transfers", "plan_memory",
           "tensor_arrays"]


@dataclasses.dataclass(frozen=True, order=True)
class ArrayId:
    tensor: str
    kind: str            # "pos" | "crd" | "vals"
    level: int | None = None  # 0-based storage level for pos/crd
    scalar: bool = False      # the single value of an order-0 tensor

    @property
    def name(self) -> str:
        if self.scalar:
            return self.tensor
        if self.kind == "vals":
            return f"{self.tensor}_vals"
        return f"{self.tensor}{self.level + 1}_{self.kind}"

    def __str__(self) -> str:
        return self.name


def tensor_arrays(name: str, levels) -> list[ArrayId]:
    out = []
    for lv, kind in enumerate(levels):
        if kind is COMPRESSED:
            out += [ArrayId(name, "pos", lv), ArrayId(name, "crd", lv)]
    out.append(ArrayId(name, "vals", scalar=not levels))
    return out


@dataclasses.dataclass(frozen=True)
class Use:
    site: Site
    how: str  # segment | stream | bitvector | read | write | update | append | segment-write


@dataclasses.dataclass
class Bindings:
    """On-chip memory kind of every array, plus the DRAM kind of off-chip ones."""

    onchip: dict[ArrayId, MemoryKind]
    dram: dict[ArrayId, MemoryKind]

    def _find(self, key) -> ArrayId:
        if isinstance(key, ArrayId):
            return key
        for a in list(self.onchip) + list(self.dram):
            if a.name == key:
                return a
        raise KeyError(key)

    def __getitem__(self, key) -> MemoryKind:
        a = self._find(key)
        return self.onchip[a] if a in self.onchip else self.dram[a]

    def __contains__(self, key) -> bool:
        try:
            self._find(key)
            return True
        except KeyError:
            return False

    def override(self, key, kind: MemoryKind) -> "Bindings":
        """Copy with ``key`` forced to ``kind`` (for experiments and negative tests)."""
        a = self._find(key)
        onchip, dram = dict(self.onchip), dict(self.dram)
        if kind.off_chip:
            onchip.pop(a, None)
            dram[a] = kind
        else:
            onchip[a] = kind
            if dram.get(a) is MemoryKind.SPARSE_DRAM:
                dram[a] = MemoryKind.DENSE_DRAM
        return Bindings(onchip, dram)

    def names(self) -> dict[str, str]:
        out = {a.name: k.value for a, k in self.onchip.items()}
        for a, k in self.dram.items():
            out.setdefault(a.name, k.value)
        return out


@dataclasses.dataclass
class PlanEntry:
    array: ArrayId
    kind: MemoryKind | None          # on-chip kind; None for arrays gathered from DRAM
    dram: MemoryKind | None
    alloc_site: Site | None
    staging: str                     # copy | access | temp | output | resident | none
    transfer: str | None             # load | store | stream-store | None
    depth: int | None
    uses: list[Use]
    zero: bool = False


@dataclasses.dataclass
class MemoryPlan:
    analysis: Analysis
    bindings: Bindings
    entries: dict[str, PlanEntry]

    def entry(self, name: str) -> PlanEntry:
        return self.entries[name]

    def at_site(self, site: Site, staging: Iterable[str] | None = None) -> list[PlanEntry]:
        wanted = set(staging) if staging is not None else None
        return [e for e in self.entries.values() if e.alloc_site == site and e.kind is not None
                and (wanted is None or e.staging in wanted)]

    def to_json(self) -> dict:
        an = self.analysis
        out = {}
        for name, e in self.entries.items():
            out[name] = {
                "tensor": e.array.tensor,
                "array": e.array.kind,
                "level": None if e.array.level is None else e.array.level + 1,
                "kind": e.kind.value if e.kind else None,
                "dram": e.dram.value if e.dram else None,
                "alloc_site": None if e.alloc_site is None else an.site_label(e.alloc_site),
                "staging": e.staging,
                "transfer": e.transfer,
                "depth": e.depth,
                "uses": [{"site": an.site_label(u.site), "how": u.how} for u in e.uses],
            }
        return out

    def dump_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json(), indent=indent)


# -- use collection ---------------------------------------------------------------

def _parent(an: Analysis, site: Site) -> Site:
    return TOP if site == TOP else an.loops[site].parent_site


def _nearest_loop(an: Analysis, site: Site) -> Site:
    while site != TOP and site not in an.loops:
        site = site[:-1]
    return site


def _common(an: Analysis, sites: list[Site]) -> Site:
    if not sites:
        return TOP
    prefix = sites[0]
    for s in sites[1:]:
        n = 0
        while n < min(len(prefix), len(s)) and prefix[n] == s[n]:
            n += 1
        prefix = prefix[:n]
    return _nearest_loop(an, prefix)


def _is_temp(an: Analysis, name: str) -> bool:
    return name in an.temps


def collect_uses(an: Analysis) -> dict[ArrayId, list[Use]]:
    uses: dict[ArrayId, list[Use]] = {}

    def add(a: ArrayId, site: Site, how: str):
        uses.setdefault(a, []).append(Use(site, how))

    for sa in an.accesses.values():
        name = sa.name
        for lv, kind in enumerate(sa.levels):
            L = sa.level_loop[lv]
            if kind is not COMPRESSED or L is None:
                continue
            add(ArrayId(name, "pos", lv), L.parent_site, "segment")
            role = sa.level_role[lv]
            if role is Role.POSITIONS:
                add(ArrayId(name, "crd", lv), L.id, "stream")
            else:
                add(ArrayId(name, "crd", lv), L.parent_site, "bitvector")
        for r in sa.reads:
            add(ArrayId(name, "vals", scalar=sa.tensor.order == 0), r, "read")
    for out in an.outputs.values():
        name = out.tensor.name
        for lv, kind in enumerate(out.access.levels):
            L = out.level_loop[lv]
            if kind is COMPRESSED and L is not None:
                add(ArrayId(name, "pos", lv), L.parent_site, "segment-write")
                add(ArrayId(name, "crd", lv), L.id, "append")
        for site, inc in out.sites:
            add(ArrayId(name, "vals", scalar=out.tensor.order == 0), site,
                "update" if inc else "write")
    return uses


# -- traversal predicates -------------------------------------------------------------

def _chain(an: Analysis, top: Site, bottom: Site) -> list[LoopInfo]:
    """Loops strictly inside ``top`` down to (and including) the loop of ``bottom``."""
    out = []
    site = bottom
    while site != top and site != TOP:
        if not is_ancestor(top, site):
            return []
        out.append(an.loops[site])
        site = an.loops[site].parent_site
    if site != top:
        return []
    return list(reversed(out))


def single_pass(an: Analysis, sa: SourceAccess, staging: Site, bottom: Site,
                upto: int) -> tuple[bool, str]:
    """Do the loops between ``staging`` and ``bottom`` visit ``sa``'s positions once, in order?

    ``upto`` is the last storage level whose positions the traversal must
    enumerate.
    """
    if not is_ancestor(staging, bottom):
        return False, f"it is used at {an.site_label(bottom)}, outside its allocation"
    for L in _chain(an, staging, bottom):
        levels = [lv for lv in range(upto + 1) if sa.level_loop[lv] is L]
        if not levels:
            return False, f"loop {L.label} repeats the traversal without binding one of its levels"
        for lv in levels:
            if sa.levels[lv] is COMPRESSED and sa.level_role[lv] is not Role.POSITIONS:
                return False, f"level {lv + 1} is co-iterated at {L.label}, not streamed"
            if sa.levels[lv] is UNCOMPRESSED and (not L.dense or L.guard is not None):
                return False, f"level {lv + 1} is indexed at data-dependent coordinates at {L.label}"
    return True, ""


def _affine_below(an: Analysis, sa: SourceAccess, staging: Site) -> bool:
    for lv, kind in enumerate(sa.levels):
        L = sa.level_loop[lv]
        if L is None:
            continue
        if is_ancestor(staging, L.id) and L.id != staging:
            if kind is COMPRESSED or not L.dense:
                return False
    return True


def _inside(an: Analysis, outer: Site, L: LoopInfo | None) -> bool:
    return L is not None and is_ancestor(outer, L.id) and L.id != outer


# -- binding ------------------------------------------------------------------------

@dataclasses.dataclass
class _Choice:
    kind: MemoryKind | None
    site: Site | None
    staging: str
    zero: bool = False


def _reader(an: Analysis, name: str) -> SourceAccess | None:
    accs = [a for a in an.tensor_accesses(name)]
    for a in accs:
        if a.reads or any(x is not None for x in a.level_loop):
            return a
    return accs[0] if accs else None


def _choose(an: Analysis, a: ArrayId, uses: list[Use]) -> _Choice:
    name = a.tensor
    is_output = name in an.outputs
    sa = _reader(an, name)
    out = an.outputs.get(name)
    tensor = _tensor(an, name)
    temp_site = an.temps.get(name)

    if tensor.order == 0:
        site = temp_site if temp_site is not None else TOP
        return _Choice(MemoryKind.REGISTER, site, "temp" if temp_site is not None else
                       ("output" if is_output else "access"))

    if is_output:
        sites = [u.site for u in uses]
        lv_last = tensor.order - 1
        oacc = out.access
        if a.kind == "pos":
            site = temp_site if temp_site is not None else TOP
            return _Choice(MemoryKind.DENSE_SRAM, site, "temp" if temp_site is not None
                           else "output")
        if temp_site is not None:
            # on-chip temporaries live for the whole where-scope
            readers = [u for u in uses if u.how in ("stream", "bitvector", "read")]
            if a.kind == "crd":
                lv = a.level
                if any(u.how == "bitvector" for u in readers):
                    kind = MemoryKind.BIT_VECTOR
                elif sa is not None and readers and \
                        single_pass(an, sa, temp_site, sa.level_loop[lv].id, lv)[0]:
                    kind = MemoryKind.FIFO
                else:
                    kind = MemoryKind.SPARSE_SRAM
                return _Choice(kind, temp_site, "temp")
            dense = all(k is UNCOMPRESSED for k in oacc.levels)
            return _Choice(MemoryKind.DENSE_SRAM if dense else MemoryKind.SPARSE_SRAM,
                           temp_site, "temp", zero=True)
        if a.kind == "crd":
            L = out.level_loop[a.level]
            return _Choice(MemoryKind.FIFO, L.parent_site, "output")
        # vals of a kernel output
        if oacc.levels[lv_last] is COMPRESSED:
            L = out.level_loop[lv_last]
            return _Choice(MemoryKind.FIFO, L.parent_site, "output")
        write_site = _common(an, sites)
        site = _parent(an, write_site)
        inc = any(u.how == "update" for u in uses)
        if inc:
            site = _above_reductions(an, out, write_site, site)
        affine = all(not _inside(an, site, out.level_loop[lv]) or
                     (out.level_loop[lv].dense and out.level_loop[lv].guard is None
                      and not _below_compressed_output(out, lv))
                     for lv in range(tensor.order))
        kind = MemoryKind.DENSE_SRAM if affine else MemoryKind.SPARSE_SRAM
        return _Choice(kind, site, "output", zero=inc)

    # inputs ------------------------------------------------------------------------
    if tensor.on_chip:
        staging = "resident"
    else:
        staging = "access"
    copy = sa.copy
    lv = a.level if a.kind != "vals" else tensor.order - 1
    L = sa.level_loop[lv]
    if copy is not None and _inside(an, copy.site, L):
        site, staging = copy.site, "copy" if not tensor.on_chip else "resident"
    else:
        site = _parent(an, _common(an, [u.site for u in uses]))
    if tensor.on_chip:
        site = TOP
    if a.kind == "pos":
        return _Choice(MemoryKind.DENSE_SRAM, site, staging)
    if a.kind == "crd":
        how = {u.how for u in uses}
        bottom = L.parent_site if "bitvector" in how else L.id
        upto = lv - 1 if "bitvector" in how else lv
        ok = single_pass(an, sa, site, bottom, upto)[0] if upto >= 0 else True
        if "bitvector" in how:
            kind = MemoryKind.BIT_VECTOR if ok else MemoryKind.SPARSE_SRAM
        else:
            kind = MemoryKind.FIFO if ok else MemoryKind.SPARSE_SRAM
        return _Choice(kind, site, staging)
    # vals
    reads = {u.site for u in uses}
    if sa.levels[lv] is COMPRESSED and sa.level_role[lv] is Role.POSITIONS and \
            reads == {L.id} and single_pass(an, sa, site, L.id, lv)[0]:
        return _Choice(MemoryKind.FIFO, site, staging)
    if _affine_below(an, sa, site):
        return _Choice(MemoryKind.DENSE_SRAM, site, staging)
    if staging == "access":
        return _Choice(None, None, "none")
    return _Choice(MemoryKind.SPARSE_SRAM, site, staging)


def _output_loop_vars(an: Analysis, out) -> set[str]:
    """Names of loop variables that enumerate (parts of) the output's indices."""
    names = {v.name for v in out.access.indices}
    changed = True
    rels = schedule_relations(an.stmt)
    while changed:
        changed = False
        for r in rels:
            if isinstance(r, (SplitUp, SplitDown)) and r.i.name in names:
                new = {r.io.name, r.ii.name}
            elif isinstance(r, Fuse) and (r.io.name in names or r.ii.name in names):
                new = {r.f.name}
            else:
                continue
            if not new <= names:
                names |= new
                changed = True
    return names


def _above_reductions(an: Analysis, out, write_site: Site, site: Site) -> Site:
    """Hoist an accumulating output above every reduction loop around its writes."""
    keep = _output_loop_vars(an, out)
    L = an.loops.get(write_site)
    best = site
    while L is not None:
        if L.var.name not in keep and is_ancestor(L.parent_site, best):
            best = L.parent_site
        L = L.parent
    return best


def _below_compressed_output(out, lv: int) -> bool:
    return any(out.access.levels[m] is COMPRESSED for m in range(lv))


def _arrays(an: Analysis) -> list[ArrayId]:
    out: list[ArrayId] = []
    for t in an.stored_tensors():
        out.extend(tensor_arrays(t.name, t.format.levels))
    return out


def bind_memories(s: Stmt | Analysis) -> Bindings:
    """Choose a memory kind for every array of every stored tensor in ``s``."""
    an = s if isinstance(s, Analysis) else analyze(s)
    uses = collect_uses(an)
    onchip: dict[ArrayId, MemoryKind] = {}
    dram: dict[ArrayId, MemoryKind] = {}
    for a in _arrays(an):
        tensor = _tensor(an, a.tensor)
        choice = _choose(an, a, uses.get(a, []))
        if choice.kind is not None:
            onchip[a] = choice.kind
        if not tensor.on_chip:
            dram[a] = MemoryKind.SPARSE_DRAM if choice.kind is None else MemoryKind.DENSE_DRAM
    return Bindings(onchip, dram)


def _tensor(an: Analysis, name: str):
    for t in an.stored_tensors():
        if t.name == name:
            return t
    raise KeyError(name)


def place_allocations_and_transfers(s: Stmt | Analysis, bindings: Bindings | None = None
                                    ) -> MemoryPlan:
    an = s if isinstance(s, Analysis) else analyze(s)
    if bindings is None:
        bindings = bind_memories(an)
    uses = collect_uses(an)
    depth = an.env["fifo_depth"]
    entries: dict[str, PlanEntry] = {}
    for a in _arrays(an):
        tensor = _tensor(an, a.tensor)
        choice = _choose(an, a, uses.get(a, []))
        kind = bindings.onchip.get(a)
        dkind = bindings.dram.get(a)
        if kind is None:
            entries[a.name] = PlanEntry(a, None, dkind, None, "none", None, None,
                                        uses.get(a, []))
            continue
        site = choice.site
        staging = choice.staging
        if choice.kind is None:  # forced on-chip although nothing stages it
            site = _parent(an, _common(an, [u.site for u in uses.get(a, [])]))
            staging = "access"
        transfer = None
        if not tensor.on_chip:
            if a.tensor in an.outputs:
                transfer = "stream-store" if kind.is_queue else "store"
            else:
                transfer = "load"
        entries[a.name] = PlanEntry(a, kind, dkind, site, staging, transfer,
                                    depth if kind.is_queue else None, uses.get(a, []),
                                    zero=choice.zero)
    return MemoryPlan(an, bindings, entries)


def plan_memory(s: Stmt) -> MemoryPlan:
    an = analyze(s)
    return place_allocations_and_transfers(an, bind_memories(an))


# -- checking ----------------------------------------------------------------------

def check_plan(s: Stmt | Analysis, plan: MemoryPlan) -> list[str]:
    """Diagnostics for placements that break transfer or FIFO discipline."""
    an = s if isinstance(s, Analysis) else plan.analysis
    diags: list[str] = []
    for name, e in plan.entries.items():
        a = e.array
        tensor = _tensor(an, a.tensor)
        if a.kind == "pos" and e.kind is not None and e.kind.is_queue:
            diags.append(f"placement: {name} is a position array and cannot be a queue")
        if e.kind is MemoryKind.REGISTER and tensor.order > 0:
            diags.append(f"placement: {name} belongs to an order-{tensor.order} tensor and "
                         f"cannot live in a register")
        if tensor.on_chip and e.dram is not None:
            diags.append(f"placement: on-chip tensor {a.tensor} has a DRAM binding for {name}")
        if not tensor.on_chip and e.dram is None:
            diags.append(f"placement: off-chip array {name} has no DRAM binding")
        is_input = a.tensor not in an.outputs
        if e.kind is None:
            if e.dram is not MemoryKind.SPARSE_DRAM:
                diags.append(f"transfer-before-read: {name} has no on-chip allocation")
            continue
        reads = [u for u in e.uses if u.how in ("segment", "stream", "bitvector", "read")]
        if is_input and not tensor.on_chip and e.transfer != "load":
            diags.append(f"transfer-before-read: {name} is read but never loaded from DRAM")
        if e.alloc_site is None:
            diags.append(f"transfer-before-read: {name} is never allocated")
            continue
        for u in e.uses:
            if not is_ancestor(e.alloc_site, u.site):
                diags.append(f"transfer-before-read: {name} is used at {an.site_label(u.site)} "
                             f"outside its allocation at {an.site_label(e.alloc_site)}")
                break
        if e.kind.is_queue and is_input and reads:
            diags.extend(_check_queue(an, e, tensor))
    return diags


def _check_queue(an: Analysis, e: PlanEntry, tensor) -> list[str]:
    a = e.array
    name = a.name
    sa = _reader(an, a.tensor)
    lv = a.level if a.kind != "vals" else tensor.order - 1
    L = sa.level_loop[lv]
    if L is None:
        return [f"FIFO discipline: {name} is queued but no loop traverses it"]
    hows = {u.how for u in e.uses}
    if e.kind is MemoryKind.BIT_VECTOR:
        if hows != {"bitvector"}:
            return [f"FIFO discipline: {name} is a bit-vector stream but is also read directly"]
        ok, why = single_pass(an, sa, e.alloc_site, L.parent_site, lv - 1) if lv > 0 else (True, "")
    elif a.kind == "crd":
        if hows != {"stream"}:
            return [f"FIFO discipline: {name} is a FIFO but its level is co-iterated"]
        ok, why = single_pass(an, sa, e.alloc_site, L.id, lv)
    else:
        sites = {u.site for u in e.uses}
        if sa.levels[lv] is not COMPRESSED or sa.level_role[lv] is not Role.POSITIONS:
            return [f"FIFO discipline: {name} is a FIFO but its last level is not streamed "
                    f"by a position loop"]
        if sites != {L.id}:
            deeper = sorted(an.site_label(s) for s in sites - {L.id})
            return [f"FIFO discipline: {name} is a FIFO but is read at {', '.join(deeper)}, not "
                    f"once per iteration of {L.label}"]
        ok, why = single_pass(an, sa, e.alloc_site, L.id, lv)
    return [] if ok else [f"FIFO discipline: {name} cannot be a FIFO because {why}"]
