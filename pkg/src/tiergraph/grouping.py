"""Functional groups, ring groups and the catch-all group; membership matrices.

Functional groups follow Ertl's marking scheme without the environment-carbon
extension: marked atoms are grouped into connected components and nothing
else is attached to them.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .mol_graph import HETERO_PI, MolecularGraph
from .sdf_io import BondOrder

__all__ = [
    "GroupKind",
    "Group",
    "GroupSet",
    "TieredMembership",
    "WeightMode",
    "GroupWeightConfig",
    "DEFAULT_WEIGHTS",
    "WeightCountMismatch",
    "EmptyDataset",
    "identify_functional_groups",
    "identify_ring_groups",
    "build_group_set",
    "build_membership",
    "group_stats",
    "group_report",
]


class WeightCountMismatch(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


class GroupKind(enum.Enum):
    FG = "FG"
    RG = "RG"
    CCG = "CCG"


_KIND_RANK = {GroupKind.FG: 0, GroupKind.RG: 1, GroupKind.CCG: 2}


@dataclass(frozen=True)
class Group:
    kind: GroupKind
    atoms: frozenset[int]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("groups must be non-empty")

    def sort_key(self):
        return (_KIND_RANK[self.kind], min(self.atoms), len(self.atoms), tuple(sorted(self.atoms)))


@dataclass
class GroupSet:
    groups: list[Group]
    n_atoms: int

    def __len__(self):
        return len(self.groups)

    def of_kind(self, kind: GroupKind) -> list[Group]:
        return [g for g in self.groups if g.kind is kind]

    @property
    def kinds(self) -> list[GroupKind]:
        return [g.kind for g in self.groups]

    @property
    def ccg(self) -> Optional[Group]:
        found = self.of_kind(GroupKind.CCG)
        return found[0] if found else None


class WeightMode(enum.Enum):
    CONSTANT_BY_KIND = "constant_by_kind"
    PER_GROUP = "per_group"


@dataclass(frozen=True)
class GroupWeightConfig:
    w_fg: float = 1.0
    w_rg: float = 0.5
    w_ccg: float = 0.1
    mode: WeightMode = WeightMode.CONSTANT_BY_KIND
    per_group: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        values = [self.w_fg, self.w_rg, self.w_ccg] + list(self.per_group or ())
        if any(not (w > 0) for w in values):
            raise ValueError(f"group weights must be positive, got {values}")

    def by_kind(self, kind: GroupKind) -> float:
        return {GroupKind.FG: self.w_fg, GroupKind.RG: self.w_rg, GroupKind.CCG: self.w_ccg}[kind]

    @property
    def triple(self) -> tuple[float, float, float]:
        return (self.w_fg, self.w_rg, self.w_ccg)

    def scaled(self, c: float) -> "GroupWeightConfig":
        per = tuple(c * w for w in self.per_group) if self.per_group else None
        return GroupWeightConfig(c * self.w_fg, c * self.w_rg, c * self.w_ccg, self.mode, per)


DEFAULT_WEIGHTS = GroupWeightConfig()


@dataclass
class TieredMembership:
    M1: np.ndarray  # atoms x groups, binary
    M2: np.ndarray  # groups x 1, group weights
    kinds: list[GroupKind] = field(default_factory=list)


def identify_functional_groups(g: MolecularGraph) -> list[frozenset[int]]:
    """Marked-atom components of the molecule, hydrogens excluded."""
    el = g.elements
    marked = set()
    for v in range(g.n):
        if el[v] not in ("C", "H"):
            marked.add(v)
    for v in range(g.n):
        if el[v] != "C" or g.aromatic_atoms[v]:
            continue
        for w in g.neighbors[v]:
            order = g.order(v, w)
            if order not in (BondOrder.DOUBLE, BondOrder.TRIPLE) or g.is_aromatic_bond(v, w):
                continue
            if el[w] not in ("C", "H"):
                marked.add(v)
            elif el[w] == "C" and not g.aromatic_atoms[w]:
                marked.update((v, w))
    for v in range(g.n):
        # acetal-like sp3 carbon carrying two singly bonded O/N/S
        if el[v] != "C" or g.degree[v] != 4:
            continue
        hetero = [
            w
            for w in g.neighbors[v]
            if el[w] in HETERO_PI
            and g.order(v, w) is BondOrder.SINGLE
            and all(g.order(w, u) is BondOrder.SINGLE for u in g.neighbors[w])
        ]
        if len(hetero) >= 2:
            marked.add(v)
    for ring in g.rings:
        if len(ring) == 3 and sum(el[a] in HETERO_PI for a in ring) == 1:
            marked.update(ring)

    groups = []
    remaining = set(marked)
    while remaining:
        seed = min(remaining)
        remaining.discard(seed)
        comp, stack = {seed}, [seed]
        while stack:
            v = stack.pop()
            for w in g.neighbors[v]:
                if w in remaining:
                    remaining.discard(w)
                    comp.add(w)
                    stack.append(w)
        groups.append(frozenset(comp))
    return sorted(groups, key=lambda s: (min(s), len(s)))


def identify_ring_groups(g: MolecularGraph) -> list[frozenset[int]]:
    return sorted(
        (frozenset(a for a in ring if g.elements[a] != "H") for ring in g.rings),
        key=lambda s: (min(s), len(s), tuple(sorted(s))),
    )


def build_group_set(g: MolecularGraph) -> GroupSet:
    fgs = identify_functional_groups(g)
    rgs = identify_ring_groups(g)
    groups = [Group(GroupKind.FG, s) for s in fgs] + [Group(GroupKind.RG, s) for s in rgs]
    covered = set().union(*fgs, *rgs) if groups else set()
    rest = frozenset(range(g.n)) - covered
    if rest:
        groups.append(Group(GroupKind.CCG, rest))
    groups.sort(key=Group.sort_key)
    return GroupSet(groups=groups, n_atoms=g.n)


def build_membership(gs: GroupSet, weights: GroupWeightConfig = DEFAULT_WEIGHTS) -> TieredMembership:
    M1 = np.zeros((gs.n_atoms, len(gs)), dtype=np.float64)
    for i, group in enumerate(gs.groups):
        M1[sorted(group.atoms), i] = 1.0
    if weights.mode is WeightMode.PER_GROUP:
        if weights.per_group is None or len(weights.per_group) != len(gs):
            got = 0 if weights.per_group is None else len(weights.per_group)
            raise WeightCountMismatch(f"{got} per-group weights for {len(gs)} groups")
        w = list(weights.per_group)
    else:
        w = [weights.by_kind(group.kind) for group in gs.groups]
    M2 = np.asarray(w, dtype=np.float64).reshape(-1, 1)
    return TieredMembership(M1=M1, M2=M2, kinds=gs.kinds)


@dataclass
class GroupStats:
    count: int
    mean: float
    min: int
    max: int
    histogram: dict[int, int]

    def as_dict(self):
        return {
            "molecules": self.count,
            "mean": self.mean,
            "min": self.min,
            "max": self.max,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }


def group_stats(dataset: Iterable[Union[GroupSet, int]]) -> GroupStats:
    """Count statistics over group sets, or over precomputed group counts."""
    hist: Counter[int] = Counter()
    for gs in dataset:
        hist[gs if isinstance(gs, int) else len(gs)] += 1
    total = sum(hist.values())
    if not total:
        raise EmptyDataset("group statistics need at least one molecule")
    mean = sum(k * v for k, v in hist.items()) / total
    return GroupStats(count=total, mean=mean, min=min(hist), max=max(hist), histogram=dict(hist))


def group_report(gs: GroupSet, cid: Optional[str]) -> dict:
    """One JSON-ready object per molecule; atom lists ascending."""
    ccg = gs.ccg
    return {
        "cid": cid,
        "fgs": [sorted(g.atoms) for g in gs.of_kind(GroupKind.FG)],
        "rgs": [sorted(g.atoms) for g in gs.of_kind(GroupKind.RG)],
        "ccg": sorted(ccg.atoms) if ccg else [],
    }


def kind_counts(kinds: Sequence[GroupKind]) -> dict[str, int]:
    c = Counter(k.value for k in kinds)
    return {k.value: c.get(k.value, 0) for k in GroupKind}
