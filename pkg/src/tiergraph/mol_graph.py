"""Perception layer: adjacency, rings, aromaticity, hybridization, valence."""

from __future__ import annotations

import enum
import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

from .sdf_io import BondOrder, Molecule

__all__ = [
    "Hybridization",
    "MolecularGraph",
    "build_graph",
    "sssr",
    "connected_components",
    "perceive_aromaticity",
    "perceive_hybridization",
    "DEFAULT_VALENCE",
]

HETERO_PI = {"N", "O", "S"}
DEFAULT_VALENCE = {"C": 4, "N": 3, "O": 2, "S": 2, "F": 1, "Cl": 1, "Br": 1, "I": 1, "P": 3, "B": 3, "Si": 4}


class Hybridization(enum.Enum):
    SP = "SP"
    SP2 = "SP2"
    SP3 = "SP3"
    SP3D = "SP3D"
    SP3D2 = "SP3D2"
    OTHER = "OTHER"


@dataclass
class MolecularGraph:
    molecule: Molecule
    n: int
    elements: list[str]
    charges: list[int]
    adjacency: np.ndarray
    bond_order: dict[frozenset, BondOrder]
    bond_index: dict[frozenset, int]
    neighbors: list[list[int]]
    rings: list[list[int]]
    aromatic_atoms: list[bool]
    aromatic_bonds: list[bool]
    ring_bonds: list[bool]
    hybridization: list[Hybridization]
    degree: list[int]
    implicit_valence: list[int]
    h_count: list[int]

    @property
    def bonds(self):
        return self.molecule.bonds

    def order(self, a: int, b: int) -> BondOrder | None:
        return self.bond_order.get(frozenset((a, b)))

    def is_aromatic_bond(self, a: int, b: int) -> bool:
        idx = self.bond_index.get(frozenset((a, b)))
        return idx is not None and self.aromatic_bonds[idx]


def _neighbors(n: int, edges) -> list[list[int]]:
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    for lst in nbrs:
        lst.sort()
    return nbrs


def connected_components(n: int, edges) -> list[list[int]]:
    nbrs = _neighbors(n, edges)
    seen = [False] * n
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        comp, queue = [], deque([start])
        while queue:
            v = queue.popleft()
            comp.append(v)
            for w in nbrs[v]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
        comps.append(sorted(comp))
    return comps


def _bfs_parents(nbrs, root):
    parent = {root: None}
    depth = {root: 0}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w in nbrs[v]:
            if w not in parent:
                parent[w] = v
                depth[w] = depth[v] + 1
                queue.append(w)
    return parent, depth


def _path_to_root(parent, v):
    path = [v]
    while parent[v] is not None:
        v = parent[v]
        path.append(v)
    return path


def _order_cycle(atoms: list[int], edge_set: set[frozenset]) -> list[int]:
    """Walk the cycle from its smallest atom toward the smaller neighbour."""
    start = min(atoms)
    nbrs = {a: [b for b in atoms if frozenset((a, b)) in edge_set] for a in atoms}
    prev, cur = start, min(nbrs[start])
    walk = [start]
    while cur != start:
        walk.append(cur)
        nxt = [x for x in nbrs[cur] if x != prev]
        prev, cur = cur, nxt[0]
    return walk


def sssr(n: int, edges) -> list[list[int]]:
    """Smallest set of smallest rings as ordered atom cycles.

    Candidate cycles are Horton's: for every root ``v`` and edge ``(x, y)``,
    the BFS-tree paths ``v..x`` and ``v..y`` closed by the edge, kept when the
    two paths meet only at ``v``. Candidates are sorted by (length, sorted atom
    tuple) and accepted greedily when independent over GF(2), which yields a
    minimum cycle basis of size ``|E| - |V| + components``.
    """
    edges = [tuple(sorted(e)) for e in edges]
    edge_id = {frozenset(e): i for i, e in enumerate(edges)}
    target = len(edges) - n + len(connected_components(n, edges))
    if target <= 0:
        return []
    nbrs = _neighbors(n, edges)

    candidates = {}
    for v in range(n):
        parent, _ = _bfs_parents(nbrs, v)
        for x, y in edges:
            if x not in parent or y not in parent:
                continue
            if parent[x] == y or parent[y] == x:
                continue
            px, py = _path_to_root(parent, x), _path_to_root(parent, y)
            if set(px) & set(py) != {v}:
                continue
            atoms = px + py[-2::-1]
            mask = 1 << edge_id[frozenset((x, y))]
            for path in (px, py):
                for a, b in zip(path, path[1:]):
                    mask |= 1 << edge_id[frozenset((a, b))]
            if mask not in candidates:
                candidates[mask] = tuple(sorted(atoms))

    ordered = sorted(candidates.items(), key=lambda kv: (len(kv[1]), kv[1]))
    basis: dict[int, int] = {}  # pivot bit -> reduced vector
    chosen = []
    for mask, atoms in ordered:
        vec = mask
        while vec:
            pivot = vec.bit_length() - 1
            if pivot not in basis:
                break
            vec ^= basis[pivot]
        if not vec:
            continue
        basis[vec.bit_length() - 1] = vec
        chosen.append((mask, atoms))
        if len(chosen) == target:
            break

    edge_sets = []
    for mask, atoms in chosen:
        es = {frozenset(edges[i]) for i in range(len(edges)) if mask >> i & 1}
        edge_sets.append(_order_cycle(list(atoms), es))
    return edge_sets


def _cycle_bonds(cycle):
    return [frozenset(p) for p in zip(cycle, cycle[1:] + cycle[:1])]


def _pi_electrons(g_elements, charges, nbrs, orders, ring_bond_pairs, atom):
    """Electrons an atom donates to a ring pi system, or None if it cannot take part."""
    el = g_elements[atom]
    bonds = [(w, orders[frozenset((atom, w))]) for w in nbrs[atom]]
    if any(o is BondOrder.AROMATIC for _, o in bonds):
        n_arom = sum(o is BondOrder.AROMATIC for _, o in bonds)
        if el == "C":
            return 1
        if el in HETERO_PI:
            heavy = len(bonds)
            if el == "N":
                return 2 if heavy == 3 and n_arom == 2 and charges[atom] <= 0 else 1
            return 2 if heavy == 2 else 1
        return None
    ring_multiple = [w for w, o in bonds if o in (BondOrder.DOUBLE, BondOrder.TRIPLE) and frozenset((atom, w)) in ring_bond_pairs]
    exo_multiple = [w for w, o in bonds if o in (BondOrder.DOUBLE, BondOrder.TRIPLE) and frozenset((atom, w)) not in ring_bond_pairs]
    if any(orders[frozenset((atom, w))] is BondOrder.TRIPLE for w in ring_multiple + exo_multiple):
        return None
    if ring_multiple:
        return 1 if len(ring_multiple) == 1 and not exo_multiple else None
    if exo_multiple:
        # exocyclic C=O / C=N style bond: carbon stays sp2 but donates nothing
        if el == "C" and len(exo_multiple) == 1 and g_elements[exo_multiple[0]] in HETERO_PI:
            return 0
        return None
    if el in HETERO_PI and charges[atom] <= 0:
        return 2
    return None


def _is_huckel(count: int) -> bool:
    return count >= 2 and (count - 2) % 4 == 0


def perceive_aromaticity(elements, charges, nbrs, orders, rings):
    """Return (aromatic atom set, aromatic bond pair set).

    Each single ring is tested first; rings that fail alone are retried as
    part of fused envelopes (connected unions of rings sharing bonds, up to
    four rings), so a kekulized pyridone-type ring fused to a pyrimidine is
    still caught. AROMATIC-typed input bonds are honoured as given.
    """
    ring_bond_pairs = {b for r in rings for b in _cycle_bonds(r)}
    electrons = {
        a: _pi_electrons(elements, charges, nbrs, orders, ring_bond_pairs, a)
        for r in rings
        for a in r
    }
    arom_atoms: set[int] = set()
    arom_bonds: set[frozenset] = set()

    def accept(ring_ids):
        for rid in ring_ids:
            arom_atoms.update(rings[rid])
            arom_bonds.update(_cycle_bonds(rings[rid]))

    pending = []
    for rid, r in enumerate(rings):
        cbonds = _cycle_bonds(r)
        if all(orders[b] is BondOrder.AROMATIC for b in cbonds):
            accept([rid])
            continue
        counts = [electrons[a] for a in r]
        if None not in counts and _is_huckel(sum(counts)):
            accept([rid])
        else:
            pending.append(rid)

    if pending:
        ring_edges = [set(_cycle_bonds(r)) for r in rings]
        fused = {i: [j for j in range(len(rings)) if j != i and ring_edges[i] & ring_edges[j]] for i in range(len(rings))}
        for size in (2, 3, 4):
            for combo in itertools.combinations(range(len(rings)), size):
                if not any(c in pending for c in combo):
                    continue
                if not _connected_combo(combo, fused):
                    continue
                atoms = sorted(set().union(*(rings[c] for c in combo)))
                counts = [electrons[a] for a in atoms]
                if None in counts or not _is_huckel(sum(counts)):
                    continue
                if not _is_envelope(combo, ring_edges, atoms):
                    continue
                accept(combo)
            pending = [p for p in pending if not set(rings[p]) <= arom_atoms]
            if not pending:
                break
    return arom_atoms, arom_bonds


def _connected_combo(combo, fused) -> bool:
    combo = set(combo)
    start = next(iter(combo))
    seen, stack = {start}, [start]
    while stack:
        c = stack.pop()
        for d in fused[c]:
            if d in combo and d not in seen:
                seen.add(d)
                stack.append(d)
    return seen == combo


def _is_envelope(combo, ring_edges, atoms) -> bool:
    """The bonds used by exactly one member ring must form one simple cycle over all atoms."""
    count: dict[frozenset, int] = {}
    for c in combo:
        for b in ring_edges[c]:
            count[b] = count.get(b, 0) + 1
    outer = [b for b, k in count.items() if k == 1]
    if len(outer) != len(atoms):
        return False
    deg: dict[int, int] = {}
    for b in outer:
        for a in b:
            deg[a] = deg.get(a, 0) + 1
    return all(deg.get(a) == 2 for a in atoms)


def perceive_hybridization(elements, nbrs, orders, aromatic_atoms) -> list[Hybridization]:
    result = []
    for atom, el in enumerate(elements):
        if el == "H":
            result.append(Hybridization.OTHER)
            continue
        bonds = [orders[frozenset((atom, w))] for w in nbrs[atom]]
        n_double = sum(o is BondOrder.DOUBLE for o in bonds)
        degree = len(bonds)
        if degree >= 6:
            result.append(Hybridization.SP3D2)
        elif degree == 5:
            result.append(Hybridization.SP3D)
        elif degree == 4 and (n_double or BondOrder.TRIPLE in bonds):
            # hypervalent centres such as sulfonyl S: four sigma bonds
            result.append(Hybridization.SP3)
        elif BondOrder.TRIPLE in bonds or n_double >= 2:
            result.append(Hybridization.SP)
        elif n_double == 1 or atom in aromatic_atoms or BondOrder.AROMATIC in bonds:
            result.append(Hybridization.SP2)
        else:
            result.append(Hybridization.SP3)
    return result


def build_graph(mol: Molecule) -> MolecularGraph:
    """Annotate a parsed molecule; purely a function of its atoms and bonds."""
    n = mol.n_atoms
    elements = mol.elements
    charges = [a.formal_charge for a in mol.atoms]
    pairs = [(b.a, b.b) for b in mol.bonds]
    orders = {b.pair: b.order for b in mol.bonds}
    bond_index = {b.pair: i for i, b in enumerate(mol.bonds)}
    adjacency = np.zeros((n, n), dtype=np.float64)
    for a, b in pairs:
        adjacency[a, b] = adjacency[b, a] = 1.0
    nbrs = _neighbors(n, pairs)

    rings = sssr(n, pairs)
    arom_atoms, arom_pairs = perceive_aromaticity(elements, charges, nbrs, orders, rings)
    ring_pairs = {p for r in rings for p in _cycle_bonds(r)}

    hybrid = perceive_hybridization(elements, nbrs, orders, arom_atoms)
    degree = [len(x) for x in nbrs]
    h_count = [sum(elements[w] == "H" for w in nbrs[v]) for v in range(n)]
    implicit = []
    for v in range(n):
        total = sum(orders[frozenset((v, w))].valence_contribution for w in nbrs[v])
        implicit.append(max(0, DEFAULT_VALENCE.get(elements[v], 0) - int(np.floor(total + 0.5))))

    return MolecularGraph(
        molecule=mol,
        n=n,
        elements=elements,
        charges=charges,
        adjacency=adjacency,
        bond_order=orders,
        bond_index=bond_index,
        neighbors=nbrs,
        rings=rings,
        aromatic_atoms=[v in arom_atoms for v in range(n)],
        aromatic_bonds=[b.pair in arom_pairs for b in mol.bonds],
        ring_bonds=[b.pair in ring_pairs for b in mol.bonds],
        hybridization=hybrid,
        degree=degree,
        implicit_valence=implicit,
        h_count=h_count,
    )
