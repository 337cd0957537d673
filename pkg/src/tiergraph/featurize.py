"""Atom and bond feature vectors under the two supported schemes.

QM9_STYLE mirrors the PyG QM9 node features (13 wide). BINDINGDB_STYLE is the
mol2vec-derived 70-wide layout, kept slot-for-slot, including its duplicated
'Ti' entry (the second one can never fire).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .mol_graph import Hybridization, MolecularGraph
from .sdf_io import BondOrder

__all__ = [
    "SchemeName",
    "FeatureScheme",
    "FeatureMatrix",
    "UnknownElement",
    "QM9_STYLE",
    "BINDINGDB_STYLE",
    "get_scheme",
    "atom_features",
    "bond_features",
    "featurize_molecule",
    "is_conjugated",
]


class UnknownElement(ValueError):
    pass


class SchemeName(enum.Enum):
    QM9_STYLE = "qm9"
    BINDINGDB_STYLE = "bindingdb"


@dataclass(frozen=True)
class FeatureScheme:
    name: SchemeName
    atom_dim: int
    bond_dim: int
    atom_vocab: tuple[str, ...]
    layout: tuple[tuple[str, int, int], ...]  # (segment, offset, width)

    def segment(self, name: str) -> slice:
        for seg, off, width in self.layout:
            if seg == name:
                return slice(off, off + width)
        raise KeyError(name)


def _layout(*segments):
    out, off = [], 0
    for name, width in segments:
        out.append((name, off, width))
        off += width
    return tuple(out), off


_QM9_VOCAB = ("H", "C", "N", "O", "F")
_BINDINGDB_VOCAB = (
    "C", "N", "O", "S", "F", "Si", "P", "Cl", "Br", "Mg", "Na", "Ca", "Fe", "As", "Al",
    "I", "B", "V", "K", "Ti", "Yb", "Sb", "Sn", "Ag", "Pd", "Co", "Se", "Ti", "Zn", "H",
    "Li", "Ge", "Cu", "Au", "Ni", "Cd", "In", "Mn", "Zr", "Cr", "Pt", "Hg", "Pb", "unknown",
)  # fmt: skip
_ATOMIC_NUMBER = {"H": 1, "C": 6, "N": 7, "O": 8, "F": 9}

_qm9_layout, _qm9_dim = _layout(
    ("atom_type", 5), ("hybridization", 3), ("aromatic", 1), ("atomic_number", 1),
    ("num_h", 1), ("donor", 1), ("acceptor", 1),
)  # fmt: skip
_bdb_layout, _bdb_dim = _layout(
    ("atom_type", 44), ("degree", 11), ("implicit_valence", 7), ("formal_charge", 1),
    ("radical_electrons", 1), ("hybridization", 5), ("aromatic", 1),
)  # fmt: skip

QM9_STYLE = FeatureScheme(SchemeName.QM9_STYLE, _qm9_dim, 4, _QM9_VOCAB, _qm9_layout)
BINDINGDB_STYLE = FeatureScheme(SchemeName.BINDINGDB_STYLE, _bdb_dim, 6, _BINDINGDB_VOCAB, _bdb_layout)

_SCHEMES = {s.name: s for s in (QM9_STYLE, BINDINGDB_STYLE)}


def get_scheme(name) -> FeatureScheme:
    """Accepts a FeatureScheme, SchemeName, or its string value ('qm9', 'bindingdb')."""
    if isinstance(name, FeatureScheme):
        return name
    if isinstance(name, str):
        name = SchemeName(name.lower())
    return _SCHEMES[name]


_BOND_SLOT = {BondOrder.SINGLE: 0, BondOrder.DOUBLE: 1, BondOrder.TRIPLE: 2, BondOrder.AROMATIC: 3}
_HYB3 = (Hybridization.SP, Hybridization.SP2, Hybridization.SP3)
_HYB5 = _HYB3 + (Hybridization.SP3D, Hybridization.SP3D2)


@dataclass
class FeatureMatrix:
    X: np.ndarray  # n_atoms x atom_dim
    E: np.ndarray  # n_bonds x bond_dim
    edge_index: np.ndarray  # 2 x n_bonds, bond endpoints in file order
    scheme: FeatureScheme


def _one_hot(index, width):
    v = [0.0] * width
    if index is not None:
        v[index] = 1.0
    return v


def _donor(g: MolecularGraph, v: int) -> bool:
    return g.elements[v] in ("N", "O") and g.h_count[v] >= 1


def _acceptor(g: MolecularGraph, v: int) -> bool:
    return g.elements[v] in ("N", "O") and g.charges[v] <= 0


def atom_features(g: MolecularGraph, atom: int, scheme=QM9_STYLE) -> np.ndarray:
    scheme = get_scheme(scheme)
    el = g.elements[atom]
    hyb = g.hybridization[atom]
    if scheme.name is SchemeName.QM9_STYLE:
        if el not in _QM9_VOCAB:
            raise UnknownElement(f"element {el!r} outside the QM9 vocabulary {_QM9_VOCAB}")
        feats = _one_hot(_QM9_VOCAB.index(el), 5)
        feats += _one_hot(_HYB3.index(hyb) if hyb in _HYB3 else None, 3)
        feats += [
            float(g.aromatic_atoms[atom]),
            float(_ATOMIC_NUMBER[el]),
            float(g.h_count[atom]),
            float(_donor(g, atom)),
            float(_acceptor(g, atom)),
        ]
    else:
        slot = _BINDINGDB_VOCAB.index(el) if el in _BINDINGDB_VOCAB else len(_BINDINGDB_VOCAB) - 1
        feats = _one_hot(slot, 44)
        feats += _one_hot(min(g.degree[atom], 10), 11)
        feats += _one_hot(min(g.implicit_valence[atom], 6), 7)
        feats += [float(g.charges[atom]), 0.0]
        feats += _one_hot(_HYB5.index(hyb) if hyb in _HYB5 else None, 5)
        feats += [float(g.aromatic_atoms[atom])]
    return np.asarray(feats, dtype=np.float64)


def _has_multiple(g: MolecularGraph, v: int, exclude: int) -> bool:
    for w in g.neighbors[v]:
        if w == exclude:
            continue
        if g.order(v, w) in (BondOrder.DOUBLE, BondOrder.TRIPLE, BondOrder.AROMATIC) or g.is_aromatic_bond(v, w):
            return True
    return False


def is_conjugated(g: MolecularGraph, bond: int) -> bool:
    b = g.bonds[bond]
    if g.aromatic_bonds[bond]:
        return True
    if b.order is BondOrder.SINGLE:
        return _has_multiple(g, b.a, b.b) and _has_multiple(g, b.b, b.a)
    if b.order in (BondOrder.DOUBLE, BondOrder.TRIPLE):
        return _has_multiple(g, b.a, b.b) or _has_multiple(g, b.b, b.a) or _next_to_multiple(g, b)
    return False


def _next_to_multiple(g: MolecularGraph, b) -> bool:
    # double bond one single bond away from another multiple bond (C=C-C=C)
    for end, other in ((b.a, b.b), (b.b, b.a)):
        for w in g.neighbors[end]:
            if w == other or g.order(end, w) is not BondOrder.SINGLE:
                continue
            if _has_multiple(g, w, end):
                return True
    return False


def bond_features(g: MolecularGraph, bond: int, scheme=QM9_STYLE) -> np.ndarray:
    scheme = get_scheme(scheme)
    b = g.bonds[bond]
    slot = 3 if g.aromatic_bonds[bond] else _BOND_SLOT[b.order]
    feats = _one_hot(slot, 4)
    if scheme.name is SchemeName.BINDINGDB_STYLE:
        feats += [float(is_conjugated(g, bond)), float(g.ring_bonds[bond])]
    return np.asarray(feats, dtype=np.float64)


def featurize_molecule(g: MolecularGraph, scheme=QM9_STYLE) -> FeatureMatrix:
    scheme = get_scheme(scheme)
    X = np.zeros((g.n, scheme.atom_dim))
    for v in range(g.n):
        X[v] = atom_features(g, v, scheme)
    E = np.zeros((len(g.bonds), scheme.bond_dim))
    for i in range(len(g.bonds)):
        E[i] = bond_features(g, i, scheme)
    edge_index = np.array([[b.a for b in g.bonds], [b.b for b in g.bonds]], dtype=np.int64).reshape(2, -1)
    return FeatureMatrix(X=X, E=E, edge_index=edge_index, scheme=scheme)
