"""Shared builders for tests: fixture access, tiny molecules, derived datasets."""

from __future__ import annotations

from pathlib import Path

from tiergraph.sdf_io import Atom, Bond, BondOrder, Molecule, read_sdf

DATA = Path(__file__).parent / "data"
FIXTURES = DATA / "fixtures.sdf"

S, D, T, A = BondOrder.SINGLE, BondOrder.DOUBLE, BondOrder.TRIPLE, BondOrder.AROMATIC

_cache: dict[str, list[Molecule]] = {}


def fixtures() -> list[Molecule]:
    if "fixtures" not in _cache:
        _cache["fixtures"] = read_sdf(FIXTURES)
    return _cache["fixtures"]


def fixture(cid: str) -> Molecule:
    for m in fixtures():
        if m.cid == cid:
            return m
    raise KeyError(cid)


def molecule(elements, bonds, cid=None, title="") -> Molecule:
    """Build a Molecule from element symbols and (a, b, order) triples."""
    props = {"PUBCHEM_COMPOUND_CID": cid} if cid else {}
    return Molecule(
        atoms=[Atom(e) for e in elements],
        bonds=[Bond(a, b, o) for a, b, o in bonds],
        props=props,
        title=title,
    )


def combine(a: Molecule, b: Molecule, key: str) -> Molecule:
    """Disjoint union: b's atoms follow a's."""
    off = a.n_atoms
    bonds = list(a.bonds) + [Bond(x.a + off, x.b + off, x.order) for x in b.bonds]
    return Molecule(atoms=list(a.atoms) + list(b.atoms), bonds=bonds, props={"PUBCHEM_COMPOUND_CID": key}, title=key)


def derived_32() -> list[Molecule]:
    """The 17 fixtures plus 15 disconnected neighbour pairs: 32 distinct molecules."""
    mols = fixtures()
    pairs = [combine(mols[i], mols[i + 1], f"pair{i}+{i + 1}") for i in range(15)]
    return list(mols) + pairs


def benzene_aromatic() -> Molecule:
    bonds = [(i, (i + 1) % 6, A) for i in range(6)] + [(i, i + 6, S) for i in range(6)]
    return molecule(["C"] * 6 + ["H"] * 6, bonds)


def benzene_kekule() -> Molecule:
    bonds = [(i, (i + 1) % 6, D if i % 2 == 0 else S) for i in range(6)] + [(i, i + 6, S) for i in range(6)]
    return molecule(["C"] * 6 + ["H"] * 6, bonds)


def cyclohexane() -> Molecule:
    el = ["C"] * 6 + ["H"] * 12
    bonds = [(i, (i + 1) % 6, S) for i in range(6)]
    bonds += [(i, 6 + 2 * i, S) for i in range(6)] + [(i, 7 + 2 * i, S) for i in range(6)]
    return molecule(el, bonds)


def permute(m: Molecule, perm) -> Molecule:
    """Relabel atoms so that old atom ``i`` becomes new atom ``perm[i]``."""
    atoms = [None] * m.n_atoms
    for old, new in enumerate(perm):
        atoms[new] = m.atoms[old]
    bonds = [Bond(perm[b.a], perm[b.b], b.order) for b in m.bonds]
    return Molecule(atoms=atoms, bonds=bonds, props=dict(m.props), title=m.title)
