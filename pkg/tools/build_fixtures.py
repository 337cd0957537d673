"""Regenerate ``tests/data/fixtures.sdf`` from hand-written connection tables.

Heavy atoms are listed in the atom order used by the reference group table
(ALATIS numbering, shifted to 0-based); hydrogens follow, attached in
heavy-atom order. RDKit is only used here, for 2D coordinates and a valence
sanity check; the package itself never imports it.

    python tools/build_fixtures.py
"""

from pathlib import Path

from rdkit import Chem
from rdkit.Chem import AllChem

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "fixtures.sdf"

VALENCE = {"C": 4, "N": 3, "O": 2, "S": 2}


def ring(atoms, orders):
    """Bonds closing the cycle ``atoms`` with the given orders (same length)."""
    return [(a, b, o) for a, b, o in zip(atoms, atoms[1:] + atoms[:1], orders)]


# name, cid, heavy atoms (index order), heavy-atom bonds (a, b, order)
MOLECULES = [
    ("formaldehyde", 712, "C O", [(0, 1, 2)]),
    ("cyanogen", 9999, "C C N N", [(0, 1, 1), (0, 2, 3), (1, 3, 3)]),
    ("methane", 297, "C", []),
    ("carbonic acid", 767, "C O O O", [(0, 1, 2), (0, 2, 1), (0, 3, 1)]),
    ("acetaldehyde", 177, "C C O", [(0, 1, 1), (1, 2, 2)]),
    ("ethanol", 702, "C C O", [(0, 1, 1), (1, 2, 1)]),
    ("benzene", 11309472, "C C C C C C", ring([0, 2, 4, 5, 3, 1], [2, 1, 2, 1, 2, 1])),
    ("methoxyethane", 10903, "C C C O", [(0, 3, 1), (3, 1, 1), (1, 2, 1)]),
    (
        "methoxybenzene",
        7519,
        "C C C C C C C O",
        ring([1, 3, 5, 6, 4, 2], [2, 1, 2, 1, 2, 1]) + [(0, 7, 1), (7, 1, 1)],
    ),
    (
        "vanillin",
        1183,
        "C C C C C C C C O O O",
        ring([1, 5, 3, 7, 6, 2], [2, 1, 2, 1, 2, 1])
        + [(3, 4, 1), (4, 8, 2), (6, 9, 1), (9, 0, 1), (2, 10, 1)],
    ),
    (
        "mesitylene",
        7947,
        "C C C C C C C C C",
        ring([3, 7, 5, 8, 4, 6], [2, 1, 2, 1, 2, 1]) + [(0, 3, 1), (1, 4, 1), (2, 5, 1)],
    ),
    (
        "657862",
        657862,
        "C C C C C C C C C C C C N N O O S S",
        [(3, 11, 1), (11, 16, 1), (16, 4, 1), (4, 6, 1), (5, 3, 1)]
        + [(17, 6, 1), (6, 5, 2), (5, 7, 1), (7, 9, 2), (9, 17, 1)]
        + [(8, 12, 2), (12, 10, 1), (10, 13, 2), (13, 9, 1), (7, 8, 1)]
        + [(11, 0, 1), (11, 1, 1), (8, 14, 1), (10, 15, 1), (15, 2, 1)],
    ),
    (
        "652912",
        652912,
        "C C C C C C C C C C C C C C N O O O",
        [(1, 3, 2), (3, 7, 1), (7, 9, 1), (9, 4, 1), (4, 1, 1)]
        + ring([2, 5, 8, 11, 10, 6], [1, 2, 1, 2, 1, 2])
        + [(12, 14, 1), (14, 11, 1), (8, 7, 1), (9, 12, 1)]
        + [(12, 13, 1), (13, 15, 2), (13, 16, 1), (6, 17, 1), (17, 0, 1)],
    ),
    (
        "649963",
        649963,
        "C C C C C C C C C C C C C C C N N N O",
        ring([1, 2, 6, 17, 5], [1, 1, 1, 1, 1])
        + ring([3, 12, 8, 10, 13, 4], [2, 1, 2, 1, 2, 1])
        + [(7, 11, 2), (11, 14, 1), (14, 16, 2), (16, 13, 1), (10, 7, 1)]
        + [(14, 17, 1), (11, 9, 1), (9, 15, 3), (12, 18, 1), (18, 0, 1)],
    ),
    (
        "656318",
        656318,
        "C " * 22 + "N N N N O O O O S",
        ring([0, 2, 8, 15, 7, 1], [2, 1, 2, 1, 2, 1])
        + ring([3, 9, 18, 24, 10, 4], [2, 1, 1, 1, 2, 1])
        + [(21, 24, 1), (18, 23, 2), (23, 20, 1), (20, 16, 2), (16, 21, 1)]
        + [(12, 17, 2), (17, 19, 1), (19, 25, 1), (25, 20, 1), (16, 12, 1)]
        + ring([5, 11, 29, 14, 6], [2, 1, 1, 2, 1])
        + [(21, 26, 2), (19, 22, 2), (25, 13, 1), (13, 14, 1)]
        + [(17, 30, 1), (30, 27, 2), (30, 28, 2), (30, 0, 1)],
    ),
    (
        "644735",
        644735,
        "C " * 25 + "N N N N N O O O",
        ring([1, 5, 20, 28, 10, 2], [2, 1, 1, 1, 2, 1])
        + [(24, 28, 1), (20, 27, 2), (27, 22, 1), (22, 19, 2), (19, 24, 1)]
        + [(12, 19, 1), (22, 29, 1), (29, 21, 1), (21, 18, 1), (18, 12, 2)]
        + ring([3, 11, 32, 17, 4], [2, 1, 1, 2, 1])
        + ring([6, 15, 7, 9, 16, 8], [2, 1, 2, 1, 2, 1])
        + [(24, 31, 2), (21, 25, 2), (5, 0, 1)]
        + [(18, 23, 1), (23, 30, 2), (23, 26, 1), (26, 13, 1), (13, 11, 1)]
        + [(29, 14, 1), (14, 6, 1)],
    ),
    (
        "657445",
        657445,
        "C " * 25 + "N N N N N N",
        ring([0, 3, 7, 18, 6, 2], [2, 1, 2, 1, 2, 1])
        + ring([1, 5, 9, 19, 8, 4], [2, 1, 2, 1, 2, 1])
        + [(10, 13, 1), (13, 30, 1), (30, 17, 1), (17, 22, 1), (20, 10, 1)]
        + ring([21, 23, 29, 24, 22, 20], [1, 2, 1, 2, 1, 2])
        + [(21, 14, 1), (14, 26, 3)]
        + [(23, 25, 1), (25, 12, 1), (12, 1, 1)]
        + [(24, 27, 1), (27, 15, 1), (15, 16, 1), (16, 28, 1)]
        + [(30, 11, 1), (11, 0, 1)],
    ),
]


def build(name, cid, heavy, bonds):
    symbols = heavy.split()
    used = [0] * len(symbols)
    for a, b, order in bonds:
        used[a] += order
        used[b] += order
    hydrogens = []
    for i, sym in enumerate(symbols):
        if sym == "S" and used[i] > 2:
            continue
        hydrogens += [i] * (VALENCE[sym] - used[i])
    all_bonds = list(bonds)
    for k, parent in enumerate(hydrogens):
        all_bonds.append((parent, len(symbols) + k, 1))
    symbols = symbols + ["H"] * len(hydrogens)

    rw = Chem.RWMol()
    for sym in symbols:
        atom = Chem.Atom(sym)
        atom.SetNoImplicit(True)
        rw.AddAtom(atom)
    kinds = {1: Chem.BondType.SINGLE, 2: Chem.BondType.DOUBLE, 3: Chem.BondType.TRIPLE}
    for a, b, order in all_bonds:
        rw.AddBond(a, b, kinds[order])
    mol = rw.GetMol()
    Chem.SanitizeMol(mol)
    AllChem.Compute2DCoords(mol)
    conf = mol.GetConformer()

    lines = [name, "  tiergraph fixture", ""]
    lines.append(f"{len(symbols):3d}{len(all_bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
    for i, sym in enumerate(symbols):
        p = conf.GetAtomPosition(i)
        lines.append(f"{p.x:10.4f}{p.y:10.4f}{0.0:10.4f} {sym:<3} 0  0  0  0  0  0  0  0  0  0  0  0")
    for a, b, order in all_bonds:
        lines.append(f"{a + 1:3d}{b + 1:3d}{order:3d}  0  0  0  0")
    lines.append("M  END")
    lines += ["> <PUBCHEM_COMPOUND_CID>", str(cid), ""]
    lines += ["> <NAME>", name, ""]
    lines.append("$$$$")
    return "\n".join(lines) + "\n"


def main():
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("".join(build(*m) for m in MOLECULES))
    print(f"wrote {len(MOLECULES)} records to {OUT}")


if __name__ == "__main__":
    main()
