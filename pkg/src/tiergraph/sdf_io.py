"""SDF / MOL V2000 reading and writing, plus the regression-target sidecar.

Only the parts of the CTFile format needed for small organic molecules are
handled: counts line, atom block, bond block, ``M  CHG`` lines and data items.
Hydrogens are taken exactly as written; nothing is added or removed.
"""

from __future__ import annotations

import csv
import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "Molecule",
    "TargetTable",
    "Keying",
    "SDFError",
    "MalformedCountsLine",
    "AtomIndexOutOfRange",
    "UnsupportedVersion",
    "TruncatedBlock",
    "TargetTableError",
    "MissingColumn",
    "NonNumericValue",
    "DuplicateKey",
    "RecordError",
    "parse_sdf_record",
    "serialize_record",
    "split_records",
    "iterate_sdf",
    "read_sdf",
    "load_targets",
    "molecule_key",
    "TARGET_NAMES",
    "TARGET_SYMBOLS",
    "TARGET_UNITS",
]


class SDFError(ValueError):
    """Base class for MOL block parse failures."""


class MalformedCountsLine(SDFError):
    pass


class AtomIndexOutOfRange(SDFError):
    pass


class UnsupportedVersion(SDFError):
    pass


class TruncatedBlock(SDFError):
    pass


class TargetTableError(ValueError):
    pass


class MissingColumn(TargetTableError):
    pass


class NonNumericValue(TargetTableError):
    pass


class DuplicateKey(TargetTableError):
    pass


class BondOrder(enum.IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence_contribution(self) -> float:
        return 1.5 if self is BondOrder.AROMATIC else float(self.value)


@dataclass(frozen=True)
class Atom:
    element: str
    formal_charge: int = 0
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.element:
            raise ValueError("atom element must be a non-empty symbol")
        if not -15 <= self.formal_charge <= 15:
            raise ValueError(f"formal charge {self.formal_charge} out of range")


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError(f"self-bond on atom {self.a}")

    @property
    def pair(self) -> frozenset[int]:
        return frozenset((self.a, self.b))


@dataclass
class Molecule:
    atoms: list[Atom]
    bonds: list[Bond]
    props: dict[str, str] = field(default_factory=dict)
    title: str = ""

    def __post_init__(self):
        n = len(self.atoms)
        seen = set()
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise AtomIndexOutOfRange(
                    f"bond {bond.a + 1}-{bond.b + 1} references atom beyond {n}"
                )
            if bond.pair in seen:
                raise SDFError(f"duplicate bond {bond.a + 1}-{bond.b + 1}")
            seen.add(bond.pair)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def elements(self) -> list[str]:
        return [a.element for a in self.atoms]

    @property
    def cid(self) -> str | None:
        for name in ("PUBCHEM_COMPOUND_CID", "PubChem CID"):
            if name in self.props:
                return self.props[name].strip()
        return None


# CTFile legacy charge column codes
_LEGACY_CHARGE = {0: 0, 1: 3, 2: 2, 3: 1, 4: 0, 5: -1, 6: -2, 7: -3}
_DATA_HEADER = re.compile(r"^>.*?<([^>]*)>")


def _int_field(line: str, start: int, stop: int, what: str, err=TruncatedBlock) -> int:
    chunk = line[start:stop].strip()
    try:
        return int(chunk)
    except ValueError:
        raise err(f"bad {what} field {chunk!r} in line {line!r}") from None


def _is_counts(line: str) -> bool:
    return "V2000" in line or "V3000" in line


def parse_sdf_record(text: str) -> Molecule:
    """Parse one MOL block (optionally followed by SD data items)."""
    lines = text.splitlines()
    # some writers leave a blank line after "$$$$"
    while len(lines) > 4 and not lines[0].strip() and not _is_counts(lines[3]) and _is_counts(lines[4]):
        lines.pop(0)
    if len(lines) < 4:
        raise TruncatedBlock("MOL block shorter than header + counts line")
    title = lines[0].rstrip()
    counts = lines[3]
    if "V3000" in counts:
        raise UnsupportedVersion("V3000 connection tables are not supported")
    if len(counts) < 6:
        raise MalformedCountsLine(f"counts line too short: {counts!r}")
    n_atoms = _int_field(counts, 0, 3, "atom count", MalformedCountsLine)
    n_bonds = _int_field(counts, 3, 6, "bond count", MalformedCountsLine)
    version = counts[33:39].strip() if len(counts) > 33 else ""
    if version and version != "V2000":
        raise UnsupportedVersion(f"unsupported CTFile version {version!r}")
    if n_atoms < 0 or n_bonds < 0:
        raise MalformedCountsLine(f"negative counts in {counts!r}")

    body = lines[4:]
    if len(body) < n_atoms + n_bonds:
        raise TruncatedBlock(
            f"expected {n_atoms} atom and {n_bonds} bond lines, got {len(body)} lines"
        )

    atoms = []
    for line in body[:n_atoms]:
        if len(line) < 34:
            raise TruncatedBlock(f"atom line too short: {line!r}")
        try:
            pos = (float(line[0:10]), float(line[10:20]), float(line[20:30]))
        except ValueError:
            raise TruncatedBlock(f"bad coordinates in atom line {line!r}") from None
        element = line[31:34].strip()
        legacy = 0
        if len(line) >= 39 and line[36:39].strip():
            legacy = _LEGACY_CHARGE.get(_int_field(line, 36, 39, "charge"), 0)
        atoms.append(Atom(element, legacy, pos))

    bonds = []
    for line in body[n_atoms : n_atoms + n_bonds]:
        if len(line) < 9:
            raise TruncatedBlock(f"bond line too short: {line!r}")
        a = _int_field(line, 0, 3, "bond atom")
        b = _int_field(line, 3, 6, "bond atom")
        order = _int_field(line, 6, 9, "bond order")
        if not (1 <= a <= n_atoms and 1 <= b <= n_atoms):
            raise AtomIndexOutOfRange(
                f"bond {a}-{b} references atom outside 1..{n_atoms}"
            )
        if order not in (1, 2, 3, 4):
            raise SDFError(f"unsupported bond order {order} in {line!r}")
        bonds.append(Bond(a - 1, b - 1, BondOrder(order)))

    rest = body[n_atoms + n_bonds :]
    charges: dict[int, int] | None = None
    i = 0
    while i < len(rest):
        line = rest[i]
        if line.startswith("M  END"):
            i += 1
            break
        if line.startswith("M  CHG"):
            if charges is None:
                charges = {}
            fields = line[6:].split()
            count = int(fields[0])
            if len(fields) < 1 + 2 * count:
                raise TruncatedBlock(f"short M  CHG line {line!r}")
            for k in range(count):
                idx, chg = int(fields[1 + 2 * k]), int(fields[2 + 2 * k])
                if not 1 <= idx <= n_atoms:
                    raise AtomIndexOutOfRange(f"M  CHG references atom {idx}")
                charges[idx - 1] = chg
        elif line.startswith(">") or line.startswith("$$$$"):
            break
        i += 1

    if charges is not None:
        # an M  CHG block replaces every legacy-column charge
        atoms = [
            Atom(a.element, charges.get(k, 0), a.position) for k, a in enumerate(atoms)
        ]

    props = _parse_data_items(rest[i:])
    return Molecule(atoms=atoms, bonds=bonds, props=props, title=title)


def _parse_data_items(lines: list[str]) -> dict[str, str]:
    props: dict[str, str] = {}
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("$$$$"):
            break
        m = _DATA_HEADER.match(line)
        if not m:
            i += 1
            continue
        name = m.group(1)
        i += 1
        value = []
        while i < len(lines) and lines[i].strip() != "" and not lines[i].startswith("$$$$"):
            value.append(lines[i])
            i += 1
        props[name] = "\n".join(value)
    return props


def serialize_record(mol: Molecule) -> str:
    """Write a Molecule back out as a V2000 SD record (with ``$$$$``)."""
    out = [mol.title, "  tiergraph", ""]
    out.append(f"{len(mol.atoms):3d}{len(mol.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
    for atom in mol.atoms:
        x, y, z = atom.position
        out.append(
            f"{x:10.4f}{y:10.4f}{z:10.4f} {atom.element:<3} 0  0  0  0  0  0  0  0  0  0  0  0"
        )
    for bond in mol.bonds:
        out.append(f"{bond.a + 1:3d}{bond.b + 1:3d}{int(bond.order):3d}  0  0  0  0")
    charged = [(k + 1, a.formal_charge) for k, a in enumerate(mol.atoms) if a.formal_charge]
    for start in range(0, len(charged), 8):
        chunk = charged[start : start + 8]
        out.append(f"M  CHG{len(chunk):3d}" + "".join(f" {i:3d} {c:3d}" for i, c in chunk))
    out.append("M  END")
    for name, value in mol.props.items():
        out += [f"> <{name}>", value, ""]
    out.append("$$$$")
    return "\n".join(out) + "\n"


def split_records(text: str) -> list[str]:
    """Split SD text on ``$$$$`` lines; trailing whitespace is not a record."""
    records, current = [], []
    for line in text.splitlines():
        if line.startswith("$$$$"):
            records.append("\n".join(current))
            current = []
        else:
            current.append(line)
    if any(line.strip() for line in current):
        records.append("\n".join(current))
    return records


@dataclass
class RecordError:
    """Stream item standing in for a record that failed to parse."""

    record_index: int
    error: Exception

    @property
    def message(self) -> str:
        return f"{type(self.error).__name__}: {self.error}"


def iterate_sdf(path: Union[str, Path]) -> Iterator[tuple[int, Union[Molecule, RecordError]]]:
    """Yield ``(record_index, Molecule | RecordError)`` in file order.

    A bad record becomes a :class:`RecordError` item instead of stopping the
    stream. Missing or unreadable files raise ``OSError`` up front.
    """
    text = Path(path).read_text()
    for index, record in enumerate(split_records(text)):
        try:
            yield index, parse_sdf_record(record)
        except (SDFError, ValueError) as exc:
            yield index, RecordError(index, exc)


def read_sdf(path: Union[str, Path]) -> list[Molecule]:
    """Strict reader: first bad record raises."""
    mols = []
    for _, item in iterate_sdf(path):
        if isinstance(item, RecordError):
            raise item.error
        mols.append(item)
    return mols


# --- regression targets -----------------------------------------------------

TARGET_NAMES = ("mu", "alpha", "homo", "lumo", "gap", "r2", "zpve", "u0", "u298", "h298", "g298", "cv")
TARGET_SYMBOLS = ("μ", "α", "HOMO", "LUMO", "gap", "R²", "ZPVE", "U₀", "U", "H", "G", "C_v")
TARGET_UNITS = (
    "Debye",
    "Bohr³",
    "Hartree",
    "Hartree",
    "Hartree",
    "Bohr²",
    "Hartree",
    "Hartree",
    "Hartree",
    "Hartree",
    "Hartree",
    "cal/(mol·K)",
)
_KEY_COLUMNS = ("key", "mol_id", "cid", "index", "id")


class Keying(enum.Enum):
    BY_INDEX = "index"
    BY_CID = "cid"


@dataclass
class TargetTable:
    rows: dict[Union[int, str], list[float]]
    names: tuple[str, ...] = TARGET_NAMES
    units: tuple[str, ...] = TARGET_UNITS

    def __post_init__(self):
        for key, row in self.rows.items():
            if len(row) != len(self.names):
                raise TargetTableError(f"row {key!r} has {len(row)} values, expected {len(self.names)}")

    def index_of(self, name: str) -> int:
        return self.names.index(name)


def load_targets(
    path: Union[str, Path],
    keying: Keying = Keying.BY_CID,
    names: Optional[Sequence[str]] = TARGET_NAMES,
) -> TargetTable:
    """Read a comma- or tab-delimited table with a key column and target columns.

    ``names`` lists the required target columns (the 12 QM9 properties by
    default); ``None`` takes every non-key column in header order.

    With ``BY_INDEX`` the key is the 0-based data-row ordinal (matching SDF
    record order); with ``BY_CID`` it is the key column's string value.
    Extra columns are ignored. No unit conversion is applied.
    """
    text = Path(path).read_text()
    dialect = "excel-tab" if "\t" in text.splitlines()[0] else "excel"
    reader = csv.reader(text.splitlines(), dialect=dialect)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MissingColumn("empty target table") from None
    lowered = [h.lower() for h in header]
    key_col = next((lowered.index(k) for k in _KEY_COLUMNS if k in lowered), None)
    if key_col is None:
        raise MissingColumn(f"no key column (one of {_KEY_COLUMNS}) in header")
    if names is None:
        names = [h for i, h in enumerate(lowered) if i != key_col]
    names = [n.lower() for n in names]
    cols = []
    for name in names:
        if name not in lowered:
            raise MissingColumn(f"missing target column {name!r}")
        cols.append(lowered.index(name))

    rows: dict[Union[int, str], list[float]] = {}
    for ordinal, record in enumerate(r for r in reader if r):
        key: Union[int, str] = ordinal if keying is Keying.BY_INDEX else record[key_col].strip()
        if key in rows:
            raise DuplicateKey(f"duplicate key {key!r}")
        values = []
        for c in cols:
            try:
                values.append(float(record[c]))
            except (ValueError, IndexError):
                raise NonNumericValue(
                    f"row {ordinal}: non-numeric value for {header[c]!r}"
                ) from None
        rows[key] = values
    if tuple(names) == TARGET_NAMES:
        return TargetTable(rows)
    units = tuple(TARGET_UNITS[TARGET_NAMES.index(n)] if n in TARGET_NAMES else "" for n in names)
    return TargetTable(rows, names=tuple(names), units=units)


def molecule_key(index: int, mol: Molecule, keying: Keying = Keying.BY_CID) -> Union[int, str]:
    """Key used to join molecules with targets and embeddings."""
    if keying is Keying.BY_INDEX:
        return index
    cid = mol.cid
    return cid if cid is not None else str(index)
