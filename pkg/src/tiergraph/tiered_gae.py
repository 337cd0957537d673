"""Tiered graph autoencoder: atom tier -> group tier -> graph embedding.

Tier 1 runs a GCN over the atom graph to get node embeddings Z1. Groups are
pooled by membership (X2 = M1^T Z1), coarsened into a group graph, and a
second GCN gives group embeddings Z2. The graph embedding is the weighted
pool X3 = M2^T Z2. Both GCN tiers are trained jointly to reconstruct their
own adjacency through an inner-product decoder.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import numeric as nm
from .featurize import FeatureMatrix, FeatureScheme, featurize_molecule, get_scheme
from .grouping import (
    DEFAULT_WEIGHTS,
    EmptyDataset,
    GroupKind,
    GroupSet,
    GroupWeightConfig,
    build_group_set,
    build_membership,
)
from .mol_graph import MolecularGraph, build_graph
from .sdf_io import Molecule

__all__ = [
    "TierConfig",
    "CoarseGraph",
    "PreparedMolecule",
    "GAEParams",
    "TieredEmbeddings",
    "SchemeMismatch",
    "FormatError",
    "gcn_norm",
    "gcn_layer",
    "diff_group_pool",
    "coarsen_adjacency",
    "inner_product_decode",
    "prepare_molecule",
    "init_params",
    "encode",
    "molecule_loss",
    "reconstruction_bce",
    "train_tiered_gae",
    "embed_molecule",
    "embed_dataset",
    "pool_graph_embedding",
    "format_weights",
    "write_embeddings",
    "read_embeddings",
    "write_params",
    "read_params",
    "params_text",
    "params_hash",
]


class SchemeMismatch(ValueError):
    pass


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class TierConfig:
    hidden_dim: int = 32
    embed_dim: int = 16
    gcn_layers: int = 2
    lr: float = 1e-3
    epochs: int = 200
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if min(self.hidden_dim, self.embed_dim, self.gcn_layers, self.batch_size) < 1:
            raise ValueError("TierConfig dimensions must be >= 1")


@dataclass
class CoarseGraph:
    A2: np.ndarray  # groups x groups, 0/1, zero diagonal
    E2: np.ndarray  # groups x groups x bond_dim


@dataclass
class PreparedMolecule:
    """Everything the encoder needs for one molecule, computed once."""

    key: str
    graph: MolecularGraph
    groups: GroupSet
    features: FeatureMatrix
    M1: np.ndarray
    A1: np.ndarray
    A1_norm: np.ndarray
    coarse: CoarseGraph
    A2_norm: np.ndarray

    @property
    def kinds(self) -> list[GroupKind]:
        return self.groups.kinds

    @property
    def scheme(self) -> FeatureScheme:
        return self.features.scheme

    @property
    def n_groups(self) -> int:
        return self.M1.shape[1]


def gcn_norm(A: np.ndarray) -> np.ndarray:
    """Symmetric normalisation D^-1/2 (A + I) D^-1/2 with D the degree of A + I."""
    A_hat = A + np.eye(A.shape[0])
    d = A_hat.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return A_hat * inv_sqrt[:, None] * inv_sqrt[None, :]


def gcn_layer(H: nm.Tensor, A_norm, W: nm.Tensor, activation: bool = True) -> nm.Tensor:
    A_t = A_norm if isinstance(A_norm, nm.Tensor) else nm.constant(A_norm)
    if A_t.rows != H.rows or A_t.cols != H.rows:
        raise nm.ShapeMismatch(f"gcn_layer: adjacency {A_t.shape} vs features {H.shape}")
    out = nm.matmul(nm.matmul(A_t, H), W)
    return nm.relu(out) if activation else out


def diff_group_pool(Z: nm.Tensor, M) -> nm.Tensor:
    """Pool rows of ``Z`` by membership: returns M^T Z."""
    M_t = M if isinstance(M, nm.Tensor) else nm.constant(M)
    if M_t.rows != Z.rows:
        raise nm.ShapeMismatch(f"diff_group_pool: membership {M_t.shape} vs embeddings {Z.shape}")
    return nm.matmul(nm.transpose(M_t), Z)


def coarsen_adjacency(A1: np.ndarray, M1: np.ndarray, bond_pairs=None, bond_features=None) -> CoarseGraph:
    """Group graph: groups are adjacent if a bond joins them or they share an atom.

    ``E2[i, j]`` is the mean feature vector of bonds with one end in group i and
    the other in group j; zero when the groups touch only through shared atoms.
    """
    g = M1.shape[1]
    crossing = M1.T @ A1 @ M1
    overlap = M1.T @ M1
    A2 = ((crossing > 0) | (overlap > 0)).astype(np.float64)
    np.fill_diagonal(A2, 0.0)
    dim = 0 if bond_features is None else bond_features.shape[1]
    E2 = np.zeros((g, g, dim))
    if bond_pairs is not None and dim:
        sums = np.zeros_like(E2)
        counts = np.zeros((g, g))
        member = [np.flatnonzero(M1[v]) for v in range(M1.shape[0])]
        for (u, v), feat in zip(bond_pairs, bond_features):
            for i in member[u]:
                for j in member[v]:
                    if i == j:
                        continue
                    for a, b in ((i, j), (j, i)):
                        sums[a, b] += feat
                        counts[a, b] += 1
        mask = counts > 0
        E2[mask] = sums[mask] / counts[mask][:, None]
    return CoarseGraph(A2=A2, E2=E2)


def inner_product_decode(Z: nm.Tensor) -> nm.Tensor:
    return nm.sigmoid(nm.matmul(Z, nm.transpose(Z)))


def prepare_molecule(mol: Molecule, scheme="qm9", key: Optional[str] = None) -> PreparedMolecule:
    scheme = get_scheme(scheme)
    graph = build_graph(mol)
    groups = build_group_set(graph)
    feats = featurize_molecule(graph, scheme)
    M1 = build_membership(groups).M1
    A1 = graph.adjacency
    pairs = [(b.a, b.b) for b in mol.bonds]
    coarse = coarsen_adjacency(A1, M1, pairs, feats.E)
    if key is None:
        key = mol.cid or mol.title or "0"
    return PreparedMolecule(
        key=str(key),
        graph=graph,
        groups=groups,
        features=feats,
        M1=M1,
        A1=A1,
        A1_norm=gcn_norm(A1),
        coarse=coarse,
        A2_norm=gcn_norm(coarse.A2),
    )


@dataclass
class GAEParams:
    scheme: FeatureScheme
    config: TierConfig
    in_dim: int
    layers: dict[str, nm.Param] = field(default_factory=dict)

    def tier(self, t: int) -> list[nm.Param]:
        return [p for name, p in self.layers.items() if name.startswith(f"tier{t}.")]

    @property
    def params(self) -> list[nm.Param]:
        return list(self.layers.values())

    def copy(self) -> "GAEParams":
        return GAEParams(self.scheme, self.config, self.in_dim, {k: nm.Param(p.value, k) for k, p in self.layers.items()})


def _layer_dims(in_dim: int, config: TierConfig) -> list[tuple[int, int]]:
    dims = [in_dim] + [config.hidden_dim] * (config.gcn_layers - 1) + [config.embed_dim]
    return list(zip(dims, dims[1:]))


def init_params(scheme="qm9", config: TierConfig = TierConfig()) -> GAEParams:
    """Glorot-uniform weights for both tiers, drawn in a fixed order from ``config.seed``."""
    scheme = get_scheme(scheme)
    rng = np.random.default_rng(config.seed)
    layers = {}
    for tier, in_dim in ((1, scheme.atom_dim), (2, config.embed_dim)):
        for k, (fan_in, fan_out) in enumerate(_layer_dims(in_dim, config)):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            name = f"tier{tier}.gcn{k}"
            layers[name] = nm.Param(rng.uniform(-limit, limit, size=(fan_in, fan_out)), name)
    return GAEParams(scheme=scheme, config=config, in_dim=scheme.atom_dim, layers=layers)


def _run_gcn(H: nm.Tensor, A_norm: np.ndarray, weights: Sequence[nm.Param]) -> nm.Tensor:
    A_t = nm.constant(A_norm)
    for k, W in enumerate(weights):
        H = gcn_layer(H, A_t, W, activation=k < len(weights) - 1)
    return H


def encode(params: GAEParams, rec: PreparedMolecule) -> tuple[nm.Tensor, nm.Tensor, nm.Tensor]:
    """Forward pass: (Z1, X2, Z2) as taped tensors."""
    if rec.scheme.name is not params.scheme.name:
        raise SchemeMismatch(f"molecule featurised as {rec.scheme.name.value}, params trained on {params.scheme.name.value}")
    Z1 = _run_gcn(nm.constant(rec.features.X), rec.A1_norm, params.tier(1))
    X2 = diff_group_pool(Z1, rec.M1)
    Z2 = _run_gcn(X2, rec.A2_norm, params.tier(2))
    return Z1, X2, Z2


def _recon_target(A: np.ndarray) -> np.ndarray:
    return A + np.eye(A.shape[0])


def molecule_loss(params: GAEParams, rec: PreparedMolecule) -> nm.Tensor:
    """BCE(P1, A1 + I) + BCE(P2, A2 + I), each the mean over matrix entries."""
    Z1, _, Z2 = encode(params, rec)
    l1 = nm.bce_with_logits(nm.matmul(Z1, nm.transpose(Z1)), _recon_target(rec.A1))
    l2 = nm.bce_with_logits(nm.matmul(Z2, nm.transpose(Z2)), _recon_target(rec.coarse.A2))
    return nm.add(l1, l2)


def reconstruction_bce(params: GAEParams, rec: PreparedMolecule, tier: int = 1) -> float:
    Z1, _, Z2 = encode(params, rec)
    Z, A = (Z1, rec.A1) if tier == 1 else (Z2, rec.coarse.A2)
    return nm.bce(inner_product_decode(Z), _recon_target(A)).item()


def train_tiered_gae(
    dataset: Sequence[PreparedMolecule],
    scheme="qm9",
    config: TierConfig = TierConfig(),
    params: Optional[GAEParams] = None,
) -> tuple[GAEParams, list[float]]:
    """Adam over per-molecule losses accumulated across batches.

    Returns the trained parameters and the per-epoch mean molecule loss.
    """
    if not dataset:
        raise EmptyDataset("cannot train on an empty dataset")
    params = params.copy() if params is not None else init_params(scheme, config)
    for rec in dataset:
        if rec.scheme.name is not params.scheme.name:
            raise SchemeMismatch(f"molecule {rec.key} uses scheme {rec.scheme.name.value}")
    opt = nm.Adam(params.params, lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(len(dataset))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            opt.zero_grad()
            for idx in order[start : start + config.batch_size]:
                loss = molecule_loss(params, dataset[idx])
                epoch_loss += loss.item()
                nm.backward(loss)
            opt.step()
        trace.append(epoch_loss / len(dataset))
    return params, trace


@dataclass
class TieredEmbeddings:
    cid: str
    Z1: np.ndarray
    X2: Optional[np.ndarray]
    Z2: np.ndarray
    X3: np.ndarray
    kinds: list[GroupKind]


def pool_graph_embedding(Z2: np.ndarray, kinds: Sequence[GroupKind], weights: GroupWeightConfig = DEFAULT_WEIGHTS) -> np.ndarray:
    """X3 = M2^T Z2 for the given weights (1 x d)."""
    if weights.per_group is not None and len(weights.per_group) == len(kinds):
        w = np.asarray(weights.per_group, dtype=np.float64)
    else:
        w = np.array([weights.by_kind(k) for k in kinds], dtype=np.float64)
    return w.reshape(1, -1) @ Z2


def embed_molecule(params: GAEParams, rec: PreparedMolecule, weights: GroupWeightConfig = DEFAULT_WEIGHTS) -> TieredEmbeddings:
    Z1, X2, Z2 = encode(params, rec)
    M2 = build_membership(rec.groups, weights).M2
    X3 = diff_group_pool(Z2, M2)
    return TieredEmbeddings(
        cid=rec.key,
        Z1=Z1.numpy(),
        X2=X2.numpy(),
        Z2=Z2.numpy(),
        X3=X3.numpy(),
        kinds=list(rec.kinds),
    )


def embed_dataset(
    params: GAEParams,
    dataset: Iterable[PreparedMolecule],
    weights: GroupWeightConfig = DEFAULT_WEIGHTS,
    path: Union[str, Path, None] = None,
) -> list[TieredEmbeddings]:
    """Forward every molecule; optionally persist the result to ``path``."""
    out = [embed_molecule(params, rec, weights) for rec in dataset]
    if path is not None:
        write_embeddings(path, out, params.scheme, weights)
    return out


# --- persistence -------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def format_weights(weights: GroupWeightConfig) -> str:
    """Shortest round-tripping text, e.g. ``1,0.5,0.1``."""
    parts = []
    for w in weights.triple:
        text = repr(float(w))
        parts.append(text[:-2] if text.endswith(".0") else text)
    return ",".join(parts)


def _parse_header(line: str, magic: str) -> dict[str, str]:
    if not line.startswith(magic):
        raise FormatError(f"expected header starting with {magic!r}, got {line[:60]!r}")
    fields = {}
    for token in line[len(magic) :].split():
        if "=" in token:
            k, v = token.split("=", 1)
            fields[k] = v
    return fields


def write_embeddings(
    path,
    embeddings: Sequence[TieredEmbeddings],
    scheme,
    weights: GroupWeightConfig,
    tiers: Sequence[int] = (1, 2, 3),
    extra: Optional[dict[str, str]] = None,
) -> None:
    scheme = get_scheme(scheme)
    dim = embeddings[0].X3.shape[1] if embeddings else 0
    header = f"#tiergraph-embeddings v1 scheme={scheme.name.value} dim={dim} weights={format_weights(weights)}"
    for k, v in (extra or {}).items():
        header += f" {k}={v}"
    buf = io.StringIO()
    buf.write(header + "\n")
    for emb in embeddings:
        buf.write(f"#groups\t{emb.cid}\t{','.join(k.value for k in emb.kinds)}\n")
        for tier, mat in ((1, emb.Z1), (2, emb.Z2), (3, emb.X3)):
            if tier not in tiers:
                continue
            for r, row in enumerate(mat):
                buf.write(f"{emb.cid}\t{tier}\t{r}\t{' '.join(_fmt(v) for v in row)}\n")
    Path(path).write_text(buf.getvalue())


@dataclass
class EmbeddingFile:
    scheme: str
    dim: int
    weights: str
    header: dict[str, str]
    embeddings: list[TieredEmbeddings]

    def by_key(self) -> dict[str, TieredEmbeddings]:
        return {e.cid: e for e in self.embeddings}


def read_embeddings(path) -> EmbeddingFile:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty embedding file")
    header = _parse_header(lines[0], "#tiergraph-embeddings v1")
    for required in ("scheme", "dim", "weights"):
        if required not in header:
            raise FormatError(f"{path}: header lacks {required}=")
    dim = int(header["dim"])
    rows: dict[str, dict[int, dict[int, list[float]]]] = {}
    kinds: dict[str, list[GroupKind]] = {}
    order: list[str] = []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split("\t")
        if parts[0] == "#groups":
            kinds[parts[1]] = [GroupKind(k) for k in parts[2].split(",") if k]
            if parts[1] not in rows:
                order.append(parts[1])
                rows[parts[1]] = {}
            continue
        if line.startswith("#"):
            continue
        if len(parts) != 4:
            raise FormatError(f"{path}: malformed line {line[:60]!r}")
        cid, tier, r = parts[0], int(parts[1]), int(parts[2])
        values = [float(x) for x in parts[3].split()]
        if len(values) != dim:
            raise FormatError(f"{path}: row has {len(values)} values, header says dim={dim}")
        if cid not in rows:
            order.append(cid)
            rows[cid] = {}
        rows[cid].setdefault(tier, {})[r] = values

    def mat(d):
        if not d:
            return np.zeros((0, dim))
        return np.array([d[i] for i in range(len(d))], dtype=np.float64)

    embs = []
    for cid in order:
        tiers = rows[cid]
        embs.append(
            TieredEmbeddings(
                cid=cid,
                Z1=mat(tiers.get(1, {})),
                X2=None,
                Z2=mat(tiers.get(2, {})),
                X3=mat(tiers.get(3, {})),
                kinds=kinds.get(cid, []),
            )
        )
    return EmbeddingFile(scheme=header["scheme"], dim=dim, weights=header["weights"], header=header, embeddings=embs)


def params_text(params: GAEParams) -> str:
    c = params.config
    lines = [
        f"#tiergraph-params v1 scheme={params.scheme.name.value} in_dim={params.in_dim} "
        f"hidden={c.hidden_dim} embed={c.embed_dim} layers={c.gcn_layers}"
    ]
    for name, p in params.layers.items():
        r, k = p.shape
        lines.append(f"{name}\t{r}\t{k}\t{' '.join(_fmt(v) for v in p.value.reshape(-1))}")
    return "\n".join(lines) + "\n"


def params_hash(params: GAEParams) -> str:
    return hashlib.sha256(params_text(params).encode()).hexdigest()


def write_params(path, params: GAEParams) -> None:
    Path(path).write_text(params_text(params))


def read_params(path) -> GAEParams:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty params file")
    header = _parse_header(lines[0], "#tiergraph-params v1")
    config = TierConfig(
        hidden_dim=int(header.get("hidden", 32)),
        embed_dim=int(header.get("embed", 16)),
        gcn_layers=int(header.get("layers", 2)),
    )
    layers = {}
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        name, r, k, values = line.split("\t")
        arr = np.array([float(x) for x in values.split()], dtype=np.float64).reshape(int(r), int(k))
        layers[name] = nm.Param(arr, name)
    scheme = get_scheme(header["scheme"])
    return GAEParams(scheme=scheme, config=config, in_dim=int(header.get("in_dim", scheme.atom_dim)), layers=layers)
