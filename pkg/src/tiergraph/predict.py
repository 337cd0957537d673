"""Property regression from graph embeddings with a two-hidden-layer MLP.

Row convention throughout: a batch of embeddings is a B x d matrix and each
layer computes ``h W + b``. In FIXED mode the stored X3 is the input. In
TRAINABLE_BY_KIND mode the input is rebuilt on the tape from per-kind sums of
Z2 rows, so the three kind weights receive gradients like any other weight.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import numeric as nm
from .grouping import GroupKind
from .sdf_io import TargetTable
from .tiered_gae import TieredEmbeddings

__all__ = [
    "PoolingMode",
    "PredictorConfig",
    "TargetStats",
    "PredictorInput",
    "PredictorParams",
    "PredictorResult",
    "KeyMismatch",
    "ConstantTarget",
    "inputs_from_embeddings",
    "init_predictor",
    "forward",
    "predictor_loss",
    "predict_graph",
    "train_predictor",
    "evaluate",
    "split_keys",
    "write_metrics",
]

_KINDS = (GroupKind.FG, GroupKind.RG, GroupKind.CCG)


class KeyMismatch(KeyError):
    pass


class ConstantTarget(ValueError):
    pass


class PoolingMode(enum.Enum):
    FIXED = "fixed"
    TRAINABLE_BY_KIND = "trainable_by_kind"


@dataclass(frozen=True)
class PredictorConfig:
    input_dim: int = 16
    hidden: tuple[int, int] = (64, 64)
    targets: tuple[str, ...] = ()  # empty selects every column of the table
    lr: float = 1e-3
    epochs: int = 500
    seed: int = 0
    mode: PoolingMode = PoolingMode.FIXED
    init_weights: tuple[float, float, float] = (1.0, 0.5, 0.1)
    val_fraction: float = 0.1
    batch_size: int = 32

    def __post_init__(self):
        if len(self.hidden) != 2:
            raise ValueError(f"the predictor has exactly two hidden layers, got {self.hidden}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["hidden"] = list(self.hidden)
        d["targets"] = list(self.targets)
        d["init_weights"] = list(self.init_weights)
        return d


@dataclass
class TargetStats:
    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, names: Sequence[str], Y: np.ndarray) -> "TargetStats":
        Y = np.asarray(Y, dtype=np.float64)
        mean = Y.mean(axis=0)
        std = Y.std(axis=0)
        bad = [n for n, s in zip(names, std) if not s > 0]
        if bad:
            raise ConstantTarget(f"targets with zero variance on the training split: {bad}")
        return cls(tuple(names), mean, std)

    def standardize(self, Y: np.ndarray) -> np.ndarray:
        return (Y - self.mean) / self.std

    def destandardize(self, Y: np.ndarray) -> np.ndarray:
        return Y * self.std + self.mean


@dataclass
class PredictorInput:
    key: str
    x3: np.ndarray  # 1 x d, pooled under the weights the embeddings were written with
    kind_sums: np.ndarray  # 3 x d, Z2 rows summed per kind (FG, RG, CCG)


def inputs_from_embeddings(embeddings: Sequence[TieredEmbeddings]) -> list[PredictorInput]:
    out = []
    for e in embeddings:
        d = e.Z2.shape[1] if e.Z2.size else e.X3.shape[1]
        sums = np.zeros((3, d))
        for row, kind in zip(e.Z2, e.kinds):
            sums[_KINDS.index(kind)] += row
        out.append(PredictorInput(key=str(e.cid), x3=np.asarray(e.X3).reshape(1, -1), kind_sums=sums))
    return out


@dataclass
class PredictorParams:
    config: PredictorConfig
    stats: TargetStats
    layers: dict[str, nm.Param]
    kind_weights: Optional[nm.Param] = None

    @property
    def params(self) -> list[nm.Param]:
        out = list(self.layers.values())
        if self.kind_weights is not None:
            out.append(self.kind_weights)
        return out

    @property
    def output_dim(self) -> int:
        return len(self.stats.names)


def init_predictor(config: PredictorConfig, stats: TargetStats) -> PredictorParams:
    rng = np.random.default_rng(config.seed)
    dims = [config.input_dim, *config.hidden, len(stats.names)]
    layers = {}
    for k, (fan_in, fan_out) in enumerate(zip(dims, dims[1:]), start=1):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers[f"W{k}"] = nm.Param(rng.uniform(-limit, limit, size=(fan_in, fan_out)), f"W{k}")
        layers[f"b{k}"] = nm.Param(np.zeros((1, fan_out)), f"b{k}")
    kw = None
    if config.mode is PoolingMode.TRAINABLE_BY_KIND:
        kw = nm.Param(np.asarray(config.init_weights, dtype=np.float64).reshape(1, 3), "kind_weights")
    return PredictorParams(config=config, stats=stats, layers=layers, kind_weights=kw)


def _input_tensor(params: PredictorParams, batch: Sequence[PredictorInput]) -> nm.Tensor:
    if params.kind_weights is None:
        return nm.constant(np.vstack([b.x3 for b in batch]))
    rows = [nm.matmul(params.kind_weights, nm.constant(b.kind_sums)) for b in batch]
    return rows[0] if len(rows) == 1 else nm.concat_rows(rows)


def forward(params: PredictorParams, X: nm.Tensor) -> nm.Tensor:
    """Standardised outputs for a B x d input batch."""
    L = params.layers
    if X.cols != L["W1"].rows:
        raise nm.ShapeMismatch(f"predictor expects {L['W1'].rows}-dim input, got {X.cols}")
    h = nm.relu(nm.add(nm.matmul(X, L["W1"]), L["b1"]))
    h = nm.relu(nm.add(nm.matmul(h, L["W2"]), L["b2"]))
    return nm.add(nm.matmul(h, L["W3"]), L["b3"])


def predictor_loss(params: PredictorParams, batch: Sequence[PredictorInput], Y_std: np.ndarray) -> nm.Tensor:
    return nm.mse(forward(params, _input_tensor(params, batch)), Y_std)


def predict_graph(params: PredictorParams, x: Union[PredictorInput, np.ndarray, Sequence[PredictorInput]]) -> np.ndarray:
    """Native-unit estimates: one row per input, one column per selected target."""
    if isinstance(x, PredictorInput):
        batch = [x]
    elif isinstance(x, np.ndarray):
        if params.kind_weights is not None:
            raise ValueError("TRAINABLE_BY_KIND predictors need PredictorInput (per-kind Z2 sums)")
        arr = x.reshape(1, -1) if x.ndim == 1 else x
        out = forward(params, nm.constant(arr)).numpy()
        return params.stats.destandardize(out)
    else:
        batch = list(x)
    out = forward(params, _input_tensor(params, batch)).numpy()
    return params.stats.destandardize(out)


def split_keys(keys: Sequence[str], val_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Seeded shuffle, then the first ``round(n * val_fraction)`` keys are held out."""
    order = np.random.default_rng(seed).permutation(len(keys))
    n_val = int(round(len(keys) * val_fraction))
    if val_fraction > 0 and len(keys) >= 2:
        n_val = max(1, n_val)
    n_val = min(n_val, len(keys) - 1)
    shuffled = [keys[i] for i in order]
    return shuffled[n_val:], shuffled[:n_val]


def _target_matrix(targets: TargetTable, keys: Sequence[str], columns: Sequence[int]) -> np.ndarray:
    lookup = {str(k): v for k, v in targets.rows.items()}
    missing = [k for k in keys if k not in lookup]
    if missing:
        raise KeyMismatch(f"{len(missing)} embedding keys have no target row, e.g. {missing[:3]}")
    return np.array([[lookup[k][c] for c in columns] for k in keys], dtype=np.float64).reshape(len(keys), len(columns))


def _selected(targets: TargetTable, config: PredictorConfig) -> tuple[list[str], list[int]]:
    names = list(config.targets) or list(targets.names)
    unknown = [n for n in names if n not in targets.names]
    if unknown:
        raise KeyMismatch(f"unknown target columns {unknown}; table has {list(targets.names)}")
    return names, [targets.index_of(n) for n in names]


def evaluate(params: PredictorParams, inputs: Sequence[PredictorInput], targets: TargetTable) -> dict[str, float]:
    """Per-target mean absolute error in native units."""
    if not inputs:
        return {n: float("nan") for n in params.stats.names}
    cols = [targets.index_of(n) for n in params.stats.names]
    Y = _target_matrix(targets, [i.key for i in inputs], cols)
    pred = predict_graph(params, list(inputs))
    mae = np.abs(pred - Y).mean(axis=0)
    return {n: float(m) for n, m in zip(params.stats.names, mae)}


@dataclass
class PredictorResult:
    params: PredictorParams
    train_keys: list[str]
    val_keys: list[str]
    train_mae: dict[str, float]
    val_mae: dict[str, float]
    loss_trace: list[float] = field(default_factory=list)

    @property
    def kind_weights(self) -> Optional[list[float]]:
        kw = self.params.kind_weights
        return None if kw is None else [float(v) for v in kw.value.reshape(-1)]

    def metrics(self) -> dict:
        trace = self.loss_trace
        return {
            "config": self.params.config.as_dict(),
            "split_seed": self.params.config.seed,
            "split": {"train": self.train_keys, "val": self.val_keys},
            "mae": {"train": self.train_mae, "val": self.val_mae},
            "kind_weights": self.kind_weights,
            "loss": {
                "epochs": len(trace),
                "first": trace[0] if trace else None,
                "last": trace[-1] if trace else None,
                "min": min(trace) if trace else None,
            },
        }


def train_predictor(
    embeddings: Sequence[Union[TieredEmbeddings, PredictorInput]],
    targets: TargetTable,
    config: PredictorConfig = PredictorConfig(),
) -> PredictorResult:
    """Fit the MLP with Adam on standardised-target MSE; report MAE per split."""
    inputs = [e if isinstance(e, PredictorInput) else inputs_from_embeddings([e])[0] for e in embeddings]
    if not inputs:
        raise KeyMismatch("no embeddings to train on")
    names, cols = _selected(targets, config)
    keys = [i.key for i in inputs]
    if len(set(keys)) != len(keys):
        raise KeyMismatch("duplicate embedding keys")
    _target_matrix(targets, keys, cols)  # fail fast on missing keys
    by_key = {i.key: i for i in inputs}
    train_keys, val_keys = split_keys(keys, config.val_fraction, config.seed)
    train = [by_key[k] for k in train_keys]
    Y_train = _target_matrix(targets, train_keys, cols)
    stats = TargetStats.fit(names, Y_train)
    Y_std = stats.standardize(Y_train)

    params = init_predictor(config, stats)
    opt = nm.Adam(params.params, lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(len(train))
        total, batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            opt.zero_grad()
            loss = predictor_loss(params, [train[i] for i in idx], Y_std[idx])
            total += loss.item()
            batches += 1
            nm.backward(loss)
            opt.step()
        trace.append(total / batches)
    return PredictorResult(
        params=params,
        train_keys=train_keys,
        val_keys=val_keys,
        train_mae=evaluate(params, train, targets),
        val_mae=evaluate(params, [by_key[k] for k in val_keys], targets) if val_keys else {},
        loss_trace=trace,
    )


def write_metrics(path, result: PredictorResult) -> None:
    Path(path).write_text(json.dumps(result.metrics(), indent=2, sort_keys=True) + "\n")
