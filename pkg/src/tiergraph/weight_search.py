"""Search over (w_fg, w_rg, w_ccg) with cached graph embeddings.

Z2 does not depend on the group weights, so each configuration only re-pools
X3 from the stored Z2. The pooled embeddings still go through a
content-addressed cache so that a second target, or a repeated configuration,
loads them instead of recomputing.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .grouping import GroupWeightConfig
from .predict import PoolingMode, PredictorConfig, inputs_from_embeddings, train_predictor
from .sdf_io import TargetTable
from .tiered_gae import (
    GAEParams,
    TieredEmbeddings,
    format_weights,
    params_hash,
    pool_graph_embedding,
    read_embeddings,
    write_embeddings,
)

__all__ = [
    "Strategy",
    "SearchSpec",
    "Trial",
    "SearchResult",
    "EmptyBudget",
    "CacheCorrupt",
    "EmbeddingCache",
    "cache_key",
    "configurations",
    "run_search",
    "write_trial_log",
]


class EmptyBudget(ValueError):
    pass


class CacheCorrupt(ValueError):
    pass


class Strategy(enum.Enum):
    GRID = "grid"
    RANDOM = "random"


@dataclass(frozen=True)
class SearchSpec:
    """GRID axes are point lists; RANDOM axes are (low, high) sampling bounds."""

    strategy: Strategy = Strategy.GRID
    fg: tuple[float, ...] = (1.0,)
    rg: tuple[float, ...] = (0.5,)
    ccg: tuple[float, ...] = (0.1,)
    budget: int = 1
    target: str = "gap"
    seed: int = 0
    patience: int = 5
    min_rel_improvement: float = 0.005

    def __post_init__(self):
        if self.budget < 1:
            raise EmptyBudget(f"search budget must be >= 1, got {self.budget}")
        for axis in (self.fg, self.rg, self.ccg):
            if not axis or any(not (v > 0) for v in axis):
                raise ValueError(f"weight ranges must be non-empty and positive, got {axis}")
            if self.strategy is Strategy.RANDOM and (len(axis) != 2 or axis[0] > axis[1]):
                raise ValueError(f"RANDOM axes are (low, high) pairs, got {axis}")


def configurations(spec: SearchSpec) -> list[tuple[float, float, float]]:
    """At most ``budget`` weight triples, in search order."""
    if spec.strategy is Strategy.GRID:
        grid = itertools.product(sorted(spec.fg), sorted(spec.rg), sorted(spec.ccg))
        return [tuple(float(v) for v in t) for t in itertools.islice(grid, spec.budget)]
    rng = np.random.default_rng(spec.seed)
    lows = np.array([spec.fg[0], spec.rg[0], spec.ccg[0]])
    highs = np.array([spec.fg[1], spec.rg[1], spec.ccg[1]])
    return [tuple(float(v) for v in rng.uniform(lows, highs)) for _ in range(spec.budget)]


def cache_key(weights: GroupWeightConfig, gae_hash: str) -> str:
    payload = f"weights={format_weights(weights)};params={gae_hash}"
    return hashlib.sha256(payload.encode()).hexdigest()


class EmbeddingCache:
    """X3 embedding files keyed by weight vector and GAE parameter hash."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.emb"

    def store(self, key: str, embeddings: Sequence[TieredEmbeddings], scheme, weights: GroupWeightConfig, gae_hash: str) -> Path:
        path = self.path(key)
        write_embeddings(path, embeddings, scheme, weights, tiers=(3,), extra={"params": gae_hash, "key": key})
        return path

    def load(self, key: str, weights: GroupWeightConfig, gae_hash: str) -> Optional[list[TieredEmbeddings]]:
        path = self.path(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            f = read_embeddings(path)
        except ValueError as exc:
            raise CacheCorrupt(f"{path}: {exc}") from exc
        got = (f.header.get("weights"), f.header.get("params"), f.header.get("key"))
        want = (format_weights(weights), gae_hash, key)
        if got != want or cache_key_from_header(f.header) != key:
            raise CacheCorrupt(f"{path}: header {got} does not match requested {want}")
        self.hits += 1
        return f.embeddings


def cache_key_from_header(header: dict) -> str:
    try:
        w = [float(x) for x in header["weights"].split(",")]
        return cache_key(GroupWeightConfig(*w), header["params"])
    except (KeyError, ValueError) as exc:
        raise CacheCorrupt(f"unreadable cache header: {exc}") from exc


@dataclass
class Trial:
    index: int
    weights: tuple[float, float, float]
    target: str
    val_mae: Optional[float]
    cache_key: str
    cache_hit: bool = False
    wall_time_s: float = 0.0
    error: Optional[str] = None

    def as_dict(self) -> dict:
        d = {
            "index": self.index,
            "weights": list(self.weights),
            "target": self.target,
            "val_mae": self.val_mae,
            "cache_key": self.cache_key,
            "wall_time_s": self.wall_time_s,
        }
        if self.error is not None:
            d["error"] = self.error
        return d


@dataclass
class SearchResult:
    trials: list[Trial]
    best: Optional[Trial]
    stopped_early: bool = False
    embeddings: dict[str, list[TieredEmbeddings]] = field(default_factory=dict, repr=False)


def _repool(base: Sequence[TieredEmbeddings], weights: GroupWeightConfig) -> list[TieredEmbeddings]:
    return [replace(e, X3=pool_graph_embedding(e.Z2, e.kinds, weights)) for e in base]


def _merge_x3(base: Sequence[TieredEmbeddings], loaded: Sequence[TieredEmbeddings]) -> list[TieredEmbeddings]:
    x3 = {e.cid: e.X3 for e in loaded}
    if set(x3) != {e.cid for e in base}:
        raise CacheCorrupt("cached embeddings cover a different set of molecules")
    return [replace(e, X3=x3[e.cid]) for e in base]


def run_search(
    spec: SearchSpec,
    embeddings: Sequence[TieredEmbeddings],
    targets: TargetTable,
    gae_params: GAEParams,
    predictor_config: PredictorConfig = PredictorConfig(),
    cache: Optional[EmbeddingCache] = None,
) -> SearchResult:
    """Evaluate weight configurations in order and keep the lowest validation MAE.

    ``embeddings`` supplies Z2 and group kinds per molecule (any weights).
    GRID runs every point within the budget. RANDOM stops after ``patience``
    consecutive trials without a relative improvement of at least
    ``min_rel_improvement`` over the best so far.
    """
    pconf = replace(predictor_config, targets=(spec.target,), mode=PoolingMode.FIXED)
    gae_hash = params_hash(gae_params)
    trials: list[Trial] = []
    pooled: dict[str, list[TieredEmbeddings]] = {}
    best: Optional[Trial] = None
    stale = 0
    stopped = False
    for index, triple in enumerate(configurations(spec)):
        start = time.perf_counter()
        weights = GroupWeightConfig(*triple)
        key = cache_key(weights, gae_hash)
        trial = Trial(index=index, weights=triple, target=spec.target, val_mae=None, cache_key=key)
        try:
            embs = pooled.get(key)
            if embs is None and cache is not None:
                loaded = cache.load(key, weights, gae_hash)
                if loaded is not None:
                    embs = _merge_x3(embeddings, loaded)
                    trial.cache_hit = True
            elif embs is not None:
                trial.cache_hit = True
            if embs is None:
                embs = _repool(embeddings, weights)
                if cache is not None:
                    cache.store(key, embs, gae_params.scheme, weights, gae_hash)
            pooled[key] = embs
            result = train_predictor(inputs_from_embeddings(embs), targets, pconf)
            metrics = result.val_mae or result.train_mae
            trial.val_mae = float(metrics[spec.target])
        except CacheCorrupt:
            raise
        except (ValueError, KeyError, FloatingPointError) as exc:
            trial.error = f"{type(exc).__name__}: {exc}"
        trial.wall_time_s = time.perf_counter() - start
        trials.append(trial)

        if trial.val_mae is None:
            stale += 1
        elif best is None or best.val_mae is None:
            best, stale = trial, 0
        else:
            improved = trial.val_mae < best.val_mae * (1 - spec.min_rel_improvement)
            if trial.val_mae < best.val_mae:
                best = trial
            stale = 0 if improved else stale + 1
        if spec.strategy is Strategy.RANDOM and stale >= spec.patience and index + 1 < spec.budget:
            stopped = True
            break
    return SearchResult(trials=trials, best=best, stopped_early=stopped, embeddings=pooled)


def write_trial_log(path, result: SearchResult) -> None:
    with open(path, "w") as fh:
        for t in result.trials:
            fh.write(json.dumps(t.as_dict(), sort_keys=True) + "\n")
