"""``tiergraph`` command-line entry point.

Machine-readable JSON lines go to stdout, human summaries to stderr. Every
command that writes an artifact also writes ``<out>.manifest.json``.

Exit codes: 0 ok, 2 usage or unparseable SDF record, 3 other data errors,
4 numeric divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .featurize import UnknownElement, featurize_molecule, get_scheme
from .grouping import EmptyDataset, GroupWeightConfig, build_group_set, group_report, group_stats
from .mol_graph import build_graph
from .numeric import NonFiniteValue
from .predict import ConstantTarget, KeyMismatch, PoolingMode, PredictorConfig, train_predictor, write_metrics
from .sdf_io import Keying, MissingColumn, Molecule, RecordError, SDFError, TargetTableError, iterate_sdf, load_targets, molecule_key
from .tiered_gae import (
    FormatError,
    SchemeMismatch,
    TierConfig,
    embed_dataset,
    prepare_molecule,
    read_embeddings,
    read_params,
    train_tiered_gae,
    write_params,
)
from .weight_search import CacheCorrupt, EmbeddingCache, EmptyBudget, SearchSpec, Strategy, run_search, write_trial_log

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class RecordParseError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: list[dict] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    seed: Optional[int] = None
    version: str = __version__

    def write(self, path) -> None:
        body = {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seed": self.seed,
            "version": self.version,
        }
        Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(args, inputs: Sequence[str], outputs: Sequence[str]) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",) and not callable(v)}
    m = RunManifest(
        command=args.command,
        config=config,
        inputs=[{"path": str(p), "sha256": _sha256(p)} for p in inputs if p],
        outputs=[str(p) for p in outputs],
        seed=getattr(args, "seed", None),
    )
    m.write(f"{outputs[0]}.manifest.json")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map, optionally over a process pool."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _records(path, lenient: bool) -> list[tuple[int, object]]:
    items = list(iterate_sdf(path))
    if not lenient:
        for idx, item in items:
            if isinstance(item, RecordError):
                raise RecordParseError(f"record {idx}: {item.message}")
    return items


def _molecules(path, lenient: bool = False) -> list[tuple[int, Molecule]]:
    return [(i, m) for i, m in _records(path, lenient) if isinstance(m, Molecule)]


def _parse_weights(text: str) -> GroupWeightConfig:
    try:
        values = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--weights expects w_fg,w_rg,w_ccg, got {text!r}") from None
    if len(values) != 3:
        raise UsageError(f"--weights expects three values, got {text!r}")
    try:
        return GroupWeightConfig(*values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _parse_floats(text: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated numbers, got {text!r}") from None


# --- per-molecule workers (module level so they pickle) ---------------------


def _group_item(item):
    idx, mol = item
    if isinstance(mol, RecordError):
        return {"index": idx, "error": mol.message}
    return group_report(build_group_set(build_graph(mol)), mol.cid)


def _group_count(mol):
    return len(build_group_set(build_graph(mol)))


def _featurize_item(args):
    (idx, mol), scheme = args
    fm = featurize_molecule(build_graph(mol), scheme)
    return {
        "index": idx,
        "cid": mol.cid,
        "scheme": fm.scheme.name.value,
        "X": fm.X.tolist(),
        "E": fm.E.tolist(),
        "edge_index": fm.edge_index.tolist(),
    }


def _prepare_item(args):
    (idx, mol), scheme, keying = args
    return prepare_molecule(mol, scheme, key=str(molecule_key(idx, mol, keying)))


def _prepared(args, scheme) -> list:
    mols = _molecules(args.input, getattr(args, "lenient", False))
    keying = Keying(args.keying)
    return _pmap(_prepare_item, [(m, scheme, keying) for m in mols], args.jobs)


# --- commands ---------------------------------------------------------------


def cmd_parse(args) -> int:
    n_ok = n_bad = 0
    for idx, item in _records(args.input, args.lenient):
        if isinstance(item, RecordError):
            n_bad += 1
            _emit({"index": idx, "error": item.message})
            continue
        n_ok += 1
        _emit(
            {
                "index": idx,
                "cid": item.cid,
                "title": item.title,
                "atoms": item.n_atoms,
                "bonds": len(item.bonds),
                "elements": item.elements,
                "props": item.props,
            }
        )
    _say(f"parsed {n_ok} records ({n_bad} errors)")
    return EXIT_OK


def cmd_groups(args) -> int:
    reports = _pmap(_group_item, _records(args.input, args.lenient), args.jobs)
    lines = [json.dumps(r, sort_keys=True) for r in reports]
    if args.json:
        Path(args.json).write_text("".join(line + "\n" for line in lines))
        _manifest(args, [args.input], [args.json])
    else:
        for line in lines:
            sys.stdout.write(line + "\n")
    _say(f"grouped {sum('error' not in r for r in reports)} molecules")
    return EXIT_OK


def cmd_stats(args) -> int:
    mols = [m for _, m in _molecules(args.input, args.lenient)]
    counts = _pmap(_group_count, mols, args.jobs)
    stats = group_stats(counts)
    _emit(stats.as_dict())
    _say(f"{stats.count} molecules: mean {stats.mean:.4f} groups, min {stats.min}, max {stats.max}")
    return EXIT_OK


def cmd_featurize(args) -> int:
    scheme = get_scheme(args.scheme)
    mols = _molecules(args.input, args.lenient)
    rows = _pmap(_featurize_item, [(m, scheme) for m in mols], args.jobs)
    lines = "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
    if args.out:
        Path(args.out).write_text(lines)
        _manifest(args, [args.input], [args.out])
    else:
        sys.stdout.write(lines)
    _say(f"featurized {len(rows)} molecules ({scheme.name.value}: atom {scheme.atom_dim}, bond {scheme.bond_dim})")
    return EXIT_OK


def cmd_train_gae(args) -> int:
    scheme = get_scheme(args.scheme)
    dataset = _prepared(args, scheme)
    config = TierConfig(
        hidden_dim=args.hidden, embed_dim=args.embed, lr=args.lr, epochs=args.epochs, seed=args.seed, batch_size=args.batch_size
    )
    params, trace = train_tiered_gae(dataset, scheme, config)
    write_params(args.out, params)
    _manifest(args, [args.input], [args.out])
    summary = {"epochs": len(trace), "first_loss": trace[0] if trace else None, "final_loss": trace[-1] if trace else None}
    _emit({"params": args.out, **summary})
    _say(f"trained on {len(dataset)} molecules for {len(trace)} epochs; params -> {args.out}")
    return EXIT_OK


def cmd_embed(args) -> int:
    weights = _parse_weights(args.weights)
    params = read_params(args.params)
    scheme = get_scheme(args.scheme) if args.scheme else params.scheme
    if scheme.name is not params.scheme.name:
        raise SchemeMismatch(f"--scheme {scheme.name.value} but params were trained on {params.scheme.name.value}")
    dataset = _prepared(args, scheme)
    embs = embed_dataset(params, dataset, weights, path=args.out)
    _manifest(args, [args.input, args.params], [args.out])
    _emit({"embeddings": args.out, "molecules": len(embs), "weights": list(weights.triple)})
    _say(f"embedded {len(embs)} molecules -> {args.out}")
    return EXIT_OK


def _targets_table(args):
    # QM9-style tables carry extra columns; anything else is taken whole
    try:
        return load_targets(args.targets, Keying(args.keying))
    except MissingColumn:
        return load_targets(args.targets, Keying(args.keying), names=None)


def cmd_train_predict(args) -> int:
    emb = read_embeddings(args.embeddings)
    table = _targets_table(args)
    select = tuple(s.strip().lower() for s in args.select.split(",")) if args.select else ()
    dim = emb.dim
    config = PredictorConfig(
        input_dim=dim,
        hidden=(args.hidden, args.hidden),
        targets=select,
        lr=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        mode=PoolingMode(args.mode),
        init_weights=_parse_weights(args.weights).triple,
        val_fraction=args.val_fraction,
        batch_size=args.batch_size,
    )
    result = train_predictor(emb.embeddings, table, config)
    write_metrics(args.out, result)
    _manifest(args, [args.embeddings, args.targets], [args.out])
    _emit({"metrics": args.out, "train_mae": result.train_mae, "val_mae": result.val_mae, "kind_weights": result.kind_weights})
    _say(f"trained predictor on {len(result.train_keys)} molecules, validated on {len(result.val_keys)}")
    return EXIT_OK


def cmd_tune_weights(args) -> int:
    emb = read_embeddings(args.embeddings)
    params = read_params(args.params)
    if emb.scheme != params.scheme.name.value:
        raise SchemeMismatch(f"embeddings use scheme {emb.scheme}, params {params.scheme.name.value}")
    table = _targets_table(args)
    spec = SearchSpec(
        strategy=Strategy(args.strategy),
        fg=_parse_floats(args.fg, "--fg"),
        rg=_parse_floats(args.rg, "--rg"),
        ccg=_parse_floats(args.ccg, "--ccg"),
        budget=args.budget,
        target=args.target.lower(),
        seed=args.seed,
    )
    pconf = PredictorConfig(
        input_dim=emb.dim,
        hidden=(args.hidden, args.hidden),
        lr=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        val_fraction=args.val_fraction,
        batch_size=args.batch_size,
    )
    cache_dir = args.cache_dir or os.environ.get("TIERGRAPH_CACHE_DIR")
    cache = EmbeddingCache(cache_dir) if cache_dir else None
    result = run_search(spec, emb.embeddings, table, params, pconf, cache)
    for t in result.trials:
        _emit(t.as_dict())
    trials_path = args.trials or f"{args.out}.trials.jsonl"
    write_trial_log(trials_path, result)
    best = result.best
    Path(args.out).write_text(
        json.dumps(
            {
                "target": spec.target,
                "best": None if best is None else {"index": best.index, "weights": list(best.weights), "val_mae": best.val_mae},
                "trials": len(result.trials),
                "stopped_early": result.stopped_early,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    _manifest(args, [args.embeddings, args.params, args.targets], [args.out, trials_path])
    if best is not None:
        _say(f"{len(result.trials)} trials; best weights {best.weights} with val MAE {best.val_mae:.6g}")
    else:
        _say(f"{len(result.trials)} trials; every trial failed")
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p, scheme=True, seed=True, jobs=True):
    if scheme:
        p.add_argument("--scheme", choices=["qm9", "bindingdb"], default="qm9")
    if seed:
        p.add_argument("--seed", type=int, default=0)
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="worker processes for per-molecule stages")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tiergraph", description="Tiered molecular graph embeddings and property prediction.")
    parser.add_argument("--version", action="version", version=f"tiergraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="parse an SDF file and list its records")
    p.add_argument("input")
    p.add_argument("--lenient", action="store_true", help="emit error objects for bad records instead of failing")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("groups", help="functional, ring and catch-all groups per molecule")
    p.add_argument("input")
    p.add_argument("--json", metavar="OUT", help="write JSON lines to OUT instead of stdout")
    p.add_argument("--lenient", action="store_true")
    _common(p, scheme=False, seed=False)
    p.set_defaults(func=cmd_groups)

    p = sub.add_parser("stats", help="group-count statistics over a corpus")
    p.add_argument("input")
    p.add_argument("--lenient", action="store_true")
    _common(p, scheme=False, seed=False)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("featurize", help="atom and bond feature matrices")
    p.add_argument("input")
    p.add_argument("--out")
    p.add_argument("--lenient", action="store_true")
    _common(p, seed=False)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train-gae", help="train the tiered graph autoencoder")
    p.add_argument("input")
    p.add_argument("--out", required=True, help="parameter file")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--embed", type=int, default=16)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--keying", choices=[k.value for k in Keying], default="cid")
    _common(p)
    p.set_defaults(func=cmd_train_gae)

    p = sub.add_parser("embed", help="write tiered embeddings for every molecule")
    p.add_argument("input")
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default="1,0.5,0.1", help="w_fg,w_rg,w_ccg")
    p.add_argument("--scheme", choices=["qm9", "bindingdb"], default=None, help="defaults to the params' scheme")
    p.add_argument("--keying", choices=[k.value for k in Keying], default="cid")
    _common(p, scheme=False)
    p.set_defaults(func=cmd_embed)

    def predictor_flags(p):
        p.add_argument("embeddings")
        p.add_argument("--targets", required=True, help="target table (csv or tsv with a key column)")
        p.add_argument("--keying", choices=[k.value for k in Keying], default="cid")
        p.add_argument("--epochs", type=int, default=500)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--hidden", type=int, default=64)
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--val-fraction", type=float, default=0.1)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-predict", help="fit the property predictor on stored embeddings")
    predictor_flags(p)
    p.add_argument("--select", help="comma-separated target columns (default: all)")
    p.add_argument("--mode", choices=[m.value for m in PoolingMode], default="fixed")
    p.add_argument("--weights", default="1,0.5,0.1", help="initial kind weights for trainable mode")
    p.set_defaults(func=cmd_train_predict)

    p = sub.add_parser("tune-weights", help="search group weights for one target")
    predictor_flags(p)
    p.add_argument("--params", required=True, help="GAE parameter file")
    p.add_argument("--target", required=True)
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default="grid")
    p.add_argument("--fg", default="1", help="grid points, or low,high for random")
    p.add_argument("--rg", default="0.5")
    p.add_argument("--ccg", default="0.1")
    p.add_argument("--budget", type=int, default=1)
    p.add_argument("--cache-dir", default=None, help="defaults to $TIERGRAPH_CACHE_DIR")
    p.add_argument("--trials", help="trial log path (default: <out>.trials.jsonl)")
    p.set_defaults(func=cmd_tune_weights)
    return parser


_DATA_ERRORS = (
    OSError,
    SDFError,
    TargetTableError,
    UnknownElement,
    KeyMismatch,
    ConstantTarget,
    SchemeMismatch,
    FormatError,
    CacheCorrupt,
    EmptyDataset,
)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        # overflow surfaces as NonFiniteValue; the numpy warning is redundant
        with np.errstate(over="ignore", invalid="ignore"):
            return args.func(args)
    except UsageError as exc:
        _say(f"tiergraph: usage error: {exc}")
        return EXIT_USAGE
    except RecordParseError as exc:
        _say(f"tiergraph: parse failure: {exc}")
        return EXIT_USAGE
    except (NonFiniteValue, FloatingPointError) as exc:
        _say(f"tiergraph: numeric divergence: {exc}")
        return EXIT_NUMERIC
    except EmptyBudget as exc:
        _say(f"tiergraph: usage error: {exc}")
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        _say(f"tiergraph: data error: {type(exc).__name__}: {exc}")
        return EXIT_DATA
    except ValueError as exc:
        _say(f"tiergraph: data error: {exc}")
        return EXIT_DATA
