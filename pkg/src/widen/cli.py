"""``widen train|eval|embed|synth`` entry points.

Exit codes: 0 success, 1 runtime failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from . import graph as gmod
from . import synth
from .evaluate import TypeTableError, evaluate_inductive, evaluate_transductive, export_embeddings
from .model import CheckpointError, load_checkpoint, save_checkpoint
from .sampler import sample_all
from .trainer import train

log = logging.getLogger("widen")


class UsageError(Exception):
    pass


def _parse_overrides(extra: list[str]) -> dict[str, str]:
    out = {}
    i = 0
    while i < len(extra):
        flag = extra[i]
        if not flag.startswith("--"):
            raise UsageError(f"unexpected argument {flag!r}")
        key = flag[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"flag {flag} needs a value")
            value = extra[i + 1]
            i += 2
        out[key.replace("-", "_")] = value
    return out


def _require(path: str, what: str) -> None:
    if not path:
        raise UsageError(f"no {what} path given")
    if not Path(path).is_file():
        raise UsageError(f"{what} file not found: {path}")


def _load_graph(cfg: cfgmod.RunConfig) -> gmod.HeteroGraph:
    _require(cfg.nodes, "nodes")
    _require(cfg.edges, "edges")
    return gmod.ingest(cfg.nodes, cfg.edges, undirected=cfg.undirected)


def _split(cfg, g, exclude=frozenset()):
    return gmod.split(
        g,
        cfg.train_fraction,
        cfg.val_fraction,
        cfg.test_fraction,
        cfg.label_fraction,
        cfg.seed,
        exclude=exclude,
    )


def _emit(cfg, fields: dict) -> None:
    line = "\t".join(f"{k}={v}" for k, v in fields.items())
    print(line)
    if cfg.metrics:
        Path(cfg.metrics).write_text(line + "\n", encoding="utf-8")


def cmd_train(cfg: cfgmod.RunConfig) -> int:
    full = _load_graph(cfg)
    g = full
    if cfg.protocol == "inductive":
        holdout = gmod.pick_holdout(full, cfg.holdout, cfg.seed)
        g = full.without(holdout)
        log.info("inductive: %d holdout nodes removed from the training graph", len(holdout))
    tags = _split(cfg, g)
    cache = sample_all(g, cfg.n_wide, cfg.n_deep, cfg.phi, cfg.seed)
    params, report = train(g, cache, cfg.train_config(), tags)
    save_checkpoint(cfg.checkpoint, params)
    report.checkpoint = cfg.checkpoint
    Path(cfg.report).write_text(report.to_tsv(cfg.as_dict(), timing=cfg.report_timing), encoding="utf-8")
    last = report.epochs[-1]
    _emit(cfg, {"epochs": len(report.epochs), "loss": f"{last.loss:.6f}", "val_f1": last.val_f1, "stop": report.stop_reason})
    return 0


def _check_tables(g: gmod.HeteroGraph, params, path: str) -> None:
    if params.edge_type_names and params.edge_type_names != g.edge_type_names:
        raise TypeTableError(f"{path}: edge-type table does not match the graph")
    if params.node_type_names and params.node_type_names != g.node_type_names:
        raise TypeTableError(f"{path}: node-type table does not match the graph")
    if params.class_names and params.class_names != g.class_names:
        raise TypeTableError(f"{path}: class table does not match the graph")
    if params.feature_dim != g.feature_dim:
        raise TypeTableError(f"{path}: feature dimension {params.feature_dim} != graph's {g.feature_dim}")


def _load_params(cfg):
    _require(cfg.checkpoint, "checkpoint")
    return load_checkpoint(cfg.checkpoint)


def cmd_eval(cfg: cfgmod.RunConfig) -> int:
    params = _load_params(cfg)
    g = _load_graph(cfg)
    opts = cfg.model_options()
    seed = cfg.effective_eval_seed
    if cfg.protocol == "inductive":
        holdout = gmod.pick_holdout(g, cfg.holdout, cfg.seed)
        res = evaluate_inductive(g, holdout, params, cfg.n_wide, cfg.n_deep, cfg.phi, seed, opts)
        _emit(cfg, {"protocol": "inductive", "nodes": res.count, "micro_f1": res.micro_f1})
        print(f"inductive {res.summary()}", file=sys.stderr)
        return 0
    _check_tables(g, params, cfg.checkpoint)
    tags = _split(cfg, g)
    cache = sample_all(g, cfg.n_wide, cfg.n_deep, cfg.phi, seed)
    fields = {"protocol": "transductive"}
    for which in (gmod.VALIDATION, gmod.TEST):
        if which in tags:
            res = evaluate_transductive(g, cache, params, tags, which, opts)
            fields[f"{which}_f1"] = res.micro_f1
            print(f"{which} {res.summary()}", file=sys.stderr)
    _emit(cfg, fields)
    return 0


def cmd_embed(cfg: cfgmod.RunConfig) -> int:
    params = _load_params(cfg)
    g = _load_graph(cfg)
    _check_tables(g, params, cfg.checkpoint)
    cache = sample_all(g, cfg.n_wide, cfg.n_deep, cfg.phi, cfg.effective_eval_seed)
    export_embeddings(g, cache, params, cfg.embeddings, cfg.model_options())
    print(f"wrote {g.num_nodes} embeddings to {cfg.embeddings}", file=sys.stderr)
    return 0


def cmd_synth(cfg: cfgmod.RunConfig) -> int:
    if not cfg.nodes or not cfg.edges:
        raise UsageError("synth needs --nodes and --edges output paths")
    if cfg.pattern == "two_hop":
        synth.two_hop_graph(
            cfg.nodes,
            cfg.edges,
            n_targets=cfg.synth_nodes,
            n_classes=cfg.classes,
            seed=cfg.seed,
            feature_dim=cfg.feature_dim,
            separation=cfg.separation,
            degree=cfg.degree,
        )
    else:
        synth.block_graph(
            cfg.nodes,
            cfg.edges,
            n_nodes=cfg.synth_nodes,
            n_node_types=cfg.node_types,
            n_edge_types=cfg.edge_types,
            n_classes=cfg.classes,
            homophily=cfg.homophily,
            seed=cfg.seed,
            feature_dim=cfg.feature_dim,
            separation=cfg.separation,
            degree=cfg.degree,
        )
    print(f"wrote {cfg.nodes} and {cfg.edges}", file=sys.stderr)
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "embed": cmd_embed, "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="widen",
        description="Wide and deep heterogeneous message passing for node classification.",
        epilog="Any configuration key can be given as --key value (dashes or underscores).",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.config and not Path(args.config).is_file():
            raise UsageError(f"config file not found: {args.config}")
        file_values = cfgmod.read_config_file(args.config) if args.config else {}
        cfg = cfgmod.build(file_values, _parse_overrides(extra))
        return COMMANDS[args.command](cfg)
    except (UsageError, cfgmod.ConfigError, OSError) as exc:
        print(f"widen: error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, TypeTableError, gmod.IngestError) as exc:
        print(f"widen: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any failure becomes exit code 1
        print(f"widen: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
