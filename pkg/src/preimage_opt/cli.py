"""Command line entry point: ``preimage-opt <command> [options]``.

Commands mirror the pipeline stages. Every run writes into a fresh
timestamped subdirectory of ``--out`` and echoes its effective config
there as ``config.json``, which can be fed back through ``--config``.

Staged runs pass earlier outputs with ``--inputs``::

    preimage-opt sample   --config C --out runs
    preimage-opt map      --config C --out runs --inputs runs/sample-...
    preimage-opt init     --config C --out runs --inputs runs/sample-... runs/map-...
    preimage-opt optimize --config C --out runs --inputs runs/sample-... runs/map-... runs/init-...

Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import os
import sys
from pathlib import Path

from . import bench, io
from .config import ConfigError, builtin, from_dict, load, to_dict
from .core import key_from_json, key_to_json
from .coverage import InitSelection, greedy_init
from .engine import CampaignConfig, Components, build_components, log_rows, run_campaign
from .mapping import (SyntheticEmbedder, SyntheticMapper, build_preimage_index, embed_pool,
                      map_pool)
from .sampling import generate_pool

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(cls, spec: str | None, default: str):
    """``--config`` accepts a path or ``builtin:<name>`` for shipped configs."""
    spec = spec or f"builtin:{default}"
    if spec.startswith("builtin:"):
        try:
            data = builtin(spec.split(":", 1)[1])
        except FileNotFoundError as exc:
            raise ConfigError(f"no shipped config named {spec!r}") from exc
        return from_dict(cls, data)
    if not Path(spec).is_file():
        raise ConfigError(f"config file not found: {spec}")
    return load(cls, spec)


def _campaign_config(args) -> CampaignConfig:
    cfg = _load_config(CampaignConfig, args.config, "reference")
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def make_run_dir(base: str | Path, command: str) -> Path:
    """Create a new, never-reused subdirectory ``<command>-<timestamp>[-n]``."""
    base = Path(base)
    base.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    n = 0
    while True:
        path = base / (f"{command}-{stamp}" + (f"-{n}" if n else ""))
        try:
            path.mkdir()
            return path
        except FileExistsError:
            n += 1


def _find(inputs: list[str], name: str) -> Path | None:
    for d in inputs or []:
        p = Path(d) / name
        if p.exists():
            return p
    return None


def _staged_components(cfg: CampaignConfig, inputs: list[str]) -> Components:
    pool_path = _find(inputs, "pool.bin")
    keys_path = _find(inputs, "keys.json")
    emb_path = _find(inputs, "embeddings.bin")
    pool = io.read_matrix(pool_path) if pool_path else None
    keys = [key_from_json(k) for k in io.read_json(keys_path)] if keys_path else None
    emb = io.read_matrix(emb_path) if emb_path else None
    return build_components(cfg, pool, keys, emb)


def cmd_sample(args) -> Path:
    cfg = _campaign_config(args)
    out = make_run_dir(args.out, "sample")
    io.write_json(out / "config.json", to_dict(cfg))
    pool = generate_pool(cfg.pool_config)
    io.write_matrix(out / "pool.bin", pool, {"rows": pool.shape[0], "length": pool.shape[1],
                                             "sampler": to_dict(cfg.pool_config)})
    print(f"sampled {pool.shape[0]} candidates of length {pool.shape[1]}")
    return out


def cmd_map(args) -> Path:
    cfg = _campaign_config(args)
    out = make_run_dir(args.out, "map")
    io.write_json(out / "config.json", to_dict(cfg))
    pool_path = _find(args.inputs, "pool.bin")
    pool = io.read_matrix(pool_path) if pool_path else io.as_stored(generate_pool(cfg.pool_config))
    mapper = SyntheticMapper(cfg.mapper, pool.shape[1])
    keys = map_pool(mapper, pool)
    embedder = SyntheticEmbedder(cfg.embedder.seed, cfg.embedder.width, hidden=cfg.embedder.hidden)
    emb = embed_pool(embedder, pool)
    io.write_json(out / "keys.json", [key_to_json(k) for k in keys])
    io.write_matrix(out / "embeddings.bin", emb, {"rows": emb.shape[0], "width": emb.shape[1]})
    index = build_preimage_index(keys)
    sizes = sorted(index.sizes().tolist(), reverse=True)
    io.write_json(out / "index.json", {"n_candidates": len(keys), "n_groups": index.n_groups,
                                       "largest_sizes": sizes[:20]})
    print(f"{len(keys)} candidates -> {index.n_groups} unique keys, largest preimage {sizes[0]}")
    return out


def cmd_init(args) -> Path:
    cfg = _campaign_config(args)
    out = make_run_dir(args.out, "init")
    io.write_json(out / "config.json", to_dict(cfg))
    comp = _staged_components(cfg, args.inputs)
    sel = greedy_init(comp.index, comp.embeddings, cfg.n_init, cfg.min_group_size, cfg.kernel)
    io.write_json(out / "init.json", {
        "selected_groups": sel.selected_groups,
        "selected_keys": [key_to_json(comp.index.groups[g].key) for g in sel.selected_groups],
        "group_sizes": [comp.index.groups[g].size for g in sel.selected_groups],
        "n_init": sel.n_init,
        "truncated": sel.truncated,
        "bandwidth": sel.bandwidth,
        "mmd_per_step": sel.mmd_per_step,
        "cov_per_step": sel.cov_per_step,
    })
    print(f"selected {len(sel.selected_groups)} groups covering "
          f"{sum(comp.index.groups[g].size for g in sel.selected_groups)} candidates")
    return out


def _staged_init(comp: Components, inputs: list[str]) -> InitSelection | None:
    path = _find(inputs, "init.json")
    if path is None:
        return None
    data = io.read_json(path)
    for g, k in zip(data["selected_groups"], data["selected_keys"]):
        if comp.index.groups[g].key != key_from_json(k):
            raise ConfigError(f"{path} does not match the staged pool's preimage index")
    return InitSelection(list(data["selected_groups"]), data["n_init"], data["truncated"],
                         data["bandwidth"], list(data["mmd_per_step"]), list(data["cov_per_step"]))


def cmd_optimize(args) -> Path:
    cfg = _campaign_config(args)
    out = make_run_dir(args.out, "optimize")
    io.write_json(out / "config.json", to_dict(cfg))
    comp = _staged_components(cfg, args.inputs)
    result = run_campaign(cfg, comp, init_selection=_staged_init(comp, args.inputs))
    io.write_jsonl(out / "runlog.jsonl", log_rows(result.log))
    summary = result.summary()
    io.write_json(out / "summary.json", summary)
    if args.dump_embeddings:
        io.write_matrix(out / "embeddings.bin", comp.embeddings,
                        {"rows": len(comp.embeddings), "width": comp.embeddings.shape[1]})
        io.write_json(out / "keys.json", [key_to_json(k) for k in comp.keys])
    if args.dump_params and result.state.params is not None:
        p = result.state.params
        io.write_matrix(out / "params.bin", p.flat()[None, :],
                        {"d_e": p.d_e, "hidden": p.hidden, "order": ["W1", "b1", "W2", "b2"]})
    print(f"best score {summary['best_score']:.4f} at candidate {summary['best_index']}, "
          f"{summary['scored_count']} scored from {summary['queries']} queries")
    return out


def cmd_ablate(args) -> Path:
    suite = _load_config(bench.SuiteConfig, args.config, "suite")
    if args.seed is not None:
        suite = dataclasses.replace(suite, seeds=(args.seed,))
    out = make_run_dir(args.out, "ablate")
    io.write_json(out / "config.json", to_dict(suite))
    jobs = args.jobs or os.cpu_count() or 1
    rows = bench.ablation_suite(suite, jobs=jobs)
    summary = bench.write_results(out, rows)
    table = bench.report(summary)
    (out / "report.txt").write_text(table)
    print(table, end="")
    return out


def cmd_report(args) -> None:
    src = Path(args.input)
    csv_path = src / "ablation.csv"
    if not csv_path.exists():
        raise ConfigError(f"{src} has no ablation.csv")
    print(bench.report(bench.summarize(bench.read_csv(csv_path))), end="")


COMMANDS = {
    "sample": cmd_sample,
    "map": cmd_map,
    "init": cmd_init,
    "optimize": cmd_optimize,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="preimage-opt", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("sample", "map", "init", "optimize", "ablate"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="config JSON path or builtin:<name>")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", default="runs", help="base output directory")
        if name in ("map", "init", "optimize"):
            p.add_argument("--inputs", nargs="*", default=[],
                           help="directories holding earlier stage outputs")
        if name == "optimize":
            p.add_argument("--dump-embeddings", action="store_true")
            p.add_argument("--dump-params", action="store_true")
        if name == "ablate":
            p.add_argument("--jobs", type=int, default=None,
                           help="worker processes (default: logical cores)")
    p = sub.add_parser("report")
    p.add_argument("input", help="an ablate output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        out = COMMANDS[args.command](args)
        if out is not None:
            print(f"wrote {out}")
        return EXIT_OK
    except (UsageError, ConfigError) as exc:
        print(f"preimage-opt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"preimage-opt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
