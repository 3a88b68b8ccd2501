"""Command-line pipeline: collect -> pretrain -> train -> battle, plus verify.

Exit codes: 0 success, 1 check failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agent import METRIC_FIELDS, Agent, format_metric, train
from .arena import RulePlayer, battle
from .cards import ConfigurationError
from .config import RunConfig, dump_config, load_config
from .embedding import DatasetError, TransitionDataset, collect_random_transitions, pretrain
from .env import env_digest
from .nn import CheckpointError, network_from_bytes, save_params

K_SWEEP = (1, 8, 32, 128)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, cfg: RunConfig, inputs: dict, outputs: list[Path],
                    extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "env_digest": env_digest(cfg.env_config(), cfg.teams()),
        "seed": cfg.run.seed,
        "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in inputs.items()},
        "outputs": {p.name: _sha256(p) for p in outputs},
        "versions": {"latentcard": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    if extra:
        manifest.update(extra)
    (out / f"manifest_{command}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "config.ini").write_text(dump_config(cfg))


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.run.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_collect(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    ds = collect_random_transitions(cfg.embedding.n_transitions, cfg.run.seed, cfg.teams(),
                                    cfg.env_config(), cfg.run.workers)
    path = out / "dataset.bin"
    ds.save(path)
    if args.text:
        ds.to_text(out / "dataset.txt")
    _write_manifest(out, "collect", cfg, {}, [path], {"records": len(ds)})
    print(f"wrote {len(ds)} transitions to {path}")
    return 0


def cmd_pretrain(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    try:
        ds = TransitionDataset.load(args.dataset)
    except (OSError, DatasetError) as exc:
        raise ConfigurationError(f"cannot load dataset: {exc}") from exc
    digest = env_digest(cfg.env_config(), cfg.teams())
    if ds.env_digest != digest:
        raise ConfigurationError(f"dataset was collected on environment {ds.env_digest[:12]}, "
                                 f"config describes {digest[:12]}")
    emb = cfg.embedding
    result = pretrain(ds, emb.epochs, emb.batch_size, emb.lr, cfg.run.seed, emb.latent_dim)
    f_path, m_path, h_path = out / "embedding.bin", out / "transition_model.bin", out / "pretrain_history.tsv"
    f_path.write_bytes(save_params(result.f))
    m_path.write_bytes(save_params(result.m))
    h_path.write_text(result.history_table())
    _write_manifest(out, "pretrain", cfg, {"dataset": Path(args.dataset)}, [f_path, m_path, h_path],
                    {"best_epoch": result.best_epoch})
    _, tr, ho = result.history[result.best_epoch]
    print(f"holdout J1 {result.history[0][2]:.5f} -> {ho:.5f} (best epoch {result.best_epoch})")
    return 0


def _train_one(cfg: RunConfig, f, out: Path, inputs: dict) -> Path:
    ckpt = out / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.tsv"
    with open(metrics_path, "w") as fh:
        fh.write("\t".join(METRIC_FIELDS) + "\n")

        def emit(row):
            fh.write(format_metric(row) + "\n")
            fh.flush()

        result = train(cfg.agent_config(), cfg.agent.total_steps, cfg.run.seed, f, cfg.teams(),
                       cfg.env_config(), cfg.agent.checkpoint_every, ckpt, emit)
    final = out / "agent.bin"
    result.agent.save(final)
    _write_manifest(out, "train", cfg, inputs, [final, metrics_path, *result.checkpoints])
    print(f"trained {cfg.agent.variant} for {cfg.agent.total_steps} steps -> {final}")
    return final


def cmd_train(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    f, inputs = None, {}
    if cfg.agent.variant == "latent":
        if not args.embedding:
            raise ConfigurationError("the latent variant needs --embedding (run pretrain first)")
        try:
            f = network_from_bytes(Path(args.embedding).read_bytes())
        except (OSError, CheckpointError) as exc:
            raise ConfigurationError(f"cannot load embedding: {exc}") from exc
        inputs["embedding"] = Path(args.embedding)
    if args.k_sweep:
        for k in K_SWEEP:
            cfg.agent.k = k
            _train_one(cfg, f, _sub(out, f"k{k}"), inputs)
        return 0
    _train_one(cfg, f, out, inputs)
    return 0


def _sub(out: Path, name: str) -> Path:
    path = out / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_player(spec: str):
    if spec.startswith("rule:"):
        mode = spec.split(":", 1)[1]
        if mode not in ("uniform", "greedy"):
            raise ConfigurationError(f"unknown rule player {spec!r}")
        return RulePlayer(mode), None
    try:
        agent = Agent.load(spec)
    except (OSError, CheckpointError) as exc:
        raise ConfigurationError(f"cannot load agent {spec}: {exc}") from exc
    agent.name = f"{agent.config.variant}:{Path(spec).name}"
    return agent, Path(spec)


def cmd_battle(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    a, path_a = _load_player(args.agent_a)
    b, path_b = _load_player(args.agent_b or cfg.arena.opponent)
    games = args.games or cfg.arena.n_games
    result = battle(a, b, games, cfg.run.seed, cfg.teams(), cfg.env_config(),
                    cfg.arena.alternate_seats, cfg.run.workers)
    report, records = out / "battle_report.tsv", out / "battle_games.jsonl"
    report.write_text(result.report())
    result.write_records(records)
    inputs = {k: v for k, v in (("agent_a", path_a), ("agent_b", path_b)) if v is not None}
    _write_manifest(out, "battle", cfg, inputs, [report, records])
    sys.stdout.write(result.report())
    return 0


def cmd_verify(cfg: RunConfig, args) -> int:
    from .verify import run_checks

    return 0 if run_checks(args.checkpoint) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="overrides run.seed")
    common.add_argument("--out", help="output directory (overrides run.out)")
    common.add_argument("--workers", type=int, help="parallel worker processes (overrides run.workers)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")

    parser = argparse.ArgumentParser(prog="latentcard", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", parents=[common], help="collect random-play transitions")
    p.add_argument("--text", action="store_true", help="also write dataset.txt")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("pretrain", parents=[common], help="train the action embedding")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", parents=[common], help="train an agent")
    p.add_argument("--embedding", help="embedding.bin from pretrain (latent variant only)")
    p.add_argument("--k-sweep", action="store_true",
                   help=f"train one latent agent per k in {K_SWEEP} under OUT/k<k>/")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("battle", parents=[common], help="play seeded games between two players")
    p.add_argument("--agent-a", required=True, help="agent checkpoint or rule:uniform / rule:greedy")
    p.add_argument("--agent-b", help="agent checkpoint or rule player (default: arena.opponent)")
    p.add_argument("--games", type=int, help="overrides arena.n_games")
    p.set_defaults(func=cmd_battle)

    p = sub.add_parser("verify", parents=[common], help="run the fast invariant checks")
    p.add_argument("--checkpoint", help="also check that an agent checkpoint loads and plays")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.set)
        for flag, key in (("seed", "run.seed"), ("out", "run.out"), ("workers", "run.workers")):
            if getattr(args, flag) is not None:
                overrides.append(f"{key}={getattr(args, flag)}")
        cfg = load_config(args.config, overrides)
        return args.func(cfg, args)
    except (ConfigurationError, ValueError) as exc:
        print(f"latentcard {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
