"""Seeded head-to-head battles, winrate statistics and learning-curve tables."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Protocol

import numpy as np

from .agent import METRIC_FIELDS
from .cards import ConfigurationError, TeamSpec
from .env import (EnvConfig, GameState, default_teams, env_digest, new_game, rule_based_opponent,
                  step_two_player)

DEFAULT_GAMES = 1000


class Player(Protocol):
    name: str

    def act(self, state: GameState, player: int, rng: np.random.Generator): ...


class RulePlayer:
    """The rule-based player: uniform over the legal set, or greedy on total attack."""

    env_digest = ""

    def __init__(self, mode: str = "uniform"):
        self.mode = mode
        self.name = f"rule-{mode}"

    def act(self, state, player, rng):
        return rule_based_opponent(state, rng, player, self.mode)


@dataclass
class GameRecord:
    seed: int
    seat: int          # seat of agent_a
    rounds: int
    result: int        # for agent_a
    discards: int      # agent_a's n_d

    def to_dict(self) -> dict:
        return {"seed": self.seed, "seat": self.seat, "rounds": self.rounds,
                "result": self.result, "discards": self.discards}


@dataclass
class BattleResult:
    games: int
    wins: int
    ties: int
    losses: int
    records: list = field(default_factory=list)
    name_a: str = ""
    name_b: str = ""

    @property
    def winrate(self) -> float:
        return self.wins / self.games

    @property
    def standard_error(self) -> float:
        p = self.winrate
        return math.sqrt(p * (1 - p) / self.games)

    def report(self) -> str:
        rows = [("agent_a", self.name_a), ("agent_b", self.name_b), ("games", self.games),
                ("wins", self.wins), ("ties", self.ties), ("losses", self.losses),
                ("winrate", f"{self.winrate:.6f}"), ("standard_error", f"{self.standard_error:.6f}")]
        return "".join(f"{k}\t{v}\n" for k, v in rows)

    def write_records(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def _rng(seed: int, round_index: int, player: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_index, 0xA7E, player])


def play_game(agent_a, agent_b, seed: int, seat_a: int = 0,
              teams: Optional[tuple[TeamSpec, TeamSpec]] = None,
              config: Optional[EnvConfig] = None) -> GameRecord:
    teams = teams or default_teams()
    state = new_game(teams[0], teams[1], seed, config)
    players = (agent_a, agent_b) if seat_a == 0 else (agent_b, agent_a)
    while not state.terminal:
        acts = [players[p].act(state, p, _rng(seed, state.round_index, p)) for p in (0, 1)]
        state, _ = step_two_player(state, acts[0], acts[1])
    return GameRecord(seed, seat_a, state.round_index, state.result_for(seat_a),
                      int(state.discards[seat_a]))


def _play_chunk(args):
    agent_a, agent_b, jobs, teams, config = args
    return [play_game(agent_a, agent_b, seed, seat, teams, config) for seed, seat in jobs]


def battle(agent_a, agent_b, n_games: int = DEFAULT_GAMES, base_seed: int = 0,
           teams: Optional[tuple[TeamSpec, TeamSpec]] = None, config: Optional[EnvConfig] = None,
           alternate_seats: bool = True, workers: int = 1) -> BattleResult:
    """Play ``n_games`` with seeds ``base_seed + i``; agent_a takes seat ``i % 2`` when alternating."""
    if n_games < 1:
        raise ValueError("n_games must be at least 1")
    teams = teams or default_teams()
    config = config or EnvConfig()
    digest = env_digest(config, teams)
    for agent in (agent_a, agent_b):
        own = getattr(agent, "env_digest", "")
        if own and own != digest:
            raise ConfigurationError(f"{agent.name} was trained on a different environment "
                                     f"({own[:12]} != {digest[:12]})")
    jobs = [(base_seed + i, (i % 2) if alternate_seats else 0) for i in range(n_games)]
    if workers > 1:
        size = math.ceil(n_games / workers)
        chunks = [(agent_a, agent_b, jobs[i:i + size], teams, config)
                  for i in range(0, n_games, size)]
        with ProcessPoolExecutor(workers) as pool:
            records = [r for part in pool.map(_play_chunk, chunks) for r in part]
    else:
        records = _play_chunk((agent_a, agent_b, jobs, teams, config))
    results = np.array([r.result for r in records])
    return BattleResult(n_games, int(np.sum(results == 1)), int(np.sum(results == 0)),
                        int(np.sum(results == -1)), records,
                        getattr(agent_a, "name", "a"), getattr(agent_b, "name", "b"))


def evaluate_vs_random(agent, n_games: int = DEFAULT_GAMES, base_seed: int = 0,
                       **kwargs) -> BattleResult:
    return battle(agent, RulePlayer("uniform"), n_games, base_seed, **kwargs)


def win_difference(result_ours: BattleResult, result_baseline: BattleResult) -> int:
    """Wins of our agent minus wins of the baseline against the same games."""
    if result_ours.games != result_baseline.games:
        raise ValueError("battles have different game counts")
    key = lambda r: [(g.seed, g.seat) for g in r.records]
    if key(result_ours) != key(result_baseline) or result_ours.name_b != result_baseline.name_b:
        raise ValueError("battles were not played against the same opponent and seeds")
    return result_ours.wins - result_baseline.wins


# ---------------------------------------------------------------- curves

CURVE_FIELDS = ("run", "env_steps", "mean_return")


class CurveParseError(ValueError):
    pass


def parse_metrics(text: str) -> list[dict]:
    """Parse a tab-separated metrics stream (header row plus one row per iteration)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return []
    header = lines[0].split("\t")
    if tuple(header) != METRIC_FIELDS:
        raise CurveParseError(f"unexpected metrics header {header}")
    rows = []
    for n, ln in enumerate(lines[1:], start=2):
        parts = ln.split("\t")
        if len(parts) != len(header):
            raise CurveParseError(f"line {n}: expected {len(header)} fields, got {len(parts)}")
        try:
            rows.append({"iteration": int(parts[0]), "env_steps": int(parts[1]),
                         "mean_return": float(parts[2]), "critic_loss": float(parts[3]),
                         "mean_q": float(parts[4]), "wall_clock_ms": int(parts[5])})
        except ValueError as exc:
            raise CurveParseError(f"line {n}: {exc}") from exc
    return rows


def export_curves(runs: dict[str, Iterable[dict]]) -> str:
    """Plottable (run, env_steps, mean_return) table, rows sorted by steps within each run."""
    out = io.StringIO()
    w = csv.writer(out, delimiter="\t", lineterminator="\n")
    w.writerow(CURVE_FIELDS)
    for tag in sorted(runs):
        for row in sorted(runs[tag], key=lambda r: r["env_steps"]):
            w.writerow([tag, row["env_steps"], repr(float(row["mean_return"]))])
    return out.getvalue()


def parse_curves(text: str) -> list[tuple[str, int, float]]:
    reader = csv.reader(io.StringIO(text), delimiter="\t")
    try:
        header = next(reader)
    except StopIteration:
        raise CurveParseError("empty curve table") from None
    if tuple(header) != CURVE_FIELDS:
        raise CurveParseError(f"unexpected curve header {header}")
    try:
        return [(r[0], int(r[1]), float(r[2])) for r in reader if r]
    except (IndexError, ValueError) as exc:
        raise CurveParseError(str(exc)) from exc
