"""MiniAxie: a deterministic 3-vs-3 card battler.

A :class:`GameState` is an immutable value. All randomness (deck shuffle,
hand-cap discards, the rule-based opponent) is derived from the game seed and
the round index, so ``step`` is a pure function of its inputs.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import action_codec
from .cards import (CARDS_PER_AXIE, COPIES_PER_CARD, MAX_SEQUENCE_LENGTH, N_AXIES,
                    N_CARD_TYPES, ConfigurationError, RoundAction, TeamSpec, default_team)

N_FEATURES = 46
SHIELD_SCALE = 50.0

# RNG stream tags, combined with (seed, round_index)
_DECK_STREAM = 0xDEC
_DISCARD_STREAM = 0xD15
_OPPONENT_STREAM = 0x0990


class IllegalActionError(ValueError):
    def __init__(self, rule: str, detail: str):
        super().__init__(f"illegal action ({rule}): {detail}")
        self.rule = rule


class UsageError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    round_limit: int = 15
    hand_cap: int = 9
    draw_per_round: int = 3
    start_energy: int = 3
    energy_per_round: int = 2
    max_energy: int = 10
    max_sequence_length: int = MAX_SEQUENCE_LENGTH
    discard_penalty: float = 0.1
    opponent_mode: str = "uniform"

    def __post_init__(self):
        if self.round_limit < 1 or self.hand_cap < 1:
            raise ConfigurationError("round_limit and hand_cap must be positive")
        if self.discard_penalty < 0:
            raise ConfigurationError("discard_penalty must be non-negative")
        if self.opponent_mode not in ("uniform", "greedy"):
            raise ConfigurationError(f"unknown opponent_mode {self.opponent_mode!r}")


def env_digest(config: EnvConfig, teams: tuple[TeamSpec, TeamSpec]) -> str:
    """Stable hash of everything that changes the game dynamics."""
    payload = {"config": asdict(config), "teams": [t.to_records() for t in teams]}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _rng(seed: int, round_index: int, stream: int, extra: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, round_index, stream, extra])


@dataclass(frozen=True, eq=False)
class GameState:
    teams: tuple[TeamSpec, TeamSpec]
    config: EnvConfig
    seed: int
    health: np.ndarray          # (6,) friendly (player 0) axies then enemy
    shield: np.ndarray          # (6,)
    hands: np.ndarray           # (2, 12)
    decks: tuple[tuple[int, ...], tuple[int, ...]]  # remaining draw order
    used: np.ndarray            # (2, 12) played or discarded so far
    energy: np.ndarray          # (2,)
    discards: np.ndarray        # (2,) n_d
    round_index: int = 0
    terminal: bool = False
    result: int = 0             # from player 0's point of view

    @property
    def deck_remaining(self) -> np.ndarray:
        return np.stack([np.bincount(np.asarray(d, dtype=np.int64), minlength=N_CARD_TYPES)
                         for d in self.decks])

    def alive(self, player: int) -> np.ndarray:
        return self.health[3 * player:3 * player + 3] > 0

    def result_for(self, player: int) -> int:
        return self.result if player == 0 else -self.result

    def mirrored(self) -> "GameState":
        """Same situation with the two sides swapped."""
        swap6 = lambda x: np.concatenate([x[3:], x[:3]])
        return replace(self, teams=self.teams[::-1], health=swap6(self.health),
                       shield=swap6(self.shield), hands=self.hands[::-1].copy(),
                       decks=self.decks[::-1], used=self.used[::-1].copy(),
                       energy=self.energy[::-1].copy(), discards=self.discards[::-1].copy(),
                       result=-self.result)

    def __eq__(self, other):
        if not isinstance(other, GameState):
            return NotImplemented
        return (self.teams == other.teams and self.config == other.config
                and self.seed == other.seed and self.decks == other.decks
                and self.round_index == other.round_index and self.terminal == other.terminal
                and self.result == other.result
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("health", "shield", "hands", "used", "energy", "discards")))

    __hash__ = None


def new_game(team_a: TeamSpec, team_b: TeamSpec, seed: int,
             config: Optional[EnvConfig] = None) -> GameState:
    config = config or EnvConfig()
    for t in (team_a, team_b):
        if not isinstance(t, TeamSpec):
            raise ConfigurationError(f"expected a TeamSpec, got {type(t).__name__}")
    rng = _rng(seed, 0, _DECK_STREAM)
    full_deck = np.repeat(np.arange(N_CARD_TYPES), COPIES_PER_CARD)
    decks, hands = [], np.zeros((2, N_CARD_TYPES), dtype=np.int64)
    for p in range(2):
        order = rng.permutation(full_deck).tolist()
        drawn, rest = order[:config.draw_per_round], order[config.draw_per_round:]
        np.add.at(hands[p], drawn, 1)
        decks.append(tuple(rest))
    health = np.concatenate([team_a.max_health, team_b.max_health])
    return GameState(
        teams=(team_a, team_b), config=config, seed=int(seed),
        health=health, shield=np.zeros(6, dtype=np.int64), hands=hands,
        decks=(decks[0], decks[1]), used=np.zeros((2, N_CARD_TYPES), dtype=np.int64),
        energy=np.full(2, config.start_energy, dtype=np.int64),
        discards=np.zeros(2, dtype=np.int64))


def check_legal(state: GameState, action: RoundAction, player: int = 0) -> None:
    """Raise :class:`IllegalActionError` naming the first violated rule."""
    if len(action.sequences) != N_AXIES:
        raise IllegalActionError("structure", f"expected {N_AXIES} sequences")
    alive = state.alive(player)
    for j, seq in enumerate(action.sequences):
        if len(seq) > state.config.max_sequence_length:
            raise IllegalActionError(
                "sequence-length", f"axie {j} plays {len(seq)} cards, "
                                   f"limit {state.config.max_sequence_length}")
        for card in seq:
            if not (0 <= card < N_CARD_TYPES) or card // CARDS_PER_AXIE != j:
                raise IllegalActionError("card-ownership", f"card {card} does not belong to axie {j}")
        for card in set(seq):
            if seq.count(card) > COPIES_PER_CARD:
                raise IllegalActionError("copy-limit", f"card {card} appears {seq.count(card)} times")
        if seq and not alive[j]:
            raise IllegalActionError("dead-axie", f"axie {j} is dead and cannot play cards")
    counts = action.counts()
    short = np.flatnonzero(counts > state.hands[player])
    if len(short):
        c = int(short[0])
        raise IllegalActionError(
            "not-in-hand", f"card {c} played {counts[c]}x, hand holds {state.hands[player][c]}")
    cost = int(counts @ state.teams[player].cost)
    if cost > state.energy[player]:
        raise IllegalActionError("energy", f"cost {cost} exceeds energy {state.energy[player]}")


def is_legal(state: GameState, action: RoundAction, player: int = 0) -> bool:
    try:
        check_legal(state, action, player)
    except IllegalActionError:
        return False
    return True


def combo_attack(attack: int, position: int) -> int:
    """Attack of a card at ``position`` in its sequence: +10% per position, rounded down."""
    return attack * (10 + position) // 10


def step_two_player(state: GameState, action_a: RoundAction,
                    action_b: RoundAction) -> tuple[GameState, bool]:
    """Resolve one round with both players' actions supplied."""
    if state.terminal:
        raise UsageError("cannot step a terminal state")
    check_legal(state, action_a, 0)
    check_legal(state, action_b, 1)
    cfg = state.config
    actions = (action_a, action_b)
    health = state.health.copy()
    shield = state.shield.copy()
    hands = state.hands.copy()
    used = state.used.copy()
    energy = state.energy.copy()
    discards = state.discards.copy()

    for p in range(2):
        counts = actions[p].counts()
        hands[p] -= counts
        used[p] += counts
        energy[p] -= int(counts @ state.teams[p].cost)
        card_shield = state.teams[p].shield
        for j, seq in enumerate(actions[p].sequences):
            shield[3 * p + j] += sum(int(card_shield[c]) for c in seq)

    order = sorted(((p, j) for p in range(2) for j in range(N_AXIES)),
                   key=lambda pj: (-state.teams[pj[0]].axies[pj[1]].speed, pj[0], pj[1]))
    for p, j in order:
        if health[3 * p + j] == 0:
            continue
        attack = state.teams[p].attack
        enemy = 3 * (1 - p)
        for pos, card in enumerate(actions[p].sequences[j]):
            living = [e for e in range(enemy, enemy + 3) if health[e] > 0]
            if not living:
                break
            target = living[0]
            dmg = combo_attack(int(attack[card]), pos)
            absorbed = min(int(shield[target]), dmg)
            shield[target] -= absorbed
            health[target] = max(0, int(health[target]) - (dmg - absorbed))

    a_dead = not np.any(health[:3] > 0)
    b_dead = not np.any(health[3:] > 0)
    round_index = state.round_index + 1
    shield[:] = 0
    terminal = a_dead or b_dead or round_index >= cfg.round_limit
    result = 0
    if b_dead and not a_dead:
        result = 1
    elif a_dead and not b_dead:
        result = -1

    decks = list(state.decks)
    if not terminal:
        for p in range(2):
            drawn, decks[p] = decks[p][:cfg.draw_per_round], decks[p][cfg.draw_per_round:]
            np.add.at(hands[p], list(drawn), 1)
            excess = int(hands[p].sum()) - cfg.hand_cap
            if excess > 0:
                pool = np.repeat(np.arange(N_CARD_TYPES), hands[p])
                # same stream for both seats keeps mirrored games mirrored
                rng = _rng(state.seed, state.round_index, _DISCARD_STREAM)
                dropped = rng.choice(pool, size=excess, replace=False)
                np.subtract.at(hands[p], dropped, 1)
                np.add.at(used[p], dropped, 1)
                discards[p] += excess
            energy[p] = min(cfg.max_energy, energy[p] + cfg.energy_per_round)

    nxt = GameState(teams=state.teams, config=cfg, seed=state.seed, health=health,
                    shield=shield, hands=hands, decks=(decks[0], decks[1]), used=used,
                    energy=energy, discards=discards, round_index=round_index,
                    terminal=terminal, result=result)
    return nxt, terminal


def terminal_reward(state_next: GameState, c: float, player: int = 0) -> float:
    """``I - c * n_d`` on entering a terminal state, else 0."""
    if not state_next.terminal:
        return 0.0
    return float(state_next.result_for(player)) - c * float(state_next.discards[player])


def greedy_score(legal: action_codec.ActionSet, attack: np.ndarray) -> np.ndarray:
    """Total combo-adjusted attack of every action in ``legal``."""
    per_axie = [np.array([sum(combo_attack(int(attack[c]), pos) for pos, c in enumerate(s))
                          for s in seqs]) for seqs in legal.per_axie]
    idx = legal.index
    return per_axie[0][idx[:, 0]] + per_axie[1][idx[:, 1]] + per_axie[2][idx[:, 2]]


def rule_based_opponent(state: GameState, rng: np.random.Generator, player: int = 1,
                        mode: str = "uniform") -> RoundAction:
    """Uniform-random legal action, or the highest-total-attack one in ``greedy`` mode."""
    if state.terminal:
        raise UsageError("no action in a terminal state")
    legal = action_codec.legal_action_set(state, player)
    if mode == "uniform":
        return legal[int(rng.integers(len(legal)))]
    if mode == "greedy":
        return legal[int(np.argmax(greedy_score(legal, state.teams[player].attack)))]
    raise ConfigurationError(f"unknown opponent mode {mode!r}")


def opponent_rng(state: GameState, player: int = 1) -> np.random.Generator:
    return _rng(state.seed, state.round_index, _OPPONENT_STREAM, player)


def step(state: GameState, action: RoundAction, c: Optional[float] = None, seat: int = 0,
         opponent: Optional[Callable[[GameState, np.random.Generator, int], RoundAction]] = None,
         ) -> tuple[GameState, float, bool]:
    """Single-agent step: the agent in ``seat`` acts, the built-in opponent answers."""
    if state.terminal:
        raise UsageError("cannot step a terminal state")
    c = state.config.discard_penalty if c is None else c
    check_legal(state, action, seat)
    other = 1 - seat
    if opponent is None:
        opp = rule_based_opponent(state, opponent_rng(state, other), other,
                                  state.config.opponent_mode)
    else:
        opp = opponent(state, opponent_rng(state, other), other)
    pair = (action, opp) if seat == 0 else (opp, action)
    nxt, done = step_two_player(state, *pair)
    return nxt, terminal_reward(nxt, c, seat), done


def featurize(state: GameState, player: int = 0) -> np.ndarray:
    """46 features in [0, 1] from ``player``'s point of view."""
    own, opp = (slice(0, 3), slice(3, 6)) if player == 0 else (slice(3, 6), slice(0, 3))
    max_h = np.concatenate([state.teams[player].max_health, state.teams[1 - player].max_health])
    health = np.concatenate([state.health[own], state.health[opp]])
    shield = np.concatenate([state.shield[own], state.shield[opp]])
    per_axie = np.stack([health / max_h, np.minimum(shield / SHIELD_SCALE, 1.0),
                         (health > 0).astype(np.float64)], axis=1).reshape(-1)
    cfg = state.config
    tail = [
        state.energy[player] / cfg.max_energy,
        min(state.round_index / cfg.round_limit, 1.0),
        state.hands[1 - player].sum() / cfg.hand_cap,
        min(state.discards[player] / 10.0, 1.0),
    ]
    return np.concatenate([per_axie, state.hands[player] / COPIES_PER_CARD,
                           state.deck_remaining[player] / COPIES_PER_CARD,
                           np.array(tail, dtype=np.float64)]).astype(np.float64)


@dataclass
class ReplayLogger:
    """Line-delimited JSON replay, one record per round."""

    path: Path
    _records: list = field(default_factory=list)

    def log(self, state_next: GameState, action_a: RoundAction, action_b: RoundAction,
            reward: float) -> None:
        self._records.append({
            "round_index": state_next.round_index - 1,
            "action_a": action_a.to_lists(), "action_b": action_b.to_lists(),
            "health": state_next.health.tolist(), "energy": state_next.energy.tolist(),
            "reward": reward,
        })

    def flush(self) -> None:
        with open(self.path, "w") as fh:
            for rec in self._records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_replay(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def default_teams() -> tuple[TeamSpec, TeamSpec]:
    t = default_team()
    return t, t
