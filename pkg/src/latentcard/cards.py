"""Team, card and action value types shared by the engine and the codec."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

N_AXIES = 3
CARDS_PER_AXIE = 4
N_CARD_TYPES = N_AXIES * CARDS_PER_AXIE
COPIES_PER_CARD = 2
MAX_SEQUENCE_LENGTH = 4
MAX_CARD_COST = 2


class ConfigurationError(ValueError):
    """Invalid team, environment or run configuration."""


@dataclass(frozen=True)
class CardSpec:
    card_id: int
    attack: int
    shield: int
    cost: int

    def __post_init__(self):
        if not 0 <= self.card_id < N_CARD_TYPES:
            raise ConfigurationError(f"card_id {self.card_id} outside 0..{N_CARD_TYPES - 1}")
        if self.attack < 0 or self.shield < 0:
            raise ConfigurationError(f"card {self.card_id}: attack and shield must be non-negative")
        if self.attack + self.shield <= 0:
            raise ConfigurationError(f"card {self.card_id}: attack + shield must be positive")
        if self.cost not in (0, 1, 2):
            raise ConfigurationError(f"card {self.card_id}: cost must be 0, 1 or 2")


@dataclass(frozen=True)
class AxieSpec:
    axie_index: int
    max_health: int
    speed: int
    cards: tuple[CardSpec, ...]

    def __post_init__(self):
        if not 0 <= self.axie_index < N_AXIES:
            raise ConfigurationError(f"axie_index {self.axie_index} outside 0..{N_AXIES - 1}")
        if self.max_health <= 0 or self.speed <= 0:
            raise ConfigurationError(f"axie {self.axie_index}: health and speed must be positive")
        if len(self.cards) != CARDS_PER_AXIE:
            raise ConfigurationError(
                f"axie {self.axie_index}: expected {CARDS_PER_AXIE} cards, got {len(self.cards)}")
        expected = [self.axie_index * CARDS_PER_AXIE + j for j in range(CARDS_PER_AXIE)]
        if [c.card_id for c in self.cards] != expected:
            raise ConfigurationError(f"axie {self.axie_index}: card ids must be {expected}")


@dataclass(frozen=True)
class TeamSpec:
    axies: tuple[AxieSpec, ...]

    def __post_init__(self):
        if len(self.axies) != N_AXIES:
            raise ConfigurationError(f"a team has exactly {N_AXIES} axies, got {len(self.axies)}")
        if [a.axie_index for a in self.axies] != list(range(N_AXIES)):
            raise ConfigurationError("axies must be listed in index order 0, 1, 2")

    @property
    def cards(self) -> list[CardSpec]:
        return [c for a in self.axies for c in a.cards]

    @property
    def attack(self) -> np.ndarray:
        return np.array([c.attack for c in self.cards], dtype=np.int64)

    @property
    def shield(self) -> np.ndarray:
        return np.array([c.shield for c in self.cards], dtype=np.int64)

    @property
    def cost(self) -> np.ndarray:
        return np.array([c.cost for c in self.cards], dtype=np.int64)

    @property
    def max_health(self) -> np.ndarray:
        return np.array([a.max_health for a in self.axies], dtype=np.int64)

    @property
    def speed(self) -> np.ndarray:
        return np.array([a.speed for a in self.axies], dtype=np.int64)

    def to_records(self) -> list[dict]:
        return [{"health": a.max_health, "speed": a.speed,
                 "cards": [[c.attack, c.shield, c.cost] for c in a.cards]}
                for a in self.axies]


def team_from_records(records: Sequence[dict]) -> TeamSpec:
    """Build a team from ``{"health", "speed", "cards": [[attack, shield, cost] x4]}`` records."""
    axies = []
    for i, rec in enumerate(records):
        try:
            cards = tuple(CardSpec(i * CARDS_PER_AXIE + j, int(a), int(s), int(c))
                          for j, (a, s, c) in enumerate(rec["cards"]))
            axies.append(AxieSpec(i, int(rec["health"]), int(rec["speed"]), cards))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"malformed axie record {i}: {exc}") from exc
    return TeamSpec(tuple(axies))


def load_team(path: str | Path) -> TeamSpec:
    """Read a team file: one JSON object per line, one line per axie; ``#`` starts a comment."""
    records = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: {exc}") from exc
    return team_from_records(records)


def dump_team(team: TeamSpec, path: str | Path) -> None:
    Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in team.to_records()))


DEFAULT_HEALTH = (30, 35, 40)


def default_team(health: Sequence[int] = DEFAULT_HEALTH) -> TeamSpec:
    """The reference team; pass ``health=(120, 140, 160)`` for the long-game variant."""
    h0, h1, h2 = health
    return team_from_records([
        {"health": h0, "speed": 5, "cards": [[30, 0, 1], [20, 10, 1], [0, 25, 1], [40, 0, 2]]},
        {"health": h1, "speed": 3, "cards": [[25, 5, 1], [15, 15, 1], [0, 30, 1], [35, 0, 2]]},
        {"health": h2, "speed": 1, "cards": [[20, 10, 1], [10, 20, 1], [0, 35, 1], [30, 10, 2]]},
    ])


@dataclass(frozen=True)
class RoundAction:
    """Three ordered card sequences, one per friendly axie."""

    sequences: tuple[tuple[int, ...], ...] = ((), (), ())

    def __post_init__(self):
        seqs = tuple(tuple(int(c) for c in s) for s in self.sequences)
        object.__setattr__(self, "sequences", seqs)

    @classmethod
    def of(cls, *sequences: Iterable[int]) -> "RoundAction":
        seqs = [tuple(s) for s in sequences]
        seqs += [()] * (N_AXIES - len(seqs))
        return cls(tuple(seqs))

    @property
    def cards(self) -> list[int]:
        return [c for s in self.sequences for c in s]

    def counts(self) -> np.ndarray:
        return np.bincount(np.asarray(self.cards, dtype=np.int64), minlength=N_CARD_TYPES)

    def to_lists(self) -> list[list[int]]:
        return [list(s) for s in self.sequences]

    def __repr__(self) -> str:
        return f"RoundAction({self.to_lists()})"


EMPTY_ACTION = RoundAction()
