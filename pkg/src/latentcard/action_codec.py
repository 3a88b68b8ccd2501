"""Legal-action enumeration and the matrix encodings of a round action.

Each card column of the 6x12 matrix holds a thermometer count code in rows
0-1 and a position-occupancy bitmap in rows 2-5. The 2x12 count-only matrix
is the positionless baseline encoding.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np

from .cards import (CARDS_PER_AXIE, COPIES_PER_CARD, MAX_SEQUENCE_LENGTH, N_AXIES,
                    N_CARD_TYPES, RoundAction)

N_ROWS = 2 + MAX_SEQUENCE_LENGTH
FLAT_DIM = N_ROWS * N_CARD_TYPES
DOUZERO_DIM = 2 * N_CARD_TYPES
DEFAULT_ACTION_CAP = 2_000_000


class EncodingError(ValueError):
    pass


class DecodingError(ValueError):
    pass


class ActionSpaceOverflow(RuntimeError):
    """Legal set larger than the configured cap."""


def _check_structure(action: RoundAction) -> None:
    if len(action.sequences) != N_AXIES:
        raise EncodingError(f"expected {N_AXIES} sequences, got {len(action.sequences)}")
    for j, seq in enumerate(action.sequences):
        if len(seq) > MAX_SEQUENCE_LENGTH:
            raise EncodingError(f"axie {j}: sequence longer than {MAX_SEQUENCE_LENGTH}")
        for card in seq:
            if card // CARDS_PER_AXIE != j or card < 0:
                raise EncodingError(f"axie {j}: card {card} belongs to another axie")
        for card in set(seq):
            if seq.count(card) > COPIES_PER_CARD:
                raise EncodingError(f"axie {j}: card {card} used more than {COPIES_PER_CARD} times")


@lru_cache(maxsize=None)
def _sequence_columns(seq: tuple[int, ...]) -> np.ndarray:
    m = np.zeros((N_ROWS, N_CARD_TYPES))
    for pos, card in enumerate(seq):
        m[2 + pos, card] = 1.0
        if m[0, card]:
            m[1, card] = 1.0
        m[0, card] = 1.0
    m.setflags(write=False)
    return m


def encode(action: RoundAction) -> np.ndarray:
    """6x12 {0,1} matrix of ``action``."""
    _check_structure(action)
    m = np.zeros((N_ROWS, N_CARD_TYPES))
    for seq in action.sequences:
        m += _sequence_columns(seq)
    return m


def flatten(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix, dtype=np.float64).reshape(-1)


def unflatten(flat: np.ndarray) -> np.ndarray:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (FLAT_DIM,):
        raise DecodingError(f"flat action must have {FLAT_DIM} entries, got shape {flat.shape}")
    return flat.reshape(N_ROWS, N_CARD_TYPES)


def encode_flat(action: RoundAction) -> np.ndarray:
    return flatten(encode(action))


def encode_douzero(action: RoundAction) -> np.ndarray:
    """2x12 count-only matrix; order within a sequence is lost."""
    return encode(action)[:2].copy()


def decode(matrix: np.ndarray) -> RoundAction:
    m = np.asarray(matrix)
    if m.shape != (N_ROWS, N_CARD_TYPES):
        raise DecodingError(f"expected a {N_ROWS}x{N_CARD_TYPES} matrix, got {m.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise DecodingError("matrix entries must be 0 or 1")
    m = m.astype(np.int64)
    sequences = []
    for j in range(N_AXIES):
        slots: dict[int, int] = {}
        for card in range(j * CARDS_PER_AXIE, (j + 1) * CARDS_PER_AXIE):
            c0, c1 = m[0, card], m[1, card]
            if c1 and not c0:
                raise DecodingError(f"card {card}: count digits (0,1) break the thermometer code")
            positions = np.flatnonzero(m[2:, card])
            if len(positions) != c0 + c1:
                raise DecodingError(
                    f"card {card}: {c0 + c1} copies but {len(positions)} position digits set")
            for p in positions:
                if p in slots:
                    raise DecodingError(f"axie {j}: position {p} occupied by two cards")
                slots[int(p)] = card
        if sorted(slots) != list(range(len(slots))):
            raise DecodingError(f"axie {j}: occupied positions {sorted(slots)} are not a prefix")
        sequences.append(tuple(slots[p] for p in range(len(slots))))
    return RoundAction(tuple(sequences))


def pool_max(flat: np.ndarray, window: int = 2, stride: int = 2) -> np.ndarray:
    """1-D max pooling along the last axis (no padding)."""
    x = np.asarray(flat, dtype=np.float64)
    d = x.shape[-1]
    n_out = (d - window) // stride + 1
    idx = np.arange(n_out)[:, None] * stride + np.arange(window)[None, :]
    return x[..., idx].max(axis=-1)


# ---------------------------------------------------------------- enumeration

@lru_cache(maxsize=65536)
def _sequences_cached(hand: tuple[int, ...], budget: int, costs: tuple[int, ...],
                      first_card: int, max_length: int) -> tuple[tuple[int, ...], ...]:
    out: list[tuple[int, ...]] = [()]
    frontier: list[tuple[tuple[int, ...], list[int], int]] = [((), list(hand), budget)]
    for _ in range(max_length):
        nxt = []
        for seq, left, money in frontier:
            for j in range(len(hand)):
                if left[j] > 0 and costs[j] <= money:
                    rest = list(left)
                    rest[j] -= 1
                    nxt.append((seq + (first_card + j,), rest, money - costs[j]))
        # generated in lexicographic order within each length
        out.extend(s for s, _, _ in nxt)
        frontier = nxt
    return tuple(out)


def enumerate_sequences(hand_counts: Sequence[int], energy_budget: int | None = None,
                        costs: Sequence[int] = (1, 1, 1, 1), first_card: int = 0,
                        max_length: int = MAX_SEQUENCE_LENGTH) -> list[tuple[int, ...]]:
    """Ordered card sequences one axie can play, shortest first then lexicographic.

    ``energy_budget=None`` means unlimited energy. Card ids are ``first_card + j``.
    """
    hand = tuple(min(int(h), COPIES_PER_CARD) for h in hand_counts)
    budget = 10 ** 6 if energy_budget is None else int(energy_budget)
    return list(_sequences_cached(hand, budget, tuple(int(c) for c in costs),
                                  int(first_card), int(max_length)))


class ActionSet:
    """Compact legal set: per-axie sequence lists plus canonical index triples.

    Joint actions are materialized lazily; ``encode_all`` builds the (n, 72)
    matrix from cached per-sequence columns.
    """

    def __init__(self, per_axie: list[list[tuple[int, ...]]], index: np.ndarray):
        self.per_axie = per_axie
        self.index = index

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, i: int) -> RoundAction:
        i0, i1, i2 = self.index[i]
        return RoundAction((self.per_axie[0][i0], self.per_axie[1][i1], self.per_axie[2][i2]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def actions(self) -> list[RoundAction]:
        return list(self)

    def encode_all(self) -> np.ndarray:
        out = np.zeros((len(self), FLAT_DIM))
        for j in range(N_AXIES):
            table = np.stack([_sequence_columns(s).reshape(-1) for s in self.per_axie[j]])
            out += table[self.index[:, j]]
        return out

    def encode_douzero_all(self) -> np.ndarray:
        return self.encode_all()[:, :DOUZERO_DIM]

    def position_of(self, action: RoundAction) -> int:
        """Canonical index of ``action`` in this set, or -1."""
        try:
            key = tuple(self.per_axie[j].index(action.sequences[j]) for j in range(N_AXIES))
        except ValueError:
            return -1
        hit = np.flatnonzero(np.all(self.index == np.array(key), axis=1))
        return int(hit[0]) if len(hit) else -1


def _joint_mask(costs: list[np.ndarray], budget: int | None) -> np.ndarray:
    if budget is None:
        return np.ones((len(costs[0]), len(costs[1]), len(costs[2])), dtype=bool)
    total = costs[0][:, None, None] + costs[1][None, :, None] + costs[2][None, None, :]
    return total <= budget


def build_action_set(hand: Sequence[int], alive: Sequence[bool], card_costs: Sequence[int],
                     energy: int | None, cap: int = DEFAULT_ACTION_CAP,
                     max_length: int = MAX_SEQUENCE_LENGTH) -> ActionSet:
    """Legal joint actions for one player given hand counts (12), alive flags (3), costs (12)."""
    per_axie, costs = [], []
    for j in range(N_AXIES):
        lo = j * CARDS_PER_AXIE
        if alive[j]:
            seqs = enumerate_sequences(hand[lo:lo + CARDS_PER_AXIE], energy,
                                       card_costs[lo:lo + CARDS_PER_AXIE], lo, max_length)
        else:
            seqs = [()]
        per_axie.append(seqs)
        costs.append(np.array([sum(card_costs[c] for c in s) for s in seqs], dtype=np.int64))
    upper = len(per_axie[0]) * len(per_axie[1]) * len(per_axie[2])
    if upper > cap:
        mask = _joint_mask(costs, energy)
        n = int(mask.sum())
        if n > cap:
            raise ActionSpaceOverflow(f"legal set has {n} actions, cap is {cap}")
    else:
        mask = _joint_mask(costs, energy)
    index = np.argwhere(mask)
    return ActionSet(per_axie, index)


def legal_action_set(state, player: int = 0, cap: int = DEFAULT_ACTION_CAP) -> ActionSet:
    """U(s) for ``player`` as a compact :class:`ActionSet`."""
    if state.terminal:
        raise ValueError("no legal actions in a terminal state")
    team = state.teams[player]
    return build_action_set(state.hands[player], state.alive(player), team.cost.tolist(),
                            int(state.energy[player]), cap, state.config.max_sequence_length)


def enumerate_actions(state, player: int = 0, cap: int = DEFAULT_ACTION_CAP) -> list[RoundAction]:
    return legal_action_set(state, player, cap).actions()


def count_actions(hand: Sequence[int], alive: Sequence[bool], card_costs: Sequence[int],
                  energy: int | None, max_length: int = MAX_SEQUENCE_LENGTH) -> int:
    """Size of the legal set, counted over the joint cost tensor without materializing it."""
    costs = []
    for j in range(N_AXIES):
        lo = j * CARDS_PER_AXIE
        seqs = (enumerate_sequences(hand[lo:lo + CARDS_PER_AXIE], energy,
                                    card_costs[lo:lo + CARDS_PER_AXIE], lo, max_length)
                if alive[j] else [()])
        costs.append(np.array([sum(card_costs[c] for c in s) for s in seqs], dtype=np.int8))
    if energy is None:
        # every cell of the joint tensor is feasible
        return len(costs[0]) * len(costs[1]) * len(costs[2])
    return int(_joint_mask(costs, energy).sum())


def count_unconstrained(max_length: int = MAX_SEQUENCE_LENGTH) -> int:
    """Joint action count for full hands and unlimited energy (285**3 at length 4)."""
    full = [COPIES_PER_CARD] * N_CARD_TYPES
    return count_actions(full, [True] * N_AXIES, [1] * N_CARD_TYPES, None, max_length)
