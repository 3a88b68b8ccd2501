"""Stage 1: learn the action embedding from transition effects.

An embedding network ``f`` (72 -> 16) and a transition model ``m`` ((46+16) -> 46)
are trained jointly to predict next-state features from (state features,
embedded action) under squared error. Only ``f`` is used afterwards.
"""
from __future__ import annotations

import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import action_codec
from .action_codec import FLAT_DIM
from .cards import TeamSpec
from .env import (N_FEATURES, EnvConfig, GameState, env_digest, featurize, new_game,
                  opponent_rng, rule_based_opponent, default_teams, step, step_two_player)
from .nn import Adam, Network, TrainingError, mlp

LATENT_DIM = 16
_DS_MAGIC = b"LCDS"
_DS_VERSION = 1
_DS_HEADER = struct.Struct("<4sHQIIIq64s")


class DatasetError(ValueError):
    pass


@dataclass
class TransitionDataset:
    s: np.ndarray         # (N, 46)
    a: np.ndarray         # (N, 72)
    s_next: np.ndarray    # (N, 46)
    seed: int
    env_digest: str

    def __len__(self) -> int:
        return len(self.s)

    def records(self):
        return list(zip(self.s, self.a, self.s_next))

    def to_bytes(self) -> bytes:
        header = _DS_HEADER.pack(_DS_MAGIC, _DS_VERSION, len(self), N_FEATURES, FLAT_DIM,
                                 N_FEATURES, int(self.seed), self.env_digest.encode("ascii"))
        body = np.concatenate([self.s, self.a, self.s_next], axis=1).astype("<f8").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "TransitionDataset":
        if len(blob) < _DS_HEADER.size:
            raise DatasetError("truncated dataset header")
        magic, version, count, ds, da, dn, seed, digest = _DS_HEADER.unpack_from(blob)
        if magic != _DS_MAGIC:
            raise DatasetError("not a transition dataset (bad magic)")
        if version != _DS_VERSION:
            raise DatasetError(f"dataset format version {version}, expected {_DS_VERSION}")
        if (ds, da, dn) != (N_FEATURES, FLAT_DIM, N_FEATURES):
            raise DatasetError(f"unexpected record dims {(ds, da, dn)}")
        width = ds + da + dn
        expected = _DS_HEADER.size + 8 * width * count
        if len(blob) != expected:
            raise DatasetError(f"dataset body has {len(blob)} bytes, header implies {expected}")
        rows = np.frombuffer(blob, dtype="<f8", offset=_DS_HEADER.size).reshape(count, width)
        rows = rows.astype(np.float64)
        return cls(rows[:, :ds], rows[:, ds:ds + da], rows[:, ds + da:], seed,
                   digest.decode("ascii"))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "TransitionDataset":
        return cls.from_bytes(Path(path).read_bytes())

    def to_text(self, path) -> None:
        rows = np.concatenate([self.s, self.a, self.s_next], axis=1)
        np.savetxt(path, rows, fmt="%.17g", delimiter=" ",
                   header=f"count={len(self)} dims=46,72,46 seed={self.seed} env={self.env_digest}")


def derive_seed(*parts: int) -> int:
    """Deterministic 32-bit seed from non-negative integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def episode_seed(seed: int, episode: int) -> int:
    return derive_seed(seed, episode)


def _random_episode(args) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    teams, config, seed, episode = args
    seat = episode % 2
    state = new_game(teams[0], teams[1], episode_seed(seed, episode), config)
    rng = np.random.default_rng([seed, episode, 1])
    s, a, s2 = [], [], []
    while not state.terminal:
        legal = action_codec.legal_action_set(state, seat)
        action = legal[int(rng.integers(len(legal)))]
        nxt, _, _ = step(state, action, seat=seat)
        s.append(featurize(state, seat))
        a.append(action_codec.encode_flat(action))
        s2.append(featurize(nxt, seat))
        state = nxt
    return np.array(s), np.array(a), np.array(s2)


def collect_random_transitions(n_transitions: int, seed: int,
                               teams: Optional[tuple[TeamSpec, TeamSpec]] = None,
                               config: Optional[EnvConfig] = None,
                               workers: int = 1) -> TransitionDataset:
    """Play episodes with uniformly random legal actions and keep the first ``n_transitions`` steps.

    Episode ``i`` is seeded from ``(seed, i)`` and seats the agent at ``i % 2``,
    so the result does not depend on ``workers``.
    """
    if n_transitions <= 0:
        raise ValueError("n_transitions must be positive")
    teams = teams or default_teams()
    config = config or EnvConfig()
    chunks: list[tuple] = []
    have, episode, block = 0, 0, max(8, 4 * workers)
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while have < n_transitions:
            jobs = [(teams, config, seed, episode + i) for i in range(block)]
            episode += block
            results = pool.map(_random_episode, jobs) if pool else map(_random_episode, jobs)
            for ep in results:
                if have >= n_transitions:
                    break
                chunks.append(ep)
                have += len(ep[0])
    finally:
        if pool:
            pool.shutdown()
    s, a, s2 = (np.concatenate([c[i] for c in chunks])[:n_transitions] for i in range(3))
    return TransitionDataset(s, a, s2, seed, env_digest(config, teams))


# ---------------------------------------------------------------- objective

def make_networks(latent_dim: int = LATENT_DIM, f_hidden: Sequence[int] = (64,),
                  m_hidden: Sequence[int] = (128,), seed: int = 0) -> tuple[Network, Network]:
    f = mlp([FLAT_DIM, *f_hidden, latent_dim], "tanh", seed=derive_seed(seed, 0xF0, 2))
    m = mlp([N_FEATURES + latent_dim, *m_hidden, N_FEATURES], "tanh", seed=derive_seed(seed, 0xF0, 4))
    return f, m


def j1_loss(f: Network, m: Network, s, a, s_next) -> float:
    """Batch mean of the per-record mean squared error of ``m(s ++ f(a))`` against ``s_next``."""
    pred = m.forward(np.concatenate([np.atleast_2d(s), np.atleast_2d(f.forward(a))], axis=1))
    return float(np.mean((pred - np.atleast_2d(s_next)) ** 2))


def j1_loss_and_grads(f: Network, m: Network, s, a, s_next) -> tuple[float, np.ndarray, np.ndarray]:
    s, a, s_next = np.atleast_2d(s), np.atleast_2d(a), np.atleast_2d(s_next)
    z, f_cache = f.forward_cache(a)
    pred, m_cache = m.forward_cache(np.concatenate([s, z], axis=1))
    diff = pred - s_next
    loss = float(np.mean(diff ** 2))
    g_m, g_in = m.backward(m_cache, 2.0 * diff / diff.size)
    g_f, _ = f.backward(f_cache, g_in[:, s.shape[1]:])
    return loss, g_f, g_m


@dataclass
class PretrainResult:
    f: Network
    m: Network
    history: list = field(default_factory=list)   # (epoch, train J1, holdout J1)
    best_epoch: int = 0

    def history_table(self) -> str:
        lines = ["epoch\ttrain_j1\tholdout_j1"]
        lines += [f"{e}\t{tr:.17g}\t{ho:.17g}" for e, tr, ho in self.history]
        return "\n".join(lines) + "\n"


def pretrain(dataset: TransitionDataset, epochs: int = 20, batch_size: int = 256,
             lr: float = 1e-3, seed: int = 0, latent_dim: int = LATENT_DIM,
             f_hidden: Sequence[int] = (64,), m_hidden: Sequence[int] = (128,),
             holdout_fraction: float = 0.1) -> PretrainResult:
    """Minimize J1 with Adam on a seeded 90/10 split; keep the parameters of the best holdout epoch."""
    n = len(dataset)
    if n < 2:
        raise ValueError("dataset too small to split")
    rng = np.random.default_rng([seed, 3])
    perm = rng.permutation(n)
    n_hold = max(1, int(round(n * holdout_fraction)))
    hold, train = perm[:n_hold], perm[n_hold:]
    f, m = make_networks(latent_dim, f_hidden, m_hidden, seed)
    opt_f, opt_m = Adam(len(f.params), lr), Adam(len(m.params), lr)

    def evaluate(idx):
        return j1_loss(f, m, dataset.s[idx], dataset.a[idx], dataset.s_next[idx])

    history = [(0, evaluate(train), evaluate(hold))]
    best = (history[0][2], 0, f.params.copy(), m.params.copy())
    for epoch in range(1, epochs + 1):
        order = rng.permutation(train)
        for b, lo in enumerate(range(0, len(order), batch_size)):
            idx = order[lo:lo + batch_size]
            loss, g_f, g_m = j1_loss_and_grads(f, m, dataset.s[idx], dataset.a[idx],
                                               dataset.s_next[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"J1 diverged at epoch {epoch}, batch {b}")
            opt_f.step(f.params, g_f)
            opt_m.step(m.params, g_m)
        history.append((epoch, evaluate(train), evaluate(hold)))
        if history[-1][2] < best[0]:
            best = (history[-1][2], epoch, f.params.copy(), m.params.copy())
    f.params[...] = best[2]
    m.params[...] = best[3]
    return PretrainResult(f, m, history, best[1])


def embed(f: Network, a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != FLAT_DIM:
        raise ValueError(f"flat action must have {FLAT_DIM} entries")
    return f.forward(a)


# ---------------------------------------------------------------- effect similarity

def _sample_states(seed: int, n_states: int, teams, config, max_actions: int):
    rng = np.random.default_rng([seed, 11])
    out: list[GameState] = []
    episode = 0
    while len(out) < n_states:
        state = new_game(teams[0], teams[1], episode_seed(seed + 7919, episode), config)
        episode += 1
        while not state.terminal and len(out) < n_states:
            legal = action_codec.legal_action_set(state, 0)
            if 2 <= len(legal) <= max_actions:
                out.append(state)
            state, _, _ = step(state, legal[int(rng.integers(len(legal)))])
    return out


def effect_pairs(f: Network, n_pairs: int = 1000, seed: int = 0, teams=None,
                 config: Optional[EnvConfig] = None, max_actions: int = 600):
    """Latent distances for same-effect action pairs and for random action pairs.

    Pairs are drawn from the same state. Two actions have the same effect when
    the next-state features coincide (opponent reply and discard randomness are
    fixed by the state, so this is exact, not sampled).
    """
    from .latent_index import distance

    teams = teams or default_teams()
    config = config or EnvConfig()
    rng = np.random.default_rng([seed, 12])
    same, rand = [], []
    states_seen = 0
    while len(same) < n_pairs or len(rand) < n_pairs:
        for state in _sample_states(seed + states_seen, 20, teams, config, max_actions):
            legal = action_codec.legal_action_set(state, 0)
            opp = rule_based_opponent(state, opponent_rng(state, 1), 1, config.opponent_mode)
            groups: dict[bytes, list[int]] = {}
            for i in range(len(legal)):
                nxt, _ = step_two_player(state, legal[i], opp)
                groups.setdefault(featurize(nxt, 0).tobytes(), []).append(i)
            emb = f.forward(legal.encode_all())
            multi = [g for g in groups.values() if len(g) > 1]
            for _ in range(min(25, len(multi))):
                if len(same) >= n_pairs:
                    break
                g = multi[int(rng.integers(len(multi)))]
                i, j = rng.choice(g, size=2, replace=False)
                same.append(distance(emb[i], emb[j]))
            for _ in range(25):
                if len(rand) >= n_pairs:
                    break
                i, j = rng.choice(len(legal), size=2, replace=False)
                rand.append(distance(emb[i], emb[j]))
        states_seen += 20
    return np.array(same), np.array(rand)


def effect_similarity_test(f: Network, n_pairs: int = 1000, seed: int = 0, **kwargs):
    """One-sided Mann-Whitney test that same-effect pairs sit closer than random pairs.

    Returns ``(same_distances, random_distances, p_value)``.
    """
    from scipy.stats import mannwhitneyu

    same, rand = effect_pairs(f, n_pairs, seed, **kwargs)
    return same, rand, float(mannwhitneyu(same, rand, alternative="less").pvalue)
