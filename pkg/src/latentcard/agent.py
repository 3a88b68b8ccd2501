"""Stage 2: actor-critic training over a frozen action embedding, plus full-evaluation baselines.

Decision rule of the latent-retrieval agent: the actor proposes a raw action
vector (possibly infeasible), the k legal actions closest to it in latent space
are retrieved, and the critic picks among them. The baselines score every
legal action with a critic over a positionless encoding.
"""
from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import action_codec
from .action_codec import DOUZERO_DIM, FLAT_DIM, ActionSet, pool_max
from .cards import RoundAction, TeamSpec
from .embedding import derive_seed, episode_seed
from .env import (N_FEATURES, EnvConfig, GameState, default_teams, env_digest,
                  featurize, new_game, step)
from .latent_index import topk_indices
from .nn import Adam, CheckpointError, Network, TrainingError, mlp, network_from_bytes, save_params

VARIANTS = ("latent", "full_eval", "full_eval_pool")
_BUNDLE_MAGIC = b"LCBN"
_BUNDLE_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    variant: str = "latent"
    k: int = 32
    c: float = 0.1
    sigma: float = 0.1
    epsilon: float = 0.1
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 128
    episodes_per_iteration: int = 16
    critic_epochs: int = 1
    actor_steps: int = 4
    actor_hidden: tuple = (128, 128)
    critic_hidden: tuple = (128, 128)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if not 0.0 <= self.epsilon <= 1.0 or self.sigma < 0 or self.c < 0:
            raise ConfigError("need 0 <= epsilon <= 1, sigma >= 0, c >= 0")
        object.__setattr__(self, "actor_hidden", tuple(int(h) for h in self.actor_hidden))
        object.__setattr__(self, "critic_hidden", tuple(int(h) for h in self.critic_hidden))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()


def action_dim(variant: str) -> int:
    return {"latent": FLAT_DIM, "full_eval": DOUZERO_DIM, "full_eval_pool": DOUZERO_DIM // 2}[variant]


def variant_features(flat: np.ndarray, variant: str) -> np.ndarray:
    """Critic-side action encoding for ``variant`` from 72-wide flat encodings."""
    if variant == "latent":
        return flat
    douzero = flat[..., :DOUZERO_DIM]
    if variant == "full_eval":
        return douzero
    return pool_max(douzero, 2, 2)


def _critic_input(s: np.ndarray, feats: np.ndarray) -> np.ndarray:
    return np.concatenate([np.broadcast_to(s, (len(feats), len(s))), feats], axis=1)


# ---------------------------------------------------------------- decision rules

def raw_action(actor: Network, s: np.ndarray) -> np.ndarray:
    return actor.forward(s)


def _argmax_first(q: np.ndarray, idx: np.ndarray) -> int:
    best = q.max()
    return int(idx[q == best].min())


def select_index(s: np.ndarray, legal: ActionSet, actor: Network, f: Network, critic: Network,
                 k: int, raw: Optional[np.ndarray] = None,
                 flat: Optional[np.ndarray] = None) -> int:
    """Canonical index of the critic-argmax among the k latent neighbours of the raw action."""
    if len(legal) == 0:
        raise ValueError("empty legal set")
    flat = legal.encode_all() if flat is None else flat
    raw = actor.forward(s) if raw is None else raw
    near, _ = topk_indices(f.forward(flat), f.forward(raw), k)
    # score in canonical order so k = |U(s)| evaluates exactly the full-evaluation matrix
    near = np.sort(near)
    q = critic.forward(_critic_input(s, flat[near]))[:, 0]
    return _argmax_first(q, near)


def select(s, legal, actor: Network, f: Network, critic: Network, k: int) -> RoundAction:
    if not isinstance(legal, ActionSet):
        return _select_list(s, list(legal), actor, f, critic, k)
    return legal[select_index(s, legal, actor, f, critic, k)]


def _select_list(s, legal: list, actor, f, critic, k) -> RoundAction:
    flat = np.stack([action_codec.encode_flat(a) for a in legal])
    near, _ = topk_indices(f.forward(flat), f.forward(actor.forward(s)), k)
    near = np.sort(near)
    q = critic.forward(_critic_input(s, flat[near]))[:, 0]
    return legal[_argmax_first(q, near)]


def select_full_eval_index(s: np.ndarray, legal: ActionSet, critic: Network, variant: str,
                           flat: Optional[np.ndarray] = None,
                           cap: int = action_codec.DEFAULT_ACTION_CAP) -> int:
    if len(legal) == 0:
        raise ValueError("empty legal set")
    if len(legal) > cap:
        raise action_codec.ActionSpaceOverflow(f"{len(legal)} legal actions exceed cap {cap}")
    flat = legal.encode_all() if flat is None else flat
    feats = variant_features(flat, variant)
    # positionless encodings repeat; score each distinct row once, in first-seen order
    _, first, inverse = np.unique(feats, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    q_unique = critic.forward(_critic_input(s, feats[first[order]]))[:, 0]
    q = q_unique[rank[inverse.reshape(-1)]]
    return _argmax_first(q, np.arange(len(legal)))


def select_full_eval(s, legal: ActionSet, critic: Network, codec_variant: str) -> RoundAction:
    """Argmax of the critic over every legal action (``codec_variant``: latent/full_eval/full_eval_pool)."""
    return legal[select_full_eval_index(s, legal, critic, codec_variant)]


def explore_action(s, legal: ActionSet, actor: Network, f: Network, critic: Network,
                   config: AgentConfig, rng: np.random.Generator,
                   flat: Optional[np.ndarray] = None) -> tuple[int, np.ndarray]:
    """(executed canonical index, raw action used) under epsilon-uniform plus Gaussian raw-action noise."""
    flat = legal.encode_all() if flat is None else flat
    if rng.random() < config.epsilon:
        i = int(rng.integers(len(legal)))
        return i, flat[i].copy()
    raw = actor.forward(s)
    if config.sigma > 0:
        raw = raw + rng.normal(0.0, config.sigma, size=raw.shape)
    return select_index(s, legal, actor, f, critic, config.k, raw=raw, flat=flat), raw


# ---------------------------------------------------------------- learning

@dataclass
class EpisodeBuffer:
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)    # critic-side features of executed actions
    raws: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def add(self, s, a, raw, reward, done):
        self.states.append(s)
        self.actions.append(a)
        self.raws.append(raw)
        self.rewards.append(float(reward))
        self.dones.append(bool(done))

    def __len__(self):
        return len(self.rewards)

    @property
    def episode_return(self) -> float:
        return float(sum(self.rewards))


def mc_returns(episode: EpisodeBuffer) -> np.ndarray:
    """Undiscounted return-to-go for every step."""
    if not episode.dones or not episode.dones[-1]:
        raise ValueError("episode is incomplete: the last transition is not terminal")
    return np.cumsum(np.asarray(episode.rewards, dtype=np.float64)[::-1])[::-1].copy()


def critic_update(critic: Network, opt: Adam, s: np.ndarray, a: np.ndarray,
                  targets: np.ndarray) -> float:
    """One Adam step on the mean squared error; returns the loss before the step."""
    pred, cache = critic.forward_cache(np.concatenate([s, a], axis=1))
    diff = pred[:, 0] - targets
    loss = float(np.mean(diff ** 2))
    if not np.isfinite(loss):
        raise TrainingError("critic loss is not finite")
    grad, _ = critic.backward(cache, (2.0 * diff / len(diff))[:, None])
    opt.step(critic.params, grad)
    return loss


def actor_objective_grad(actor: Network, critic: Network, s: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean critic value at the raw actions and its gradient w.r.t. the actor parameters."""
    raw, a_cache = actor.forward_cache(s)
    q, c_cache = critic.forward_cache(np.concatenate([s, raw], axis=1))
    _, g_in = critic.backward(c_cache, np.full_like(q, 1.0 / len(q)))
    g_actor, _ = actor.backward(a_cache, g_in[:, s.shape[1]:])
    return float(q.mean()), g_actor


def actor_update(actor: Network, opt: Adam, critic: Network, s: np.ndarray) -> float:
    """Gradient-ascent step on the mean critic value of the raw action; the critic is not touched."""
    value, grad = actor_objective_grad(actor, critic, s)
    opt.step(actor.params, -grad)
    return value


# ---------------------------------------------------------------- agent

class Agent:
    """Networks plus the decision rule for one variant."""

    def __init__(self, config: AgentConfig, f: Optional[Network] = None, seed: int = 0,
                 env_digest: str = ""):
        if config.variant == "latent" and f is None:
            raise ConfigError("the latent-retrieval agent needs a pretrained embedding")
        self.config = config
        self.name = config.variant
        self.f = f
        self.env_digest = env_digest
        d_a = action_dim(config.variant)
        self.critic = mlp([N_FEATURES + d_a, *config.critic_hidden, 1], "relu",
                          seed=derive_seed(seed, 0xC0))
        self.actor = (mlp([N_FEATURES, *config.actor_hidden, FLAT_DIM], "tanh",
                          seed=derive_seed(seed, 0xAC))
                      if config.variant == "latent" else None)

    def greedy_index(self, s: np.ndarray, legal: ActionSet, flat=None) -> int:
        if self.config.variant == "latent":
            return select_index(s, legal, self.actor, self.f, self.critic, self.config.k, flat=flat)
        return select_full_eval_index(s, legal, self.critic, self.config.variant, flat=flat)

    def explore_index(self, s, legal: ActionSet, rng, flat=None) -> tuple[int, np.ndarray]:
        flat = legal.encode_all() if flat is None else flat
        if self.config.variant == "latent":
            return explore_action(s, legal, self.actor, self.f, self.critic, self.config, rng, flat)
        if rng.random() < self.config.epsilon:
            i = int(rng.integers(len(legal)))
        else:
            i = select_full_eval_index(s, legal, self.critic, self.config.variant, flat=flat)
        return i, flat[i].copy()

    def act(self, state: GameState, player: int, rng=None) -> RoundAction:
        legal = action_codec.legal_action_set(state, player)
        return legal[self.greedy_index(featurize(state, player), legal)]

    # -- persistence

    def to_bytes(self) -> bytes:
        nets = {"critic": save_params(self.critic)}
        if self.actor is not None:
            nets["actor"] = save_params(self.actor)
        if self.f is not None:
            nets["embedding"] = save_params(self.f)
        names = sorted(nets)
        header = json.dumps({
            "version": _BUNDLE_VERSION, "config": asdict(self.config),
            "config_digest": self.config.digest(), "env_digest": self.env_digest,
            "networks": [[n, len(nets[n])] for n in names],
        }, sort_keys=True).encode()
        return _BUNDLE_MAGIC + struct.pack("<I", len(header)) + header + b"".join(nets[n] for n in names)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Agent":
        if blob[:4] != _BUNDLE_MAGIC:
            raise CheckpointError("not an agent checkpoint (bad magic)")
        try:
            (hlen,) = struct.unpack_from("<I", blob, 4)
            header = json.loads(blob[8:8 + hlen])
        except (struct.error, ValueError) as exc:
            raise CheckpointError(f"corrupt agent checkpoint header: {exc}") from exc
        if header.get("version") != _BUNDLE_VERSION:
            raise CheckpointError(f"agent checkpoint version {header.get('version')} unsupported")
        off = 8 + hlen
        nets = {}
        for name, length in header["networks"]:
            if off + length > len(blob):
                raise CheckpointError(f"truncated agent checkpoint (network {name})")
            nets[name] = network_from_bytes(blob[off:off + length])
            off += length
        config = AgentConfig(**header["config"])
        agent = cls.__new__(cls)
        agent.config = config
        agent.name = config.variant
        agent.env_digest = header["env_digest"]
        agent.f = nets.get("embedding")
        agent.actor = nets.get("actor")
        agent.critic = nets["critic"]
        if config.variant == "latent" and (agent.f is None or agent.actor is None):
            raise CheckpointError("latent agent checkpoint lacks actor or embedding")
        return agent

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Agent":
        return cls.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------- training loop

METRIC_FIELDS = ("iteration", "env_steps", "mean_return", "critic_loss", "mean_q", "wall_clock_ms")


@dataclass
class TrainResult:
    agent: Agent
    metrics: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)


def format_metric(row: dict) -> str:
    return "\t".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in METRIC_FIELDS)


def play_episode(agent: Agent, state: GameState, seat: int, rng: np.random.Generator,
                 c: float) -> EpisodeBuffer:
    buf = EpisodeBuffer()
    variant = agent.config.variant
    while not state.terminal:
        legal = action_codec.legal_action_set(state, seat)
        flat = legal.encode_all()
        s = featurize(state, seat)
        i, raw = agent.explore_index(s, legal, rng, flat)
        # step() re-checks legality of every executed action
        state, reward, done = step(state, legal[i], c=c, seat=seat)
        buf.add(s, variant_features(flat[i], variant), raw, reward, done)
    return buf


def train(config: AgentConfig, total_steps: int, seed: int = 0, f: Optional[Network] = None,
          teams: Optional[tuple[TeamSpec, TeamSpec]] = None, env_config: Optional[EnvConfig] = None,
          checkpoint_every: int = 0, checkpoint_dir=None,
          on_metrics: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Alternate episode collection, Monte-Carlo critic regression and raw-action actor ascent.

    The embedding ``f`` stays frozen. Agents sit in seat ``episode % 2``.
    """
    teams = teams or default_teams()
    env_config = env_config or EnvConfig(discard_penalty=config.c)
    agent = Agent(config, f, seed, env_digest(env_config, teams))
    result = TrainResult(agent)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else None

    def checkpoint(tag: str):
        if ckpt_dir is not None:
            path = ckpt_dir / f"agent_{tag}.bin"
            agent.save(path)
            result.checkpoints.append(path)

    checkpoint("init")
    rng = np.random.default_rng([seed, 41])
    critic_opt = Adam(len(agent.critic.params), config.critic_lr)
    actor_opt = Adam(len(agent.actor.params), config.actor_lr) if agent.actor is not None else None
    start = time.perf_counter()
    steps = episode = iteration = 0
    while steps < total_steps:
        episodes = []
        for _ in range(config.episodes_per_iteration):
            state = new_game(teams[0], teams[1], episode_seed(seed, episode), env_config)
            buf = play_episode(agent, state, episode % 2, rng, config.c)
            episodes.append(buf)
            episode += 1
            steps += len(buf)
            if steps >= total_steps:
                break
        iteration += 1
        s = np.array([x for b in episodes for x in b.states])
        a = np.array([x for b in episodes for x in b.actions])
        targets = np.concatenate([mc_returns(b) for b in episodes])

        losses = []
        for _ in range(config.critic_epochs):
            order = rng.permutation(len(s))
            for lo in range(0, len(order), config.batch_size):
                idx = order[lo:lo + config.batch_size]
                losses.append(critic_update(agent.critic, critic_opt, s[idx], a[idx], targets[idx]))
        if agent.actor is not None:
            values = []
            for _ in range(config.actor_steps):
                idx = rng.permutation(len(s))[:config.batch_size]
                values.append(actor_update(agent.actor, actor_opt, agent.critic, s[idx]))
            mean_q = float(np.mean(values))
        else:
            mean_q = float(np.mean(agent.critic.forward(np.concatenate([s, a], axis=1))))
        row = {
            "iteration": iteration, "env_steps": steps,
            "mean_return": float(np.mean([b.episode_return for b in episodes])),
            "critic_loss": float(np.mean(losses)), "mean_q": mean_q,
            "wall_clock_ms": int((time.perf_counter() - start) * 1000),
        }
        result.metrics.append(row)
        if on_metrics:
            on_metrics(row)
        if checkpoint_every and iteration % checkpoint_every == 0:
            checkpoint(f"{iteration:06d}")
    if iteration:
        checkpoint("final")
    return result
