"""Fast invariant checks shared by ``latentcard verify`` and the test-suite."""
from __future__ import annotations

import itertools
import time
from dataclasses import replace
from typing import Callable, Optional

import numpy as np

from . import action_codec as codec
from .agent import Agent, actor_objective_grad
from .cards import RoundAction, default_team
from .embedding import j1_loss, j1_loss_and_grads
from .env import EnvConfig, new_game, step_two_player, terminal_reward
from .latent_index import distance, topk_indices
from .nn import Network, mlp, numerical_gradient, relative_error

GRAD_TOL = 1e-4
FD_EPS = 1e-5


def all_single_axie_sequences(axie: int) -> list[tuple[int, ...]]:
    return codec.enumerate_sequences([2, 2, 2, 2], None, first_card=4 * axie)


def brute_force_sequences(max_length: int = 4) -> list[tuple[int, ...]]:
    """Ordered sequences over 4 symbols with each symbol used at most twice, by itertools."""
    out = []
    for n in range(max_length + 1):
        out += [s for s in itertools.product(range(4), repeat=n)
                if all(s.count(c) <= 2 for c in range(4))]
    return out


def random_joint_action(rng: np.random.Generator) -> RoundAction:
    seqs = [all_single_axie_sequences(j) for j in range(3)]
    return RoundAction(tuple(seqs[j][int(rng.integers(len(seqs[j])))] for j in range(3)))


def topk_oracle(embeddings: np.ndarray, query, k: int) -> list[int]:
    """Sort every candidate by (distance, index) and truncate."""
    keyed = sorted((distance(e, query), i) for i, e in enumerate(embeddings))
    return [i for _, i in keyed[:k]]


def check_counts() -> str:
    per_axie = len(codec.enumerate_sequences([2, 2, 2, 2], None))
    brute = len(brute_force_sequences())
    total = codec.count_unconstrained()
    assert per_axie == brute == 285, (per_axie, brute)
    assert total == per_axie ** 3 == 23_149_125, total
    return f"285 per axie, {total} joint"


def check_codec(n_random: int = 10_000, seed: int = 0) -> str:
    for j in range(3):
        seen = set()
        for seq in all_single_axie_sequences(j):
            a = RoundAction.of(*[seq if i == j else () for i in range(3)])
            m = codec.encode(a)
            assert codec.decode(m) == a, a
            assert np.array_equal(codec.encode_douzero(a), m[:2])
            seen.add(m.tobytes())
        assert len(seen) == 285, "encode not injective on single-axie sequences"
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        a = random_joint_action(rng)
        m = codec.encode(a)
        assert codec.decode(m) == a
        assert np.array_equal(codec.encode_douzero(a), m[:2])
        assert np.array_equal(codec.unflatten(codec.flatten(m)), m)
    return f"3x285 sequences + {n_random} joint actions round-trip"


def check_topk(n_instances: int = 1000, seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        n = int(rng.integers(1, 300))
        dim = int(rng.integers(1, 17))
        # coarse grid values force exact distance ties
        emb = rng.integers(-3, 4, size=(n, dim)).astype(np.float64) / 2
        if rng.random() < 0.5:
            emb = rng.normal(size=(n, dim))
        q = rng.integers(-3, 4, size=dim) / 2 if rng.random() < 0.5 else rng.normal(size=dim)
        k = int(rng.integers(1, n + 5))
        idx, _ = topk_indices(emb, q, k)
        assert idx.tolist() == topk_oracle(emb, q, k)
    return f"{n_instances} instances exact"


def _tiny(dims, hidden, rng) -> Network:
    net = mlp(dims, hidden, seed=int(rng.integers(2 ** 31)))
    net.params[...] += rng.normal(0, 0.1, size=net.params.shape)  # non-zero biases
    return net


def gradient_errors(n_instances: int = 100, seed: int = 0) -> dict[str, float]:
    """Worst relative error of J1, critic-loss and actor-objective gradients vs central differences."""
    rng = np.random.default_rng(seed)
    worst = {"j1": 0.0, "critic": 0.0, "actor": 0.0}
    for _ in range(n_instances):
        ds, da, dz, b = int(rng.integers(2, 6)), int(rng.integers(2, 8)), int(rng.integers(1, 4)), 5
        s, a, s2 = rng.normal(size=(b, ds)), rng.normal(size=(b, da)), rng.normal(size=(b, ds))
        f = _tiny([da, 4, dz], "tanh", rng)
        m = _tiny([ds + dz, 5, ds], "tanh", rng)
        _, g_f, g_m = j1_loss_and_grads(f, m, s, a, s2)
        n_f = numerical_gradient(lambda p: j1_loss(Network(f.layer_dims, f.activations, p), m, s, a, s2),
                                 f.params.copy(), FD_EPS)
        n_m = numerical_gradient(lambda p: j1_loss(f, Network(m.layer_dims, m.activations, p), s, a, s2),
                                 m.params.copy(), FD_EPS)
        worst["j1"] = max(worst["j1"], relative_error(g_f, n_f), relative_error(g_m, n_m))

        critic = _tiny([ds + da, 6, 5, 1], "relu", rng)
        targets = rng.normal(size=b)
        x = np.concatenate([s, a], axis=1)

        def critic_loss(p):
            pred = Network(critic.layer_dims, critic.activations, p).forward(x)[:, 0]
            return float(np.mean((pred - targets) ** 2))

        pred, cache = critic.forward_cache(x)
        g_c, _ = critic.backward(cache, (2 * (pred[:, 0] - targets) / b)[:, None])
        worst["critic"] = max(worst["critic"],
                              relative_error(g_c, numerical_gradient(critic_loss, critic.params.copy())))

        actor = _tiny([ds, 4, da], "tanh", rng)
        _, g_a = actor_objective_grad(actor, critic, s)

        def objective(p):
            raw = Network(actor.layer_dims, actor.activations, p).forward(s)
            return float(critic.forward(np.concatenate([s, raw], axis=1)).mean())

        worst["actor"] = max(worst["actor"],
                             relative_error(g_a, numerical_gradient(objective, actor.params.copy())))
    return worst


def check_gradients(n_instances: int = 100, seed: int = 0) -> str:
    worst = gradient_errors(n_instances, seed)
    assert all(v < GRAD_TOL for v in worst.values()), worst
    return ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


def terminal_state(result: int, discards: int):
    """Fresh game forced terminal with ``result`` and ``discards`` for player 0."""
    team = default_team()
    state = new_game(team, team, seed=0)
    health = state.health.copy()
    if result == 1:
        health[3:] = 0
    elif result == -1:
        health[:3] = 0
    return replace(state, health=health, terminal=True, result=result,
                   discards=np.array([discards, 0]))


def check_reward(c: float = 0.1) -> str:
    cases = [(1, 0, 1.0), (0, 2, -2 * c), (-1, 3, -1 - 3 * c), (1, 4, 1 - 4 * c)]
    for result, nd, expected in cases:
        got = terminal_reward(terminal_state(result, nd), c)
        assert got == 1.0 * result - c * nd == expected, (result, nd, got)
    team = default_team()
    state = new_game(team, team, seed=3)
    nxt, done = step_two_player(state, RoundAction(), RoundAction())
    assert not done and terminal_reward(nxt, c) == 0.0
    return "win/tie/loss cases exact, non-terminal 0"


def check_checkpoint(path) -> str:
    agent = Agent.load(path)
    team = default_team()
    state = new_game(team, team, seed=0, config=EnvConfig(discard_penalty=agent.config.c))
    agent.act(state, 0)
    return f"{agent.config.variant} checkpoint loads and acts"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("action-count", check_counts),
    ("codec-roundtrip", lambda: check_codec(2000)),
    ("topk-oracle", lambda: check_topk(300)),
    ("gradients", lambda: check_gradients(20)),
    ("reward-formula", check_reward),
]


def run_checks(checkpoint: Optional[str] = None, echo: Callable[[str], None] = print) -> bool:
    checks = list(CHECKS)
    if checkpoint:
        checks.append(("checkpoint", lambda: check_checkpoint(checkpoint)))
    ok = True
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            detail = fn()
            status = "PASS"
        except Exception as exc:  # report every failure, keep going
            detail, status, ok = f"{type(exc).__name__}: {exc}", "FAIL", False
        echo(f"{status} {name} ({time.perf_counter() - t0:.1f}s) {detail}")
    return ok
