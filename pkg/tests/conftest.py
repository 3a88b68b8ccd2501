import numpy as np
import pytest

from latentcard.cards import default_team
from latentcard.env import new_game, rule_based_opponent, step_two_player

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def team():
    return default_team()


def random_playout_states(n_states, seed=0):
    """States visited by uniform-vs-uniform play, terminal ones included."""
    t = default_team()
    rng = np.random.default_rng(seed)
    states, game = [], 0
    while len(states) < n_states:
        state = new_game(t, t, seed=seed * 100_003 + game)
        game += 1
        states.append(state)
        while not state.terminal and len(states) < n_states:
            a = rule_based_opponent(state, rng, 0)
            b = rule_based_opponent(state, rng, 1)
            state, _ = step_two_player(state, a, b)
            states.append(state)
    return states


@pytest.fixture(scope="session")
def random_dataset_100k():
    from latentcard.embedding import collect_random_transitions

    return collect_random_transitions(100_000, seed=0)


@pytest.fixture(scope="session")
def dataset_50k(random_dataset_100k):
    from latentcard.embedding import TransitionDataset

    # collection keeps whole episodes in order, so a shorter run is a prefix of a longer one
    ds = random_dataset_100k
    return TransitionDataset(ds.s[:50_000], ds.a[:50_000], ds.s_next[:50_000], ds.seed, ds.env_digest)


@pytest.fixture(scope="session")
def pretrained(dataset_50k):
    from latentcard.embedding import pretrain

    return pretrain(dataset_50k, epochs=20, batch_size=256, lr=1e-3, seed=0)
