from dataclasses import replace

import numpy as np
import pytest

from latentcard.cards import (AxieSpec, CardSpec, ConfigurationError, RoundAction, TeamSpec,
                              default_team, dump_team, load_team, team_from_records)
from latentcard.env import (N_FEATURES, EnvConfig, IllegalActionError, ReplayLogger, UsageError,
                            check_legal, combo_attack, featurize, is_legal, new_game, read_replay,
                            rule_based_opponent, step, step_two_player, terminal_reward)

from conftest import random_playout_states

EMPTY = RoundAction()


def test_new_game_initial_state(team):
    s = new_game(team, team, seed=7)
    assert s.energy.tolist() == [3, 3]
    assert s.hands.sum(axis=1).tolist() == [3, 3]
    assert s.round_index == 0 and not s.terminal
    assert s == new_game(team, team, seed=7)
    assert s != new_game(team, team, seed=8)


def test_team_with_five_axies_rejected(team):
    with pytest.raises(ConfigurationError):
        TeamSpec(team.axies + team.axies[:2])
    with pytest.raises(ConfigurationError):
        new_game(team, "not a team", seed=0)


def test_card_and_axie_validation():
    with pytest.raises(ConfigurationError):
        CardSpec(0, 0, 0, 1)
    with pytest.raises(ConfigurationError):
        CardSpec(0, 10, 0, 3)
    cards = tuple(CardSpec(j, 10, 0, 1) for j in range(4))
    with pytest.raises(ConfigurationError):
        AxieSpec(1, 10, 1, cards)  # axie 1 must own cards 4..7


def test_team_file_round_trip(tmp_path, team):
    path = tmp_path / "team.jsonl"
    dump_team(team, path)
    assert load_team(path) == team
    path.write_text("# comment\n" + path.read_text())
    assert load_team(path) == team
    path.write_text('{"health": 10}\n')
    with pytest.raises(ConfigurationError):
        load_team(path)


def _with_hand(state, player, cards, energy=10):
    hands = state.hands.copy()
    hands[player] = 0
    np.add.at(hands[player], cards, 1)
    e = state.energy.copy()
    e[player] = energy
    return replace(state, hands=hands, energy=e)


def test_non_terminal_reward_is_zero(team):
    s = new_game(team, team, seed=1)
    nxt, r, done = step(s, EMPTY)
    assert not done and r == 0.0
    assert nxt.round_index == 1


def test_single_card_kills_enemy_axie(team):
    s = _with_hand(new_game(team, team, seed=2), 0, [0])
    health = s.health.copy()
    health[3] = 20
    s = replace(s, health=health)
    nxt, _ = step_two_player(s, RoundAction.of([0]), EMPTY)
    assert nxt.health[3] == 0
    assert nxt.health[4] == team.axies[1].max_health


def test_shield_absorbs_before_health_and_resets(team):
    s = _with_hand(new_game(team, team, seed=3), 0, [0])
    s = _with_hand(s, 1, [2])               # enemy axie 0 shields for 25
    nxt, _ = step_two_player(s, RoundAction.of([0]), RoundAction.of([2]))
    assert nxt.health[3] == 30 - (30 - 25)
    assert nxt.shield.tolist() == [0] * 6


def test_combo_bonus_rounds_down(team):
    assert [combo_attack(25, p) for p in range(4)] == [25, 27, 30, 32]
    s = _with_hand(new_game(team, team, seed=4), 0, [0, 0])
    health = s.health.copy()
    health[3] = 1000
    s = replace(s, health=health)
    nxt, _ = step_two_player(s, RoundAction.of([0, 0]), EMPTY)
    assert nxt.health[3] == 1000 - 30 - 33


def test_speed_order_and_tie_break(team):
    # both axie 0s have speed 5; team A acts first and kills before B can act
    s = new_game(team, team, seed=5)
    s = _with_hand(_with_hand(s, 0, [3]), 1, [3])
    health = s.health.copy()
    health[[0, 3]] = 40
    s = replace(s, health=health)
    nxt, _ = step_two_player(s, RoundAction.of([3]), RoundAction.of([3]))
    assert nxt.health[3] == 0 and nxt.health[0] == 40


def test_attack_targets_lowest_living_enemy(team):
    s = _with_hand(new_game(team, team, seed=6), 0, [0])
    health = s.health.copy()
    health[3] = 0
    s = replace(s, health=health)
    nxt, _ = step_two_player(s, RoundAction.of([0]), EMPTY)
    assert nxt.health[4] == team.axies[1].max_health - 30


@pytest.mark.parametrize("action, rule", [
    (RoundAction.of([4]), "card-ownership"),
    (RoundAction.of([0, 0, 0]), "copy-limit"),
    (RoundAction.of([1]), "not-in-hand"),
    (RoundAction.of([0, 1, 2, 3, 0]), "sequence-length"),
    (RoundAction(((0,), ())), "structure"),
])
def test_illegal_actions_name_the_rule(team, action, rule):
    s = _with_hand(new_game(team, team, seed=0), 0, [0, 0])
    with pytest.raises(IllegalActionError) as exc:
        step(s, action)
    assert exc.value.rule == rule


def test_energy_and_dead_axie_rules(team):
    s = _with_hand(new_game(team, team, seed=0), 0, [3, 3], energy=3)
    with pytest.raises(IllegalActionError, match="energy"):
        check_legal(s, RoundAction.of([3, 3]))
    health = s.health.copy()
    health[0] = 0
    with pytest.raises(IllegalActionError, match="dead-axie"):
        check_legal(replace(s, health=health), RoundAction.of([3]))


def test_stepping_terminal_state_is_usage_error(team):
    s = replace(new_game(team, team, seed=0), terminal=True)
    with pytest.raises(UsageError):
        step(s, EMPTY)
    with pytest.raises(UsageError):
        step_two_player(s, EMPTY, EMPTY)


def test_round_limit_tie(team):
    s = replace(new_game(team, team, seed=0), round_index=14)
    nxt, done = step_two_player(s, EMPTY, EMPTY)
    assert done and nxt.result == 0 and nxt.round_index == 15


def test_step_two_player_deterministic(team):
    s = new_game(team, team, seed=9)
    a = rule_based_opponent(s, np.random.default_rng(1), 0)
    b = rule_based_opponent(s, np.random.default_rng(2), 1)
    assert step_two_player(s, a, b)[0] == step_two_player(s, a, b)[0]


def test_mirror_symmetry():
    # distinct speeds across sides, so the seat tie-break never applies
    a = default_team()
    recs = a.to_records()
    for r, sp in zip(recs, (6, 4, 2)):
        r["speed"] = sp
    b = team_from_records(recs)
    rng = np.random.default_rng(0)
    s = new_game(a, b, seed=11)
    while not s.terminal:
        act_a = rule_based_opponent(s, rng, 0)
        act_b = rule_based_opponent(s, rng, 1)
        nxt, done = step_two_player(s, act_a, act_b)
        mirrored, mdone = step_two_player(s.mirrored(), act_b, act_a)
        assert mirrored == nxt.mirrored() and done == mdone
        s = nxt


@pytest.mark.parametrize("result, nd, expected", [(1, 0, 1.0), (-1, 3, -1.3), (0, 2, -0.2)])
def test_terminal_reward(team, result, nd, expected):
    s = replace(new_game(team, team, seed=0), terminal=True, result=result,
                discards=np.array([nd, 5]))
    assert terminal_reward(s, 0.1) == pytest.approx(expected, abs=1e-15)
    assert terminal_reward(s, 0.1) == result - 0.1 * nd
    assert terminal_reward(replace(s, terminal=False), 0.1) == 0.0


def test_opponent_with_empty_hand_plays_nothing(team):
    s = _with_hand(new_game(team, team, seed=0), 1, [])
    assert rule_based_opponent(s, np.random.default_rng(0), 1) == EMPTY


def test_opponent_reproducible_and_greedy(team):
    s = new_game(team, team, seed=3)
    a1 = rule_based_opponent(s, np.random.default_rng(5), 1)
    a2 = rule_based_opponent(s, np.random.default_rng(5), 1)
    assert a1 == a2
    s = _with_hand(s, 1, [0, 2, 3, 7], energy=3)
    # with 3 energy: card 0 then card 3 (30 + 44) beats card 3 then card 0 (40 + 33)
    assert rule_based_opponent(s, None, 1, "greedy") == RoundAction.of([0, 3])


def test_opponent_actions_always_legal():
    states = [s for s in random_playout_states(10_000, seed=1) if not s.terminal]
    rng = np.random.default_rng(0)
    for s in states:
        for player in (0, 1):
            assert is_legal(s, rule_based_opponent(s, rng, player), player)


def test_playout_invariants():
    states = random_playout_states(3000, seed=2)
    for s in states:
        for p in (0, 1):
            total = s.hands[p] + s.deck_remaining[p] + s.used[p]
            assert np.all(total == 2)
            assert 0 <= s.energy[p] <= 10
        assert s.round_index <= 15
        if s.terminal:
            assert (s.round_index == 15 or not s.alive(0).any() or not s.alive(1).any())
            assert s.result_for(0) == -s.result_for(1)
        else:
            assert s.alive(0).any() and s.alive(1).any()


def test_reward_nonzero_only_on_terminal_transitions(team):
    rng = np.random.default_rng(0)
    for seed in range(30):
        s = new_game(team, team, seed=seed)
        while not s.terminal:
            a = rule_based_opponent(s, rng, 0)
            s, r, done = step(s, a)
            assert (r != 0) <= done


def test_featurize(team):
    s = new_game(team, team, seed=0)
    x = featurize(s)
    assert x.shape == (N_FEATURES,) and np.all((0 <= x) & (x <= 1))
    assert x[42] == pytest.approx(0.3)
    assert np.array_equal(x, featurize(new_game(team, team, seed=0)))
    health = s.health.copy()
    health[4] = 0
    dead = featurize(replace(s, health=health))
    assert dead[3 * 4] == 0 and dead[3 * 4 + 2] == 0
    # player 1 sees its own axies first
    assert featurize(replace(s, health=health), 1)[3 * 1] == 0


def test_featurize_bounds_on_playouts():
    for s in random_playout_states(500, seed=3):
        for p in (0, 1):
            x = featurize(s, p)
            assert x.shape == (46,) and np.all(np.isfinite(x)) and np.all((0 <= x) & (x <= 1))


def test_replay_log(tmp_path, team):
    s = new_game(team, team, seed=0)
    log = ReplayLogger(tmp_path / "replay.jsonl")
    rng = np.random.default_rng(0)
    while not s.terminal:
        a, b = rule_based_opponent(s, rng, 0), rule_based_opponent(s, rng, 1)
        s, _ = step_two_player(s, a, b)
        log.log(s, a, b, 0.0)
    log.flush()
    rows = read_replay(tmp_path / "replay.jsonl")
    assert len(rows) == s.round_index
    assert [r["round_index"] for r in rows] == list(range(s.round_index))
    assert set(rows[0]) == {"round_index", "action_a", "action_b", "health", "energy", "reward"}


def test_env_config_validation():
    with pytest.raises(ConfigurationError):
        EnvConfig(discard_penalty=-1)
    with pytest.raises(ConfigurationError):
        EnvConfig(opponent_mode="clever")
