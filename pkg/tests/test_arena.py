import json
import math

import numpy as np
import pytest

from latentcard.agent import Agent, AgentConfig, METRIC_FIELDS, format_metric
from latentcard.arena import (BattleResult, CurveParseError, GameRecord, RulePlayer, battle,
                              evaluate_vs_random, export_curves, parse_curves, parse_metrics,
                              play_game, win_difference)
from latentcard.cards import ConfigurationError
from latentcard.embedding import make_networks


def test_battle_counts_and_formulas():
    r = battle(RulePlayer("greedy"), RulePlayer("uniform"), 60, base_seed=3)
    assert r.wins + r.ties + r.losses == r.games == 60 == len(r.records)
    assert r.winrate == r.wins / 60
    assert r.standard_error == math.sqrt(r.winrate * (1 - r.winrate) / 60)
    assert [g.seed for g in r.records] == list(range(3, 63))
    assert [g.seat for g in r.records] == [i % 2 for i in range(60)]
    report = dict(line.split("\t") for line in r.report().splitlines())
    assert int(report["games"]) == 60 and "standard_error" in report


def test_battle_is_deterministic_and_worker_independent():
    a, b = RulePlayer("uniform"), RulePlayer("uniform")
    r1 = battle(a, b, 40, base_seed=11)
    r2 = battle(a, b, 40, base_seed=11)
    r3 = battle(a, b, 40, base_seed=11, workers=2)
    assert r1.records == r2.records == r3.records
    single = play_game(a, b, 11, 0)
    assert single == r1.records[0] == play_game(a, b, 11, 0)


def test_random_vs_random_is_balanced():
    r = battle(RulePlayer("uniform"), RulePlayer("uniform"), 10_000, base_seed=0)
    w, l = r.wins / r.games, r.losses / r.games
    # standard error of (win - loss) rate for one trinomial draw per game
    se = math.sqrt((w + l - (w - l) ** 2) / r.games)
    assert abs(w - l) <= 3 * se, (w, l, se)


def test_greedy_beats_random():
    r = evaluate_vs_random(RulePlayer("greedy"), 200)
    assert r.winrate > 0.55


def test_battle_does_not_mutate_agents(tmp_path):
    f, _ = make_networks(seed=0)
    agent = Agent(AgentConfig(k=4), f, seed=0)
    before = agent.to_bytes()
    evaluate_vs_random(agent, 6)
    assert agent.to_bytes() == before


def test_zero_games_and_digest_mismatch():
    with pytest.raises(ValueError):
        battle(RulePlayer(), RulePlayer(), 0)
    agent = Agent(AgentConfig("full_eval"), seed=0, env_digest="feedface")
    with pytest.raises(ConfigurationError):
        evaluate_vs_random(agent, 2)


def test_win_difference():
    recs = [GameRecord(i, i % 2, 5, 1, 0) for i in range(1000)]
    ours = BattleResult(1000, 600, 0, 400, recs, "ours", "rule-uniform")
    base = BattleResult(1000, 500, 0, 500, recs, "base", "rule-uniform")
    assert win_difference(ours, base) == 100
    assert win_difference(base, ours) == -100
    assert win_difference(ours, ours) == 0
    with pytest.raises(ValueError):
        win_difference(ours, BattleResult(999, 500, 0, 499, recs[:999], "b", "rule-uniform"))
    with pytest.raises(ValueError):
        win_difference(ours, BattleResult(1000, 500, 0, 500, recs, "b", "rule-greedy"))


def test_write_records(tmp_path):
    r = battle(RulePlayer(), RulePlayer(), 4)
    r.write_records(tmp_path / "g.jsonl")
    rows = [json.loads(x) for x in (tmp_path / "g.jsonl").read_text().splitlines()]
    assert rows == [g.to_dict() for g in r.records]
    assert set(rows[0]) == {"seed", "seat", "rounds", "result", "discards"}


def test_curves_round_trip_and_sorting():
    rows = [{"iteration": i, "env_steps": s, "mean_return": m, "critic_loss": 0.5,
             "mean_q": 0.1, "wall_clock_ms": 7} for i, (s, m) in enumerate([(300, 0.25), (100, -0.5)])]
    text = "\t".join(METRIC_FIELDS) + "\n" + "".join(format_metric(r) + "\n" for r in rows)
    assert parse_metrics(text) == rows
    table = export_curves({"run1": parse_metrics(text)})
    parsed = parse_curves(table)
    assert parsed == [("run1", 100, -0.5), ("run1", 300, 0.25)]
    assert export_curves({"run1": [dict(iteration=0, env_steps=s, mean_return=m) for _, s, m in parsed]}) == table


def test_curves_empty_and_malformed():
    assert export_curves({}) == "run\tenv_steps\tmean_return\n"
    assert parse_curves(export_curves({})) == []
    assert parse_metrics("") == []
    with pytest.raises(CurveParseError):
        parse_metrics("a\tb\n1\t2\n")
    with pytest.raises(CurveParseError):
        parse_metrics("\t".join(METRIC_FIELDS) + "\n1\t2\n")
    with pytest.raises(CurveParseError):
        parse_curves("run\tenv_steps\tmean_return\nx\tnot-a-number\t0.5\n")
