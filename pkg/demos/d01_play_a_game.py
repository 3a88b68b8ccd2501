"""
Playing MiniAxie by hand
========================

Two teams of three axies fight for at most 15 rounds. Each round both
players pick one card sequence per axie; the engine resolves them in speed
order. This script plays one game between the two built-in rule players and
prints a round-by-round trace.
"""

import numpy as np

from latentcard.cards import default_team
from latentcard.env import new_game, rule_based_opponent, step_two_player, terminal_reward

team = default_team()
for axie in team.axies:
    cards = ", ".join(f"{c.card_id}:atk{c.attack}/sh{c.shield}/e{c.cost}" for c in axie.cards)
    print(f"axie {axie.axie_index}: hp {axie.max_health}, speed {axie.speed} | {cards}")

state = new_game(team, team, seed=42)
rng = np.random.default_rng(0)

# player 0 is greedy on total attack, player 1 plays uniformly at random
while not state.terminal:
    a = rule_based_opponent(state, rng, 0, mode="greedy")
    b = rule_based_opponent(state, rng, 1, mode="uniform")
    state, done = step_two_player(state, a, b)
    print(f"round {state.round_index:2d}  A {a.to_lists()}  B {b.to_lists()}  "
          f"hp {state.health.tolist()}  energy {state.energy.tolist()}")

# the reward is only paid at the end: result minus c per discarded card
print("result for A:", state.result, " discards:", state.discards.tolist())
print("reward for A with c=0.1:", terminal_reward(state, 0.1))
