"""
How big is the action space?
============================

One axie holding both copies of its four cards can play 285 ordered
sequences of length 0..4; three axies give 285**3 joint actions. Energy and
the cards actually in hand cut this down a lot in real states.
"""

import numpy as np

from latentcard import action_codec as codec
from latentcard.cards import RoundAction, default_team
from latentcard.env import new_game

print("sequences per axie:", len(codec.enumerate_sequences([2, 2, 2, 2])))
print("unconstrained joint actions:", codec.count_unconstrained())

# the 6x12 matrix: count thermometer in rows 0-1, card positions in rows 2-5
action = RoundAction.of([0, 0, 3], [], [9])
m = codec.encode(action)
print(m.astype(int))
assert codec.decode(m) == action

# the count-only 2x12 encoding forgets order; the full encoding keeps it
a, b = RoundAction.of([0, 3]), RoundAction.of([3, 0])
print("same 2x12:", np.array_equal(codec.encode_douzero(a), codec.encode_douzero(b)),
      " same 6x12:", np.array_equal(codec.encode(a), codec.encode(b)))

# legal sets in an actual game
team = default_team()
state = new_game(team, team, seed=1)
legal = codec.legal_action_set(state)
print("hand:", state.hands[0].tolist(), "energy:", state.energy[0], "->", len(legal), "legal actions")
print("first five:", [x.to_lists() for x in legal.actions()[:5]])

# a full hand with plenty of energy
full = codec.count_actions([2] * 12, [True] * 3, team.cost.tolist(), 10)
print("full hand, 10 energy:", full)
