"""
Picking an action through the latent space
==========================================

The actor proposes a raw 72-dim action, generally not a legal one. Its
embedding is compared against the embeddings of every legal action, the k
closest are kept, and the critic chooses among them. With k equal to the
number of legal actions this is just a full critic argmax.
"""

import numpy as np

from latentcard.action_codec import legal_action_set
from latentcard.agent import raw_action, select, select_full_eval
from latentcard.cards import default_team
from latentcard.env import featurize, new_game
from latentcard.latent_index import build, topk
from latentcard.nn import mlp

actor = mlp([46, 128, 128, 72], "tanh", seed=1)
f = mlp([72, 64, 16], "tanh", seed=2)
critic = mlp([46 + 72, 128, 128, 1], "relu", seed=3)

team = default_team()
state = new_game(team, team, seed=5)
s, legal = featurize(state), legal_action_set(state)

raw = raw_action(actor, s)
print("raw action (first 12 entries):", np.round(raw[:12], 2))

cset = build(legal, f)
for action, d in topk(cset, f(raw), 5):
    print(f"  {action.to_lists()}  distance {d:.4f}")

for k in (1, 4, len(legal)):
    print(f"k={k:3d} ->", select(s, legal, actor, f, critic, k).to_lists())
print("full argmax ->", select_full_eval(s, legal, critic, "latent").to_lists())
