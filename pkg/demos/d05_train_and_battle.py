"""
Training an agent and putting it in the arena
=============================================

A short end-to-end run: pretrain an embedding, train the latent-retrieval
agent and the count-only baseline on the same budget, then battle both
against the uniform-random player on identical seeds. The acceptance suite
does the same thing at 2e5 steps.
"""

from latentcard.agent import AgentConfig, train
from latentcard.arena import evaluate_vs_random, export_curves, win_difference
from latentcard.embedding import collect_random_transitions, pretrain

STEPS = 20_000

f = pretrain(collect_random_transitions(20_000, seed=0), epochs=10, seed=0).f

latent = train(AgentConfig("latent"), STEPS, seed=0, f=f)
baseline = train(AgentConfig("full_eval"), STEPS, seed=0)

ours = evaluate_vs_random(latent.agent, 400, base_seed=1000)
theirs = evaluate_vs_random(baseline.agent, 400, base_seed=1000)
print(ours.report())
print(theirs.report())
print("win difference (latent - full_eval):", win_difference(ours, theirs))

# learning curves as a plottable table
table = export_curves({"latent": latent.metrics, "full_eval": baseline.metrics})
print("\n".join(table.splitlines()[:6]))
