"""
Learning an action embedding from effects
=========================================

Random play generates (s, a, s') triples. A small network f maps each
72-dim action encoding to 16 dims and a transition model predicts s' from
(s, f(a)). Actions that do the same thing should end up close together.
"""

from latentcard.embedding import collect_random_transitions, effect_similarity_test, pretrain

ds = collect_random_transitions(10_000, seed=0)
print(f"{len(ds)} transitions, state dim {ds.s.shape[1]}, action dim {ds.a.shape[1]}")

result = pretrain(ds, epochs=10, batch_size=256, lr=1e-3, seed=0)
print(result.history_table())

same, rand, p = effect_similarity_test(result.f, n_pairs=300, seed=0)
print(f"mean latent distance: same-effect pairs {same.mean():.3f}, random pairs {rand.mean():.3f}")
print(f"one-sided Mann-Whitney p = {p:.2e}")
