import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from latentcard.action_codec import encode_flat, legal_action_set
from latentcard.embedding import make_networks
from latentcard.latent_index import build, distance, distances, topk, topk_indices
from latentcard.verify import check_topk, topk_oracle

from conftest import random_playout_states

coords = st.integers(-3, 3).map(lambda v: v / 2.0)   # coarse grid -> many ties


@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    arrays(np.float64, (n, 3), elements=coords), arrays(np.float64, 3, elements=coords),
    st.integers(1, n + 3))))
@settings(max_examples=300)
def test_topk_matches_sort_oracle(case):
    emb, q, k = case
    idx, d = topk_indices(emb, q, k)
    assert idx.tolist() == topk_oracle(emb, q, k)
    assert len(idx) == min(k, len(emb))
    assert np.all(np.diff(d) >= 0)


def test_topk_oracle_thousand_instances():
    check_topk(1000, seed=3)


def test_distance_is_squared_euclidean():
    assert distance([0, 0], [3, 4]) == 25.0
    assert distances(np.array([[0.0, 0], [1, 1]]), [1, 1]).tolist() == [2.0, 0.0]
    with pytest.raises(ValueError):
        distance([0, 0], [1, 1, 1])


def test_ties_prefer_lower_index():
    emb = np.zeros((5, 2))
    assert topk_indices(emb, np.zeros(2), 3)[0].tolist() == [0, 1, 2]


def test_invalid_k_and_empty():
    with pytest.raises(ValueError):
        topk_indices(np.zeros((3, 2)), np.zeros(2), 0)
    with pytest.raises(ValueError):
        topk_indices(np.zeros((0, 2)), np.zeros(2), 1)


def test_candidate_set_from_legal_set():
    f, _ = make_networks(seed=0)
    s = random_playout_states(3, seed=7)[2]
    legal = legal_action_set(s)
    cset = build(legal, f)
    assert cset.embeddings.shape == (len(legal), 16)
    # batched and single-row products may differ in the last ulp
    np.testing.assert_allclose(cset.embeddings[5], f(encode_flat(legal[5])), rtol=0, atol=1e-12)
    q = cset.embeddings[5].copy()
    (best, d0), *_ = topk(cset, q, 4)
    assert best == legal[5] and d0 == 0.0
    # the list form gives the same candidates as the compact form
    assert [a for a, _ in topk(build(legal.actions(), f), q, 4)] == [a for a, _ in topk(cset, q, 4)]
    with pytest.raises(ValueError):
        build([], f)
