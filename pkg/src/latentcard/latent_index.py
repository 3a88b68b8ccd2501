"""Exact per-state nearest-neighbour retrieval in the latent action space."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .action_codec import ActionSet, encode_flat
from .cards import RoundAction
from .nn import Network


@dataclass(frozen=True)
class CandidateSet:
    actions: Union[ActionSet, Sequence[RoundAction]]
    embeddings: np.ndarray   # (n, m), row i embeds actions[i]

    def __len__(self) -> int:
        return len(self.embeddings)


def build(legal: Union[ActionSet, Sequence[RoundAction]], f: Network) -> CandidateSet:
    if len(legal) == 0:
        raise ValueError("cannot build a candidate set from an empty legal set")
    if isinstance(legal, ActionSet):
        flat = legal.encode_all()
    else:
        flat = np.stack([encode_flat(a) for a in legal])
    emb = f.forward(flat)
    emb.setflags(write=False)
    return CandidateSet(legal, emb)


def distance(e1, e2) -> float:
    """Squared Euclidean distance."""
    e1, e2 = np.asarray(e1, dtype=np.float64), np.asarray(e2, dtype=np.float64)
    if e1.shape != e2.shape:
        raise ValueError(f"latent dims differ: {e1.shape} vs {e2.shape}")
    return float(np.sum((e1 - e2) ** 2))


def distances(embeddings: np.ndarray, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if embeddings.shape[1:] != q.shape:
        raise ValueError(f"latent dims differ: {embeddings.shape[1:]} vs {q.shape}")
    return np.sum((embeddings - q) ** 2, axis=1)


def topk_indices(embeddings: np.ndarray, query, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the ``k`` nearest rows, ordered by (distance, index)."""
    n = len(embeddings)
    if n == 0:
        raise ValueError("empty candidate set")
    if k < 1:
        raise ValueError("k must be at least 1")
    d = distances(embeddings, query)
    if k < n:
        # everything tied with the k-th smallest distance must compete on index
        kth = np.partition(d, k - 1)[k - 1]
        pool = np.flatnonzero(d <= kth)
    else:
        pool = np.arange(n)
    pool = pool[np.lexsort((pool, d[pool]))][:k]
    return pool, d[pool]


def topk(cset: CandidateSet, raw_latent, k: int) -> list[tuple[RoundAction, float]]:
    idx, d = topk_indices(cset.embeddings, raw_latent, k)
    return [(cset.actions[int(i)], float(x)) for i, x in zip(idx, d)]
