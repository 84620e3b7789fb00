"""Contrastive affinity learning: dataset-level positives from the memory
bank, batch-level hard negatives, and the pair loss with a stop-gradient on
the pair side.

Hard negatives skip the e-1 most similar in-batch samples, where
e = ceil(B / Ct) estimates how many same-class samples a batch holds besides
the anchor; the next n_pairs samples down the ranking are the negatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .consensus import MemoryBank, nearest_bank_indices
from .numerics import l2_normalize_rows


@dataclass
class PairSet:
    anchor_index: int     # position within the batch
    positives: np.ndarray  # bank indices (dataset level)
    negatives: np.ndarray  # in-batch positions (batch level)


def mine_pairs(
    bank: MemoryBank,
    batch_features: np.ndarray,
    batch_indices: np.ndarray,
    n_pairs: int,
    ct: int,
) -> list[PairSet]:
    """One PairSet per batch element.

    Positives are the anchor's n_pairs nearest bank entries (self slot
    excluded), identical to the local-consensus neighbor rule. Negatives rank
    the other in-batch samples by live cosine similarity (descending, ties to
    the smaller position), skip the first e-1, then take n_pairs entries,
    wrapping around the ranking when it is shorter than e-1+n_pairs.
    """
    batch_features = np.asarray(batch_features, dtype=np.float64)
    b = batch_features.shape[0]
    if b < 2:
        raise ValueError("batch too small for negative mining")
    if n_pairs < 1:
        raise ValueError("need at least one pair")
    if b - 1 < n_pairs:
        raise ValueError("batch too small for negative mining")

    positives = nearest_bank_indices(bank, batch_features, n_pairs, np.asarray(batch_indices))

    unit = l2_normalize_rows(batch_features)
    sims = unit @ unit.T
    np.fill_diagonal(sims, -np.inf)
    ranking = np.argsort(-sims, axis=1, kind="stable")[:, : b - 1]

    skip = math.ceil(b / ct) - 1
    picks = (skip + np.arange(n_pairs)) % (b - 1)
    return [
        PairSet(anchor_index=i, positives=positives[i], negatives=ranking[i, picks])
        for i in range(b)
    ]


def _cosine_terms(anchor: np.ndarray, others: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum of cosines S(anchor, o) over rows o, and its gradient w.r.t. the
    anchor. The rows are constants: no gradient is produced for them."""
    a_norm = float(np.linalg.norm(anchor))
    o_norms = np.linalg.norm(others, axis=1)
    if a_norm == 0.0 or np.any(o_norms == 0.0):
        raise ValueError("degenerate feature")
    a_unit = anchor / a_norm
    o_units = others / o_norms[:, None]
    coss = o_units @ a_unit
    total = float(coss.sum())
    grad = (o_units.sum(axis=0) - total * a_unit) / a_norm
    return total, grad


def loss_contrastive(
    batch_features: np.ndarray,
    pairs: list[PairSet],
    bank: MemoryBank,
) -> tuple[float, np.ndarray]:
    """Mean over anchors of sum(neg cosines) - sum(pos cosines).

    Positive features come from the bank snapshot, negative features from the
    live batch; both sides are stop-gradient constants, so the returned
    per-anchor gradient (w.r.t. the anchor's live feature, not divided by the
    batch size) is the only gradient path.
    """
    batch_features = np.asarray(batch_features, dtype=np.float64)
    d_anchor = np.zeros_like(batch_features)
    total = 0.0
    for pair in pairs:
        anchor = batch_features[pair.anchor_index]
        neg_sum, neg_grad = _cosine_terms(anchor, batch_features[pair.negatives])
        pos_sum, pos_grad = _cosine_terms(anchor, bank.features[pair.positives])
        total += neg_sum - pos_sum
        d_anchor[pair.anchor_index] += neg_grad - pos_grad
    return total / len(pairs), d_anchor
