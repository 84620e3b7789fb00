"""Memory bank over the target set and local k-NN consensus targets.

The bank stores one (unit-norm feature, probability row) snapshot per target
sample, indexed by dataset position, and is refreshed during adaptation. Local
targets average the probability rows of each query's cosine nearest neighbors,
always excluding the query's own bank slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AdaptModel, BatchForward, cross_entropy_rows, forward_batch
from .numerics import l2_normalize_rows


@dataclass
class MemoryBank:
    features: np.ndarray  # (N_t, d_feat), unit rows
    probs: np.ndarray     # (N_t, C_s)
    version: int = 0

    def __len__(self) -> int:
        return self.features.shape[0]


def bank_init(model: AdaptModel, target_inputs: np.ndarray) -> MemoryBank:
    """Full forward pass over the target inputs, stored in dataset order."""
    target_inputs = np.asarray(target_inputs, dtype=np.float64)
    if target_inputs.shape[0] == 0:
        raise ValueError("cannot build a memory bank for an empty target set")
    fwd = forward_batch(model, target_inputs)
    return MemoryBank(features=l2_normalize_rows(fwd.features), probs=fwd.probs.copy())


def bank_update(bank: MemoryBank, batch_indices: np.ndarray, fresh: BatchForward) -> None:
    """Overwrite the given slots with fresh features/probs; bumps version."""
    idx = np.asarray(batch_indices)
    if idx.size and (idx.min() < 0 or idx.max() >= len(bank)):
        raise IndexError("bank index out of range")
    if idx.size:
        bank.features[idx] = l2_normalize_rows(fresh.features)
        bank.probs[idx] = fresh.probs
    bank.version += 1


def nearest_bank_indices(
    bank: MemoryBank,
    query_features: np.ndarray,
    k: int,
    self_indices: np.ndarray,
) -> np.ndarray:
    """(B, k) bank indices of each query's cosine nearest neighbors.

    self_indices[i] is query i's own bank slot, always excluded. Similarity
    ties break toward the smaller bank index.
    """
    if not 1 <= k < len(bank):
        raise ValueError(f"neighbor count {k} out of range [1, {len(bank) - 1}]")
    q_unit = l2_normalize_rows(np.asarray(query_features, dtype=np.float64))
    sims = q_unit @ bank.features.T
    self_indices = np.asarray(self_indices)
    sims[np.arange(sims.shape[0]), self_indices] = -np.inf
    order = np.argsort(-sims, axis=1, kind="stable")
    return order[:, :k]


def local_targets(
    bank: MemoryBank,
    query_features: np.ndarray,
    k: int,
    self_indices: np.ndarray,
) -> np.ndarray:
    """Consensus rows l^i: mean probability row of each query's k neighbors."""
    neighbors = nearest_bank_indices(bank, query_features, k, self_indices)
    return bank.probs[neighbors].mean(axis=1)


def loss_local(probs_batch: np.ndarray, targets_batch: np.ndarray) -> float:
    """Batch-mean cross entropy against the consensus rows."""
    loss, _ = cross_entropy_rows(probs_batch, targets_batch)
    return loss
