"""Independent oracles shared by the unit tests and the acceptance suite.

Everything here is written as literal, brute-force restatements of the
definitions so it stays independent of the library implementations it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ufda.model import AdaptModel, forward_batch


def silhouette_direct(points: np.ndarray, assignment: np.ndarray) -> np.ndarray:
    """Per-point silhouette computed with plain loops from the definition."""
    n = points.shape[0]
    labels = sorted(set(int(a) for a in assignment))
    scores = np.zeros(n)
    for i in range(n):
        own = int(assignment[i])
        members = [j for j in range(n) if assignment[j] == own and j != i]
        if not members:
            scores[i] = 0.0
            continue
        a = sum(np.linalg.norm(points[i] - points[j]) for j in members) / len(members)
        b = math.inf
        for lab in labels:
            if lab == own:
                continue
            others = [j for j in range(n) if assignment[j] == lab]
            b = min(b, sum(np.linalg.norm(points[i] - points[j]) for j in others) / len(others))
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return scores


def exhaustive_kmeans_optimum(points: np.ndarray, k: int) -> float:
    """Global minimum inertia over all partitions into k non-empty clusters."""
    n = points.shape[0]
    best = math.inf
    for assignment in itertools.product(range(k), repeat=n):
        if len(set(assignment)) != k:
            continue
        cost = 0.0
        for c in range(k):
            members = points[[i for i in range(n) if assignment[i] == c]]
            centroid = members.mean(axis=0)
            cost += float(((members - centroid) ** 2).sum())
        best = min(best, cost)
    return best


def exhaustive_assignment(cost: np.ndarray) -> np.ndarray:
    """Lexicographically smallest minimum-cost permutation by full enumeration."""
    n = cost.shape[0]
    best_perm = None
    best_cost = math.inf
    for perm in itertools.permutations(range(n)):
        total = sum(cost[i, perm[i]] for i in range(n))
        if total < best_cost - 1e-12:
            best_cost = total
            best_perm = perm
    # itertools.permutations yields in lexicographic order, so the first
    # strictly-better permutation seen is the lexicographically smallest.
    return np.array(best_perm)


def knn_direct(bank_features: np.ndarray, query: np.ndarray, k: int, exclude: int) -> list[int]:
    """k nearest bank rows by cosine similarity, ties to the smaller index."""
    def cos(a, b):
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    sims = [(-cos(query, bank_features[j]), j) for j in range(bank_features.shape[0]) if j != exclude]
    sims.sort()
    return [j for _, j in sims[:k]]


def pseudo_label_direct(
    features: np.ndarray,
    probs: np.ndarray,
    prototypes,
) -> np.ndarray:
    """Literal per-sample restatement of the firing + filter + uniform rule."""
    n, n_classes = probs.shape
    rows = np.zeros((n, n_classes))
    for i in range(n):
        g = features[i]
        fired = []
        for c, proto in enumerate(prototypes):
            def cos(a, b):
                return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

            score = proto.epsilon * cos(g, proto.positive)
            neg = max((cos(g, nc) for nc in proto.negatives), default=-math.inf)
            if score >= neg:
                fired.append((c, score))
        if not fired:
            rows[i] = 1.0 / n_classes
        else:
            best = max(fired, key=lambda t: (t[1], -t[0]))
            rows[i, best[0]] = 1.0
    return rows


def hard_negative_direct(sims_row: np.ndarray, anchor: int, b: int, ct: int, n_pairs: int) -> list[int]:
    """Rank-skip hard-negative rule restated with explicit sorting."""
    order = sorted((j for j in range(b) if j != anchor), key=lambda j: (-sims_row[j], j))
    skip = math.ceil(b / ct) - 1
    return [order[(skip + t) % (b - 1)] for t in range(n_pairs)]


def flatten_params(model: AdaptModel, names) -> np.ndarray:
    return np.concatenate([getattr(model, n).ravel() for n in names])


def set_params(model: AdaptModel, names, flat: np.ndarray) -> None:
    pos = 0
    for n in names:
        arr = getattr(model, n)
        arr[...] = flat[pos : pos + arr.size].reshape(arr.shape)
        pos += arr.size


def fd_gradient(model: AdaptModel, names, loss_fn, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of loss_fn(model) over the named tensors."""
    base = flatten_params(model, names).copy()
    grad = np.empty_like(base)
    for i in range(base.size):
        for sign in (+1.0, -1.0):
            shifted = base.copy()
            shifted[i] += sign * eps
            set_params(model, names, shifted)
            if sign > 0:
                hi = loss_fn(model)
            else:
                lo = loss_fn(model)
        grad[i] = (hi - lo) / (2.0 * eps)
    set_params(model, names, base)
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-8)
    return float(np.max(np.abs(a - b))) / denom


def contrastive_frozen_pairs(live_features, pairs, bank, frozen_features):
    """Contrastive loss with the stop-gradient made explicit for finite
    differencing: anchors use live features, pair sides use frozen copies."""
    from ufda.contrastive import _cosine_terms

    d_anchor = np.zeros_like(live_features)
    total = 0.0
    for p in pairs:
        anchor = live_features[p.anchor_index]
        neg_sum, neg_grad = _cosine_terms(anchor, frozen_features[p.negatives])
        pos_sum, pos_grad = _cosine_terms(anchor, bank.features[p.positives])
        total += neg_sum - pos_sum
        d_anchor[p.anchor_index] += neg_grad - pos_grad
    return total / len(pairs), d_anchor


def random_model(rng: np.random.Generator, d_in=4, d_hidden=5, d_feat=3, n_classes=3, frozen=False) -> AdaptModel:
    return AdaptModel(
        w1=rng.normal(size=(d_in, d_hidden)) * 0.7,
        b1=rng.normal(size=d_hidden) * 0.3,
        w2=rng.normal(size=(d_hidden, d_feat)) * 0.7,
        b2=rng.normal(size=d_feat) * 0.3,
        wc=rng.normal(size=(d_feat, n_classes)) * 0.7,
        bc=rng.normal(size=n_classes) * 0.3,
        classifier_frozen=frozen,
    )
