"""Dense vector primitives, similarity measures, entropy, and the seeded PRNG.

Everything here is float64 and deterministic: the PRNG is a pure-Python
xoshiro256** whose output stream depends only on the seed, so runs are
bit-reproducible across machines.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1

# xoshiro256** jump polynomial (advances the stream by 2^128 draws).
_JUMP = (0x180EC6D33CFD0ABA, 0xD5A61266F0C9392C, 0xA9582618E03FC9AA, 0x39ABDC4529B1661C)


def _splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """Deterministic xoshiro256** stream, seeded by splitmix64 expansion.

    Sub-streams: ``split()`` derives an independent child generator from the
    parent stream (one parent draw per child), and ``jump()`` advances this
    generator by 2^128 draws in place. Instances are single-owner mutable
    state and must not be shared across threads.
    """

    __slots__ = ("_s", "_spare_normal")

    def __init__(self, seed: int):
        state = seed & _MASK64
        s = []
        for _ in range(4):
            state, out = _splitmix64(state)
            s.append(out)
        self._s = s
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def jump(self) -> None:
        """Advance by 2^128 draws (non-overlapping sub-stream carve-out)."""
        s0 = s1 = s2 = s3 = 0
        for word in _JUMP:
            for b in range(64):
                if word & (1 << b):
                    s0 ^= self._s[0]
                    s1 ^= self._s[1]
                    s2 ^= self._s[2]
                    s3 ^= self._s[3]
                self.next_u64()
        self._s = [s0, s1, s2, s3]
        self._spare_normal = None

    def split(self) -> "Rng":
        """Derive an independent child stream; consumes one parent draw."""
        return Rng(self.next_u64())

    def random(self) -> float:
        """Uniform float64 in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            draw = self.next_u64()
            if draw < limit:
                return draw % n

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Standard Box-Muller draw (with cached spare)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
        else:
            u1 = 0.0
            while u1 == 0.0:
                u1 = self.random()
            u2 = self.random()
            r = math.sqrt(-2.0 * math.log(u1))
            theta = 2.0 * math.pi * u2
            z = r * math.cos(theta)
            self._spare_normal = r * math.sin(theta)
        return mu + sigma * z

    def normal_array(self, shape: int | tuple[int, ...], mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        out = np.empty(shape, dtype=np.float64)
        flat = out.reshape(-1)
        for i in range(flat.shape[0]):
            flat[i] = self.normal(mu, sigma)
        return out

    def uniform_array(self, shape: int | tuple[int, ...], lo: float, hi: float) -> np.ndarray:
        out = np.empty(shape, dtype=np.float64)
        flat = out.reshape(-1)
        for i in range(flat.shape[0]):
            flat[i] = self.uniform(lo, hi)
        return out

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), in ascending order."""
        if not 0 <= k <= n:
            raise ValueError("sample size out of range")
        # Partial Fisher-Yates on an index pool; cheap for desk-scale n.
        pool = np.arange(n)
        for i in range(k):
            j = i + self.randint(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        picked = pool[:k].copy()
        picked.sort()
        return picked


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise ValueError("expected a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector entries must be finite")
    return arr


def l2_normalize(v) -> np.ndarray:
    """Scale v to unit Euclidean norm; rejects zero vectors."""
    arr = _as_vector(v)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValueError("degenerate feature")
    return arr / norm


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise unit normalization of an (n, d) matrix."""
    arr = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("degenerate feature")
    return arr / norms[:, None]


def softmax(logits) -> np.ndarray:
    """Stable softmax (max-subtracted); rows sum to 1 within 1e-12."""
    arr = _as_vector(logits)
    shifted = arr - arr.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    arr = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("logits must be finite")
    shifted = arr - arr.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between a and b, clamped to [-1, 1]."""
    va = _as_vector(a)
    vb = _as_vector(b)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("degenerate feature")
    return float(np.clip(float(va @ vb) / (na * nb), -1.0, 1.0))


def normalized_entropy(p, n_classes: int) -> float:
    """Shannon entropy of p divided by log(n_classes); 0*log(0) is 0."""
    if n_classes < 2:
        raise ValueError("entropy normalizer undefined for fewer than 2 classes")
    arr = _as_vector(p)
    if arr.shape[0] != n_classes:
        raise ValueError("probability vector length must equal the class count")
    if np.any(arr < -1e-9) or abs(float(arr.sum()) - 1.0) > 1e-9:
        raise ValueError("probabilities must lie on the simplex")
    if np.all(arr == arr[0]):
        return 1.0  # exactly uniform; avoids 1-ulp drift from rounded 1/C
    pos = arr[arr > 0.0]
    h = -float(np.sum(pos * np.log(pos)))
    return h / math.log(n_classes)


def normalized_entropy_rows(p: np.ndarray, n_classes: int) -> np.ndarray:
    """Row-wise normalized entropy of an (n, C) probability matrix."""
    if n_classes < 2:
        raise ValueError("entropy normalizer undefined for fewer than 2 classes")
    arr = np.asarray(p, dtype=np.float64)
    safe = np.where(arr > 0.0, arr, 1.0)
    h = -np.sum(arr * np.log(safe), axis=1)
    out = h / math.log(n_classes)
    out[np.all(arr == arr[:, :1], axis=1)] = 1.0
    return out
