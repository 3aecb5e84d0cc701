"""Portable deterministic sampling on top of the Philox counter stream.

Generator convenience methods (integers, shuffle, choice) are not guaranteed
stable across numpy versions, but the raw Philox output is: the algorithm is
fixed and keyed. Everything here consumes that raw uint64 stream through a
rejection-sampled bounded integer, so identical (seed, label) inputs give
byte-identical samples on any platform or numpy release.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import InputError


def derive_key(seed: int, label: str) -> np.ndarray:
    """128-bit Philox key from a seed and a purpose label via SHA-256."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return np.frombuffer(digest[:16], dtype="<u8").copy()


class RawSampler:
    """Keyed uniform sampler over the raw Philox uint64 stream."""

    def __init__(self, seed: int, label: str = ""):
        self.seed = int(seed)
        self.label = label
        self._bg = np.random.Philox(key=derive_key(self.seed, label))

    def substream(self, label: str) -> "RawSampler":
        return RawSampler(self.seed, f"{self.label}/{label}")

    def next_raw(self) -> int:
        return int(self._bg.random_raw())

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by rejecting the biased tail of 2^64."""
        if n <= 0:
            raise InputError(f"randbelow needs n > 0, got {n}")
        if n == 1:
            return 0
        # largest multiple of n that fits in 64 bits
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_raw()
            if r < limit:
                return r % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """k distinct items, order given by a partial Fisher-Yates pass."""
        if k > len(items):
            raise InputError(f"cannot sample {k} from {len(items)} items")
        pool = list(items)
        for i in range(k):
            j = i + self.randbelow(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def sample_pair_indices(self, n: int, k: int) -> list[tuple[int, int]]:
        """k distinct unordered index pairs out of the C(n, 2) possible.

        Small k relative to C(n, 2) uses rejection on encoded pair ids;
        otherwise the full enumeration is subsampled. Pair id p encodes the
        pair with i < j via p = j*(j-1)/2 + i (triangular rows).
        """
        total = n * (n - 1) // 2
        if k > total:
            raise InputError(f"cannot sample {k} of {total} pairs")
        if k == total:
            return [(i, j) for j in range(n) for i in range(j)]
        if k * 3 <= total:
            chosen: set[int] = set()
            order: list[int] = []
            while len(order) < k:
                p = self.randbelow(total)
                if p not in chosen:
                    chosen.add(p)
                    order.append(p)
        else:
            ids = list(range(total))
            order = self.sample(ids, k)
        out = []
        for p in order:
            # invert the triangular encoding: largest j with j*(j-1)/2 <= p
            j = int((1 + np.sqrt(1 + 8 * p)) // 2)
            while j * (j - 1) // 2 > p:
                j -= 1
            while (j + 1) * j // 2 <= p:
                j += 1
            i = p - j * (j - 1) // 2
            out.append((i, j))
        return out

    def sample_product_indices(self, m: int, n: int, k: int) -> list[tuple[int, int]]:
        """k distinct (i, j) cells of an m x n grid, encoded as p = i*n + j."""
        total = m * n
        if k > total:
            raise InputError(f"cannot sample {k} of {total} grid cells")
        if k == total:
            return [(i, j) for i in range(m) for j in range(n)]
        if k * 3 <= total:
            chosen: set[int] = set()
            order: list[int] = []
            while len(order) < k:
                p = self.randbelow(total)
                if p not in chosen:
                    chosen.add(p)
                    order.append(p)
        else:
            order = self.sample(list(range(total)), k)
        return [(p // n, p % n) for p in order]
