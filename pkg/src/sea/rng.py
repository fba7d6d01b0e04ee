"""Counter-based deterministic random streams.

Every draw is a pure function of (seed, stream labels, draw index), computed
by hashing a 64-bit counter under a blake2b key.  This gives the same stream
on every platform and lets independent pipeline stages pull from disjoint
streams without any ordering coupling: work split across workers cannot
change the numbers, and a resumed run re-derives exactly the draws it needs.
"""

from __future__ import annotations

import hashlib

import numpy as np

_DOUBLE_SCALE = float(2**53)


def _derive_key(parent_key: bytes, labels: tuple) -> bytes:
    h = hashlib.blake2b(parent_key, digest_size=32)
    for label in labels:
        if isinstance(label, str):
            raw = b"s" + label.encode("utf-8")
        elif isinstance(label, (int, np.integer)):
            raw = b"i" + int(label).to_bytes(16, "little", signed=True)
        else:
            raise TypeError(f"stream labels must be str or int, got {type(label)!r}")
        h.update(len(raw).to_bytes(4, "little"))
        h.update(raw)
    return h.digest()


class Rng:
    """One deterministic stream; sub-streams are derived, never consumed from."""

    def __init__(self, seed: int, _key: bytes | None = None):
        self.seed = int(seed)
        if _key is None:
            _key = _derive_key(b"sea-rng-v1", (self.seed,))
        self._key = _key
        self._counter = 0

    def stream(self, *labels) -> "Rng":
        """Derive an independent child stream keyed by the given labels."""
        child = Rng(self.seed, _key=_derive_key(self._key, labels))
        return child

    def _raw_block(self, block_index: int) -> np.ndarray:
        h = hashlib.blake2b(self._key, digest_size=64)
        h.update(block_index.to_bytes(8, "little"))
        return np.frombuffer(h.digest(), dtype="<u8")

    def _next_uint64(self, n: int) -> np.ndarray:
        # Each block hash yields eight 64-bit words; draws advance a counter,
        # so the k-th draw of a stream is the same no matter how it is batched.
        start = self._counter
        self._counter += n
        first_block, first_off = divmod(start, 8)
        last_block = (start + n - 1) // 8
        blocks = [self._raw_block(b) for b in range(first_block, last_block + 1)]
        words = np.concatenate(blocks)
        return words[first_off : first_off + n]

    def uniform(self, n: int | None = None):
        """Uniform floats in [0, 1): top 53 bits of each word."""
        m = 1 if n is None else int(n)
        u = (self._next_uint64(m) >> np.uint64(11)).astype(np.float64) / _DOUBLE_SCALE
        return float(u[0]) if n is None else u

    def integers(self, low: int, high: int, n: int | None = None):
        """Uniform integers in [low, high) via rejection-free 128-bit scaling."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        span = int(high) - int(low)
        m = 1 if n is None else int(n)
        words = self._next_uint64(m)
        # (word * span) >> 64, exact in Python ints; bias < span / 2**64.
        vals = np.array([low + ((int(w) * span) >> 64) for w in words], dtype=np.int64)
        return int(vals[0]) if n is None else vals

    def normal(self, shape=None) -> np.ndarray:
        """Standard normals via Box-Muller; consumes two uniforms per value."""
        if shape is None:
            return float(self.normal((1,))[0])
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        count = int(np.prod(shape)) if shape else 1
        u1 = np.clip(self.uniform(count), 1e-300, None)
        u2 = self.uniform(count)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return z.reshape(shape)

    def choice_p(self, p: np.ndarray) -> int:
        """Index drawn with probabilities `p` (assumed normalized)."""
        u = self.uniform()
        edges = np.cumsum(np.asarray(p, dtype=np.float64))
        edges[-1] = max(edges[-1], 1.0)  # guard float shortfall at the last edge
        return int(np.searchsorted(edges, u, side="right"))
