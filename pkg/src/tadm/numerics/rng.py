"""Deterministic random source.

Every random draw in the package flows through :class:`Rng`, a thin wrapper
around numpy's Philox4x64-10 counter-based bit generator.  Normal variates
use numpy's ziggurat transform.  Philox output is a pure function of
(key, counter) and numpy guarantees stream stability for a fixed algorithm
across platforms and releases, which is exactly the reproducibility
contract required here: identical seed plus identical call sequence gives
bit-identical output everywhere.

Independent substreams are addressed, not split: ``derive_seed`` hashes a
tuple of labels with SHA-256 (Python's builtin ``hash`` is salted per
process and would break run-to-run determinism).
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..errors import ShapeError

_MASK64 = 0xFFFFFFFFFFFFFFFF


def derive_seed(*parts) -> int:
    """Collapse (seed, label, ...) into a stable 64-bit seed."""
    text = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """Seeded deterministic generator (Philox4x64-10, ziggurat normals)."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def child(self, *labels) -> "Rng":
        """Fresh stream addressed by (this seed, labels); order-independent
        of how much the parent stream has been consumed."""
        return Rng(derive_seed(self.seed, *labels))

    def normal(self, shape=None) -> np.ndarray:
        return self._gen.standard_normal(size=shape, dtype=np.float32)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        u = self._gen.random(size=shape, dtype=np.float32)
        return np.float32(low) + (np.float32(high) - np.float32(low)) * u

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def randn(rng: Rng, shape) -> "Tensor":
    """Standard-normal tensor; advances ``rng`` deterministically."""
    from .tensor import Tensor

    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ShapeError(f"randn: invalid shape {shape}, extents must be >= 1")
    return Tensor(rng.normal(shape))
