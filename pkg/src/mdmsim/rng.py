"""Seeded, splittable random number handles.

All randomness in the package flows through RngHandle, a value type naming a
(seed, stream) pair for a counter-based Philox generator. Handles are cheap
to create, never hold generator state, and can be split into independent
child handles, so per-client work can be parallelized or reordered without
changing any draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

_UINT64_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(state: int) -> int:
    # Finalizer of the splitmix64 generator; bijective on 64-bit ints.
    z = (state + _GOLDEN) & _UINT64_MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _UINT64_MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _UINT64_MASK
    return (z ^ (z >> 31)) & _UINT64_MASK


@dataclass(frozen=True)
class RngHandle:
    """Value naming one reproducible random stream.

    Identical (seed, stream) pairs produce identical draw sequences on every
    platform. ``child(i)`` derives the i-th independent substream, keyed so
    that the result does not depend on how many siblings exist or in which
    order they are used.
    """

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        for name, value in (("seed", self.seed), ("stream", self.stream)):
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ContractError(f"RngHandle {name} must be an integer, got {value!r}")
            if not 0 <= int(value) < 2**64:
                raise ContractError(f"RngHandle {name} must fit in 64 unsigned bits, got {value}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream", int(self.stream))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this handle's stream."""
        return np.random.Generator(np.random.Philox(key=[self.seed, self.stream]))

    def child(self, index: int) -> "RngHandle":
        """Derive the index-th independent substream of this handle."""
        if not isinstance(index, (int, np.integer)) or isinstance(index, bool):
            raise ContractError(f"child index must be an integer, got {index!r}")
        if index < 0:
            raise ContractError(f"child index must be non-negative, got {index}")
        # Distinct indices hit distinct splitmix64 inputs (odd increment),
        # and the finalizer is a bijection, so siblings never collide.
        state = (self.stream + (int(index) + 1) * _GOLDEN) & _UINT64_MASK
        return RngHandle(self.seed, _splitmix64(state))
