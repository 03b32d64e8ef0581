"""Deterministic, splittable random streams.

Every stochastic component in the package (population init, mutation draws,
noise realizations, epsilon-greedy exploration, ...) pulls from a
:class:`RandomStream` rather than from global numpy state.  A stream is a
pure value: the same ``(seed, stream_id)`` pair always produces the same
draw sequence, and substreams derived from different index tuples are
statistically independent, so experiments can hand out generators to
parallel workers without any ordering coupling between them.

The implementation rides on numpy's counter-based Philox bit generator,
keyed directly by ``(seed, stream_id)``.  Substream ids are derived by
mixing the parent id with the index tuple through splitmix64, which is a
bijective avalanche mix, so nearby indices land on unrelated keys.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One splitmix64 mixing round (finalizer only, no counter increment)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RandomStream:
    """Value-semantics handle for a reproducible random sequence."""

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.seed, (int, np.integer)):
            raise TypeError(f"seed must be an integer, got {type(self.seed).__name__}")
        if not isinstance(self.stream_id, (int, np.integer)):
            raise TypeError(f"stream_id must be an integer, got {type(self.stream_id).__name__}")
        # numpy scalars overflow in the splitmix arithmetic; normalize early
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream_id", int(self.stream_id))

    def generator(self) -> np.random.Generator:
        """Fresh numpy Generator positioned at the start of this stream."""
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, *indices: int) -> "RandomStream":
        """Child stream for an index tuple, e.g. ``stream.substream(cell, run)``.

        Derivation is deterministic and order-sensitive: ``substream(1, 2)``
        and ``substream(2, 1)`` are different streams, and both differ from
        the parent.
        """
        if not indices:
            raise ValueError("substream requires at least one index")
        acc = self.stream_id & _MASK64
        for idx in indices:
            if not isinstance(idx, (int, np.integer)):
                raise TypeError(f"substream indices must be integers, got {type(idx).__name__}")
            acc = _splitmix64((acc ^ (int(idx) & _MASK64)) & _MASK64)
        return RandomStream(self.seed, acc)


def as_stream(seed: "int | RandomStream") -> RandomStream:
    """Coerce an integer seed or an existing stream to a RandomStream."""
    if isinstance(seed, RandomStream):
        return seed
    return RandomStream(int(seed))
