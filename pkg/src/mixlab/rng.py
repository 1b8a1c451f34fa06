"""Seedable, splittable random streams.

Every stochastic component of the package (data generation, parameter init,
batch shuffling, mixing-matrix sampling, noise injection) draws from its own
child stream so that consumption in one component never shifts another.
Streams are backed by the counter-based Philox generator; a child's key is
derived from (seed, tag path) alone, never from the parent's running state,
so splitting is reproducible no matter how much the parent has been consumed.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_hash(tag) -> int:
    """Map a str/int tag to a stable 64-bit integer."""
    if isinstance(tag, bool) or not isinstance(tag, (str, int)):
        raise TypeError(f"stream tag must be str or int, got {type(tag).__name__}")
    payload = (b"s:" + tag.encode("utf-8")) if isinstance(tag, str) else b"i:" + str(tag).encode("ascii")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream:
    """A named, splittable random stream.

    Attributes:
        seed: root seed shared by the whole stream tree.
        path: tuple of tags leading from the root to this stream.
        gen: numpy Generator over a Philox bit generator; draws mutate it.
    """

    __slots__ = ("seed", "path", "gen")

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed) & _MASK64
        self.path = tuple(path)
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=tuple(_tag_hash(t) for t in self.path)
        )
        self.gen = np.random.Generator(np.random.Philox(ss))

    def split(self, tag) -> "RngStream":
        """Child stream for `tag`; independent of this stream's consumption."""
        return RngStream(self.seed, self.path + (tag,))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path!r})"


def split(stream: RngStream, tag) -> RngStream:
    """Functional alias for RngStream.split."""
    return stream.split(tag)
