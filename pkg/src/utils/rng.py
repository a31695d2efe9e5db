"""Deterministic, named pseudo-random streams.

Every stochastic choice in the simulator draws from its own named stream.
A stream is identified by the master seed plus a path of labels, for
example ``("r=0.43", "phi=1.5707963267948966", "pbs_input.emit")``. Each
label is hashed to a 64-bit word and used as the ``spawn_key`` of a numpy
``SeedSequence``; the bit generator is PCG64. The same (seed, path) always
reproduces the same sequence, and adding a stream never shifts another.
"""

import hashlib
from collections.abc import Iterable

import numpy as np

from src.utils.errors import InvalidArgumentError

GENERATOR_ID = "numpy.random.PCG64 seeded by SeedSequence(seed, spawn_key=blake2b64(path))"

_BLOCK_SIZE = 4096


def _label_key(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """Single-owner stream of uniforms in the open interval (0, 1).

    Draws are taken from the generator in blocks; the sequence seen by the
    caller does not depend on the block size.
    """

    def __init__(self, seed: int, path: tuple[str, ...]) -> None:
        if not 0 <= seed < 2**64:
            raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.path = path
        sequence = np.random.SeedSequence(
            entropy=seed, spawn_key=tuple(_label_key(label) for label in path)
        )
        self._generator = np.random.Generator(np.random.PCG64(sequence))
        self._block: list[float] = []
        self._pos = 0
        self.draws = 0

    @property
    def stream_id(self) -> str:
        return "/".join(self.path)

    def _refill(self) -> None:
        self._block = self._generator.random(_BLOCK_SIZE).tolist()
        self._pos = 0

    def uniform(self) -> float:
        """Next uniform in (0, 1); exact zeros from the generator are skipped."""
        while True:
            if self._pos >= len(self._block):
                self._refill()
            value = self._block[self._pos]
            self._pos += 1
            if value > 0.0:
                self.draws += 1
                return value

    def bernoulli(self, p: float) -> int:
        """
        Return 1 with probability ``p``.

        Raises:
            InvalidArgumentError: If p is outside [0, 1]
        """
        if not 0.0 <= p <= 1.0:
            raise InvalidArgumentError(f"p must be in [0, 1], got {p}")
        return 1 if self.uniform() < p else 0

    def angle(self) -> float:
        """Uniform angle in (0, 2*pi)."""
        return 2.0 * np.pi * self.uniform()

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r}, draws={self.draws})"


class RngFactory:
    """Derives named streams and child namespaces from one master seed."""

    def __init__(self, seed: int, namespace: Iterable[str] = ()) -> None:
        if not 0 <= seed < 2**64:
            raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.namespace = tuple(namespace)

    def child(self, label: str) -> "RngFactory":
        """Factory whose streams live under ``label``."""
        return RngFactory(self.seed, (*self.namespace, label))

    def stream(self, name: str) -> RngStream:
        """Fresh stream for ``name`` (e.g. ``"pbs_input.emit"``)."""
        return RngStream(self.seed, (*self.namespace, name))


def uniform(stream: RngStream) -> float:
    """Uniform draw in the open interval (0, 1)."""
    return stream.uniform()


def bernoulli(stream: RngStream, p: float) -> int:
    """Bernoulli(p) draw returning 0 or 1."""
    return stream.bernoulli(p)
