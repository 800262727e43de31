"""Seedable, splittable random streams.

Each stream wraps numpy's counter-based Philox bit generator keyed by ``(seed, stream_id)``,
so a child stream is fully determined by its parent's seed and a label and never shares
state with the parent or its siblings. Gaussian draws use numpy's ziggurat transform.
"""

import hashlib

import numpy as np
import numpy.typing as npt

MASK64 = (1 << 64) - 1


def _derive_stream_id(parent_id: int, label: str) -> int:
    digest = hashlib.blake2b(f"{parent_id}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """Deterministic random stream identified by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        self.seed = int(seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id:#x})"

    def split(self, label: str) -> "RngStream":  # Derive an independent child stream without touching this one !!!
        return RngStream(self.seed, _derive_stream_id(self.stream_id, label))

    def draw_uniform(self, size: int | tuple[int, ...] | None = None) -> float | npt.NDArray[np.float64]:
        """Uniform on [0, 1)."""
        return self._generator.random(size)

    def draw_gaussian(self, size: int | tuple[int, ...] | None = None) -> float | npt.NDArray[np.float64]:
        """Standard normal."""
        return self._generator.standard_normal(size)

    def draw_unit_vector3(self) -> npt.NDArray[np.float64]:
        """Uniform on the unit sphere (normalized isotropic Gaussian)."""
        while True:
            v = self._generator.standard_normal(3)
            norm = np.linalg.norm(v)
            if norm > 1e-12:
                return v / norm

    def draw_phases(self, size: int) -> npt.NDArray[np.float64]:
        """Uniform phases on [0, 2π)."""
        return 2.0 * np.pi * self._generator.random(size)

    def draw_unit_modulus(self, size: int) -> npt.NDArray[np.complex128]:
        return np.exp(1j * self.draw_phases(size))

    def draw_complex_gaussian(self, shape: tuple[int, ...]) -> npt.NDArray[np.complex128]:
        """Circularly symmetric complex Gaussian with unit variance."""
        re = self._generator.standard_normal(shape)
        im = self._generator.standard_normal(shape)
        return (re + 1j * im) / np.sqrt(2.0)

    def draw_in_disc(self, center: npt.ArrayLike, radius: float) -> npt.NDArray[np.float64]:
        """Uniform point in the horizontal disc around ``center`` (z kept)."""
        r = radius * np.sqrt(self._generator.random())
        angle = 2.0 * np.pi * self._generator.random()
        point = np.asarray(center, dtype=np.float64).copy()
        point[0] += r * np.cos(angle)
        point[1] += r * np.sin(angle)
        return point

    def permutation(self, n: int) -> npt.NDArray[np.int64]:
        return self._generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> npt.NDArray[np.int64]:
        return self._generator.choice(n, size=size, replace=replace)

    def integers(self, high: int) -> int:
        return int(self._generator.integers(0, high))


def as_stream(rng: "RngStream | int") -> RngStream:
    """Accept either a stream or a bare integer seed."""
    return rng if isinstance(rng, RngStream) else RngStream(int(rng))
