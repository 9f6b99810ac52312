"""Deterministic counter-based random streams.

Every uniform draw is a pure function of the stream coordinates
(seed, frame, pixel, sample, dimension), so results never depend on
worker count, scheduling, or batch shape. The scalar and vectorized
paths share the same 64-bit mixing, bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Distinct odd multipliers per coordinate, then a SplitMix64 finalizer.
_P_FRAME = 0xA24BAED4963EE407
_P_PIXEL = 0x9FB21C651E98DF25
_P_SAMPLE = 0xD6E8FEB86659FD93
_P_DIM = 0xFF51AFD7ED558CCD
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

_INV_2_53 = 2.0 ** -53

# Fixed dimension layout for the per-(pixel, sample) streams consumed by
# the renderer. Dimensions at and above DIM_INTEGRATOR belong to the
# integrator's own walk and diverge per lane.
DIM_JITTER_X = 0
DIM_JITTER_Y = 1
DIM_LENS_U = 2
DIM_LENS_V = 3
DIM_TIME = 4
DIM_INTEGRATOR = 8


def hash_u64(seed, frame, pixel, sample, dim) -> np.ndarray:
    """Hash the five stream coordinates to uint64; array arguments broadcast."""
    seed = np.asarray(seed, dtype=np.uint64)
    h = seed ^ (np.asarray(frame, dtype=np.uint64) * np.uint64(_P_FRAME))
    h = h ^ (np.asarray(pixel, dtype=np.uint64) * np.uint64(_P_PIXEL))
    h = h ^ (np.asarray(sample, dtype=np.uint64) * np.uint64(_P_SAMPLE))
    h = h ^ (np.asarray(dim, dtype=np.uint64) * np.uint64(_P_DIM))
    h = h ^ (h >> np.uint64(30))
    h = h * np.uint64(_MIX_A)
    h = h ^ (h >> np.uint64(27))
    h = h * np.uint64(_MIX_B)
    h = h ^ (h >> np.uint64(31))
    return h


def uniform(seed, frame, pixel, sample, dim):
    """Uniform float64 in [0, 1) for the given stream coordinates.

    Accepts scalars or broadcastable arrays; returns float64 of the
    broadcast shape (0-d for all-scalar input).
    """
    h = hash_u64(seed, frame, pixel, sample, dim)
    return (h >> np.uint64(11)).astype(np.float64) * _INV_2_53


def _uniform_scalar(seed: int, frame: int, pixel: int, sample: int, dim: int) -> float:
    # Pure-python mirror of hash_u64; identical mod-2^64 arithmetic.
    h = (seed & _MASK64) ^ ((frame * _P_FRAME) & _MASK64)
    h ^= (pixel * _P_PIXEL) & _MASK64
    h ^= (sample * _P_SAMPLE) & _MASK64
    h ^= (dim * _P_DIM) & _MASK64
    h ^= h >> 30
    h = (h * _MIX_A) & _MASK64
    h ^= h >> 27
    h = (h * _MIX_B) & _MASK64
    h ^= h >> 31
    return (h >> 11) * _INV_2_53


class RngStream:
    """Sequential view of one (seed, frame, pixel, sample) stream.

    Draws advance an internal dimension counter; two streams with equal
    coordinates always produce the identical sequence.
    """

    __slots__ = ("seed", "frame", "pixel", "sample", "dim")

    def __init__(self, seed: int, frame: int = 0, pixel: int = 0, sample: int = 0,
                 dim: int = DIM_INTEGRATOR):
        self.seed = int(seed)
        self.frame = int(frame)
        self.pixel = int(pixel)
        self.sample = int(sample)
        self.dim = int(dim)

    def next(self) -> float:
        u = _uniform_scalar(self.seed, self.frame, self.pixel, self.sample, self.dim)
        self.dim += 1
        return u

    def next2(self) -> tuple[float, float]:
        return self.next(), self.next()


class LaneRng:
    """Vectorized per-lane streams with independent dimension counters.

    pixel/sample are fixed per lane; `draw(mask)` pulls one uniform for
    the masked lanes and advances only their counters, so lanes that
    branch differently stay on their own deterministic sequences.
    """

    __slots__ = ("seed", "frame", "pixel", "sample", "dim")

    def __init__(self, seed: int, frame: int, pixel: np.ndarray, sample: np.ndarray,
                 dim: int = DIM_INTEGRATOR):
        self.seed = int(seed)
        self.frame = int(frame)
        self.pixel = np.asarray(pixel, dtype=np.uint64)
        self.sample = np.asarray(sample, dtype=np.uint64)
        self.dim = np.full(self.pixel.shape, dim, dtype=np.uint64)

    def draw(self, mask: np.ndarray | None = None) -> np.ndarray:
        if mask is None:
            u = uniform(self.seed, self.frame, self.pixel, self.sample, self.dim)
            self.dim += np.uint64(1)
            return u
        u = uniform(self.seed, self.frame, self.pixel[mask], self.sample[mask],
                    self.dim[mask])
        self.dim[mask] += np.uint64(1)
        return u
