from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import TWO_PI, ArrayGeometry, SubarrayScheme, subarray_steering


@dataclass(frozen=True)
class GridSpec:
    """``oversampling * M`` equidistant angles covering ``[0, 2*pi)``."""

    oversampling: int
    num_antennas: int

    def __post_init__(self):
        if self.oversampling < 1:
            raise ValueError("oversampling must be a positive integer")
        if self.size < 2:
            raise ValueError("grid needs at least two points")

    @property
    def size(self) -> int:
        return self.oversampling * self.num_antennas

    @property
    def spacing(self) -> float:
        return TWO_PI / self.size

    @property
    def angles(self) -> np.ndarray:
        return TWO_PI * np.arange(self.size) / self.size


@dataclass
class Dictionary:
    """Subarray steering vectors at the grid angles.

    Attributes:
        angles: ``(Q,)`` grid angles.
        steering: ``(K, W, Q)`` array, column ``g`` of block ``k`` is
            ``G_k a(angle_g)``.
    """

    angles: np.ndarray
    steering: np.ndarray

    @classmethod
    def build(cls, grid: GridSpec, scheme: SubarrayScheme, geom: ArrayGeometry):
        angles = grid.angles
        return cls(angles, subarray_steering(scheme, geom, angles))

    @property
    def size(self) -> int:
        return len(self.angles)


def peak_pick(spectrum, angles, num_sources: int, min_relative_height: float = 0.0) -> np.ndarray:
    """Angles of the ``num_sources`` highest circular local maxima, ascending.

    A local maximum is strictly larger than both neighbours, with
    wrap-around. Maxima below ``min_relative_height`` times the spectrum
    maximum are ignored. If there are fewer maxima than requested, the
    remaining slots are filled with the largest leftover entries.
    """
    p = np.asarray(spectrum, dtype=float)
    Q = len(p)
    if num_sources > Q:
        raise ValueError(f"cannot pick {num_sources} peaks from {Q} grid points")
    if num_sources <= 0:
        return np.zeros(0)
    is_max = (p > np.roll(p, 1)) & (p > np.roll(p, -1))
    if min_relative_height > 0.0:
        is_max &= p >= min_relative_height * p.max()
    peaks = np.flatnonzero(is_max)
    # stable sort keeps the lower index first on equal heights
    peaks = peaks[np.argsort(-p[peaks], kind="stable")]
    chosen = list(peaks[:num_sources])
    if len(chosen) < num_sources:
        taken = set(chosen)
        for g in np.argsort(-p, kind="stable"):
            if g not in taken:
                chosen.append(g)
                taken.add(g)
                if len(chosen) == num_sources:
                    break
    return np.sort(np.asarray(angles)[np.asarray(chosen, dtype=int)])


def peak_indices(spectrum, num_sources: int, min_relative_height: float = 0.0) -> np.ndarray:
    """Grid indices picked by :func:`peak_pick`, in the order of their angles."""
    p = np.asarray(spectrum, dtype=float)
    angles = np.arange(len(p), dtype=float)
    return peak_pick(p, angles, num_sources, min_relative_height).astype(int)
