"""Array manifold for uniform circular arrays with subarray sampling.

Antennas are numbered clockwise starting at azimuth zero. Subarray indices
are 1-based everywhere in the public API, matching how switching schemes
are usually written down.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * np.pi

# Four switching states of three RF chains on a nine-element UCA.
DEFAULT_SCHEME_INDICES = ((1, 2, 9), (1, 3, 8), (1, 4, 7), (1, 5, 6))


def wrap_angle(theta):
    """Wrap angles into ``[0, 2*pi)``."""
    wrapped = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)


@dataclass(frozen=True)
class ArrayGeometry:
    """Planar array described by antenna azimuths on a circle.

    Attributes:
        num_antennas: Number of antennas ``M``.
        radius_over_wavelength: Array radius in wavelengths.
        antenna_azimuths: Azimuth of every antenna in radians.
    """

    num_antennas: int
    radius_over_wavelength: float
    antenna_azimuths: np.ndarray

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be positive")
        if not self.radius_over_wavelength > 0:
            raise ValueError("radius_over_wavelength must be positive")
        az = np.asarray(self.antenna_azimuths, dtype=float)
        if az.shape != (self.num_antennas,):
            raise ValueError("need one azimuth per antenna")
        object.__setattr__(self, "antenna_azimuths", az)

    @classmethod
    def uca(cls, num_antennas: int = 9, radius_over_wavelength: float = 1.0):
        """Uniform circular array with ``phi_m = 2*pi*(m-1)/M``."""
        az = TWO_PI * np.arange(num_antennas) / num_antennas
        return cls(num_antennas, float(radius_over_wavelength), az)


@dataclass(frozen=True)
class SubarrayScheme:
    """Switching scheme: ``K`` subsets of ``W`` antennas each.

    ``selections`` holds 1-based antenna indices, one tuple per subarray.
    """

    num_antennas: int
    selections: tuple

    def __post_init__(self):
        sel = tuple(tuple(int(i) for i in s) for s in self.selections)
        if not sel:
            raise ValueError("scheme needs at least one subarray")
        widths = {len(s) for s in sel}
        if len(widths) != 1:
            raise ValueError("every subarray must have the same number of antennas")
        for s in sel:
            if len(set(s)) != len(s):
                raise ValueError(f"duplicate antenna in subarray {s}")
            if min(s) < 1 or max(s) > self.num_antennas:
                raise ValueError(f"antenna index out of range in subarray {s}")
        object.__setattr__(self, "selections", sel)

    @property
    def num_subarrays(self) -> int:
        return len(self.selections)

    @property
    def num_chains(self) -> int:
        return len(self.selections[0])

    @property
    def index_array(self) -> np.ndarray:
        """Zero-based ``(K, W)`` integer array of selected antennas."""
        return np.asarray(self.selections, dtype=int) - 1

    @classmethod
    def default(cls):
        return cls(9, DEFAULT_SCHEME_INDICES)

    @classmethod
    def full(cls, num_antennas: int):
        """Fully sampled array, i.e. ``K = 1`` and ``W = M``."""
        return cls(num_antennas, (tuple(range(1, num_antennas + 1)),))

    @classmethod
    def from_file(cls, path, num_antennas: int):
        """Read a scheme with one subarray per line of 1-based indices.

        Indices may be separated by commas or whitespace; ``#`` starts a
        comment.
        """
        rows = []
        for line in Path(path).read_text().splitlines():
            line = line.split("#", 1)[0].replace(",", " ").strip()
            if line:
                rows.append(tuple(int(tok) for tok in line.split()))
        return cls(num_antennas, tuple(rows))

    def to_file(self, path):
        lines = [" ".join(str(i) for i in s) for s in self.selections]
        Path(path).write_text("\n".join(lines) + "\n")


def steering_vector(geom: ArrayGeometry, theta):
    """UCA response ``exp(j*2*pi*(R/lambda)*cos(theta - phi_m))``.

    Args:
        geom: Array geometry.
        theta: Scalar angle or array of angles in radians.

    Returns:
        ``(M,)`` vector for scalar ``theta``, otherwise an ``(M, len(theta))``
        steering matrix.
    """
    th = wrap_angle(np.asarray(theta, dtype=float))
    phase = TWO_PI * geom.radius_over_wavelength * np.cos(
        np.subtract.outer(geom.antenna_azimuths, th)
    )
    return np.exp(1j * phase)


def steering_derivative(geom: ArrayGeometry, theta):
    """Derivative of :func:`steering_vector` with respect to ``theta``.

    Entry ``m`` is ``-j*2*pi*(R/lambda)*sin(theta - phi_m) * a_m(theta)``.
    """
    th = wrap_angle(np.asarray(theta, dtype=float))
    # theta - phi_m, laid out with antennas along the first axis
    delta = -np.subtract.outer(geom.antenna_azimuths, th)
    kr = TWO_PI * geom.radius_over_wavelength
    return -1j * kr * np.sin(delta) * np.exp(1j * kr * np.cos(delta))


def selection_matrix(scheme: SubarrayScheme, k: int) -> np.ndarray:
    """Binary ``W x M`` matrix connecting RF chains to antennas of subarray ``k``.

    ``k`` is 1-based.
    """
    if not 1 <= k <= scheme.num_subarrays:
        raise IndexError(f"subarray index {k} outside 1..{scheme.num_subarrays}")
    idx = np.asarray(scheme.selections[k - 1]) - 1
    G = np.zeros((scheme.num_chains, scheme.num_antennas))
    G[np.arange(scheme.num_chains), idx] = 1.0
    return G


def subarray_steering(scheme: SubarrayScheme, geom: ArrayGeometry, theta) -> np.ndarray:
    """``G^(k) A(theta)`` for every subarray, shape ``(K, W, len(theta))``."""
    A = steering_vector(geom, np.atleast_1d(theta))
    return A[scheme.index_array]


def coarray_manifold(scheme: SubarrayScheme, geom: ArrayGeometry, theta_grid) -> np.ndarray:
    """Stacked Khatri-Rao products ``(G A*) o (G A)`` over subarrays.

    Column ``q`` stacks ``kron(conj(G a), G a)`` for each subarray, which is
    the column-major vectorisation of ``G a a^H G^T``.

    Returns:
        Complex array of shape ``(K*W**2, Q)``.
    """
    B = subarray_steering(scheme, geom, theta_grid)
    K, W, Q = B.shape
    kr = np.conj(B)[:, :, None, :] * B[:, None, :, :]
    return kr.reshape(K * W * W, Q)


def kruskal_rank_smallscale(matrix, max_cols: int = 20, rtol: float = 1e-8) -> int:
    """Kruskal rank by exhaustive enumeration of column subsets.

    A subset counts as independent when its smallest singular value exceeds
    ``rtol`` times its largest one.

    Raises:
        ValueError: If the matrix has more than ``max_cols`` columns.
    """
    X = np.asarray(matrix)
    n_cols = X.shape[1]
    if n_cols > max_cols:
        raise ValueError(
            f"{n_cols} columns exceed max_cols={max_cols}; subset enumeration would blow up"
        )
    if n_cols == 0:
        return 0
    col_norms = np.linalg.norm(X, axis=0)
    if np.any(col_norms == 0):
        return 0
    rank = 0
    for r in range(1, min(n_cols, X.shape[0]) + 1):
        for subset in itertools.combinations(range(n_cols), r):
            s = np.linalg.svd(X[:, subset], compute_uv=False)
            if s[-1] <= rtol * s[0]:
                return rank
        rank = r
    return rank
