"""Data generation under the stochastic signal model and NN featurisation."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import TWO_PI, ArrayGeometry, SubarrayScheme, steering_vector, wrap_angle


@dataclass(frozen=True)
class ScenarioRanges:
    """Generator ranges for random scenarios.

    The strongest source always has unit power, so the SNR of a scenario is
    ``1 / noise_var``.

    Attributes:
        min_source_power_db: Lower end of the weaker sources' power in dB.
            Set to 0 for equally powered sources.
        snr_db: ``(low, high)`` SNR range in dB, sampled uniformly in dB.
        field_of_view: Width of the DoA interval ``[0, U)``.
    """

    min_source_power_db: float = -9.0
    snr_db: tuple = (-10.0, 30.0)
    field_of_view: float = TWO_PI

    def __post_init__(self):
        lo, hi = self.snr_db
        if lo > hi:
            raise ValueError(f"invalid SNR range {self.snr_db}")
        if self.min_source_power_db > 0:
            raise ValueError("min_source_power_db must be <= 0 dB")

    @classmethod
    def fixed_snr(cls, snr_db: float, min_source_power_db: float = -9.0):
        return cls(min_source_power_db=min_source_power_db, snr_db=(snr_db, snr_db))


@dataclass
class Scenario:
    """Ground truth of one trial."""

    doas: np.ndarray
    source_cov: np.ndarray
    noise_var: float
    rho: float | None = None

    @property
    def num_sources(self) -> int:
        return len(self.doas)

    @property
    def snr_db(self) -> float:
        return -10.0 * np.log10(self.noise_var)


@dataclass
class SampleCovSet:
    """Per-subarray sample covariance matrices, shape ``(K, W, W)``."""

    matrices: np.ndarray
    num_snapshots: int

    @property
    def num_subarrays(self) -> int:
        return self.matrices.shape[0]

    @property
    def num_chains(self) -> int:
        return self.matrices.shape[1]


def correlated_covariance(rho: float, powers) -> np.ndarray:
    """``D^(1/2) T D^(1/2)`` with Toeplitz correlation ``T_ij = rho**|i-j|``."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho={rho} outside [0, 1]")
    p = np.asarray(powers, dtype=float)
    idx = np.arange(len(p))
    T = float(rho) ** np.abs(idx[:, None] - idx[None, :])
    d = np.sqrt(p)
    return (d[:, None] * T * d[None, :]).astype(complex)


def draw_scenario(
    num_sources: int,
    ranges: ScenarioRanges,
    rng: np.random.Generator,
    correlation: str = "uncorrelated",
    rho: float | None = None,
    min_separation: float | None = None,
) -> Scenario:
    """Draw a random scenario.

    DoAs are i.i.d. uniform on the field of view and returned sorted. One
    randomly chosen source has unit power, the others are uniform in dB on
    ``[min_source_power_db, 0]``.

    Args:
        num_sources: Model order ``L`` (may be 0).
        ranges: Generator ranges.
        rng: Random generator.
        correlation: ``"uncorrelated"`` (diagonal source covariance),
            ``"uniform"`` (Toeplitz correlation with ``rho ~ U[0, 1]``) or
            ``"fixed"`` (Toeplitz with the given ``rho``).
        rho: Correlation coefficient for ``correlation="fixed"``.
        min_separation: Optional minimum circular distance between DoAs,
            enforced by rejection sampling.
    """
    L = int(num_sources)
    if L < 0:
        raise ValueError("num_sources must be >= 0")
    U = ranges.field_of_view
    while True:
        theta = rng.uniform(0.0, U, size=L)
        if min_separation is None or L < 2:
            break
        s = np.sort(theta)
        gaps = np.diff(np.concatenate([s, [s[0] + TWO_PI]]))
        if gaps.min() >= min_separation:
            break
    powers_db = rng.uniform(ranges.min_source_power_db, 0.0, size=L)
    if L:
        powers_db[rng.integers(L)] = 0.0
    powers = 10.0 ** (powers_db / 10.0)
    lo, hi = ranges.snr_db
    snr_db = rng.uniform(lo, hi) if hi > lo else lo
    noise_var = 10.0 ** (-snr_db / 10.0)

    order = np.argsort(theta, kind="stable")
    theta = wrap_angle(theta[order])
    powers = powers[order]

    if correlation == "uncorrelated":
        R_s = np.diag(powers).astype(complex)
        used_rho = None
    elif correlation == "uniform":
        used_rho = float(rng.uniform(0.0, 1.0))
        R_s = correlated_covariance(used_rho, powers)
    elif correlation == "fixed":
        if rho is None:
            raise ValueError("correlation='fixed' needs rho")
        used_rho = float(rho)
        R_s = correlated_covariance(used_rho, powers)
    else:
        raise ValueError(f"unknown correlation mode {correlation!r}")
    return Scenario(theta, R_s, float(noise_var), used_rho)


@dataclass
class ScenarioBatch:
    """``B`` scenarios of equal order in array form."""

    doas: np.ndarray  # (B, L), each row ascending
    source_cov: np.ndarray  # (B, L, L)
    noise_var: np.ndarray  # (B,)

    def __len__(self):
        return len(self.noise_var)

    def scenario(self, i: int) -> Scenario:
        return Scenario(self.doas[i].copy(), self.source_cov[i].copy(), float(self.noise_var[i]))


def draw_scenario_batch(
    num_sources: int,
    batch_size: int,
    ranges: ScenarioRanges,
    rng: np.random.Generator,
    correlation: str = "uncorrelated",
    rho: float | None = None,
) -> ScenarioBatch:
    """Vectorised :func:`draw_scenario` (same distribution, different draw order)."""
    L, B = int(num_sources), int(batch_size)
    theta = np.sort(rng.uniform(0.0, ranges.field_of_view, size=(B, L)), axis=1)
    powers_db = rng.uniform(ranges.min_source_power_db, 0.0, size=(B, L))
    if L:
        powers_db[np.arange(B), rng.integers(L, size=B)] = 0.0
    powers = 10.0 ** (powers_db / 10.0)
    lo, hi = ranges.snr_db
    snr_db = rng.uniform(lo, hi, size=B) if hi > lo else np.full(B, float(lo))
    noise_var = 10.0 ** (-snr_db / 10.0)
    idx = np.arange(L)
    if correlation == "uncorrelated":
        rhos = np.zeros(B)
    elif correlation == "uniform":
        rhos = rng.uniform(0.0, 1.0, size=B)
    elif correlation == "fixed":
        if rho is None or not 0.0 <= rho <= 1.0:
            raise ValueError("correlation='fixed' needs rho in [0, 1]")
        rhos = np.full(B, float(rho))
    else:
        raise ValueError(f"unknown correlation mode {correlation!r}")
    with np.errstate(divide="ignore"):
        T = rhos[:, None, None] ** np.abs(idx[:, None] - idx[None, :])[None]
    d = np.sqrt(powers)
    R_s = (d[:, :, None] * T * d[:, None, :]).astype(complex)
    return ScenarioBatch(wrap_angle(theta), R_s, noise_var)


def _psd_sqrt(R: np.ndarray) -> np.ndarray:
    """Hermitian square root with negative eigenvalues clipped to zero."""
    R = 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))
    w, V = np.linalg.eigh(R)
    w = np.sqrt(np.clip(w, 0.0, None))
    return (V * w[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def _complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def synthesize_snapshots(
    scenario: Scenario,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    num_snapshots: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Received samples of every subarray, shape ``(K, N, W)``.

    Source symbols and noise are drawn afresh for each subarray and snapshot.
    Only the ``W`` selected noise entries are drawn, which has the same
    distribution as selecting from an ``M``-dimensional noise vector.
    """
    N = int(num_snapshots)
    if N < 1:
        raise ValueError("num_snapshots must be >= 1")
    K, W = scheme.num_subarrays, scheme.num_chains
    L = scenario.num_sources
    y = np.sqrt(scenario.noise_var) * _complex_normal(rng, (K, N, W))
    if L:
        B = steering_vector(geom, scenario.doas)[scheme.index_array]  # (K, W, L)
        S = _complex_normal(rng, (K, N, L)) @ _psd_sqrt(scenario.source_cov).T
        y = y + np.einsum("kwl,knl->knw", B, S)
    return y


def synthesize_batch(
    doas: np.ndarray,
    source_sqrt: np.ndarray,
    noise_var: np.ndarray,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    num_snapshots: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorised :func:`synthesize_snapshots` for ``B`` scenarios of equal order.

    Args:
        doas: ``(B, L)`` angles.
        source_sqrt: ``(B, L, L)`` square roots of the source covariances.
        noise_var: ``(B,)`` noise powers.

    Returns:
        ``(B, K, N, W)`` snapshots.
    """
    Bn, L = doas.shape
    K, W = scheme.num_subarrays, scheme.num_chains
    y = np.sqrt(noise_var)[:, None, None, None] * _complex_normal(
        rng, (Bn, K, num_snapshots, W)
    )
    if L:
        A = steering_vector(geom, doas.ravel()).T.reshape(Bn, L, geom.num_antennas)
        GA = A[:, :, scheme.index_array]  # (B, L, K, W)
        S = _complex_normal(rng, (Bn, K, num_snapshots, L)) @ np.swapaxes(
            source_sqrt, -1, -2
        )[:, None]
        y = y + np.einsum("blkw,bknl->bknw", GA, S)
    return y


def simulate_batch_covariances(
    batch: ScenarioBatch,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    num_snapshots: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample covariances ``(B, K, W, W)`` for every scenario of a batch."""
    sqrt = _psd_sqrt(batch.source_cov) if batch.doas.shape[1] else batch.source_cov
    Y = synthesize_batch(batch.doas, sqrt, batch.noise_var, scheme, geom, num_snapshots, rng)
    return batch_covariances(Y)


def sample_covariances(snapshots: np.ndarray) -> SampleCovSet:
    """``(1/N) sum_n y y^H`` per subarray, explicitly Hermitian."""
    Y = np.asarray(snapshots)
    N = Y.shape[-2]
    if N < 1:
        raise ValueError("need at least one snapshot")
    R = np.swapaxes(Y, -1, -2) @ np.conj(Y) / N
    R = 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))
    return SampleCovSet(R, N)


def batch_covariances(snapshots: np.ndarray) -> np.ndarray:
    """Sample covariances of a ``(B, K, N, W)`` batch as a raw array."""
    return sample_covariances(snapshots).matrices


def _triu_indices(W):
    return np.triu_indices(W, k=1)


def featurize(covs) -> np.ndarray:
    """Real feature vector of length ``K*W**2`` (or ``(B, K*W**2)`` for batches).

    Per subarray: the ``W`` real diagonal entries, then the real parts and
    then the imaginary parts of the strict upper triangle in row-major order.
    """
    R = covs.matrices if isinstance(covs, SampleCovSet) else np.asarray(covs)
    W = R.shape[-1]
    iu, ju = _triu_indices(W)
    diag = np.real(np.diagonal(R, axis1=-2, axis2=-1))
    upper = R[..., iu, ju]
    blocks = np.concatenate([diag, upper.real, upper.imag], axis=-1)
    return blocks.reshape(*R.shape[:-3], -1)


def unfeaturize(x, num_subarrays: int, num_chains: int) -> np.ndarray:
    """Inverse of :func:`featurize` for a single feature vector."""
    K, W = num_subarrays, num_chains
    x = np.asarray(x, dtype=float).reshape(K, W * W)
    iu, ju = _triu_indices(W)
    n_up = len(iu)
    R = np.zeros((K, W, W), dtype=complex)
    idx = np.arange(W)
    R[:, idx, idx] = x[:, :W]
    upper = x[:, W : W + n_up] + 1j * x[:, W + n_up :]
    R[:, iu, ju] = upper
    R[:, ju, iu] = np.conj(upper)
    return R


_SNAPSHOT_HEADER = struct.Struct("<qqq")


def save_snapshots(path, snapshots: np.ndarray) -> None:
    """Write a ``(K, N, W)`` snapshot set: int64 header ``K, W, N`` then
    interleaved real/imag float64 samples in ``k, n, w`` order."""
    Y = np.ascontiguousarray(snapshots, dtype=np.complex128)
    K, N, W = Y.shape
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_HEADER.pack(K, W, N))
        fh.write(Y.view(np.float64).astype("<f8").tobytes())


def load_snapshots(path) -> np.ndarray:
    data = Path(path).read_bytes()
    K, W, N = _SNAPSHOT_HEADER.unpack_from(data)
    flat = np.frombuffer(data, dtype="<f8", offset=_SNAPSHOT_HEADER.size)
    if flat.size != 2 * K * N * W:
        raise ValueError("snapshot file size does not match its header")
    return flat.view(np.complex128).reshape(K, N, W).copy()
