"""Time-invariant quantities of the multichannel signal model.

Everything here is per frequency: steering vectors of a uniform linear
array, diffuse-field coherence matrices, noise-subspace bases obtained
from speech-absent covariances, and speech blocking matrices.

Frequency convention: all functions take physical frequency in Hz.  When
working from an STFT, DFT bin k of an K-point transform at sample rate
fs maps to k * fs / K for k = 0 .. K/2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError

SOUND_SPEED = 343.0  # m/s, default propagation speed

# diagonal loading applied to coherence matrices; keeps them invertible
# at low frequencies where the sinc model is near singular
COHERENCE_LOADING = 1e-6

# relative gap below which adjacent eigenvalues are treated as tied
EIG_TIE_RTOL = 1e-8


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in meters plus medium/sampling constants."""

    mic_positions: np.ndarray  # (N, 3) float
    sound_speed: float = SOUND_SPEED
    sample_rate: float = 16000.0

    def __post_init__(self):
        pos = np.asarray(self.mic_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("mic_positions must be an (N, 3) array")
        if pos.shape[0] < 3:
            raise ValueError("need at least 3 microphones")
        if not np.isfinite(pos).all():
            raise ValueError("mic_positions must be finite")
        if self.sound_speed <= 0:
            raise ValueError("sound_speed must be positive")
        object.__setattr__(self, "mic_positions", pos)

    @classmethod
    def ula(cls, n_mics: int, spacing_m: float, sound_speed: float = SOUND_SPEED,
            sample_rate: float = 16000.0) -> "ArrayGeometry":
        """Uniform linear array along the x axis."""
        if n_mics < 3:
            raise ValueError("need at least 3 microphones")
        if not np.isfinite(spacing_m) or spacing_m <= 0:
            raise ValueError("spacing_m must be positive and finite")
        pos = np.zeros((n_mics, 3))
        pos[:, 0] = spacing_m * np.arange(n_mics)
        return cls(pos, sound_speed=sound_speed, sample_rate=sample_rate)

    @property
    def n_mics(self) -> int:
        return self.mic_positions.shape[0]

    def pairwise_distances(self) -> np.ndarray:
        diff = self.mic_positions[:, None, :] - self.mic_positions[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))


@dataclass(frozen=True)
class NoiseSubspace:
    """Orthonormal basis of the directional-noise subspace.

    ``basis`` is N x T with orthonormal columns; ``eigenvalues`` holds the
    corresponding covariance eigenvalues in descending order.
    """

    basis: np.ndarray
    eigenvalues: np.ndarray = field(default=None)

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=complex)
        object.__setattr__(self, "basis", basis)
        if self.eigenvalues is None:
            object.__setattr__(self, "eigenvalues", np.zeros(basis.shape[1]))

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


def rdtf_ula(frequency: float, spacing: float, doa: float, n_mics: int,
             sound_speed: float = SOUND_SPEED) -> np.ndarray:
    """Relative direct-path transfer function of a ULA.

    Far-field plane wave from broadside angle ``doa`` (radians): entry n is
    exp(-j 2 pi f tau_n) with tau_n = n * spacing * sin(doa) / c.  The
    first microphone is the reference, so entry 0 is exactly 1.
    """
    vals = [frequency, spacing, doa, sound_speed]
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite input to rdtf_ula")
    if n_mics < 3:
        raise ValueError("need at least 3 microphones")
    if sound_speed <= 0:
        raise ValueError("sound_speed must be positive")
    tau = spacing * np.sin(doa) / sound_speed * np.arange(n_mics)
    return np.exp(-2j * np.pi * frequency * tau)


def diffuse_coherence(frequency: float, geometry: ArrayGeometry,
                      loading: float = COHERENCE_LOADING) -> np.ndarray:
    """Spherically diffuse spatial coherence matrix at one frequency.

    Entry (i, j) is sin(x)/x with x = 2 pi f d_ij / c (1 on the diagonal).
    The result is regularized as (1-eps) G + eps I so that downstream
    solves stay well posed; ``loading`` is eps.
    """
    if not np.isfinite(frequency) or frequency < 0:
        raise ValueError("frequency must be finite and >= 0")
    dist = geometry.pairwise_distances()
    off_diag = dist[~np.eye(geometry.n_mics, dtype=bool)]
    if np.any(off_diag <= 0):
        warnings.warn("duplicate microphone positions; coherence matrix is "
                      "degenerate and only usable through its diagonal loading")
    # np.sinc(x) = sin(pi x)/(pi x), so feed it 2 f d / c
    gamma = np.sinc(2.0 * frequency * dist / geometry.sound_speed)
    gamma = 0.5 * (gamma + gamma.T)
    return (1.0 - loading) * gamma + loading * np.eye(geometry.n_mics)


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    out = vectors.copy()
    for col in range(out.shape[1]):
        idx = int(np.argmax(np.abs(out[:, col])))
        pivot = out[idx, col]
        if np.abs(pivot) > 0:
            out[:, col] *= np.conj(pivot) / np.abs(pivot)
    return out


def select_rank(eigenvalues: np.ndarray, n_mics: int, energy: float = 0.995) -> int:
    """Smallest T whose top eigenvalues hold ``energy`` of the total, capped at N-2.

    Emits a warning when even N-2 components fall short of the target,
    which is the signature of noise without low-rank structure.
    """
    ev = np.clip(np.sort(np.asarray(eigenvalues))[::-1], 0.0, None)
    total = ev.sum()
    cap = n_mics - 2
    if total <= 0:
        return cap
    frac = np.cumsum(ev) / total
    rank = int(np.searchsorted(frac, energy) + 1)
    if rank > cap:
        warnings.warn(
            f"eigenvalue energy rule wants rank {rank} > N-2={cap}; noise has "
            "no usable low-rank structure, capping")
        return cap
    return rank


def noise_subspace(noise_sample_cov: np.ndarray, rank: int | None = None,
                   energy: float = 0.995) -> NoiseSubspace:
    """Dominant eigenvectors of a speech-absent covariance matrix.

    Eigenvalues are sorted descending and each eigenvector's phase is fixed
    (largest-magnitude entry real positive) so the output is reproducible.
    When ``rank`` is omitted the cumulative-energy rule of ``select_rank``
    picks it.
    """
    cov = np.asarray(noise_sample_cov, dtype=complex)
    n = cov.shape[0]
    if cov.shape != (n, n):
        raise ValueError("covariance must be square")
    ev, vec = np.linalg.eigh(0.5 * (cov + cov.conj().T))
    ev = ev[::-1]
    vec = vec[:, ::-1]
    if rank is None:
        rank = select_rank(ev, n, energy)
    if rank > n - 2:
        raise ValueError(f"rank {rank} exceeds N-2 = {n - 2}")
    if rank < 0:
        raise ValueError("rank must be >= 0")
    scale = max(np.abs(ev[0]), np.finfo(float).tiny)
    if rank < n and rank > 0 and (ev[rank - 1] - ev[rank]) <= EIG_TIE_RTOL * scale:
        warnings.warn("eigenvalues at the subspace boundary are tied; the "
                      "noise subspace is not unique")
    basis = _fix_phases(vec[:, :rank])
    return NoiseSubspace(basis=basis, eigenvalues=np.clip(ev[:rank], 0.0, None))


def blocking_matrix(g_d: np.ndarray) -> np.ndarray:
    """Orthonormal N x (N-1) basis of the nullspace of g_d^H.

    Built from the Householder reflection that maps g_d onto the first
    coordinate axis, so the construction is deterministic in g_d.
    """
    g = np.asarray(g_d, dtype=complex).ravel()
    norm = np.linalg.norm(g)
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("steering vector must be nonzero and finite")
    v = g.copy()
    phase = v[0] / np.abs(v[0]) if np.abs(v[0]) > 0 else 1.0
    v[0] += phase * norm
    house = np.eye(g.size, dtype=complex) - 2.0 * np.outer(v, v.conj()) / (v.conj() @ v).real
    return house[:, 1:]


def _steering_from_positions(frequency: float, geometry: ArrayGeometry,
                             doa: float) -> np.ndarray:
    """Plane-wave steering vector for arbitrary positions, mic 0 as reference."""
    direction = np.array([np.sin(doa), np.cos(doa), 0.0])
    delays = (geometry.mic_positions - geometry.mic_positions[0]) @ direction
    delays /= geometry.sound_speed
    return np.exp(-2j * np.pi * frequency * delays)


def steering_vector(frequency: float, geometry: ArrayGeometry, doa: float) -> np.ndarray:
    """RDTF for a geometry; reduces to ``rdtf_ula`` for equispaced collinear mics."""
    if not np.isfinite(frequency):
        raise ValueError("non-finite frequency")
    return _steering_from_positions(frequency, geometry, doa)


def ensure_degenerate_free(g_d: np.ndarray, subspace: NoiseSubspace,
                           rtol: float = 1e-10) -> None:
    """Raise if the steering vector lies (numerically) inside the noise subspace."""
    g = np.asarray(g_d, dtype=complex).ravel()
    v = subspace.basis
    if v.shape[1] == 0:
        return
    residual = g - v @ (v.conj().T @ g)
    if np.linalg.norm(residual) <= rtol * np.linalg.norm(g):
        raise DegenerateGeometryError("steering vector lies in the noise subspace")
