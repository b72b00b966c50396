"""Closed-form ML estimators of the reverberation, speech and noise PSDs.

Two routes are provided per time-frequency cell:

* non-blocking: joint estimation from the raw sample covariance, and
* blocking: the speech direction is removed by a blocking matrix first,
  then reverberation and noise are estimated from the reduced covariance.

Both routes provably return identical reverberation and noise estimates;
the test suite checks that numerically on every random scene.

Raw estimates can be negative (or indefinite for the noise matrix) on
sample covariances.  Estimates are therefore published twice: the raw
value for statistics, and a floored/PSD-projected value for filtering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import beamform
from .linalg import hermitize, solve_psd

# floors are relative to the per-channel input power
FLOOR_REL = 1e-12


@dataclass(frozen=True)
class SampleCovariance:
    """Hermitian sample covariance plus the averaging length it represents."""

    matrix: np.ndarray
    effective_count: float

    def __post_init__(self):
        mat = hermitize(np.asarray(self.matrix, dtype=complex))
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class PsdEstimates:
    """Per-cell PSD estimates; ``phi_s`` is None for the blocking route
    until the speech PSD is filled in separately."""

    phi_r: float
    phi_s: float | None
    psi_v: np.ndarray
    raw_phi_r: float
    raw_phi_s: float | None
    raw_psi_v: np.ndarray


def sample_cov(snapshots) -> SampleCovariance:
    """Average of y y^H over the given snapshots (rows or a list of vectors)."""
    arr = np.asarray(snapshots, dtype=complex)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[0] < 1:
        raise ValueError("need at least one snapshot")
    count = arr.shape[0]
    mat = np.einsum("li,lj->ij", arr, arr.conj()) / count
    return SampleCovariance(matrix=mat, effective_count=float(count))


def recursive_cov(previous: SampleCovariance, y: np.ndarray, alpha: float) -> SampleCovariance:
    """One step of exponential covariance smoothing: R <- a R + (1-a) y y^H.

    The reported equivalent averaging length is (1+a)/(1-a), the standard
    variance-matched bridge between exponential and moving-window averaging.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    y = np.asarray(y, dtype=complex).ravel()
    if y.size != previous.n:
        raise ValueError("snapshot length does not match covariance size")
    mat = alpha * previous.matrix + (1.0 - alpha) * np.outer(y, y.conj())
    return SampleCovariance(matrix=mat, effective_count=(1.0 + alpha) / (1.0 - alpha))


def _matrix(r) -> np.ndarray:
    if isinstance(r, SampleCovariance):
        return r.matrix
    return hermitize(np.asarray(r, dtype=complex))


def psd_floor(r_y: np.ndarray) -> float:
    """Smallest admissible power, relative to the mean input channel power."""
    n = r_y.shape[0]
    return FLOOR_REL * float(np.trace(r_y).real) / n


def clip_psd_matrix(psi: np.ndarray) -> np.ndarray:
    """Nearest Hermitian PSD matrix (eigenvalue clipping at zero)."""
    if psi.shape[0] == 0:
        return psi
    ev, vec = np.linalg.eigh(hermitize(psi))
    return hermitize((vec * np.clip(ev, 0.0, None)) @ vec.conj().T)


def mle_nonblocking(r_y, g_d: np.ndarray, v, gamma: np.ndarray) -> PsdEstimates:
    """Joint closed-form MLE of all three PSDs from the raw covariance.

    phi_r = trace(Q R G^-1) / (N-1-T), then the speech and noise PSDs are
    the reverberation-compensated output powers of the MVDR and LCMV
    beamformers.
    """
    r = _matrix(r_y)
    g = np.asarray(g_d, dtype=complex).ravel()
    a = beamform.build_basis(g, v)
    n = g.size
    t = a.shape[1] - 1
    q = beamform.projection_q(a, gamma)
    # trace(Q R G^-1) computed as trace(G^-1 Q R) through one solve
    raw_phi_r = float(np.trace(solve_psd(gamma, q @ r)).real) / (n - 1 - t)

    w_s = beamform.mvdr_speech(g, v, gamma)
    raw_phi_s = float((w_s.conj() @ (r - raw_phi_r * gamma) @ w_s).real)

    w_u = beamform.lcmv_noise(g, v, gamma)
    raw_psi = hermitize(w_u.conj().T @ (r - raw_phi_r * gamma) @ w_u)

    floor = psd_floor(r)
    return PsdEstimates(
        phi_r=max(raw_phi_r, floor),
        phi_s=max(raw_phi_s, floor),
        psi_v=clip_psd_matrix(raw_psi),
        raw_phi_r=raw_phi_r,
        raw_phi_s=raw_phi_s,
        raw_psi_v=raw_psi,
    )


def joint_signal_covariance(r_y, g_d: np.ndarray, v, gamma: np.ndarray,
                            phi_r: float) -> np.ndarray:
    """Joint ML estimate of the (T+1) x (T+1) speech/noise covariance.

    Entry (0, 0) is the speech PSD and the lower-right T x T block is the
    noise PSD matrix, identical to the published estimators.  The
    off-diagonal block (speech/noise cross terms) is zero in the model
    but generally nonzero on sample covariances; keeping it makes the
    estimate the exact joint likelihood maximizer together with
    ``phi_r``.
    """
    r = _matrix(r_y)
    a = beamform.build_basis(g_d, v)
    bank = beamform.constrained_bank(a, gamma)
    return hermitize(bank.conj().T @ (r - phi_r * gamma) @ bank)


def mle_blocking(r_y, b: np.ndarray, v, gamma: np.ndarray) -> PsdEstimates:
    """Closed-form MLE of reverberation and noise PSDs after speech blocking.

    Works on R_z = B^H R_y B.  The speech PSD is not identifiable at this
    stage (the blocking matrix removed it); see ``speech_psd_blocking``.
    """
    r = _matrix(r_y)
    n = r.shape[0]
    r_z = hermitize(b.conj().T @ r @ b)
    vt = beamform.reduced_noise_basis(b, v)
    gt = beamform.reduced_coherence(b, gamma)
    t = vt.shape[1]

    q_t = beamform.projection_q_tilde(b, v, gamma)
    raw_phi_r = float(np.trace(solve_psd(gt, q_t @ r_z)).real) / (n - 1 - t)

    w_t = beamform.lcmv_noise_blocked(b, v, gamma)
    raw_psi = hermitize(w_t.conj().T @ (r_z - raw_phi_r * gt) @ w_t)

    floor = psd_floor(r)
    return PsdEstimates(
        phi_r=max(raw_phi_r, floor),
        phi_s=None,
        psi_v=clip_psd_matrix(raw_psi),
        raw_phi_r=raw_phi_r,
        raw_phi_s=None,
        raw_psi_v=raw_psi,
    )


def speech_psd_blocking(r_y, mvdr_weights: np.ndarray, phi_r: float,
                        psi_v: np.ndarray, v, gamma: np.ndarray) -> tuple[float, float]:
    """Speech PSD for the blocking route, given interference-aware MVDR weights.

    phi_s = w^H (R_y - phi_r Gamma - V Psi V^H) w.  Returns the floored
    value and the raw value.
    """
    r = _matrix(r_y)
    w = np.asarray(mvdr_weights, dtype=complex).ravel()
    vmat = v.basis if hasattr(v, "basis") else np.asarray(v, dtype=complex)
    if vmat.ndim == 1:
        vmat = vmat[:, None]
    if w.size != r.shape[0]:
        raise ValueError("weight length does not match covariance size")
    interference = phi_r * gamma + vmat @ psi_v @ vmat.conj().T
    raw = float((w.conj() @ (r - interference) @ w).real)
    return max(raw, psd_floor(r)), raw
