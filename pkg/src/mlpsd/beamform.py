"""Projection matrices and constrained beamformers.

These are the building blocks shared by every PSD estimator: the
projection Q off the speech-plus-noise subspace, its reduced counterpart
after speech blocking, the speech MVDR w_s, and the noise LCMV W_u.

All operators are defined relative to the diffuse coherence matrix
``gamma`` (the metric in which the projections are oblique), and they all
derive from one primitive: the minimum-coherence-norm bank
W = G^-1 A (A^H G^-1 A)^-1, whose columns satisfy A^H W = I.  The bank is
evaluated through a whitened QR factorization rather than the Gram
inverse, which keeps the constraint residuals near machine precision
even when A^H G^-1 A is poorly conditioned.  No explicit inverse of
``gamma`` is ever formed.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import DegenerateGeometryError, NumericsError
from .linalg import enforce_rcond, hermitize
from .model import NoiseSubspace


def _basis(v) -> np.ndarray:
    if isinstance(v, NoiseSubspace):
        return v.basis
    arr = np.asarray(v, dtype=complex)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def build_basis(g_d: np.ndarray, v) -> np.ndarray:
    """Stack [g_d | V] into the speech-plus-noise basis A (N x (T+1))."""
    g = np.asarray(g_d, dtype=complex).ravel()
    vmat = _basis(v)
    if vmat.shape[1]:
        residual = g - vmat @ (vmat.conj().T @ g)
        if np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(g):
            raise DegenerateGeometryError(
                "speaker direction lies inside the noise subspace")
    return np.concatenate([g[:, None], vmat], axis=1)


def constrained_bank(a: np.ndarray, gamma: np.ndarray, context: str = "constraint basis"
                     ) -> np.ndarray:
    """W = G^-1 A (A^H G^-1 A)^-1 with A^H W = I, via whitened QR.

    Column j is the minimum G-weighted-norm vector with unit response on
    column j of A and nulls on the others.
    """
    a = np.asarray(a, dtype=complex)
    if a.shape[1] == 0:
        return np.zeros_like(a)
    try:
        chol = np.linalg.cholesky(gamma)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"{context}: coherence matrix not positive definite") from exc
    a_w = sla.solve_triangular(chol, a, lower=True, check_finite=False)
    q_w, r_w = np.linalg.qr(a_w)
    sv = np.abs(np.linalg.svd(r_w, compute_uv=False))
    # rcond of the Gram A^H G^-1 A is the squared singular-value ratio
    rcond_gram = (sv.min() / sv.max()) ** 2 if sv.max() > 0 else 0.0
    enforce_rcond(rcond_gram, context)
    # W = L^-H (Q R^-H)
    z = sla.solve_triangular(r_w, q_w.conj().T, lower=False,
                             check_finite=False).conj().T
    return sla.solve_triangular(chol.conj().T, z, lower=False, check_finite=False)


def _bank_or_degenerate(a: np.ndarray, gamma: np.ndarray, context: str) -> np.ndarray:
    try:
        return constrained_bank(a, gamma, context)
    except NumericsError as exc:
        raise DegenerateGeometryError(str(exc)) from exc


def projection_q(a: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Oblique projection off the speech-plus-noise subspace.

    Q = I - A (A^H G^-1 A)^-1 A^H G^-1.  Satisfies Q Q = Q, Q A = 0 and
    trace(Q) = N - 1 - T.
    """
    bank = constrained_bank(a, gamma, "speech-plus-noise basis")
    return np.eye(a.shape[0]) - a @ bank.conj().T


def proj_offnoise(v, gamma: np.ndarray) -> np.ndarray:
    """Oblique projection with nulls on the noise basis:
    I - G^-1 V (V^H G^-1 V)^-1 V^H."""
    vmat = _basis(v)
    n = gamma.shape[0]
    if vmat.shape[1] == 0:
        return np.eye(n, dtype=complex)
    bank = constrained_bank(vmat, gamma, "noise basis")
    return np.eye(n) - bank @ vmat.conj().T


def proj_offspeech(g_d: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Oblique projection with a null on the speech direction:
    I - G^-1 g g^H / (g^H G^-1 g)."""
    g = np.asarray(g_d, dtype=complex).ravel()
    bank = _bank_or_degenerate(g[:, None], gamma, "speech direction")
    return np.eye(g.size) - bank @ g[None, :].conj()


def mvdr_speech(g_d: np.ndarray, v, gamma: np.ndarray) -> np.ndarray:
    """Speech MVDR beamformer: unit gain on g_d, nulls on the noise basis.

    Returns w_s with w_s^H g_d = 1 and w_s^H V = 0.
    """
    a = build_basis(g_d, v)
    bank = _bank_or_degenerate(a, gamma, "speech-plus-noise basis")
    return bank[:, 0]


def lcmv_noise(g_d: np.ndarray, v, gamma: np.ndarray) -> np.ndarray:
    """Noise LCMV beamformer bank: W_u^H g_d = 0 and W_u^H V = I_T.

    Column t extracts noise stream t while cancelling the speech direction.
    """
    a = build_basis(g_d, v)
    bank = _bank_or_degenerate(a, gamma, "speech-plus-noise basis")
    return bank[:, 1:]


def lcmv_noise_column(g_d: np.ndarray, v, gamma: np.ndarray, i: int) -> np.ndarray:
    """Single LCMV column in its rank-one projector form.

    w_i^H = v_i^H P_offrest P_offspeech G^-1 / (v_i^H P_offrest P_offspeech G^-1 v_i),
    where P_offrest removes the remaining noise directions.  Equals column i
    of ``lcmv_noise``; kept as an independent cross-check route.
    """
    vmat = _basis(v)
    t = vmat.shape[1]
    if not 0 <= i < t:
        raise ValueError("column index out of range")
    g = np.asarray(g_d, dtype=complex).ravel()
    n = g.size
    rest = np.delete(vmat, i, axis=1)
    pg = proj_offspeech(g, gamma)
    # P_offspeech G^-1 is Hermitian, so build it from one solve
    chol = sla.cho_factor(gamma, check_finite=False)
    pg_gi = sla.cho_solve(chol, pg.conj().T, check_finite=False).conj().T
    if rest.shape[1]:
        gram = rest.conj().T @ pg_gi @ rest
        p_rest = np.eye(n) - pg_gi @ rest @ np.linalg.solve(gram, rest.conj().T)
    else:
        p_rest = np.eye(n, dtype=complex)
    row = vmat[:, i].conj() @ p_rest @ pg_gi
    denom = row @ vmat[:, i]
    if np.abs(denom) == 0:
        raise DegenerateGeometryError("vanishing LCMV column denominator")
    return (row / denom).conj()


def reduced_noise_basis(b: np.ndarray, v) -> np.ndarray:
    """Noise basis seen at the blocking-matrix output: B^H V."""
    return b.conj().T @ _basis(v)


def reduced_coherence(b: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Coherence matrix at the blocking-matrix output: B^H Gamma B."""
    return hermitize(b.conj().T @ gamma @ b)


def lcmv_noise_blocked(b: np.ndarray, v, gamma: np.ndarray) -> np.ndarray:
    """Noise LCMV applied after the speech blocking matrix.

    Satisfies W~^H V~ = I_T and factorizes the full-array LCMV as
    W_u = B W~.
    """
    vt = reduced_noise_basis(b, v)
    gt = reduced_coherence(b, gamma)
    if vt.shape[1] == 0:
        return np.zeros((b.shape[1], 0), dtype=complex)
    return _bank_or_degenerate(vt, gt, "reduced noise basis")


def projection_q_tilde(b: np.ndarray, v, gamma: np.ndarray) -> np.ndarray:
    """Reduced projection off the noise subspace after blocking.

    Q~ = I - V~ (V~^H G~^-1 V~)^-1 V~^H G~^-1 with G~ = B^H Gamma B;
    equivalently Q~ = I - V~ W~^H.  trace(Q~) = N - 1 - T.
    """
    vt = reduced_noise_basis(b, v)
    gt = reduced_coherence(b, gamma)
    m = gt.shape[0]
    if vt.shape[1] == 0:
        return np.eye(m, dtype=complex)
    bank = constrained_bank(vt, gt, "reduced noise basis")
    return np.eye(m) - vt @ bank.conj().T
