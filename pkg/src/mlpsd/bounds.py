"""Estimator variances, Cramer-Rao bounds and a numeric Fisher oracle.

The closed-form variance of each PSD estimator coincides with the
corresponding CRB (the estimators are efficient), so ``crb_closed_form``
reuses the variance formulas verbatim.  ``fim_numeric`` assembles the
full Fisher information matrix from analytic covariance derivatives and
inverts it; it is the independent check that the closed forms are right.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from . import beamform
from .errors import NumericsError
from .linalg import hermitize, solve_psd
from .model import NoiseSubspace


def _basis(v) -> np.ndarray:
    if isinstance(v, NoiseSubspace):
        return v.basis
    arr = np.asarray(v, dtype=complex)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def _check_counts(length: int, n_mics: int, rank: int) -> None:
    if length < 1:
        raise ValueError("need at least one snapshot")
    if n_mics - 1 - rank < 1:
        raise ValueError("need N - 1 - T >= 1")


def var_phi_r(phi_r: float, length: int, n_mics: int, rank: int) -> float:
    """Variance of the reverberation MLE: phi_r^2 / (L (N-1-T))."""
    _check_counts(length, n_mics, rank)
    return phi_r**2 / (length * (n_mics - 1 - rank))


def var_psi_i(psi_i: float, xi: float, length: int, n_mics: int, rank: int) -> float:
    """Variance of a diagonal noise-PSD MLE given its noise-to-reverberation
    ratio ``xi`` at the matching LCMV output."""
    _check_counts(length, n_mics, rank)
    if xi <= 0:
        raise ValueError("xi must be positive")
    return psi_i**2 / length * (((1.0 + xi) / xi) ** 2 + 1.0 / ((n_mics - 1 - rank) * xi**2))


def var_phi_s(phi_s: float, epsilon: float, length: int, n_mics: int, rank: int) -> float:
    """Variance of the speech-PSD MLE given the speech-to-reverberation
    ratio ``epsilon`` at the MVDR output.  Tends to phi_s^2 / L as
    epsilon grows."""
    _check_counts(length, n_mics, rank)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return phi_s**2 / length * (
        ((1.0 + epsilon) / epsilon) ** 2 + 1.0 / ((n_mics - 1 - rank) * epsilon**2))


_RATIO_XTOL = 1e-9


def xi_i(psi_i: float, phi_r: float, g_d: np.ndarray, v, gamma: np.ndarray,
         i: int) -> float:
    """Noise-to-reverberation ratio at the output of LCMV column i.

    Computed both as psi_i / (w_i^H phi_r Gamma w_i) and through the
    projector form (psi_i/phi_r) v_i^H P_offrest P_offspeech G^-1 v_i;
    the two must agree, which guards the beamformer algebra.
    """
    vmat = _basis(v)
    w_full = beamform.lcmv_noise(g_d, vmat, gamma)
    w_i = w_full[:, i]
    direct = psi_i / (phi_r * float((w_i.conj() @ gamma @ w_i).real))

    w_col = beamform.lcmv_noise_column(g_d, vmat, gamma, i)
    quad = float((w_col.conj() @ gamma @ w_col).real)
    projector = psi_i / (phi_r * quad)
    if abs(direct - projector) > _RATIO_XTOL * abs(direct):
        raise NumericsError(
            f"xi cross-check failed: {direct:.12e} vs {projector:.12e}")
    return direct


def epsilon_ratio(phi_s: float, phi_r: float, g_d: np.ndarray, v,
                  gamma: np.ndarray) -> float:
    """Speech-to-reverberation ratio at the MVDR output.

    Cross-checked between phi_s / (w_s^H phi_r Gamma w_s) and the projector
    form (phi_s/phi_r) g^H P_offnoise G^-1 g.
    """
    g = np.asarray(g_d, dtype=complex).ravel()
    vmat = _basis(v)
    w_s = beamform.mvdr_speech(g, vmat, gamma)
    direct = phi_s / (phi_r * float((w_s.conj() @ gamma @ w_s).real))

    gi_g = solve_psd(gamma, g)
    if vmat.shape[1]:
        gi_v = solve_psd(gamma, vmat)
        gram = vmat.conj().T @ gi_v
        pv_gi_g = gi_g - gi_v @ np.linalg.solve(gram, vmat.conj().T @ gi_g)
    else:
        pv_gi_g = gi_g
    projector = phi_s / phi_r * float((g.conj() @ pv_gi_g).real)
    if abs(direct - projector) > _RATIO_XTOL * abs(direct):
        raise NumericsError(
            f"epsilon cross-check failed: {direct:.12e} vs {projector:.12e}")
    return direct


@dataclass(frozen=True)
class VarianceReport:
    var_phi_r: float
    var_phi_s: float
    var_psi_diag: np.ndarray
    xi: np.ndarray
    epsilon: float


@dataclass(frozen=True)
class CrbReport:
    crb_phi_r: float
    crb_phi_s: float
    crb_psi_diag: np.ndarray
    fim: np.ndarray | None = None


def variance_report(g_d: np.ndarray, v, gamma: np.ndarray, phi_r: float,
                    phi_s: float, psi_v: np.ndarray, length: int) -> VarianceReport:
    """Closed-form variances of all PSD estimators for one scene."""
    vmat = _basis(v)
    n = np.asarray(g_d).size
    t = vmat.shape[1]
    xis = np.array([xi_i(psi_v[i, i].real, phi_r, g_d, vmat, gamma, i)
                    for i in range(t)])
    eps = epsilon_ratio(phi_s, phi_r, g_d, vmat, gamma)
    return VarianceReport(
        var_phi_r=var_phi_r(phi_r, length, n, t),
        var_phi_s=var_phi_s(phi_s, eps, length, n, t),
        var_psi_diag=np.array([var_psi_i(psi_v[i, i].real, xis[i], length, n, t)
                               for i in range(t)]),
        xi=xis,
        epsilon=eps,
    )


def crb_closed_form(g_d: np.ndarray, v, gamma: np.ndarray, phi_r: float,
                    phi_s: float, psi_v: np.ndarray, length: int) -> CrbReport:
    """Closed-form CRBs; identical to the estimator variances (efficiency)."""
    rep = variance_report(g_d, v, gamma, phi_r, phi_s, psi_v, length)
    return CrbReport(crb_phi_r=rep.var_phi_r, crb_phi_s=rep.var_phi_s,
                     crb_psi_diag=rep.var_psi_diag)


def joint_model_covariance(g_d: np.ndarray, v, gamma: np.ndarray, phi_r: float,
                           phi_sv: np.ndarray) -> np.ndarray:
    """Model covariance with an explicit joint speech/noise matrix:
    [g | V] Phi_sv [g | V]^H + phi_r Gamma (cross terms allowed)."""
    g = np.asarray(g_d, dtype=complex).ravel()
    vmat = _basis(v)
    a = np.concatenate([g[:, None], vmat], axis=1)
    return hermitize(a @ phi_sv @ a.conj().T + phi_r * np.asarray(gamma, dtype=complex))


def model_covariance(g_d: np.ndarray, v, gamma: np.ndarray, phi_r: float,
                     phi_s: float, psi_v: np.ndarray) -> np.ndarray:
    """Population covariance phi_s g g^H + phi_r Gamma + V Psi V^H."""
    vmat = _basis(v)
    t = vmat.shape[1]
    phi_sv = np.zeros((t + 1, t + 1), dtype=complex)
    phi_sv[0, 0] = phi_s
    if t:
        phi_sv[1:, 1:] = psi_v
    return joint_model_covariance(g_d, vmat, gamma, phi_r, phi_sv)


def _covariance_derivatives(g_d: np.ndarray, vmat: np.ndarray,
                            gamma: np.ndarray) -> list[np.ndarray]:
    """Analytic derivatives of the model covariance.

    Real parameter order: phi_r, then the diagonal of the joint
    speech/noise matrix (phi_s first, then each psi_ii), then for each
    upper-triangle entry of that matrix its real and imaginary part.
    """
    a = np.concatenate([np.asarray(g_d, dtype=complex).ravel()[:, None], vmat], axis=1)
    derivs = [np.asarray(gamma, dtype=complex)]
    dim = a.shape[1]
    for i in range(dim):
        derivs.append(np.outer(a[:, i], a[:, i].conj()))
    for i in range(dim):
        for j in range(i + 1, dim):
            cross = np.outer(a[:, i], a[:, j].conj())
            derivs.append(cross + cross.conj().T)
            derivs.append(1j * cross - 1j * cross.conj().T)
    return derivs


def fim_numeric(g_d: np.ndarray, v, gamma: np.ndarray, phi_r: float,
                phi_s: float, psi_v: np.ndarray, length: int) -> CrbReport:
    """CRBs from the inverted Fisher information matrix.

    The model covariance is linear in the unknown parameters, so the
    information of each pair is L tr(C^-1 dC_i C^-1 dC_j) with analytic
    derivative matrices.  Hermitian unknowns are counted as real
    parameters (diagonals, plus re/im of each off-diagonal); the bounds
    on phi_r, phi_s and the psi diagonal do not depend on that choice.
    """
    vmat = _basis(v)
    t = vmat.shape[1]
    cov = model_covariance(g_d, vmat, gamma, phi_r, phi_s, psi_v)
    derivs = _covariance_derivatives(g_d, vmat, gamma)
    solved = [solve_psd(cov, d) for d in derivs]
    size = len(derivs)
    fim = np.empty((size, size))
    for p in range(size):
        for q in range(p, size):
            val = length * float(np.einsum("ij,ji->", solved[p], solved[q]).real)
            fim[p, q] = val
            fim[q, p] = val
    rank = np.linalg.matrix_rank(fim)
    if rank < size:
        raise NumericsError(f"singular Fisher matrix: rank {rank} of {size}")
    crb = np.linalg.inv(fim)
    return CrbReport(
        crb_phi_r=float(crb[0, 0]),
        crb_phi_s=float(crb[1, 1]),
        crb_psi_diag=np.array([crb[2 + i, 2 + i] for i in range(t)]),
        fim=fim,
    )


def derivative_fd_error(g_d: np.ndarray, v, gamma: np.ndarray, phi_r: float,
                        phi_s: float, psi_v: np.ndarray) -> float:
    """Worst relative gap between analytic and central-difference derivatives.

    Guards the parameter-to-covariance mapping used by ``fim_numeric``.
    """
    vmat = _basis(v)
    t = vmat.shape[1]
    derivs = _covariance_derivatives(g_d, vmat, gamma)

    def rebuild(theta: np.ndarray) -> np.ndarray:
        sv = np.zeros((t + 1, t + 1), dtype=complex)
        sv[0, 0] = theta[1]
        for i in range(t):
            sv[1 + i, 1 + i] = theta[2 + i]
        pos = 2 + t
        for i in range(t + 1):
            for j in range(i + 1, t + 1):
                sv[i, j] = theta[pos] + 1j * theta[pos + 1]
                sv[j, i] = np.conj(sv[i, j])
                pos += 2
        a = np.concatenate([np.asarray(g_d, dtype=complex).ravel()[:, None], vmat], axis=1)
        return theta[0] * np.asarray(gamma, dtype=complex) + a @ sv @ a.conj().T

    theta0 = np.zeros(len(derivs))
    theta0[0] = phi_r
    theta0[1] = phi_s
    for i in range(t):
        theta0[2 + i] = psi_v[i, i].real
    pos = 2 + t
    for i in range(t + 1):
        for j in range(i + 1, t + 1):
            if i >= 1:
                theta0[pos] = psi_v[i - 1, j - 1].real
                theta0[pos + 1] = psi_v[i - 1, j - 1].imag
            pos += 2

    worst = 0.0
    scale = max(abs(phi_r), abs(phi_s), 1.0)
    step = 1e-6 * scale
    for idx, analytic in enumerate(derivs):
        up = theta0.copy()
        up[idx] += step
        lo = theta0.copy()
        lo[idx] -= step
        fd = (rebuild(up) - rebuild(lo)) / (2.0 * step)
        denom = max(np.abs(analytic).max(), 1e-30)
        worst = max(worst, float(np.abs(fd - analytic).max() / denom))
    return worst


def log_likelihood(r_y, phi_y: np.ndarray, length: float) -> float:
    """Gaussian log-likelihood of a sample covariance under a model covariance.

    L * (-N log pi - log det(Phi) - tr(Phi^-1 R)).
    """
    r = r_y.matrix if hasattr(r_y, "matrix") else hermitize(np.asarray(r_y, dtype=complex))
    phi = hermitize(np.asarray(phi_y, dtype=complex))
    n = phi.shape[0]
    ev = np.linalg.eigvalsh(phi)
    if ev.min() <= 0:
        raise ValueError("model covariance must be positive definite")
    logdet = float(np.log(ev).sum())
    tr = float(np.trace(solve_psd(phi, r)).real)
    return float(length) * (-n * np.log(np.pi) - logdet - tr)


def reverberation_likelihood_peak(r_y, g_d: np.ndarray, v, gamma: np.ndarray,
                                  phi_s: float, psi_v: np.ndarray,
                                  bracket: tuple[float, float],
                                  length: float = 1.0,
                                  phi_sv: np.ndarray | None = None) -> float:
    """Golden-section maximizer of the likelihood over the reverberation PSD.

    The speech/noise parameters stay fixed; used as an independent oracle
    for the closed-form reverberation estimator.  On population
    covariances fixing (phi_s, psi_v) suffices; on sample covariances
    pass the full joint matrix ``phi_sv`` (with its speech/noise cross
    terms, see ``estimators.joint_signal_covariance``) since the joint
    maximizer is only stationary together with those terms.
    """
    lo, hi = bracket
    if not (0 < lo < hi):
        raise ValueError("bracket must satisfy 0 < lo < hi")
    vmat = _basis(v)

    def neg_ll(phi_r: float) -> float:
        if phi_sv is not None:
            cov = joint_model_covariance(g_d, vmat, gamma, phi_r, phi_sv)
        else:
            cov = model_covariance(g_d, vmat, gamma, phi_r, phi_s, psi_v)
        return -log_likelihood(r_y, cov, length)

    mid = np.sqrt(lo * hi)
    return float(scipy.optimize.golden(neg_ll, brack=(lo, mid, hi), tol=1e-12))
