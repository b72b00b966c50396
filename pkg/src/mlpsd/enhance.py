"""Multichannel Wiener filtering for dereverberation and noise reduction.

The enhancer consumes a multichannel STFT, learns the per-bin noise
subspace from a leading speech-absent segment, tracks a recursive sample
covariance per bin, re-estimates the reverberation/speech/noise PSDs
every frame, and applies an MVDR beamformer followed by a single-channel
Wiener gain.

Variants
--------
* ``nb-dir``: non-blocking PSD estimates, direct Wiener gain.
* ``bb-dir``: blocking-based PSD estimates; the speech PSD comes from the
  MVDR-output subtraction step that the blocking route needs.
* ``nb-dd`` / ``bb-dd``: decision-directed gain.  Both use the same
  instantaneous speech estimate, and the two PSD routes are provably
  identical, so these two variants produce the same output.

Frequency bins are independent streams; frames within a bin are
sequential (covariance smoothing and the decision-directed memory are
order dependent).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import beamform, model
from .errors import ConfigError
from .estimators import FLOOR_REL
from .linalg import hermitize, solve_psd
from .stft import StftConfig, frames_fully_inside, istft, stft

VARIANTS = ("nb-dir", "bb-dir", "nb-dd", "bb-dd")

MIN_NOISE_SECONDS = 0.25


@dataclass(frozen=True)
class EnhancerConfig:
    variant: str = "nb-dir"
    geometry: model.ArrayGeometry | None = None  # default: ULA with spacing_m
    spacing_m: float = 0.06
    doa_rad: float = 0.0
    noise_seconds: float = 1.0
    noise_rank: int | None = None  # None: eigenvalue-energy rule per bin
    alpha: float = 0.7             # covariance smoothing
    beta: float = 0.9              # decision-directed memory
    gain_floor_db: float = -15.0
    coherence_loading: float = model.COHERENCE_LOADING
    stft: StftConfig = StftConfig()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("alpha must lie in [0, 1)")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta must lie in [0, 1)")
        if self.noise_seconds < MIN_NOISE_SECONDS:
            raise ConfigError(f"noise segment must be at least {MIN_NOISE_SECONDS} s")

    @property
    def gain_floor(self) -> float:
        return 10.0 ** (self.gain_floor_db / 20.0)


def learn_noise_basis(segment_spec: np.ndarray, rank: int | None = None
                      ) -> list[model.NoiseSubspace]:
    """Per-bin noise subspaces from a speech-absent STFT segment.

    ``segment_spec`` is (frames, bins, channels).  With ``rank=None`` the
    eigenvalue-energy rule picks the rank per bin.
    """
    if segment_spec.ndim != 3 or segment_spec.shape[0] < 1:
        raise ValueError("need a (frames, bins, channels) segment with >= 1 frame")
    out = []
    for k in range(segment_spec.shape[1]):
        frames = segment_spec[:, k, :]
        cov = np.einsum("li,lj->ij", frames, frames.conj()) / frames.shape[0]
        out.append(model.noise_subspace(cov, rank=rank))
    return out


def mvdr_weights(phi_i: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched MVDR weights and residual interference PSD.

    ``phi_i`` is (K, N, N), ``g`` is (K, N).  Returns (weights (K, N),
    phi_re (K,)) with w = Phi^-1 g / (g^H Phi^-1 g) and
    phi_re = 1 / (g^H Phi^-1 g).
    """
    gi_g = np.linalg.solve(phi_i, g[..., None])[..., 0]
    denom = np.einsum("ki,ki->k", g.conj(), gi_g).real
    denom = np.maximum(denom, np.finfo(float).tiny)
    return gi_g / denom[:, None], 1.0 / denom


@dataclass
class FrameLog:
    """Per-frame bin-averaged diagnostics for the optional PSD dump."""

    frame: int
    mean_phi_r: float
    mean_phi_s: float
    mean_psi_trace: float
    mean_gain: float


class Enhancer:
    """Streaming per-frame MCWF; one instance per file (or per stream)."""

    def __init__(self, config: EnhancerConfig, n_mics: int):
        if n_mics < 3:
            raise ValueError("need at least 3 microphones")
        self.config = config
        self.n_mics = n_mics
        geometry = config.geometry or model.ArrayGeometry.ula(
            n_mics, config.spacing_m, sample_rate=config.stft.sample_rate)
        if geometry.n_mics != n_mics:
            raise ConfigError("geometry does not match the channel count")
        self.geometry = geometry
        self.freqs = config.stft.bin_frequencies()
        self.n_bins = self.freqs.size
        self._fitted = False
        self._warned_loading = False
        self.frame_index = 0
        self.logs: list[FrameLog] = []

    # ---------------------------------------------------------------- setup

    def fit_noise(self, noise_spec: np.ndarray) -> None:
        """Learn per-bin subspaces and operators from the noise preamble."""
        subspaces = learn_noise_basis(noise_spec, rank=self.config.noise_rank)
        if self.config.noise_rank is None:
            # one common rank keeps the per-frame math rectangular; take the
            # median of the per-bin choices and re-extract
            ranks = sorted(s.rank for s in subspaces)
            rank = int(ranks[len(ranks) // 2])
            rank = min(rank, self.n_mics - 2)
            subspaces = learn_noise_basis(noise_spec, rank=rank)
        self.rank = subspaces[0].rank
        self._build_operators(subspaces)
        # start the recursive covariance from the preamble average
        cov = np.einsum("mki,mkj->kij", noise_spec, noise_spec.conj())
        self.r_y = cov / noise_spec.shape[0]
        self.r_z = hermitize(np.einsum("kij,kil,klm->kjm", self.b.conj(),
                                       self.r_y, self.b))
        self.s_prev = np.zeros(self.n_bins, dtype=complex)
        self.phi_re_prev = np.ones(self.n_bins)
        self._fitted = True

    def _build_operators(self, subspaces: list[model.NoiseSubspace]) -> None:
        n, t, k_bins = self.n_mics, self.rank, self.n_bins
        cfg = self.config
        self.g = np.empty((k_bins, n), dtype=complex)
        self.gamma = np.empty((k_bins, n, n), dtype=complex)
        self.v = np.empty((k_bins, n, t), dtype=complex)
        self.m_phi = np.empty((k_bins, n, n), dtype=complex)
        self.w_s = np.empty((k_bins, n), dtype=complex)
        self.c_s = np.empty(k_bins)
        self.w_u = np.empty((k_bins, n, t), dtype=complex)
        self.c_w = np.empty((k_bins, t, t), dtype=complex)
        self.b = np.empty((k_bins, n, n - 1), dtype=complex)
        self.gamma_b = np.empty((k_bins, n - 1, n - 1), dtype=complex)
        self.m_phi_b = np.empty((k_bins, n - 1, n - 1), dtype=complex)
        self.w_ub = np.empty((k_bins, n - 1, t), dtype=complex)
        self.c_wb = np.empty((k_bins, t, t), dtype=complex)
        dof = n - 1 - t
        for k in range(k_bins):
            f = self.freqs[k]
            g = model.steering_vector(f, self.geometry, cfg.doa_rad)
            gamma = model.diffuse_coherence(f, self.geometry,
                                            loading=cfg.coherence_loading)
            v = subspaces[k].basis
            model.ensure_degenerate_free(g, subspaces[k])
            a = beamform.build_basis(g, v)
            q = beamform.projection_q(a, gamma)
            b = model.blocking_matrix(g)
            gamma_b = beamform.reduced_coherence(b, gamma)
            q_t = beamform.projection_q_tilde(b, v, gamma)
            w_u = beamform.lcmv_noise(g, v, gamma)
            w_ub = beamform.lcmv_noise_blocked(b, v, gamma)
            w_s = beamform.mvdr_speech(g, v, gamma)

            self.g[k] = g
            self.gamma[k] = gamma
            self.v[k] = v
            self.m_phi[k] = solve_psd(gamma, q) / dof
            self.w_s[k] = w_s
            self.c_s[k] = (w_s.conj() @ gamma @ w_s).real
            self.w_u[k] = w_u
            self.c_w[k] = w_u.conj().T @ gamma @ w_u
            self.b[k] = b
            self.gamma_b[k] = gamma_b
            self.m_phi_b[k] = solve_psd(gamma_b, q_t) / dof
            self.w_ub[k] = w_ub
            self.c_wb[k] = w_ub.conj().T @ gamma_b @ w_ub

    # ------------------------------------------------------------ per frame

    def _floor(self, r: np.ndarray) -> np.ndarray:
        return FLOOR_REL * np.einsum("kii->k", r).real / r.shape[-1]

    def _psd_clip(self, psi: np.ndarray) -> np.ndarray:
        if psi.shape[-1] == 0:
            return psi
        ev, vec = np.linalg.eigh(hermitize(psi))
        ev = np.clip(ev, 0.0, None)
        return np.einsum("kit,kt,kjt->kij", vec, ev, vec.conj())

    def _estimate_psds(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        """Update covariances and return (phi_r, psi, phi_s_nb) for the
        configured route; phi_s_nb is None on the blocking route."""
        alpha = self.config.alpha
        self.r_y = alpha * self.r_y + (1 - alpha) * np.einsum("ki,kj->kij", y, y.conj())
        blocking = self.config.variant.startswith("bb")
        if blocking:
            z = np.einsum("kij,ki->kj", self.b.conj(), y)
            self.r_z = alpha * self.r_z + (1 - alpha) * np.einsum("ki,kj->kij", z, z.conj())
            phi_r = np.einsum("kij,kji->k", self.m_phi_b, self.r_z).real
            psi = (np.einsum("kit,kij,kjs->kts", self.w_ub.conj(), self.r_z, self.w_ub)
                   - phi_r[:, None, None] * self.c_wb)
            phi_s = None
        else:
            phi_r = np.einsum("kij,kji->k", self.m_phi, self.r_y).real
            psi = (np.einsum("kit,kij,kjs->kts", self.w_u.conj(), self.r_y, self.w_u)
                   - phi_r[:, None, None] * self.c_w)
            phi_s = (np.einsum("ki,kij,kj->k", self.w_s.conj(), self.r_y, self.w_s).real
                     - phi_r * self.c_s)
        floor = self._floor(self.r_y)
        phi_r = np.maximum(phi_r, floor)
        psi = self._psd_clip(psi)
        if phi_s is not None:
            phi_s = np.maximum(phi_s, floor)
        return phi_r, psi, phi_s

    def _interference(self, phi_r: np.ndarray, psi: np.ndarray) -> np.ndarray:
        phi_i = phi_r[:, None, None] * self.gamma + np.einsum(
            "kit,kts,kjs->kij", self.v, psi, self.v.conj())
        # absolute floor so exactly silent bins stay solvable
        return phi_i + 1e-300 * np.eye(self.n_mics)

    def _solve_mvdr(self, phi_i: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        try:
            w, phi_re = mvdr_weights(phi_i, self.g)
        except np.linalg.LinAlgError:
            w = np.full(self.g.shape, np.nan, dtype=complex)
            phi_re = np.full(self.n_bins, np.nan)
        bad = ~np.isfinite(phi_re) | (phi_re <= 0) | ~np.isfinite(w).all(axis=1)
        if bad.any():
            if not self._warned_loading:
                warnings.warn("near-singular interference matrix in some bins; "
                              "applying diagonal loading")
                self._warned_loading = True
            trace = np.einsum("kii->k", phi_i).real / self.n_mics
            load = 1e-10 * trace + 1e-30
            patched = phi_i + (bad * load)[:, None, None] * np.eye(self.n_mics)
            w, phi_re = mvdr_weights(patched, self.g)
        return w, phi_re

    def process_frame(self, y: np.ndarray) -> np.ndarray:
        """Enhance one frame: y is (bins, channels), returns (bins,)."""
        if not self._fitted:
            raise RuntimeError("fit_noise must run before processing frames")
        cfg = self.config
        phi_r, psi, phi_s_nb = self._estimate_psds(y)
        phi_i = self._interference(phi_r, psi)
        w, phi_re = self._solve_mvdr(phi_i)
        mvdr_out = np.einsum("ki,ki->k", w.conj(), y)

        if cfg.variant == "nb-dir":
            gamma_snr = phi_s_nb / phi_re
        elif cfg.variant == "bb-dir":
            # speech PSD from the MVDR output with interference subtracted
            wrw = np.einsum("ki,kij,kj->k", w.conj(), self.r_y, w).real
            wgw = np.einsum("ki,kij,kj->k", w.conj(), self.gamma, w).real
            wvpsivw = np.einsum("ki,kit,kts,kjs,kj->k", w.conj(), self.v, psi,
                                self.v.conj(), w).real
            phi_s_bb = np.maximum(wrw - phi_r * wgw - wvpsivw,
                                  self._floor(self.r_y))
            gamma_snr = phi_s_bb / phi_re
        else:
            # decision directed, shared by both PSD routes
            inst = np.maximum(np.abs(mvdr_out) ** 2 - phi_re, 0.0) / phi_re
            if self.frame_index == 0:
                gamma_snr = inst
            else:
                gamma_snr = (cfg.beta * np.abs(self.s_prev) ** 2 / self.phi_re_prev
                             + (1 - cfg.beta) * inst)

        gain = np.clip(gamma_snr / (gamma_snr + 1.0), cfg.gain_floor, 1.0)
        s_hat = gain * mvdr_out

        self.s_prev = s_hat
        self.phi_re_prev = np.maximum(phi_re, np.finfo(float).tiny)
        mean_phi_s = float(np.mean(phi_s_nb)) if phi_s_nb is not None else float("nan")
        self.logs.append(FrameLog(
            frame=self.frame_index,
            mean_phi_r=float(np.mean(phi_r)),
            mean_phi_s=mean_phi_s,
            mean_psi_trace=float(np.einsum("ktt->k", psi).real.mean()) if self.rank
            else 0.0,
            mean_gain=float(np.mean(gain)),
        ))
        self.frame_index += 1
        return s_hat


@dataclass
class EnhanceResult:
    samples: np.ndarray
    rank: int
    n_bins: int
    n_frames: int
    logs: list[FrameLog] = field(default_factory=list)


def enhance_signal(samples: np.ndarray, config: EnhancerConfig) -> EnhanceResult:
    """Enhance a multichannel signal (n_samples, channels) end to end.

    The first ``config.noise_seconds`` are treated as speech absent and
    used to learn the noise subspace; the whole file is then filtered.
    Channel 0 is the reference microphone.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] < 3:
        raise ValueError("need an (n_samples, channels>=3) array")
    cfg = config.stft
    noise_samples = int(round(config.noise_seconds * cfg.sample_rate))
    if samples.shape[0] <= noise_samples:
        raise ValueError("signal shorter than the noise preamble")
    spec = stft(samples, cfg)
    n_noise_frames = frames_fully_inside(cfg, noise_samples)
    if n_noise_frames < 2:
        raise ValueError("noise preamble too short for subspace learning")

    enh = Enhancer(config, samples.shape[1])
    enh.fit_noise(spec[:n_noise_frames])
    out_spec = np.stack([enh.process_frame(spec[m]) for m in range(spec.shape[0])])
    out = istft(out_spec, cfg, length=samples.shape[0])
    return EnhanceResult(samples=out, rank=enh.rank, n_bins=enh.n_bins,
                         n_frames=spec.shape[0], logs=enh.logs)
