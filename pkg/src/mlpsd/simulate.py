"""Monte-Carlo harness for the single-tone estimator experiments.

Each trial draws a random scene (noise steering matrix and source
covariance), learns the noise subspace from speech-absent training
snapshots, synthesizes observation snapshots, runs both estimator
routes, and accumulates normalized squared errors next to the matching
normalized bounds.

Reproducibility: every trial owns a counter-based RNG substream keyed by
(seed, grid point, trial), so results do not depend on execution order
and parallel runs are bit-identical to serial ones.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import bounds, estimators, model
from .linalg import crandn

SWEEPS = ("snapshots", "srr", "srnr", "snr")


@dataclass(frozen=True)
class ScenarioConfig:
    """Scene parameters; defaults are the nominal single-tone setup."""

    n_mics: int = 8
    noise_rank: int = 2
    snapshots: int = 100
    spacing_m: float = 0.06
    frequency_hz: float = 2000.0
    doa_rad: float = 0.0
    phi_s: float = 0.5
    phi_r: float = 0.5
    noise_power: float = 0.5
    trials: int = 1000
    seed: int = 0
    n_training: int = 64
    train_with_reverb: bool = False
    coherence_loading: float = model.COHERENCE_LOADING

    def __post_init__(self):
        if self.noise_rank > self.n_mics - 2:
            raise ValueError("noise rank must satisfy T <= N-2")
        if self.n_mics < 3:
            raise ValueError("need at least 3 microphones")


@dataclass(frozen=True)
class Scene:
    """One random draw of the time-invariant quantities plus the truths."""

    g_d: np.ndarray
    gamma: np.ndarray
    a_u: np.ndarray
    psi_u: np.ndarray
    phi_s: float
    phi_r: float

    @property
    def noise_cov(self) -> np.ndarray:
        return self.a_u @ self.psi_u @ self.a_u.conj().T

    def psi_v_true(self, subspace: model.NoiseSubspace) -> np.ndarray:
        """Noise PSD matrix expressed in the learned orthonormal basis."""
        v = subspace.basis
        return v.conj().T @ self.noise_cov @ v


def gen_scene(config: ScenarioConfig, rng: np.random.Generator) -> Scene:
    """Random scene: i.i.d. Gaussian noise steering matrix, random source
    covariance rescaled so the noise covariance has Frobenius norm
    ``noise_power``."""
    n, t = config.n_mics, config.noise_rank
    g_d = model.rdtf_ula(config.frequency_hz, config.spacing_m, config.doa_rad, n)
    geometry = model.ArrayGeometry.ula(n, config.spacing_m)
    gamma = model.diffuse_coherence(config.frequency_hz, geometry,
                                    loading=config.coherence_loading)
    a_u = crandn(rng, n, t)
    m = crandn(rng, t, t)
    psi_u = m @ m.conj().T
    if t:
        norm = np.linalg.norm(a_u @ psi_u @ a_u.conj().T)
        psi_u = psi_u * (config.noise_power / norm)
    return Scene(g_d=g_d, gamma=gamma, a_u=a_u, psi_u=psi_u,
                 phi_s=config.phi_s, phi_r=config.phi_r)


def learn_v(scene: Scene, rng: np.random.Generator, n_training: int,
            with_reverb: bool = False) -> model.NoiseSubspace:
    """Noise subspace from speech-absent training snapshots.

    Each training snapshot gets a fresh random source covariance, so the
    averaged covariance exposes the full steering-matrix column space.
    ``with_reverb`` adds diffuse reverberation to the training data
    (off by default: the training segment is treated as noise only).
    """
    t = scene.a_u.shape[1]
    if n_training < max(t, 1):
        raise ValueError("need at least T training snapshots")
    if t == 0:
        return model.NoiseSubspace(basis=np.zeros((scene.g_d.size, 0), dtype=complex))
    mixers = crandn(rng, n_training, t, t)
    sources = np.einsum("nij,nj->ni", mixers, crandn(rng, n_training, t))
    samples = sources @ scene.a_u.T
    if with_reverb:
        chol = np.linalg.cholesky(scene.gamma)
        samples = samples + np.sqrt(scene.phi_r) * crandn(rng, n_training, scene.g_d.size) @ chol.T
    cov = np.einsum("ni,nj->ij", samples, samples.conj()) / n_training
    return model.noise_subspace(cov, rank=t)


def draw_snapshots(scene: Scene, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` observation snapshots y = g s + r + A_u s_u, stacked as rows."""
    n = scene.g_d.size
    t = scene.a_u.shape[1]
    s = np.sqrt(scene.phi_s) * crandn(rng, count)
    chol_gamma = np.linalg.cholesky(scene.gamma)
    r = np.sqrt(scene.phi_r) * crandn(rng, count, n) @ chol_gamma.T
    y = np.outer(s, scene.g_d) + r
    if t:
        load = 1e-15 * np.trace(scene.psi_u).real + np.finfo(float).tiny
        chol_psi = np.linalg.cholesky(scene.psi_u + load * np.eye(t))
        y = y + (crandn(rng, count, t) @ chol_psi.T) @ scene.a_u.T
    return y


def draw_snapshot(scene: Scene, rng: np.random.Generator) -> np.ndarray:
    """Single observation snapshot."""
    return draw_snapshots(scene, rng, 1)[0]


@dataclass(frozen=True)
class TrialResult:
    """Raw estimates from both routes plus truths and squared errors."""

    phi_r_nb: float
    phi_r_bb: float
    phi_s_nb: float
    psi_diag_nb: np.ndarray
    psi_diag_bb: np.ndarray
    psi_diag_true: np.ndarray
    phi_r_true: float
    phi_s_true: float
    xi: np.ndarray
    epsilon: float

    @property
    def sq_err_phi_r(self) -> float:
        return (self.phi_r_nb - self.phi_r_true) ** 2

    @property
    def sq_err_phi_s(self) -> float:
        return (self.phi_s_nb - self.phi_s_true) ** 2


def run_trial(config: ScenarioConfig, trial_rng: np.random.Generator) -> TrialResult:
    """One Monte-Carlo trial: scene, subspace learning, snapshots, both MLEs."""
    scene = gen_scene(config, trial_rng)
    subspace = learn_v(scene, trial_rng, config.n_training,
                       with_reverb=config.train_with_reverb)
    snapshots = draw_snapshots(scene, trial_rng, config.snapshots)
    r_y = estimators.sample_cov(snapshots)

    est_nb = estimators.mle_nonblocking(r_y, scene.g_d, subspace, scene.gamma)
    b = model.blocking_matrix(scene.g_d)
    est_bb = estimators.mle_blocking(r_y, b, subspace, scene.gamma)

    psi_true = scene.psi_v_true(subspace)
    t = subspace.rank
    xis = np.array([
        bounds.xi_i(psi_true[i, i].real, scene.phi_r, scene.g_d, subspace.basis,
                    scene.gamma, i)
        for i in range(t)])
    eps = bounds.epsilon_ratio(scene.phi_s, scene.phi_r, scene.g_d,
                               subspace.basis, scene.gamma)
    return TrialResult(
        phi_r_nb=est_nb.raw_phi_r,
        phi_r_bb=est_bb.raw_phi_r,
        phi_s_nb=est_nb.raw_phi_s,
        psi_diag_nb=np.diag(est_nb.raw_psi_v).real.copy(),
        psi_diag_bb=np.diag(est_bb.raw_psi_v).real.copy(),
        psi_diag_true=np.diag(psi_true).real.copy(),
        phi_r_true=scene.phi_r,
        phi_s_true=scene.phi_s,
        xi=xis,
        epsilon=eps,
    )


def config_for_grid_point(config: ScenarioConfig, sweep: str, value: float) -> ScenarioConfig:
    """Move exactly one model parameter; the ratios are in dB.

    snapshots: L = value; srr: phi_r follows phi_s / 10^(srr/10);
    srnr: phi_s follows (phi_r + noise_power) * 10^(srnr/10);
    snr: noise_power follows phi_s / 10^(snr/10).
    """
    if sweep == "snapshots":
        return replace(config, snapshots=int(round(value)))
    if sweep == "srr":
        return replace(config, phi_r=config.phi_s / 10.0 ** (value / 10.0))
    if sweep == "srnr":
        return replace(config, phi_s=(config.phi_r + config.noise_power)
                       * 10.0 ** (value / 10.0))
    if sweep == "snr":
        return replace(config, noise_power=config.phi_s / 10.0 ** (value / 10.0))
    raise ValueError(f"unknown sweep parameter {sweep!r}; choose from {SWEEPS}")


@dataclass(frozen=True)
class SweepRow:
    sweep_param: str
    value: float
    nmse_phi_r_nb: float
    nmse_phi_r_bb: float
    nmse_phi_s: float
    nmse_psi_mean: float
    crb_phi_r: float
    crb_phi_s: float
    crb_psi_mean: float
    trials: int
    seed: int


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)
    trial_results: dict[float, list[TrialResult]] = field(default_factory=dict)

    COLUMNS = ("sweep_param", "value", "nmse_phiR_nb", "nmse_phiR_bb",
               "nmse_phiS", "nmse_psi_mean", "crb_phiR", "crb_phiS",
               "crb_psi_mean", "trials", "seed")

    def table(self) -> list[tuple]:
        return [(r.sweep_param, r.value, r.nmse_phi_r_nb, r.nmse_phi_r_bb,
                 r.nmse_phi_s, r.nmse_psi_mean, r.crb_phi_r, r.crb_phi_s,
                 r.crb_psi_mean, r.trials, r.seed) for r in self.rows]


def _trials_for_point(config: ScenarioConfig, point_index: int,
                      threads: int) -> list[TrialResult]:
    def one(trial: int) -> TrialResult:
        rng = np.random.default_rng([config.seed, point_index, trial])
        return run_trial(config, rng)

    if threads <= 1:
        return [one(i) for i in range(config.trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(config.trials)))


def summarize_point(sweep: str, value: float, config: ScenarioConfig,
                    results: list[TrialResult]) -> SweepRow:
    """Normalized MSEs across trials next to scene-averaged normalized bounds."""
    n, t, length = config.n_mics, config.noise_rank, config.snapshots
    phi_r_t = results[0].phi_r_true
    phi_s_t = results[0].phi_s_true
    nmse_r_nb = float(np.mean([(r.phi_r_nb - r.phi_r_true) ** 2 for r in results])
                      / phi_r_t**2)
    nmse_r_bb = float(np.mean([(r.phi_r_bb - r.phi_r_true) ** 2 for r in results])
                      / phi_r_t**2)
    nmse_s = float(np.mean([(r.phi_s_nb - r.phi_s_true) ** 2 for r in results])
                   / phi_s_t**2)
    if t:
        per_trial = [np.mean((r.psi_diag_nb - r.psi_diag_true) ** 2
                             / r.psi_diag_true**2) for r in results]
        nmse_psi = float(np.mean(per_trial))
        crb_psi = float(np.mean([
            np.mean([bounds.var_psi_i(1.0, x, length, n, t) for x in r.xi])
            for r in results]))
    else:
        nmse_psi = 0.0
        crb_psi = 0.0
    crb_phi_r = bounds.var_phi_r(1.0, length, n, t)
    crb_phi_s = float(np.mean([bounds.var_phi_s(1.0, r.epsilon, length, n, t)
                               for r in results]))
    return SweepRow(sweep_param=sweep, value=value, nmse_phi_r_nb=nmse_r_nb,
                    nmse_phi_r_bb=nmse_r_bb, nmse_phi_s=nmse_s,
                    nmse_psi_mean=nmse_psi, crb_phi_r=crb_phi_r,
                    crb_phi_s=crb_phi_s, crb_psi_mean=crb_psi,
                    trials=config.trials, seed=config.seed)


def run_sweep(config: ScenarioConfig, sweep: str, grid, threads: int = 1,
              keep_trials: bool = False) -> SweepResult:
    """Full sweep: for each grid value, ``config.trials`` independent trials."""
    grid = list(grid)
    if not grid:
        raise ValueError("empty sweep grid")
    out = SweepResult()
    for point_index, value in enumerate(grid):
        point_cfg = config_for_grid_point(config, sweep, float(value))
        results = _trials_for_point(point_cfg, point_index, threads)
        out.rows.append(summarize_point(sweep, float(value), point_cfg, results))
        if keep_trials:
            out.trial_results[float(value)] = results
    return out
