import warnings

import numpy as np
import pytest

from mlpsd import model
from mlpsd.enhance import (Enhancer, EnhancerConfig, enhance_signal,
                           learn_noise_basis, mvdr_weights)
from mlpsd.errors import ConfigError
from mlpsd.linalg import crandn
from mlpsd.metrics import fwsnrseg
from mlpsd.stft import StftConfig, stft
from mlpsd.synth import MixtureSpec, make_mixture


@pytest.fixture(scope="module")
def mixture():
    return make_mixture(MixtureSpec(speech_seconds=2.0, rsnr_db=5.0, seed=21))


def enhance_quiet(samples, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return enhance_signal(samples, cfg)


class TestLearnNoiseBasis:
    def test_recovers_rank_and_span(self, mixture):
        cfg = StftConfig()
        spec = stft(mixture.observed[:mixture.noise_samples], cfg)
        subspaces = learn_noise_basis(spec)
        ranks = np.array([s.rank for s in subspaces])
        # eigenvalue-energy rule should find the two directional sources
        # in most bins carrying noise energy
        energies = np.array([(np.abs(spec[:, k, :]) ** 2).sum()
                             for k in range(spec.shape[1])])
        strong = energies > np.median(energies)
        assert np.mean(ranks[strong] == 2) > 0.7

    def test_learned_span_matches_true_steering(self, mixture):
        cfg = StftConfig()
        spec = stft(mixture.observed[:mixture.noise_samples], cfg)
        subspaces = learn_noise_basis(spec, rank=2)
        geom = model.ArrayGeometry.ula(mixture.spec.n_mics, mixture.spec.spacing_m)
        energies = np.array([(np.abs(spec[:, k, :]) ** 2).sum()
                             for k in range(spec.shape[1])])
        strong = np.flatnonzero(energies > np.median(energies))
        angles = []
        for k in strong:
            f = cfg.bin_frequencies()[k]
            pair = np.stack([
                model.steering_vector(f, geom, np.deg2rad(a))
                for a in mixture.spec.noise_angles_deg], axis=1)
            # where the two steering vectors nearly coincide (very low
            # frequency, aliasing nulls) the true span is not 2-D and the
            # comparison is meaningless; skip those bins
            sep = np.linalg.svd(pair / np.linalg.norm(pair, axis=0),
                                compute_uv=False).min()
            if sep < 0.3:
                continue
            true_basis = np.linalg.qr(pair)[0]
            sv = np.linalg.svd(subspaces[k].basis.conj().T @ true_basis,
                               compute_uv=False)
            angles.append(np.arccos(np.clip(sv.min(), -1.0, 1.0)))
        assert len(angles) > 50
        assert np.max(angles) <= 0.05

    def test_auto_rank_exact_on_model_matched_frames(self, rng):
        # frames drawn exactly from the rank-2 directional model
        n, t, frames = 6, 2, 120
        a_u = crandn(rng, n, t)
        sources = crandn(rng, frames, t)
        seg = (sources @ a_u.T)[:, None, :]  # one bin
        subspaces = learn_noise_basis(seg)
        assert subspaces[0].rank == t

    def test_white_noise_warns_no_structure(self, rng):
        cfg = StftConfig()
        white = rng.standard_normal((cfg.sample_rate, 4))
        spec = stft(white, cfg)
        with pytest.warns(UserWarning, match="low-rank"):
            learn_noise_basis(spec[:, 100:101, :])

    def test_needs_frames(self):
        with pytest.raises(ValueError):
            learn_noise_basis(np.zeros((0, 5, 4)))


class TestMvdr:
    def test_distortionless_on_pure_steering(self, rng):
        n, k = 4, 6
        g = np.stack([np.exp(-2j * np.pi * rng.uniform(0, 1, n)) for _ in range(k)])
        g[:, 0] = 1.0
        phi = np.stack([np.eye(n) + 0.3 * np.outer(g[i], g[i].conj())
                        for i in range(k)])
        w, phi_re = mvdr_weights(phi, g)
        s = crandn(rng, k)
        y = g * s[:, None]
        out = np.einsum("ki,ki->k", w.conj(), y)
        np.testing.assert_allclose(out, s, atol=1e-12)
        assert (phi_re > 0).all()


class TestEnhance:
    def test_improves_reference_channel(self, mixture):
        n0 = mixture.noise_samples
        ref = mixture.direct_reference[n0:]
        base = fwsnrseg(ref, mixture.observed[n0:, 0])
        res = enhance_quiet(mixture.observed, EnhancerConfig(variant="nb-dir",
                                                             noise_rank=2))
        assert fwsnrseg(ref, res.samples[n0:]) > base

    def test_dd_variants_identical(self, mixture):
        out = {}
        for variant in ("nb-dd", "bb-dd"):
            cfg = EnhancerConfig(variant=variant, noise_rank=2)
            out[variant] = enhance_quiet(mixture.observed, cfg).samples
        scale = np.abs(out["nb-dd"]).max()
        assert np.abs(out["nb-dd"] - out["bb-dd"]).max() <= 1e-9 * scale

    def test_dir_variants_differ(self, mixture):
        a = enhance_quiet(mixture.observed,
                          EnhancerConfig(variant="nb-dir", noise_rank=2)).samples
        b = enhance_quiet(mixture.observed,
                          EnhancerConfig(variant="bb-dir", noise_rank=2)).samples
        assert np.abs(a - b).max() > 1e-6 * np.abs(a).max()

    def test_zero_frames_give_zero_output(self):
        cfg = EnhancerConfig(noise_rank=1)
        enh = Enhancer(cfg, 4)
        rng = np.random.default_rng(3)
        noise = crandn(rng, 20, cfg.stft.n_bins, 4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            enh.fit_noise(noise)
            out = enh.process_frame(np.zeros((cfg.stft.n_bins, 4), dtype=complex))
        np.testing.assert_allclose(np.abs(out), 0.0, atol=1e-30)

    def test_strong_speech_drives_gain_to_one(self):
        # huge target component: the Wiener gain saturates at 1, so the
        # output reduces to the plain MVDR output
        cfg = EnhancerConfig(variant="nb-dir", noise_rank=1)
        enh = Enhancer(cfg, 4)
        rng = np.random.default_rng(8)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            enh.fit_noise(0.01 * crandn(rng, 20, cfg.stft.n_bins, 4))
            frame = 100.0 * enh.g * crandn(rng, cfg.stft.n_bins)[:, None]
            for _ in range(6):
                out = enh.process_frame(frame)
        assert enh.logs[-1].mean_gain > 0.99
        assert np.isfinite(out).all()

    def test_gain_limits_respected(self, mixture):
        cfg = EnhancerConfig(variant="nb-dir", noise_rank=2)
        res = enhance_quiet(mixture.observed, cfg)
        gains = np.array([log.mean_gain for log in res.logs])
        assert gains.min() >= cfg.gain_floor - 1e-12
        assert gains.max() <= 1.0 + 1e-12

    def test_noise_only_energy_reduced(self, rng):
        # noise-only input: output energy must not exceed the reference channel
        spec = MixtureSpec(speech_seconds=1.0, noise_seconds=1.0, seed=4)
        mix = make_mixture(spec)
        noise_only = mix.observed - np.repeat(
            mix.direct_reference[:, None], spec.n_mics, axis=1)
        res = enhance_quiet(noise_only, EnhancerConfig(variant="nb-dir", noise_rank=2))
        assert (res.samples**2).sum() <= (noise_only[:, 0] ** 2).sum()

    def test_too_short_preamble_rejected(self, mixture):
        with pytest.raises(ConfigError):
            EnhancerConfig(noise_seconds=0.1)

    def test_signal_shorter_than_preamble_rejected(self, mixture):
        cfg = EnhancerConfig(noise_rank=2)
        with pytest.raises(ValueError):
            enhance_signal(mixture.observed[:8000], cfg)

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError):
            EnhancerConfig(variant="mystery")

    def test_geometry_channel_mismatch(self, mixture):
        geom = model.ArrayGeometry.ula(4, 0.06)
        cfg = EnhancerConfig(geometry=geom, noise_rank=2)
        with pytest.raises(ConfigError):
            Enhancer(cfg, mixture.observed.shape[1])


class TestMixtureSynthesis:
    def test_preamble_is_noise_only(self, mixture):
        n0 = mixture.noise_samples
        assert np.abs(mixture.direct_reference[:n0]).max() == 0.0
        assert (mixture.observed[:n0] ** 2).mean() > 0

    def test_rsnr_level_honored(self):
        spec = MixtureSpec(speech_seconds=2.0, rsnr_db=10.0, seed=5)
        mix = make_mixture(spec)
        n0 = mix.noise_samples
        direct = np.repeat(mix.direct_reference[:, None], spec.n_mics, axis=1)
        # reconstruct noise as observed minus (direct + reverb) is not
        # possible here, so check the direct-to-observed power ordering
        p_sig = (direct[n0:] ** 2).mean()
        p_obs = (mix.observed[n0:] ** 2).mean()
        assert p_obs > p_sig  # reverb and noise add energy

    def test_seeded_reproducible(self):
        spec = MixtureSpec(speech_seconds=1.0, seed=9)
        one = make_mixture(spec)
        two = make_mixture(spec)
        np.testing.assert_array_equal(one.observed, two.observed)
