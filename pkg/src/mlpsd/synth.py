"""Model-matched synthetic multichannel mixtures.

Builds test material that follows the assumed signal model on purpose:
a broadside target carrying a speech-like nonstationary signal, diffuse
Gaussian reverberation with the sinc spatial coherence, and a small
number of directional nonstationary noise sources.  A noise-only
preamble precedes the speech so the enhancer can learn the noise
subspace.

The spatial structure is imposed in the STFT domain (per-bin coherence
Cholesky factors and steering vectors) and transformed back, so at
analysis time the mixture matches the per-bin model closely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from . import model
from .stft import StftConfig, istft, stft


@dataclass(frozen=True)
class MixtureSpec:
    n_mics: int = 6
    spacing_m: float = 0.06
    speech_seconds: float = 4.0
    noise_seconds: float = 1.0
    rsnr_db: float = 5.0       # (direct + reverb) to noise power ratio
    srr_db: float = 0.0        # direct to reverb power ratio
    noise_angles_deg: tuple = (-50.0, 35.0)
    seed: int = 0
    stft: StftConfig = StftConfig()


@dataclass(frozen=True)
class Mixture:
    """Synthesized scene: microphone signals plus the clean reference."""

    observed: np.ndarray        # (n_samples, N)
    direct_reference: np.ndarray  # clean target at microphone 1, same length
    spec: MixtureSpec

    @property
    def noise_samples(self) -> int:
        return int(round(self.spec.noise_seconds * self.spec.stft.sample_rate))


def speechlike_signal(rng: np.random.Generator, n_samples: int, fs: float) -> np.ndarray:
    """Deterministic pseudo-speech: tilted noise with syllabic amplitude bursts."""
    raw = rng.standard_normal(n_samples)
    colored = scipy.signal.lfilter([1.0], [1.0, -0.92], raw)
    t = np.arange(n_samples) / fs
    syllabic = 0.5 + 0.5 * np.sin(2 * np.pi * 2.7 * t + 0.7)
    slow = 0.4 + 0.6 * (0.5 + 0.5 * np.sin(2 * np.pi * 0.35 * t))
    env = 0.05 + (syllabic**2) * slow
    sig = colored * env
    return sig / np.sqrt((sig**2).mean())


def _am_noise_source(rng: np.random.Generator, n_samples: int, fs: float,
                     rate_hz: float, pole: float) -> np.ndarray:
    raw = rng.standard_normal(n_samples)
    colored = scipy.signal.lfilter([1.0], [1.0, -pole], raw)
    t = np.arange(n_samples) / fs
    env = 0.25 + (0.5 + 0.5 * np.sin(2 * np.pi * rate_hz * t)) ** 2
    sig = colored * env
    return sig / np.sqrt((sig**2).mean())


def _diffuse_field(rng: np.random.Generator, n_samples: int, geometry: model.ArrayGeometry,
                   cfg: StftConfig) -> np.ndarray:
    """Gaussian field with per-bin sinc coherence, unit average channel power."""
    n = geometry.n_mics
    white = stft(rng.standard_normal((n_samples, n)), cfg)  # (frames, bins, N)
    freqs = cfg.bin_frequencies()
    colored = np.empty_like(white)
    for k, f in enumerate(freqs):
        gamma = model.diffuse_coherence(f, geometry)
        chol = np.linalg.cholesky(gamma)
        colored[:, k, :] = white[:, k, :] @ chol.T
    out = np.stack([istft(colored[:, :, ch], cfg, length=n_samples)
                    for ch in range(n)], axis=1)
    return out / np.sqrt((out**2).mean())


def _directional_image(source_spec: np.ndarray, angle_deg: float,
                       geometry: model.ArrayGeometry, cfg: StftConfig) -> np.ndarray:
    """Multiply a mono STFT by per-bin steering to image it on the array."""
    freqs = cfg.bin_frequencies()
    theta = np.deg2rad(angle_deg)
    steering = np.stack([
        model.steering_vector(f, geometry, theta) for f in freqs])  # (bins, N)
    return source_spec[:, :, None] * steering[None, :, :]


def make_mixture(spec: MixtureSpec = MixtureSpec()) -> Mixture:
    """Noise preamble followed by target + reverberation + directional noise."""
    fs = spec.stft.sample_rate
    rng = np.random.default_rng(spec.seed)
    geometry = model.ArrayGeometry.ula(spec.n_mics, spec.spacing_m)
    n_noise = int(round(spec.noise_seconds * fs))
    n_speech = int(round(spec.speech_seconds * fs))
    total = n_noise + n_speech

    # target: broadside, so every microphone carries the same direct signal
    speech = speechlike_signal(rng, n_speech, fs)
    direct = np.zeros(total)
    direct[n_noise:] = speech
    direct_img = np.repeat(direct[:, None], spec.n_mics, axis=1)

    # diffuse reverberation, active only with the speech, scaled by SRR
    reverb = _diffuse_field(rng, total, geometry, spec.stft)
    reverb[:n_noise] = 0.0
    p_direct = (direct[n_noise:] ** 2).mean()
    p_reverb = (reverb[n_noise:] ** 2).mean()
    reverb *= np.sqrt(p_direct / p_reverb / 10.0 ** (spec.srr_db / 10.0))

    # directional nonstationary noises, active from the first sample
    noise = np.zeros((total, spec.n_mics))
    for idx, angle in enumerate(spec.noise_angles_deg):
        src = _am_noise_source(rng, total, fs, rate_hz=1.9 + 1.3 * idx,
                               pole=0.55 + 0.15 * idx)
        src_spec = stft(src, spec.stft)
        img_spec = _directional_image(src_spec, angle, geometry, spec.stft)
        for ch in range(spec.n_mics):
            noise[:, ch] += istft(img_spec[:, :, ch], spec.stft, length=total)

    reverberant = direct_img + reverb
    p_rev_sig = (reverberant[n_noise:] ** 2).mean()
    p_noise = (noise[n_noise:] ** 2).mean()
    noise *= np.sqrt(p_rev_sig / p_noise / 10.0 ** (spec.rsnr_db / 10.0))

    observed = reverberant + noise
    return Mixture(observed=observed, direct_reference=direct, spec=spec)
