"""Analysis/synthesis STFT with exact round-trip reconstruction.

Square-root Hann windows are used on both sides, with 75% overlap by
default.  Synthesis divides by the accumulated squared window, so the
round trip is exact (no group delay) for any input length; the signal is
zero-padded at both ends before framing to cover the edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal


@dataclass(frozen=True)
class StftConfig:
    window_ms: float = 32.0
    overlap: float = 0.75
    sample_rate: int = 16000

    def __post_init__(self):
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError("overlap must lie in [0, 1)")
        if self.window_ms <= 0 or self.sample_rate <= 0:
            raise ValueError("window and sample rate must be positive")
        if self.hop < 1:
            raise ValueError("hop rounds to zero samples")

    @property
    def n_fft(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop(self) -> int:
        return int(round(self.n_fft * (1.0 - self.overlap)))

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def bin_frequencies(self) -> np.ndarray:
        """Physical frequency of each bin: k * fs / n_fft."""
        return np.arange(self.n_bins) * self.sample_rate / self.n_fft

    def window(self) -> np.ndarray:
        return np.sqrt(scipy.signal.get_window("hann", self.n_fft, fftbins=True))


def _pad(config: StftConfig) -> int:
    return config.n_fft - config.hop


def stft(signal: np.ndarray, config: StftConfig = StftConfig()) -> np.ndarray:
    """STFT of a mono ``(n,)`` or multichannel ``(n, C)`` signal.

    Returns ``(frames, bins)`` or ``(frames, bins, C)``.
    """
    x = np.asarray(signal, dtype=float)
    mono = x.ndim == 1
    if mono:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("signal must be (n,) or (n, channels)")
    nwin, hop = config.n_fft, config.hop
    pad = _pad(config)
    n_frames = int(np.ceil((x.shape[0] + pad) / hop)) + 1
    total = pad + (n_frames - 1) * hop + nwin
    padded = np.zeros((total, x.shape[1]))
    padded[pad:pad + x.shape[0]] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, nwin, axis=0)[::hop]
    spec = np.fft.rfft(frames * config.window(), axis=-1)
    spec = np.moveaxis(spec, -1, 1)  # (frames, bins, C)
    return spec[:, :, 0] if mono else spec


def istft(spec: np.ndarray, config: StftConfig = StftConfig(),
          length: int | None = None) -> np.ndarray:
    """Inverse of :func:`stft` for a mono ``(frames, bins)`` tensor."""
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != config.n_bins:
        raise ValueError("expected a (frames, bins) tensor matching the config")
    nwin, hop = config.n_fft, config.hop
    window = config.window()
    chunks = np.fft.irfft(spec, n=nwin, axis=1) * window
    total = (spec.shape[0] - 1) * hop + nwin
    out = np.zeros(total)
    wsum = np.zeros(total)
    for m in range(spec.shape[0]):
        start = m * hop
        out[start:start + nwin] += chunks[m]
        wsum[start:start + nwin] += window**2
    good = wsum > 1e-12
    out[good] /= wsum[good]
    pad = _pad(config)
    out = out[pad:]
    if length is not None:
        out = out[:length]
    return out


def frames_fully_inside(config: StftConfig, n_samples: int) -> int:
    """Number of leading frames whose span lies inside the first
    ``n_samples`` samples of the original signal."""
    pad = _pad(config)
    count = 0
    m = 0
    while True:
        end = m * config.hop + config.n_fft - pad  # frame end in signal samples
        if end > n_samples:
            break
        count += 1
        m += 1
    return count
