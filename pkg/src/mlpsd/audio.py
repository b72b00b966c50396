"""WAV reading and writing (16-bit PCM or float, 16 kHz)."""

from __future__ import annotations

import numpy as np
import scipy.io.wavfile

from .errors import ConfigError

REQUIRED_RATE = 16000


def read_wav(path) -> tuple[int, np.ndarray, str]:
    """Read a WAV file into float64 samples in [-1, 1].

    Returns (sample_rate, samples (n, channels), subtype) where subtype is
    'int16' or 'float'.  Mono files come back as (n, 1).
    """
    rate, data = scipy.io.wavfile.read(path)
    if data.dtype == np.int16:
        subtype = "int16"
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        subtype = "float"
        samples = data.astype(np.float64)
    elif data.dtype == np.int32:
        subtype = "int16"
        samples = data.astype(np.float64) / 2147483648.0
    else:
        raise ConfigError(f"unsupported WAV sample format: {data.dtype}")
    if samples.ndim == 1:
        samples = samples[:, None]
    return int(rate), samples, subtype


def check_rate(rate: int) -> None:
    if rate != REQUIRED_RATE:
        raise ConfigError(
            f"expected {REQUIRED_RATE} Hz input, got {rate} Hz (resampling is out of scope)")


def write_wav(path, rate: int, samples: np.ndarray, subtype: str = "int16") -> None:
    """Write mono float samples, clipping to the valid range."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if subtype == "int16":
        clipped = np.clip(samples, -1.0, 32767.0 / 32768.0)
        scipy.io.wavfile.write(path, rate, (clipped * 32768.0).astype(np.int16))
    else:
        scipy.io.wavfile.write(path, rate, samples.astype(np.float32))
