import numpy as np
import pytest
import scipy.signal

from mlpsd import metrics

FS = 16000


@pytest.fixture(scope="module")
def speechlike():
    rng = np.random.default_rng(99)
    raw = rng.standard_normal(2 * FS)
    colored = scipy.signal.lfilter([1.0], [1.0, -0.9], raw)
    t = np.arange(colored.size) / FS
    sig = colored * (0.2 + np.abs(np.sin(2 * np.pi * 3.0 * t)))
    return sig / np.abs(sig).max()


def test_identical_signals_hit_clamp_ceiling(speechlike):
    assert metrics.fwsnrseg(speechlike, speechlike) == pytest.approx(35.0)


def test_identical_signals_zero_llr(speechlike):
    assert metrics.llr(speechlike, speechlike) == pytest.approx(0.0, abs=1e-12)


def test_strong_noise_drops_fwsnrseg(speechlike):
    rng = np.random.default_rng(5)
    noise = rng.standard_normal(speechlike.size)
    noise *= np.sqrt((speechlike**2).mean() / (noise**2).mean())  # 0 dB SNR
    val = metrics.fwsnrseg(speechlike, speechlike + noise)
    assert val < 10.0
    assert val > metrics.SEG_SNR_MIN


def test_noise_raises_llr(speechlike):
    rng = np.random.default_rng(6)
    noise = rng.standard_normal(speechlike.size)
    noise *= np.sqrt((speechlike**2).mean() / (noise**2).mean())
    assert metrics.llr(speechlike, speechlike + noise) > 0.05


def test_llr_is_asymmetric(speechlike):
    rng = np.random.default_rng(7)
    other = speechlike + 0.5 * rng.standard_normal(speechlike.size)
    assert metrics.llr(speechlike, other) != pytest.approx(
        metrics.llr(other, speechlike), rel=1e-3)


def test_length_mismatch_rejected(speechlike):
    with pytest.raises(ValueError):
        metrics.fwsnrseg(speechlike, speechlike[: speechlike.size // 2])


def test_small_length_difference_tolerated(speechlike):
    trimmed = speechlike[:-100]
    assert metrics.fwsnrseg(speechlike, np.r_[trimmed, np.zeros(100)]) > 0.0
    val = metrics.fwsnrseg(speechlike[:-10], speechlike)
    assert np.isfinite(val)


def test_scores_improve_with_less_distortion(speechlike):
    rng = np.random.default_rng(8)
    noise = rng.standard_normal(speechlike.size)
    noise *= np.sqrt((speechlike**2).mean() / (noise**2).mean())
    loud = metrics.fwsnrseg(speechlike, speechlike + noise)
    quiet = metrics.fwsnrseg(speechlike, speechlike + 0.1 * noise)
    assert quiet > loud
    assert metrics.llr(speechlike, speechlike + 0.1 * noise) < \
        metrics.llr(speechlike, speechlike + noise)
