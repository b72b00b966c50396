import numpy as np
import pytest

from mlpsd.stft import StftConfig, frames_fully_inside, istft, stft


@pytest.fixture
def cfg():
    return StftConfig()


def test_config_derived_sizes(cfg):
    assert cfg.n_fft == 512
    assert cfg.hop == 128
    assert cfg.n_bins == 257
    assert cfg.bin_frequencies()[1] == pytest.approx(31.25)
    assert cfg.bin_frequencies()[-1] == pytest.approx(8000.0)


def test_roundtrip_white_noise(cfg):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(9001)
    y = istft(stft(x, cfg), cfg, length=x.size)
    assert y.size == x.size
    assert np.linalg.norm(y - x) <= 1e-6 * np.linalg.norm(x)


def test_impulse_roundtrip_no_delay(cfg):
    x = np.zeros(4000)
    x[1234] = 1.0
    y = istft(stft(x, cfg), cfg, length=x.size)
    assert abs(y[1234] - 1.0) < 1e-8
    others = np.delete(y, 1234)
    assert np.abs(others).max() < 1e-8


def test_zero_input_zero_output(cfg):
    y = istft(stft(np.zeros(2000), cfg), cfg, length=2000)
    assert np.abs(y).max() == 0.0


def test_tone_energy_concentrated(cfg):
    n = 16000
    t = np.arange(n) / cfg.sample_rate
    x = np.sin(2 * np.pi * 1000.0 * t)
    spec = stft(x, cfg)
    power = (np.abs(spec) ** 2).sum(axis=0)
    k = int(round(1000.0 / cfg.sample_rate * cfg.n_fft))
    window = power[k - 1:k + 2].sum()
    assert window >= 0.95 * power.sum()


def test_multichannel_layout(cfg):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5000, 3))
    spec = stft(x, cfg)
    assert spec.shape[1] == cfg.n_bins
    assert spec.shape[2] == 3
    # per-channel round trip
    for ch in range(3):
        y = istft(spec[:, :, ch], cfg, length=5000)
        assert np.linalg.norm(y - x[:, ch]) <= 1e-6 * np.linalg.norm(x[:, ch])


def test_frames_fully_inside(cfg):
    one_second = cfg.sample_rate
    m = frames_fully_inside(cfg, one_second)
    assert m > 0
    # frame m-1 ends inside, frame m ends outside
    pad = cfg.n_fft - cfg.hop
    assert (m - 1) * cfg.hop + cfg.n_fft - pad <= one_second
    assert m * cfg.hop + cfg.n_fft - pad > one_second


def test_bad_overlap_rejected():
    with pytest.raises(ValueError):
        StftConfig(overlap=1.0)
