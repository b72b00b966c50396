"""Objective speech-quality measures: fwSNRseg and LLR.

Both follow the classical frequency-weighted segmental SNR and
log-likelihood-ratio families.  The exact conventions are fixed here and
documented, since the literature leaves band weights, clamps and
trimming open:

* fwSNRseg: 25 mel-spaced bands between 50 Hz and Nyquist, band weights
  equal to the reference band magnitude to the power 0.2, per-segment
  weighted SNR clamped to [-10, 35] dB, averaged over active segments.
* LLR: order-10 linear prediction on 32 ms Hann frames with 75% overlap;
  per-file score is the mean of the per-frame ratios at or below the
  median (robust against isolated gross frames).  Lower is better; an
  improvement shows up as a negative delta.
* Active segments are frames whose reference energy is within 40 dB of
  the loudest frame.

Scores are therefore comparable within this toolkit (and against itself
across runs), not against third-party implementations.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

N_BANDS = 25
BAND_WEIGHT_POWER = 0.2
SEG_SNR_MIN = -10.0
SEG_SNR_MAX = 35.0
ACTIVITY_DB = 40.0
LPC_ORDER = 10

_FRAME_MS = 32.0
_FRAME_OVERLAP = 0.75


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _frame(signal: np.ndarray, fs: float) -> np.ndarray:
    nwin = int(round(_FRAME_MS * fs / 1000.0))
    hop = int(round(nwin * (1.0 - _FRAME_OVERLAP)))
    if signal.size < nwin:
        raise ValueError("signal shorter than one analysis frame")
    n_frames = 1 + (signal.size - nwin) // hop
    frames = np.lib.stride_tricks.sliding_window_view(signal, nwin)[::hop]
    return frames[:n_frames] * np.hanning(nwin)


def _check_pair(reference, processed):
    ref = np.asarray(reference, dtype=float).ravel()
    proc = np.asarray(processed, dtype=float).ravel()
    n = min(ref.size, proc.size)
    if n == 0:
        raise ValueError("empty signals")
    if abs(ref.size - proc.size) > max(ref.size, proc.size) * 0.05:
        raise ValueError("signal lengths differ by more than 5%")
    return ref[:n], proc[:n]


def _active_frames(ref_frames: np.ndarray) -> np.ndarray:
    energy = (ref_frames**2).sum(axis=1)
    peak = energy.max()
    if peak <= 0:
        return np.zeros(len(energy), dtype=bool)
    return energy >= peak * 10.0 ** (-ACTIVITY_DB / 10.0)


def fwsnrseg(reference: np.ndarray, processed: np.ndarray, fs: float = 16000.0) -> float:
    """Frequency-weighted segmental SNR in dB (higher is better)."""
    ref, proc = _check_pair(reference, processed)
    ref_frames = _frame(ref, fs)
    proc_frames = _frame(proc, fs)
    n = min(len(ref_frames), len(proc_frames))
    ref_frames, proc_frames = ref_frames[:n], proc_frames[:n]
    active = _active_frames(ref_frames)
    if not active.any():
        return 0.0

    nwin = ref_frames.shape[1]
    ref_mag = np.abs(np.fft.rfft(ref_frames, axis=1))
    proc_mag = np.abs(np.fft.rfft(proc_frames, axis=1))
    freqs = np.fft.rfftfreq(nwin, 1.0 / fs)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(50.0), _hz_to_mel(fs / 2), N_BANDS + 1))
    band_idx = np.clip(np.searchsorted(edges, freqs, side="right") - 1, -1, N_BANDS - 1)

    scores = []
    for m in np.flatnonzero(active):
        band_ref = np.zeros(N_BANDS)
        band_err = np.zeros(N_BANDS)
        for b in range(N_BANDS):
            sel = band_idx == b
            if not sel.any():
                continue
            band_ref[b] = (ref_mag[m, sel] ** 2).sum()
            band_err[b] = ((ref_mag[m, sel] - proc_mag[m, sel]) ** 2).sum()
        weights = band_ref ** (BAND_WEIGHT_POWER / 2.0)  # magnitude^0.2
        if weights.sum() <= 0:
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            snr_db = 10.0 * np.log10(band_ref / band_err)
        snr_db = np.nan_to_num(snr_db, nan=SEG_SNR_MAX, posinf=SEG_SNR_MAX,
                               neginf=SEG_SNR_MIN)
        seg = float((weights * snr_db).sum() / weights.sum())
        scores.append(np.clip(seg, SEG_SNR_MIN, SEG_SNR_MAX))
    return float(np.mean(scores)) if scores else 0.0


def _lpc(frame: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Autocorrelation-method LP coefficients [1, a_1..a_p] and the
    autocorrelation sequence."""
    full = np.correlate(frame, frame, mode="full")
    r = full[frame.size - 1:frame.size + order]
    if r[0] <= 0:
        return np.r_[1.0, np.zeros(order)], r
    coeffs = scipy.linalg.solve_toeplitz((r[:order], r[:order]), -r[1:order + 1])
    return np.r_[1.0, coeffs], r


def _lpc_residual_energy(a: np.ndarray, r: np.ndarray) -> float:
    """Quadratic form a^T R a through the autocorrelation sequence."""
    order = a.size - 1
    acf_of_a = np.correlate(a, a, mode="full")[order:]
    return float(r[0] * acf_of_a[0] + 2.0 * (r[1:] * acf_of_a[1:]).sum())


def llr(reference: np.ndarray, processed: np.ndarray, fs: float = 16000.0,
        order: int = LPC_ORDER) -> float:
    """Log-likelihood ratio of LP models (lower is better, 0 for identity)."""
    ref, proc = _check_pair(reference, processed)
    ref_frames = _frame(ref, fs)
    proc_frames = _frame(proc, fs)
    n = min(len(ref_frames), len(proc_frames))
    ref_frames, proc_frames = ref_frames[:n], proc_frames[:n]
    active = _active_frames(ref_frames)
    vals = []
    for m in np.flatnonzero(active):
        a_ref, r_ref = _lpc(ref_frames[m], order)
        a_proc, _ = _lpc(proc_frames[m], order)
        num = _lpc_residual_energy(a_proc, r_ref)
        den = _lpc_residual_energy(a_ref, r_ref)
        if den <= 0 or num <= 0:
            continue
        vals.append(np.log(num / den))
    if not vals:
        return 0.0
    vals = np.asarray(vals)
    keep = vals <= np.median(vals)
    return float(vals[keep].mean())
