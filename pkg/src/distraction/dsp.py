"""Preprocessing primitives shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal as sps

from .signalio import Signal

HR_BAND_HZ = (0.7, 2.5)
BUTTER_ORDER = 3
# forward-backward passes are padded with this many mirrored samples; a
# 3rd-order bandpass has 2*3 poles, so 3 * (6 + 1)
BANDPASS_PADLEN = 3 * (2 * BUTTER_ORDER + 1)
SPECTRUM_PAD_FACTOR = 8


@dataclass(frozen=True)
class DetrendConfig:
    lam: float = 50.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")


def detrend_lambda_for_fps(fps: float) -> float:
    """Smoothness regularizer matched to the frame rate (500 at 120 fps, 50 at 25-30 fps)."""
    return 500.0 if fps >= 60 else 50.0


@dataclass(frozen=True)
class Spectrum:
    power: np.ndarray
    freqs_bpm: np.ndarray

    @property
    def resolution_bpm(self) -> float:
        return float(self.freqs_bpm[1] - self.freqs_bpm[0])


@dataclass(frozen=True)
class Window:
    start: int
    data: np.ndarray

    def __len__(self):
        return self.data.shape[0]


def _second_diff_gram_bands(n: int) -> np.ndarray:
    """Upper bands of D2^T D2 in ``solveh_banded`` layout, shape (3, n)."""
    c = (1.0, -2.0, 1.0)
    bands = np.zeros((3, n))
    # each row i of D2 adds the 3x3 block c c^T at [i:i+3, i:i+3]
    for k in range(3):
        for m in range(3 - k):
            bands[2 - k, m + k: m + k + n - 2] += c[m] * c[m + k]
    return bands


def trend(x: np.ndarray, lam: float) -> np.ndarray:
    """Smooth trend ``(I + lam^2 D2^T D2)^-1 x`` along axis 0."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    ab = _second_diff_gram_bands(n) * lam**2
    ab[2] += 1.0
    return linalg.solveh_banded(ab, x, lower=False, check_finite=False)


def detrend(sig: Signal, config: DetrendConfig = DetrendConfig()) -> Signal:
    """Remove slow trends with the smoothness-priors method.

    Each channel ``z`` is replaced by ``z - (I + lam^2 D2^T D2)^-1 z`` where
    ``D2`` is the second-order difference operator; the system is banded and
    solved through a Cholesky factorization.
    """
    if sig.num_samples < 3:
        raise ValueError("detrending needs at least 3 samples")
    z = sig.samples
    return sig.with_samples(z - trend(z, config.lam))


def bandpass(sig: Signal, lo: float = HR_BAND_HZ[0], hi: float = HR_BAND_HZ[1]) -> Signal:
    """Zero-phase 3rd-order Butterworth bandpass (forward then reverse pass)."""
    nyq = sig.fps / 2
    if not 0 < lo < hi < nyq:
        raise ValueError(f"band [{lo}, {hi}] Hz must lie inside (0, {nyq}) Hz")
    if sig.num_samples <= BANDPASS_PADLEN:
        raise ValueError(
            f"signal of {sig.num_samples} samples is shorter than the "
            f"{BANDPASS_PADLEN}-sample filter padding")
    sos = sps.butter(BUTTER_ORDER, [lo, hi], btype="bandpass", fs=sig.fps, output="sos")
    out = sps.sosfiltfilt(sos, sig.samples, axis=0, padtype="even", padlen=BANDPASS_PADLEN)
    return sig.with_samples(out)


def normalize_acdc(sig: Signal) -> Signal:
    """Zero mean, unit standard deviation, then peak magnitude scaled to 1.

    Constant channels become all-zero.
    """
    if sig.num_samples < 2:
        raise ValueError("normalization needs at least 2 samples")
    x = sig.samples
    out = np.zeros_like(x)
    for c in range(x.shape[1]):
        col = x[:, c]
        if np.ptp(col) == 0:
            continue
        z = (col - col.mean()) / col.std()
        out[:, c] = z / np.abs(z).max()
    return sig.with_samples(out)


def preprocess(sig: Signal, lam: float | None = None, band=HR_BAND_HZ) -> Signal:
    """Detrend, bandpass and AC/DC normalize, in that order.

    A channel that is constant on input maps to all-zero; otherwise the
    rounding residue left by the filters would be scaled up to unit peak.
    """
    if lam is None:
        lam = detrend_lambda_for_fps(sig.fps)
    out = detrend(sig, DetrendConfig(lam))
    if band is not None:
        out = bandpass(out, *band)
    out = normalize_acdc(out)
    flat = np.ptp(sig.samples, axis=0) == 0
    if flat.any():
        x = out.samples.copy()
        x[:, flat] = 0.0
        out = out.with_samples(x)
    return out


def window(sig: Signal | np.ndarray, length: int, overlap_fraction: float = 0.0) -> list[Window]:
    """Split into fixed-length windows; a trailing partial window is dropped."""
    if not 0 <= overlap_fraction < 1:
        raise ValueError(f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    x = sig.samples if isinstance(sig, Signal) else np.asarray(sig)
    n = x.shape[0]
    if length < 1 or length > n:
        raise ValueError(f"window length {length} exceeds signal length {n}")
    hop = max(1, int(round(length * (1 - overlap_fraction))))
    return [Window(s, x[s:s + length]) for s in range(0, n - length + 1, hop)]


def hann_periodic(length: int) -> np.ndarray:
    k = np.arange(length)
    return 0.5 - 0.5 * np.cos(2 * np.pi * k / length)


def _as_windows(windows, hop):
    out = []
    for k, w in enumerate(windows):
        if isinstance(w, Window):
            out.append((w.start, np.asarray(w.data, dtype=np.float64)))
        else:
            out.append((k * hop, np.asarray(w, dtype=np.float64)))
    lengths = {w.shape[0] for _, w in out}
    if len(lengths) > 1:
        raise ValueError(f"inconsistent window lengths {sorted(lengths)}")
    return out


def overlap_add_hann(windows, hop: int, n: int | None = None, fps: float = 1.0) -> Signal:
    """Weight each window by a periodic Hann window and sum at its start index.

    With ``hop == length / 2`` the weights add up to exactly one wherever two
    windows overlap, so the fully covered interior is reconstructed unchanged.
    """
    items = _as_windows(windows, hop)
    if not items:
        return Signal(np.zeros(max(n or 1, 1)), fps)
    length = items[0][1].shape[0]
    if 2 * hop != length:
        raise ValueError(f"hop {hop} must be half the window length {length}")
    end = max(s + length for s, _ in items)
    n = end if n is None else n
    shape = (n,) + items[0][1].shape[1:]
    out = np.zeros(shape)
    w = hann_periodic(length)
    w = w.reshape((length,) + (1,) * (out.ndim - 1))
    for s, seg in items:
        stop = min(s + length, n)
        out[s:stop] += (w * seg)[: stop - s]
    return Signal(out, fps)


def overlap_average_hann(windows, n: int, fps: float = 1.0) -> Signal:
    """Hann-weighted average of overlapping windows.

    Positions where every covering window has zero weight (the very first
    sample, for instance) fall back to an unweighted mean.
    """
    items = _as_windows(windows, 1)
    length = items[0][1].shape[0]
    tail = items[0][1].shape[1:]
    w = hann_periodic(length).reshape((length,) + (1,) * len(tail))
    num = np.zeros((n,) + tail)
    den = np.zeros((n,) + (1,) * len(tail))
    plain = np.zeros((n,) + tail)
    count = np.zeros((n,) + (1,) * len(tail))
    for s, seg in items:
        num[s:s + length] += w * seg
        den[s:s + length] += w
        plain[s:s + length] += seg
        count[s:s + length] += 1
    weighted = den > 1e-12
    out = np.where(weighted, num / np.where(weighted, den, 1.0),
                   plain / np.maximum(count, 1))
    return Signal(out, fps)


def default_pad(n: int) -> int:
    return 1 << int(np.ceil(np.log2(SPECTRUM_PAD_FACTOR * n)))


def power_spectrum(sig: Signal | np.ndarray, channel: int = 0, pad_to: int | None = None,
                   fps: float | None = None) -> Spectrum:
    """Zero-padded periodogram of one channel over non-negative frequencies (BPM)."""
    if isinstance(sig, Signal):
        x, fps = sig.samples[:, channel], sig.fps
    else:
        x = np.asarray(sig, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, channel]
        if fps is None:
            raise ValueError("fps is required for raw arrays")
    n = x.shape[0]
    if n < 4:
        raise ValueError("power spectrum needs at least 4 samples")
    nfft = default_pad(n) if pad_to is None else max(int(pad_to), n)
    spec = np.fft.rfft(x - x.mean(), nfft)
    power = (spec.real**2 + spec.imag**2) / n
    freqs = np.fft.rfftfreq(nfft, d=1.0 / fps) * 60.0
    return Spectrum(power, freqs)


def dominant_frequency_bpm(sig: Signal | np.ndarray, fps: float | None = None,
                           band_bpm: tuple[float, float] | None = None) -> float:
    spec = power_spectrum(sig, fps=fps)
    p, f = spec.power, spec.freqs_bpm
    if band_bpm is not None:
        sel = (f >= band_bpm[0]) & (f <= band_bpm[1])
        p, f = p[sel], f[sel]
    return float(f[np.argmax(p)])
