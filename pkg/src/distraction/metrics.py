"""Evaluation metrics: rate estimation, MAE, RMSE, Pearson, SNR, WMAE and the F-test."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import dsp
from .signalio import Signal

HR_BAND_BPM = (42.0, 240.0)
BR_BAND_BPM = (5.0, 30.0)
WINDOW_SECONDS = 30.0
HARMONIC_HALF_WIDTH_BPM = 6.0


def _as_1d(x, fps=None):
    if isinstance(x, Signal):
        return x.samples[:, 0], x.fps
    return np.asarray(x, dtype=np.float64).reshape(-1), fps


def window_bounds(n: int, fps: float, seconds: float = WINDOW_SECONDS) -> list[tuple[int, int]]:
    """Non-overlapping evaluation windows; a final partial window is dropped."""
    length = int(round(seconds * fps))
    if n < length:
        return [(0, n)]
    return [(s, s + length) for s in range(0, n - length + 1, length)]


def rate_from_window(x: np.ndarray, fps: float, band_bpm=HR_BAND_BPM) -> float:
    """Dominant in-band frequency in BPM, or NaN for a flat window."""
    if np.ptp(x) == 0:
        return math.nan
    spec = dsp.power_spectrum(x, fps=fps)
    sel = (spec.freqs_bpm >= band_bpm[0]) & (spec.freqs_bpm <= band_bpm[1])
    if not np.any(sel):
        raise ValueError(f"band {band_bpm} BPM contains no spectral bins")
    return float(spec.freqs_bpm[sel][np.argmax(spec.power[sel])])


def estimate_rate(signal: Signal, band_bpm=HR_BAND_BPM,
                  window_seconds: float = WINDOW_SECONDS) -> np.ndarray:
    """Per-window rate estimates (BPM) from the periodogram peak inside ``band_bpm``."""
    x, fps = _as_1d(signal)
    if len(x) < 10 * fps:
        raise ValueError("rate estimation needs at least 10 s of signal")
    return np.array([rate_from_window(x[a:b], fps, band_bpm)
                     for a, b in window_bounds(len(x), fps, window_seconds)])


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 1:
        raise ValueError("need at least one value")
    return a, b


def mae(r, r_hat) -> float:
    r, r_hat = _check_pair(r, r_hat)
    return float(np.mean(np.abs(r - r_hat)))


def rmse(r, r_hat) -> float:
    r, r_hat = _check_pair(r, r_hat)
    return float(np.sqrt(np.mean((r - r_hat) ** 2)))


def pearson(r, r_hat) -> float:
    """Sample correlation; NaN when either input is constant or too short."""
    r, r_hat = _check_pair(r, r_hat)
    if r.size < 2:
        return math.nan
    a, b = r - r.mean(), r_hat - r_hat.mean()
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if den == 0:
        return math.nan
    return float(np.clip(np.sum(a * b) / den, -1.0, 1.0))


def snr(x, gt_hr: float, fps: float | None = None, band_bpm=HR_BAND_BPM,
        square_spectrum: bool = True) -> float:
    """Power around the first two harmonics of ``gt_hr`` versus the rest of the band, in dB.

    Each harmonic band spans +-6 BPM. By default the periodogram values are
    squared before summing; pass ``square_spectrum=False`` to sum the
    periodogram itself. Returns ``inf`` when nothing lies outside the bands.
    """
    x, fps = _as_1d(x, fps)
    if not band_bpm[0] <= gt_hr <= band_bpm[1]:
        raise ValueError(f"gt_hr {gt_hr} outside {band_bpm} BPM")
    spec = dsp.power_spectrum(x, fps=fps)
    f = spec.freqs_bpm
    s = spec.power**2 if square_spectrum else spec.power
    inband = (f >= band_bpm[0]) & (f <= band_bpm[1])
    hw = HARMONIC_HALF_WIDTH_BPM
    harm = (np.abs(f - gt_hr) <= hw) | (np.abs(f - 2 * gt_hr) <= hw)
    num = float(np.sum(s[inband & harm]))
    den = float(np.sum(s[inband & ~harm]))
    if den == 0:
        return math.inf if num > 0 else math.nan
    if num == 0:
        return -math.inf
    return 10.0 * math.log10(num / den)


def wmae(w, w_hat, fps: float | None = None, window_seconds: float = WINDOW_SECONDS) -> float:
    """Mean absolute waveform difference per 30 s window, averaged over windows."""
    w, fps_w = _as_1d(w, fps)
    w_hat, _ = _as_1d(w_hat, fps)
    w, w_hat = _check_pair(w, w_hat)
    if fps_w is None:
        return float(np.mean(np.abs(w - w_hat)))
    bounds = window_bounds(len(w), fps_w, window_seconds)
    return float(np.mean([np.mean(np.abs(w[a:b] - w_hat[a:b])) for a, b in bounds]))


def f_test(errors_a, errors_b) -> tuple[float, float]:
    """Variance-ratio F statistic and its two-sided p-value."""
    a = np.asarray(errors_a, dtype=np.float64).reshape(-1)
    b = np.asarray(errors_b, dtype=np.float64).reshape(-1)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least 2 values")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if vb == 0:
        raise ZeroDivisionError("second sample has zero variance")
    f = va / vb
    d1, d2 = a.size - 1, b.size - 1
    cdf = special.betainc(d1 / 2, d2 / 2, d1 * f / (d1 * f + d2))
    p = min(1.0, 2 * min(cdf, 1 - cdf))
    return float(f), float(p)


@dataclass
class MetricsReport:
    rates: np.ndarray
    truth: np.ndarray
    snrs: np.ndarray
    wmaes: np.ndarray
    window_seconds: float = WINDOW_SECONDS
    mae: float = field(init=False)
    rmse: float = field(init=False)
    rho: float = field(init=False)
    snr: float = field(init=False)
    wmae: float = field(init=False)

    def __post_init__(self):
        ok = np.isfinite(self.rates)
        if ok.any():
            self.mae = mae(self.truth[ok], self.rates[ok])
            self.rmse = rmse(self.truth[ok], self.rates[ok])
        else:
            self.mae = self.rmse = math.nan
        self.rho = pearson(self.truth[ok], self.rates[ok]) if ok.sum() >= 2 else math.nan
        finite = self.snrs[np.isfinite(self.snrs)]
        self.snr = float(np.mean(finite)) if finite.size else math.nan
        self.wmae = float(np.mean(self.wmaes)) if len(self.wmaes) else math.nan

    @property
    def num_windows(self) -> int:
        return len(self.rates)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["window", "start_sec", "rate_bpm", "truth_bpm", "abs_err_bpm",
                         "snr_db", "wmae", "rmse_bpm", "rho"])
            for i in range(self.num_windows):
                wr.writerow([i, i * self.window_seconds, self.rates[i], self.truth[i],
                             abs(self.rates[i] - self.truth[i]), self.snrs[i], self.wmaes[i],
                             "", ""])
            # the summary row carries MAE in the error column
            wr.writerow(["summary", "", "", "", self.mae, self.snr, self.wmae,
                         self.rmse, self.rho])


def evaluate(estimate: Signal, truth: Signal, band_bpm=HR_BAND_BPM,
             window_seconds: float = WINDOW_SECONDS, truth_rates=None) -> MetricsReport:
    """Score a normalized estimate against a normalized ground-truth waveform.

    Reference rates come from the ground-truth waveform's own spectrum unless
    ``truth_rates`` is given.
    """
    x, fps = _as_1d(estimate)
    g, _ = _as_1d(truth)
    x, g = _check_pair(x, g)
    bounds = window_bounds(len(x), fps, window_seconds)
    rates = np.array([rate_from_window(x[a:b], fps, band_bpm) for a, b in bounds])
    if truth_rates is None:
        truth_rates = np.array([rate_from_window(g[a:b], fps, band_bpm) for a, b in bounds])
    truth_rates = np.asarray(truth_rates, dtype=np.float64)
    snrs = np.array([snr(x[a:b], tr, fps, band_bpm=HR_BAND_BPM)
                     if HR_BAND_BPM[0] <= tr <= HR_BAND_BPM[1] else math.nan
                     for (a, b), tr in zip(bounds, truth_rates)])
    wmaes = np.array([np.mean(np.abs(x[a:b] - g[a:b])) for a, b in bounds])
    return MetricsReport(rates, truth_rates, snrs, wmaes, window_seconds)
