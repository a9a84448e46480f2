"""Classical pulse extraction baselines: spatial averaging, CHROM, POS and ICA."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import dsp
from .signalio import MaskSequence, Signal, VideoTensor

RGB = ("R", "G", "B")
HR_BAND_BPM = (42.0, 240.0)


class RankDeficientError(ValueError):
    """Raised when the observations do not span as many dimensions as channels."""


def spatial_average(video: VideoTensor, roi: MaskSequence) -> Signal:
    """Per-frame mean colour of the pixels selected by a binary ROI."""
    t, h, w, c = video.shape
    if roi.data.shape != (t, h, w):
        raise ValueError(f"roi shape {roi.data.shape} does not match video {(t, h, w)}")
    sel = roi.data > 0.5
    counts = sel.sum(axis=(1, 2))
    if np.any(counts == 0):
        raise ValueError(f"empty roi in frame {int(np.argmax(counts == 0))}")
    sums = np.einsum("thwc,thw->tc", video.data.astype(np.float64), sel.astype(np.float64))
    names = RGB if c == 3 else ("I",)
    return Signal(sums / counts[:, None], video.fps, names)


def _check_rgb(trace: Signal, min_seconds: float = 1.6) -> np.ndarray:
    if trace.num_channels != 3:
        raise ValueError(f"expected an RGB trace, got {trace.num_channels} channels")
    x = trace.samples
    if np.any(x.mean(axis=0) <= 0):
        raise ValueError("RGB trace channels must have strictly positive means")
    if trace.num_samples < int(round(min_seconds * trace.fps)):
        raise ValueError(f"trace shorter than {min_seconds} s")
    return x


def chrom(trace: Signal, band=dsp.HR_BAND_HZ) -> Signal:
    """Chrominance-based pulse signal.

    Channels are band-limited (keeping their DC level so the per-window mean
    division stays meaningful), cut into 1.6 s windows with a 0.8 s hop,
    mean-normalized and band-passed inside each window, projected onto the
    two chrominance axes and combined with the ratio of their deviations.
    Windows are recombined by Hann overlap-add.
    """
    x = _check_rgb(trace)
    fps = trace.fps
    half = int(round(0.8 * fps))
    length = 2 * half
    ac = dsp.bandpass(trace, *band).samples
    x = ac + x.mean(axis=0)

    segments = []
    for w in dsp.window(x, length, 0.5):
        xn = w.data / w.data.mean(axis=0)
        y = dsp.bandpass(Signal(xn, fps), *band).samples
        yr, yg, yb = y.T
        a = 3 * yr - 2 * yg
        b = 1.5 * yr + yg - 1.5 * yb
        sb = b.std()
        if sb == 0:
            s = np.zeros(length)
        else:
            alpha = a.std() / sb
            s = 3 * (1 - alpha / 2) * yr - 2 * (1 + alpha / 2) * yg + 1.5 * alpha * yb
        segments.append(dsp.Window(w.start, s))
    out = dsp.overlap_add_hann(segments, half, n=trace.num_samples, fps=fps)
    return Signal(out.samples, fps, ("bvp",))


def pos(trace: Signal) -> Signal:
    """Plane-orthogonal-to-skin pulse signal with a one-frame hop."""
    x = _check_rgb(trace)
    n = trace.num_samples
    length = int(round(1.6 * trace.fps))
    # (num_windows, 3, length)
    win = sliding_window_view(x, length, axis=0)
    cn = win / win.mean(axis=2, keepdims=True)
    xs = cn[:, 1] - cn[:, 2]
    ys = -2 * cn[:, 0] + cn[:, 1] + cn[:, 2]
    sx, sy = xs.std(axis=1), ys.std(axis=1)
    ratio = np.divide(sx, sy, out=np.zeros_like(sx), where=sy > 0)
    s = xs + ratio[:, None] * ys
    s -= s.mean(axis=1, keepdims=True)
    h = np.zeros(n)
    for t in range(s.shape[0]):
        h[t:t + length] += s[t]
    return Signal(h, trace.fps, ("bvp",))


# --------------------------------------------------------------------------
# JADE

def _whiten(x: np.ndarray):
    cov = x @ x.T / x.shape[1]
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= 0 or evals[-1] / evals[0] > 1e12:
        raise RankDeficientError(
            f"covariance is rank deficient (eigenvalues {evals.tolist()})")
    return (evecs / np.sqrt(evals)).T


def _cumulant_matrices(z: np.ndarray) -> np.ndarray:
    """Fourth-order cumulant matrices of whitened data, stacked side by side."""
    k, n = z.shape
    eye = np.eye(k)
    mats = []
    for i in range(k):
        zi = z[i]
        q = ((zi * zi) * z) @ z.T / n - eye - 2 * np.outer(eye[:, i], eye[:, i])
        mats.append(q)
        for j in range(i):
            zij = zi * z[j]
            q = ((zij * z) @ z.T / n - np.outer(eye[:, i], eye[:, j])
                 - np.outer(eye[:, j], eye[:, i]))
            mats.append(np.sqrt(2) * q)
    return np.hstack(mats)


def _joint_diagonalize(cm: np.ndarray, tol: float = 1e-8, max_sweeps: int = 100):
    k = cm.shape[0]
    nmat = cm.shape[1] // k
    v = np.eye(k)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                ip = np.arange(p, k * nmat, k)
                iq = np.arange(q, k * nmat, k)
                g = np.vstack([cm[p, ip] - cm[q, iq], cm[p, iq] + cm[q, ip]])
                gg = g @ g.T
                ton = gg[0, 0] - gg[1, 1]
                toff = gg[0, 1] + gg[1, 0]
                # quarter-angle form; stays correct when ton < 0 and toff == 0
                theta = 0.25 * np.arctan2(toff, ton)
                if abs(theta) > tol:
                    rotated = True
                    c, s = np.cos(theta), np.sin(theta)
                    rot = np.array([[c, -s], [s, c]])
                    v[:, [p, q]] = v[:, [p, q]] @ rot
                    cm[[p, q], :] = rot.T @ cm[[p, q], :]
                    cp, cq = cm[:, ip].copy(), cm[:, iq]
                    cm[:, ip] = c * cp + s * cq
                    cm[:, iq] = -s * cp + c * cq
        if not rotated:
            break
    return v


def jade_unmixing(x: np.ndarray) -> np.ndarray:
    """Unmixing matrix ``B`` such that ``B @ (x - mean)`` are the independent components.

    ``x`` has one observation channel per row.
    """
    x = np.asarray(x, dtype=np.float64)
    k, n = x.shape
    if k < 2 or n < 10 * k:
        raise ValueError(f"JADE needs >= 2 channels and >= {10 * k} samples, got {x.shape}")
    x = x - x.mean(axis=1, keepdims=True)
    w = _whiten(x)
    cm = _cumulant_matrices(w @ x)
    v = _joint_diagonalize(cm)
    return v.T @ w


def jade(sources: Signal) -> Signal:
    """Independent components (arbitrary order, sign and scale) of a 2-3 channel signal."""
    if sources.num_channels not in (2, 3):
        raise ValueError(f"jade supports 2 or 3 channels, got {sources.num_channels}")
    x = sources.samples.T
    b = jade_unmixing(x)
    comps = b @ (x - x.mean(axis=1, keepdims=True))
    return Signal(comps.T, sources.fps, tuple(f"ic{i}" for i in range(comps.shape[0])))


def ica_pulse(trace: Signal, band_bpm=HR_BAND_BPM) -> Signal:
    """Pick the JADE component with the strongest in-band spectral peak.

    The component is signed so that it correlates positively with green.
    """
    if trace.num_channels != 3:
        raise ValueError(f"expected an RGB trace, got {trace.num_channels} channels")
    lam = dsp.detrend_lambda_for_fps(trace.fps)
    d = dsp.detrend(trace, dsp.DetrendConfig(lam)).samples
    sd = d.std(axis=0)
    z = (d - d.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    comps = jade(Signal(z, trace.fps)).samples
    peaks = []
    for c in range(comps.shape[1]):
        spec = dsp.power_spectrum(comps[:, c], fps=trace.fps)
        sel = (spec.freqs_bpm >= band_bpm[0]) & (spec.freqs_bpm <= band_bpm[1])
        peaks.append(spec.power[sel].max())
    best = comps[:, int(np.argmax(peaks))]
    if np.dot(best - best.mean(), z[:, 1]) < 0:
        best = -best
    return Signal(best, trace.fps, ("bvp",))


def green(trace: Signal) -> Signal:
    """Green channel of an RGB trace, the simplest preliminary pulse estimate."""
    return Signal(trace.samples[:, 1 if trace.num_channels == 3 else 0], trace.fps, ("bvp",))


EXTRACTORS = {"chrom": chrom, "pos": pos, "ica": ica_pulse, "mean": green}
