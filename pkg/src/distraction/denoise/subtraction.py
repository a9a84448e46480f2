"""Direct noise subtraction in the frequency or time domain."""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .. import dsp
from ..signalio import Signal


def _check_pair(estimate: Signal, noise: Signal):
    if estimate.num_samples != noise.num_samples:
        raise ValueError(
            f"estimate has {estimate.num_samples} samples, noise has {noise.num_samples}")
    if not np.isclose(estimate.fps, noise.fps, rtol=1e-9):
        raise ValueError(f"fps mismatch: {estimate.fps} vs {noise.fps}")


def stack_inputs(estimate: Signal, noise: Signal | None = None) -> Signal:
    """Feature sequence for the denoiser: the estimate first, then any noise channels."""
    est = estimate.samples[:, :1]
    if noise is None:
        return Signal(est, estimate.fps, ("estimate",))
    _check_pair(estimate, noise)
    names = ("estimate",) + tuple(f"noise_{n}" for n in noise.channel_names)
    return Signal(np.hstack([est, noise.samples]), estimate.fps, names)


def freq_sub(estimate: Signal, noise: Signal, band=dsp.HR_BAND_HZ) -> Signal:
    """Magnitude spectral subtraction of the channel-averaged noise spectrum.

    The noise magnitude is scaled by the least-squares gain that best explains
    the in-band estimate magnitude, subtracted and floored at zero; the
    estimate's own phase is kept and the result is bandpassed.
    """
    _check_pair(estimate, noise)
    n = estimate.num_samples
    spec = np.fft.rfft(estimate.samples[:, 0])
    noise_mag = np.abs(np.fft.rfft(noise.samples, axis=0)).mean(axis=1)
    mag = np.abs(spec)
    freqs = np.fft.rfftfreq(n, d=1.0 / estimate.fps)
    inband = (freqs >= band[0]) & (freqs <= band[1])
    denom = np.sum(noise_mag[inband] ** 2)
    beta = np.sum(mag[inband] * noise_mag[inband]) / denom if denom > 0 else 0.0
    cleaned = np.maximum(mag - beta * noise_mag, 0.0)
    out = np.fft.irfft(cleaned * np.exp(1j * np.angle(spec)), n)
    return dsp.bandpass(Signal(out, estimate.fps, ("bvp",)), *band)


def wave_sub(estimate: Signal, noise: Signal, renormalize: bool = True) -> Signal:
    """Remove the least-squares projection of the estimate onto the noise channels."""
    _check_pair(estimate, noise)
    y = estimate.samples[:, 0]
    a = noise.samples
    q, r, piv = linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    # collinear or empty noise channels are dropped
    rank = int(np.sum(diag > 1e-10 * max(diag.max(initial=0.0), 1e-300))) if diag.size else 0
    fit = q[:, :rank] @ (q[:, :rank].T @ y) if rank else np.zeros_like(y)
    resid = y - fit
    if np.sqrt(np.mean(resid**2)) <= 1e-10 * np.sqrt(np.mean(y**2)):
        resid = np.zeros_like(y)
    out = Signal(resid, estimate.fps, ("bvp",))
    return dsp.normalize_acdc(out) if renormalize else out
