"""Inverse attention masks and the noise estimates derived from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signalio import MaskSequence, Signal, VideoTensor

MASK_SIZE = (34, 34)
DEFAULT_THRESHOLD = 0.1


@dataclass(frozen=True)
class InversionConfig:
    mode: str = "binary"
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.mode not in ("binary", "continuous"):
            raise ValueError(f"unknown inversion mode {self.mode!r}")
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")


def normalize_mask(raw: MaskSequence) -> MaskSequence:
    """Min-max scale every frame to [0, 1]; constant frames become all-zero."""
    d = raw.data
    lo = d.min(axis=(1, 2), keepdims=True)
    span = d.max(axis=(1, 2), keepdims=True) - lo
    out = np.where(span > 0, (d - lo) / np.where(span > 0, span, 1.0), 0.0)
    return MaskSequence(out, normalized=True)


def invert_mask(mask: MaskSequence, config: InversionConfig = InversionConfig()) -> MaskSequence:
    """Turn attention weights into inverse (distraction) weights.

    Binary mode keeps pixels whose attention is at most the threshold;
    continuous mode returns ``1 - A``.
    """
    if not mask.normalized:
        raise ValueError("invert_mask expects a normalized mask; call normalize_mask first")
    if config.mode == "binary":
        return MaskSequence((mask.data <= config.threshold).astype(np.float64), binary=True)
    return MaskSequence(1.0 - mask.data, normalized=True)


def _cubic_weights(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution weights for taps at offsets -1, 0, 1, 2."""
    d = np.stack([1 + t, t, 1 - t, 2 - t], axis=-1)
    w = np.where(
        d <= 1,
        (a + 2) * d**3 - (a + 3) * d**2 + 1,
        a * d**3 - 5 * a * d**2 + 8 * a * d - 4 * a,
    )
    return np.where(d < 2, w, 0.0)


def cubic_resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic ``n_out x n_in`` Catmull-Rom resampling operator.

    Output sample ``j`` sits at input coordinate ``j * (n_in - 1) / (n_out - 1)``
    so the end samples coincide; taps beyond the border are clamped.
    """
    if n_out == n_in:
        return np.eye(n_in)
    if n_out == 1:
        pos = np.array([(n_in - 1) / 2.0])
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    base = np.floor(pos).astype(int)
    frac = pos - base
    w = _cubic_weights(frac)
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for k, off in enumerate((-1, 0, 1, 2)):
        idx = np.clip(base + off, 0, n_in - 1)
        np.add.at(mat, (rows, idx), w[:, k])
    return mat


def downsample_frame(frame: np.ndarray, target: tuple[int, int] = MASK_SIZE) -> np.ndarray:
    """Bicubic (Catmull-Rom, a=-0.5) resize of an ``H x W`` or ``H x W x C`` frame."""
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape[:2]
    th, tw = target
    if th > h or tw > w:
        raise ValueError(f"target {target} is larger than the source {(h, w)}")
    ry = cubic_resize_matrix(h, th)
    rx = cubic_resize_matrix(w, tw)
    if frame.ndim == 2:
        return ry @ frame @ rx.T
    return np.einsum("ah,hwc,bw->abc", ry, frame, rx, optimize=True)


def downsample_video(video: VideoTensor, target: tuple[int, int] = MASK_SIZE) -> VideoTensor:
    t, h, w, c = video.shape
    if (h, w) == tuple(target):
        return video
    if target[0] > h or target[1] > w:
        raise ValueError(f"target {target} is larger than the source {(h, w)}")
    ry = cubic_resize_matrix(h, target[0])
    rx = cubic_resize_matrix(w, target[1])
    out = np.einsum("ah,thwc,bw->tabc", ry, video.data.astype(np.float64), rx,
                    optimize=True)
    return VideoTensor(out, video.fps)


def downsample_mask(mask: MaskSequence, target: tuple[int, int] = MASK_SIZE) -> MaskSequence:
    """Resize raw attention weights; the result is unnormalized (cubic overshoot)."""
    t, h, w = mask.data.shape
    if (h, w) == tuple(target):
        return mask
    if target[0] > h or target[1] > w:
        raise ValueError(f"target {target} is larger than the source {(h, w)}")
    ry = cubic_resize_matrix(h, target[0])
    rx = cubic_resize_matrix(w, target[1])
    return MaskSequence(np.einsum("ah,thw,bw->tab", ry, mask.data, rx, optimize=True))


def noise_estimate(video: VideoTensor, inverse_mask: MaskSequence) -> Signal:
    """Spatial average of the frames weighted by the inverse mask.

    ``N[t, c] = sum_{x,y} I[t, y, x, c] * M[t, y, x] / (H * W)``; the divisor is
    the full frame area rather than the mask support.
    """
    t, h, w, c = video.shape
    if inverse_mask.data.shape != (t, h, w):
        raise ValueError(
            f"mask shape {inverse_mask.data.shape} does not match video frames {(t, h, w)}")
    frames = video.data.astype(np.float64)
    n = np.einsum("thwc,thw->tc", frames, inverse_mask.data) / (h * w)
    names = ("R", "G", "B") if c == 3 else ("I",)
    return Signal(n, video.fps, names)


def central_block(shape: tuple[int, int]) -> tuple[slice, slice]:
    """Middle half of the frame in each dimension, floor-centered."""
    h, w = shape
    bh, bw = h // 2, w // 2
    y0, x0 = (h - bh) // 2, (w - bw) // 2
    return slice(y0, y0 + bh), slice(x0, x0 + bw)


def region_partition(mask: MaskSequence, mode: str) -> MaskSequence:
    """Keep only the central block ("center") or everything but it ("edges")."""
    if mode not in ("center", "edges", "all"):
        raise ValueError(f"unknown region {mode!r}")
    if mode == "all":
        return mask
    ys, xs = central_block(mask.data.shape[1:])
    inside = np.zeros(mask.data.shape[1:], dtype=bool)
    inside[ys, xs] = True
    keep = inside if mode == "center" else ~inside
    return MaskSequence(np.where(keep[None], mask.data, 0.0),
                        normalized=mask.normalized, binary=mask.binary)
