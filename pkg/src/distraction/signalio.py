"""Core containers, on-disk formats and resampling.

Two interchange formats are supported:

* VTF, a tiny binary container for frame tensors and mask sequences::

      b"VTF1" | u32 T | u32 H | u32 W | u32 C | f64 fps | f32[T*H*W*C]

  All fields are little-endian and the payload is ordered t, y, x, c with
  ``c`` varying fastest. Masks are stored with ``C == 1``.
* Signal CSV files with a ``t_sec,<ch0>,<ch1>,...`` header.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VTF_MAGIC = b"VTF1"
_VTF_HEADER = struct.Struct("<4s4Id")


class FormatError(ValueError):
    """Raised when a file does not follow the expected on-disk layout."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled, possibly multi-channel time series.

    ``samples`` is always stored as a read-only float64 array of shape
    ``(num_samples, num_channels)``; 1-D input is promoted to one channel.
    """

    samples: np.ndarray
    fps: float
    channel_names: tuple[str, ...] = ()

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got shape {s.shape}")
        if s.shape[0] < 1:
            raise ValueError("a signal needs at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("signal contains non-finite samples")
        if not (self.fps > 0 and np.isfinite(self.fps)):
            raise ValueError(f"fps must be positive, got {self.fps}")
        names = tuple(self.channel_names)
        if not names:
            names = tuple(f"ch{i}" for i in range(s.shape[1]))
        if len(names) != s.shape[1]:
            raise ValueError(
                f"{len(names)} channel names for {s.shape[1]} channels")
        object.__setattr__(self, "samples", _frozen(s))
        object.__setattr__(self, "fps", float(self.fps))
        object.__setattr__(self, "channel_names", names)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        """Time span covered by the samples, in seconds."""
        return (self.num_samples - 1) / self.fps

    def channel(self, idx: int | str = 0) -> np.ndarray:
        if isinstance(idx, str):
            idx = self.channel_names.index(idx)
        return self.samples[:, idx]

    def with_samples(self, samples, channel_names=None) -> "Signal":
        """Return a new signal at the same rate with replaced samples."""
        samples = np.asarray(samples, dtype=np.float64)
        if channel_names is None:
            ncols = samples.shape[1] if samples.ndim == 2 else 1
            channel_names = self.channel_names if ncols == self.num_channels else ()
        return Signal(samples, self.fps, tuple(channel_names))


@dataclass(frozen=True)
class VideoTensor:
    """``T x H x W x C`` float32 frames in [0, 1]; values are clamped on construction."""

    data: np.ndarray
    fps: float

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float32)
        if d.ndim != 4:
            raise ValueError(f"video data must be 4-D (T,H,W,C), got {d.shape}")
        if min(d.shape[:3]) < 1 or d.shape[3] not in (1, 3):
            raise ValueError(f"invalid video shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("video contains non-finite values")
        if not (self.fps > 0 and np.isfinite(self.fps)):
            raise ValueError(f"fps must be positive, got {self.fps}")
        np.clip(d, 0.0, 1.0, out=d)
        object.__setattr__(self, "data", _frozen(d))
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class MaskSequence:
    """Per-frame single-channel weights of shape ``T x Hm x Wm``."""

    data: np.ndarray
    normalized: bool = False
    binary: bool = False

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64)
        if d.ndim == 4 and d.shape[3] == 1:
            d = d[..., 0]
        if d.ndim != 3 or min(d.shape) < 1:
            raise ValueError(f"mask data must be (T,H,W), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("mask contains non-finite weights")
        if self.binary and not np.all((d == 0) | (d == 1)):
            raise ValueError("binary mask must contain only 0 and 1")
        if (self.normalized or self.binary) and (d.min() < 0 or d.max() > 1):
            raise ValueError("normalized mask weights must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(d))
        object.__setattr__(self, "normalized", bool(self.normalized or self.binary))

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @classmethod
    def infer(cls, data) -> "MaskSequence":
        """Build a mask, setting the flags from the values themselves."""
        d = np.asarray(data, dtype=np.float64)
        binary = bool(np.all((d == 0) | (d == 1)))
        normalized = bool(d.size and d.min() >= 0 and d.max() <= 1)
        return cls(d, normalized=normalized, binary=binary)


# --------------------------------------------------------------------------
# VTF container

def _write_vtf(data: np.ndarray, fps: float, path) -> None:
    t, h, w, c = data.shape
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_VTF_HEADER.pack(VTF_MAGIC, t, h, w, c, float(fps)))
        fh.write(payload)


def _read_vtf(path) -> tuple[np.ndarray, float]:
    raw = Path(path).read_bytes()
    if len(raw) < _VTF_HEADER.size:
        raise FormatError(
            f"{path}: truncated header at byte offset {len(raw)} "
            f"(need {_VTF_HEADER.size} bytes)")
    magic, t, h, w, c, fps = _VTF_HEADER.unpack_from(raw, 0)
    if magic != VTF_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte offset 0")
    count = t * h * w * c
    expected = _VTF_HEADER.size + 4 * count
    if len(raw) < expected:
        raise FormatError(
            f"{path}: truncated payload at byte offset {len(raw)}, "
            f"expected {expected} bytes for {t}x{h}x{w}x{c}")
    if len(raw) > expected:
        raise FormatError(f"{path}: trailing data at byte offset {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=_VTF_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(data))
    if bad.size:
        off = _VTF_HEADER.size + 4 * int(bad[0])
        raise FormatError(f"{path}: non-finite value at byte offset {off}")
    return data.astype(np.float32).reshape(t, h, w, c), fps


def read_video_tensor(path) -> VideoTensor:
    data, fps = _read_vtf(path)
    if data.shape[3] not in (1, 3):
        raise FormatError(f"{path}: unsupported channel count {data.shape[3]} at byte offset 16")
    if data.min() < 0 or data.max() > 1:
        data = np.clip(data, 0.0, 1.0)
    return VideoTensor(data, fps)


def write_video_tensor(tensor: VideoTensor, path) -> None:
    _write_vtf(tensor.data, tensor.fps, path)


def read_mask(path) -> MaskSequence:
    """Read a ``C == 1`` VTF file as a mask; flags are inferred from the values."""
    data, _ = _read_vtf(path)
    if data.shape[3] != 1:
        raise FormatError(f"{path}: mask files need C=1, got C={data.shape[3]} at byte offset 16")
    return MaskSequence.infer(data[..., 0].astype(np.float64))


def write_mask(mask: MaskSequence, path, fps: float = 0.0) -> None:
    _write_vtf(mask.data[..., None], fps, path)


# --------------------------------------------------------------------------
# Signal CSV

def write_signal_csv(signal: Signal, path) -> None:
    t = np.arange(signal.num_samples) / signal.fps
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_sec", *signal.channel_names])
        for ti, row in zip(t, signal.samples):
            writer.writerow([repr(float(ti)), *(repr(float(v)) for v in row)])


def read_signal_csv(path) -> Signal:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "t_sec":
        raise FormatError(f"{path}: header must start with 't_sec'")
    header = rows[0]
    body = [r for r in rows[1:] if r]
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise FormatError(
                f"{path}:{lineno}: ragged row with {len(r)} fields, expected {len(header)}")
    if not body:
        raise FormatError(f"{path}: no samples")
    arr = np.array(body, dtype=np.float64)
    t = arr[:, 0]
    if len(t) > 1:
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise FormatError(f"{path}:{int(np.argmax(dt <= 0)) + 3}: non-monotone t_sec")
        fps = 1.0 / float(np.median(dt))
        # timestamps carry rounding error; recover rates like 30 or 29.97 exactly
        snapped = round(fps, 6)
        if abs(fps - snapped) <= 1e-9 * fps:
            fps = snapped
    else:
        fps = 1.0
    return Signal(arr[:, 1:], fps, tuple(header[1:]))


# --------------------------------------------------------------------------

def resample(signal: Signal, target_fps: float) -> Signal:
    """Linearly interpolate ``signal`` onto a uniform grid at ``target_fps``."""
    if not target_fps > 0:
        raise ValueError(f"target_fps must be positive, got {target_fps}")
    if signal.num_samples < 2:
        raise ValueError("resampling needs at least 2 input samples")
    if target_fps == signal.fps:
        return Signal(signal.samples.copy(), signal.fps, signal.channel_names)
    t_in = np.arange(signal.num_samples) / signal.fps
    # small slack so that an exact multiple of the output period is kept
    n_out = int(np.floor(signal.duration * target_fps + 1e-9)) + 1
    t_out = np.arange(n_out) / target_fps
    out = np.column_stack([np.interp(t_out, t_in, signal.samples[:, c])
                           for c in range(signal.num_channels)])
    return Signal(out, target_fps, signal.channel_names)
