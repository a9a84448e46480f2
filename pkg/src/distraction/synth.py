"""Synthetic scenes with known pulse, breathing, flicker and motion.

A scene is a textureless "head" (a skin rectangle inside a ring of hair) in
front of a flat background. Illumination flicker is added to every pixel,
so the regions outside the skin carry the same noise as the skin itself.
Horizontal head motion shifts the head layers and, through a shading term,
changes the brightness of skin and hair alike.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import dsp
from .attention import _cubic_weights
from .signalio import MaskSequence, Signal, VideoTensor

log = logging.getLogger(__name__)

# stream ids for the counter-based random generators
_SENSOR, _FLICKER, _MOTION = 1, 2, 3


@dataclass(frozen=True)
class PulseTemplate:
    """Shape of a single beat as a function of beat phase in [0, 1).

    The beat is an asymmetric systolic lobe plus a reflected (diastolic)
    lobe of relative height ``notch_depth``; the dip between the two is the
    dicrotic notch. ``notch_depth = 0`` leaves a single-lobe beat.
    """

    systolic_pos: float = 0.18
    systolic_rise: float = 0.055
    systolic_fall: float = 0.10
    diastolic_pos: float = 0.47
    diastolic_width: float = 0.07
    notch_depth: float = 0.45

    def __post_init__(self):
        if not 0 <= self.notch_depth < 1:
            raise ValueError(f"notch_depth must be in [0, 1), got {self.notch_depth}")

    def __call__(self, phase: np.ndarray) -> np.ndarray:
        u = np.mod(phase, 1.0)
        d = np.mod(u - self.systolic_pos + 0.5, 1.0) - 0.5
        width = np.where(d < 0, self.systolic_rise, self.systolic_fall)
        # rescale each half-lobe to run from 1 at the peak to 0 at the phase wrap,
        # so beats join continuously whatever the two widths
        floor = np.exp(-0.5 * (0.5 / width) ** 2)
        out = (np.exp(-0.5 * (d / width) ** 2) - floor) / (1.0 - floor)
        if self.notch_depth > 0:
            d2 = np.mod(u - self.diastolic_pos + 0.5, 1.0) - 0.5
            out = out + self.notch_depth * np.exp(-0.5 * (d2 / self.diastolic_width) ** 2)
        return out


def _rate_curve(hr_knots, t: np.ndarray) -> np.ndarray:
    knots = np.asarray(hr_knots, dtype=np.float64).reshape(-1, 2)
    if knots.shape[0] == 1:
        return np.full_like(t, knots[0, 1])
    return np.interp(t, knots[:, 0], knots[:, 1])


def pulse_waveform(hr_bpm, template: PulseTemplate = PulseTemplate(), fps: float = 30.0,
                   duration: float = 30.0) -> Signal:
    """Render beats at the instantaneous rate by accumulating phase.

    ``hr_bpm`` is either a constant or a sequence of ``(t_sec, bpm)`` knots
    interpolated linearly.
    """
    n = int(round(duration * fps))
    if n < 2:
        raise ValueError(f"duration {duration} s is too short")
    t = np.arange(n) / fps
    knots = [(0.0, float(hr_bpm))] if np.isscalar(hr_bpm) else hr_bpm
    rate = _rate_curve(knots, t)
    if rate.min() < 42 or rate.max() > 240:
        raise ValueError(f"heart rate must stay within [42, 240] BPM, got "
                         f"[{rate.min():.1f}, {rate.max():.1f}]")
    phase = np.concatenate([[0.0], np.cumsum(rate[:-1] / 60.0 / fps)])
    return dsp.normalize_acdc(Signal(template(phase), fps, ("pulse",)))


def breathing_waveform(br_bpm: float, fps: float = 30.0, duration: float = 30.0) -> Signal:
    """Breathing sinusoid with a 10 % second harmonic, peak-normalized."""
    if not 5 <= br_bpm <= 30:
        raise ValueError(f"breathing rate must be within [5, 30] BPM, got {br_bpm}")
    n = int(round(duration * fps))
    if n < 2:
        raise ValueError(f"duration {duration} s is too short")
    w = 2 * np.pi * br_bpm / 60.0 * np.arange(n) / fps
    x = np.sin(w) + 0.1 * np.sin(2 * w)
    return Signal(x / np.abs(x).max(), fps, ("breathing",))


@dataclass(frozen=True)
class SceneConfig:
    frames: int = 900
    height: int = 64
    width: int = 64
    fps: float = 30.0
    hr_knots: tuple = ((0.0, 72.0),)
    br_bpm: float = 15.0
    # skin rectangle as (top, left, height, width); hair surrounds it
    skin_rect: tuple = (20, 24, 24, 16)
    hair_margin: int = 4
    skin_color: tuple = (0.70, 0.50, 0.40)
    hair_color: tuple = (0.20, 0.28, 0.12)
    background: tuple = (0.45, 0.45, 0.48)
    pulse_amp: tuple = (0.004, 0.008, 0.002)
    flicker_amp: float = 0.008
    flicker_band: tuple = (0.6, 3.0)
    multiplicative_flicker: bool = False
    motion_amp: float = 0.0
    motion_band: tuple = (0.6, 3.0)
    # relative brightness change of head pixels per pixel of displacement
    shading_gain: float = 0.02
    sensor_noise_std: float = 0.002
    notch_depth: float = 0.45
    seed: int = 0

    def __post_init__(self):
        top, left, h, w = self.skin_rect
        m = self.hair_margin
        if min(h, w) < 1 or top - m < 0 or left - m < 0:
            raise ValueError(f"skin_rect {self.skin_rect} with hair margin {m} leaves the frame")
        if top + h + m > self.height or left + w + m > self.width:
            raise ValueError(f"skin_rect {self.skin_rect} with hair margin {m} leaves the frame")
        # motion must keep the whole head, plus the cubic support, inside
        reach = int(np.ceil(self.motion_amp)) + 2
        if left - m - reach < 0 or left + w + m + reach > self.width:
            raise ValueError(
                f"motion_amp {self.motion_amp} moves skin_rect {self.skin_rect} out of the frame")
        for name in ("flicker_amp", "motion_amp", "sensor_noise_std", "shading_gain"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if min(self.pulse_amp) < 0:
            raise ValueError("pulse amplitudes must be >= 0")

    @property
    def duration(self) -> float:
        return self.frames / self.fps

    def replace(self, **changes) -> "SceneConfig":
        return SceneConfig(**{**asdict(self), **changes})

    # flat key=value files -------------------------------------------------

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "hr_knots":
                v = ",".join(f"{t:g}:{b:g}" for t, b in v)
            elif isinstance(v, tuple):
                v = ",".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "SceneConfig":
        types = {f.name: f for f in fields(cls)}
        defaults = cls()
        kw = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            default = getattr(defaults, key)
            if key == "hr_knots":
                kw[key] = tuple(tuple(float(p) for p in item.split(":")) for item in val.split(","))
            elif isinstance(default, bool):
                if val.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(f"line {lineno}: {key} needs a boolean, got {val!r}")
                kw[key] = val.lower() in ("true", "1")
            elif isinstance(default, tuple):
                conv = int if all(isinstance(x, int) for x in default) else float
                kw[key] = tuple(conv(p) for p in val.split(","))
            elif isinstance(default, int):
                kw[key] = int(val)
            else:
                kw[key] = float(val)
        return cls(**kw)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "SceneConfig":
        with open(path) as fh:
            return cls.loads(fh.read())


def _band_noise(seed: int, stream: int, n: int, fps: float, band) -> np.ndarray:
    """Band-limited Gaussian noise with unit peak magnitude."""
    pad = int(fps * 4)
    white = np.random.default_rng([seed, stream]).standard_normal(n + 2 * pad)
    x = dsp.bandpass(Signal(white, fps), *band).samples[pad:pad + n, 0]
    return x / np.abs(x).max()


def _shift_columns(layers: np.ndarray, dx: float) -> np.ndarray:
    """Translate ``layers`` (H, W, K) right by ``dx`` pixels with a Catmull-Rom kernel."""
    w = layers.shape[1]
    src = np.arange(w) - dx
    base = np.floor(src).astype(int)
    wts = _cubic_weights(src - base)
    out = np.zeros_like(layers)
    for k, off in enumerate((-1, 0, 1, 2)):
        idx = np.clip(base + off, 0, w - 1)
        out += layers[:, idx, :] * wts[:, k][None, :, None]
    return out


@dataclass(frozen=True)
class Scene:
    video: VideoTensor
    attention: MaskSequence
    pulse: Signal
    breathing: Signal
    flicker: Signal
    motion: Signal
    config: SceneConfig

    def __iter__(self):
        # unpacks as (video, gt_attention, gt_pulse, gt_breathing, gt_flicker)
        return iter((self.video, self.attention, self.pulse, self.breathing, self.flicker))


def render_scene(config: SceneConfig = SceneConfig()) -> Scene:
    """Render a scene and all of its ground truth signals.

    Rendering is deterministic in ``config.seed``; sensor noise for frame
    ``t`` is drawn from a generator keyed on ``(seed, t)`` so frames can be
    produced independently.
    """
    cfg = config
    n, fps = cfg.frames, cfg.fps
    pulse = pulse_waveform(cfg.hr_knots, PulseTemplate(notch_depth=cfg.notch_depth),
                           fps, n / fps)
    breathing = breathing_waveform(cfg.br_bpm, fps, n / fps)
    flicker = cfg.flicker_amp * _band_noise(cfg.seed, _FLICKER, n, fps, cfg.flicker_band)
    wander = _band_noise(cfg.seed, _MOTION, n, fps, cfg.motion_band)
    motion = cfg.motion_amp * (0.3 * breathing.samples[:, 0] + 0.7 * wander)

    h, w = cfg.height, cfg.width
    top, left, sh, sw = cfg.skin_rect
    m = cfg.hair_margin
    skin = np.zeros((h, w))
    skin[top:top + sh, left:left + sw] = 1.0
    head = np.zeros((h, w))
    head[top - m:top + sh + m, left - m:left + sw + m] = 1.0
    color = np.where(skin[..., None] > 0, np.asarray(cfg.skin_color),
                     head[..., None] * np.asarray(cfg.hair_color))
    # layers: head colour (3), skin indicator, head indicator
    layers = np.concatenate([color, skin[..., None], head[..., None]], axis=2)
    bg = np.asarray(cfg.background)
    pulse_amp = np.asarray(cfg.pulse_amp)
    p = pulse.samples[:, 0]

    frames = np.empty((n, h, w, 3), dtype=np.float32)
    att = np.empty((n, h, w))
    clipped = 0
    for t in range(n):
        lay = _shift_columns(layers, motion[t])
        col, sk, hd = lay[..., :3], lay[..., 3], lay[..., 4]
        frame = bg * (1.0 - hd[..., None]) + col * (1.0 + cfg.shading_gain * motion[t])
        frame = frame + sk[..., None] * (pulse_amp * p[t])
        if cfg.multiplicative_flicker:
            frame = frame * (1.0 + flicker[t])
        else:
            frame = frame + flicker[t]
        if cfg.sensor_noise_std > 0:
            rng = np.random.default_rng([cfg.seed, _SENSOR, t])
            frame = frame + rng.normal(0.0, cfg.sensor_noise_std, frame.shape)
        clipped += int(np.count_nonzero((frame < 0) | (frame > 1)))
        frames[t] = frame
        att[t] = np.clip(sk, 0.0, 1.0)
    if clipped:
        log.warning("%d pixel values clamped to [0, 1]", clipped)
    return Scene(
        video=VideoTensor(frames, fps),
        attention=MaskSequence(att, normalized=True),
        pulse=pulse,
        breathing=breathing,
        flicker=Signal(flicker, fps, ("flicker",)),
        motion=Signal(motion, fps, ("motion",)),
        config=cfg,
    )


def corrupt_mask(mask: MaskSequence, dropout_fraction: float, seed: int = 0) -> MaskSequence:
    """Zero out a fixed fraction of each frame's support pixels."""
    if not 0 <= dropout_fraction < 1:
        raise ValueError(f"dropout_fraction must be in [0, 1), got {dropout_fraction}")
    out = np.array(mask.data)
    for t in range(out.shape[0]):
        support = np.flatnonzero(out[t] > 0)
        k = int(round(dropout_fraction * support.size))
        if k:
            rng = np.random.default_rng([seed, t])
            drop = rng.choice(support, size=k, replace=False)
            out[t].flat[drop] = 0.0
    return MaskSequence(out, normalized=mask.normalized, binary=mask.binary)
