"""Glue between the building blocks: the end-to-end paths used by the CLI and the demos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp, metrics
from .attention import (MASK_SIZE, InversionConfig, downsample_mask, downsample_video,
                        invert_mask, noise_estimate, normalize_mask, region_partition)
from .denoise import (LstmDenoiser, TrainConfig, denoise_lstm, freq_sub, lstm_train,
                      stack_inputs, training_windows, wave_sub)
from .extractors import EXTRACTORS, spatial_average
from .signalio import MaskSequence, Signal, VideoTensor
from .synth import Scene, SceneConfig, render_scene

METHODS = tuple(EXTRACTORS)
DENOISERS = ("none", "freq-sub", "wave-sub", "lstm", "lstm-no-noise")


def roi_from_attention(attention: MaskSequence) -> MaskSequence:
    """Binary skin ROI: pixels whose normalized attention exceeds one half."""
    norm = normalize_mask(attention)
    roi = (norm.data > 0.5).astype(np.float64)
    return MaskSequence(roi, binary=True)


def extract(video: VideoTensor, attention: MaskSequence, method: str = "chrom",
            lam: float | None = None, band=dsp.HR_BAND_HZ) -> Signal:
    """Spatially average the ROI, run an extractor and preprocess the result."""
    if method not in EXTRACTORS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    trace = spatial_average(video, roi_from_attention(attention))
    raw = EXTRACTORS[method](trace)
    return dsp.preprocess(raw, lam, band)


def noise(video: VideoTensor, attention: MaskSequence,
          inversion: InversionConfig = InversionConfig(), region: str = "all",
          size=MASK_SIZE, lam: float | None = None, band=dsp.HR_BAND_HZ,
          preprocess: bool = True) -> Signal:
    """Noise estimate from the regions the attention mask ignores."""
    small = downsample_video(video, size)
    mask = normalize_mask(downsample_mask(attention, size))
    inv = region_partition(invert_mask(mask, inversion), region)
    n = noise_estimate(small, inv)
    return dsp.preprocess(n, lam, band) if preprocess else n


def target(pulse: Signal, lam: float | None = None) -> Signal:
    """Training/evaluation target: the contact waveform, detrended and normalized."""
    return dsp.preprocess(pulse, lam, band=None)


def denoise(estimate: Signal, noise_signal: Signal | None, mode: str,
            model: LstmDenoiser | None = None) -> Signal:
    if mode == "none":
        return estimate
    if mode == "freq-sub":
        return dsp.normalize_acdc(freq_sub(estimate, noise_signal))
    if mode == "wave-sub":
        return wave_sub(estimate, noise_signal)
    if mode in ("lstm", "lstm-no-noise"):
        if model is None:
            raise ValueError(f"denoiser {mode!r} needs a trained model")
        return denoise_lstm(model, estimate, None if mode == "lstm-no-noise" else noise_signal)
    raise ValueError(f"unknown denoiser {mode!r}; choose from {DENOISERS}")


@dataclass(frozen=True)
class SceneSignals:
    """Preprocessed signals derived from one rendered scene."""

    estimate: Signal
    noise: Signal
    target: Signal
    hr_bpm: np.ndarray

    def features(self, with_noise: bool = True) -> Signal:
        return stack_inputs(self.estimate, self.noise if with_noise else None)


def scene_signals(scene: Scene, method: str = "mean",
                  inversion: InversionConfig = InversionConfig(), region: str = "all") -> SceneSignals:
    est = extract(scene.video, scene.attention, method)
    nz = noise(scene.video, scene.attention, inversion, region)
    tgt = target(scene.pulse)
    hr = metrics.estimate_rate(tgt) if tgt.duration >= 10 else np.array([])
    return SceneSignals(est, nz, tgt, hr)


def render_signals(config: SceneConfig, **kw) -> SceneSignals:
    return scene_signals(render_scene(config), **kw)


def build_dataset(signals: list[SceneSignals], with_noise: bool = True, length: int = 60,
                  overlap: float = 0.5):
    data = []
    for s in signals:
        data.extend(training_windows(s.features(with_noise), s.target, length, overlap))
    return data


def train_denoiser(signals: list[SceneSignals], config: TrainConfig = TrainConfig(),
                   with_noise: bool = True):
    data = build_dataset(signals, with_noise, config.window_length, config.window_overlap)
    return lstm_train(data, config)
