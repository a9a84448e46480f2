import logging

import numpy as np
import pytest
from scipy.signal import find_peaks

from distraction import dsp, metrics
from distraction.attention import (InversionConfig, downsample_mask, downsample_video,
                                   invert_mask, noise_estimate, normalize_mask)
from distraction.extractors import spatial_average
from distraction.signalio import MaskSequence
from distraction.synth import (PulseTemplate, SceneConfig, breathing_waveform, corrupt_mask,
                               pulse_waveform, render_scene)

SHORT = dict(frames=300)
FPS_RES = 30.0 * 60 / 8192


def curvature_sign_changes(template):
    u = np.arange(20000) / 20000
    x = template(u)
    d2 = np.diff(np.concatenate([x[-1:], x, x[:1]]), 2)
    s = np.sign(d2)
    s = s[s != 0]
    return int(np.sum(s != np.roll(s, 1)))


# waveforms ----------------------------------------------------------------

def test_pulse_peak_count():
    p = pulse_waveform(60.0, fps=30.0, duration=60.0).channel(0)
    peaks, _ = find_peaks(p, prominence=0.5 * np.ptp(p))
    assert len(peaks) == 60


def test_pulse_dominant_frequency():
    p = pulse_waveform(90.0, fps=30.0, duration=30.0)
    spec = dsp.power_spectrum(p)
    assert abs(spec.freqs_bpm[np.argmax(spec.power)] - 90) <= spec.resolution_bpm


def test_pulse_beat_shape():
    assert curvature_sign_changes(PulseTemplate(notch_depth=0.0)) == 2
    assert curvature_sign_changes(PulseTemplate()) > 2
    u = np.arange(1000) / 1000
    beat = PulseTemplate()(u)
    # the beat is a fixed shape; after mean removal it integrates to zero
    assert abs(np.mean(beat - beat.mean())) < 1e-12
    with pytest.raises(ValueError):
        PulseTemplate(notch_depth=1.0)


def test_pulse_normalized_and_rate_checked():
    p = pulse_waveform(((0, 60.0), (30, 120.0)), fps=30.0, duration=30.0).channel(0)
    assert abs(p.mean()) < 1e-12
    assert np.max(np.abs(p)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pulse_waveform(30.0)
    with pytest.raises(ValueError):
        pulse_waveform(((0, 100.0), (10, 250.0)))


def test_breathing_examples():
    b = breathing_waveform(15.0, 30.0, 60.0)
    spec = dsp.power_spectrum(b)
    assert abs(spec.freqs_bpm[np.argmax(spec.power)] - 15) <= spec.resolution_bpm
    x = breathing_waveform(12.0, 30.0, 60.0).channel(0)
    assert np.sum((x[:-1] > 0) & (x[1:] <= 0)) == 12
    with pytest.raises(ValueError):
        breathing_waveform(12.0, 30.0, 0.0)
    with pytest.raises(ValueError):
        breathing_waveform(40.0)


# rendering ----------------------------------------------------------------

def test_clean_scene_skin_mean_is_exact():
    cfg = SceneConfig(flicker_amp=0.0, motion_amp=0.0, sensor_noise_std=0.0, **SHORT)
    scene = render_scene(cfg)
    roi = MaskSequence(scene.attention.data, binary=True)
    trace = spatial_average(scene.video, roi).samples
    expect = np.asarray(cfg.skin_color) + np.outer(scene.pulse.channel(0), cfg.pulse_amp)
    # frames are stored as float32
    np.testing.assert_allclose(trace, expect, atol=1e-6)


def test_noise_estimate_tracks_flicker():
    scene = render_scene(SceneConfig(flicker_amp=0.02, sensor_noise_std=0.002, seed=3, **SHORT))
    small = downsample_video(scene.video)
    mask = invert_mask(normalize_mask(downsample_mask(scene.attention)), InversionConfig())
    n = noise_estimate(small, mask)
    for c in range(3):
        assert np.corrcoef(n.channel(c), scene.flicker.channel(0))[0, 1] > 0.9


def test_shared_noise_property():
    def region_corr(cfg):
        scene = render_scene(cfg)
        skin = scene.attention.data > 0.5
        v = scene.video.data[..., 1].astype(np.float64)
        a = (v * skin).sum(axis=(1, 2)) / skin.sum(axis=(1, 2))
        bg = ~skin
        b = (v * bg).sum(axis=(1, 2)) / bg.sum(axis=(1, 2))
        return np.corrcoef(a, b)[0, 1]

    assert region_corr(SceneConfig(flicker_amp=0.03, seed=5, **SHORT)) >= 0.9
    quiet = SceneConfig(flicker_amp=0.0, sensor_noise_std=0.01, pulse_amp=(0, 0, 0), seed=5,
                        **SHORT)
    assert abs(region_corr(quiet)) < 0.2


def test_render_is_deterministic():
    cfg = SceneConfig(motion_amp=2.0, seed=11, **SHORT)
    a, b = render_scene(cfg), render_scene(cfg)
    assert a.video.data.tobytes() == b.video.data.tobytes()
    assert a.attention.data.tobytes() == b.attention.data.tobytes()
    c = render_scene(cfg.replace(seed=12))
    assert a.video.data.tobytes() != c.video.data.tobytes()


def test_default_scene_never_clamps(caplog):
    with caplog.at_level(logging.WARNING, logger="distraction.synth"):
        render_scene(SceneConfig(**SHORT))
    assert not caplog.records


def test_pulse_rate_in_every_window():
    # a rate step at the window boundary; a ramp inside a window has no single rate
    cfg = SceneConfig(frames=1800, hr_knots=((0, 66.0), (29.99, 66.0), (30, 96.0), (60, 96.0)))
    rates = metrics.estimate_rate(render_scene(cfg).pulse)
    np.testing.assert_allclose(rates, [66.0, 96.0], atol=FPS_RES)


def test_attention_tracks_motion():
    scene = render_scene(SceneConfig(motion_amp=3.0, seed=2, **SHORT))
    cols = np.arange(scene.config.width)
    att = scene.attention.data.sum(axis=1)
    centroid = (att * cols).sum(axis=1) / att.sum(axis=1)
    top, left, h, w = scene.config.skin_rect
    offset = centroid - (left + (w - 1) / 2)
    np.testing.assert_allclose(offset, scene.motion.channel(0), atol=0.05)


def test_iterates_as_five_tuple():
    video, att, pulse, breathing, flicker = render_scene(SceneConfig(frames=60))
    assert video.shape[0] == att.data.shape[0] == pulse.num_samples == 60
    assert breathing.num_samples == flicker.num_samples == 60


def test_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(skin_rect=(0, 0, 10, 10))
    with pytest.raises(ValueError):
        SceneConfig(motion_amp=30.0)
    with pytest.raises(ValueError):
        SceneConfig(flicker_amp=-1.0)


def test_config_text_round_trip(tmp_path):
    cfg = SceneConfig(frames=450, hr_knots=((0, 70.0), (15, 95.5)), flicker_amp=0.03,
                      multiplicative_flicker=True, seed=9)
    path = tmp_path / "scene.cfg"
    cfg.save(path)
    assert SceneConfig.load(path) == cfg
    assert SceneConfig.loads("# comment\nframes = 120\n") == SceneConfig(frames=120)
    with pytest.raises(ValueError, match="unknown key"):
        SceneConfig.loads("colour=1\n")
    with pytest.raises(ValueError):
        SceneConfig.loads("frames\n")


# mask corruption ----------------------------------------------------------

def test_corrupt_mask():
    data = np.zeros((2, 20, 20))
    data[:, 5:15, 5:15] = 1
    m = MaskSequence(data, binary=True)
    np.testing.assert_array_equal(corrupt_mask(m, 0.0).data, data)
    half = corrupt_mask(m, 0.5, seed=3)
    assert list(half.data.sum(axis=(1, 2))) == [50, 50]
    assert half.data.tobytes() == corrupt_mask(m, 0.5, seed=3).data.tobytes()
    with pytest.raises(ValueError):
        corrupt_mask(m, 1.0)


def test_corrupted_mask_still_finds_pulse():
    from distraction import pipeline
    scene = render_scene(SceneConfig(frames=900, flicker_amp=0.0, seed=6,
                                     hr_knots=((0, 78.0),)))
    bad = corrupt_mask(scene.attention, 0.3, seed=1)
    est = pipeline.extract(scene.video, bad, "chrom")
    rate = metrics.estimate_rate(est)[0]
    truth = metrics.estimate_rate(scene.pulse)[0]
    assert abs(rate - truth) <= 2.0
