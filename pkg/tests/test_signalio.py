import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from distraction import dsp
from distraction.signalio import (FormatError, MaskSequence, Signal, VideoTensor, read_mask,
                                  read_signal_csv, read_video_tensor, resample, write_mask,
                                  write_signal_csv, write_video_tensor)


def test_single_value_tensor(tmp_path):
    path = tmp_path / "one.vtf"
    import struct
    path.write_bytes(b"VTF1" + struct.pack("<4Id", 1, 1, 1, 1, 30.0) + struct.pack("<f", 0.5))
    v = read_video_tensor(path)
    assert v.shape == (1, 1, 1, 1)
    assert v.fps == 30.0
    assert v.data[0, 0, 0, 0] == 0.5


def test_zero_tensor_byte_count(tmp_path):
    path = tmp_path / "z.vtf"
    write_video_tensor(VideoTensor(np.zeros((2, 2, 2, 3)), 30.0), path)
    assert path.stat().st_size == 4 + 16 + 8 + 96


def test_vtf_layout_is_t_y_x_c(tmp_path):
    data = np.arange(2 * 3 * 4 * 3, dtype=np.float32).reshape(2, 3, 4, 3) / 100
    path = tmp_path / "v.vtf"
    write_video_tensor(VideoTensor(data, 25.0), path)
    payload = np.frombuffer(path.read_bytes()[28:], dtype="<f4")
    np.testing.assert_array_equal(payload, data.ravel())


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=4, max_dims=4, max_side=4).filter(
    lambda s: s[3] in (1, 3)), elements=st.floats(0, 1, width=32)),
    st.floats(0.5, 240))
def test_vtf_round_trip_bitwise(tmp_path_factory, data, fps):
    path = tmp_path_factory.mktemp("vtf") / "v.vtf"
    v = VideoTensor(data, fps)
    write_video_tensor(v, path)
    back = read_video_tensor(path)
    assert back.data.tobytes() == v.data.tobytes()
    assert back.fps == v.fps
    first = path.read_bytes()
    write_video_tensor(back, path)
    assert path.read_bytes() == first


def test_vtf_errors(tmp_path):
    good = tmp_path / "g.vtf"
    write_video_tensor(VideoTensor(np.full((2, 2, 2, 1), 0.25), 30.0), good)
    raw = good.read_bytes()

    bad = tmp_path / "magic.vtf"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="offset 0"):
        read_video_tensor(bad)

    short = tmp_path / "short.vtf"
    short.write_bytes(raw[:-4])
    with pytest.raises(FormatError, match="truncated"):
        read_video_tensor(short)

    nan = tmp_path / "nan.vtf"
    nan.write_bytes(raw[:28 + 8] + np.array([np.nan], "<f4").tobytes() + raw[28 + 12:])
    with pytest.raises(FormatError, match="offset 36"):
        read_video_tensor(nan)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_video_tensor(VideoTensor(np.zeros((1, 1, 1, 1)), 1.0), tmp_path / "no" / "x.vtf")


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = MaskSequence.infer(rng.uniform(size=(3, 5, 4)).astype(np.float32))
    path = tmp_path / "m.vtf"
    write_mask(m, path)
    back = read_mask(path)
    np.testing.assert_array_equal(back.data, m.data)
    assert back.normalized and not back.binary


def test_video_clamped_on_construction():
    v = VideoTensor(np.array([-0.5, 0.5, 1.5]).reshape(3, 1, 1, 1), 10)
    np.testing.assert_array_equal(v.data.ravel(), [0, 0.5, 1])


def test_signal_invariants():
    with pytest.raises(ValueError):
        Signal(np.array([1.0, np.nan]), 30)
    with pytest.raises(ValueError):
        Signal(np.ones(3), 0)
    with pytest.raises(ValueError):
        Signal(np.ones((0, 1)), 30)
    s = Signal(np.arange(4.0), 30)
    assert s.samples.shape == (4, 1)
    with pytest.raises(ValueError):
        s.samples[0, 0] = 1


def test_csv_three_samples(tmp_path):
    s = Signal([0.1, -0.2, 0.3], 30.0, ("bvp",))
    path = tmp_path / "s.csv"
    write_signal_csv(s, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == "t_sec,bvp"
    back = read_signal_csv(path)
    np.testing.assert_allclose(back.samples, s.samples, atol=1e-9)
    assert back.fps == pytest.approx(30.0)


def test_csv_two_channel_names(tmp_path):
    rng = np.random.default_rng(1)
    s = Signal(rng.normal(size=(50, 2)), 25.0, ("left", "right"))
    path = tmp_path / "s.csv"
    write_signal_csv(s, path)
    back = read_signal_csv(path)
    assert back.channel_names == ("left", "right")
    np.testing.assert_allclose(back.samples, s.samples, atol=1e-9)


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t_sec,a\n0,1\n0.2,2\n0.1,3\n")
    with pytest.raises(FormatError, match="non-monotone"):
        read_signal_csv(p)
    p.write_text("t_sec,a\n0,1\n0.1,2,3\n")
    with pytest.raises(FormatError, match="ragged"):
        read_signal_csv(p)


def test_resample_identity():
    s = Signal(np.random.default_rng(0).normal(size=(40, 2)), 30.0)
    out = resample(s, 30.0)
    np.testing.assert_array_equal(out.samples, s.samples)


def test_resample_ramp_midpoints():
    out = resample(Signal([0.0, 1, 2, 3], 30.0), 60.0)
    np.testing.assert_allclose(out.channel(0), [0, 0.5, 1, 1.5, 2, 2.5, 3])
    assert out.fps == 60.0


def test_resample_needs_two_samples():
    with pytest.raises(ValueError):
        resample(Signal([1.0], 30.0), 60.0)
    with pytest.raises(ValueError):
        resample(Signal([1.0, 2.0], 30.0), 0)


@pytest.mark.parametrize("src,dst", [(120.0, 30.0), (25.0, 30.0), (30.0, 90.0)])
def test_resample_preserves_duration_and_peak(src, dst):
    t = np.arange(int(60 * src)) / src
    s = Signal(np.sin(2 * np.pi * 1.0 * t), src)
    out = resample(s, dst)
    assert abs(out.duration - s.duration) <= 1 / dst
    spec = dsp.power_spectrum(out)
    peak = spec.freqs_bpm[np.argmax(spec.power)]
    assert abs(peak - 60.0) <= spec.resolution_bpm
