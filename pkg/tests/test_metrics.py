import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp
from scipy import integrate

from distraction import metrics
from distraction.signalio import Signal

FPS = 30.0
N = 900


def tone(freq, n=N, amp=1.0, phase=0.0):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / FPS + phase)


def oracle_snr(x, hr, fps=FPS, nfft=8192):
    """Direct DFT sums, bin by bin."""
    x = np.asarray(x) - np.mean(x)
    n = len(x)
    num = den = 0.0
    for k in range(nfft // 2 + 1):
        f = k * fps / nfft * 60
        if not 42 <= f <= 240:
            continue
        e = np.exp(-2j * np.pi * k * np.arange(n) / nfft)
        s = abs(np.dot(x, e)) ** 2 / n
        if abs(f - hr) <= 6 or abs(f - 2 * hr) <= 6:
            num += s * s
        else:
            den += s * s
    return 10 * math.log10(num / den)


def f_pdf(x, d1, d2):
    logc = (math.lgamma((d1 + d2) / 2) - math.lgamma(d1 / 2) - math.lgamma(d2 / 2)
            + (d1 / 2) * math.log(d1 / d2))
    return math.exp(logc + (d1 / 2 - 1) * math.log(x) - ((d1 + d2) / 2) * math.log(1 + d1 * x / d2))


def oracle_f_p(f, d1, d2):
    cdf = integrate.quad(f_pdf, 0, f, args=(d1, d2), limit=200)[0]
    return min(1.0, 2 * min(cdf, 1 - cdf))


# rate estimation ----------------------------------------------------------

def test_rate_examples():
    r = metrics.estimate_rate(Signal(tone(1.5), FPS))
    res = FPS * 60 / 8192
    assert abs(r[0] - 90) <= res
    r = metrics.estimate_rate(Signal(tone(1.2) + 0.5 * tone(3.0), FPS))
    assert abs(r[0] - 72) <= res
    assert math.isnan(metrics.estimate_rate(Signal(np.zeros(N), FPS))[0])
    with pytest.raises(ValueError):
        metrics.estimate_rate(Signal(tone(1.5, 200), FPS))


def test_rate_windows():
    x = np.concatenate([tone(1.0), tone(1.5), tone(2.0), tone(2.0, 100)])
    r = metrics.estimate_rate(Signal(x, FPS))
    np.testing.assert_allclose(r, [60, 90, 120], atol=0.25)
    br = metrics.estimate_rate(Signal(tone(0.25), FPS), metrics.BR_BAND_BPM)
    assert abs(br[0] - 15) <= 0.25


# error metrics ------------------------------------------------------------

def test_mae_rmse_examples():
    assert metrics.mae([60, 62], [61, 63]) == 1.0
    assert metrics.rmse([60, 62], [61, 63]) == 1.0
    assert metrics.mae([70, 80], [70, 80]) == 0 == metrics.rmse([70, 80], [70, 80])
    assert metrics.mae([60], [64]) == 4 == metrics.rmse([60], [64])
    with pytest.raises(ValueError):
        metrics.mae([1, 2], [1])


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 30), elements=st.floats(-200, 200)),
       hnp.arrays(np.float64, 30, elements=st.floats(-200, 200)))
def test_rmse_at_least_mae(a, b):
    b = b[: a.size]
    assert metrics.rmse(a, b) >= metrics.mae(a, b) - 1e-12


def test_pearson_examples():
    r = np.array([60.0, 72, 65, 90, 81])
    assert metrics.pearson(r, r) == pytest.approx(1)
    assert metrics.pearson(r, 100 - r) == pytest.approx(-1)
    assert metrics.pearson(r, 2 * r + 5) == pytest.approx(1)
    assert math.isnan(metrics.pearson(r, np.full(5, 70.0)))
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 40))
    textbook = ((np.sum(a * b) - a.sum() * b.sum() / 40)
                / math.sqrt((np.sum(a * a) - a.sum() ** 2 / 40) * (np.sum(b * b) - b.sum() ** 2 / 40)))
    assert metrics.pearson(a, b) == pytest.approx(textbook, abs=1e-12)


# SNR ----------------------------------------------------------------------

def test_snr_two_tone_matches_oracle():
    x = tone(1.2) + tone(2.2)
    got = metrics.snr(x, 72.0, FPS)
    assert abs(got - oracle_snr(x, 72.0)) < 0.2
    assert abs(got) < 0.2


def test_snr_pure_tone_and_range():
    val = metrics.snr(tone(1.2), 72.0, FPS)
    # only rectangular-window leakage lies outside the harmonic bands (about 38 dB here);
    # an exact +inf needs a spectrum with no bins outside, see the next test
    assert val > 30
    with pytest.raises(ValueError):
        metrics.snr(tone(1.2), 30.0, FPS)


def test_snr_infinite_when_nothing_outside():
    # at 1.4 fps the only bin inside a 42-84 BPM range is Nyquist (42 BPM),
    # which sits inside the first harmonic band
    x = np.cos(np.pi * np.arange(32))
    assert metrics.snr(x, 42.0, fps=1.4, band_bpm=(42.0, 84.0)) == math.inf


def test_snr_white_noise_width_ratio():
    f = np.fft.rfftfreq(8192, 1 / FPS) * 60
    sel = (f >= 42) & (f <= 240)
    harm = (np.abs(f - 72) <= 6) | (np.abs(f - 144) <= 6)
    expect = 10 * math.log10((sel & harm).sum() / (sel & ~harm).sum())
    vals = [metrics.snr(np.random.default_rng(s).normal(size=N), 72.0, FPS) for s in range(200)]
    assert abs(np.mean(vals) - expect) < 1.0


def test_snr_monotone_in_added_power():
    rng = np.random.default_rng(1)
    base = tone(1.2) + 0.3 * rng.normal(size=N)
    s0 = metrics.snr(base, 72.0, FPS)
    assert metrics.snr(base + 0.2 * tone(1.2, phase=0.0), 72.0, FPS) > s0
    assert metrics.snr(base + 0.2 * tone(3.0), 72.0, FPS) < s0


def test_snr_power_flag():
    x = tone(1.2) + 0.5 * tone(2.2)
    squared = metrics.snr(x, 72.0, FPS)
    plain = metrics.snr(x, 72.0, FPS, square_spectrum=False)
    # squaring a spectrum dominated by two lines roughly doubles the dB value
    assert squared == pytest.approx(2 * plain, rel=0.1)


# WMAE ---------------------------------------------------------------------

def test_wmae_analytic():
    w = tone(1.0)
    assert metrics.wmae(w, w, FPS) == 0
    assert metrics.wmae(w, -w, FPS) == pytest.approx(4 / math.pi, rel=0.01)
    assert metrics.wmae(w, np.zeros(N), FPS) == pytest.approx(2 / math.pi, rel=0.01)
    with pytest.raises(ValueError):
        metrics.wmae(w, w[:-1], FPS)


def test_wmae_averages_windows():
    w = np.zeros(2 * N)
    w_hat = np.concatenate([np.ones(N), 3 * np.ones(N)])
    assert metrics.wmae(Signal(w, FPS), Signal(w_hat, FPS)) == 2.0


# F-test -------------------------------------------------------------------

def test_f_test_examples():
    rng = np.random.default_rng(2)
    b = rng.normal(size=25)
    assert metrics.f_test(b, b)[0] == pytest.approx(1.0)
    assert metrics.f_test(2 * b, b)[0] == pytest.approx(4.0)
    with pytest.raises(ZeroDivisionError):
        metrics.f_test(b, np.ones(5))
    with pytest.raises(ValueError):
        metrics.f_test([1.0], b)


def test_f_test_table_case():
    # F(9, 9) upper 5% point is 3.18
    a = np.random.default_rng(3).normal(size=10)
    b = np.random.default_rng(4).normal(size=10)
    b = (b - b.mean()) / b.std(ddof=1)
    a = (a - a.mean()) / a.std(ddof=1) * math.sqrt(3.18)
    f, p = metrics.f_test(a, b)
    assert f == pytest.approx(3.18)
    assert p == pytest.approx(0.10, abs=0.01)


def test_f_test_matches_integrated_cdf():
    rng = np.random.default_rng(5)
    for _ in range(20):
        na, nb = rng.integers(3, 40, size=2)
        a = rng.normal(size=na) * rng.uniform(0.5, 2)
        b = rng.normal(size=nb)
        f, p = metrics.f_test(a, b)
        assert p == pytest.approx(oracle_f_p(f, na - 1, nb - 1), abs=0.01)


# reports ------------------------------------------------------------------

def test_evaluate_identical_signals(tmp_path):
    hr = np.repeat([1.1, 1.4, 1.8], N)
    w = np.sin(2 * np.pi * np.cumsum(hr) / FPS)
    rep = metrics.evaluate(Signal(w, FPS), Signal(w, FPS))
    assert rep.num_windows == 3
    assert rep.mae == 0 and rep.rmse == 0 and rep.wmae == 0
    assert rep.rho == pytest.approx(1.0)
    assert rep.rmse >= rep.mae >= 0
    path = tmp_path / "m.csv"
    rep.to_csv(path)
    rows = path.read_text().splitlines()
    assert len(rows) == 1 + 3 + 1
    assert rows[-1].startswith("summary")


def test_evaluate_band_override():
    w = tone(0.25) + 0.3 * tone(1.3)
    hr = metrics.evaluate(Signal(w, FPS), Signal(w, FPS))
    br = metrics.evaluate(Signal(w, FPS), Signal(w, FPS), band_bpm=metrics.BR_BAND_BPM)
    assert abs(hr.rates[0] - 78) < 0.5
    assert abs(br.rates[0] - 15) < 0.5
