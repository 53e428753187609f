import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from sst.errors import LengthMismatch, SegmentTooLong, TooFewSegments, ValidationError
from sst.signals import TimeRecord
from sst.spectral import WelchParams, cross_psd, mmsc, msc, welch_psd


def direct_csd(x, y, L, overlap, fs):
    """Explicit DFT sums per segment, no FFT and no shared helpers."""
    step = L - int(round(overlap * L))
    n = np.arange(L)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * n / L)  # periodic Hann
    k = np.arange(L // 2 + 1)
    basis = np.exp(-2j * np.pi * np.outer(k, n) / L)
    acc = np.zeros(k.size, complex)
    count = 0
    for start in range(0, x.size - L + 1, step):
        X = basis @ (w * x[start : start + L])
        Y = basis @ (w * y[start : start + L])
        acc += np.conj(X) * Y
        count += 1
    out = acc / count / (fs * np.sum(w**2))
    out[1 : (L + 1) // 2] *= 2.0
    return out, count


class TestDensity:
    def test_csd_matches_direct_dft(self, rng):
        x, y = rng.normal(size=(2, 1000))
        est = cross_psd(x, y, 64, 0.5, sample_rate=50.0)
        oracle, count = direct_csd(x, y, 64, 0.5, 50.0)
        assert est.segment_count == count
        np.testing.assert_allclose(est.values, oracle, rtol=1e-10, atol=1e-14)

    @pytest.mark.parametrize("overlap", [0.0, 0.5, 0.66])
    def test_psd_matches_scipy(self, rng, overlap):
        x = rng.normal(size=4096)
        est = welch_psd(x, 256, overlap, sample_rate=256.0)
        noverlap = 256 - (256 - int(round(overlap * 256)))
        f, ref = signal.welch(x, 256.0, "hann", 256, noverlap, detrend=False)
        np.testing.assert_allclose(est.frequencies, f)
        np.testing.assert_allclose(est.values, ref, rtol=1e-10)

    def test_parseval_white_noise(self, rng):
        x = rng.normal(0, 0.3, 2**16)
        est = welch_psd(TimeRecord(256.0, x), 1024, 0.5)
        assert np.sum(est.values) * est.df == pytest.approx(np.var(x), rel=0.03)

    def test_psd_is_real_nonnegative(self, rng):
        est = welch_psd(rng.normal(size=2048), 128, sample_rate=1.0)
        assert est.values.dtype == np.float64 and np.all(est.values >= 0)

    def test_errors(self, rng):
        x = rng.normal(size=100)
        with pytest.raises(SegmentTooLong):
            welch_psd(x, 128, sample_rate=1.0)
        with pytest.raises(ValidationError):
            welch_psd(x, 32)  # raw array without a rate
        with pytest.raises(LengthMismatch):
            cross_psd(x, x[:-1], 32, sample_rate=1.0)
        with pytest.raises(LengthMismatch):
            cross_psd(TimeRecord(1.0, x), TimeRecord(2.0, x), 32)

    def test_params_validation(self):
        with pytest.raises(ValidationError):
            WelchParams(1024, 1.0)
        with pytest.raises(ValidationError):
            WelchParams(1)
        assert WelchParams(1024, 0.5).step == 512
        assert WelchParams(2048, 0.66).step == 696


class TestCoherence:
    def test_self_coherence_is_one(self, rng):
        x = rng.normal(size=8192)
        assert mmsc(x, x) == pytest.approx(1.0, abs=1e-9)

    def test_scaled_copy_is_coherent(self, rng):
        x = rng.normal(size=8192)
        assert mmsc(x, -3.0 * x) == pytest.approx(1.0, abs=1e-9)

    def test_matches_scipy_coherence(self, rng):
        x = rng.normal(size=8192)
        y = np.convolve(x, [0.5, 0.3, 0.2], "same") + 0.5 * rng.normal(size=8192)
        f, ref = signal.coherence(x, y, 256.0, "hann", 1024, 512, detrend=False)
        curve = msc(x, y, WelchParams(1024, 0.5), 256.0)
        np.testing.assert_allclose(curve.frequencies, f)
        np.testing.assert_allclose(curve.msc_values, ref, rtol=1e-9, atol=1e-12)

    def test_independent_noise_near_inverse_segment_count(self):
        params = WelchParams(256, 0.0)
        K = params.n_segments(256 * 16)
        rng = np.random.default_rng(2)
        values = [mmsc(*rng.normal(size=(2, 256 * 16)), params) for _ in range(200)]
        assert np.mean(values) == pytest.approx(1.0 / K, rel=0.2)

    def test_silent_channel_gives_zero(self, rng):
        x = rng.normal(size=4096)
        curve = msc(x, np.zeros_like(x), WelchParams(512))
        assert np.all(curve.msc_values == 0.0)

    def test_batch_axes(self, rng):
        x = rng.normal(size=(3, 2, 4096))
        y = rng.normal(size=(3, 2, 4096))
        out = mmsc(x, y, WelchParams(512))
        assert out.shape == (3, 2)
        assert out[1, 0] == pytest.approx(mmsc(x[1, 0], y[1, 0], WelchParams(512)), abs=1e-15)

    def test_too_few_segments(self, rng):
        x = rng.normal(size=1024)
        with pytest.raises(TooFewSegments):
            mmsc(x, x, WelchParams(1024))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), a=st.floats(0.01, 100), b=st.floats(-100, -0.01))
    def test_range_symmetry_and_scale_invariance(self, seed, a, b):
        x, y = np.random.default_rng(seed).normal(size=(2, 2048))
        p = WelchParams(256)
        c = msc(x, y, p).msc_values
        assert np.all((c >= 0) & (c <= 1))
        np.testing.assert_allclose(msc(y, x, p).msc_values, c, atol=1e-12)
        np.testing.assert_allclose(msc(a * x, b * y, p).msc_values, c, atol=1e-9)
