"""Welch spectral estimates and magnitude-squared coherence.

All estimators share one segmenting scheme: segments of ``segment_length``
samples advance by ``segment_length - round(overlap_fraction * segment_length)``,
trailing samples that do not fill a segment are dropped, no detrending is
applied, and the taper is any window name understood by
:func:`scipy.signal.get_window` (periodic form).

Spectra are one-sided densities in ``unit**2 / Hz``:
``S_xy = 2 * mean(conj(X) * Y) / (fs * sum(w**2))`` with the DC and Nyquist
bins not doubled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .errors import LengthMismatch, SegmentTooLong, TooFewSegments, ValidationError
from .signals import TimeRecord

POWER_FLOOR = 1e-30


@dataclass(frozen=True)
class WelchParams:
    segment_length: int = 1024
    overlap_fraction: float = 0.5
    taper: str = "hann"
    power_floor: float = POWER_FLOOR

    def __post_init__(self):
        if int(self.segment_length) < 2:
            raise ValidationError("segment_length must be >= 2")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValidationError("overlap_fraction must lie in [0, 1)")
        object.__setattr__(self, "segment_length", int(self.segment_length))

    @property
    def step(self):
        return max(1, self.segment_length - int(round(self.overlap_fraction * self.segment_length)))

    def n_segments(self, n_samples):
        if n_samples < self.segment_length:
            return 0
        return 1 + (n_samples - self.segment_length) // self.step


@dataclass(frozen=True)
class SpectralEstimate:
    frequencies: np.ndarray
    values: np.ndarray
    segment_count: int
    segment_length: int
    overlap_fraction: float

    @property
    def df(self):
        return self.frequencies[1] - self.frequencies[0]


@dataclass(frozen=True)
class CoherenceCurve:
    frequencies: np.ndarray
    msc_values: np.ndarray

    @property
    def n_bins(self):
        return self.msc_values.size


def _unpack(x):
    if isinstance(x, TimeRecord):
        return x.samples, x.sample_rate
    return np.asarray(x, dtype=np.float64), None


def _rate(*rates, sample_rate=None, required=True):
    known = {r for r in rates if r is not None}
    if sample_rate is not None:
        known.add(float(sample_rate))
    if len(known) > 1:
        raise LengthMismatch(f"sample rates differ: {sorted(known)}")
    if not known:
        if required:
            raise ValidationError("sample_rate is required for raw arrays")
        return 1.0  # coherence is rate-free; frequencies come out in cycles/sample
    return known.pop()


def segment_spectra(x, params):
    """Tapered FFTs of every Welch segment along the last axis.

    Returns ``(spectra, scale)`` with spectra shaped ``(..., n_segments, n_bins)``;
    ``scale`` is the per-bin factor turning ``mean(conj(X) * Y)`` into a
    one-sided density once divided by the sample rate.
    """
    x = np.asarray(x, dtype=np.float64)
    L = params.segment_length
    if x.shape[-1] < L:
        raise SegmentTooLong(f"segment_length {L} exceeds record length {x.shape[-1]}")
    w = get_window(params.taper, L, fftbins=True)
    segs = np.lib.stride_tricks.sliding_window_view(x, L, axis=-1)[..., :: params.step, :]
    spectra = np.fft.rfft(segs * w, axis=-1)
    scale = np.full(spectra.shape[-1], 2.0 / np.sum(w * w))
    scale[0] /= 2.0
    if L % 2 == 0:
        scale[-1] /= 2.0
    return spectra, scale


def _estimate(x, y, params, sample_rate):
    xs, rx = _unpack(x)
    ys, ry = (xs, rx) if y is None else _unpack(y)
    fs = _rate(rx, ry, sample_rate=sample_rate)
    if xs.shape != ys.shape:
        raise LengthMismatch(f"lengths differ: {xs.shape[-1]} vs {ys.shape[-1]}")
    X, scale = segment_spectra(xs, params)
    Y = X if y is None else segment_spectra(ys, params)[0]
    freqs = np.fft.rfftfreq(params.segment_length, d=1.0 / fs)
    return X, Y, scale / fs, freqs


def welch_psd(x, segment_length=1024, overlap_fraction=0.5, taper="hann", sample_rate=None):
    """One-sided Welch power spectral density of a TimeRecord (or raw array + ``sample_rate``)."""
    params = WelchParams(segment_length, overlap_fraction, taper)
    X, _, scale, freqs = _estimate(x, None, params, sample_rate)
    psd = np.mean(X.real**2 + X.imag**2, axis=-2) * scale
    return SpectralEstimate(freqs, psd, X.shape[-2], params.segment_length, params.overlap_fraction)


def cross_psd(x, y, segment_length=1024, overlap_fraction=0.5, taper="hann", sample_rate=None):
    """One-sided Welch cross-spectral density ``S_xy`` (complex)."""
    params = WelchParams(segment_length, overlap_fraction, taper)
    X, Y, scale, freqs = _estimate(x, y, params, sample_rate)
    csd = np.mean(np.conj(X) * Y, axis=-2) * scale
    return SpectralEstimate(freqs, csd, X.shape[-2], params.segment_length, params.overlap_fraction)


def _msc_values(X, Y, floor):
    sxx = np.mean(X.real**2 + X.imag**2, axis=-2)
    syy = np.mean(Y.real**2 + Y.imag**2, axis=-2)
    sxy = np.mean(np.conj(X) * Y, axis=-2)
    num = sxy.real**2 + sxy.imag**2
    den = sxx * syy
    # floor is in raw segment-power units (see callers)
    ok = (sxx > floor) & (syy > floor)
    out = np.zeros_like(sxx)
    np.divide(num, den, out=out, where=ok)
    return np.clip(out, 0.0, 1.0)


def _coherence_inputs(x, y, params, sample_rate):
    params = params or WelchParams()
    xs, rx = _unpack(x)
    ys, ry = _unpack(y)
    fs = _rate(rx, ry, sample_rate=sample_rate, required=False)
    if xs.shape != ys.shape:
        raise LengthMismatch(f"lengths differ: {xs.shape[-1]} vs {ys.shape[-1]}")
    if params.n_segments(xs.shape[-1]) < 2:
        raise TooFewSegments(
            f"{xs.shape[-1]} samples give fewer than 2 segments of {params.segment_length}"
        )
    return xs, ys, fs, params


def msc(x, y, params=None, sample_rate=None):
    """Per-bin magnitude-squared coherence ``|S_xy|^2 / (S_xx S_yy)``.

    Bins where either auto-spectrum falls below ``params.power_floor`` are
    reported as 0.
    """
    xs, ys, fs, params = _coherence_inputs(x, y, params, sample_rate)
    X, scale = segment_spectra(xs, params)
    Y, _ = segment_spectra(ys, params)
    values = _msc_values(X, Y, params.power_floor * fs / scale)
    return CoherenceCurve(np.fft.rfftfreq(params.segment_length, d=1.0 / fs), values)


def mmsc(x, y, params=None, sample_rate=None):
    """Mean of the per-bin MSC values; accepts batches along leading axes."""
    xs, ys, fs, params = _coherence_inputs(x, y, params, sample_rate)
    X, scale = segment_spectra(xs, params)
    Y, _ = segment_spectra(ys, params)
    values = _msc_values(X, Y, params.power_floor * fs / scale)
    result = values.mean(axis=-1)
    return float(result) if result.ndim == 0 else result
