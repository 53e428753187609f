"""Output-only modal identification (FDD + peak picking) and state comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import (
    LengthMismatch,
    NonPositiveReference,
    ShapeMismatch,
    TooFewSamples,
    ValidationError,
    ZeroVector,
)
from .spectral import WelchParams, mmsc, segment_spectra


@dataclass(frozen=True)
class FddConfig:
    taper: str = "hann"
    overlap_fraction: float = 0.66
    frequency_lines: int = 1024
    peak_prominence: float = 0.05
    min_peak_separation: float = 0.25
    pairing_window: float = 0.10

    def __post_init__(self):
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValidationError("overlap_fraction must lie in [0, 1)")
        if int(self.frequency_lines) < 2:
            raise ValidationError("frequency_lines must be >= 2")
        if self.peak_prominence < 0 or self.min_peak_separation < 0:
            raise ValidationError("peak thresholds must be >= 0")

    @property
    def segment_length(self):
        return 2 * int(self.frequency_lines)

    def welch(self):
        return WelchParams(self.segment_length, self.overlap_fraction, self.taper)


@dataclass(frozen=True)
class SingularValueSpectrum:
    frequencies: np.ndarray
    singular_values: np.ndarray  # (n_lines, n_channels), descending per line
    singular_vectors: np.ndarray  # (n_lines, n_channels), first left vector per line

    @property
    def first(self):
        return self.singular_values[:, 0]

    @property
    def df(self):
        return float(self.frequencies[1] - self.frequencies[0])


@dataclass(frozen=True)
class ModeEstimate:
    frequency: float
    shape: np.ndarray
    order: int
    line: int = -1


@dataclass(frozen=True)
class ModePair:
    order: int
    f_real: float
    f_synthetic: float | None
    cnf_percent: float | None
    mac: float | None
    shape_real: np.ndarray | None = None
    shape_synthetic: np.ndarray | None = None


@dataclass
class ComparisonReport:
    pairs: list
    average_mmsc: float
    channel_mmsc: list
    unpaired_real: list = field(default_factory=list)
    unpaired_synthetic: list = field(default_factory=list)
    scenario: dict = field(default_factory=dict)
    spectra: tuple = ()

    @property
    def paired(self):
        return [p for p in self.pairs if p.f_synthetic is not None]


def cross_spectral_matrix(data, sample_rate, params):
    """Welch CSD matrix per line: ``G[f, i, j] = E[X_i conj(X_j)]`` (one-sided density)."""
    X, scale = segment_spectra(data, params)  # (n_ch, n_seg, n_bins)
    G = np.einsum("isf,jsf->fij", X, np.conj(X)) / X.shape[1]
    G *= (scale / sample_rate)[:, None, None]
    freqs = np.fft.rfftfreq(params.segment_length, d=1.0 / sample_rate)
    return freqs, G


def fdd(channels, config=None):
    """Frequency domain decomposition of a ChannelSet."""
    config = config or FddConfig()
    params = config.welch()
    if params.n_segments(channels.n_samples) < 2:
        raise TooFewSamples(
            f"{channels.n_samples} samples give fewer than 2 segments of {params.segment_length}"
        )
    freqs, G = cross_spectral_matrix(channels.data, channels.sample_rate, params)
    U, S, _ = np.linalg.svd(G)
    return SingularValueSpectrum(freqs, S, U[:, :, 0])


def real_shape(vec):
    """Rotate a complex singular vector to its best real approximation, unit norm, sign-fixed."""
    vec = np.asarray(vec)
    if np.iscomplexobj(vec):
        # phase that maximises the real-part energy
        angle = 0.5 * np.angle(np.sum(vec * vec))
        vec = np.real(vec * np.exp(-1j * angle))
    vec = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if norm == 0:
        return vec
    vec = vec / norm
    mags = np.abs(vec)
    idx = int(np.argmax(mags >= mags.max() * (1.0 - 1e-9)))
    return -vec if vec[idx] < 0 else vec


def pick_peaks(svs, config=None):
    """Local maxima of the first singular value that clear the prominence and spacing limits."""
    config = config or FddConfig()
    s1 = np.asarray(svs.first, dtype=np.float64)
    if s1.size < 3 or not np.any(s1 > 0):
        return []
    distance = max(1, math.ceil(config.min_peak_separation / svs.df - 1e-9))
    lines, _ = find_peaks(s1, prominence=config.peak_prominence * s1.max(), distance=distance)
    return [
        ModeEstimate(float(svs.frequencies[k]), real_shape(svs.singular_vectors[k]), i + 1, int(k))
        for i, k in enumerate(lines)
    ]


def mac(shape_a, shape_b):
    """Modal assurance criterion ``|a^H b|^2 / ((a^H a)(b^H b))``."""
    a = np.asarray(shape_a).ravel()
    b = np.asarray(shape_b).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"shape lengths differ: {a.size} vs {b.size}")
    aa = np.vdot(a, a).real
    bb = np.vdot(b, b).real
    if aa == 0 or bb == 0:
        raise ZeroVector("MAC is undefined for a zero vector")
    return float(min(abs(np.vdot(a, b)) ** 2 / (aa * bb), 1.0))


def cnf(f_real, f_synthetic):
    """Change in natural frequency, percent of the reference."""
    if not f_real > 0:
        raise NonPositiveReference("reference frequency must be positive")
    return abs(f_synthetic - f_real) / f_real * 100.0


def pair_modes(real_modes, synthetic_modes, window=0.10):
    """Greedy pairing by ascending real frequency; best MAC inside +/- ``window`` * f_real."""
    used = set()
    pairs = []
    unpaired_real = []
    for rm in sorted(real_modes, key=lambda m: m.frequency):
        best = None
        for j, sm in enumerate(synthetic_modes):
            if j in used or abs(sm.frequency - rm.frequency) > window * rm.frequency:
                continue
            value = mac(rm.shape, sm.shape)
            if best is None or value > best[1]:
                best = (j, value)
        if best is None:
            pairs.append(ModePair(rm.order, rm.frequency, None, None, None, rm.shape, None))
            unpaired_real.append(rm.frequency)
            continue
        j, value = best
        used.add(j)
        sm = synthetic_modes[j]
        pairs.append(ModePair(rm.order, rm.frequency, sm.frequency, cnf(rm.frequency, sm.frequency),
                              value, rm.shape, sm.shape))
    unpaired_syn = [m.frequency for j, m in enumerate(synthetic_modes) if j not in used]
    return pairs, unpaired_real, unpaired_syn


def compare_states(real, synthetic, fdd_config=None, mmsc_params=None, scenario=None):
    """Per-channel MMSC plus FDD modes of both sets, paired by MAC."""
    if real.n_channels != synthetic.n_channels or real.n_samples != synthetic.n_samples:
        raise ShapeMismatch(
            f"real {real.n_channels}x{real.n_samples} vs synthetic "
            f"{synthetic.n_channels}x{synthetic.n_samples}"
        )
    fdd_config = fdd_config or FddConfig()
    mmsc_params = mmsc_params or WelchParams()
    per_channel = np.atleast_1d(mmsc(real.data, synthetic.data, mmsc_params, real.sample_rate))
    svs_real = fdd(real, fdd_config)
    svs_syn = fdd(synthetic, fdd_config)
    pairs, un_r, un_s = pair_modes(pick_peaks(svs_real, fdd_config), pick_peaks(svs_syn, fdd_config),
                                   fdd_config.pairing_window)
    return ComparisonReport(
        pairs=pairs,
        average_mmsc=float(np.mean(per_channel)),
        channel_mmsc=[float(v) for v in per_channel],
        unpaired_real=un_r,
        unpaired_synthetic=un_s,
        scenario=dict(scenario or {}),
        spectra=(svs_real, svs_syn),
    )
