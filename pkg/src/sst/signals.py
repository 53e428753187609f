"""Signal containers, window splitting/reassembly and the SSTSIG file format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    IoFailure,
    LengthMismatch,
    MissingWindow,
    NonDivisibleLength,
    NonIntegralWindow,
    ShapeMismatch,
    ValidationError,
)

STATE_LABELS = ("alpha", "beta", "gamma", "alpha_hat", "beta_hat", "gamma_hat")

SSTSIG_MAGIC = "SSTSIG"
SSTSIG_VERSION = 1


def _check_label(label):
    if label not in STATE_LABELS:
        raise ValidationError(f"unknown state label {label!r}; expected one of {STATE_LABELS}")


def _frozen_array(values):
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeRecord:
    """One uniformly sampled acceleration channel."""

    sample_rate: float
    samples: np.ndarray
    channel_id: int = 0
    structure_id: str = ""
    state_label: str = "alpha"

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        if samples.ndim != 1 or samples.size < 1:
            raise ValidationError("a TimeRecord needs a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("TimeRecord samples must be finite")
        if not self.sample_rate > 0:
            raise ValidationError("sample_rate must be positive")
        if int(self.channel_id) < 0:
            raise ValidationError("channel_id must be >= 0")
        _check_label(self.state_label)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "channel_id", int(self.channel_id))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, TimeRecord):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.channel_id == other.channel_id
            and self.structure_id == other.structure_id
            and self.state_label == other.state_label
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


@dataclass(frozen=True)
class ChannelSet:
    """Equal-length, equal-rate records ordered by ascending channel id."""

    records: tuple

    def __post_init__(self):
        records = tuple(sorted(self.records, key=lambda r: r.channel_id))
        if not records:
            raise ValidationError("a ChannelSet needs at least one record")
        rates = {r.sample_rate for r in records}
        lengths = {len(r) for r in records}
        if len(rates) != 1:
            raise ShapeMismatch(f"channels disagree on sample_rate: {sorted(rates)}")
        if len(lengths) != 1:
            raise ShapeMismatch(f"channels disagree on length: {sorted(lengths)}")
        ids = [r.channel_id for r in records]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate channel ids")
        object.__setattr__(self, "records", records)

    @classmethod
    def from_array(cls, data, sample_rate, structure_id="", state_label="alpha", channel_ids=None):
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if channel_ids is None:
            channel_ids = range(data.shape[0])
        return cls(
            tuple(
                TimeRecord(sample_rate, row, cid, structure_id, state_label)
                for cid, row in zip(channel_ids, data)
            )
        )

    @property
    def sample_rate(self):
        return self.records[0].sample_rate

    @property
    def n_samples(self):
        return len(self.records[0])

    @property
    def n_channels(self):
        return len(self.records)

    @property
    def structure_id(self):
        return self.records[0].structure_id

    @property
    def state_label(self):
        return self.records[0].state_label

    @property
    def channel_ids(self):
        return [r.channel_id for r in self.records]

    @property
    def data(self):
        """Channel-major ``(n_channels, n_samples)`` copy of the samples."""
        return np.stack([r.samples for r in self.records])

    def relabel(self, state_label=None, structure_id=None):
        return ChannelSet.from_array(
            self.data,
            self.sample_rate,
            self.structure_id if structure_id is None else structure_id,
            self.state_label if state_label is None else state_label,
            self.channel_ids,
        )

    def __len__(self):
        return self.n_channels


@dataclass(frozen=True)
class WindowSet:
    """Fixed-length segments with ``(channel_id, window_index)`` provenance.

    ``windows`` has shape ``(count, window_length)``; row ``i`` came from
    ``provenance[i]``.
    """

    window_length: int
    windows: np.ndarray
    provenance: np.ndarray
    sample_rate: float
    structure_id: str = ""
    state_label: str = "alpha"
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        windows = np.array(self.windows, dtype=np.float64, copy=True)
        if windows.ndim == 1:
            windows = windows[None, :]
        prov = np.array(self.provenance, dtype=np.int64, copy=True).reshape(-1, 2)
        if windows.shape[1] != self.window_length:
            raise ShapeMismatch(
                f"windows have {windows.shape[1]} samples, expected {self.window_length}"
            )
        if prov.shape[0] != windows.shape[0]:
            raise ShapeMismatch("provenance and windows disagree on count")
        _check_label(self.state_label)
        windows.setflags(write=False)
        prov.setflags(write=False)
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "provenance", prov)
        object.__setattr__(self, "window_length", int(self.window_length))

    def __len__(self):
        return self.windows.shape[0]

    def with_windows(self, windows, state_label=None):
        """Same provenance, new contents."""
        return WindowSet(
            self.window_length,
            windows,
            self.provenance,
            self.sample_rate,
            self.structure_id,
            self.state_label if state_label is None else state_label,
        )

    def subset(self, index):
        index = np.asarray(index)
        return WindowSet(
            self.window_length,
            self.windows[index],
            self.provenance[index],
            self.sample_rate,
            self.structure_id,
            self.state_label,
        )


def window_samples(window_seconds, sample_rate):
    """Window length in samples; raises if ``window_seconds * sample_rate`` is fractional."""
    if not window_seconds > 0:
        raise NonIntegralWindow("window_seconds must be positive")
    n = window_seconds * sample_rate
    rounded = round(n)
    if rounded < 1 or not math.isclose(n, rounded, rel_tol=0.0, abs_tol=1e-9 * max(1.0, abs(n))):
        raise NonIntegralWindow(
            f"{window_seconds} s x {sample_rate} Hz = {n} is not an integral sample count"
        )
    return int(rounded)


def split_into_windows(record, window_seconds):
    """Cut a record into consecutive non-overlapping windows."""
    length = window_samples(window_seconds, record.sample_rate)
    n = len(record)
    if n % length:
        raise NonDivisibleLength(f"record length {n} is not a multiple of window length {length}")
    count = n // length
    prov = np.column_stack([np.full(count, record.channel_id), np.arange(count)])
    return WindowSet(
        length,
        record.samples.reshape(count, length),
        prov,
        record.sample_rate,
        record.structure_id,
        record.state_label,
    )


def split_channels(channels, window_seconds):
    """Pool the windows of every channel into one WindowSet (channel-major order)."""
    parts = [split_into_windows(r, window_seconds) for r in channels.records]
    return WindowSet(
        parts[0].window_length,
        np.concatenate([p.windows for p in parts]),
        np.concatenate([p.provenance for p in parts]),
        channels.sample_rate,
        channels.structure_id,
        channels.state_label,
    )


def _ordered_channel_windows(ws, channel_id):
    mask = ws.provenance[:, 0] == channel_id
    idx = ws.provenance[mask, 1]
    order = np.argsort(idx, kind="stable")
    idx = idx[order]
    expected = np.arange(idx.size)
    if not np.array_equal(idx, expected):
        missing = sorted(set(range(int(idx.max()) + 1)) - set(idx.tolist()))
        if missing:
            raise MissingWindow(f"channel {channel_id}: window index {missing[0]} absent")
        raise MissingWindow(f"channel {channel_id}: duplicate or negative window indices")
    return ws.windows[mask][order]


def concatenate_windows(ws, channel_id=None):
    """Reassemble one channel's windows into a TimeRecord."""
    channels = np.unique(ws.provenance[:, 0])
    if channel_id is None:
        if channels.size != 1:
            raise ValidationError(
                "WindowSet holds several channels; pass channel_id or use concatenate_channels"
            )
        channel_id = int(channels[0])
    rows = _ordered_channel_windows(ws, channel_id)
    return TimeRecord(ws.sample_rate, rows.reshape(-1), channel_id, ws.structure_id, ws.state_label)


def concatenate_channels(ws):
    """Reassemble every channel of a pooled WindowSet into a ChannelSet."""
    channels = np.unique(ws.provenance[:, 0])
    return ChannelSet(tuple(concatenate_windows(ws, int(c)) for c in channels))


# ---------------------------------------------------------------------------
# SSTSIG container: JSON header line + float64 LE channel-major payload

def write_container(path, channels, unit="m/s^2", extra=None):
    path = Path(path)
    header = {
        "magic": SSTSIG_MAGIC,
        "version": SSTSIG_VERSION,
        "sample_rate_hz": channels.sample_rate,
        "channels": channels.n_channels,
        "samples_per_channel": channels.n_samples,
        "structure_id": channels.structure_id,
        "state_label": channels.state_label,
        "unit": unit,
    }
    if channels.channel_ids != list(range(channels.n_channels)):
        header["channel_ids"] = channels.channel_ids
    if extra:
        header.update(extra)
    payload = np.ascontiguousarray(channels.data, dtype="<f8").tobytes()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_header(fh, magic, path):
    line = fh.readline()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IoFailure(f"{path}: malformed header") from exc
    if header.get("magic") != magic:
        raise IoFailure(f"{path}: not a {magic} file")
    if header.get("version") != 1:
        raise IoFailure(f"{path}: unsupported version {header.get('version')}")
    return header


def read_container(path):
    """Load an SSTSIG file; returns ``(ChannelSet, header)``."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            header = read_header(fh, SSTSIG_MAGIC, path)
            payload = fh.read()
    except FileNotFoundError as exc:
        raise IoFailure(f"no such file: {path}") from exc
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    n_ch = int(header["channels"])
    n_s = int(header["samples_per_channel"])
    if len(payload) != 8 * n_ch * n_s:
        raise IoFailure(f"{path}: payload holds {len(payload)} bytes, expected {8 * n_ch * n_s}")
    data = np.frombuffer(payload, dtype="<f8").reshape(n_ch, n_s)
    cs = ChannelSet.from_array(
        data,
        header["sample_rate_hz"],
        header.get("structure_id", ""),
        header.get("state_label", "alpha"),
        header.get("channel_ids"),
    )
    return cs, header


def check_lengths(x, y):
    if len(x) != len(y):
        raise LengthMismatch(f"lengths differ: {len(x)} vs {len(y)}")
