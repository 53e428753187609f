"""Applying trained generators to target-structure records."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import InvalidConfig, IoFailure, ShapeMismatch, StateMismatch
from .signals import ChannelSet, concatenate_channels, split_channels

_DIRECTION = {"alpha": "ab", "beta": "ba", "gamma": "ba"}


@dataclass(frozen=True)
class ScenarioSpec:
    target_structure_id: str
    source_state: str
    produced_state: str
    direction: str
    label: str = ""

    def __post_init__(self):
        if self.source_state not in _DIRECTION:
            raise InvalidConfig(f"unknown source state {self.source_state!r}")
        if self.direction != _DIRECTION[self.source_state]:
            raise InvalidConfig(
                f"{self.source_state} sources translate through direction {_DIRECTION[self.source_state]}"
            )
        allowed = ("beta_hat", "gamma_hat") if self.source_state == "alpha" else ("alpha_hat",)
        if self.produced_state not in allowed:
            raise InvalidConfig(f"{self.source_state} cannot produce {self.produced_state}")

    @property
    def reference_state(self):
        """Real state the produced record is compared against."""
        return self.produced_state[: -len("_hat")]

    def to_dict(self):
        return {"label": self.label, "target_structure_id": self.target_structure_id,
                "source_state": self.source_state, "produced_state": self.produced_state,
                "direction": self.direction}


# label -> (source, produced)
SCENARIOS = {
    "I": ("alpha", "beta_hat"),
    "II": ("beta", "alpha_hat"),
    "III": ("alpha", "gamma_hat"),
    "IV": ("gamma", "alpha_hat"),
}


def scenario(label, target_structure_id):
    try:
        source, produced = SCENARIOS[label]
    except KeyError:
        raise InvalidConfig(f"unknown scenario {label!r}; expected one of {sorted(SCENARIOS)}") from None
    return ScenarioSpec(target_structure_id, source, produced, _DIRECTION[source], label)


@dataclass(frozen=True)
class TranslationResult:
    synthetic: ChannelSet
    scenario: ScenarioSpec
    checkpoint_id: str = ""

    def sidecar(self):
        return {"scenario": self.scenario.to_dict(), "checkpoint_id": self.checkpoint_id,
                "channels": self.synthetic.n_channels, "samples_per_channel": self.synthetic.n_samples,
                "state_label": self.synthetic.state_label}


def translate_windows(state, ws, direction, chunk=64):
    """Run every window through the generator of ``direction``; provenance is kept."""
    generator = state.generator(direction)
    expected = state.config.input_length
    if ws.window_length != expected:
        raise ShapeMismatch(f"windows have {ws.window_length} samples, model expects {expected}")
    dtype = next(generator.parameters(), torch.zeros((), dtype=torch.float64)).dtype
    data = torch.tensor(np.asarray(ws.windows), dtype=dtype)
    out = []
    with torch.no_grad():
        for start in range(0, data.shape[0], chunk):
            out.append(generator(data[start : start + chunk]).double().numpy())
    windows = np.concatenate(out) if out else np.zeros((0, ws.window_length))
    return ws.with_windows(windows)


def run_scenario(state, source, scenario_spec, window_seconds=None, checkpoint_id=""):
    """Split, translate and reassemble a full record under one scenario."""
    if source.state_label != scenario_spec.source_state:
        raise StateMismatch(
            f"scenario {scenario_spec.label or scenario_spec.direction} needs a "
            f"{scenario_spec.source_state} source, got {source.state_label}"
        )
    if window_seconds is None:
        window_seconds = state.config.input_length / source.sample_rate
    ws = split_channels(source, window_seconds)
    translated = translate_windows(state, ws, scenario_spec.direction)
    synthetic = concatenate_channels(
        translated.with_windows(translated.windows, state_label=scenario_spec.produced_state)
    )
    return TranslationResult(synthetic, scenario_spec, checkpoint_id)


def write_sidecar(result, path):
    path = Path(path)
    try:
        path.write_text(json.dumps(result.sidecar(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path
