"""YAML pipeline configuration.

Layout (every section optional, defaults shown by ``sst.config.default_config()``)::

    seed: 0
    deterministic: false
    output_dir: runs/default
    simulation:
      structures: [bridge1, bridge2, bridge3, bridge4]
      train_structure: bridge1
      states: [alpha, beta, gamma]
      stiffness_scale: 0.6
      damage_element: null        # element index; null picks the default
      pattern: uniform            # or independent
      excitation: {std_dev: 0.3, mean: 0.0, duration_s: 1024, sample_rate_hz: 256, seed: null}
    preprocessing:
      window_seconds: 16
    architecture: {input_length: 4096, channels: [32, 64, 128], ...}
    training: {batch_size: 4, epochs: 160, learning_rate: 1.0e-5, ...}
    translation:
      targets: [bridge2, bridge3, bridge4]
      scenarios: [I, II, III, IV]
      checkpoint: null            # path; null uses the final checkpoint of the train stage
    evaluation:
      fdd: {overlap_fraction: 0.66, frequency_lines: 1024, ...}
      mmsc: {segment_length: 1024, overlap_fraction: 0.5, taper: hann}
      plots: true

Seeds left as ``null`` inherit the global ``seed``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .dgcg import ArchitectureConfig
from .errors import InvalidConfig, IoFailure, SSTError
from .modal_id import FddConfig
from .signals import STATE_LABELS, window_samples
from .spectral import WelchParams
from .structures import PRESETS, ExcitationSpec
from .training import LossWeights, TrainConfig
from .translation import SCENARIOS

_ARCH_KEYS = ("input_length", "channels", "mapping_blocks", "mapping_kernel", "edge_kernel",
              "resample_kernel", "critic_channels", "critic_kernel", "output_scale", "dtype")


def _check_keys(data, allowed, section):
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise InvalidConfig(f"section {section!r} must be a mapping")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise InvalidConfig(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    return dict(data)


def _names(cls):
    return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class SimulationSection:
    structures: tuple = ("bridge1", "bridge2", "bridge3", "bridge4")
    train_structure: str = "bridge1"
    states: tuple = ("alpha", "beta", "gamma")
    stiffness_scale: float = 0.6
    damage_element: int | None = None
    pattern: str = "uniform"
    excitation: dict = field(default_factory=lambda: {
        "std_dev": 0.3, "mean": 0.0, "duration_s": 1024.0, "sample_rate_hz": 256.0, "seed": None})

    def excitation_spec(self, global_seed):
        ex = dict(self.excitation)
        if ex.get("seed") is None:
            ex["seed"] = global_seed
        return ExcitationSpec(**ex)


@dataclass(frozen=True)
class TranslationSection:
    targets: tuple = ("bridge2", "bridge3", "bridge4")
    scenarios: tuple = ("I", "II", "III", "IV")
    checkpoint: str | None = None


@dataclass(frozen=True)
class EvaluationSection:
    fdd: FddConfig = field(default_factory=FddConfig)
    mmsc: WelchParams = field(default_factory=WelchParams)
    plots: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    deterministic: bool = False
    output_dir: str = "runs/default"
    simulation: SimulationSection = field(default_factory=SimulationSection)
    window_seconds: float = 16.0
    architecture: dict = field(default_factory=lambda: {"output_scale": 4.0})
    training: TrainConfig = field(default_factory=TrainConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    translation: TranslationSection = field(default_factory=TranslationSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    source: str | None = None  # file the config was read from

    @property
    def sample_rate(self):
        return float(self.simulation.excitation.get("sample_rate_hz", 256.0))

    def architecture_config(self):
        kwargs = dict(self.architecture)
        kwargs.setdefault("input_length", window_samples(self.window_seconds, self.sample_rate))
        for key in ("channels", "critic_channels"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return ArchitectureConfig.standard(**kwargs)

    def excitation_spec(self):
        return self.simulation.excitation_spec(self.seed)

    def train_config(self):
        if self.training.seed is None:
            return replace(self.training, seed=self.seed)
        return self.training

    def with_overrides(self, seed=None, deterministic=None, output_dir=None):
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if deterministic is not None:
            changes["deterministic"] = bool(deterministic)
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return replace(self, **changes) if changes else self

    # -- validation -------------------------------------------------------
    def validate(self, stages=("simulate", "train", "translate", "evaluate")):
        """Check every section; cheap, runs before any compute."""
        sim = self.simulation
        try:
            ex = self.excitation_spec()
            n = window_samples(self.window_seconds, ex.sample_rate_hz)
            arch = self.architecture_config()
            arch.validate()
        except SSTError:
            raise
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from exc
        if arch.input_length != n:
            raise InvalidConfig(
                f"window of {self.window_seconds} s at {ex.sample_rate_hz} Hz has {n} samples, "
                f"architecture expects {arch.input_length}"
            )
        if ex.n_samples % n:
            raise InvalidConfig(
                f"duration {ex.duration_s} s is not a whole number of {self.window_seconds} s windows"
            )
        for name in tuple(sim.structures) + (sim.train_structure,) + tuple(self.translation.targets):
            if name not in PRESETS:
                raise InvalidConfig(f"unknown structure {name!r}; presets are {sorted(PRESETS)}")
        for lab in sim.states:
            if lab not in STATE_LABELS[:3]:
                raise InvalidConfig(f"unknown state {lab!r}")
        if sim.pattern not in ("uniform", "independent"):
            raise InvalidConfig("simulation.pattern must be 'uniform' or 'independent'")
        if not 0 < sim.stiffness_scale < 1:
            raise InvalidConfig("simulation.stiffness_scale must lie in (0, 1)")
        if "train" in stages and not {"alpha", "beta"} <= set(sim.states):
            raise InvalidConfig("training needs alpha and beta among simulation.states")
        for label in self.translation.scenarios:
            if label not in SCENARIOS:
                raise InvalidConfig(f"unknown scenario {label!r}; expected one of {sorted(SCENARIOS)}")
            for state in SCENARIOS[label]:
                base = state.replace("_hat", "")
                if "translate" in stages and base not in sim.states:
                    raise InvalidConfig(f"scenario {label} needs state {base!r} in simulation.states")
        ckpt = self.translation.checkpoint
        if ckpt is not None and "translate" in stages and not Path(ckpt).is_file():
            raise InvalidConfig(f"translation.checkpoint does not exist: {ckpt}")
        if self.evaluation.fdd.segment_length > ex.n_samples:
            raise InvalidConfig("evaluation.fdd.frequency_lines needs more samples than simulated")
        return self

    # -- serialisation ----------------------------------------------------
    def to_dict(self):
        sim = asdict(self.simulation)
        sim["structures"] = list(sim["structures"])
        sim["states"] = list(sim["states"])
        training = asdict(self.training)
        training["betas"] = list(training["betas"])
        training.update(asdict(self.weights))
        tr = asdict(self.translation)
        tr["targets"] = list(tr["targets"])
        tr["scenarios"] = list(tr["scenarios"])
        arch = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.architecture.items()}
        return {
            "seed": self.seed,
            "deterministic": self.deterministic,
            "output_dir": self.output_dir,
            "simulation": sim,
            "preprocessing": {"window_seconds": self.window_seconds},
            "architecture": arch,
            "training": training,
            "translation": tr,
            "evaluation": {
                "fdd": asdict(self.evaluation.fdd),
                "mmsc": asdict(self.evaluation.mmsc),
                "plots": self.evaluation.plots,
            },
        }

    @classmethod
    def from_dict(cls, data, source=None):
        data = _check_keys(data, ("seed", "deterministic", "output_dir", "simulation", "preprocessing",
                                  "architecture", "training", "translation", "evaluation"), "top level")
        try:
            sim = _check_keys(data.get("simulation"), _names(SimulationSection), "simulation")
            ex_defaults = SimulationSection().excitation
            ex = dict(ex_defaults)
            ex.update(_check_keys(sim.pop("excitation", None), ex_defaults, "simulation.excitation"))
            for key in ("structures", "states"):
                if key in sim:
                    sim[key] = tuple(sim[key])
            simulation = SimulationSection(excitation=ex, **sim)

            pre = _check_keys(data.get("preprocessing"), ("window_seconds",), "preprocessing")
            arch = _check_keys(data.get("architecture"), _ARCH_KEYS, "architecture")
            arch = {"output_scale": 4.0, **arch}

            tr = _check_keys(data.get("training"), _names(TrainConfig) + _names(LossWeights), "training")
            weights = LossWeights(**{k: tr.pop(k) for k in _names(LossWeights) if k in tr})
            if "betas" in tr:
                tr["betas"] = tuple(tr["betas"])
            training = TrainConfig(**{"seed": None, **tr})

            tl = _check_keys(data.get("translation"), _names(TranslationSection), "translation")
            for key in ("targets", "scenarios"):
                if key in tl:
                    tl[key] = tuple(tl[key])
            translation = TranslationSection(**tl)

            ev = _check_keys(data.get("evaluation"), ("fdd", "mmsc", "plots"), "evaluation")
            fdd = FddConfig(**_check_keys(ev.get("fdd"), _names(FddConfig), "evaluation.fdd"))
            mm = WelchParams(**_check_keys(ev.get("mmsc"), _names(WelchParams), "evaluation.mmsc"))
            evaluation = EvaluationSection(fdd, mm, bool(ev.get("plots", True)))

            return cls(
                seed=int(data.get("seed", 0)),
                deterministic=bool(data.get("deterministic", False)),
                output_dir=str(data.get("output_dir", "runs/default")),
                simulation=simulation,
                window_seconds=float(pre.get("window_seconds", 16.0)),
                architecture=arch,
                training=training,
                weights=weights,
                translation=translation,
                evaluation=evaluation,
                source=None if source is None else str(source),
            )
        except SSTError:
            raise
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from exc

    def digest(self):
        """SHA-256 of the canonical JSON form, ignoring ``output_dir``.

        Independent of key order, file layout and where results are written.
        """
        content = {k: v for k, v in self.to_dict().items() if k != "output_dir"}
        blob = json.dumps(content, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def default_config():
    return PipelineConfig.from_dict({})


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise IoFailure(f"no such config file: {path}") from exc
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    return PipelineConfig.from_dict(data or {}, source=path)


def dump_config(config, path=None):
    text = yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None)
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc
    return text
