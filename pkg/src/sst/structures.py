"""Spring-mass chain stand-ins for the bridge models.

A model with ``n`` DOFs is a transverse chain pinned at both ends: element
``e`` (``0 <= e <= n``) links DOF ``e - 1`` to DOF ``e``, with the ground in
place of DOF ``-1`` and DOF ``n``. A single DOF is a mass on one grounding
spring. Mirroring about midspan maps element ``e`` to ``n - e`` and DOF ``i``
to ``n - 1 - i``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import eigh

from .errors import InvalidConfig, SingularSystem, UnknownElement, ValidationError
from .integrate import newmark
from .signals import ChannelSet, TimeRecord

DEFAULT_DAMPING_RATIO = 0.02
DEFAULT_STIFFNESS_SCALE = 0.6


@dataclass(frozen=True)
class LatticeModel:
    masses: tuple
    element_stiffness: tuple
    rayleigh_a0: float
    rayleigh_a1: float
    structure_id: str = ""
    state_label: str = "alpha"

    @property
    def dof_count(self):
        return len(self.masses)

    @property
    def n_elements(self):
        return len(self.element_stiffness)

    def mass_matrix(self):
        return np.diag(np.asarray(self.masses, dtype=np.float64))

    def stiffness_matrix(self):
        n = self.dof_count
        k = np.asarray(self.element_stiffness, dtype=np.float64)
        K = np.zeros((n, n))
        if n == 1:
            K[0, 0] = k.sum()
            return K
        for e, ke in enumerate(k):
            i, j = e - 1, e
            if i >= 0:
                K[i, i] += ke
            if j < n:
                K[j, j] += ke
            if i >= 0 and j < n:
                K[i, j] -= ke
                K[j, i] -= ke
        return K

    def damping_matrix(self):
        return self.rayleigh_a0 * self.mass_matrix() + self.rayleigh_a1 * self.stiffness_matrix()

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class StateSpec:
    label: str
    affected_elements: tuple = ()
    stiffness_scale: float = 1.0

    def __post_init__(self):
        if self.label not in ("alpha", "beta", "gamma"):
            raise InvalidConfig(f"state label must be alpha, beta or gamma, got {self.label!r}")
        if not 0.0 < self.stiffness_scale <= 1.0:
            raise InvalidConfig("stiffness_scale must lie in (0, 1]")
        if self.label == "alpha" and self.affected_elements:
            raise InvalidConfig("the alpha state has no affected elements")
        object.__setattr__(self, "affected_elements", tuple(int(e) for e in self.affected_elements))


@dataclass(frozen=True)
class ExcitationSpec:
    std_dev: float = 0.3
    duration_s: float = 1024.0
    sample_rate_hz: float = 256.0
    seed: int = 0
    mean: float = 0.0

    def __post_init__(self):
        if not self.std_dev > 0:
            raise InvalidConfig("excitation std_dev must be positive")
        if self.mean != 0.0:
            raise InvalidConfig("excitation mean is fixed at 0")
        if not self.sample_rate_hz > 0 or not self.duration_s > 0:
            raise InvalidConfig("duration and sample rate must be positive")
        n = self.duration_s * self.sample_rate_hz
        if not math.isclose(n, round(n), abs_tol=1e-9):
            raise InvalidConfig("duration_s x sample_rate_hz must be an integer")

    @property
    def n_samples(self):
        return int(round(self.duration_s * self.sample_rate_hz))


@dataclass(frozen=True)
class ModalTruth:
    frequencies: np.ndarray
    mode_shapes: np.ndarray  # (n_modes, dof_count), one unit-norm row per mode
    damping_ratios: np.ndarray

    def to_dict(self):
        return {
            "frequencies_hz": self.frequencies.tolist(),
            "mode_shapes": self.mode_shapes.tolist(),
            "damping_ratios": self.damping_ratios.tolist(),
        }


@dataclass(frozen=True)
class SimulationResult:
    responses: ChannelSet
    truth: ModalTruth
    excitation_used: ExcitationSpec
    pattern: str = "uniform"


@dataclass(frozen=True)
class ModelConfig:
    dof_count: int
    mass: object = 1.0  # scalar or per-DOF sequence
    stiffness: object = 1.0  # scalar or per-element sequence
    damping_ratio: float = DEFAULT_DAMPING_RATIO
    rayleigh: tuple | None = None  # explicit (a0, a1) overrides damping_ratio
    structure_id: str = ""
    extras: dict = field(default_factory=dict, compare=False)


def _expand(value, count, what):
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.size == 1:
        arr = np.full(count, float(arr[0]))
    if arr.size != count:
        raise InvalidConfig(f"{what}: expected {count} values, got {arr.size}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise InvalidConfig(f"{what} must be positive and finite")
    return tuple(float(v) for v in arr)


def rayleigh_coefficients(omega1, omega2, zeta):
    """``(a0, a1)`` giving damping ratio ``zeta`` at both circular frequencies."""
    return 2.0 * zeta * omega1 * omega2 / (omega1 + omega2), 2.0 * zeta / (omega1 + omega2)


def build_model(config):
    """Assemble a LatticeModel from a :class:`ModelConfig` (or a mapping of its fields)."""
    if not isinstance(config, ModelConfig):
        try:
            config = ModelConfig(**config)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc
    n = int(config.dof_count)
    if n < 1:
        raise InvalidConfig("dof_count must be >= 1")
    masses = _expand(config.mass, n, "mass")
    stiffness = _expand(config.stiffness, 1 if n == 1 else n + 1, "stiffness")
    bare = LatticeModel(masses, stiffness, 0.0, 0.0, config.structure_id)
    if config.rayleigh is not None:
        a0, a1 = (float(c) for c in config.rayleigh)
        if a0 < 0 or a1 < 0:
            raise InvalidConfig("Rayleigh coefficients must be >= 0")
    else:
        if config.damping_ratio < 0:
            raise InvalidConfig("damping_ratio must be >= 0")
        w = 2 * np.pi * analytic_modes(bare).frequencies
        a0, a1 = rayleigh_coefficients(w[0], w[min(1, w.size - 1)], config.damping_ratio)
    return replace(bare, rayleigh_a0=a0, rayleigh_a1=a1)


def _symmetric_profile(n, ends, middle):
    """Values varying parabolically from ``ends`` to ``middle`` and back (mirror-symmetric)."""
    x = np.linspace(-1.0, 1.0, n)
    return ends + (middle - ends) * (1.0 - x**2)


def _preset_configs():
    # element stiffness / mass set so bridge2 > bridge1 ~ bridge3 > bridge4 in stiffness
    return {
        "bridge1": ModelConfig(12, mass=1.0, stiffness=7000.0, structure_id="bridge1"),
        "bridge2": ModelConfig(10, mass=1.2, stiffness=11000.0, structure_id="bridge2"),
        "bridge3": ModelConfig(
            12,
            mass=_symmetric_profile(12, 0.9, 1.15),
            stiffness=_symmetric_profile(13, 7600.0, 5800.0),
            structure_id="bridge3",
        ),
        "bridge4": ModelConfig(14, mass=1.4, stiffness=4200.0, structure_id="bridge4"),
    }


PRESETS = ("bridge1", "bridge2", "bridge3", "bridge4")


def preset(name):
    configs = _preset_configs()
    if name not in configs:
        raise InvalidConfig(f"unknown preset {name!r}; choose from {PRESETS}")
    return build_model(configs[name])


def mirror_elements(elements, n_elements):
    return tuple(sorted(n_elements - 1 - int(e) for e in elements))


def default_damage_element(model):
    """Element just left of midspan."""
    return model.n_elements // 2 - 1


def state_spec(model, label, stiffness_scale=DEFAULT_STIFFNESS_SCALE, element=None):
    """Standard alpha/beta/gamma specs: gamma mirrors beta's element."""
    if label == "alpha":
        return StateSpec("alpha")
    beta_elements = (default_damage_element(model) if element is None else int(element),)
    if label == "beta":
        return StateSpec("beta", beta_elements, stiffness_scale)
    if label == "gamma":
        return StateSpec("gamma", mirror_elements(beta_elements, model.n_elements), stiffness_scale)
    raise InvalidConfig(f"unknown state label {label!r}")


def apply_state(model, spec):
    """Scale the stiffness of the listed elements; everything else is kept."""
    k = list(model.element_stiffness)
    for e in spec.affected_elements:
        if not 0 <= e < len(k):
            raise UnknownElement(f"element {e} not in model with {len(k)} elements")
        k[e] *= spec.stiffness_scale
    return replace(model, element_stiffness=tuple(k), state_label=spec.label)


def _fix_sign(vec):
    mags = np.abs(vec)
    # first entry within round-off of the maximum decides the sign (stable for symmetric shapes)
    idx = int(np.argmax(mags >= mags.max() * (1.0 - 1e-9)))
    return -vec if vec[idx] < 0 else vec


def analytic_modes(model):
    """Solve ``K phi = w^2 M phi``; frequencies in Hz ascending, unit-norm shapes."""
    K = model.stiffness_matrix()
    M = model.mass_matrix()
    try:
        w2, vecs = eigh(K, M)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if np.any(w2 <= 0):
        raise SingularSystem("stiffness matrix is not positive definite")
    omega = np.sqrt(w2)
    shapes = np.array([_fix_sign(v / np.linalg.norm(v)) for v in vecs.T])
    zeta = model.rayleigh_a0 / (2 * omega) + model.rayleigh_a1 * omega / 2
    return ModalTruth(omega / (2 * np.pi), shapes, zeta)


def gaussian_excitation(spec):
    """Deterministic i.i.d. normal force record."""
    rng = np.random.default_rng(spec.seed)
    samples = rng.normal(spec.mean, spec.std_dev, spec.n_samples)
    return TimeRecord(spec.sample_rate_hz, samples, 0, "excitation", "alpha")


def load_matrix(excitation, dof_count, pattern="uniform", seed=None):
    """Per-DOF force histories ``(steps, dof_count)``.

    ``uniform`` applies the single record at every DOF; ``independent`` draws
    a separate record with the same statistics for each DOF.
    """
    if pattern == "uniform":
        return np.repeat(excitation.samples[:, None], dof_count, axis=1)
    if pattern == "independent":
        rng = np.random.default_rng(seed)
        loads = np.empty((excitation.samples.size, dof_count))
        loads[:, 0] = excitation.samples
        loads[:, 1:] = rng.normal(0.0, np.std(excitation.samples), (loads.shape[0], dof_count - 1))
        return loads
    raise InvalidConfig(f"unknown load pattern {pattern!r}")


def simulate_response(model, excitation, pattern="uniform", backend="auto", excitation_spec=None,
                      pattern_seed=None):
    """Acceleration response of every DOF to the excitation record (Newmark, average acceleration)."""
    dt = 1.0 / excitation.sample_rate
    forces = load_matrix(excitation, model.dof_count, pattern, pattern_seed)
    _, _, acc = newmark(model.mass_matrix(), model.damping_matrix(), model.stiffness_matrix(),
                        forces, dt, backend=backend)
    responses = ChannelSet.from_array(acc.T, excitation.sample_rate, model.structure_id,
                                      model.state_label)
    if excitation_spec is None:
        excitation_spec = ExcitationSpec(
            std_dev=float(np.std(excitation.samples)) or 1.0,
            duration_s=len(excitation) / excitation.sample_rate,
            sample_rate_hz=excitation.sample_rate,
        )
    return SimulationResult(responses, analytic_modes(model), excitation_spec, pattern)


def check_mirror_symmetric(model, rtol=1e-12):
    m = np.asarray(model.masses)
    k = np.asarray(model.element_stiffness)
    if not (np.allclose(m, m[::-1], rtol=rtol) and np.allclose(k, k[::-1], rtol=rtol)):
        raise ValidationError(f"model {model.structure_id!r} is not mirror-symmetric")
