"""Generators and critics of the cycle-generative model, plus checkpoint I/O.

Generator: stride-1 entry conv, strided downsampling convs, gated mapping
blocks with additive skips, transposed-conv upsampling, stride-1 exit conv to
one channel. The input is added back before the output nonlinearity, so
``G(x) = s * tanh(body(x) + x / s)`` with ``s = output_scale``.

Critic: strided convs, global average over time, linear scalar head.
Mish follows every conv except the generator exit conv.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit
import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidConfig, IoFailure, LengthMismatch, ShapeMismatch
from .signals import read_header

SSTCKPT_MAGIC = "SSTCKPT"
NETWORKS = ("g_ab", "g_ba", "c_ab", "c_ba")
STAGE_KINDS = ("conv", "downsample", "mapping", "upsample")
_DTYPES = {"float64": torch.float64, "float32": torch.float32}


def mish(x):
    """``x * tanh(softplus(x))`` for tensors, arrays or scalars."""
    if isinstance(x, torch.Tensor):
        return x * torch.tanh(F.softplus(x))
    x = np.asarray(x, dtype=np.float64)
    out = x * np.tanh(np.logaddexp(0.0, x))
    return float(out) if out.ndim == 0 else out


def glu(values, gates):
    """``values * sigmoid(gates)``."""
    if isinstance(values, torch.Tensor):
        if values.shape != gates.shape:
            raise LengthMismatch(f"values {tuple(values.shape)} vs gates {tuple(gates.shape)}")
        return values * torch.sigmoid(gates)
    values = np.asarray(values, dtype=np.float64)
    gates = np.asarray(gates, dtype=np.float64)
    if values.shape != gates.shape:
        raise LengthMismatch(f"values {values.shape} vs gates {gates.shape}")
    return values * expit(gates)


@dataclass(frozen=True)
class Stage:
    kind: str
    channels: int
    kernel: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kind not in STAGE_KINDS:
            raise InvalidConfig(f"stage kind must be one of {STAGE_KINDS}, got {self.kind!r}")
        if min(self.channels, self.kernel, self.stride) < 1 or self.padding < 0:
            raise InvalidConfig(f"invalid stage {self}")
        if self.kind == "mapping" and (self.stride != 1 or self.kernel % 2 == 0):
            raise InvalidConfig("mapping blocks need stride 1 and an odd kernel")

    def out_length(self, length):
        if self.kind == "upsample":
            return (length - 1) * self.stride - 2 * self.padding + self.kernel
        if self.kind == "mapping":
            return length
        return (length + 2 * self.padding - self.kernel) // self.stride + 1


def _same(kernel):
    return Stage("conv", 1, kernel, 1, kernel // 2)


@dataclass(frozen=True)
class ArchitectureConfig:
    input_length: int = 4096
    generator: tuple = ()
    critic: tuple = ()
    output_scale: float = 1.0
    dtype: str = "float64"

    def __post_init__(self):
        gen = tuple(s if isinstance(s, Stage) else Stage(**s) for s in self.generator)
        crit = tuple(s if isinstance(s, Stage) else Stage(**s) for s in self.critic)
        if not gen:
            gen = ArchitectureConfig.standard(self.input_length).generator
        if not crit:
            crit = ArchitectureConfig.standard(self.input_length).critic
        object.__setattr__(self, "generator", gen)
        object.__setattr__(self, "critic", crit)
        self.validate()

    @classmethod
    def standard(cls, input_length=4096, channels=(32, 64, 128), mapping_blocks=4, mapping_kernel=5,
                 edge_kernel=15, resample_kernel=8, critic_channels=(32, 64, 128, 256),
                 critic_kernel=8, output_scale=1.0, dtype="float64"):
        """Entry conv, len(channels)-1 halvings, mapping blocks, mirrored doublings, exit conv."""
        pad = (resample_kernel - 2) // 2
        gen = [Stage("conv", channels[0], edge_kernel, 1, edge_kernel // 2)]
        gen += [Stage("downsample", c, resample_kernel, 2, pad) for c in channels[1:]]
        gen += [Stage("mapping", channels[-1], mapping_kernel, 1, mapping_kernel // 2)] * mapping_blocks
        gen += [Stage("upsample", c, resample_kernel, 2, pad) for c in reversed(channels[:-1])]
        gen += [Stage("conv", 1, edge_kernel, 1, edge_kernel // 2)]
        cpad = (critic_kernel - 2) // 2
        crit = [Stage("downsample", c, critic_kernel, 2, cpad) for c in critic_channels]
        return cls(input_length, tuple(gen), tuple(crit), output_scale, dtype)

    @property
    def mapping_block_count(self):
        return sum(s.kind == "mapping" for s in self.generator)

    @property
    def torch_dtype(self):
        return _DTYPES[self.dtype]

    def validate(self):
        if self.input_length < 1:
            raise InvalidConfig("input_length must be positive")
        if not self.output_scale > 0:
            raise InvalidConfig("output_scale must be positive")
        if self.dtype not in _DTYPES:
            raise InvalidConfig(f"dtype must be one of {sorted(_DTYPES)}")
        length, ch = self.input_length, 1
        for s in self.generator:
            if s.kind == "mapping" and s.channels != ch:
                raise InvalidConfig(f"mapping block expects {ch} channels, got {s.channels}")
            length, ch = s.out_length(length), s.channels
            if length < 1:
                raise InvalidConfig("generator stage shrinks the signal to nothing")
        if length != self.input_length or ch != 1:
            raise InvalidConfig(
                f"generator maps length {self.input_length} to {length} with {ch} channels; "
                "stride/padding bookkeeping must return one channel of the input length"
            )
        if self.generator[-1].kind != "conv":
            raise InvalidConfig("the generator must end with a stride-1 conv stage")
        length = self.input_length
        for s in self.critic:
            if s.kind not in ("conv", "downsample"):
                raise InvalidConfig("critic stages must be convolutions")
            length = s.out_length(length)
            if length < 1:
                raise InvalidConfig("critic stages shrink the signal to nothing")

    def to_dict(self):
        return {
            "input_length": self.input_length,
            "generator": [asdict(s) for s in self.generator],
            "critic": [asdict(s) for s in self.critic],
            "output_scale": self.output_scale,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "generator" in data or "critic" in data:
            return cls(**data)
        return cls.standard(**data)


class MappingBlock(nn.Module):
    """Gated block: ``h + values(h) * sigmoid(gates(h))``."""

    def __init__(self, channels, kernel):
        super().__init__()
        self.values = nn.Conv1d(channels, channels, kernel, padding=kernel // 2)
        self.gates = nn.Conv1d(channels, channels, kernel, padding=kernel // 2)

    def forward(self, h):
        return h + glu(self.values(h), self.gates(h))


class Mish(nn.Module):
    def forward(self, x):
        return mish(x)


def _conv_layer(stage, in_ch):
    if stage.kind == "upsample":
        return nn.ConvTranspose1d(in_ch, stage.channels, stage.kernel, stage.stride, stage.padding)
    return nn.Conv1d(in_ch, stage.channels, stage.kernel, stage.stride, stage.padding)


class Generator(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.input_length = config.input_length
        self.output_scale = float(config.output_scale)
        layers = []
        ch = 1
        last = len(config.generator) - 1
        for i, stage in enumerate(config.generator):
            if stage.kind == "mapping":
                layers.append(MappingBlock(ch, stage.kernel))
                continue
            layers.append(_conv_layer(stage, ch))
            if i != last:
                layers.append(Mish())
            ch = stage.channels
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        if x.shape[-1] != self.input_length:
            raise ShapeMismatch(f"expected windows of {self.input_length} samples, got {x.shape[-1]}")
        s = self.output_scale
        return s * torch.tanh(self.body(x.unsqueeze(-2)).squeeze(-2) + x / s)


class Critic(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.input_length = config.input_length
        layers = []
        ch = 1
        for stage in config.critic:
            layers += [_conv_layer(stage, ch), Mish()]
            ch = stage.channels
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(ch, 1)

    def forward(self, x):
        if x.shape[-1] != self.input_length:
            raise ShapeMismatch(f"expected windows of {self.input_length} samples, got {x.shape[-1]}")
        h = self.features(x.unsqueeze(-2)).mean(dim=-1)
        return self.head(h).squeeze(-1)


@dataclass
class ModelState:
    """The four networks plus the configuration that shaped them."""

    g_ab: nn.Module
    g_ba: nn.Module
    c_ab: nn.Module
    c_ba: nn.Module
    config: ArchitectureConfig | None = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def networks(self):
        return {name: getattr(self, name) for name in NETWORKS}

    def generator(self, direction):
        return self.g_ab if direction == "ab" else self.g_ba

    def critic(self, direction):
        return self.c_ab if direction == "ab" else self.c_ba

    def named_arrays(self):
        """``(name, tensor)`` for every parameter in manifest order."""
        for net in NETWORKS:
            for pname, p in getattr(self, net).named_parameters():
                yield f"{net}.{pname}", p

    def clone(self):
        return copy.deepcopy(self)


def _fan_in(module):
    if isinstance(module, (nn.Conv1d, nn.ConvTranspose1d)):
        in_ch = module.in_channels
        return in_ch * module.kernel_size[0]
    return module.in_features


def init_params(config, seed=0):
    """Fresh networks: weights ~ U(+/- sqrt(1/fan_in)), zero biases, fixed by ``seed``."""
    if not isinstance(config, ArchitectureConfig):
        raise InvalidConfig("init_params needs an ArchitectureConfig")
    gen = torch.Generator().manual_seed(int(seed))
    nets = {
        "g_ab": Generator(config),
        "g_ba": Generator(config),
        "c_ab": Critic(config),
        "c_ba": Critic(config),
    }
    with torch.no_grad():
        for net in nets.values():
            net.to(config.torch_dtype)
            for module in net.modules():
                if isinstance(module, (nn.Conv1d, nn.ConvTranspose1d, nn.Linear)):
                    bound = float(np.sqrt(1.0 / _fan_in(module)))
                    w = torch.rand(module.weight.shape, generator=gen, dtype=torch.float64)
                    module.weight.copy_((2.0 * w - 1.0) * bound)
                    if module.bias is not None:
                        module.bias.zero_()
    return ModelState(**nets, config=config, seed=int(seed))


def _as_batch(window, module):
    dtype = next(module.parameters()).dtype if any(True for _ in module.parameters()) else torch.float64
    arr = torch.tensor(np.asarray(window, dtype=np.float64), dtype=dtype)
    return arr.unsqueeze(0) if arr.ndim == 1 else arr, arr.ndim == 1


def generator_forward(generator, window):
    """Translate one window (or a ``(n, L)`` batch) with a generator; returns NumPy."""
    x, single = _as_batch(window, generator)
    with torch.no_grad():
        y = generator(x).to(torch.float64).numpy()
    return y[0] if single else y


def critic_forward(critic, window):
    """Critic score(s) for one window (float) or a batch (array)."""
    x, single = _as_batch(window, critic)
    with torch.no_grad():
        y = critic(x).to(torch.float64).numpy()
    return float(y[0]) if single else y


# ---------------------------------------------------------------------------
# SSTCKPT: JSON header line + float64 LE arrays in manifest order

def save_checkpoint(path, state, epoch=0, iteration=0, optimizer_arrays=None, extra=None):
    """Write ``state`` (and optional named optimizer arrays) to ``path``."""
    arrays = [(name, t.detach().to(torch.float64).cpu().numpy()) for name, t in state.named_arrays()]
    arrays += list((optimizer_arrays or {}).items())
    header = {
        "magic": SSTCKPT_MAGIC,
        "version": 1,
        "config": state.config.to_dict() if state.config is not None else None,
        "epoch": int(epoch),
        "iteration": int(iteration),
        "seed": int(state.seed),
        "manifest": [[name, list(np.shape(a))] for name, a in arrays],
    }
    if extra:
        header.update(extra)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
            for _, a in arrays:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def load_checkpoint(path):
    """Read a checkpoint; returns ``(state, header, extra_arrays)``.

    Parameter shapes are validated against networks rebuilt from the stored
    config. ``extra_arrays`` holds manifest entries that are not network
    parameters (optimizer moments).
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            header = read_header(fh, SSTCKPT_MAGIC, path)
            payload = fh.read()
    except FileNotFoundError as exc:
        raise IoFailure(f"no such file: {path}") from exc
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    config = ArchitectureConfig.from_dict(header["config"])
    state = init_params(config, header.get("seed", 0))
    flat = np.frombuffer(payload, dtype="<f8")
    offset = 0
    arrays = {}
    for name, shape in header["manifest"]:
        size = int(np.prod(shape)) if shape else 1
        if offset + size > flat.size:
            raise IoFailure(f"{path}: payload truncated at {name}")
        arrays[name] = flat[offset : offset + size].reshape(shape)
        offset += size
    if offset != flat.size:
        raise IoFailure(f"{path}: {flat.size - offset} trailing values")
    params = dict(state.named_arrays())
    with torch.no_grad():
        for name, p in params.items():
            if name not in arrays:
                raise IoFailure(f"{path}: missing parameter {name}")
            if tuple(arrays[name].shape) != tuple(p.shape):
                raise IoFailure(f"{path}: {name} has shape {arrays[name].shape}, expected {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arrays[name].copy()))
    if not all(torch.isfinite(p).all() for p in params.values()):
        raise IoFailure(f"{path}: non-finite parameters")
    extra = {k: v for k, v in arrays.items() if k not in params}
    return state, header, extra
