"""Cycle-consistent Wasserstein training with gradient penalty.

Sign convention: each critic minimises ``E[C(fake)] - E[C(real)] + GP`` and
the generators minimise ``-E[C(fake)]`` plus the weighted cycle and identity
terms. Both players therefore pull on ``C(fake)`` in opposite directions.

Batches are drawn without global RNG state: the generator batch of iteration
``i`` comes from a per-epoch permutation seeded by ``(seed, epoch)``, and
critic batches from ``(seed, i, k)``. A run resumed from a checkpoint
therefore replays exactly the batches an uninterrupted run would have seen.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .dgcg import ArchitectureConfig, ModelState, init_params, load_checkpoint, save_checkpoint
from .errors import DomainEmpty, DomainMismatch, InvalidConfig, IoFailure, NonFiniteLoss, ShapeMismatch
from .fid import fid
from .signals import WindowSet
from .spectral import WelchParams, mmsc

log = logging.getLogger(__name__)

DIRECTIONS = {"ab": ("alpha", "beta"), "ba": ("beta", "alpha")}
_DIRECTION_ALIASES = {
    "ab": "ab", "αβ": "ab", "alpha_beta": "ab", "alpha->beta": "ab",
    "ba": "ba", "βα": "ba", "beta_alpha": "ba", "beta->alpha": "ba",
}
MONITOR_COLUMNS = ("iteration", "total_gen_loss", "total_critic_loss",
                   "fid_alpha", "fid_beta", "mmsc_alpha", "mmsc_beta")


def direction_key(direction):
    try:
        return _DIRECTION_ALIASES[direction]
    except KeyError:
        raise InvalidConfig(f"unknown direction {direction!r}; use 'ab' or 'ba'") from None


@dataclass(frozen=True)
class LossWeights:
    lambda_cyc: float = 10.0
    lambda_id: float = 10.0
    lambda_gp: float = 30.0

    def __post_init__(self):
        if min(self.lambda_cyc, self.lambda_id, self.lambda_gp) < 0:
            raise InvalidConfig("loss weights must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    epochs: int = 160
    learning_rate: float = 1e-5
    critic_iters: int = 10
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    seed: int = 0
    checkpoint_every: int = 0  # generator iterations; 0 = final checkpoint only
    gp_mode: str = "generated"  # or "interpolated"
    monitor: str = "batch"  # or "domain"
    monitor_target: str = "cycle"  # or "translation" (domain monitor only)
    mmsc_segment_length: int | None = None
    max_iterations: int | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.critic_iters < 1:
            raise InvalidConfig("batch_size, epochs and critic_iters must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be positive")
        if self.weight_decay < 0:
            raise InvalidConfig("weight_decay must be >= 0")
        if self.gp_mode not in ("generated", "interpolated"):
            raise InvalidConfig("gp_mode must be 'generated' or 'interpolated'")
        if self.monitor not in ("batch", "domain"):
            raise InvalidConfig("monitor must be 'batch' or 'domain'")
        if self.monitor_target not in ("cycle", "translation"):
            raise InvalidConfig("monitor_target must be 'cycle' or 'translation'")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))


@dataclass(frozen=True)
class MonitorRecord:
    iteration: int
    total_generator_loss: float
    total_critic_loss: float
    fid_alpha: float
    fid_beta: float
    mmsc_alpha: float
    mmsc_beta: float

    def row(self):
        return [self.iteration] + [repr(float(getattr(self, f.name))) for f in fields(self)[1:]]


@dataclass(frozen=True)
class EpochMetrics:
    fid_alpha: float
    fid_beta: float
    mmsc_alpha: float
    mmsc_beta: float


@dataclass
class GeneratorTerms:
    total: torch.Tensor
    adv_ab: torch.Tensor
    adv_ba: torch.Tensor
    cycle: torch.Tensor
    identity: torch.Tensor
    rec_alpha: torch.Tensor
    rec_beta: torch.Tensor


@dataclass
class TrainResult:
    state: ModelState
    records: list
    checkpoints: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# losses

def _module_dtype(module):
    for p in module.parameters():
        return p.dtype
    return torch.float64


def _batch(batch, module=None, expect=None):
    """Tensor view of a batch; WindowSets have their state label checked."""
    if isinstance(batch, WindowSet):
        if expect is not None and batch.state_label != expect:
            raise DomainMismatch(f"expected a {expect} batch, got {batch.state_label}")
        batch = batch.windows
    if isinstance(batch, torch.Tensor):
        return batch
    dtype = _module_dtype(module) if module is not None else torch.float64
    return torch.tensor(np.asarray(batch, dtype=np.float64), dtype=dtype)


def gradient_penalty(critic, samples, lambda_gp, create_graph=True):
    """``lambda_gp * mean((||dC/dx||_2 - 1)^2)`` with the gradient taken at ``samples``."""
    x = _batch(samples, critic).detach().clone().requires_grad_(True)
    out = critic(x)
    (grad,) = torch.autograd.grad(out.sum(), x, create_graph=create_graph)
    norms = torch.linalg.vector_norm(grad.reshape(grad.shape[0], -1), dim=1)
    return lambda_gp * ((norms - 1.0) ** 2).mean()


def critic_loss(direction, real_target_batch, source_batch, state, weights, gp_mode="generated",
                mix=None):
    """Wasserstein critic loss of one direction.

    ``mix`` holds per-sample weights for the ``interpolated`` penalty mode
    (drawn uniformly when omitted).
    """
    d = direction_key(direction)
    src_label, tgt_label = DIRECTIONS[d]
    G, C = state.generator(d), state.critic(d)
    real = _batch(real_target_batch, C, expect=tgt_label)
    source = _batch(source_batch, G, expect=src_label)
    with torch.no_grad():
        fake = G(source)
    wasserstein = C(fake).mean() - C(real).mean()
    if gp_mode == "generated":
        points = fake
    elif gp_mode == "interpolated":
        n = min(real.shape[0], fake.shape[0])
        if mix is None:
            mix = torch.rand(n, dtype=real.dtype)
        mix = torch.as_tensor(mix, dtype=real.dtype).reshape(-1, 1)
        points = mix * real[:n] + (1.0 - mix) * fake[:n]
    else:
        raise InvalidConfig(f"unknown gp_mode {gp_mode!r}")
    return wasserstein + gradient_penalty(C, points, weights.lambda_gp)


def generator_adv_loss(direction, source_batch, state):
    d = direction_key(direction)
    G, C = state.generator(d), state.critic(d)
    x = _batch(source_batch, G, expect=DIRECTIONS[d][0])
    return -C(G(x)).mean()


def cycle_loss(state, batch_alpha, batch_beta):
    a = _batch(batch_alpha, state.g_ab, expect="alpha")
    b = _batch(batch_beta, state.g_ba, expect="beta")
    return (state.g_ba(state.g_ab(a)) - a).abs().mean() + (state.g_ab(state.g_ba(b)) - b).abs().mean()


def identity_loss(state, batch_alpha, batch_beta):
    a = _batch(batch_alpha, state.g_ba, expect="alpha")
    b = _batch(batch_beta, state.g_ab, expect="beta")
    return (state.g_ab(b) - b).abs().mean() + (state.g_ba(a) - a).abs().mean()


def combine_generator_losses(adv_ab, adv_ba, cycle, identity, weights):
    return adv_ab + adv_ba + weights.lambda_cyc * cycle + weights.lambda_id * identity


def generator_objective(state, batch_alpha, batch_beta, weights):
    """All generator terms with shared forward passes (six generator and two critic calls)."""
    a = _batch(batch_alpha, state.g_ab, expect="alpha")
    b = _batch(batch_beta, state.g_ba, expect="beta")
    fake_b = state.g_ab(a)
    fake_a = state.g_ba(b)
    rec_a = state.g_ba(fake_b)
    rec_b = state.g_ab(fake_a)
    adv_ab = -state.c_ab(fake_b).mean()
    adv_ba = -state.c_ba(fake_a).mean()
    cyc = (rec_a - a).abs().mean() + (rec_b - b).abs().mean()
    idt = (state.g_ab(b) - b).abs().mean() + (state.g_ba(a) - a).abs().mean()
    total = combine_generator_losses(adv_ab, adv_ba, cyc, idt, weights)
    return GeneratorTerms(total, adv_ab, adv_ba, cyc, idt, rec_a, rec_b)


def total_generator_loss(state, batches, weights):
    return generator_objective(state, batches[0], batches[1], weights).total


def total_critic_loss(state, batches, weights, gp_mode="generated"):
    batch_alpha, batch_beta = batches
    return (critic_loss("ab", batch_beta, batch_alpha, state, weights, gp_mode)
            + critic_loss("ba", batch_alpha, batch_beta, state, weights, gp_mode))


# ---------------------------------------------------------------------------
# monitoring

def monitor_welch(window_length, segment_length=None):
    seg = segment_length or min(1024, max(2, window_length // 4))
    return WelchParams(seg, 0.5, "hann")


def _translate(generator, windows, chunk=64):
    out = []
    with torch.no_grad():
        for start in range(0, windows.shape[0], chunk):
            out.append(generator(windows[start : start + chunk]))
    return torch.cat(out)


def _pair_metrics(real, other, params):
    real = np.asarray(real, dtype=np.float64)
    other = np.asarray(other, dtype=np.float64)
    n = min(real.shape[0], other.shape[0])
    return fid(real, other), float(np.mean(mmsc(real[:n], other[:n], params)))


def evaluate_training_epoch(state, domain_alpha, domain_beta, mode="cycle", mmsc_params=None):
    """FID and mean MMSC between each real domain and its reconstruction (or translation).

    ``cycle``: alpha vs G_ba(G_ab(alpha)), beta vs G_ab(G_ba(beta)).
    ``translation``: alpha vs G_ba(beta), beta vs G_ab(alpha), windows paired by index.
    """
    A = _batch(domain_alpha, state.g_ab, expect="alpha")
    B = _batch(domain_beta, state.g_ba, expect="beta")
    params = mmsc_params or monitor_welch(A.shape[-1])
    if mode == "cycle":
        hat_a = _translate(state.g_ba, _translate(state.g_ab, A))
        hat_b = _translate(state.g_ab, _translate(state.g_ba, B))
    elif mode == "translation":
        hat_a = _translate(state.g_ba, B)
        hat_b = _translate(state.g_ab, A)
    else:
        raise InvalidConfig(f"unknown evaluation mode {mode!r}")
    fa, ma = _pair_metrics(A.double().numpy(), hat_a.double().numpy(), params)
    fb, mb = _pair_metrics(B.double().numpy(), hat_b.double().numpy(), params)
    return EpochMetrics(fa, fb, ma, mb)


def write_monitor_csv(records, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MONITOR_COLUMNS)
            for r in records:
                writer.writerow(r.row())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_monitor_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != MONITOR_COLUMNS:
        raise IoFailure(f"{path}: unexpected header {rows[0]}")
    return [MonitorRecord(int(r[0]), *map(float, r[1:])) for r in rows[1:]]


# ---------------------------------------------------------------------------
# training loop

_OPTIMIZERS = {"g": ("g_ab", "g_ba"), "c_ab": ("c_ab",), "c_ba": ("c_ba",)}


class Trainer:
    """Holds the networks, their optimizers and the update counters of one run."""

    def __init__(self, state, config, weights, domain_alpha, domain_beta):
        self.state = state
        self.config = config
        self.weights = weights
        dtype = _module_dtype(state.g_ab)
        self.A = torch.tensor(np.asarray(domain_alpha.windows), dtype=dtype)
        self.B = torch.tensor(np.asarray(domain_beta.windows), dtype=dtype)
        self.domain_alpha = domain_alpha
        self.domain_beta = domain_beta
        self.batch = min(config.batch_size, self.A.shape[0], self.B.shape[0])
        self.iters_per_epoch = max(1, min(self.A.shape[0], self.B.shape[0]) // self.batch)
        total = config.epochs * self.iters_per_epoch
        if config.max_iterations is not None:
            total = min(total, int(config.max_iterations))
        self.total_iterations = total
        self.optimizers = {
            key: torch.optim.AdamW(
                [p for net in nets for p in getattr(state, net).parameters()],
                lr=config.learning_rate, betas=config.betas, weight_decay=config.weight_decay,
            )
            for key, nets in _OPTIMIZERS.items()
        }
        self.counters = {"critic_ab": 0, "critic_ba": 0, "generator": 0}
        self.welch = monitor_welch(self.A.shape[-1], config.mmsc_segment_length)
        self.iteration = 0

    # -- batches ---------------------------------------------------------
    def generator_batches(self, it):
        epoch, pos = divmod(it, self.iters_per_epoch)
        seed = self.config.seed
        sl = slice(pos * self.batch, (pos + 1) * self.batch)
        ia = np.random.default_rng([seed, epoch, 0]).permutation(self.A.shape[0])[sl]
        ib = np.random.default_rng([seed, epoch, 1]).permutation(self.B.shape[0])[sl]
        return ia, ib

    def critic_batches(self, it, k):
        rng = np.random.default_rng([self.config.seed, it, k, 2])
        ia = rng.choice(self.A.shape[0], self.batch, replace=False)
        ib = rng.choice(self.B.shape[0], self.batch, replace=False)
        mix = rng.random((2, self.batch))
        return ia, ib, mix

    # -- updates ---------------------------------------------------------
    def _check(self, value, what, records):
        if not math.isfinite(value):
            raise NonFiniteLoss(f"non-finite {what} at iteration {self.iteration + 1}",
                                self.iteration + 1, records)

    def critic_step(self, direction, real, source, mix, records):
        opt = self.optimizers["c_" + direction]
        opt.zero_grad(set_to_none=True)
        loss = critic_loss(direction, real, source, self.state, self.weights,
                           self.config.gp_mode, mix)
        self._check(loss.item(), f"critic_{direction} loss", records)
        loss.backward()
        opt.step()
        self.counters["critic_" + direction] += 1
        return loss.item()

    def generator_step(self, a, b, records):
        critics = (self.state.c_ab, self.state.c_ba)
        for c in critics:
            c.requires_grad_(False)
        try:
            opt = self.optimizers["g"]
            opt.zero_grad(set_to_none=True)
            terms = generator_objective(self.state, a, b, self.weights)
            self._check(terms.total.item(), "generator loss", records)
            terms.total.backward()
            opt.step()
        finally:
            for c in critics:
                c.requires_grad_(True)
        self.counters["generator"] += 1
        return terms

    def step(self, records):
        it = self.iteration
        critic_total = float("nan")
        for k in range(self.config.critic_iters):
            ia, ib, mix = self.critic_batches(it, k)
            a, b = self.A[ia], self.B[ib]
            l_ab = self.critic_step("ab", b, a, mix[0], records)
            l_ba = self.critic_step("ba", a, b, mix[1], records)
            critic_total = l_ab + l_ba
        ia, ib = self.generator_batches(it)
        a, b = self.A[ia], self.B[ib]
        terms = self.generator_step(a, b, records)
        self.iteration += 1
        record = self.monitor(terms, a, b, critic_total)
        for name in ("total_generator_loss", "total_critic_loss", "fid_alpha", "fid_beta",
                     "mmsc_alpha", "mmsc_beta"):
            if not math.isfinite(getattr(record, name)):
                raise NonFiniteLoss(f"non-finite {name} at iteration {record.iteration}",
                                    record.iteration, records)
        return record

    def monitor(self, terms, a, b, critic_total):
        if self.config.monitor == "batch" and self.batch >= 2:
            fa, ma = _pair_metrics(a.detach().double().numpy(), terms.rec_alpha.detach().double().numpy(), self.welch)
            fb, mb = _pair_metrics(b.detach().double().numpy(), terms.rec_beta.detach().double().numpy(), self.welch)
        else:
            m = evaluate_training_epoch(self.state, self.A, self.B, self.config.monitor_target, self.welch)
            fa, fb, ma, mb = m.fid_alpha, m.fid_beta, m.mmsc_alpha, m.mmsc_beta
        return MonitorRecord(self.iteration, float(terms.total.item()), float(critic_total), fa, fb, ma, mb)

    # -- persistence ------------------------------------------------------
    def optimizer_arrays(self):
        arrays, steps = {}, {}
        names = dict((id(p), n) for n, p in self.state.named_arrays())
        for key, opt in self.optimizers.items():
            steps[key] = []
            for p in opt.param_groups[0]["params"]:
                st = opt.state.get(p, {})
                name = names[id(p)]
                steps[key].append(float(st["step"]) if "step" in st else 0.0)
                if "exp_avg" in st:
                    arrays[f"opt.{key}.{name}.exp_avg"] = st["exp_avg"].detach().double().numpy()
                    arrays[f"opt.{key}.{name}.exp_avg_sq"] = st["exp_avg_sq"].detach().double().numpy()
        return arrays, steps

    def load_optimizer_arrays(self, arrays, steps):
        names = dict((id(p), n) for n, p in self.state.named_arrays())
        for key, opt in self.optimizers.items():
            for p, step in zip(opt.param_groups[0]["params"], steps.get(key, [])):
                name = names[id(p)]
                if f"opt.{key}.{name}.exp_avg" not in arrays:
                    continue
                opt.state[p] = {
                    "step": torch.tensor(float(step)),
                    "exp_avg": torch.as_tensor(arrays[f"opt.{key}.{name}.exp_avg"].copy(), dtype=p.dtype),
                    "exp_avg_sq": torch.as_tensor(arrays[f"opt.{key}.{name}.exp_avg_sq"].copy(), dtype=p.dtype),
                }

    def save(self, path, records_count=None):
        arrays, steps = self.optimizer_arrays()
        epoch = self.iteration // self.iters_per_epoch
        return save_checkpoint(
            path, self.state, epoch=epoch, iteration=self.iteration, optimizer_arrays=arrays,
            extra={"optimizer_steps": steps, "counters": self.counters,
                   "train_config": _config_dict(self.config), "weights": asdict(self.weights)},
        )


def _config_dict(config):
    d = asdict(config)
    d["betas"] = list(d["betas"])
    return d


def _validate_domains(domain_alpha, domain_beta, arch):
    for name, dom in (("alpha", domain_alpha), ("beta", domain_beta)):
        if dom is None or len(dom) == 0:
            raise DomainEmpty(f"the {name} domain has no windows")
        if dom.window_length != arch.input_length:
            raise ShapeMismatch(
                f"{name} windows have {dom.window_length} samples, model expects {arch.input_length}"
            )
    if domain_alpha.state_label != "alpha" or domain_beta.state_label != "beta":
        raise DomainMismatch(
            f"expected alpha/beta domains, got {domain_alpha.state_label}/{domain_beta.state_label}"
        )


def train(config, weights, domain_alpha, domain_beta, arch=None, *, state=None, resume=None,
          checkpoint_dir=None, callback=None):
    """Run the alternating critic/generator schedule.

    Each generator iteration performs ``critic_iters`` updates of each critic
    followed by one joint update of both generators; one epoch is a pass over
    the smaller domain in generator batches. Returns a :class:`TrainResult`
    whose ``records`` hold one MonitorRecord per generator iteration executed
    in this call.
    """
    header = None
    if resume is not None:
        state, header, extra = load_checkpoint(resume)
        arch = state.config
    if arch is None:
        arch = state.config if state is not None else ArchitectureConfig()
    _validate_domains(domain_alpha, domain_beta, arch)
    if state is None:
        state = init_params(arch, config.seed)
    trainer = Trainer(state, config, weights, domain_alpha, domain_beta)
    if header is not None:
        trainer.iteration = int(header["iteration"])
        trainer.counters.update(header.get("counters", {}))
        trainer.load_optimizer_arrays(extra, header.get("optimizer_steps", {}))

    records, checkpoints = [], []
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    while trainer.iteration < trainer.total_iterations:
        record = trainer.step(records)
        records.append(record)
        if callback is not None:
            callback(record)
        every = config.checkpoint_every
        if ckpt_dir is not None and every and trainer.iteration % every == 0 \
                and trainer.iteration < trainer.total_iterations:
            checkpoints.append(trainer.save(ckpt_dir / f"ckpt_{trainer.iteration:07d}.sstckpt"))
        if record.iteration % 50 == 0:
            log.info("iteration %d/%d  G=%.4g  C=%.4g  mmsc=(%.3f, %.3f)", record.iteration,
                     trainer.total_iterations, record.total_generator_loss,
                     record.total_critic_loss, record.mmsc_alpha, record.mmsc_beta)
    if ckpt_dir is not None:
        checkpoints.append(trainer.save(ckpt_dir / f"ckpt_{trainer.iteration:07d}.sstckpt"))
    return TrainResult(state, records, checkpoints, dict(trainer.counters))
