import numpy as np
import pytest
import torch
from torch import nn

from conftest import make_windows
from fdcheck import directional_errors
from sst.dgcg import ModelState, init_params
from sst.errors import DomainEmpty, DomainMismatch, InvalidConfig, NonFiniteLoss, ShapeMismatch
from sst.fid import fid
from sst.signals import WindowSet
from sst.spectral import mmsc
from sst.training import (
    MONITOR_COLUMNS,
    LossWeights,
    TrainConfig,
    Trainer,
    critic_loss,
    cycle_loss,
    evaluate_training_epoch,
    generator_adv_loss,
    gradient_penalty,
    identity_loss,
    monitor_welch,
    read_monitor_csv,
    total_critic_loss,
    total_generator_loss,
    train,
    write_monitor_csv,
)


class Shift(nn.Module):
    def __init__(self, c):
        super().__init__()
        self.c = c

    def forward(self, x):
        return x + self.c


class LinearCritic(nn.Module):
    def __init__(self, w):
        super().__init__()
        self.w = nn.Parameter(torch.as_tensor(np.asarray(w, dtype=np.float64)))

    def forward(self, x):
        return x @ self.w


class ConstCritic(nn.Module):
    def __init__(self, c):
        super().__init__()
        self.c = c

    def forward(self, x):
        return torch.full(x.shape[:1], float(self.c), dtype=x.dtype) + 0.0 * x.sum(-1)


def toy_state(g_ab=None, g_ba=None, c_ab=None, c_ba=None):
    return ModelState(g_ab or nn.Identity(), g_ba or nn.Identity(),
                      c_ab or ConstCritic(0.0), c_ba or ConstCritic(0.0))


def unit(n, rng, norm=1.0):
    w = rng.normal(size=n)
    return norm * w / np.linalg.norm(w)


# ---- closed-form values ----------------------------------------------------

class TestGradientPenalty:
    @pytest.mark.parametrize("norm,lam,expected", [(1.0, 1.0, 0.0), (3.0, 1.0, 4.0), (0.0, 30.0, 30.0)])
    def test_linear_critic(self, rng, norm, lam, expected):
        crit = LinearCritic(unit(16, rng, norm))
        x = rng.normal(size=(5, 16))
        assert float(gradient_penalty(crit, x, lam).detach()) == pytest.approx(expected, abs=1e-9)

    def test_input_gradient_matches_finite_differences(self, tiny_state, rng):
        crit = tiny_state.c_ab
        x = torch.from_numpy(rng.normal(size=(1, 64))).requires_grad_(True)
        (g,) = torch.autograd.grad(crit(x).sum(), x)
        e = 1e-6
        num = np.empty(64)
        base = x.detach().clone()
        for i in range(64):
            up, dn = base.clone(), base.clone()
            up[0, i] += e
            dn[0, i] -= e
            num[i] = (float(crit(up).detach()) - float(crit(dn).detach())) / (2 * e)
        np.testing.assert_allclose(g.numpy()[0], num, rtol=1e-4, atol=1e-9 * np.abs(num).max())


class TestCriticLoss:
    def test_zero_critic(self, rng):
        a, b = rng.normal(size=(2, 4, 8))
        assert float(critic_loss("ab", b, a, toy_state(), LossWeights()).detach()) == pytest.approx(30.0, abs=1e-9)
        assert float(total_critic_loss(toy_state(), (a, b), LossWeights()).detach()) == pytest.approx(60.0, abs=1e-9)

    def test_linear_oracle(self, rng):
        w = unit(8, rng)
        state = toy_state(g_ab=Shift(0.5), c_ab=LinearCritic(w))
        real, src = rng.normal(size=(6, 8)), rng.normal(size=(6, 8))
        expected = w @ (src + 0.5).mean(0) - w @ real.mean(0)
        got = float(critic_loss("ab", real, src, state, LossWeights(lambda_gp=0.0)).detach())
        assert got == pytest.approx(expected, abs=1e-12)

    def test_domain_labels_are_checked(self, rng):
        a = make_windows(rng.normal(size=(4, 8)), "alpha")
        b = make_windows(rng.normal(size=(4, 8)), "beta")
        critic_loss("ab", b, a, toy_state(), LossWeights())
        with pytest.raises(DomainMismatch):
            critic_loss("ab", a, b, toy_state(), LossWeights())
        with pytest.raises(DomainMismatch):
            generator_adv_loss("ba", a, toy_state())
        with pytest.raises(InvalidConfig):
            critic_loss("xy", b, a, toy_state(), LossWeights())

    def test_interpolated_mode_uses_mix(self, rng):
        w = unit(8, rng, 2.0)
        state = toy_state(c_ab=LinearCritic(w))
        real, src = rng.normal(size=(2, 3, 8))
        # linear critic: gradient is w everywhere, so the penalty is (2-1)^2 * lambda regardless
        loss = critic_loss("ab", real, src, state, LossWeights(lambda_gp=1.0), "interpolated",
                           mix=np.full(3, 0.3))
        assert float(loss.detach()) == pytest.approx(w @ src.mean(0) - w @ real.mean(0) + 1.0, abs=1e-12)

    def test_descent_step(self, tiny_state, rng):
        real, src = rng.normal(size=(2, 4, 64))
        weights = LossWeights()
        crit = tiny_state.c_ab
        opt = torch.optim.SGD(crit.parameters(), lr=1e-3)
        before = critic_loss("ab", real, src, tiny_state, weights)
        opt.zero_grad()
        before.backward()
        opt.step()
        after = critic_loss("ab", real, src, tiny_state, weights)
        assert float(after.detach()) < float(before.detach())


class TestGeneratorLosses:
    def test_adversarial_constant_critic(self, rng):
        x = rng.normal(size=(3, 8))
        assert float(generator_adv_loss("ab", x, toy_state()).detach()) == 0.0
        assert float(generator_adv_loss("ba", x, toy_state(c_ba=ConstCritic(2.5))).detach()) == pytest.approx(-2.5)

    def test_adversarial_composition_oracle(self, tiny_state, rng):
        from sst.dgcg import critic_forward, generator_forward

        x = rng.normal(size=(4, 64))
        expected = -np.mean(critic_forward(tiny_state.c_ab, generator_forward(tiny_state.g_ab, x)))
        assert float(generator_adv_loss("ab", x, tiny_state).detach()) == pytest.approx(expected, abs=1e-12)

    def test_cycle_and_identity_closed_forms(self, rng):
        a, b = rng.normal(size=(2, 4, 8))
        assert float(cycle_loss(toy_state(), a, b).detach()) == 0.0
        assert float(identity_loss(toy_state(), a, b).detach()) == 0.0
        shifted = toy_state(g_ab=Shift(1.0))
        assert float(cycle_loss(shifted, a, b).detach()) == pytest.approx(2.0)
        assert float(identity_loss(toy_state(g_ab=Shift(-0.7)), a, b).detach()) == pytest.approx(0.7)

    def test_cycle_and_identity_match_l1_oracle(self, tiny_state, rng):
        from sst.dgcg import generator_forward as G

        a, b = rng.normal(size=(2, 4, 64))
        ab, ba = tiny_state.g_ab, tiny_state.g_ba
        cyc = np.mean(np.abs(G(ba, G(ab, a)) - a)) + np.mean(np.abs(G(ab, G(ba, b)) - b))
        idt = np.mean(np.abs(G(ab, b) - b)) + np.mean(np.abs(G(ba, a) - a))
        assert float(cycle_loss(tiny_state, a, b).detach()) == pytest.approx(cyc, abs=1e-12)
        assert float(identity_loss(tiny_state, a, b).detach()) == pytest.approx(idt, abs=1e-12)

    def test_total_is_weighted_sum_and_affine(self, tiny_state, rng):
        a, b = rng.normal(size=(2, 4, 64))
        adv = float(generator_adv_loss("ab", a, tiny_state).detach()) + float(generator_adv_loss("ba", b, tiny_state).detach())
        cyc, idt = float(cycle_loss(tiny_state, a, b).detach()), float(identity_loss(tiny_state, a, b).detach())
        for lc, li in [(0.0, 0.0), (10.0, 10.0), (3.0, 7.5)]:
            total = float(total_generator_loss(tiny_state, (a, b), LossWeights(lc, li, 30.0)).detach())
            assert total == pytest.approx(adv + lc * cyc + li * idt, abs=1e-12)

    def test_weighted_sum_example(self):
        from sst.training import combine_generator_losses

        assert combine_generator_losses(1.0, 2.0, 0.3, 0.1, LossWeights()) == pytest.approx(7.0)

    def test_identity_generators_zero_critics(self, rng):
        a, b = rng.normal(size=(2, 4, 8))
        assert float(total_generator_loss(toy_state(), (a, b), LossWeights()).detach()) == 0.0


class TestGradients:
    """Backprop against central differences on the reduced network."""

    def setup_batches(self, rng):
        return rng.normal(size=(2, 3, 64))

    def test_parameter_count(self, tiny_state):
        n = sum(p.numel() for _, p in tiny_state.named_arrays())
        assert n <= 10_000

    @pytest.mark.parametrize("which", ["critic", "adv", "cycle", "identity", "gp"])
    def test_loss_gradients(self, tiny_state, rng, which):
        a, b = self.setup_batches(rng)
        w = LossWeights()
        s = tiny_state
        losses = {
            "critic": (lambda: critic_loss("ab", b, a, s, w), s.c_ab.parameters()),
            "adv": (lambda: generator_adv_loss("ba", b, s),
                    list(s.g_ba.parameters()) + list(s.c_ba.parameters())),
            "cycle": (lambda: cycle_loss(s, a, b), list(s.g_ab.parameters()) + list(s.g_ba.parameters())),
            "identity": (lambda: identity_loss(s, a, b),
                         list(s.g_ab.parameters()) + list(s.g_ba.parameters())),
            "gp": (lambda: gradient_penalty(s.c_ba, a, 30.0), s.c_ba.parameters()),
        }
        fn, params = losses[which]
        assert max(directional_errors(fn, list(params))) <= 1e-4


# ---- training loop -----------------------------------------------------------

def toy_domains(n=16, length=64, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, length))
    kernel = np.ones(4) / 4
    b = 0.5 * np.array([np.convolve(w, kernel, "same") for w in a])
    return make_windows(a, "alpha"), make_windows(b, "beta")


FAST = dict(batch_size=4, epochs=2, learning_rate=1e-3, critic_iters=2, seed=11)


class TestTrain:
    def test_counters_and_log_length(self, tiny_arch):
        A, B = toy_domains()
        res = train(TrainConfig(**FAST), LossWeights(), A, B, tiny_arch)
        assert len(res.records) == 2 * (16 // 4)
        assert [r.iteration for r in res.records] == list(range(1, 9))
        assert res.counters == {"critic_ab": 16, "critic_ba": 16, "generator": 8}
        for r in res.records:
            vals = [r.total_generator_loss, r.total_critic_loss, r.fid_alpha, r.fid_beta]
            assert np.all(np.isfinite(vals)) and 0 <= r.mmsc_alpha <= 1

    def test_critic_step_leaves_other_networks(self, tiny_arch):
        A, B = toy_domains()
        state = init_params(tiny_arch, 0)
        trainer = Trainer(state, TrainConfig(**FAST), LossWeights(), A, B)
        snap = {k: v.detach().clone() for k, v in state.named_arrays()}
        ia, ib, mix = trainer.critic_batches(0, 0)
        trainer.critic_step("ab", trainer.B[ib], trainer.A[ia], mix[0], [])
        changed = {k.split(".")[0] for k, v in state.named_arrays() if not torch.equal(v, snap[k])}
        assert changed == {"c_ab"}

    def test_generator_step_leaves_critics(self, tiny_arch):
        A, B = toy_domains()
        state = init_params(tiny_arch, 0)
        trainer = Trainer(state, TrainConfig(**FAST), LossWeights(), A, B)
        snap = {k: v.detach().clone() for k, v in state.named_arrays()}
        ia, ib = trainer.generator_batches(0)
        trainer.generator_step(trainer.A[ia], trainer.B[ib], [])
        changed = {k.split(".")[0] for k, v in state.named_arrays() if not torch.equal(v, snap[k])}
        assert changed == {"g_ab", "g_ba"}
        assert all(p.requires_grad for p in state.c_ab.parameters())

    def test_epoch_batches_are_a_permutation(self, tiny_arch):
        A, B = toy_domains(n=12)
        trainer = Trainer(init_params(tiny_arch, 0), TrainConfig(**FAST), LossWeights(), A, B)
        seen = np.concatenate([trainer.generator_batches(i)[0] for i in range(3)])
        assert sorted(seen) == list(range(12))

    def test_deterministic_logs(self, tiny_arch, tmp_path):
        A, B = toy_domains()
        paths = []
        for k in range(2):
            res = train(TrainConfig(**FAST), LossWeights(), A, B, tiny_arch)
            paths.append(write_monitor_csv(res.records, tmp_path / f"m{k}.csv"))
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_resume_matches_continuous_run(self, tiny_arch, tmp_path):
        A, B = toy_domains()
        cfg = TrainConfig(**FAST, checkpoint_every=3)
        full = train(cfg, LossWeights(), A, B, tiny_arch, checkpoint_dir=tmp_path / "full")
        assert [p.name for p in full.checkpoints] == ["ckpt_0000003.sstckpt", "ckpt_0000006.sstckpt",
                                                     "ckpt_0000008.sstckpt"]
        resumed = train(cfg, LossWeights(), A, B, resume=full.checkpoints[0])
        assert resumed.records == full.records[3:]
        assert resumed.counters == full.counters

    def test_non_finite_aborts_with_iteration(self, tiny_arch):
        A, B = toy_domains()
        state = init_params(tiny_arch, 0)
        with torch.no_grad():
            state.g_ab.body[0].weight.fill_(float("nan"))
        with pytest.raises(NonFiniteLoss) as info:
            train(TrainConfig(**FAST), LossWeights(), A, B, state=state)
        assert info.value.iteration == 1

    def test_domain_errors(self, tiny_arch):
        A, B = toy_domains()
        empty = WindowSet(64, np.zeros((0, 64)), np.zeros((0, 2)), 256.0, "", "beta")
        with pytest.raises(DomainEmpty):
            train(TrainConfig(**FAST), LossWeights(), A, empty, tiny_arch)
        short = make_windows(np.zeros((4, 32)), "beta")
        with pytest.raises(ShapeMismatch):
            train(TrainConfig(**FAST), LossWeights(), A, short, tiny_arch)
        with pytest.raises(DomainMismatch):
            train(TrainConfig(**FAST), LossWeights(), B, A, tiny_arch)

    def test_config_validation(self):
        with pytest.raises(InvalidConfig):
            TrainConfig(batch_size=0)
        with pytest.raises(InvalidConfig):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(InvalidConfig):
            TrainConfig(gp_mode="real")
        with pytest.raises(InvalidConfig):
            LossWeights(lambda_gp=-1.0)
        d = TrainConfig()
        assert (d.batch_size, d.epochs, d.learning_rate, d.critic_iters) == (4, 160, 1e-5, 10)


class TestMonitoring:
    def test_identity_generators_are_perfect(self, rng):
        A, B = toy_domains()
        state = toy_state()
        state.config = None
        m = evaluate_training_epoch(state, A, B)
        assert m.mmsc_alpha == pytest.approx(1.0, abs=1e-12) and m.mmsc_beta == pytest.approx(1.0, abs=1e-12)
        assert m.fid_alpha == pytest.approx(0.0, abs=1e-9)

    def test_matches_direct_calls(self, tiny_state):
        from sst.dgcg import generator_forward as G

        A, B = toy_domains()
        m = evaluate_training_epoch(tiny_state, A, B)
        rec_a = G(tiny_state.g_ba, G(tiny_state.g_ab, A.windows))
        params = monitor_welch(64)
        assert m.fid_alpha == pytest.approx(fid(A.windows, rec_a), abs=1e-12)
        assert m.mmsc_alpha == pytest.approx(float(np.mean(mmsc(A.windows, rec_a, params))), abs=1e-12)
        t = evaluate_training_epoch(tiny_state, A, B, mode="translation")
        assert 0 <= t.mmsc_beta <= 1

    def test_csv_round_trip(self, tiny_arch, tmp_path):
        A, B = toy_domains()
        res = train(TrainConfig(**FAST), LossWeights(), A, B, tiny_arch)
        path = write_monitor_csv(res.records, tmp_path / "m.csv")
        assert path.read_text().splitlines()[0] == ",".join(MONITOR_COLUMNS)
        assert MONITOR_COLUMNS == ("iteration", "total_gen_loss", "total_critic_loss", "fid_alpha",
                                   "fid_beta", "mmsc_alpha", "mmsc_beta")
        assert read_monitor_csv(path) == res.records

    def test_domain_monitor_mode(self, tiny_arch):
        A, B = toy_domains()
        res = train(TrainConfig(**FAST, monitor="domain", max_iterations=2), LossWeights(), A, B, tiny_arch)
        assert len(res.records) == 2
