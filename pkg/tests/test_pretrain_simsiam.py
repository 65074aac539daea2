import copy

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from geopretrain.encoder import backbone_spec, build_backbone
from geopretrain.errors import ConfigError, GeopretrainError
from geopretrain.pretrain import (
    SimSiamConfig,
    SimSiamModel,
    collapse_metric,
    collapse_threshold,
    multistep_lr,
    negcos,
    optimizer_param_groups,
    simsiam_loss,
    train_simsiam,
)

from conftest import make_ssl_images


class TestNegCos:
    def test_perfect_alignment(self):
        p = torch.tensor([1.0, 2.0, 3.0])
        assert float(negcos(p, p)) == pytest.approx(-1.0, abs=1e-6)

    def test_orthogonal(self):
        assert float(negcos(torch.tensor([1.0, 0.0]),
                            torch.tensor([0.0, 1.0]))) == pytest.approx(0.0, abs=1e-7)

    def test_anti_alignment(self):
        p = torch.tensor([1.0, -2.0, 0.5])
        assert float(negcos(p, -p)) == pytest.approx(1.0, abs=1e-6)

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            p = torch.from_numpy(rng.normal(size=6))
            z = torch.from_numpy(rng.normal(size=6))
            a, b = rng.uniform(0.1, 10, 2)
            assert float(negcos(a * p, b * z)) == pytest.approx(
                float(negcos(p, z)), abs=1e-6)

    def test_zero_norm_fatal(self):
        with pytest.raises(GeopretrainError, match="zero-norm"):
            negcos(torch.zeros(3), torch.ones(3))

    def test_batched_mean(self):
        p = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        z = torch.tensor([[1.0, 0.0], [1.0, 0.0]])
        assert float(negcos(p, z)) == pytest.approx(-0.5, abs=1e-7)

    def test_no_gradient_into_z(self):
        p = torch.randn(4, 8, requires_grad=True)
        z = torch.randn(4, 8, requires_grad=True)
        negcos(p, z).backward()
        assert z.grad is None
        assert p.grad is not None


class TestSimSiamLoss:
    def test_aligned_pairs_reach_minus_one(self):
        z1 = torch.randn(4, 16)
        z2 = torch.randn(4, 16)
        loss = simsiam_loss(z2, z1, z1, z2)  # p1 == z2, p2 == z1
        assert float(loss) == pytest.approx(-1.0, abs=1e-6)

    def test_view_swap_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p1, p2, z1, z2 = (torch.from_numpy(rng.normal(size=(3, 8))) for _ in range(4))
            a = float(simsiam_loss(p1, p2, z1, z2))
            b = float(simsiam_loss(p2, p1, z2, z1))
            assert abs(a - b) < 1e-6

    def test_bounded(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            vals = [torch.from_numpy(rng.normal(size=(5, 6))) for _ in range(4)]
            value = float(simsiam_loss(*vals))
            assert -1.0 - 1e-9 <= value <= 1.0 + 1e-9


class TestCollapseMetric:
    def test_identical_rows_zero(self):
        emb = np.tile([1.0, 2.0, 3.0], (6, 1))
        assert collapse_metric(emb) == 0.0

    def test_standard_basis_closed_form(self):
        for d in (4, 8, 32):
            emb = np.eye(d)
            expected = np.sqrt((1 / d) * (1 - 1 / d) * d / (d - 1))
            assert collapse_metric(emb) == pytest.approx(expected, rel=1e-12)
            assert expected == pytest.approx(1 / np.sqrt(d), rel=1e-12)

    def test_gaussian_rows_near_inverse_sqrt_d(self):
        rng = np.random.default_rng(3)
        emb = rng.normal(size=(1024, 128))
        value = collapse_metric(emb)
        assert abs(value - 1 / np.sqrt(128)) / (1 / np.sqrt(128)) < 0.15

    def test_needs_two_rows(self):
        with pytest.raises(GeopretrainError):
            collapse_metric(np.ones((1, 4)))


class TestOptimizerGrouping:
    def test_norm_and_bias_excluded_from_decay(self):
        bb = build_backbone(backbone_spec("tiny"), seed=0)
        model = SimSiamModel(bb, proj_hidden=32, proj_dim=16, pred_hidden=8)
        groups = optimizer_param_groups(model, weight_decay=1e-5)
        by_name = {g["group"]: g for g in groups}
        assert by_name["decay"]["weight_decay"] == 1e-5
        assert by_name["no_decay"]["weight_decay"] == 0.0
        assert all(n == "weight" for n in by_name["decay"]["names"])
        total = sum(len(g["params"]) for g in groups)
        assert total == len(list(model.parameters()))
        # every norm weight and every bias lands in the no-decay group
        norm_params = {id(m.weight) for m in model.modules()
                       if isinstance(m, (torch.nn.BatchNorm1d, torch.nn.BatchNorm2d))}
        no_decay_ids = {id(p) for p in by_name["no_decay"]["params"]}
        assert norm_params <= no_decay_ids

    def test_groups_feed_sgd(self):
        bb = build_backbone(backbone_spec("tiny"), seed=0)
        model = SimSiamModel(bb, proj_hidden=32, proj_dim=16, pred_hidden=8)
        opt = torch.optim.SGD(optimizer_param_groups(model, 1e-5), lr=0.1, momentum=0.9)
        decays = {g["weight_decay"] for g in opt.param_groups}
        assert decays == {1e-5, 0.0}


class TestConfig:
    def test_lr_scaling(self):
        cfg = SimSiamConfig(batch_size=128, base_lr=0.05)
        assert cfg.effective_lr == pytest.approx(0.05 * 128 / 256)
        cfg = SimSiamConfig(batch_size=128, base_lr=0.05, lr_scaling=False)
        assert cfg.effective_lr == 0.05

    def test_default_milestones_at_65_and_85_percent(self):
        cfg = SimSiamConfig(epochs=400)
        assert cfg.resolved_milestones() == [260, 340]

    def test_multistep_decay(self):
        assert multistep_lr(0, 1.0, [5, 8]) == 1.0
        assert multistep_lr(5, 1.0, [5, 8]) == pytest.approx(0.1)
        assert multistep_lr(9, 1.0, [5, 8]) == pytest.approx(0.01)

    def test_validation(self):
        with pytest.raises(ConfigError, match="milestones"):
            SimSiamConfig(epochs=10, milestones=(5, 12))
        with pytest.raises(ConfigError, match="base_lr"):
            SimSiamConfig(base_lr=0)


class TestTrainSimSiam:
    def test_zero_epochs_keeps_generalist_bits(self, tiny_generalist):
        images = make_ssl_images(n=8)
        cfg = SimSiamConfig(batch_size=4, epochs=0, view_size=32,
                            proj_hidden=32, proj_dim=16, pred_hidden=8, seed=0)
        ckpt, history = train_simsiam(images, tiny_generalist, cfg)
        assert history.rows == []
        for key, value in tiny_generalist.arrays.items():
            assert np.array_equal(ckpt.arrays[key], value), key
        assert ckpt.meta.method == "simsiam"
        namespaces = {k.split(".", 1)[0] for k in ckpt.arrays}
        assert namespaces == {"backbone", "projector", "predictor"}

    def test_short_run_history_in_bounds(self, tiny_generalist):
        images = make_ssl_images(n=8)
        cfg = SimSiamConfig(batch_size=4, base_lr=0.5, epochs=2, view_size=32,
                            proj_hidden=32, proj_dim=16, pred_hidden=8, seed=0)
        _, history = train_simsiam(images, tiny_generalist, cfg)
        assert history.columns == ["epoch", "loss", "lr", "collapse_metric"]
        assert len(history.rows) == 2
        for value in history.column("loss"):
            assert -1.0 - 1e-9 <= value <= 1.0 + 1e-9
        for value in history.column("collapse_metric"):
            assert value >= 0.0

    def test_collapse_warning_fires_after_patience(self, tiny_generalist, monkeypatch):
        import geopretrain.pretrain.simsiam as mod
        monkeypatch.setattr(mod, "collapse_metric", lambda emb: 0.0)
        images = make_ssl_images(n=8)
        cfg = SimSiamConfig(batch_size=4, base_lr=0.1, epochs=6, view_size=32,
                            proj_hidden=32, proj_dim=16, pred_hidden=8, seed=0)
        _, history = train_simsiam(images, tiny_generalist, cfg)
        assert history.warnings
        assert "collapse" in history.warnings[0]


class TestStopGradient:
    """Finite-difference verification of the stop-gradient loss topology."""

    def _model_and_views(self):
        torch.manual_seed(0)
        bb = build_backbone(backbone_spec("tiny"), seed=101)
        model = SimSiamModel(bb, proj_hidden=32, proj_dim=16, pred_hidden=8).double()
        model.train()
        rng = np.random.default_rng(55)
        x1 = torch.from_numpy(rng.uniform(-1, 1, size=(3, 3, 32, 32)))
        x2 = torch.from_numpy(rng.uniform(-1, 1, size=(3, 3, 32, 32)))
        return model, x1, x2

    def test_analytic_gradient_matches_finite_differences(self):
        model, x1, x2 = self._model_and_views()
        loss = simsiam_loss(*model(x1, x2))
        params = list(model.named_parameters())
        grads = torch.autograd.grad(loss, [p for _, p in params], allow_unused=True)

        with torch.no_grad():
            _, _, z1_0, z2_0 = model(x1, x2)

        def frozen_target_loss():
            p1 = model.predictor(model.represent(x1))
            p2 = model.predictor(model.represent(x2))
            with torch.no_grad():
                value = 0.5 * negcos(p1, z2_0) + 0.5 * negcos(p2, z1_0)
            return float(value)

        eps = 1e-5
        rng = np.random.default_rng(7)
        worst = 0.0
        for (_, p), g in zip(params, grads):
            g = torch.zeros_like(p) if g is None else g
            flat = p.data.view(-1)
            for idx in rng.choice(flat.numel(), size=min(2, flat.numel()), replace=False):
                idx = int(idx)
                orig = float(flat[idx])
                flat[idx] = orig + eps
                up = frozen_target_loss()
                flat[idx] = orig - eps
                down = frozen_target_loss()
                flat[idx] = orig
                fd = (up - down) / (2 * eps)
                an = float(g.view(-1)[idx])
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
        assert worst <= 1e-4

    def test_stopped_branch_gradient_is_zero(self):
        model, x1, x2 = self._model_and_views()
        twin = copy.deepcopy(model)
        p1 = model.predictor(model.represent(x1))
        z2 = twin.represent(x2)
        term = negcos(p1, z2)
        grads = torch.autograd.grad(term, list(twin.parameters()), allow_unused=True)
        worst = max((float(g.abs().max()) for g in grads if g is not None), default=0.0)
        assert worst <= 1e-8
        # same wiring without the stop lights up the twin's gradients
        raw = -(F.normalize(model.predictor(model.represent(x1)), dim=1)
                * F.normalize(twin.represent(x2), dim=1)).sum(1).mean()
        raw_grads = torch.autograd.grad(raw, list(twin.parameters()), allow_unused=True)
        assert max(float(g.abs().max()) for g in raw_grads if g is not None) > 1e-3
