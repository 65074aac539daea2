import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from geopretrain.data import load_classification_folder
from geopretrain.errors import ConfigError
from geopretrain.pretrain import (
    SupTrainConfig,
    evaluate_accuracy,
    one_cycle_lr,
    train_supervised,
)


class TestOneCycle:
    def test_invariants(self):
        total, peak = 200, 1e-3
        values = [one_cycle_lr(s, total, peak, 0.3) for s in range(total)]
        assert values[0] < peak
        assert abs(max(values) - peak) < 1e-9
        assert values[-1] < values[0]

    def test_peak_hit_exactly(self):
        total = 100
        warm = round(0.3 * (total - 1))
        assert one_cycle_lr(warm, total, 0.05, 0.3) == 0.05

    def test_monotone_phases(self):
        total = 50
        values = [one_cycle_lr(s, total, 1.0, 0.2) for s in range(total)]
        peak_at = int(np.argmax(values))
        assert all(a <= b + 1e-15 for a, b in zip(values[:peak_at], values[1:peak_at + 1]))
        assert all(a >= b - 1e-15 for a, b in zip(values[peak_at:], values[peak_at + 1:]))

    def test_bad_params(self):
        with pytest.raises(ConfigError):
            one_cycle_lr(0, 10, -1.0)
        with pytest.raises(ConfigError):
            one_cycle_lr(0, 10, 1.0, pct_warmup=0.0)


def test_zero_lr_step_leaves_weights_unchanged():
    model = torch.nn.Linear(4, 2)
    before = {k: v.clone() for k, v in model.state_dict().items()}
    opt = torch.optim.Adam(model.parameters(), lr=0.0)
    loss = model(torch.randn(8, 4)).pow(2).sum()
    opt.zero_grad()
    loss.backward()
    opt.step()
    for key, value in model.state_dict().items():
        assert torch.equal(value, before[key])


def test_uniform_cross_entropy_is_log_k():
    for k in (2, 7, 45):
        logits = torch.zeros(5, k)
        loss = F.cross_entropy(logits, torch.randint(0, k, (5,)))
        assert abs(float(loss) - math.log(k)) < 1e-6


class TestEvaluateAccuracy:
    def test_echo_predictor_is_perfect(self):
        samples = [(np.float64(y), y) for y in [0, 1, 2, 1, 0, 2]]
        result = evaluate_accuracy(lambda xs: xs.astype(int), samples, 3)
        assert result.global_accuracy == 1.0
        assert result.macro_accuracy == 1.0

    def test_constant_predictor_on_balanced_set(self):
        samples = [(np.float64(0), y) for y in [0, 1, 2, 3] * 5]
        result = evaluate_accuracy(lambda xs: np.zeros(len(xs), dtype=int), samples, 4)
        assert result.global_accuracy == 0.25
        assert result.per_class.tolist() == [1.0, 0.0, 0.0, 0.0]

    def test_random_fixed_predictions_match_hand_count(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 3, 20)
        preds = rng.integers(0, 3, 20)
        samples = [(np.float64(i), int(y)) for i, y in enumerate(labels)]
        result = evaluate_accuracy(lambda xs: preds[xs.astype(int)], samples, 3)
        assert result.global_accuracy == (labels == preds).mean()

    def test_empty_set_fatal(self):
        with pytest.raises(ConfigError):
            evaluate_accuracy(lambda xs: xs, [], 2)


class TestTrainSupervised:
    def test_zero_epochs_keeps_generalist_bits(self, toy_classification, tiny_generalist):
        ds = load_classification_folder(toy_classification)
        cfg = SupTrainConfig(batch_size=16, epochs=0, seed=0)
        ckpt, history = train_supervised(ds, tiny_generalist, cfg)
        assert history.rows == []
        for key, value in tiny_generalist.arrays.items():
            assert np.array_equal(ckpt.arrays[key], value), key
        assert ckpt.meta.method == "supervised"
        assert ckpt.meta.parent_checksum == tiny_generalist.source_checksum

    def test_history_and_disjoint_eval(self, toy_classification, tiny_generalist):
        ds = load_classification_folder(toy_classification)
        cfg = SupTrainConfig(batch_size=32, epochs=2, peak_lr=1e-3, seed=1)
        ckpt, history = train_supervised(ds, tiny_generalist, cfg)
        assert history.columns == ["epoch", "train_loss", "eval_acc", "lr"]
        assert len(history.rows) == 2
        train_idx = set(history.extras["train_indices"])
        eval_idx = set(history.extras["eval_indices"])
        assert not train_idx & eval_idx
        assert len(train_idx) + len(eval_idx) == len(ds)
        assert "head.fc.weight" in ckpt.arrays

    def test_single_class_dataset_rejected(self, tmp_path, tiny_generalist):
        from conftest import write_classification_folder
        root = write_classification_folder(tmp_path / "one", per_class=3)
        import shutil
        for extra in list(root.iterdir())[1:]:
            shutil.rmtree(extra)
        ds = load_classification_folder(root)
        with pytest.raises(ConfigError, match="2 classes"):
            train_supervised(ds, tiny_generalist, SupTrainConfig(epochs=1))

    def test_incompatible_generalist_fatal_before_training(self, toy_classification):
        from geopretrain.encoder import backbone_spec, fresh_generalist
        from geopretrain.errors import CheckpointError
        bad = fresh_generalist(backbone_spec("tiny"), seed=0)
        bad.arrays["backbone.stem.conv.weight"] = np.zeros((4, 3, 3, 3), dtype=np.float32)
        ds = load_classification_folder(toy_classification)
        with pytest.raises(CheckpointError, match="shape conflict"):
            train_supervised(ds, bad, SupTrainConfig(epochs=1))

    def test_config_validation_names_field(self):
        with pytest.raises(ConfigError, match="batch_size"):
            SupTrainConfig(batch_size=0)
        with pytest.raises(ConfigError, match="peak_lr"):
            SupTrainConfig(peak_lr=0)
