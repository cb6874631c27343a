import math

import numpy as np
import pytest
import torch

from eyescreen.losses import cross_entropy, multitask_loss, pretrain_loss


def t64(x):
    return torch.tensor(x, dtype=torch.float64)


def ce_oracle(logits, label):
    """Closed-form -log softmax evaluation with plain floats."""
    logits = [float(v) for v in logits]
    m = max(logits)
    lse = m + math.log(sum(math.exp(v - m) for v in logits))
    return lse - logits[label]


class TestCrossEntropy:
    def test_uniform_two_class(self):
        got = cross_entropy(t64([0.0, 0.0]), torch.tensor(0))
        assert got.item() == pytest.approx(math.log(2), rel=1e-12)

    def test_saturated_correct_class(self):
        got = cross_entropy(t64([100.0, 0.0]), torch.tensor(0))
        assert got.item() == pytest.approx(0.0, abs=1e-8)

    def test_hand_case(self):
        got = cross_entropy(t64([1.0, -1.0]), torch.tensor(1))
        assert got.item() == pytest.approx(math.log(1 + math.exp(2)), rel=1e-9)
        assert got.item() == pytest.approx(ce_oracle([1.0, -1.0], 1), rel=1e-12)

    def test_matches_oracle_random(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            logits = rng.standard_normal(n) * 5
            label = int(rng.integers(0, n))
            got = cross_entropy(torch.tensor(logits), torch.tensor(label)).item()
            assert got == pytest.approx(ce_oracle(logits, label), rel=1e-10)
            assert got >= 0

    def test_batch_is_mean(self):
        logits = t64([[1.0, -1.0], [0.0, 0.0]])
        labels = t64([1, 0])
        expected = (ce_oracle([1, -1], 1) + math.log(2)) / 2
        assert cross_entropy(logits, labels).item() == pytest.approx(expected, rel=1e-9)

    def test_stable_at_large_logits(self):
        got = cross_entropy(t64([1000.0, 0.0]), torch.tensor(1)).item()
        assert got == pytest.approx(1000.0, rel=1e-9)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="label 2 out of range"):
            cross_entropy(t64([0.0, 0.0]), torch.tensor(2))

    def test_zero_iff_prob_one(self):
        # CE -> 0 exactly when the true-class softmax probability -> 1
        got = cross_entropy(t64([40.0, 0.0, 0.0]), torch.tensor(0)).item()
        assert got < 1e-12
        got = cross_entropy(t64([1.0, 0.9, 0.0]), torch.tensor(0)).item()
        assert got > 1e-3


class TestMultitaskLoss:
    def test_uniform_binary_tasks(self):
        logits = [torch.zeros(2, dtype=torch.float64) for _ in range(5)]
        labels = [torch.tensor(0) for _ in range(5)]
        out = multitask_loss(logits, labels)
        assert out.total.item() == pytest.approx(5 * math.log(2), rel=1e-12)
        assert out.task_mask == (True,) * 5

    def test_single_unmasked_task(self):
        logits = [t64([1.0, -1.0]) for _ in range(5)]
        labels = [torch.tensor(1) for _ in range(5)]
        mask = [True, False, False, False, False]
        out = multitask_loss(logits, labels, mask=mask)
        assert out.total.item() == pytest.approx(cross_entropy(logits[0], labels[0]).item(), rel=1e-12)
        assert out.per_task[1:].abs().max().item() == 0.0

    def test_total_is_weighted_sum(self):
        rng = np.random.default_rng(1)
        logits = [torch.tensor(rng.standard_normal(2)) for _ in range(5)]
        labels = [torch.tensor(int(rng.integers(0, 2))) for _ in range(5)]
        weights = [1.0, 2.0, 0.5, 1.0, 3.0]
        out = multitask_loss(logits, labels, weights=weights)
        expected = sum(w * ce_oracle(l.numpy(), y.item()) for w, l, y in zip(weights, logits, labels))
        assert out.total.item() == pytest.approx(expected, abs=1e-9)

    def test_additivity_of_precomputed_ces(self):
        # logits engineered so each task's CE is a chosen constant
        targets = [0.1, 0.2, 0.3, 0.4, 0.5]
        logits = []
        for ce in targets:
            # two-class logits [x, 0] with label 0: CE = log(1 + e^-x)
            x = -math.log(math.exp(ce) - 1)
            logits.append(t64([x, 0.0]))
        labels = [torch.tensor(0)] * 5
        out = multitask_loss(logits, labels)
        assert out.total.item() == pytest.approx(1.5, abs=1e-9)

    def test_mask_linearity(self):
        rng = np.random.default_rng(2)
        logits = [torch.tensor(rng.standard_normal(2)) for _ in range(5)]
        labels = [torch.tensor(int(rng.integers(0, 2))) for _ in range(5)]
        weights = [1.0, 2.0, 0.5, 1.0, 3.0]
        full = multitask_loss(logits, labels, weights=weights)
        for t in range(5):
            mask = [i != t for i in range(5)]
            dropped = multitask_loss(logits, labels, mask=mask, weights=weights)
            delta = full.total.item() - dropped.total.item()
            assert delta == pytest.approx(weights[t] * full.per_task[t].item(), abs=1e-9)

    def test_all_masked_rejected(self):
        logits = [torch.zeros(2, dtype=torch.float64)] * 5
        labels = [torch.tensor(0)] * 5
        with pytest.raises(ValueError, match="no learning signal"):
            multitask_loss(logits, labels, mask=[False] * 5)

    def test_per_sample_mask(self):
        logits = [t64([[2.0, 0.0], [0.0, 0.0]])]
        labels = [t64([0, 0])]
        mask = [t64([True, False])]
        out = multitask_loss(logits, labels, mask=mask)
        assert out.total.item() == pytest.approx(ce_oracle([2.0, 0.0], 0), rel=1e-9)


class TestPretrainLoss:
    def make_inputs(self, seed=0):
        rng = np.random.default_rng(seed)
        dr = torch.tensor(rng.standard_normal((4, 2)))
        gl = torch.tensor(rng.standard_normal((4, 2)))
        recon = torch.tensor(rng.uniform(0, 1, (4, 3, 8, 8)))
        target = torch.tensor(rng.uniform(0, 1, (4, 3, 8, 8)))
        labels = [t64([0, 1, 0, 1]), t64([1, 0, 1, 0])]
        return dr, gl, recon, target, labels

    def test_perfect_reconstruction_all_masked(self):
        dr, gl, recon, _, labels = self.make_inputs()
        out = pretrain_loss(dr, gl, recon, recon.clone(), labels, mask=(False, False))
        assert out.total.item() == 0.0
        assert out.task_mask == (False, False)

    def test_constant_mse(self):
        dr, gl, _, _, labels = self.make_inputs()
        recon = torch.full((2, 3, 4, 4), 0.5, dtype=torch.float64)
        target = torch.zeros(2, 3, 4, 4, dtype=torch.float64)
        out = pretrain_loss(dr, gl, recon, target, labels, mask=(False, False), weights=(1, 1, 2.0))
        assert out.reconstruction.item() == pytest.approx(0.25, rel=1e-12)
        assert out.total.item() == pytest.approx(0.5, rel=1e-12)

    def test_sum_of_terms(self):
        dr, gl, recon, target, labels = self.make_inputs(3)
        out = pretrain_loss(dr, gl, recon, target, labels, mask=(True, False))
        expected = out.per_task[0].item() + out.reconstruction.item()
        assert out.total.item() == pytest.approx(expected, abs=1e-12)
        assert out.task_mask == (True, False)

    def test_shape_mismatch_rejected(self):
        dr, gl, recon, _, labels = self.make_inputs()
        with pytest.raises(ValueError, match="shape"):
            pretrain_loss(dr, gl, recon, torch.zeros(4, 3, 7, 7, dtype=torch.float64), labels)
