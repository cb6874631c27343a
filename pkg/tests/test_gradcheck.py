"""Finite-difference verification of every analytic gradient in the math kernel."""

import numpy as np
import pytest
import torch

from eyescreen.fusion import elementwise_correction, fuse_embeddings
from eyescreen.gradcheck import finite_difference_gradient, relative_error
from eyescreen.losses import cross_entropy, multitask_loss, pretrain_loss

from util import autograd_gradient, pack, scalar_fn_from

TOL = 1e-4
EPS = 1e-5


class TestOracle:
    def test_quadratic(self):
        grad = finite_difference_gradient(lambda p: p[0] ** 2, np.array([3.0]), eps=EPS)
        assert abs(grad[0] - 6.0) < 1e-6

    def test_constant(self):
        grad = finite_difference_gradient(lambda p: 7.5, np.arange(5.0), eps=EPS)
        assert np.all(grad == 0.0)

    def test_nonfinite_reported_with_coordinate(self):
        def fn(p):
            return float("nan") if p[2] != 0.5 else 1.0

        with pytest.raises(ValueError, match="coordinate 2"):
            finite_difference_gradient(fn, np.array([0.5, 0.5, 0.5]), eps=EPS)

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda p: 0.0, np.zeros(1), eps=0.0)


def check_gradients(loss_of_tensors, tensors):
    shapes = [tuple(t.shape) for t in tensors]
    numeric = finite_difference_gradient(
        scalar_fn_from(loss_of_tensors, shapes), pack(tensors), eps=EPS
    )
    analytic = autograd_gradient(loss_of_tensors, tensors)
    err = relative_error(analytic, numeric)
    assert err < TOL, f"gradient mismatch: relative error {err}"


class TestGradientCorrectness:
    """Analytic (backward) gradients match central differences at dims <= 8."""

    def test_elementwise_correction(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            d1, d2 = rng.integers(1, 9, size=2)
            a = torch.tensor(rng.standard_normal(d1))
            b = torch.tensor(rng.standard_normal(d2))
            w = torch.tensor(rng.standard_normal((d1, d2)))
            r = torch.tensor(rng.standard_normal(d1))

            def loss(a_, b_, w_, r=r):
                return (elementwise_correction(a_, b_, w_) * r).sum()

            check_gradients(loss, [a, b, w])

    def test_fuse_embeddings(self):
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            d1 = int(rng.integers(1, 9))
            n = int(rng.integers(0, 4))
            d2s = [int(rng.integers(1, 9)) for _ in range(n)]
            x1 = torch.tensor(rng.standard_normal(d1))
            x2 = [torch.tensor(rng.standard_normal(d)) for d in d2s]
            fwd = [torch.tensor(rng.standard_normal((d1, d))) for d in d2s]
            bwd = [torch.tensor(rng.standard_normal((d, d1))) for d in d2s]
            r1 = torch.tensor(rng.standard_normal(d1))
            r2 = [torch.tensor(rng.standard_normal(d)) for d in d2s]
            sequential = bool(rng.integers(0, 2))

            def loss(*flat, n=n, r1=r1, r2=r2, sequential=sequential):
                x1_, x2_ = flat[0], list(flat[1 : 1 + n])
                fwd_ = list(flat[1 + n : 1 + 2 * n])
                bwd_ = list(flat[1 + 2 * n :])
                y1, y2 = fuse_embeddings(x1_, x2_, fwd_, bwd_, sequential=sequential)
                out = (y1 * r1).sum()
                for y, r in zip(y2, r2):
                    out = out + (y * r).sum()
                return out

            check_gradients(loss, [x1, *x2, *fwd, *bwd])

    def test_cross_entropy(self):
        for seed in range(100):
            rng = np.random.default_rng(2000 + seed)
            n = int(rng.integers(2, 9))
            logits = torch.tensor(rng.standard_normal(n) * 2)
            label = torch.tensor(int(rng.integers(0, n)))
            check_gradients(lambda l, label=label: cross_entropy(l, label), [logits])

    def test_multitask_loss(self):
        for seed in range(100):
            rng = np.random.default_rng(3000 + seed)
            logits = [torch.tensor(rng.standard_normal(2)) for _ in range(5)]
            labels = [torch.tensor(int(rng.integers(0, 2))) for _ in range(5)]
            weights = list(rng.uniform(0.5, 2.0, size=5))
            mask = list(rng.integers(0, 2, size=5).astype(bool))
            if not any(mask):
                mask[0] = True

            def loss(*ls, labels=labels, mask=mask, weights=weights):
                return multitask_loss(list(ls), labels, mask=mask, weights=weights).total

            check_gradients(loss, logits)

    def test_pretrain_loss(self):
        for seed in range(100):
            rng = np.random.default_rng(4000 + seed)
            dr = torch.tensor(rng.standard_normal(2))
            gl = torch.tensor(rng.standard_normal(2))
            recon = torch.tensor(rng.uniform(0, 1, (3, 2, 2)))
            target = torch.tensor(rng.uniform(0, 1, (3, 2, 2)))
            labels = [torch.tensor(int(rng.integers(0, 2))) for _ in range(2)]
            mask = (bool(rng.integers(0, 2)), bool(rng.integers(0, 2)))
            weights = tuple(rng.uniform(0.5, 2.0, size=3))

            def loss(dr_, gl_, recon_, labels=labels, mask=mask, weights=weights, target=target):
                return pretrain_loss(dr_, gl_, recon_, target, labels, mask=mask, weights=weights).total

            check_gradients(loss, [dr, gl, recon])
