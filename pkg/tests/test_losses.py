import math

import numpy as np
import pytest

from sea.errors import (
    EmptyMaskError,
    MismatchedBatchError,
    NegativeLambdaError,
    NonFiniteFunctionError,
    TargetOutOfRangeError,
    ZeroRowError,
)
from sea.gradcheck import check_alignment, check_generation
from sea.losses import (
    LossBundle,
    TemperatureParam,
    alignment_loss,
    combined_loss,
    finite_difference_check,
    generation_loss,
)
from sea.rng import Rng


def two_loop_alignment_oracle(x, t, tau):
    """Direct double-loop evaluation of the symmetric contrastive objective."""
    n = x.shape[0]

    def phi(a, b):
        return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))

    total = 0.0
    for i in range(n):
        row_den = sum(math.exp(phi(x[i], t[j]) / tau) for j in range(n))
        col_den = sum(math.exp(phi(t[i], x[j]) / tau) for j in range(n))
        total += math.log(math.exp(phi(x[i], t[i]) / tau) / row_den)
        total += math.log(math.exp(phi(t[i], x[i]) / tau) / col_den)
    return -total / (2 * n)


class TestAlignmentLoss:
    def test_single_pair_is_exactly_zero(self):
        x = np.array([[1.0, 2.0, 3.0]])
        t = np.array([[-1.0, 0.5, 2.0]])
        bundle = alignment_loss(x, t, TemperatureParam(0.0))
        assert bundle.value == 0.0
        assert np.all(bundle.gradients["visual_tokens"] == 0.0)

    def test_identity_phi_closed_form(self):
        # orthogonal matched pairs: phi matrix is the 2x2 identity, tau = 1
        x = np.array([[2.0, 0.0], [0.0, 3.0]])
        t = np.array([[5.0, 0.0], [0.0, 1.0]])
        bundle = alignment_loss(x, t, TemperatureParam(0.0))
        assert bundle.value == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-6)

    def test_matches_two_loop_oracle(self):
        for seed in range(10):
            rng = Rng(seed).stream("oracle")
            x = rng.normal((6, 8))
            t = rng.normal((6, 8))
            log_tau = rng.uniform() - 0.5
            bundle = alignment_loss(x, t, TemperatureParam(log_tau))
            expected = two_loop_alignment_oracle(x, t, math.exp(log_tau))
            assert bundle.value == pytest.approx(expected, rel=1e-9)

    def test_gradients_match_finite_differences(self):
        for seed in range(5):
            errors = check_alignment(seed)
            assert max(errors.values()) < 1e-4, errors

    def test_invariant_to_positive_row_scaling(self):
        rng = Rng(3).stream("scale")
        x = rng.normal((5, 7))
        t = rng.normal((5, 7))
        temp = TemperatureParam(0.1)
        base = alignment_loss(x, t, temp).value
        sx = (rng.uniform(5) * 5 + 0.1)[:, None]
        st = (rng.uniform(5) * 5 + 0.1)[:, None]
        scaled = alignment_loss(x * sx, t * st, temp).value
        assert abs(base - scaled) < 1e-6

    def test_invariant_under_joint_permutation(self):
        rng = Rng(4).stream("perm")
        x = rng.normal((6, 5))
        t = rng.normal((6, 5))
        perm = np.array([3, 0, 5, 1, 4, 2])
        temp = TemperatureParam(-0.3)
        assert alignment_loss(x, t, temp).value == pytest.approx(
            alignment_loss(x[perm], t[perm], temp).value, rel=1e-12
        )

    def test_descent_on_fixed_instance(self):
        # gradient descent on the visual tokens strictly lowers the loss
        rng = Rng(5).stream("descent")
        x = rng.normal((4, 6))
        t = rng.normal((4, 6))
        temp = TemperatureParam(np.log(0.2))
        values = []
        for _ in range(50):
            bundle = alignment_loss(x, t, temp)
            values.append(bundle.value)
            x = x - 0.5 * bundle.gradients["visual_tokens"]
        assert values[-1] < values[0]
        assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))

    def test_text_gradient_behind_flag(self):
        rng = Rng(6).stream("tf")
        x, t = rng.normal((3, 4)), rng.normal((3, 4))
        without = alignment_loss(x, t, TemperatureParam(0.0))
        assert "text_features" not in without.gradients
        with_flag = alignment_loss(x, t, TemperatureParam(0.0), grad_text_features=True)
        err = finite_difference_check(
            lambda v: alignment_loss(x, v, TemperatureParam(0.0)).value,
            t,
            with_flag.gradients["text_features"],
        )
        assert err < 1e-4

    def test_errors(self):
        with pytest.raises(MismatchedBatchError):
            alignment_loss(np.ones((2, 3)), np.ones((3, 3)), TemperatureParam(0.0))
        with pytest.raises(ZeroRowError):
            alignment_loss(np.zeros((2, 3)), np.ones((2, 3)), TemperatureParam(0.0))


class TestGenerationLoss:
    def test_uniform_logits(self):
        logits = np.zeros((3, 4))
        bundle = generation_loss(logits, [0, 1, 2], [True, True, True])
        assert bundle.value == pytest.approx(math.log(4), abs=1e-9)

    def test_saturated_correct_class(self):
        logits = np.zeros((1, 5))
        logits[0, 2] = 30.0
        bundle = generation_loss(logits, [2], [True])
        assert bundle.value < 1e-12

    def test_matches_per_position_oracle(self):
        rng = Rng(7).stream("gen")
        logits = rng.normal((5, 7))
        targets = rng.integers(0, 7, n=5)
        mask = np.array([True, False, True, True, False])
        bundle = generation_loss(logits, targets, mask)
        expected = []
        for p in range(5):
            if not mask[p]:
                continue
            z = logits[p] - logits[p].max()
            expected.append(-(z[targets[p]] - np.log(np.exp(z).sum())))
        assert bundle.value == pytest.approx(float(np.mean(expected)), rel=1e-12)

    def test_gradient_zero_at_unmasked(self):
        rng = Rng(8).stream("gen2")
        logits = rng.normal((4, 6))
        mask = np.array([True, False, True, False])
        bundle = generation_loss(logits, [1, 0, 2, 0], mask)
        g = bundle.gradients["logits"]
        assert np.all(g[~mask] == 0.0)
        assert np.allclose(g.sum(axis=1)[mask], 0.0, atol=1e-12)  # softmax minus one-hot

    def test_gradients_match_finite_differences(self):
        for seed in range(5):
            errors = check_generation(seed)
            assert max(errors.values()) < 1e-4, errors

    def test_errors(self):
        with pytest.raises(EmptyMaskError):
            generation_loss(np.zeros((2, 3)), [0, 0], [False, False])
        with pytest.raises(TargetOutOfRangeError):
            generation_loss(np.zeros((1, 3)), [3], [True])


class TestCombinedLoss:
    def _bundles(self):
        lg = LossBundle(value=1.0, gradients={"w": np.array([1.0, 2.0])})
        la = LossBundle(value=0.25, gradients={"w": np.array([4.0, -2.0]), "log_tau": np.float64(3.0)})
        return lg, la

    def test_lambda_zero_reduces_to_generation(self):
        lg, la = self._bundles()
        out = combined_loss(lg, la, 0.0)
        assert out.value == lg.value
        assert np.array_equal(out.gradients["w"], lg.gradients["w"])

    def test_zero_alignment_is_identity(self):
        lg = LossBundle(value=1.0, gradients={"w": np.array([1.0])})
        la = LossBundle(value=0.0, gradients={"w": np.array([0.0])})
        out = combined_loss(lg, la, 1.0)
        assert out.value == 1.0
        assert np.array_equal(out.gradients["w"], lg.gradients["w"])

    def test_scalar_arithmetic(self):
        lg, la = self._bundles()
        assert combined_loss(lg, la, 2.0).value == pytest.approx(1.5)

    def test_gradients_linear_in_lambda(self):
        lg, la = self._bundles()
        g0 = combined_loss(lg, la, 0.0).gradients["w"]
        g1 = combined_loss(lg, la, 1.0).gradients["w"]
        g2 = combined_loss(lg, la, 2.0).gradients["w"]
        assert np.allclose(g2 - g1, g1 - g0, atol=1e-12)
        assert combined_loss(lg, la, 2.0).gradients["log_tau"] == pytest.approx(6.0)

    def test_negative_lambda_rejected(self):
        lg, la = self._bundles()
        with pytest.raises(NegativeLambdaError):
            combined_loss(lg, la, -0.1)


class TestFiniteDifferenceCheck:
    def test_quadratic(self):
        err = finite_difference_check(lambda v: float(v[0] ** 2), np.array([3.0]), np.array([6.0]))
        assert err < 1e-8

    def test_constant(self):
        err = finite_difference_check(lambda v: 1.0, np.array([0.5, -2.0]), np.zeros(2))
        assert err == 0.0

    def test_detects_wrong_gradient(self):
        err = finite_difference_check(lambda v: float(v[0] ** 2), np.array([3.0]), np.array([5.0]))
        assert err > 0.1

    def test_non_finite_function(self):
        with pytest.raises(NonFiniteFunctionError):
            finite_difference_check(
                lambda v: float("nan"), np.array([1.0]), np.array([0.0])
            )
