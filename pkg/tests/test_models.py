"""Model losses, gradients, and parameter layout."""

import math

import numpy as np
import pytest

from fedvar.models import (
    MlpArchitecture,
    MlpModel,
    ModelParams,
    SvmModel,
    mlp_gradient,
    mlp_loss,
    mlp_predict,
    svm_loss,
    svm_predict,
    svm_subgradient,
)

# Hand-sized instance evaluated once with 50-digit arithmetic and frozen:
# 2-2-2 perceptron, three samples, mean cross-entropy.
MLP_W1 = np.array([[0.1, -0.2], [0.3, 0.05]])
MLP_B1 = np.array([0.01, -0.02])
MLP_W2 = np.array([[0.2, -0.1], [-0.3, 0.4]])
MLP_B2 = np.array([0.0, 0.05])
MLP_X = np.array([[1.0, 2.0], [-1.5, 0.5], [0.25, -1.0]])
MLP_Y = np.array([0, 1, 0])
MLP_LOSS = 0.7616596260488347

# Four-sample hinge instance with every margin at least 0.25 away from the
# kink; all inputs dyadic, so the expected values are short decimals.
SVM_W = np.array([0.5, -0.25])
SVM_X = np.array([[1.0, 2.0], [-2.0, 1.0], [3.0, -1.0], [0.0, -2.0]])
SVM_Y = np.array([1.0, -1.0, 1.0, -1.0])
SVM_REG = 0.1
SVM_LOSS = 0.640625
SVM_GRAD = np.array([-0.2, -1.025])


def mlp_arch():
    return MlpArchitecture(input_dim=2, hidden_units=2, num_classes=2)


def mlp_values():
    return mlp_arch().pack(MLP_W1, MLP_B1, MLP_W2, MLP_B2)


class TestModelParams:
    def test_holds_flat_copy(self):
        src = np.array([1.0, 2.0, 3.0])
        p = ModelParams(values=src)
        src[0] = 99.0
        assert p.values[0] == 1.0
        assert p.dimension == 3

    def test_norm(self):
        p = ModelParams(values=np.array([3.0, 4.0]))
        assert p.norm() == pytest.approx(5.0, rel=1e-15)

    def test_values_are_read_only(self):
        p = ModelParams(values=np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            p.values[0] = 0.0

    def test_rejects_matrix(self):
        with pytest.raises(ValueError):
            ModelParams(values=np.zeros((2, 2)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            ModelParams(values=np.array([1.0, math.nan]))
        with pytest.raises(ValueError):
            ModelParams(values=np.array([1.0, math.inf]))


class TestMlpArchitecture:
    def test_dimension_formula(self):
        arch = MlpArchitecture(input_dim=20, hidden_units=32, num_classes=10)
        assert arch.dimension == 32 * 20 + 32 + 10 * 32 + 10

    def test_pack_unpack_round_trip(self):
        arch = MlpArchitecture(input_dim=3, hidden_units=4, num_classes=2)
        rng = np.random.default_rng(5)
        flat = rng.normal(size=arch.dimension)
        w1, b1, w2, b2 = arch.unpack(flat)
        assert w1.shape == (4, 3)
        assert b1.shape == (4,)
        assert w2.shape == (2, 4)
        assert b2.shape == (2,)
        assert np.array_equal(arch.pack(w1, b1, w2, b2), flat)

    def test_pack_layout_is_layer_major(self):
        arch = mlp_arch()
        flat = mlp_values()
        assert np.array_equal(flat[:4], MLP_W1.ravel())
        assert np.array_equal(flat[4:6], MLP_B1)
        assert np.array_equal(flat[6:10], MLP_W2.ravel())
        assert np.array_equal(flat[10:], MLP_B2)
        assert flat.shape == (arch.dimension,)

    def test_unpack_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            mlp_arch().unpack(np.zeros(13))

    @pytest.mark.parametrize("kwargs", [
        dict(input_dim=0, hidden_units=2, num_classes=2),
        dict(input_dim=2, hidden_units=0, num_classes=2),
        dict(input_dim=2, hidden_units=2, num_classes=0),
    ])
    def test_rejects_degenerate_shapes(self, kwargs):
        with pytest.raises(ValueError):
            MlpArchitecture(**kwargs)


class TestMlpLoss:
    def test_reference_instance(self):
        got = mlp_loss(mlp_arch(), mlp_values(), MLP_X, MLP_Y)
        assert got == pytest.approx(MLP_LOSS, rel=1e-12)

    def test_zero_parameters_give_uniform_loss(self):
        arch = MlpArchitecture(input_dim=3, hidden_units=4, num_classes=5)
        got = mlp_loss(arch, np.zeros(arch.dimension),
                       np.ones((2, 3)), np.array([0, 4]))
        assert got == pytest.approx(math.log(5.0), rel=1e-12)

    def test_invariant_under_common_logit_shift(self):
        base = mlp_loss(mlp_arch(), mlp_values(), MLP_X, MLP_Y)
        shifted = mlp_arch().pack(MLP_W1, MLP_B1, MLP_W2, MLP_B2 + 3.7)
        got = mlp_loss(mlp_arch(), shifted, MLP_X, MLP_Y)
        assert got == pytest.approx(base, rel=1e-12)

    def test_stable_under_large_logits(self):
        huge = mlp_arch().pack(MLP_W1, MLP_B1, MLP_W2,
                               np.array([1000.0, -1000.0]))
        got = mlp_loss(mlp_arch(), huge, MLP_X, MLP_Y)
        assert math.isfinite(got)

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            mlp_loss(mlp_arch(), mlp_values(), MLP_X, np.array([0, 1, 2]))
        with pytest.raises(ValueError):
            mlp_loss(mlp_arch(), mlp_values(), MLP_X, np.array([0, -1, 0]))

    def test_rejects_bad_batches(self):
        with pytest.raises(ValueError):
            mlp_loss(mlp_arch(), mlp_values(), np.zeros((2, 3)),
                     np.array([0, 1]))
        with pytest.raises(ValueError):
            mlp_loss(mlp_arch(), mlp_values(), np.zeros((0, 2)),
                     np.array([], dtype=int))
        with pytest.raises(ValueError):
            mlp_loss(mlp_arch(), mlp_values(), MLP_X, np.array([0, 1]))


class TestMlpGradient:
    def test_matches_central_difference_on_reference(self):
        arch = mlp_arch()
        values = mlp_values()
        grad = mlp_gradient(arch, values, MLP_X, MLP_Y)
        h = 1e-6
        for i in range(arch.dimension):
            bumped = values.copy()
            bumped[i] += h
            hi = mlp_loss(arch, bumped, MLP_X, MLP_Y)
            bumped[i] -= 2 * h
            lo = mlp_loss(arch, bumped, MLP_X, MLP_Y)
            fd = (hi - lo) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-10)

    def test_matches_central_difference_on_random_instance(self):
        arch = MlpArchitecture(input_dim=5, hidden_units=4, num_classes=3)
        rng = np.random.default_rng(17)
        values = rng.normal(scale=0.5, size=arch.dimension)
        X = rng.normal(size=(6, 5))
        y = rng.integers(0, 3, size=6)
        grad = mlp_gradient(arch, values, X, y)
        h = 1e-6
        for i in rng.choice(arch.dimension, size=25, replace=False):
            bumped = values.copy()
            bumped[i] += h
            hi = mlp_loss(arch, bumped, X, y)
            bumped[i] -= 2 * h
            lo = mlp_loss(arch, bumped, X, y)
            fd = (hi - lo) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_batch_gradient_is_mean_of_per_sample_gradients(self):
        arch = mlp_arch()
        values = mlp_values()
        whole = mlp_gradient(arch, values, MLP_X, MLP_Y)
        parts = [mlp_gradient(arch, values, MLP_X[i:i + 1], MLP_Y[i:i + 1])
                 for i in range(3)]
        assert whole == pytest.approx(np.mean(parts, axis=0), rel=1e-12)

    def test_matches_layout_of_loss_inputs(self):
        grad = mlp_gradient(mlp_arch(), mlp_values(), MLP_X, MLP_Y)
        assert grad.shape == (mlp_arch().dimension,)
        assert np.all(np.isfinite(grad))


class TestMlpPredict:
    def test_argmax_of_logits(self):
        # identity-ish network: one hidden unit per input, W2 passes through
        arch = MlpArchitecture(input_dim=2, hidden_units=2, num_classes=2)
        values = arch.pack(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2))
        pred = mlp_predict(arch, values, np.array([[3.0, -1.0], [0.5, 2.0]]))
        assert pred.tolist() == [0, 1]

    def test_model_wrapper_delegates(self):
        model = MlpModel(mlp_arch())
        assert model.dimension == mlp_arch().dimension
        assert model.loss(mlp_values(), MLP_X, MLP_Y) == pytest.approx(
            MLP_LOSS, rel=1e-12)
        assert np.array_equal(
            model.gradient(mlp_values(), MLP_X, MLP_Y),
            mlp_gradient(mlp_arch(), mlp_values(), MLP_X, MLP_Y))

    def test_model_accuracy_counts_matches(self):
        arch = MlpArchitecture(input_dim=2, hidden_units=2, num_classes=2)
        values = arch.pack(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2))
        model = MlpModel(arch)
        X = np.array([[3.0, -1.0], [0.5, 2.0], [1.0, 0.0]])
        assert model.accuracy(values, X, np.array([0, 1, 1])) == pytest.approx(
            2.0 / 3.0, rel=1e-15)


class TestSvmLoss:
    def test_reference_instance(self):
        got = svm_loss(SVM_W, SVM_X, SVM_Y, SVM_REG)
        assert got == pytest.approx(SVM_LOSS, rel=1e-12)

    def test_margin_variants_differ_only_on_negative_labels(self):
        w = np.array([1.0, 0.0])
        X = np.array([[0.5, 0.0]])
        std_pos = svm_loss(w, X, np.array([1.0]), 2.0)
        paper_pos = svm_loss(w, X, np.array([1.0]), 2.0, paper_margin=True)
        assert std_pos == paper_pos == 1.5       # hinge 0.5 + reg 1.0
        std_neg = svm_loss(w, X, np.array([-1.0]), 2.0)
        paper_neg = svm_loss(w, X, np.array([-1.0]), 2.0, paper_margin=True)
        assert std_neg == 2.5                    # hinge 1.5 + reg 1.0
        assert paper_neg == 1.0                  # hinge clamps to 0

    def test_regularizer_scales_quadratically(self):
        w = 2.0 * SVM_W
        lo = svm_loss(w, SVM_X, SVM_Y, 0.1)
        hi = svm_loss(w, SVM_X, SVM_Y, 0.3)
        assert hi - lo == pytest.approx(0.5 * 0.2 * float(w @ w), rel=1e-12)

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            svm_loss(SVM_W, SVM_X, np.array([0.0, 1.0, 1.0, 0.0]), SVM_REG)

    def test_rejects_bad_regularizer(self):
        with pytest.raises(ValueError):
            svm_loss(SVM_W, SVM_X, SVM_Y, 0.0)
        with pytest.raises(ValueError):
            svm_loss(SVM_W, SVM_X, SVM_Y, -0.1)


class TestSvmSubgradient:
    def test_reference_instance(self):
        got = svm_subgradient(SVM_W, SVM_X, SVM_Y, SVM_REG)
        assert got == pytest.approx(SVM_GRAD, rel=1e-12)

    def test_matches_central_difference_away_from_kinks(self):
        # every margin sits at least 0.25 from the hinge kink, so a 1e-6
        # step cannot cross it and the loss is differentiable here
        grad = svm_subgradient(SVM_W, SVM_X, SVM_Y, SVM_REG)
        h = 1e-6
        for i in range(2):
            bumped = SVM_W.copy()
            bumped[i] += h
            hi = svm_loss(bumped, SVM_X, SVM_Y, SVM_REG)
            bumped[i] -= 2 * h
            lo = svm_loss(bumped, SVM_X, SVM_Y, SVM_REG)
            fd = (hi - lo) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-6)

    def test_paper_margin_activation_rule(self):
        w = np.array([1.0, 0.0])
        X = np.array([[0.5, 0.0]])
        got = svm_subgradient(w, X, np.array([-1.0]), 2.0, paper_margin=True)
        assert np.array_equal(got, np.array([2.0, 0.0]))  # reg term only
        got = svm_subgradient(w, X, np.array([-1.0]), 2.0)
        assert np.array_equal(got, np.array([2.5, 0.0]))

    def test_inactive_batch_leaves_regularizer_only(self):
        w = np.array([10.0, 0.0])
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        y = np.array([1.0, -1.0])
        got = svm_subgradient(w, X, y, 0.5)
        assert got == pytest.approx(0.5 * w, rel=1e-15)


class TestSvmPredict:
    def test_sign_rule_with_boundary_as_positive(self):
        pred = svm_predict(np.array([1.0, 0.0]),
                           np.array([[2.0, 5.0], [-3.0, 1.0], [0.0, 9.0]]))
        assert pred.tolist() == [1.0, -1.0, 1.0]

    def test_model_wrapper(self):
        model = SvmModel(input_dim=2, reg_coefficient=SVM_REG)
        assert model.dimension == 2
        assert model.loss(SVM_W, SVM_X, SVM_Y) == pytest.approx(
            SVM_LOSS, rel=1e-12)
        acc = model.accuracy(SVM_W, SVM_X, SVM_Y)
        # scores: 0.0, -1.25, 1.75, 0.5 -> predictions +1, -1, +1, +1
        assert acc == pytest.approx(0.75, rel=1e-15)

    def test_model_rejects_bad_dimension(self):
        with pytest.raises(ValueError):
            SvmModel(input_dim=0)
