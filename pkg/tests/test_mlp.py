import numpy as np
import pytest

from atras.datasets import Dataset
from atras.errors import DimensionMismatch, FormatError, InvalidArchitecture
from atras.matops import make_rng, onehot, softmax_cross_entropy
from atras.mlp import (
    ArchitectureSpec,
    ModelParams,
    backward,
    evaluate_accuracy,
    forward,
    init_params,
    load_checkpoint,
    parameter_count,
    predict,
    save_checkpoint,
)

from oracles import fd_input_gradient, fd_param_gradients, max_relative_error


class TestArchitectureSpec:
    def test_layer_dims_chain(self):
        arch = ArchitectureSpec(hidden=(64, 512), input_dim=784)
        assert arch.layer_dims == [(784, 64), (64, 512), (512, 10)]

    def test_zero_width_rejected(self):
        with pytest.raises(InvalidArchitecture):
            ArchitectureSpec(hidden=(64, 0), input_dim=784)

    def test_empty_hidden_is_linear_model(self):
        arch = ArchitectureSpec(hidden=(), input_dim=20)
        assert arch.layer_dims == [(20, 10)]
        assert arch.depth == 0

    def test_describe(self):
        assert ArchitectureSpec(hidden=(64, 512), input_dim=784).describe() == "[64, 512]"

    def test_bad_activation(self):
        with pytest.raises(InvalidArchitecture):
            ArchitectureSpec(hidden=(4,), input_dim=4, activation="gelu")


class TestInit:
    def test_shapes_and_parameter_count(self):
        arch = ArchitectureSpec(hidden=(64, 512), input_dim=784)
        params = init_params(arch, seed=0)
        assert [w.shape for w in params.weights] == [(784, 64), (64, 512), (512, 10)]
        assert [b.shape for b in params.biases] == [(64,), (512,), (10,)]
        # closed-form count, summed independently of the library
        widths = [784, 64, 512, 10]
        expected = sum(fi * fo + fo for fi, fo in zip(widths[:-1], widths[1:]))
        assert expected == 88650
        assert parameter_count(arch) == expected

    def test_deterministic_in_seed(self):
        arch = ArchitectureSpec(hidden=(8, 8), input_dim=6)
        a, b = init_params(arch, seed=9), init_params(arch, seed=9)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        c = init_params(arch, seed=10)
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_he_uniform_bound_and_zero_biases(self):
        arch = ArchitectureSpec(hidden=(32,), input_dim=50)
        params = init_params(arch, seed=1)
        assert np.max(np.abs(params.weights[0])) <= np.sqrt(6.0 / 50)
        assert np.max(np.abs(params.weights[1])) <= np.sqrt(6.0 / 32)
        assert all(np.all(b == 0) for b in params.biases)

    def test_xavier_bound(self):
        arch = ArchitectureSpec(hidden=(), input_dim=40)
        params = init_params(arch, seed=1, rule="xavier_uniform")
        assert np.max(np.abs(params.weights[0])) <= np.sqrt(6.0 / 50)

    def test_unknown_rule(self):
        with pytest.raises(InvalidArchitecture):
            init_params(ArchitectureSpec(hidden=(), input_dim=4), seed=0, rule="normal")


class TestForward:
    def test_output_shape(self):
        arch = ArchitectureSpec(hidden=(64, 512), input_dim=784)
        params = init_params(arch, seed=0)
        logits, trace = forward(params, make_rng(0).uniform(size=(32, 784)))
        assert logits.shape == (32, 10)
        assert len(trace.pre) == 3

    def test_zero_params_give_uniform_probs(self):
        arch = ArchitectureSpec(hidden=(5,), input_dim=4)
        zero = ModelParams(
            arch=arch,
            weights=tuple(np.zeros((fi, fo)) for fi, fo in arch.layer_dims),
            biases=tuple(np.zeros(fo) for _, fo in arch.layer_dims),
        )
        logits, _ = forward(zero, np.ones((3, 4)))
        _, probs, _ = softmax_cross_entropy(logits, [0, 1, 2])
        assert np.allclose(probs, 0.1)

    def test_hand_computed_small_net(self):
        # explicit scalar oracle for a 2 -> 2 -> 2 net
        arch = ArchitectureSpec(hidden=(2,), input_dim=2, num_classes=2)
        w1 = np.array([[1.0, -2.0], [0.5, 1.0]])
        b1 = np.array([0.1, -0.2])
        w2 = np.array([[2.0, 0.0], [-1.0, 3.0]])
        b2 = np.array([0.0, 1.0])
        params = ModelParams(arch=arch, weights=(w1, w2), biases=(b1, b2))
        x = np.array([[1.0, 2.0]])
        # z1 = [1*1+2*0.5+0.1, 1*-2+2*1-0.2] = [2.1, -0.2]; relu -> [2.1, 0]
        # logits = [2.1*2 + 0*-1, 2.1*0 + 0*3] + [0, 1] = [4.2, 1.0]
        logits, _ = forward(params, x)
        assert np.max(np.abs(logits - np.array([[4.2, 1.0]]))) < 1e-12

    def test_dimension_mismatch(self):
        params = init_params(ArchitectureSpec(hidden=(4,), input_dim=6), seed=0)
        with pytest.raises(DimensionMismatch):
            forward(params, np.ones((2, 7)))

    def test_deterministic(self):
        params = init_params(ArchitectureSpec(hidden=(7,), input_dim=5), seed=3)
        x = make_rng(4).uniform(size=(6, 5))
        a, _ = forward(params, x)
        b, _ = forward(params, x)
        assert np.array_equal(a, b)


class TestBackward:
    def test_gradients_match_finite_differences(self):
        rng = make_rng(21)
        arch = ArchitectureSpec(hidden=(5, 7), input_dim=6)
        params = init_params(arch, seed=2)
        batch = rng.uniform(size=(3, 6))
        labels = rng.integers(0, 10, size=3)

        _, grads, input_grad = backward(params, batch, labels)
        w = [x.copy() for x in params.weights]
        b = [x.copy() for x in params.biases]
        fd_w, fd_b = fd_param_gradients(w, b, batch, labels)
        for analytic, numeric in zip(list(grads.weights) + list(grads.biases), fd_w + fd_b):
            assert max_relative_error(analytic, numeric) < 1e-5
        assert max_relative_error(input_grad, fd_input_gradient(w, b, batch, labels)) < 1e-5

    def test_tanh_gradients_match_finite_differences(self):
        rng = make_rng(22)
        arch = ArchitectureSpec(hidden=(6,), input_dim=5, activation="tanh")
        params = init_params(arch, seed=4, rule="xavier_uniform")
        batch = rng.uniform(size=(3, 5))
        labels = rng.integers(0, 10, size=3)
        _, grads, input_grad = backward(params, batch, labels)
        w = [x.copy() for x in params.weights]
        b = [x.copy() for x in params.biases]
        fd_w, fd_b = fd_param_gradients(w, b, batch, labels, activation="tanh")
        for analytic, numeric in zip(list(grads.weights) + list(grads.biases), fd_w + fd_b):
            assert max_relative_error(analytic, numeric) < 1e-5
        assert max_relative_error(input_grad, fd_input_gradient(w, b, batch, labels, activation="tanh")) < 1e-5

    def test_linear_model_closed_form_input_grad(self):
        rng = make_rng(23)
        arch = ArchitectureSpec(hidden=(), input_dim=12)
        params = init_params(arch, seed=5)
        batch = rng.uniform(size=(4, 12))
        labels = rng.integers(0, 10, size=4)
        _, _, input_grad = backward(params, batch, labels)

        logits = batch @ params.weights[0] + params.biases[0]
        _, probs, _ = softmax_cross_entropy(logits, labels)
        closed = ((probs - onehot(labels, 10)) / 4) @ params.weights[0].T
        assert np.max(np.abs(input_grad - closed)) < 1e-10

    def test_duplicated_batch_mean_invariance(self):
        # Mean reduction: duplicating every row leaves the loss unchanged
        # and scales each per-row input gradient by exactly 1/2.
        rng = make_rng(24)
        params = init_params(ArchitectureSpec(hidden=(6,), input_dim=5), seed=6)
        batch = rng.uniform(size=(4, 5))
        labels = rng.integers(0, 10, size=4)
        loss, _, grad = backward(params, batch, labels)
        loss2, _, grad2 = backward(params, np.concatenate([batch, batch]), np.concatenate([labels, labels]))
        assert loss2 == pytest.approx(loss, abs=1e-12)
        assert np.array_equal(2.0 * grad2[:4], grad)
        assert np.array_equal(grad2[:4], grad2[4:])

    def test_label_errors_propagate(self):
        params = init_params(ArchitectureSpec(hidden=(), input_dim=3), seed=0)
        from atras.errors import LabelOutOfRange

        with pytest.raises(LabelOutOfRange):
            backward(params, np.ones((1, 3)), [10])


class TestEvaluate:
    def test_perfect_model(self):
        # one-hot weights route feature i straight to class i
        arch = ArchitectureSpec(hidden=(), input_dim=10)
        params = ModelParams(arch=arch, weights=(np.eye(10),), biases=(np.zeros(10),))
        data = Dataset("mnist", np.eye(10), np.arange(10, dtype=np.int64))
        assert evaluate_accuracy(params, data) == 1.0

    def test_zero_model_ties_resolve_to_lowest_class(self):
        arch = ArchitectureSpec(hidden=(), input_dim=4)
        params = ModelParams(arch=arch, weights=(np.zeros((4, 10)),), biases=(np.zeros(10),))
        rng = make_rng(8)
        labels = rng.integers(0, 10, size=50).astype(np.int64)
        data = Dataset("mnist", rng.uniform(size=(50, 4)), labels)
        assert np.all(predict(params, data.features) == 0)
        assert evaluate_accuracy(params, data) == np.mean(labels == 0)

    def test_argmax_invariant_to_per_row_shift(self):
        rng = make_rng(9)
        logits = rng.normal(size=(20, 10))
        shifted = logits + rng.normal(size=(20, 1))
        assert np.array_equal(np.argmax(logits, axis=1), np.argmax(shifted, axis=1))


class TestCheckpoint:
    def test_roundtrip_bit_identical(self, tmp_path):
        params = init_params(ArchitectureSpec(hidden=(5, 3), input_dim=7, activation="tanh"), seed=12)
        path = tmp_path / "model.atras"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert loaded.arch == params.arch
        assert loaded.init_seed == params.init_seed
        for a, b in zip(loaded.weights, params.weights):
            assert np.array_equal(a, b)
        for a, b in zip(loaded.biases, params.biases):
            assert np.array_equal(a, b)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_rejects_wrong_kind(self, tmp_path):
        from atras.fgsm import AttackConfig, save_adversarial_batch

        path = tmp_path / "batch.atras"
        save_adversarial_batch(path, np.zeros((2, 3)), [0, 1], AttackConfig(epsilon=0.1))
        with pytest.raises(FormatError, match="kind"):
            load_checkpoint(path)
