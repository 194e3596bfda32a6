"""Heads: pooling, forward oracles, gradient checks, artifacts."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from baved_ser.heads import (
    ArtifactMismatch,
    BiLSTMHead,
    DimensionMismatch,
    HeadConfig,
    MLPHead,
    build_head,
    cross_entropy,
    load_head,
    pool_max,
    pool_mean,
    save_head,
    softmax,
)


def central_differences(head, loss_fn, eps=1e-5):
    """Independent gradient oracle: perturb every parameter coordinate and
    difference the forward loss."""
    fd = {}
    for name, param in head.params.items():
        grad = np.zeros_like(param)
        flat = param.ravel()
        gflat = grad.ravel()
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + eps
            loss_plus = loss_fn()
            flat[idx] = original - eps
            loss_minus = loss_fn()
            flat[idx] = original
            gflat[idx] = (loss_plus - loss_minus) / (2 * eps)
        fd[name] = grad
    return fd


def max_relative_error(analytic, numeric):
    worst = 0.0
    for name in analytic:
        a = analytic[name].ravel()
        f = numeric[name].ravel()
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


class TestPooling:
    def test_single_frame_identity(self):
        frame = np.array([[1.0, -2.0, 3.0]])
        assert (pool_mean(frame) == frame[0]).all()

    def test_hand_mean(self):
        assert (pool_mean(np.array([[1.0, 3.0], [3.0, 1.0]])) == np.array([2.0, 2.0])).all()

    def test_max_pooling(self):
        assert (pool_max(np.array([[1.0, 3.0], [3.0, 1.0]])) == np.array([3.0, 3.0])).all()

    @settings(max_examples=40, deadline=None)
    @given(
        t=st.integers(1, 12),
        d=st.integers(1, 6),
        seed=st.integers(0, 2**31),
    )
    def test_permutation_invariance(self, t, d, seed):
        rng = np.random.default_rng(seed)
        frames = rng.standard_normal((t, d))
        permuted = frames[rng.permutation(t)]
        assert np.allclose(pool_mean(frames), pool_mean(permuted))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), alpha=st.floats(-3, 3), beta=st.floats(-3, 3))
    def test_linearity(self, seed, alpha, beta):
        rng = np.random.default_rng(seed)
        f = rng.standard_normal((7, 4))
        g = rng.standard_normal((7, 4))
        combined = pool_mean(alpha * f + beta * g)
        assert np.allclose(combined, alpha * pool_mean(f) + beta * pool_mean(g), atol=1e-9)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            pool_mean(np.zeros((0, 4)))


class TestSoftmaxStability:
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), shift=st.floats(-50, 50))
    def test_constant_shift_invariance(self, seed, shift):
        logits = np.random.default_rng(seed).standard_normal(3)
        assert np.abs(softmax(logits + shift) - softmax(logits)).max() < 1e-6

    def test_softmax_sums_to_one(self):
        probs = softmax(np.array([10.0, -4.0, 2.0]))
        assert abs(probs.sum() - 1.0) < 1e-6


class TestMLPForward:
    def test_zero_weights_uniform(self):
        head = MLPHead(4, HeadConfig(kind="mlp", hidden_sizes=(3,), dropout=0.0), seed=0)
        for key in head.params:
            head.params[key][...] = 0.0
        logits = head.forward(np.ones(4))
        assert (logits == 0).all()
        assert np.allclose(softmax(logits), [1 / 3, 1 / 3, 1 / 3])

    def test_hand_computed_single_hidden_layer(self):
        # oracle: explicit evaluation of the affine/nonlinearity chain
        head = MLPHead(3, HeadConfig(kind="mlp", hidden_sizes=(2,), dropout=0.0, activation="tanh"), seed=0)
        head.params["w0"] = np.array([[0.5, -0.25], [0.0, 0.0], [0.0, 0.0]])
        head.params["b0"] = np.array([0.1, 0.2])
        head.params["w_out"] = np.array([[1.0, 0.0, -1.0], [0.0, 2.0, 0.0]])
        head.params["b_out"] = np.array([0.05, -0.05, 0.0])
        x = np.array([1.0, 0.0, 0.0])

        h0 = math.tanh(1.0 * 0.5 + 0.1)
        h1 = math.tanh(1.0 * -0.25 + 0.2)
        expected = [h0 * 1.0 + 0.05, h1 * 2.0 - 0.05, -h0]
        assert np.allclose(head.forward(x)[0], expected, atol=1e-12)

    def test_purity(self):
        head = MLPHead(8, HeadConfig(kind="mlp", dropout=0.0), seed=1)
        x = np.random.default_rng(0).standard_normal((4, 8))
        assert (head.forward(x) == head.forward(x)).all()

    def test_dimension_mismatch(self):
        head = MLPHead(8, HeadConfig(kind="mlp", dropout=0.0), seed=1)
        with pytest.raises(DimensionMismatch):
            head.forward(np.zeros(5))


class TestBiLSTMForward:
    def test_zero_weights_zero_logits(self):
        head = BiLSTMHead(4, HeadConfig(kind="bilstm", lstm_hidden=3, dropout=0.0), seed=0)
        for key in head.params:
            head.params[key][...] = 0.0
        frames = np.random.default_rng(1).standard_normal((2, 5, 4))
        logits = head.forward(frames, np.array([5, 3]))
        assert (logits == 0).all()

    def test_single_frame_directions_agree_with_tied_weights(self):
        # at T=1 both directions consume the same frame; with tied
        # per-direction parameters their final states must coincide
        hidden = 3
        head = BiLSTMHead(4, HeadConfig(kind="bilstm", lstm_hidden=hidden, dropout=0.0), seed=2)
        head.params["wx_bwd"] = head.params["wx_fwd"].copy()
        head.params["wh_bwd"] = head.params["wh_fwd"].copy()
        head.params["b_bwd"] = head.params["b_fwd"].copy()
        frames = np.random.default_rng(3).standard_normal((1, 1, 4))
        combined = head.readout(frames, np.array([1]))
        assert np.allclose(combined[:, :hidden], combined[:, hidden:])
        assert np.isfinite(head.forward(frames, np.array([1]))).all()

    def test_determinism(self):
        head = BiLSTMHead(6, HeadConfig(kind="bilstm", lstm_hidden=5, dropout=0.0), seed=4)
        frames = np.random.default_rng(5).standard_normal((3, 7, 6))
        lengths = np.array([7, 4, 2])
        assert (head.forward(frames, lengths) == head.forward(frames, lengths)).all()

    def test_padding_invisible(self):
        # a sequence evaluated alone must equal the same sequence inside a
        # padded batch
        head = BiLSTMHead(6, HeadConfig(kind="bilstm", lstm_hidden=5, dropout=0.0), seed=6)
        rng = np.random.default_rng(7)
        short = rng.standard_normal((3, 6))
        long = rng.standard_normal((9, 6))
        solo = head.forward(short[None], np.array([3]))[0]
        padded = np.zeros((2, 9, 6))
        padded[0, :3] = short
        padded[1] = long
        batched = head.forward(padded, np.array([3, 9]))[0]
        assert np.allclose(solo, batched, atol=1e-12)

    def test_length_validation(self):
        head = BiLSTMHead(6, HeadConfig(kind="bilstm", dropout=0.0), seed=0)
        frames = np.zeros((2, 5, 6))
        with pytest.raises(DimensionMismatch):
            head.forward(frames, np.array([5, 6]))
        with pytest.raises(DimensionMismatch):
            head.forward(frames, np.array([5, 0]))


class TestGradients:
    """Analytic gradients vs central finite differences on the fixed tiny
    instance (feature width 8, 5 frames)."""

    TOLERANCE = 1e-4

    def test_mlp_relu(self):
        head = MLPHead(8, HeadConfig(kind="mlp", hidden_sizes=(6, 4), dropout=0.0, activation="relu"), seed=3)
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 8))
        labels = np.array([0, 2])
        _, grads, _ = head.loss_and_grads(x, labels)
        fd = central_differences(head, lambda: head.loss_and_grads(x, labels)[0])
        assert max_relative_error(grads, fd) <= self.TOLERANCE

    def test_mlp_tanh(self):
        head = MLPHead(8, HeadConfig(kind="mlp", hidden_sizes=(6, 4), dropout=0.0, activation="tanh"), seed=3)
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 8))
        labels = np.array([0, 2])
        _, grads, _ = head.loss_and_grads(x, labels)
        fd = central_differences(head, lambda: head.loss_and_grads(x, labels)[0])
        assert max_relative_error(grads, fd) <= self.TOLERANCE

    def test_bilstm_with_variable_lengths(self):
        head = BiLSTMHead(8, HeadConfig(kind="bilstm", lstm_hidden=4, dropout=0.0), seed=5)
        rng = np.random.default_rng(7)
        frames = rng.standard_normal((2, 5, 8))
        lengths = np.array([5, 3])
        labels = np.array([1, 2])
        _, grads, _ = head.loss_and_grads(frames, lengths, labels)
        fd = central_differences(head, lambda: head.loss_and_grads(frames, lengths, labels)[0])
        assert max_relative_error(grads, fd) <= self.TOLERANCE

    def test_bilstm_single_sequence(self):
        head = BiLSTMHead(8, HeadConfig(kind="bilstm", lstm_hidden=4, dropout=0.0), seed=9)
        rng = np.random.default_rng(11)
        frames = rng.standard_normal((1, 5, 8))
        lengths = np.array([5])
        labels = np.array([0])
        _, grads, _ = head.loss_and_grads(frames, lengths, labels)
        fd = central_differences(head, lambda: head.loss_and_grads(frames, lengths, labels)[0])
        assert max_relative_error(grads, fd) <= self.TOLERANCE


class TestCrossEntropy:
    def test_uniform_logits_log3(self):
        loss, _ = cross_entropy(np.zeros((4, 3)), np.array([0, 1, 2, 0]))
        assert loss == pytest.approx(math.log(3.0), abs=1e-12)

    def test_gradient_rows_sum_to_zero(self):
        logits = np.random.default_rng(2).standard_normal((5, 3))
        _, dlogits = cross_entropy(logits, np.array([0, 1, 2, 1, 0]))
        assert np.allclose(dlogits.sum(axis=1), 0.0, atol=1e-12)


class TestDropout:
    def test_requires_rng_when_training(self):
        head = MLPHead(4, HeadConfig(kind="mlp", hidden_sizes=(3,), dropout=0.5), seed=0)
        with pytest.raises(ValueError):
            head.loss_and_grads(np.ones((2, 4)), np.array([0, 1]), rng=None)

    def test_eval_path_has_no_dropout(self):
        head = MLPHead(4, HeadConfig(kind="mlp", hidden_sizes=(3,), dropout=0.5), seed=0)
        x = np.ones((2, 4))
        assert (head.forward(x) == head.forward(x)).all()

    def test_dropout_is_seeded(self):
        head = BiLSTMHead(4, HeadConfig(kind="bilstm", lstm_hidden=3, dropout=0.4), seed=0)
        frames = np.ones((2, 3, 4))
        lengths = np.array([3, 2])
        labels = np.array([0, 1])
        loss_a, _, _ = head.loss_and_grads(frames, lengths, labels, rng=np.random.default_rng(1))
        loss_b, _, _ = head.loss_and_grads(frames, lengths, labels, rng=np.random.default_rng(1))
        assert loss_a == loss_b


class TestArtifacts:
    def test_round_trip_mlp(self, tmp_path):
        head = MLPHead(16, HeadConfig(kind="mlp", hidden_sizes=(8,), dropout=0.0), seed=12)
        path = save_head(tmp_path / "head.npz", head, meta={"backbone_name": "hubert_base"})
        loaded, meta = load_head(path)
        assert meta["backbone_name"] == "hubert_base"
        assert loaded.config == head.config
        for key in head.params:
            assert (loaded.params[key] == head.params[key]).all()
        x = np.random.default_rng(0).standard_normal((3, 16))
        assert np.allclose(loaded.forward(x), head.forward(x))

    def test_round_trip_bilstm(self, tmp_path):
        head = BiLSTMHead(12, HeadConfig(kind="bilstm", lstm_hidden=7, dropout=0.2), seed=13)
        path = save_head(tmp_path / "head.npz", head)
        loaded, _ = load_head(path)
        frames = np.random.default_rng(1).standard_normal((2, 4, 12))
        lengths = np.array([4, 2])
        assert np.allclose(loaded.forward(frames, lengths), head.forward(frames, lengths))

    def test_refuses_wrong_version(self, tmp_path):
        head = MLPHead(4, HeadConfig(kind="mlp", hidden_sizes=(3,), dropout=0.0), seed=0)
        path = save_head(tmp_path / "head.npz", head)
        import json

        with np.load(path) as archive:
            payload = {k: archive[k] for k in archive.files}
        meta = json.loads(bytes(payload["__meta__"]).decode())
        meta["format_version"] = 999
        payload["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        np.savez(path, **payload)
        with pytest.raises(ArtifactMismatch):
            load_head(path)

    def test_refuses_not_an_artifact(self, tmp_path):
        path = tmp_path / "junk.npz"
        np.savez(path, a=np.zeros(3))
        with pytest.raises(ArtifactMismatch):
            load_head(path)

    def test_build_head_dispatch(self):
        assert isinstance(build_head(4, HeadConfig(kind="mlp")), MLPHead)
        assert isinstance(build_head(4, HeadConfig(kind="bilstm")), BiLSTMHead)
