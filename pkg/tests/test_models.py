import numpy as np
import pytest

from decomcam.errors import InvalidArgumentError
from decomcam.models import CountingScorer, ToyCnn

from oracles import fd_layer_gradients, toy_forward_oracle


def _tiny_model(seed=0, channels=4):
    return ToyCnn.seeded(seed, channels=channels, kernel=4, stride=2, concepts=2)


def _tiny_image(seed=0, size=10):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=(3, size, size)).astype(np.float32)


class TestForward:
    def test_zero_image_zero_bias_scores_zero(self):
        model = _tiny_model()
        model.conv_bias = np.zeros_like(model.conv_bias)
        score, acts = model.forward(np.zeros((3, 10, 10), dtype=np.float32), "concept-0")
        assert score == 0.0
        assert (acts == 0.0).all()

    def test_head_is_linear_in_class_vector(self):
        model = _tiny_model(1)
        img = _tiny_image(1)
        base = model.score(img, "concept-0")
        model.class_vectors["concept-0"] = model.class_vectors["concept-0"] * 2.0
        assert model.score(img, "concept-0") == pytest.approx(2.0 * base, rel=1e-6)

    def test_matches_straightline_oracle(self):
        model = _tiny_model(2)
        img = _tiny_image(2, size=8)
        score = model.score(img, "concept-1")
        expected = toy_forward_oracle(model, img, "concept-1")
        assert score == pytest.approx(expected, rel=1e-5)

    def test_activations_post_relu(self):
        model = _tiny_model(3)
        _, acts = model.forward(_tiny_image(3), "concept-0")
        assert (acts >= 0.0).all()

    def test_unknown_concept(self):
        with pytest.raises(InvalidArgumentError):
            _tiny_model().score(_tiny_image(), "no-such-concept")

    def test_image_smaller_than_kernel(self):
        with pytest.raises(InvalidArgumentError):
            _tiny_model().score(np.zeros((3, 2, 2), dtype=np.float32), "concept-0")


class TestBackward:
    def test_zero_class_vector_gives_zero_grads(self):
        model = _tiny_model(4)
        model.class_vectors["concept-0"] = np.zeros_like(model.class_vectors["concept-0"])
        grads = model.backward(_tiny_image(4), "concept-0")
        assert (grads == 0.0).all()

    def test_fully_active_channel_gradient(self):
        # positive filter + positive image: every site active, grad = w / (M*N)
        model = ToyCnn(
            conv_weights=np.full((1, 3, 2, 2), 0.1, dtype=np.float32),
            conv_bias=np.zeros(1, dtype=np.float32),
            class_vectors={"c": np.array([3.0], dtype=np.float32)},
            stride=2,
        )
        img = np.full((3, 6, 6), 0.5, dtype=np.float32)
        grads = model.backward(img, "c")
        assert grads.shape == (1, 3, 3)
        np.testing.assert_allclose(grads, 3.0 / 9.0, rtol=1e-6)

    def test_matches_central_differences(self):
        for seed in range(10):
            model = _tiny_model(seed)
            img = _tiny_image(seed)
            analytic = model.backward(img, "concept-0").astype(np.float64)
            fd = fd_layer_gradients(model, img, "concept-0", step=1e-3)
            z, _, _ = model._conv(img)
            # central differences are invalid across the ReLU kink
            valid = (np.abs(analytic) > 1e-6) & (np.abs(z) > 1e-2)
            assert valid.any()
            rel = np.abs(analytic[valid] - fd[valid]) / np.abs(analytic[valid])
            assert rel.max() <= 1e-3

    def test_gradient_shape_matches_activations(self):
        model = _tiny_model(5)
        img = _tiny_image(5)
        acts, grads, _ = model.probe(img, "concept-0")
        assert acts.shape == grads.shape


class TestProbe:
    def test_probe_score_equals_scorer_score(self):
        model = _tiny_model(6)
        for seed in range(1000):
            img = _tiny_image(seed, size=6)
            _, _, probe_score = model.probe(img, "concept-0")
            assert probe_score == model.score(img, "concept-0")

    def test_deterministic(self):
        model = _tiny_model(7)
        img = _tiny_image(7)
        a = model.probe(img, "concept-1")
        b = model.probe(img, "concept-1")
        assert a[2] == b[2]
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class TestCountingScorer:
    def test_counts_calls(self):
        model = _tiny_model(8)
        counter = CountingScorer(model)
        img = _tiny_image(8)
        counter.score(img, "concept-0")
        counter.score(img, "concept-0")
        assert counter.calls == 2
