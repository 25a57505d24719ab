"""Gradient, purity, and error-path tests for the autodiff core."""

import math

import numpy as np
import pytest

from conftest import central_difference, gradient_rel_err
from srtc import autodiff as ad
from srtc.autodiff import Graph, GraphError
from srtc.optim import AdamState, adam_step

GRAD_TOL = 1e-4


def check_gradients(build, arrays, n_trials=5, seed=0, tol=GRAD_TOL,
                    low=-2.0, high=2.0):
    """Compare backward() against central differences for each leaf.

    ``build(graph, leaves)`` must return a scalar tensor; ``arrays`` maps
    leaf names to shapes.
    """
    rng = np.random.default_rng(seed)
    for _ in range(n_trials):
        values = {name: rng.uniform(low, high, size=shape)
                  for name, shape in arrays.items()}

        def run():
            g = Graph()
            leaves = {name: g.param(val, name)
                      for name, val in values.items()}
            return g, build(g, leaves)

        g, out = run()
        grads = g.backward(out)
        for name in arrays:
            numeric = central_difference(lambda: run()[1].item(),
                                         values[name])
            err = gradient_rel_err(grads[name], numeric)
            assert err <= tol, f"{name}: rel err {err:.2e}"


class TestPrimitiveGradients:
    def test_add_sub_mul_div(self):
        check_gradients(
            lambda g, t: ad.reduce_sum(
                (t["a"] + t["b"]) * (t["a"] - t["b"]) / (t["c"] * t["c"] + 1.0)),
            {"a": (3, 4), "b": (3, 4), "c": (3, 4)})

    def test_broadcast_bias_and_scale(self):
        check_gradients(
            lambda g, t: ad.reduce_sum(t["x"] * t["s"] + t["b"]),
            {"x": (4, 3), "s": (1, 3), "b": (1, 3)})

    def test_matmul_transpose(self):
        check_gradients(
            lambda g, t: ad.reduce_sum(
                ad.matmul(t["a"], ad.transpose(t["b"]))),
            {"a": (3, 4), "b": (5, 4)})

    def test_relu(self):
        # keep probes away from the kink
        check_gradients(
            lambda g, t: ad.reduce_sum(ad.relu(t["x"] + 0.5)),
            {"x": (4, 4)}, low=-2.0, high=-0.6)
        check_gradients(
            lambda g, t: ad.reduce_sum(ad.relu(t["x"])),
            {"x": (4, 4)}, low=0.3, high=2.0)

    def test_tanh_exp_log_softplus(self):
        check_gradients(
            lambda g, t: ad.reduce_sum(ad.tanh(t["x"]) + ad.softplus(t["x"])),
            {"x": (3, 3)})
        check_gradients(
            lambda g, t: ad.reduce_sum(ad.log(ad.exp(t["x"]) + 1.0)),
            {"x": (3, 3)})
        check_gradients(
            lambda g, t: ad.reduce_sum(ad.log(t["x"])),
            {"x": (3, 3)}, low=0.5, high=3.0)

    def test_sqrt_abs(self):
        check_gradients(
            lambda g, t: ad.reduce_sum(ad.sqrt(t["x"])),
            {"x": (3, 3)}, low=0.5, high=4.0)
        check_gradients(
            lambda g, t: ad.reduce_sum(ad.absolute(t["x"] + 3.0)),
            {"x": (3, 3)})

    def test_trig(self):
        check_gradients(
            lambda g, t: ad.reduce_sum(ad.cos(t["x"])),
            {"x": (3, 3)})
        check_gradients(
            lambda g, t: ad.mean(ad.arccos(t["x"])),
            {"x": (4, 1)}, low=-0.9, high=0.9)

    def test_reductions_axis(self):
        check_gradients(
            lambda g, t: ad.reduce_sum(
                ad.reduce_sum(t["x"], axis=0, keepdims=True) * t["w"]),
            {"x": (4, 3), "w": (1, 3)})
        check_gradients(
            lambda g, t: ad.mean(ad.reduce_sum(t["x"], axis=1)),
            {"x": (4, 3)})

    def test_concat_narrow(self):
        check_gradients(
            lambda g, t: ad.reduce_sum(
                ad.mul(ad.concat([t["a"], t["b"]], axis=1),
                       ad.concat([t["b"], t["a"]], axis=1))),
            {"a": (3, 2), "b": (3, 2)})
        check_gradients(
            lambda g, t: ad.reduce_sum(ad.narrow(t["x"], 0, 1, 2)),
            {"x": (4, 3)})

    def test_clip_min_row_norms(self):
        check_gradients(
            lambda g, t: ad.reduce_sum(ad.clip_min(t["x"], 0.25)),
            {"x": (4, 4)}, low=0.5, high=2.0)
        check_gradients(
            lambda g, t: ad.mean(ad.row_norms(t["x"])),
            {"x": (5, 3)}, low=0.5, high=2.0)

    def test_randomized_composites(self, rng):
        # many mixed expressions, fresh shapes each trial
        for trial in range(20):
            b = int(rng.integers(2, 6))
            d = int(rng.integers(2, 6))
            check_gradients(
                lambda g, t: ad.mean(
                    ad.row_norms(ad.tanh(ad.matmul(t["x"], t["w"]) + t["b"]))),
                {"x": (b, d), "w": (d, d), "b": (1, d)},
                n_trials=1, seed=trial)


class TestGraphSemantics:
    def test_forward_identity_and_relu_values(self):
        g = Graph()
        x = g.constant([[2.0, 3.0]])
        assert np.allclose((x * 1.0).data, [[2.0, 3.0]])
        r = ad.relu(g.constant([[-1.0, 2.0]]))
        assert np.array_equal(r.data, [[0.0, 2.0]])

    def test_softplus_zero_is_log_two(self):
        g = Graph()
        out = ad.softplus(g.constant(0.0))
        assert abs(out.item() - math.log(2.0)) < 1e-12

    def test_repeated_forward_is_pure(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(4, 3))
        w = rng.normal(size=(3, 2))

        def run():
            g = Graph()
            return ad.reduce_sum(
                ad.tanh(ad.matmul(g.constant(x), g.constant(w)))).item()

        assert run() == run()

    def test_backward_requires_scalar(self):
        g = Graph()
        x = g.param(np.ones((2, 2)), "x")
        y = x * 2.0
        with pytest.raises(GraphError, match="scalar"):
            g.backward(y)

    def test_shape_mismatch_names_op(self):
        g = Graph()
        a = g.constant(np.ones((2, 3)))
        b = g.constant(np.ones((4, 5)))
        with pytest.raises(GraphError, match="matmul"):
            ad.matmul(a, b)
        with pytest.raises(GraphError, match="add"):
            ad.add(a, b)

    def test_mixing_graphs_rejected(self):
        g1, g2 = Graph(), Graph()
        a = g1.constant(np.ones((2, 2)))
        b = g2.constant(np.ones((2, 2)))
        with pytest.raises(GraphError, match="different graphs"):
            ad.add(a, b)

    def test_non_finite_raises(self):
        g = Graph()
        with pytest.raises(GraphError, match="log"):
            ad.log(g.constant([-1.0]))
        with pytest.raises(GraphError, match="div"):
            ad.div(g.constant([1.0]), g.constant([0.0]))
        with pytest.raises(GraphError, match="exp"):
            ad.exp(g.constant([1e4]))

    def test_simple_square_gradient(self):
        g = Graph()
        w = g.param(np.asarray(3.0), "w")
        grads = g.backward(w * w)
        assert grads["w"] == pytest.approx(6.0)

    def test_linear_gradient_is_input(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 3))
        g = Graph()
        w = g.param(rng.normal(size=(3, 2)), "w")
        grads = g.backward(ad.reduce_sum(ad.matmul(g.constant(x), w)))
        assert np.allclose(grads["w"], x.T @ np.ones((4, 2)))

    def test_heaviside_has_no_gradient(self):
        g = Graph()
        x = g.param(np.array([[0.5, -0.5]]), "x")
        out = ad.reduce_sum(ad.heaviside(x))
        grads = g.backward(out)
        assert "x" not in grads

    def test_duplicate_param_name_rejected(self):
        g = Graph()
        g.param(np.ones(2), "w")
        with pytest.raises(GraphError, match="duplicate"):
            g.param(np.ones(2), "w")

    def test_two_backwards_with_reset_are_independent(self):
        g = Graph()
        w = g.param(np.asarray(2.0), "w")
        a = w * w
        b = w * 3.0
        ga = g.backward(a)["w"].copy()
        gb = g.backward(b, reset=True)["w"].copy()
        assert ga == pytest.approx(4.0)
        assert gb == pytest.approx(3.0)


class TestInputGradientExpression:
    def _layers(self, g, specs, trainable=True):
        out = []
        for i, (w, b, act) in enumerate(specs):
            wt = g.param(w, f"w{i}") if trainable else g.constant(w)
            bt = g.param(b, f"b{i}") if trainable else g.constant(b)
            out.append((wt, bt, act))
        return out

    def test_linear_map_gradient_is_weights(self):
        g = Graph()
        w = np.array([[1.0], [2.0]])
        layers = self._layers(g, [(w, np.zeros((1, 1)), "identity")],
                              trainable=False)
        x = g.constant(np.array([[0.3, -1.2], [5.0, 2.0]]))
        _, gx = ad.input_gradient_expression(layers, x)
        assert np.allclose(gx.data, [[1.0, 2.0], [1.0, 2.0]])

    def test_elementwise_relu_gradient(self):
        g = Graph()
        eye = np.eye(2)
        layers = self._layers(g, [(eye, np.zeros((1, 2)), "relu")],
                              trainable=False)
        x = g.constant(np.array([[-1.0, 2.0]]))
        _, gx = ad.input_gradient_expression(layers, x)
        assert np.array_equal(gx.data, [[0.0, 1.0]])

    def test_unsupported_activation(self):
        g = Graph()
        layers = [(g.constant(np.eye(2)), g.constant(np.zeros((1, 2))),
                   "sigmoid")]
        with pytest.raises(GraphError, match="unsupported activation"):
            ad.input_gradient_expression(layers, g.constant(np.ones((1, 2))))

    def _random_specs(self, rng, widths, acts):
        return [(rng.normal(size=(widths[i], widths[i + 1])),
                 rng.normal(size=(1, widths[i + 1])) * 0.1, acts[i])
                for i in range(len(acts))]

    def test_matches_finite_difference_input_gradient(self, rng):
        for trial in range(10):
            widths = [3, 5, 4, 1]
            acts = ["tanh", "relu", "identity"]
            specs = self._random_specs(rng, widths, acts)
            x = rng.normal(size=(2, 3)) + 0.05

            def grad_via_expression():
                g = Graph()
                layers = self._layers(g, specs, trainable=False)
                _, gx = ad.input_gradient_expression(layers, g.constant(x))
                return gx.data

            def output_sum():
                g = Graph()
                layers = self._layers(g, specs, trainable=False)
                from srtc.nets import Mlp
                y = Mlp.forward(layers, g.constant(x))
                return ad.reduce_sum(y).item()

            numeric = central_difference(output_sum, x)
            err = gradient_rel_err(grad_via_expression(), numeric)
            assert err <= 1e-4, f"trial {trial}: rel err {err:.2e}"

    def test_hessian_vector_product_matches_fd(self, rng):
        # d/dW of sum(grad_x(mlp) * v) vs central differences, through
        # the emitted gradient expression (double backprop path)
        widths = [4, 8, 6, 1]
        acts = ["tanh", "tanh", "identity"]
        specs = self._random_specs(rng, widths, acts)
        x = rng.normal(size=(3, 4))
        v = rng.normal(size=(3, 4))

        def phi_and_grads(want_grads):
            g = Graph()
            layers = self._layers(g, specs, trainable=True)
            _, gx = ad.input_gradient_expression(layers, g.constant(x))
            phi = ad.reduce_sum(ad.mul(gx, g.constant(v)))
            if not want_grads:
                return phi.item()
            return g.backward(phi)

        grads = phi_and_grads(True)
        for i, (w, b, act) in enumerate(specs):
            numeric = central_difference(lambda: phi_and_grads(False), w)
            err = gradient_rel_err(grads[f"w{i}"], numeric)
            assert err <= 1e-3, f"layer {i}: rel err {err:.2e}"


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = {"w": np.array([1.0, -2.0])}
        adam_step(p, {"w": np.zeros(2)}, AdamState(), lr=0.1)
        assert np.array_equal(p["w"], [1.0, -2.0])

    def test_first_step_magnitude_is_lr(self):
        # bias-corrected first step moves by ~lr against the gradient sign
        p = {"w": np.array([0.0, 0.0])}
        g = {"w": np.array([0.3, -1.7])}
        adam_step(p, g, AdamState(), lr=0.05)
        expected = 0.05 * np.sign(g["w"])
        assert np.allclose(p["w"], -expected, rtol=1e-6)

    def test_two_runs_bitwise_identical(self, rng):
        grads = [rng.normal(size=(4, 3)) for _ in range(10)]

        def run():
            p = {"w": np.zeros((4, 3))}
            state = AdamState()
            for g in grads:
                adam_step(p, {"w": g}, state, lr=1e-3)
            return p["w"]

        assert np.array_equal(run(), run())

    def test_nan_gradient_names_parameter(self):
        p = {"bad": np.zeros(2)}
        with pytest.raises(FloatingPointError, match="bad"):
            adam_step(p, {"bad": np.array([np.nan, 0.0])}, AdamState(),
                      lr=0.1)

    def test_rejects_bad_lr_and_shapes(self):
        p = {"w": np.zeros(2)}
        with pytest.raises(ValueError, match="learning rate"):
            adam_step(p, {"w": np.zeros(2)}, AdamState(), lr=0.0)
        with pytest.raises(ValueError, match="shape"):
            adam_step(p, {"w": np.zeros(3)}, AdamState(), lr=0.1)
