import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reluapprox.certificate import CERTIFIED
from reluapprox.errors import DomainError, InvalidInputError
from reluapprox.measure import class_measures
from reluapprox.nets import ActivationKind, Net
from reluapprox.partition import IndicatorSpec
from reluapprox.surgery import (
    build_softmax_indicator_net,
    indicator_error_closed_form,
    indicator_logits,
    sigma1_expand_to_relu,
    stack_outputs,
    theorem2_bound,
)

from conftest import per_cell_softmax_error, random_net

RELU, SIGMA1 = ActivationKind.RELU, ActivationKind.SIGMA1


class TestExpansion:
    def test_remap_fields(self):
        out = sigma1_expand_to_relu(Net([[3.0]], [-1.0], [[2.0]], SIGMA1))
        assert out.activation is RELU
        np.testing.assert_array_equal(out.hidden_weights, [[3.0], [3.0]])
        np.testing.assert_array_equal(out.hidden_biases, [-0.5, -1.5])
        np.testing.assert_array_equal(out.output_weights, [[2.0, -2.0]])

    def test_evaluation_at_half(self):
        src = Net([[3.0]], [-1.0], [[2.0]], SIGMA1)
        out = sigma1_expand_to_relu(src)
        # 2 * sigma1(0.5) = 2 and 2 * ReLU(1) - 2 * ReLU(0) = 2
        assert src([0.5])[0, 0] == 2.0
        assert out([0.5])[0, 0] == 2.0

    def test_zero_output_weight(self, rng):
        out = sigma1_expand_to_relu(Net([[1.7]], [0.3], [[0.0]], SIGMA1))
        assert np.all(out(rng.uniform(-5, 5, 200)) == 0.0)

    def test_relu_input_rejected(self):
        with pytest.raises(InvalidInputError):
            sigma1_expand_to_relu(Net([[1.0]], [0.0], [[1.0]], RELU))

    def test_head_copied(self):
        src = Net([[1.0]], [0.0], [[1.0], [2.0]], SIGMA1, softmax_head=True)
        assert sigma1_expand_to_relu(src).softmax_head

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 2, 5]), st.integers(1, 16),
           st.integers(1, 3))
    def test_equivalence(self, seed, d, n, m):
        rng = np.random.default_rng(seed)
        net = random_net(rng, d, n, m)
        X = rng.random((2000, d))
        out = sigma1_expand_to_relu(net)
        assert out.hidden_count == 2 * n
        assert np.max(np.abs(out(X) - net(X))) <= 1e-12


class TestStacking:
    def test_block_shapes(self, rng):
        a = random_net(rng, 2, 2, m=2, activation=RELU)
        b = random_net(rng, 2, 3, m=1, activation=RELU)
        s = stack_outputs(a, b)
        assert (s.output_count, s.hidden_count) == (3, 5)
        assert np.all(s.output_weights[:2, 2:] == 0.0)
        assert np.all(s.output_weights[2:, :2] == 0.0)
        np.testing.assert_array_equal(s.hidden_weights, np.vstack([a.hidden_weights, b.hidden_weights]))
        np.testing.assert_array_equal(s.hidden_biases, np.concatenate([a.hidden_biases, b.hidden_biases]))

    def test_self_stack_duplicates_outputs(self, rng):
        a = random_net(rng, 3, 6, m=2, activation=RELU)
        s = stack_outputs(a, a)
        out = s(rng.random((10_000, 3)))
        assert s.hidden_count == 12
        assert np.array_equal(out[:, :2], out[:, 2:])

    def test_zero_second_leaves_first(self, rng):
        a = random_net(rng, 2, 4, m=2, activation=RELU)
        z = Net(np.ones((3, 2)), np.zeros(3), np.zeros((1, 3)), RELU)
        X = rng.random((1000, 2))
        out = stack_outputs(a, z)(X)
        assert np.array_equal(out[:, :2], a(X))
        assert np.all(out[:, 2] == 0.0)

    def test_preconditions(self, rng):
        a = random_net(rng, 2, 2, activation=RELU)
        with pytest.raises(InvalidInputError):
            stack_outputs(a, random_net(rng, 3, 2, activation=RELU))
        with pytest.raises(InvalidInputError):
            stack_outputs(a, random_net(rng, 2, 2, activation=SIGMA1))
        with pytest.raises(InvalidInputError):
            stack_outputs(random_net(rng, 2, 2, m=2, activation=RELU).with_softmax_head(), a)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_associative_by_evaluation(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 4))
        a, b, c = (random_net(rng, d, int(rng.integers(1, 6)), int(rng.integers(1, 4)), RELU)
                   for _ in range(3))
        X = rng.random((500, d))
        left = stack_outputs(stack_outputs(a, b), c)(X)
        right = stack_outputs(a, stack_outputs(b, c))(X)
        np.testing.assert_allclose(left, right, atol=1e-12, rtol=0)
        np.testing.assert_allclose(left, np.hstack([a(X), b(X), c(X)]), atol=1e-12, rtol=0)


class TestIndicatorLogits:
    @pytest.mark.parametrize("m,eps,value", [(2, 0.5, 4.0), (2, 0.1, 20.0), (10, 0.05, 200.0)])
    def test_values(self, m, eps, value):
        spec = IndicatorSpec(1, m, [[0.5]], [1, 2])
        lg = indicator_logits(spec, eps)
        assert lg.scale == pytest.approx(2 * value)
        out = lg(np.array([0.1, 0.9]))
        assert out[0, 0] == pytest.approx(value) and out[0, 1] == pytest.approx(-value)
        assert out[1, 1] == pytest.approx(value) and out[1, 0] == pytest.approx(-value)

    def test_bad_eps(self):
        spec = IndicatorSpec.half_split(1)
        with pytest.raises(DomainError):
            indicator_logits(spec, 0.0)
        with pytest.raises(DomainError):
            indicator_error_closed_form(spec, -1.0)


class TestClosedForm:
    def test_half_split_value(self):
        err = indicator_error_closed_form(IndicatorSpec.half_split(1), 0.5)
        np.testing.assert_allclose(err, 1 / (math.exp(8) + 1), rtol=1e-14)
        np.testing.assert_allclose(err, 3.3535e-4, rtol=1e-4)

    def test_single_class_cover(self):
        spec = IndicatorSpec(1, 2, [[]], [1])
        eps = 0.7
        err = indicator_error_closed_form(spec, eps)
        denom = math.exp(4 / eps) + 1
        np.testing.assert_allclose(err, [1 / denom, 1 / denom], rtol=1e-14)
        np.testing.assert_allclose(err, per_cell_softmax_error(spec, eps), rtol=1e-12)

    def test_three_class_degenerate_cover(self):
        spec = IndicatorSpec(1, 3, [[]], [2])
        err = indicator_error_closed_form(spec, 1.0)
        denom = math.exp(6.0) + 2
        np.testing.assert_allclose(err, [1 / denom, 2 / denom, 1 / denom], rtol=1e-14)

    def test_monotone_in_eps(self):
        spec = IndicatorSpec(2, 3, [[0.3], [0.6]], [1, 2, 3, 1])
        errs = [indicator_error_closed_form(spec, e) for e in (2.0, 1.0, 0.5, 0.25)]
        for a, b in zip(errs, errs[1:]):
            assert np.all(b < a)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from([2, 3, 5, 10]),
           st.sampled_from([0.5, 0.1, 0.05]), st.integers(1, 3))
    def test_matches_cellwise_integration(self, seed, m, eps, d):
        spec = IndicatorSpec.random(np.random.default_rng(seed), d, m, max_cuts=3)
        closed = indicator_error_closed_form(spec, eps)
        np.testing.assert_allclose(closed, per_cell_softmax_error(spec, eps), rtol=1e-10, atol=0)


class TestTailBound:
    def test_values(self):
        tb = theorem2_bound(2, 0.5)
        assert tb.bound == pytest.approx(2 * math.exp(-8), rel=1e-14)
        assert tb.bound == pytest.approx(6.7092e-4, rel=1e-4)
        assert tb.guarantee == 0.25
        tb = theorem2_bound(2, 4.0)
        assert tb.bound == pytest.approx(0.7358, rel=1e-4)
        assert tb.bound <= tb.guarantee

    def test_swapped_exponent_is_reported(self):
        tb = theorem2_bound(2, 0.5)
        assert tb.swapped_exponent_value == pytest.approx(2 * math.exp(-0.5))
        assert tb.swapped_exponent_value > tb.guarantee

    def test_decreasing_in_ratio(self):
        ratios = np.linspace(0.5, 40, 60)
        bounds = [theorem2_bound(2, 2 / r).bound for r in ratios]
        assert all(b > a for a, b in zip(bounds[1:], bounds))

    def test_preconditions(self):
        with pytest.raises(DomainError):
            theorem2_bound(1, 0.1)
        with pytest.raises(DomainError):
            theorem2_bound(2, 0.0)

    @settings(max_examples=200)
    @given(st.integers(2, 50), st.floats(1e-3, 2.0))
    def test_dominance_chain(self, m, eps):
        spec = IndicatorSpec.random(np.random.default_rng(m), 1, m)
        closed = indicator_error_closed_form(spec, eps)
        tb = theorem2_bound(m, eps)
        assert np.all(closed <= tb.bound)
        assert tb.bound <= tb.guarantee


class TestSoftmaxIndicatorBuild:
    @pytest.mark.parametrize("eps", [0.2, 0.02])
    def test_half_split(self, eps):
        spec = IndicatorSpec(1, 2, [[0.5]], [1, 2])
        net, cert = build_softmax_indicator_net(spec, eps)
        assert net.softmax_head and net.activation is RELU
        assert cert.mode == CERTIFIED and cert.is_sound()
        assert max(cert.details["measured_per_class"]) < eps
        assert all(c < eps for c in cert.details["per_class_certified"])
        for measured, certified in zip(cert.details["measured_per_class"],
                                       cert.details["per_class_certified"]):
            assert measured <= certified

    def test_smaller_eps_bigger_weights_smaller_error(self):
        spec = IndicatorSpec(1, 2, [[0.5]], [1, 2])
        _, c1 = build_softmax_indicator_net(spec, 0.2)
        net2, c2 = build_softmax_indicator_net(spec, 0.02)
        assert max(c2.details["measured_per_class"]) < max(c1.details["measured_per_class"])
        assert np.max(np.abs(net2.hidden_weights)) > 0

    def test_single_class_cover(self):
        spec = IndicatorSpec(1, 2, [[]], [1])
        net, cert = build_softmax_indicator_net(spec, 0.1)
        assert np.all(net.hidden_weights == 0.0)
        assert max(cert.details["measured_per_class"]) < 0.1

    def test_many_classes(self):
        spec = IndicatorSpec.random(np.random.default_rng(3), 1, 5, max_cuts=6)
        net, cert = build_softmax_indicator_net(spec, 0.05)
        assert net.output_count == 5
        assert max(cert.details["measured_per_class"]) < 0.05

    def test_multidim_needs_backend(self):
        with pytest.raises(InvalidInputError):
            build_softmax_indicator_net(IndicatorSpec.half_split(2), 0.1)

    def test_class_measures_used(self):
        spec = IndicatorSpec(2, 2, [[0.25], []], [1, 2])
        np.testing.assert_allclose(class_measures(spec).mu, [0.25, 0.75])
