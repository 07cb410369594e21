import numpy as np
import pytest

from reluapprox.approx1d import (
    TARGETS,
    Target1D,
    build_relu_approx_1d,
    get_target,
    measure_net_error,
    measure_step_error,
    plan_ramps,
    ramps_to_sigma1_net,
    step_approximate,
    step_to_sigma1_net,
    target_from_samples,
)
from reluapprox.certificate import CERTIFIED
from reluapprox.errors import BudgetInfeasibleError, DomainError, InvalidInputError
from reluapprox.measure import exact_l1_step_vs_cpwl, net_to_cpwl_1d
from reluapprox.nets import ActivationKind, Net, activate
from reluapprox.partition import Cpwl1D, StepFn1D


def sigma1_target():
    return Target1D(lambda x: activate(ActivationKind.SIGMA1, 2 * x - 1), "sigma1_ramp",
                    lipschitz=2.0, breakpoints=(0.25, 0.75),
                    exact=Cpwl1D([0.0, 0.25, 0.75, 1.0], [0.0, 0.0, 1.0, 1.0]))


class TestStepApproximate:
    def test_identity_two_cells(self):
        step = step_approximate(get_target("x"), 2)
        np.testing.assert_array_equal(step.cuts, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(step.values, [0.25, 0.75], rtol=1e-14)
        assert measure_step_error(get_target("x"), step).value == pytest.approx(0.125, abs=1e-12)

    @pytest.mark.parametrize("k", [1, 4, 16, 1024])
    def test_identity_error_formula(self, k):
        step = step_approximate(get_target("x"), k)
        assert measure_step_error(get_target("x"), step).value == pytest.approx(1 / (4 * k),
                                                                                  abs=1e-12)

    @pytest.mark.parametrize("k", [1, 3, 10])
    def test_constant(self, k):
        f = Target1D(lambda x: np.full_like(x, 0.7), "const", lipschitz=0.0,
                     exact=Cpwl1D.constant(0.7))
        step = step_approximate(f, k)
        np.testing.assert_allclose(step.values, 0.7, rtol=1e-15)
        assert measure_step_error(f, step).value <= 1e-15

    def test_jump_inside_cell(self):
        # sign(x - 0.5) on 1 cell averages to 0; on 3 cells the middle one to 0
        sign = get_target("sign")
        assert step_approximate(sign, 1).values[0] == pytest.approx(0.0, abs=1e-14)
        np.testing.assert_allclose(step_approximate(sign, 3).values, [-1, 0, 1], atol=1e-13)

    def test_bad_k(self):
        with pytest.raises(DomainError):
            step_approximate(get_target("x"), 0)

    @pytest.mark.parametrize("name", ["x", "x2", "sign", "rsqrt"])
    def test_monotone_refinement(self, name):
        f = get_target(name)
        errs = [measure_step_error(f, step_approximate(f, 2 ** j)).value for j in range(8)]
        assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


class TestRamps:
    def test_single_jump_triangles(self):
        step = StepFn1D([0.0, 0.5, 1.0], [0.0, 1.0])
        net = ramps_to_sigma1_net(plan_ramps(step, 0.025))
        # slope is |h| / (4 * share) up to the planning shrink
        assert net.hidden_weights[1, 0] == pytest.approx(10.0, rel=1e-8)
        err = exact_l1_step_vs_cpwl(step, net_to_cpwl_1d(net)).value
        assert err == pytest.approx(1 / (4 * net.hidden_weights[1, 0]), abs=1e-12)

    def test_slope_ten_oracle(self):
        step = StepFn1D([0.0, 0.5, 1.0], [0.0, 1.0])
        net = Net([[0.0], [10.0]], [0.5, -5.0], [[0.0, 1.0]], ActivationKind.SIGMA1)
        assert exact_l1_step_vs_cpwl(step, net_to_cpwl_1d(net)).value == pytest.approx(
            0.025, abs=1e-12)

    def test_two_jumps_even_split(self):
        step = StepFn1D([0.0, 0.3, 0.7, 1.0], [0.0, 1.0, 0.0])
        plan = plan_ramps(step, 0.01)
        np.testing.assert_allclose(plan.slopes, [50.0, 50.0], rtol=1e-8)
        np.testing.assert_array_equal(plan.heights, [1.0, -1.0])
        err = exact_l1_step_vs_cpwl(step, net_to_cpwl_1d(ramps_to_sigma1_net(plan))).value
        assert err == pytest.approx(plan.l1_bound, abs=1e-12)
        assert err <= 0.01

    def test_constant_step(self):
        step = StepFn1D.uniform([0.4, 0.4, 0.4])
        net = step_to_sigma1_net(step, 0.1)
        assert net.hidden_count == 1
        np.testing.assert_array_equal(net(np.linspace(0, 1, 11))[:, 0], 0.4)

    def test_windows_respect_neighbours(self):
        # a huge budget would give a shallow ramp; slopes are raised so each
        # half-window stays inside half of the adjacent cell
        step = StepFn1D.uniform([0.0, 1.0, 0.0, 1.0])
        plan = plan_ramps(step, 10.0)
        assert np.all(1.0 / plan.slopes <= 0.25 + 1e-15)

    def test_window_cap(self):
        step = StepFn1D.uniform(np.arange(8.0))
        plan = plan_ramps(step, 1.0, max_window_measure=1e-3)
        assert plan.window_measure <= 1e-3

    def test_deviation_bound(self, rng):
        step = StepFn1D.uniform(rng.normal(size=12))
        plan = plan_ramps(step, 0.05)
        g = ramps_to_sigma1_net(plan)
        x = rng.random(20_000)
        dev = np.abs(g(x)[:, 0] - step(x))
        assert dev.max() <= plan.sup_deviation + 1e-12
        assert np.mean(dev > 1e-12) <= plan.window_measure + 0.01

    @pytest.mark.parametrize("budget", [0.0, -1.0, np.nan])
    def test_bad_budget(self, budget):
        with pytest.raises(DomainError):
            step_to_sigma1_net(StepFn1D.uniform([0.0, 1.0]), budget)

    def test_random_steps_within_budget(self, rng):
        for _ in range(50):
            step = StepFn1D.uniform(rng.normal(size=int(rng.integers(1, 40))))
            budget = 10 ** rng.uniform(-4, -1)
            net = step_to_sigma1_net(step, budget)
            err = exact_l1_step_vs_cpwl(step, net_to_cpwl_1d(net)).value
            assert err <= budget


class TestBuild:
    def test_identity(self):
        out = build_relu_approx_1d(get_target("x"), 0.1)
        cert = out.certificate
        assert [s.name for s in cert.stages] == ["step", "ramp"]
        assert [s.budget for s in cert.stages] == [0.05, 0.05]
        assert out.step.cell_count >= 5
        assert cert.stages[0].achieved <= 0.05 and cert.stages[1].achieved <= 0.05
        assert out.measured.value < 0.1
        assert out.net.activation is ActivationKind.RELU

    def test_representable_target(self):
        out = build_relu_approx_1d(sigma1_target(), 1e-3)
        assert out.measured.value < 1e-3

    def test_sign(self):
        out = build_relu_approx_1d(get_target("sign"), 0.05)
        assert out.measured.value < 0.05
        assert out.certificate.details["step_bound_source"] == "measured"
        # the jump sits on a dyadic cut, so two cells already reproduce it
        assert out.step.cell_count == 2

    def test_hidden_unit_accounting(self):
        for name in ("x", "x2", "sign", "sin2pi"):
            out = build_relu_approx_1d(get_target(name), 0.05)
            jumps = int(np.count_nonzero(out.step.jump_heights))
            assert out.net.hidden_count == 2 * (jumps + 1)

    @pytest.mark.parametrize("name", ["x", "x2", "sin2pi", "sign"])
    def test_stage_additivity(self, name):
        f = get_target(name)
        out = build_relu_approx_1d(f, 0.05)
        step_err = measure_step_error(f, out.step).value
        assert out.measured.value <= step_err + out.plan.l1_bound + 1e-12

    @pytest.mark.parametrize("name", sorted(TARGETS))
    @pytest.mark.parametrize("eps", [0.2, 0.05, 0.01])
    def test_certificate_sound(self, name, eps):
        out = build_relu_approx_1d(get_target(name), eps)
        cert = out.certificate
        assert cert.mode == CERTIFIED and cert.is_sound()
        assert out.measured.value <= cert.total_achieved <= eps
        assert measure_net_error(get_target(name), out.net).value == pytest.approx(
            out.measured.value, rel=1e-12, abs=1e-15)

    def test_cell_cap(self):
        with pytest.raises(BudgetInfeasibleError) as info:
            build_relu_approx_1d(get_target("x"), 1e-6, max_cells=64)
        assert info.value.achieved == pytest.approx(1 / 256)

    def test_cell_cap_measured_path(self):
        with pytest.raises(BudgetInfeasibleError) as info:
            build_relu_approx_1d(get_target("rsqrt"), 1e-3, max_cells=8)
        assert info.value.achieved > 5e-4

    def test_bad_eps(self):
        with pytest.raises(DomainError):
            build_relu_approx_1d(get_target("x"), 0.0)

    def test_deterministic(self):
        a = build_relu_approx_1d(get_target("sin2pi"), 0.05).net
        b = build_relu_approx_1d(get_target("sin2pi"), 0.05).net
        assert a.structurally_equal(b)


class TestTargets:
    def test_unknown(self):
        with pytest.raises(InvalidInputError):
            get_target("cosh")

    def test_rsqrt_truncation(self):
        f = get_target("rsqrt")
        np.testing.assert_allclose(f([0.0, 1e-6, 0.25, 1.0]), [100.0, 100.0, 2.0, 1.0])

    def test_samples(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("x,value\n0.25,1.0\n0.75,3.0\n")
        f = target_from_samples(path)
        np.testing.assert_allclose(f([0.0, 0.25, 0.5, 0.75, 1.0]), [1, 1, 2, 3, 3])
        assert f.lipschitz == 4.0
        assert build_relu_approx_1d(f, 0.01).measured.value < 0.01

    def test_samples_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.5,1\n1.5,2\n")
        with pytest.raises(InvalidInputError):
            target_from_samples(path)
        path.write_text("x,value\n")
        with pytest.raises(InvalidInputError):
            target_from_samples(path)
