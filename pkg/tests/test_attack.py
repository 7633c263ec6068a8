"""Projection geometry and attack-driver behavior."""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blackbandit import (
    DegenerateGradient,
    LabeledInput,
    Oracle,
    OracleDescriptor,
    Point,
    TransportError,
    make_oracle,
)
from blackbandit.attack import (
    AttackConfig,
    Bandit,
    CoordinateFd,
    Nes,
    Whitebox,
    ball_project,
    boundary_project,
    fgsm_step,
    run_attack,
)
from blackbandit.bandit import BanditHyper
from blackbandit.oracle import LinearModel, SoftmaxModel


def mlp_oracle():
    return make_oracle(OracleDescriptor(kind="mlp", dimension=256, num_classes=10, seed=7))


def mlp_input(oracle):
    x = Point((np.arange(256, dtype=np.float64) % 7.0) / 7.0, shape=(16, 16, 1))
    return LabeledInput(x, oracle.top_class(x))


def constant_classifier():
    """All logits identically zero: class 0 everywhere, loss ln 10, gradient 0."""
    return Oracle(SoftmaxModel(np.zeros((10, 16)), np.zeros(10)))


def default_hyper():
    return BanditHyper(eta_oco=100.0, delta_explore=1.0, fd_probe=0.1, h_image=0.01)


class TestBoundaryProject:
    def test_l2_normalizes(self):
        npt.assert_allclose(boundary_project(np.array([3.0, 4.0]), "l2"), [0.6, 0.8])

    def test_linf_signs_with_zero_convention(self):
        npt.assert_array_equal(
            boundary_project(np.array([0.2, -7.0, 0.0]), "linf"), [1.0, -1.0, 1.0]
        )

    @given(st.integers(min_value=0, max_value=10_000))
    def test_linf_idempotent(self, seed):
        g = np.random.default_rng(seed).standard_normal(6)
        once = boundary_project(g, "linf")
        npt.assert_array_equal(boundary_project(once, "linf"), once)

    def test_l2_zero_vector_degenerate(self):
        with pytest.raises(DegenerateGradient):
            boundary_project(np.zeros(3), "l2")

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            boundary_project(np.array([np.nan, 1.0]), "linf")


class TestBallProject:
    def test_linf_clips_offset(self):
        x0 = Point(np.array([0.5]))
        out = ball_project(Point(np.array([0.58])), x0, 0.05, "linf", clamp=True)
        npt.assert_allclose(out.data, [0.55])

    def test_l2_rescales_offset(self):
        x0 = Point(np.zeros(2))
        out = ball_project(Point(np.array([3.0, 4.0])), x0, 1.0, "l2", clamp=False)
        npt.assert_allclose(out.data, [0.6, 0.8])

    def test_interior_point_unchanged(self):
        x0 = Point(np.array([0.4, 0.6]))
        x = Point(np.array([0.42, 0.58]))
        for norm in ("l2", "linf"):
            npt.assert_array_equal(ball_project(x, x0, 0.1, norm, clamp=True).data, x.data)

    def test_clamp_applied_after_ball(self):
        x0 = Point(np.array([0.9]))
        moved = Point(np.array([1.2]))
        clamped = ball_project(moved, x0, 0.5, "linf", clamp=True)
        npt.assert_allclose(clamped.data, [1.0])
        free = ball_project(moved, x0, 0.5, "linf", clamp=False)
        npt.assert_allclose(free.data, [1.2])


class TestFgsmStep:
    def test_zero_epsilon_identity(self):
        x0 = Point(np.array([0.3, 0.7]))
        out = fgsm_step(x0, 0, np.array([1.0, -1.0]), 0.0)
        npt.assert_array_equal(out.data, x0.data)

    def test_linear_loss_gain_is_epsilon_l1_norm(self):
        c = np.array([0.5, -1.5, 2.0, -0.25])
        oracle = Oracle(LinearModel(c))
        x0 = Point(np.full(4, 0.5))
        signs = np.sign(c)
        out = fgsm_step(x0, 0, signs, 0.1)
        before = oracle.diagnostic_loss(LabeledInput(x0, 0))
        after = oracle.diagnostic_loss(LabeledInput(out, 0))
        npt.assert_allclose(after - before, 0.1 * np.abs(c).sum(), rtol=1e-12)

    def test_clamps_to_unit_box(self):
        out = fgsm_step(Point(np.array([0.99, 0.01])), 0, np.array([1.0, -1.0]), 0.05)
        npt.assert_allclose(out.data, [1.0, 0.0])

    def test_rejects_invalid_signs(self):
        with pytest.raises(ValueError):
            fgsm_step(Point(np.zeros(2)), 0, np.array([0.5, 1.0]), 0.1)


class TestAttackConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            AttackConfig(norm="l1", epsilon=0.05, h=0.01, estimator=Whitebox())
        with pytest.raises(ValueError):
            AttackConfig(norm="l2", epsilon=0.0, h=0.01, estimator=Whitebox())
        with pytest.raises(ValueError):
            AttackConfig(norm="l2", epsilon=0.1, h=0.01, estimator=Whitebox(), max_queries=1)

    def test_estimator_validation(self):
        with pytest.raises(ValueError):
            Nes(k=0)
        with pytest.raises(ValueError):
            CoordinateFd(delta=-1.0)
        with pytest.raises(ValueError):
            Bandit(hyper=default_hyper(), tile=0)


class TestRunAttack:
    def test_whitebox_succeeds_with_zero_queries(self):
        oracle = mlp_oracle()
        cfg = AttackConfig(norm="linf", epsilon=0.05, h=0.01, estimator=Whitebox())
        out, trace = run_attack(oracle, mlp_input(oracle), cfg, np.random.default_rng(0))
        assert out.success
        assert out.queries_used == 0
        assert all(r.queries == 0 for r in trace.rows)

    def test_precondition_rejects_misclassified_input(self):
        oracle = mlp_oracle()
        inp = mlp_input(oracle)
        wrong = LabeledInput(inp.point, (inp.label + 1) % 10)
        cfg = AttackConfig(norm="linf", epsilon=0.05, h=0.01, estimator=Whitebox())
        with pytest.raises(ValueError):
            run_attack(oracle, wrong, cfg, np.random.default_rng(0))

    def test_coordinate_fd_spends_d_plus_one_per_iteration(self):
        oracle = mlp_oracle()
        cfg = AttackConfig(
            norm="linf", epsilon=0.05, h=0.01, estimator=CoordinateFd(delta=0.01),
            max_queries=2000, max_iterations=1,
        )
        out, trace = run_attack(oracle, mlp_input(oracle), cfg, np.random.default_rng(3))
        assert out.queries_used == 257
        assert trace.rows[0].queries == 257

    def test_budget_cap_holds_without_success(self):
        oracle = constant_classifier()
        inp = LabeledInput(Point(np.full(16, 0.5)), 0)
        cfg = AttackConfig(norm="linf", epsilon=0.05, h=0.01, estimator=Nes(k=50, delta=0.1), max_queries=120)
        out, trace = run_attack(oracle, inp, cfg, np.random.default_rng(0))
        assert not out.success
        assert out.queries_used == 100
        assert out.queries_used <= 120

    def test_zero_gradient_makes_no_step(self):
        oracle = constant_classifier()
        inp = LabeledInput(Point(np.full(16, 0.5)), 0)
        cfg = AttackConfig(norm="l2", epsilon=0.5, h=0.1, estimator=Whitebox(), max_iterations=5)
        out, _ = run_attack(oracle, inp, cfg, np.random.default_rng(0))
        assert not out.success
        npt.assert_array_equal(out.adversarial_point.data, inp.point.data)

    @pytest.mark.parametrize("norm,eps", [("linf", 0.05), ("l2", 1.0)])
    def test_bandit_attack_succeeds_and_respects_feasibility(self, norm, eps):
        oracle = mlp_oracle()
        inp = mlp_input(oracle)
        hyper = default_hyper() if norm == "linf" else BanditHyper(
            eta_oco=0.1, delta_explore=0.5, fd_probe=0.01, h_image=0.2
        )
        cfg = AttackConfig(norm=norm, epsilon=eps, h=0.01, estimator=Bandit(hyper=hyper), max_queries=2000)
        out, trace = run_attack(oracle, inp, cfg, np.random.default_rng(2))
        assert out.success
        offset = out.adversarial_point.data - inp.point.data
        if norm == "linf":
            assert np.max(np.abs(offset)) <= eps * (1 + 1e-9)
        else:
            assert np.linalg.norm(offset) <= eps * (1 + 1e-9)
        assert out.adversarial_point.data.min() >= 0.0
        assert out.adversarial_point.data.max() <= 1.0
        assert oracle.top_class(out.adversarial_point) != inp.label

    def test_nes_trace_queries_strictly_increase(self):
        oracle = mlp_oracle()
        cfg = AttackConfig(
            norm="linf", epsilon=0.02, h=0.002, estimator=Nes(k=20, delta=0.1), max_queries=400
        )
        out, trace = run_attack(oracle, mlp_input(oracle), cfg, np.random.default_rng(5))
        counts = [r.queries for r in trace.rows]
        assert all(b > a for a, b in zip(counts, counts[1:]))
        assert all(np.isfinite(r.loss) for r in trace.rows)

    def test_determinism_bit_for_bit(self):
        oracle = mlp_oracle()
        cfg = AttackConfig(norm="linf", epsilon=0.05, h=0.01,
                           estimator=Bandit(hyper=default_hyper()), max_queries=2000)
        inp = mlp_input(oracle)
        out1, _ = run_attack(oracle, inp, cfg, np.random.default_rng(7))
        out2, _ = run_attack(oracle, inp, cfg, np.random.default_rng(7))
        assert out1.success == out2.success
        assert out1.queries_used == out2.queries_used
        assert out1.iterations == out2.iterations
        npt.assert_array_equal(out1.adversarial_point.data, out2.adversarial_point.data)

    def test_transport_failure_marks_aborted(self):
        class FlakyOracle:
            def __init__(self, inner):
                self.inner = inner
                self.ledger = inner.ledger
                self.dimension = inner.dimension
                self.num_classes = inner.num_classes
                self.supports_gradients = False

            def fresh(self, max_queries=None):
                return FlakyOracle(self.inner.fresh(max_queries))

            def top_class(self, point):
                return self.inner.top_class(point)

            def loss_batch(self, points, label):
                raise TransportError("connection dropped")

            def loss(self, inp):
                raise TransportError("connection dropped")

        oracle = FlakyOracle(mlp_oracle())
        inp = mlp_input(oracle.inner)
        cfg = AttackConfig(norm="linf", epsilon=0.05, h=0.01, estimator=Nes(k=10, delta=0.1), max_queries=100)
        out, _ = run_attack(oracle, inp, cfg, np.random.default_rng(0))
        assert out.aborted
        assert not out.success

    def test_nes_lr_overrides_config_step(self):
        oracle = mlp_oracle()
        inp = mlp_input(oracle)
        base = dict(norm="linf", epsilon=0.05, max_queries=300, max_iterations=1)
        big = AttackConfig(h=1e-6, estimator=Nes(k=20, delta=0.1, lr=0.05), **base)
        out_big, _ = run_attack(oracle, inp, big, np.random.default_rng(4))
        small = AttackConfig(h=1e-6, estimator=Nes(k=20, delta=0.1), **base)
        out_small, _ = run_attack(oracle, inp, small, np.random.default_rng(4))
        moved_big = np.abs(out_big.adversarial_point.data - inp.point.data).max()
        moved_small = np.abs(out_small.adversarial_point.data - inp.point.data).max()
        assert moved_big == pytest.approx(0.05, rel=1e-9)
        assert moved_small == pytest.approx(1e-6, rel=1e-9)
