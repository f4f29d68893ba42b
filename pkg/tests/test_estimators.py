import math

import numpy as np
import pytest

from provisim.estimators import (
    FeasibilityError,
    FilterState,
    FilterTelemetry,
    HinfConfig,
    MccConfig,
    SystemMatrices,
    gaussian_kernel,
    hinf_feasibility,
    hinf_step_mimo,
    hinf_step_siso,
    hinf_theta_audit,
    kalman_step,
    mcc_step_mimo,
    mcc_step_siso,
)

SYS1 = SystemMatrices.identity(1)
SYS2 = SystemMatrices.identity(2)


def scalar_state(x, p):
    return FilterState.initial([x], p)


class TestKalman:
    def test_scalar_gain(self):
        # prior covariance 4 + W 0 gives P_pred 4, V 1: gain 4/5
        s = kalman_step(scalar_state(0.0, 4.0), [1.0], [[0.0]], [[1.0]], SYS1)
        assert s.x[0] == pytest.approx(0.8, abs=1e-15)
        assert s.P[0, 0] == pytest.approx(0.8, abs=1e-15)
        assert s.P_pred[0, 0] == 4.0

    def test_zero_innovation_keeps_prediction(self):
        s0 = scalar_state(50.0, 4.0)
        s = kalman_step(s0, [50.0], [[2.0]], [[1.0]], SYS1)
        assert s.x[0] == 50.0
        assert s.x_pred[0] == 50.0

    def test_huge_v_ignores_measurement(self):
        s = kalman_step(scalar_state(50.0, 4.0), [90.0], [[1.0]], [[1e12]], SYS1)
        assert s.x[0] == pytest.approx(50.0, abs=1e-9)

    def test_general_system_matches_identity_fast_path(self):
        # the same recursion through the generic branch
        sys_g = SystemMatrices(A=np.array([[1.0, 0.0], [0.0, 1.0]]) * 1.0,
                               C=np.array([[1.0, 0.0], [0.0, 1.0]]))
        sys_slow = SystemMatrices(A=np.array([[1.0, 1e-300], [0.0, 1.0]]),
                                  C=np.eye(2))
        assert sys_g.is_identity and not sys_slow.is_identity
        s0 = FilterState.initial([10.0, 20.0], np.diag([4.0, 6.0]))
        y = [12.0, 19.0]
        w = np.diag([1.0, 2.0])
        v = np.eye(2)
        fast = kalman_step(s0, y, w, v, sys_g)
        slow = kalman_step(s0, y, w, v, sys_slow)
        assert np.allclose(fast.x, slow.x, rtol=1e-12)
        assert np.allclose(fast.P, slow.P, rtol=1e-12)


class TestHinfSiso:
    def test_gain_and_covariance(self):
        # P_pred 5, V 1, theta 0.1: K and updated P both 5/5.5
        s = hinf_step_siso(scalar_state(0.0, 5.0), 1.0, 0.0, 1.0, HinfConfig(theta=0.1))
        assert s.x[0] == pytest.approx(5.0 / 5.5, rel=1e-12)
        assert s.P[0, 0] == pytest.approx(5.0 / 5.5, rel=1e-12)

    def test_gain_exceeds_kalman(self):
        hin = hinf_step_siso(scalar_state(0.0, 5.0), 1.0, 0.0, 1.0, HinfConfig(theta=0.1))
        kal = kalman_step(scalar_state(0.0, 5.0), [1.0], [[0.0]], [[1.0]], SYS1)
        assert kal.x[0] == pytest.approx(5.0 / 6.0, rel=1e-12)
        assert hin.x[0] > kal.x[0]

    def test_tiny_theta_matches_kalman(self):
        hin = hinf_step_siso(scalar_state(0.0, 5.0), 1.0, 0.0, 1.0, HinfConfig(theta=1e-12))
        assert hin.x[0] == pytest.approx(5.0 / 6.0, abs=1e-9)

    def test_zero_innovation(self):
        s = hinf_step_siso(scalar_state(42.0, 5.0), 42.0, 1.0, 1.0, HinfConfig(theta=0.7))
        assert s.x[0] == 42.0

    def test_infeasible_step_raises(self):
        with pytest.raises(FeasibilityError) as err:
            hinf_step_siso(scalar_state(0.0, 10.0), 1.0, 0.0, 1.0, HinfConfig(theta=2.0))
        assert err.value.theta == 2.0
        assert err.value.min_eigenvalue == pytest.approx(-9.0, rel=1e-12)


class TestHinfFeasibility:
    def test_scalar_accepts_moderate_theta(self):
        # 1 - 0.7*10 + 10 = 4 > 0
        assert hinf_feasibility([[10.0]], [[1.0]], [[1.0]], 0.7)

    def test_scalar_rejects_aggressive_theta(self):
        # 1 - 2*10 + 10 = -9 < 0
        assert not hinf_feasibility([[10.0]], [[1.0]], [[1.0]], 2.0)

    def test_vanishing_theta_always_feasible(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            w = rng.uniform(-1, 1, (2, 2))
            p = w.T @ w + 0.1 * np.eye(2)
            assert hinf_feasibility(p, np.eye(2), np.eye(2), 1e-15)


class TestHinfMimo:
    def test_scalar_embedding_matches_siso(self):
        cfg = HinfConfig(theta=0.1)
        mimo = hinf_step_mimo(scalar_state(0.0, 5.0), [1.0], [[0.0]], [[1.0]], SYS1, cfg)
        siso = hinf_step_siso(scalar_state(0.0, 5.0), 1.0, 0.0, 1.0, cfg)
        assert mimo.x[0] == pytest.approx(siso.x[0], rel=1e-12)
        assert mimo.P[0, 0] == pytest.approx(siso.P[0, 0], rel=1e-12)

    def test_feasibility_violation_names_eigenvalue(self):
        with pytest.raises(FeasibilityError) as err:
            hinf_step_mimo(FilterState.initial([0.0, 0.0], 10.0 * np.eye(2)),
                           [1.0, 1.0], np.zeros((2, 2)), np.eye(2), SYS2,
                           HinfConfig(theta=2.0))
        assert err.value.min_eigenvalue == pytest.approx(-9.0, rel=1e-12)

    def test_reduction_to_kalman_over_trace(self):
        rng = np.random.default_rng(31)
        cfg = HinfConfig(theta=1e-9)
        sh = FilterState.initial([50.0, 20.0], 10.0 * np.eye(2))
        sk = FilterState.initial([50.0, 20.0], 10.0 * np.eye(2))
        v = np.eye(2)
        for _ in range(1000):
            y = rng.uniform(0.0, 100.0, 2)
            w = np.diag(rng.uniform(0.1, 5.0, 2))
            sh = hinf_step_mimo(sh, y, w, v, SYS2, cfg)
            sk = kalman_step(sk, y, w, v, SYS2)
            assert np.allclose(sh.x, sk.x, rtol=1e-6, atol=1e-9)
            assert np.allclose(sh.P, sk.P, rtol=1e-6, atol=1e-9)


class TestMccSiso:
    def test_worked_example(self):
        # innovation 10, V 1, sigma 100: L = exp(-0.005); K = L / (1/5 + L)
        cfg = MccConfig(sigma=100.0)
        s = mcc_step_siso(scalar_state(50.0, 5.0), 60.0, 0.0, 1.0, cfg)
        L = math.exp(-0.005)
        K = L / ((1.0 / 5.0 + L / 1.0) * 1.0)
        assert K == pytest.approx(0.83264, abs=1e-5)
        assert s.x[0] == pytest.approx(50.0 + K * 10.0, rel=1e-12)
        assert s.P[0, 0] == pytest.approx((1 - K) ** 2 * 5.0 + K * K, rel=1e-12)

    def test_zero_innovation(self):
        s = mcc_step_siso(scalar_state(50.0, 5.0), 50.0, 1.0, 1.0, MccConfig(sigma=100.0))
        assert s.x[0] == 50.0

    def test_weight_is_kernel_of_weighted_innovation(self):
        # recover L from the realized gain and compare with the kernel value
        sigma, p0, w, v, innov = 35.0, 3.0, 1.5, 2.0, 12.0
        s = mcc_step_siso(scalar_state(0.0, p0), innov, w, v, MccConfig(sigma=sigma))
        p_pred = p0 + w
        K = s.x[0] / innov
        L = K * v / p_pred / (1.0 - K)
        assert L == pytest.approx(gaussian_kernel(abs(innov) / math.sqrt(v), sigma), rel=1e-9)
        assert 0.0 < L <= 1.0

    def test_huge_sigma_matches_kalman_trace(self):
        rng = np.random.default_rng(37)
        cfg = MccConfig(sigma=1e9)
        sm = scalar_state(50.0, 10.0)
        sk = scalar_state(50.0, 10.0)
        for _ in range(1000):
            y = float(rng.uniform(0.0, 100.0))
            w = float(rng.uniform(0.1, 5.0))
            sm = mcc_step_siso(sm, y, w, 1.0, cfg)
            sk = kalman_step(sk, [y], [[w]], [[1.0]], SYS1)
            assert sm.x[0] == pytest.approx(sk.x[0], rel=1e-9)
            assert sm.P[0, 0] == pytest.approx(sk.P[0, 0], rel=1e-9)

    def test_kernel_underflow_clamps_and_counts(self):
        telemetry = FilterTelemetry()
        s = mcc_step_siso(scalar_state(0.0, 5.0), 1e6, 0.0, 1.0,
                          MccConfig(sigma=1.0), telemetry)
        assert telemetry.kernel_underflows == 1
        assert np.isfinite(s.x[0]) and np.isfinite(s.P[0, 0])
        # clamped weight keeps the gain near zero: estimate barely moves
        assert abs(s.x[0]) < 1e-3


class TestMccMimo:
    def test_scalar_embedding_matches_siso(self):
        cfg = MccConfig(sigma=100.0)
        mm = mcc_step_mimo(scalar_state(50.0, 5.0), [60.0], [[0.0]], [[1.0]], SYS1, cfg)
        ss = mcc_step_siso(scalar_state(50.0, 5.0), 60.0, 0.0, 1.0, cfg)
        assert mm.x[0] == pytest.approx(ss.x[0], rel=1e-12)
        assert mm.P[0, 0] == pytest.approx(ss.P[0, 0], rel=1e-12)

    def test_identity_transition_gives_unit_denominator(self):
        # prior equals the propagated posterior, so the reference kernel is G(0) = 1
        # and the weight equals the innovation kernel alone, in (0, 1]
        cfg = MccConfig(sigma=50.0)
        s0 = FilterState.initial([10.0, 30.0], 5.0 * np.eye(2))
        s = mcc_step_mimo(s0, [14.0, 29.0], np.eye(2), np.eye(2), SYS2, cfg)
        innovation = np.array([4.0, -1.0])
        t = math.sqrt(float(innovation @ innovation))
        L = gaussian_kernel(t, 50.0)
        p_pred_inv = np.linalg.inv(6.0 * np.eye(2))
        K = np.linalg.inv(p_pred_inv + L * np.eye(2)) * L
        expected = s0.x + K @ innovation
        assert np.allclose(s.x, expected, rtol=1e-12)

    def test_huge_sigma_matches_kalman_trace(self):
        rng = np.random.default_rng(41)
        cfg = MccConfig(sigma=1e9)
        sm = FilterState.initial([50.0, 20.0], 10.0 * np.eye(2))
        sk = FilterState.initial([50.0, 20.0], 10.0 * np.eye(2))
        v = np.eye(2)
        for _ in range(1000):
            y = rng.uniform(0.0, 100.0, 2)
            w = np.diag(rng.uniform(0.1, 5.0, 2))
            sm = mcc_step_mimo(sm, y, w, v, SYS2, cfg)
            sk = kalman_step(sk, y, w, v, SYS2)
            assert np.allclose(sm.x, sk.x, rtol=1e-9, atol=1e-12)
            assert np.allclose(sm.P, sk.P, rtol=1e-9, atol=1e-12)


class TestGainDominance:
    def test_hinf_gain_strictly_exceeds_kalman(self):
        rng = np.random.default_rng(53)
        checked = 0
        while checked < 10000:
            p = float(rng.uniform(0.01, 100.0))
            v = float(rng.uniform(0.1, 10.0))
            theta = float(rng.uniform(1e-6, 2.0))
            if 1.0 - theta * p + p / v <= 1e-9:
                continue
            k_h = p / (v * (1.0 - theta * p + p / v))
            k_k = p / (p + v)
            assert k_h > k_k
            checked += 1


class TestDecoupling:
    @pytest.mark.parametrize("kind", ["kalman", "hinf"])
    def test_mimo_diagonal_equals_independent_siso(self, kind):
        rng = np.random.default_rng(61)
        hcfg = HinfConfig(theta=0.1)
        joint = FilterState.initial([40.0, 15.0], 10.0 * np.eye(2))
        split = [scalar_state(40.0, 10.0), scalar_state(15.0, 10.0)]
        v = np.eye(2)
        for _ in range(300):
            y = rng.uniform(0.0, 100.0, 2)
            wd = rng.uniform(0.1, 4.0, 2)
            w = np.diag(wd)
            if kind == "kalman":
                joint = kalman_step(joint, y, w, v, SYS2)
                split = [kalman_step(split[i], [y[i]], [[wd[i]]], [[1.0]], SYS1)
                         for i in range(2)]
            else:
                joint = hinf_step_mimo(joint, y, w, v, SYS2, hcfg)
                split = [hinf_step_siso(split[i], y[i], wd[i], 1.0, hcfg)
                         for i in range(2)]
            for i in range(2):
                assert joint.x[i] == pytest.approx(split[i].x[0], rel=1e-9, abs=1e-9)
                assert joint.P[i, i] == pytest.approx(split[i].P[0, 0], rel=1e-9, abs=1e-9)

    def test_mcc_joint_kernel_couples_components(self):
        # the correntropy weight is one kernel of the joint innovation norm,
        # which factors into the product of per-component kernels; a joint
        # run therefore differs from independent per-component runs at
        # moderate bandwidth, and coincides once the weight is neutral
        cfg = MccConfig(sigma=20.0)
        joint = FilterState.initial([40.0, 15.0], 10.0 * np.eye(2))
        split = [scalar_state(40.0, 10.0), scalar_state(15.0, 10.0)]
        y = [52.0, 24.0]
        joint = mcc_step_mimo(joint, y, np.eye(2), np.eye(2), SYS2, cfg)
        split = [mcc_step_siso(split[i], y[i], 1.0, 1.0, cfg) for i in range(2)]
        assert abs(joint.x[0] - split[0].x[0]) > 1e-6

    def test_mcc_decouples_with_neutral_weight(self):
        rng = np.random.default_rng(67)
        cfg = MccConfig(sigma=1e9)
        joint = FilterState.initial([40.0, 15.0], 10.0 * np.eye(2))
        split = [scalar_state(40.0, 10.0), scalar_state(15.0, 10.0)]
        v = np.eye(2)
        for _ in range(300):
            y = rng.uniform(0.0, 100.0, 2)
            wd = rng.uniform(0.1, 4.0, 2)
            joint = mcc_step_mimo(joint, y, np.diag(wd), v, SYS2, cfg)
            split = [mcc_step_siso(split[i], y[i], wd[i], 1.0, cfg) for i in range(2)]
            for i in range(2):
                assert joint.x[i] == pytest.approx(split[i].x[0], rel=1e-9, abs=1e-9)
                assert joint.P[i, i] == pytest.approx(split[i].P[0, 0], rel=1e-9, abs=1e-9)


class TestCovariancePosture:
    @pytest.mark.parametrize("kind", ["kalman", "hinf", "mcc"])
    def test_p_stays_symmetric_psd(self, kind):
        rng = np.random.default_rng(71)
        s = FilterState.initial([50.0, 20.0], 10.0 * np.eye(2))
        v = np.eye(2)
        for _ in range(500):
            y = rng.uniform(0.0, 100.0, 2)
            w = np.diag(rng.uniform(0.05, 5.0, 2))
            if kind == "kalman":
                s = kalman_step(s, y, w, v, SYS2)
            elif kind == "hinf":
                s = hinf_step_mimo(s, y, w, v, SYS2, HinfConfig(theta=0.1))
            else:
                s = mcc_step_mimo(s, y, w, v, SYS2, MccConfig(sigma=100.0))
            assert np.array_equal(s.P, s.P.T)
            assert np.linalg.eigvalsh(s.P)[0] >= -1e-12


class TestThetaAudit:
    def test_hand_computed_ratio(self):
        prev = FilterState.initial([10.0], 1.0)
        new = FilterState(x=np.array([13.0]), P=np.array([[1.0]]))
        # w proxy = 3, v proxy = 2, W = V = D = identity: ratio = 9 + 4
        ratio = hinf_theta_audit(prev, new, [15.0], [[1.0]], [[1.0]], SYS1,
                                 HinfConfig(theta=0.7))
        assert ratio == pytest.approx(13.0, rel=1e-12)

    def test_singular_noise_gives_infinite_bound(self):
        prev = FilterState.initial([10.0], 1.0)
        new = FilterState(x=np.array([13.0]), P=np.array([[1.0]]))
        ratio = hinf_theta_audit(prev, new, [15.0], [[0.0]], [[1.0]], SYS1,
                                 HinfConfig(theta=0.7))
        assert math.isinf(ratio)

    def test_allowable_error_scales_bound(self):
        prev = FilterState.initial([10.0], 1.0)
        new = FilterState(x=np.array([13.0]), P=np.array([[1.0]]))
        cfg = HinfConfig(theta=0.7, allowable_error=np.array([[2.0]]))
        ratio = hinf_theta_audit(prev, new, [15.0], [[1.0]], [[1.0]], SYS1, cfg)
        assert ratio == pytest.approx(13.0 / 4.0, rel=1e-12)


class TestConfigValidation:
    def test_theta_must_be_positive(self):
        with pytest.raises(ValueError):
            HinfConfig(theta=0.0)

    def test_allowable_error_must_be_positive_diagonal(self):
        with pytest.raises(ValueError):
            HinfConfig(theta=0.1, allowable_error=np.array([[1.0, 0.5], [0.5, 1.0]]))
        with pytest.raises(ValueError):
            HinfConfig(theta=0.1, allowable_error=np.array([[-1.0]]))

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            MccConfig(sigma=0.0)

    def test_filter_state_initial_scalar_covariance(self):
        s = FilterState.initial([1.0, 2.0], 10.0)
        assert np.array_equal(s.P, 10.0 * np.eye(2))
        assert np.array_equal(s.x_pred, s.x)
