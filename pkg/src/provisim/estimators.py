"""Predict/update recursions for the provisioning filters.

Three filters share one state layout and one calling convention. Each
step consumes the previous posterior, builds the prior with the current
process-noise covariance W, and updates against the observation y:

Kalman (baseline):
    x_pred = A x
    P_pred = A P A^T + W
    K      = P_pred C^T (C P_pred C^T + V)^-1
    x      = x_pred + K (y - C x_pred)
    P      = (I - K C) P_pred

H-infinity (worst-case error-energy bound 1/theta):
    M = I - theta P_pred + C^T V^-1 C P_pred      (must stay PD)
    K = P_pred M^-1 C^T V^-1
    P = P_pred M^-1
  The PD condition on M is the stability/feasibility check; violating
  it means theta is tuned too aggressively for the current covariances.
  As theta -> 0 the gain and covariance collapse to the Kalman ones.

MCC-KF (correntropy-weighted Kalman, Gaussian kernel bandwidth sigma):
    L = G(||y - C x_pred||_{V^-1}) / G(||x_pred - A x_prev||_{P_pred^-1})
    K = (P_pred^-1 + L C^T V^-1 C)^-1 L C^T V^-1
    x = x_pred + K (y - C x_pred)
    P = (I - K C) P_pred (I - K C)^T + K V K^T
  with G(t) = exp(-t^2 / (2 sigma^2)). With the prior computed from the
  same model the denominator argument is identically zero, so L is just
  the kernel of the weighted innovation; large sigma drives L -> 1 and
  recovers the Kalman step exactly (information-form gain identity).

Weighted norms use the square-root convention ||e||_M = sqrt(e^T M e),
keeping the kernel argument dimensionless in sigma.

Steps are pure: they never mutate their input state, so independent
filter instances can run concurrently without coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .matrixcore import (
    PD_TOL,
    SingularMatrixError,
    as_matrix,
    as_vector,
    is_positive_definite,
    mat_inv,
    symmetrize,
    weighted_sq_norm,
)

# Correntropy weight clamp; survives kernel underflow at huge innovations.
L_MIN = 1e-12
L_MAX = 1e12

_EYE_CACHE: dict[int, np.ndarray] = {}


def _eye(n: int) -> np.ndarray:
    eye = _EYE_CACHE.get(n)
    if eye is None:
        eye = np.eye(n)
        eye.setflags(write=False)
        _EYE_CACHE[n] = eye
    return eye


class FeasibilityError(RuntimeError):
    """H-infinity stability condition violated for the configured theta."""

    def __init__(self, theta: float, min_eigenvalue: float):
        self.theta = float(theta)
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"H-infinity feasibility violated: theta={theta:g} drives the "
            f"update matrix indefinite (min eigenvalue {min_eigenvalue:.6g} <= 0)"
        )


@dataclass
class FilterTelemetry:
    """Counters surfaced to the control loop."""

    feasibility_rejections: int = 0
    kernel_underflows: int = 0

    def reset(self) -> None:
        self.feasibility_rejections = 0
        self.kernel_underflows = 0


@dataclass(frozen=True)
class SystemMatrices:
    """State transition A and observation map C (identity for independent VMs)."""

    A: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        eye = np.eye(self.A.shape[0])
        # identity systems skip their matrix products in the hot path
        object.__setattr__(self, "is_identity",
                           self.A.shape == self.C.shape
                           and bool(np.array_equal(self.A, eye))
                           and bool(np.array_equal(self.C, eye)))

    @classmethod
    def identity(cls, n: int) -> "SystemMatrices":
        return cls(A=np.eye(n), C=np.eye(n))

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class HinfConfig:
    """Performance-bound parameter theta plus the diagonal allowable-error matrix.

    theta > 0 trades robustness for aggressiveness; the per-VM default is
    0.7 and the joint (multi-component) default 0.1. allowable_error is
    only consulted by the tuning audit, not by the recursion itself.
    """

    theta: float
    allowable_error: np.ndarray | None = None

    def __post_init__(self):
        if not (self.theta > 0.0):
            raise ValueError("theta must be positive")
        if self.allowable_error is not None:
            d = as_matrix(self.allowable_error)
            if d.shape[0] != d.shape[1] or np.any(np.diag(d) <= 0) or np.any(d != np.diag(np.diag(d))):
                raise ValueError("allowable_error must be diagonal with positive entries")


@dataclass(frozen=True)
class MccConfig:
    """Gaussian kernel bandwidth; 100 works well for percentage-point data."""

    sigma: float = 100.0

    def __post_init__(self):
        if not (self.sigma > 0.0):
            raise ValueError("sigma must be positive")


@dataclass
class FilterState:
    """Posterior estimate/covariance plus the prior the last update consumed."""

    x: np.ndarray
    P: np.ndarray
    x_pred: np.ndarray = field(default=None)  # type: ignore[assignment]
    P_pred: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not (isinstance(self.x, np.ndarray) and self.x.ndim == 1):
            self.x = as_vector(self.x)
        if not (isinstance(self.P, np.ndarray) and self.P.ndim == 2):
            self.P = as_matrix(self.P)
        if self.x_pred is None:
            self.x_pred = self.x.copy()
        if self.P_pred is None:
            self.P_pred = self.P.copy()

    @classmethod
    def initial(cls, x0, p0) -> "FilterState":
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        p0 = np.asarray(p0, dtype=float)
        if p0.ndim == 0:
            p0 = float(p0) * np.eye(x0.shape[0])
        return cls(x=x0, P=p0)

    @property
    def n(self) -> int:
        return self.x.shape[0]


def gaussian_kernel(t: float, sigma: float) -> float:
    """exp(-t^2 / (2 sigma^2)) on a scalar weighted-norm argument."""
    return math.exp(-(t * t) / (2.0 * sigma * sigma))


def _predict(s: FilterState, W, sys: SystemMatrices) -> tuple[np.ndarray, np.ndarray]:
    W = as_matrix(W)
    if sys.is_identity:
        return s.x.copy(), symmetrize(s.P + W)
    x_pred = sys.A @ s.x
    P_pred = symmetrize(sys.A @ s.P @ sys.A.T + W)
    return x_pred, P_pred


def kalman_step(s: FilterState, y, W, V, sys: SystemMatrices) -> FilterState:
    """One predict+update cycle of the baseline Kalman filter."""
    V = as_matrix(V)
    y = as_vector(y, s.n)
    x_pred, P_pred = _predict(s, W, sys)
    if sys.is_identity:
        innovation = y - x_pred
        K = P_pred @ mat_inv(P_pred + V)
        x = x_pred + K @ innovation
        P = symmetrize(P_pred - K @ P_pred)
        return FilterState(x=x, P=P, x_pred=x_pred, P_pred=P_pred)
    innovation = y - sys.C @ x_pred
    S = sys.C @ P_pred @ sys.C.T + V
    K = P_pred @ sys.C.T @ mat_inv(S)
    x = x_pred + K @ innovation
    P = symmetrize((_eye(s.n) - K @ sys.C) @ P_pred)
    return FilterState(x=x, P=P, x_pred=x_pred, P_pred=P_pred)


def hinf_feasibility(P_pred, V, C, theta: float) -> bool:
    """True iff I - theta P_pred + C^T V^-1 C P_pred is positive definite."""
    P_pred = as_matrix(P_pred)
    m = _hinf_update_matrix(P_pred, as_matrix(V), as_matrix(C), theta)
    return is_positive_definite(symmetrize(m))


def _hinf_update_matrix(P_pred: np.ndarray, V: np.ndarray, C: np.ndarray, theta: float) -> np.ndarray:
    n = P_pred.shape[0]
    return np.eye(n) - theta * P_pred + C.T @ mat_inv(V) @ C @ P_pred


def hinf_step_mimo(s: FilterState, y, W, V, sys: SystemMatrices, cfg: HinfConfig) -> FilterState:
    """One cycle of the worst-case-bound filter; rejects infeasible steps."""
    V = as_matrix(V)
    y = as_vector(y, s.n)
    x_pred, P_pred = _predict(s, W, sys)
    V_inv = mat_inv(V)
    if sys.is_identity:
        m = _eye(s.n) - cfg.theta * P_pred + V_inv @ P_pred
    else:
        m = _eye(s.n) - cfg.theta * P_pred + sys.C.T @ V_inv @ sys.C @ P_pred
    m_sym = symmetrize(m)
    if not is_positive_definite(m_sym):
        raise FeasibilityError(cfg.theta, float(np.linalg.eigvalsh(m_sym)[0]))
    m_inv = mat_inv(m)
    if sys.is_identity:
        K = P_pred @ m_inv @ V_inv
        x = x_pred + K @ (y - x_pred)
    else:
        K = P_pred @ m_inv @ sys.C.T @ V_inv
        x = x_pred + K @ (y - sys.C @ x_pred)
    P = symmetrize(P_pred @ m_inv)
    return FilterState(x=x, P=P, x_pred=x_pred, P_pred=P_pred)


def hinf_step_siso(s: FilterState, y: float, W: float, V: float, cfg: HinfConfig) -> FilterState:
    """Scalar specialization of the worst-case-bound filter.

        x_pred = x,  P_pred = P + W
        K = P_pred / (V (1 - theta P_pred + P_pred / V))
        P = P_pred / (1 - theta P_pred + P_pred / V)
    """
    x_pred = float(s.x[0])
    P_pred = float(s.P[0, 0]) + float(W)
    denom = 1.0 - cfg.theta * P_pred + P_pred / float(V)
    if denom <= PD_TOL:
        raise FeasibilityError(cfg.theta, denom)
    K = P_pred / (float(V) * denom)
    x = x_pred + K * (float(y) - x_pred)
    P = P_pred / denom
    return FilterState(
        x=np.array([x]), P=np.array([[P]]),
        x_pred=np.array([x_pred]), P_pred=np.array([[P_pred]]),
    )


def _clamped_correntropy_weight(num: float, den: float, telemetry: FilterTelemetry | None) -> float:
    L = num / den
    if L < L_MIN or L > L_MAX:
        if telemetry is not None:
            telemetry.kernel_underflows += 1
        L = min(max(L, L_MIN), L_MAX)
    return L


def mcc_step_mimo(
    s: FilterState, y, W, V, sys: SystemMatrices, cfg: MccConfig,
    telemetry: FilterTelemetry | None = None,
) -> FilterState:
    """One cycle of the correntropy-weighted Kalman filter (Joseph covariance form)."""
    V = as_matrix(V)
    y = as_vector(y, s.n)
    x_pred, P_pred = _predict(s, W, sys)
    V_inv = mat_inv(V)
    P_pred_inv = mat_inv(P_pred)
    innovation = y - x_pred if sys.is_identity else y - sys.C @ x_pred
    num = gaussian_kernel(math.sqrt(max(0.0, float(innovation @ V_inv @ innovation))), cfg.sigma)
    # zero whenever the prior comes from this same model's prediction
    drift = x_pred - s.x if sys.is_identity else x_pred - sys.A @ s.x
    if drift.any():
        den = gaussian_kernel(math.sqrt(max(0.0, float(drift @ P_pred_inv @ drift))), cfg.sigma)
    else:
        den = 1.0
    L = _clamped_correntropy_weight(num, den, telemetry)
    if sys.is_identity:
        K = mat_inv(P_pred_inv + L * V_inv) @ (L * V_inv)
        x = x_pred + K @ innovation
        ikc = _eye(s.n) - K
    else:
        CtVinv = sys.C.T @ V_inv
        K = mat_inv(P_pred_inv + L * (CtVinv @ sys.C)) @ (L * CtVinv)
        x = x_pred + K @ innovation
        ikc = _eye(s.n) - K @ sys.C
    P = symmetrize(ikc @ P_pred @ ikc.T + K @ V @ K.T)
    return FilterState(x=x, P=P, x_pred=x_pred, P_pred=P_pred)


def mcc_step_siso(
    s: FilterState, y: float, W: float, V: float, cfg: MccConfig,
    telemetry: FilterTelemetry | None = None,
) -> FilterState:
    """Scalar specialization of the correntropy-weighted filter.

        K = L / ((P_pred^-1 + L / V) V)
        P = (1 - K)^2 P_pred + K^2 V
    """
    V = float(V)
    x_pred = float(s.x[0])
    P_pred = float(s.P[0, 0]) + float(W)
    innovation = float(y) - x_pred
    num = gaussian_kernel(abs(innovation) / math.sqrt(V), cfg.sigma)
    L = _clamped_correntropy_weight(num, 1.0, telemetry)
    K = L / ((1.0 / P_pred + L / V) * V)
    x = x_pred + K * innovation
    P = (1.0 - K) ** 2 * P_pred + K * K * V
    return FilterState(
        x=np.array([x]), P=np.array([[P]]),
        x_pred=np.array([x_pred]), P_pred=np.array([[P_pred]]),
    )


def hinf_theta_audit(
    prev: FilterState, new: FilterState, y, W, V, sys: SystemMatrices,
    cfg: HinfConfig,
) -> float:
    """Empirical per-step upper-bound ratio for auditing a chosen theta.

    Uses residual proxies for the unobservable noises: w ~ x_k - A x_{k-1}
    (posterior increment) and v ~ y - C x_k (post-fit residual), and
    returns (||w||^2_{W^-1} + ||v||^2_{V^-1}) / ||D||^2 with D the
    allowable-error matrix. A sound theta stays at or below the running
    infimum of this ratio; returns inf when a singular covariance makes
    the bound vacuous.
    """
    y = as_vector(y, new.n)
    w_proxy = new.x - sys.A @ prev.x
    v_proxy = y - sys.C @ new.x
    total = 0.0
    try:
        if np.any(w_proxy):
            total += weighted_sq_norm(w_proxy, mat_inv(as_matrix(W)))
        if np.any(v_proxy):
            total += weighted_sq_norm(v_proxy, mat_inv(as_matrix(V)))
    except SingularMatrixError:
        return math.inf
    d = cfg.allowable_error if cfg.allowable_error is not None else np.eye(new.n)
    d_norm_sq = float(np.max(np.abs(np.diag(d)))) ** 2
    return total / d_norm_sq
