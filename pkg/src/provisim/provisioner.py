"""Headroom-based CPU allocation and the per-interval control loop.

Each control interval the loop ingests one smoothed observation vector,
refreshes the windowed process-noise statistics, runs the configured
filter's update, and emits the clamped allocation for the next interval:

    a_next = max(a_min, min((1 + h) * x_next, a_max))

where x_next is the filter's one-step-ahead utilization prediction and
h the headroom fraction. Operators usually think in terms of the target
utilization-to-allocation ratio c = 1 / (1 + h); c = 0.8 (h = 0.25) is
the default.

Timing follows the provisioning algorithm's update-then-predict order:
the prior consumed at interval k was built at the end of interval k-1
with the noise statistics available then, and the statistics refreshed
at interval k (including the newest difference) feed the prior for
interval k+1. During warm-up, before the difference window fills, the
configured initial W0 stands in for the windowed estimate.

A rejected H-infinity step (feasibility violation) is fail-static: the
loop keeps the previous allocation and posterior, counts the rejection,
and flags the decision so sweeps can disqualify the offending theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    FeasibilityError,
    FilterState,
    FilterTelemetry,
    HinfConfig,
    MccConfig,
    SystemMatrices,
    hinf_step_mimo,
    hinf_step_siso,
    kalman_step,
    mcc_step_mimo,
    mcc_step_siso,
)
from .noisestats import DiffWindow

FILTER_KINDS = ("kalman", "hinf", "mcc")
TOPOLOGIES = ("siso", "mimo")

# Tuned defaults: per-VM (scalar) control tolerates an aggressive bound,
# joint control wants a gentler one.
DEFAULT_THETA = {"siso": 0.7, "mimo": 0.1}
DEFAULT_SIGMA = 100.0


@dataclass(frozen=True)
class AllocationPolicy:
    """Headroom fraction h plus the per-component allocation clamp."""

    h: float = 0.25
    a_min: float = 20.0
    a_max: float = 100.0

    def __post_init__(self):
        if not (0.0 < self.h < 1.0):
            raise ValueError("headroom h must lie in (0, 1)")
        if not (0.0 <= self.a_min < self.a_max <= 100.0):
            raise ValueError("need 0 <= a_min < a_max <= 100")

    @classmethod
    def from_ratio(cls, c: float, a_min: float = 20.0, a_max: float = 100.0) -> "AllocationPolicy":
        """Build from the target utilization-to-allocation ratio c = 1/(1+h)."""
        if not (0.5 < c < 1.0):
            raise ValueError("ratio c must lie in (0.5, 1) so that h stays in (0, 1)")
        return cls(h=1.0 / c - 1.0, a_min=a_min, a_max=a_max)

    @property
    def ratio(self) -> float:
        return 1.0 / (1.0 + self.h)


def allocate(x_pred, policy: AllocationPolicy) -> np.ndarray:
    """Clamped headroom law applied per component.

    Negative predictions (possible after noisy differencing) are floored
    at zero before the headroom scaling.
    """
    x = np.maximum(np.asarray(x_pred, dtype=float).reshape(-1), 0.0)
    return np.minimum(np.maximum((1.0 + policy.h) * x, policy.a_min), policy.a_max)


def smooth_measurements(samples) -> np.ndarray:
    """Arithmetic mean of the sub-interval measurement rows.

    The loop expects one observation per control interval; callers with
    finer-grained measurements (e.g. 1 s samples inside a 5 s interval)
    average them with this before calling control_step.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] < 1:
        raise ValueError("need at least one measurement row")
    return arr.mean(axis=0)


@dataclass
class ControllerSpec:
    """Everything a control loop needs: filter choice, tuning, noise seeds, policy."""

    filter: str = "kalman"
    topology: str = "siso"
    theta: float | None = None     # None -> per-topology default
    sigma: float = DEFAULT_SIGMA
    window: int = 5                # sliding-window length T, in control samples
    w0: float = 4.0                # initial process-noise variance
    v: float = 1.0                 # pinned measurement-noise variance
    p0: float = 10.0               # initial error covariance
    policy: AllocationPolicy = field(default_factory=AllocationPolicy)
    control_interval: float = 5.0  # seconds between allocation updates
    sub_interval: float = 1.0      # seconds between raw usage measurements
    x0: float | None = None        # constant estimate seed; None seeds from first observation

    def __post_init__(self):
        if self.filter not in FILTER_KINDS:
            raise ValueError(f"unknown filter {self.filter!r}; expected one of {FILTER_KINDS}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}; expected one of {TOPOLOGIES}")
        if self.window < 2:
            raise ValueError("window T must be at least 2")
        if self.w0 < 0 or self.v <= 0 or self.p0 <= 0:
            raise ValueError("need w0 >= 0, v > 0, p0 > 0")
        if self.control_interval <= 0 or self.sub_interval <= 0:
            raise ValueError("intervals must be positive")
        ratio = self.control_interval / self.sub_interval
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("control_interval must be a positive multiple of sub_interval")

    @property
    def resolved_theta(self) -> float:
        return self.theta if self.theta is not None else DEFAULT_THETA[self.topology]


@dataclass
class AllocationDecision:
    """Outcome of one control interval."""

    allocation: np.ndarray       # a_next per component
    prediction: np.ndarray       # one-step-ahead utilization estimate used
    clamped_low: np.ndarray      # per-component bool
    clamped_high: np.ndarray
    warming_up: bool             # window not yet full; initial W0 in use
    feasibility_failed: bool     # at least one component held its allocation
    telemetry: FilterTelemetry   # cumulative counters snapshot


class ControlLoop:
    """Drives one application's components with the configured filter.

    The siso topology runs an independent scalar filter per component;
    mimo runs one joint filter over all components (cross-covariances
    included). Loops never share state, so multiple applications can be
    controlled concurrently with one loop each.
    """

    def __init__(self, spec: ControllerSpec, n_components: int, sys: SystemMatrices | None = None):
        if n_components < 1:
            raise ValueError("need at least one component")
        self.spec = spec
        self.n = int(n_components)
        if sys is None:
            sys = SystemMatrices.identity(self.n)
        if sys.A.shape != (self.n, self.n) or sys.C.shape != (self.n, self.n):
            raise ValueError("system matrices must be n x n")
        self.sys = sys
        self._sys1 = SystemMatrices.identity(1)
        self._V_mat = spec.v * np.eye(self.n)
        self._hinf_cfg = HinfConfig(theta=spec.resolved_theta)
        self._mcc_cfg = MccConfig(sigma=spec.sigma)
        self.telemetry = FilterTelemetry()
        self.window = DiffWindow(self.n, spec.window)
        self._states: list[FilterState] = []
        self._W_next: np.ndarray = np.empty(0)
        self._prev_allocation = np.full(self.n, spec.policy.a_max)
        self._started = False

    # -- lifecycle -----------------------------------------------------

    def reset(self) -> None:
        """Restore estimates, window, and telemetry to their initial values."""
        self.window.reset()
        self.telemetry.reset()
        self._states = []
        self._W_next = np.empty(0)
        self._prev_allocation = np.full(self.n, self.spec.policy.a_max)
        self._started = False

    @property
    def estimates(self) -> np.ndarray:
        """Current posterior utilization estimate per component."""
        if not self._started:
            raise RuntimeError("loop has not consumed any observation yet")
        if self.spec.topology == "mimo":
            return self._states[0].x.copy()
        return np.array([float(s.x[0]) for s in self._states])

    @property
    def covariances(self) -> np.ndarray:
        if not self._started:
            raise RuntimeError("loop has not consumed any observation yet")
        if self.spec.topology == "mimo":
            return self._states[0].P.copy()
        return np.diag([float(s.P[0, 0]) for s in self._states])

    # -- one control interval -------------------------------------------

    def control_step(self, y_smoothed) -> AllocationDecision:
        """Consume one smoothed observation vector, return the next allocation."""
        y = np.asarray(y_smoothed, dtype=float).reshape(-1)
        if y.shape[0] != self.n:
            raise ValueError(f"expected {self.n} components, got {y.shape[0]}")
        self.window.push(y)  # validates finiteness before any state changes

        feasibility_failed = False
        if not self._started:
            self._seed(y)
        else:
            feasibility_failed = self._update(y)

        # statistics refreshed after the newest difference; they shape the
        # prior consumed at the next interval
        self._W_next = self._estimate_noise()
        warming = not self.window.ready

        prediction = self._predict()
        if feasibility_failed and self.spec.topology == "mimo":
            allocation = self._prev_allocation.copy()
            clamped_low = np.zeros(self.n, dtype=bool)
            clamped_high = np.zeros(self.n, dtype=bool)
        else:
            allocation, clamped_low, clamped_high = self._allocate(prediction)
            if feasibility_failed:
                held = self._held_components
                allocation[held] = self._prev_allocation[held]
                clamped_low[held] = False
                clamped_high[held] = False
        self._prev_allocation = allocation.copy()

        return AllocationDecision(
            allocation=allocation,
            prediction=prediction,
            clamped_low=clamped_low,
            clamped_high=clamped_high,
            warming_up=warming,
            feasibility_failed=feasibility_failed,
            telemetry=FilterTelemetry(self.telemetry.feasibility_rejections,
                                      self.telemetry.kernel_underflows),
        )

    # -- internals -------------------------------------------------------

    def _seed(self, y: np.ndarray) -> None:
        # the initial posterior is declared, not computed: first estimate
        # comes from the first observation unless a constant seed is set
        seed = np.full(self.n, self.spec.x0) if self.spec.x0 is not None else y.copy()
        if self.spec.topology == "mimo":
            self._states = [FilterState.initial(seed, self.spec.p0 * np.eye(self.n))]
        else:
            self._states = [FilterState.initial([seed[i]], self.spec.p0) for i in range(self.n)]
        self._started = True
        self._held_components = np.zeros(self.n, dtype=bool)

    def _estimate_noise(self) -> np.ndarray:
        if not self.window.ready:
            if self.spec.topology == "mimo":
                return self.spec.w0 * np.eye(self.n)
            return np.full(self.n, self.spec.w0)
        if self.spec.topology == "mimo":
            return self.window.covariance()
        return np.array([self.window.variance(i) for i in range(self.n)])

    def _update(self, y: np.ndarray) -> bool:
        spec = self.spec
        self._held_components = np.zeros(self.n, dtype=bool)
        if spec.topology == "mimo":
            state = self._states[0]
            try:
                if spec.filter == "kalman":
                    state = kalman_step(state, y, self._W_next, self._V_mat, self.sys)
                elif spec.filter == "hinf":
                    state = hinf_step_mimo(state, y, self._W_next, self._V_mat, self.sys, self._hinf_cfg)
                else:
                    state = mcc_step_mimo(state, y, self._W_next, self._V_mat, self.sys,
                                          self._mcc_cfg, self.telemetry)
            except FeasibilityError:
                self.telemetry.feasibility_rejections += 1
                self._held_components[:] = True
                return True
            self._states[0] = state
            return False

        failed = False
        for i in range(self.n):
            state = self._states[i]
            w_i = float(self._W_next[i])
            try:
                if spec.filter == "kalman":
                    state = kalman_step(state, [y[i]], [[w_i]], [[spec.v]], self._sys1)
                elif spec.filter == "hinf":
                    state = hinf_step_siso(state, y[i], w_i, spec.v, self._hinf_cfg)
                else:
                    state = mcc_step_siso(state, y[i], w_i, spec.v, self._mcc_cfg, self.telemetry)
            except FeasibilityError:
                self.telemetry.feasibility_rejections += 1
                self._held_components[i] = True
                failed = True
                continue
            self._states[i] = state
        return failed

    def _predict(self) -> np.ndarray:
        if self.spec.topology == "mimo":
            return self.sys.A @ self._states[0].x
        return np.array([float(s.x[0]) for s in self._states])

    def _allocate(self, prediction: np.ndarray):
        policy = self.spec.policy
        raw = (1.0 + policy.h) * np.maximum(prediction, 0.0)
        allocation = np.minimum(np.maximum(raw, policy.a_min), policy.a_max)
        return allocation, raw < policy.a_min, raw > policy.a_max
