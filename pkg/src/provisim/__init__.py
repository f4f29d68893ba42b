"""Robust dynamic CPU provisioning: adaptive Kalman, H-infinity, and
correntropy-weighted Kalman controllers with a trace-driven two-tier
server simulator."""

from .estimators import (
    FeasibilityError,
    FilterState,
    FilterTelemetry,
    HinfConfig,
    MccConfig,
    SystemMatrices,
    hinf_feasibility,
    hinf_step_mimo,
    hinf_step_siso,
    kalman_step,
    mcc_step_mimo,
    mcc_step_siso,
)
from .noisestats import DiffWindow, NoiseEstimate, WindowNotReady
from .provisioner import (
    AllocationDecision,
    AllocationPolicy,
    ControllerSpec,
    ControlLoop,
    allocate,
)
from .simcluster import (
    RunMetrics,
    ServerModel,
    StepRecord,
    WorkloadSpec,
    calibrate_knee,
    gen_demand,
    run_scenario,
    serve,
    workload_wl1,
    workload_wl2,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationDecision", "AllocationPolicy", "ControlLoop", "ControllerSpec",
    "DiffWindow", "FeasibilityError", "FilterState", "FilterTelemetry",
    "HinfConfig", "MccConfig", "NoiseEstimate", "RunMetrics", "ServerModel",
    "StepRecord", "SystemMatrices", "WindowNotReady", "WorkloadSpec",
    "allocate", "calibrate_knee", "gen_demand", "hinf_feasibility",
    "hinf_step_mimo", "hinf_step_siso", "kalman_step", "mcc_step_mimo",
    "mcc_step_siso", "run_scenario", "serve", "workload_wl1", "workload_wl2",
]
