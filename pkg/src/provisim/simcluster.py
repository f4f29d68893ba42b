"""Discrete-time simulator of a controlled two-tier server application.

A phased client population drives latent per-component CPU demand; the
controller's allocations cap what can actually be used; a congestion
model turns utilization and backlog into a client mean response time
(mRT). Response times follow the familiar three-region pattern: flat
while resources are abundant, rising as utilization approaches the
capacity, and exploding once demand outruns the allocation and work
queues up. The model is

    x    = min(d + b_prev / dt, a)           usable CPU, pp: live demand
                                             plus queued work, up to the cap
    rho  = min(x / max(a, eps), 1 - eps)     utilization ratio, pole-guarded
    b    = max(0, b_prev + (d - a) * dt)     backlog, pp*s
    mRT  = r_base + sum_i alpha * rho_i^gamma / (1 - rho_i) + beta * sum_i b_i
    y    = clip(x + v, 0, 100)               observed utilization
    CR   = round(kappa * sum_i x_i * dt)     completed requests

The usage term matches the backlog recurrence: spare capacity a - d
drains the queue, so a recovering component runs at its cap until the
queue clears and its observed utilization stays high while doing so.

Requests traverse every tier, so per-component congestion and backlog
terms add into a single mRT. Guarding the congestion ratio at 1 - eps
bounds what one briefly saturated interval can cost (a few seconds);
sustained overload still grows without bound through the backlog term.
The constants are calibration, not ground truth: defaults put the
full-allocation saturation knee near 1350 clients and a 0.5 s objective
threshold.

Runs are pure functions of (workload, model, controller, steps): all
randomness flows from the workload seed through named child streams,
one per noise consumer, so adding a consumer never perturbs the others.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .provisioner import ControllerSpec, ControlLoop

TRACE_COLUMNS = ("k", "component", "demand", "usage", "observation",
                 "allocation", "backlog", "mrt", "cr")

_NOISE_KINDS = ("gaussian", "uniform", "none")


def _piecewise(schedule, k: int) -> float:
    value = schedule[0][1]
    for start, v in schedule:
        if k >= start:
            value = v
        else:
            break
    return value


@dataclass(frozen=True)
class WorkloadSpec:
    """Phased client-count timeline plus per-component demand shaping.

    phases is a sorted (start_sample, client_count) step schedule. Each
    client contributes gain_i percentage points of demand to component i,
    scaled by 7 / think_time (slower thinkers issue fewer requests) and
    an optional per-phase think multiplier. Demand noise is relative:
    d = base * (1 + eta) with eta gaussian(sigma) or uniform(+/-bound).

    client_lag (in samples) makes demand approach a new client count
    exponentially instead of stepping: inserted clients issue their
    first requests staggered by their think times, so one control
    sample only sees part of the increment. Zero (the default) keeps
    demand exactly piecewise constant on the phase schedule.
    """

    phases: tuple = ((0, 700.0),)
    gains: tuple = (0.063, 0.0173)
    think_time: float = 7.0
    think_multipliers: tuple | None = None
    demand_noise: tuple = ("gaussian", 0.01)
    client_lag: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.phases:
            raise ValueError("need at least one phase")
        starts = [int(s) for s, _ in self.phases]
        if starts != sorted(starts) or starts[0] != 0:
            raise ValueError("phases must be sorted by start sample and begin at 0")
        if any(n < 0 for _, n in self.phases):
            raise ValueError("client counts must be non-negative")
        if not self.gains or any(g <= 0 for g in self.gains):
            raise ValueError("per-component gains must be positive")
        if self.think_time <= 0:
            raise ValueError("think time must be positive")
        kind, scale = self.demand_noise
        if kind not in _NOISE_KINDS or scale < 0:
            raise ValueError(f"demand noise must be one of {_NOISE_KINDS} with scale >= 0")
        if self.client_lag < 0:
            raise ValueError("client_lag must be non-negative")

    @property
    def n_components(self) -> int:
        return len(self.gains)

    def clients(self, k: int) -> float:
        return _piecewise(self.phases, k)

    def effective_clients(self, k: int) -> float:
        """Client count as one sampled interval sees it.

        With zero lag this is the phase schedule exactly. Otherwise the
        population approaches each phase's target exponentially in
        continuous time (time constant client_lag samples) and the value
        reported for sample k is the average over that interval, because
        observations are interval means of sub-interval measurements.
        """
        if self.client_lag <= 0:
            return self.clients(k)
        decay = float(np.exp(-1.0 / self.client_lag))
        phi = self.client_lag * (1.0 - decay)  # interval mean of the decay curve
        level = float(self.phases[0][1])       # population at the end of sample `pos`
        target = float(self.phases[0][1])
        pos = -1
        for start, next_target in self.phases[1:]:
            if start > k:
                break
            level = target + (level - target) * decay ** (start - 1 - pos)
            pos = start - 1
            target = float(next_target)
        end_of_prev = target + (level - target) * decay ** (k - 1 - pos)
        return target + (end_of_prev - target) * phi

    def think_factor(self, k: int) -> float:
        factor = 7.0 / self.think_time
        if self.think_multipliers:
            factor *= _piecewise(self.think_multipliers, k)
        return factor

    def base_demand(self, k: int) -> np.ndarray:
        """Noise-free demand per component, clamped to [0, 100] pp."""
        load = self.effective_clients(k) * self.think_factor(k)
        return np.array([min(max(g * load, 0.0), 100.0) for g in self.gains])


_WL_PHASES = ((0, 700.0), (10, 1200.0), (25, 700.0), (30, 1200.0), (45, 700.0))

# Inserted clients stagger their first requests by think time (7 s mean)
# and ramp up their sessions, spreading new load over roughly two 5 s
# control samples instead of stepping it
_WL_CLIENT_LAG = 2.2


def workload_wl1(seed: int = 0) -> WorkloadSpec:
    """Abrupt two-burst profile: 700 clients baseline, +500 for 15 samples
    starting at samples 10 and 30."""
    return WorkloadSpec(phases=_WL_PHASES, client_lag=_WL_CLIENT_LAG, seed=seed)


def workload_wl2(seed: int = 0) -> WorkloadSpec:
    """Same client schedule as workload_wl1 with hotter bursts: the think
    multiplier rises during injections, standing in for a custom
    think-time profile."""
    return WorkloadSpec(
        phases=_WL_PHASES,
        think_multipliers=((0, 1.0), (10, 1.12), (25, 1.0), (30, 1.12), (45, 1.0)),
        client_lag=_WL_CLIENT_LAG,
        seed=seed,
    )


@dataclass(frozen=True)
class ServerModel:
    """Response-time model constants; see the module docstring for the law."""

    r_base: float = 0.05     # baseline response, s
    alpha: float = 1.7       # congestion weight, s
    gamma: float = 20.0      # congestion exponent (sharp saturation knee)
    beta: float = 0.02       # s per unit of backlog (pp*s)
    epsilon: float = 0.08    # utilization-ratio guard, bounds the congestion pole
    kappa: float = 3.0       # completed requests per pp*s served
    slo_threshold: float = 0.5  # objective on mRT, s
    measurement_noise: tuple = ("gaussian", 1.0)  # variance (gaussian) / half-width (uniform)

    def __post_init__(self):
        if min(self.r_base, self.alpha, self.gamma, self.beta, self.kappa,
               self.slo_threshold) <= 0:
            raise ValueError("model constants must be positive")
        if not (0.0 < self.epsilon <= 0.1):
            raise ValueError("epsilon must lie in (0, 0.1]")
        kind, scale = self.measurement_noise
        if kind not in _NOISE_KINDS or scale < 0:
            raise ValueError(f"measurement noise must be one of {_NOISE_KINDS} with scale >= 0")


@dataclass
class StepRecord:
    """Per-interval telemetry for one control sample."""

    k: int
    demand: np.ndarray
    usage: np.ndarray
    observation: np.ndarray
    allocation: np.ndarray
    backlog: np.ndarray
    mrt: float
    cr: int
    flagged: bool = False


@dataclass
class RunMetrics:
    """End-of-run scores."""

    completed_requests: int
    avg_cpu: tuple            # per component, pp
    avg_mrt: float            # completed-request-weighted, s
    slo_obedience: float      # weighted fraction of intervals meeting the objective


def gen_demand(spec: WorkloadSpec, k: int, noise=None) -> np.ndarray:
    """Demand vector at sample k; noise is the relative perturbation vector."""
    if k < 0:
        raise ValueError("sample index must be non-negative")
    if noise is None:
        return spec.base_demand(k)
    load = spec.effective_clients(k) * spec.think_factor(k)
    return np.array([
        min(max(min(max(g * load, 0.0), 100.0) * (1.0 + float(eta)), 0.0), 100.0)
        for g, eta in zip(spec.gains, noise)
    ])


def serve(d, a, model: ServerModel, b_prev, dt: float = 5.0, v=None):
    """Serve one interval: returns (usage, observation, backlog, mrt, cr).

    v is the observation-noise vector for the interval, already smoothed
    if the caller averages sub-interval measurements; None means exact
    observation (y = x).
    """
    ds = [float(q) for q in d]
    sa = [float(q) for q in a]
    bs = [float(q) for q in b_prev]
    vs = None if v is None else [float(q) for q in v]
    rho_cap = 1.0 - model.epsilon
    xs, ys, b_next = [], [], []
    congestion = 0.0
    backlog_sum = 0.0
    served = 0.0
    for i in range(len(ds)):
        x_i = min(ds[i] + bs[i] / dt, sa[i])
        rho = min(x_i / max(sa[i], model.epsilon), rho_cap)
        congestion += model.alpha * rho**model.gamma / (1.0 - rho)
        b_i = max(0.0, bs[i] + (ds[i] - sa[i]) * dt)
        backlog_sum += b_i
        served += x_i
        xs.append(x_i)
        b_next.append(b_i)
        ys.append(x_i if vs is None else min(max(x_i + vs[i], 0.0), 100.0))
    mrt = model.r_base + congestion + model.beta * backlog_sum
    cr = int(round(model.kappa * served * dt))
    return np.array(xs), np.array(ys), np.array(b_next), mrt, cr


def _draw_noise(rng: np.random.Generator, law, shape) -> np.ndarray | None:
    # gaussian scale is a standard deviation here, uniform scale a half-width
    kind, scale = law
    if kind == "none" or scale == 0:
        return None
    if kind == "gaussian":
        return rng.normal(0.0, scale, size=shape)
    return rng.uniform(-scale, scale, size=shape)


def run_scenario(
    workload: WorkloadSpec,
    model: ServerModel,
    controller: ControllerSpec | None,
    steps: int,
) -> tuple[list[StepRecord], RunMetrics]:
    """Drive the control loop over a synthetic workload.

    With controller=None every component keeps a static full allocation,
    which is what the knee measurements use. Controller failures flag
    the record (allocation held) rather than aborting the run.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    n = workload.n_components
    dt = controller.control_interval if controller is not None else 5.0

    # named child streams: order is part of the format, append-only
    demand_ss, measure_ss = np.random.SeedSequence(workload.seed).spawn(2)
    eta = _draw_noise(np.random.default_rng(demand_ss), workload.demand_noise, (steps, n))

    # the controller sees the mean of the sub-interval measurements, so the
    # raw per-measurement noise is drawn per sub-sample and averaged
    sub = controller.sub_interval if controller is not None else 1.0
    m_sub = max(1, int(round(dt / sub)))
    kind, scale = model.measurement_noise
    meas_law = (kind, float(np.sqrt(scale))) if kind == "gaussian" else (kind, scale)
    v = _draw_noise(np.random.default_rng(measure_ss), meas_law, (steps, n, m_sub))
    if v is not None:
        v = v.mean(axis=2)

    loop = ControlLoop(controller, n) if controller is not None else None
    a_max = controller.policy.a_max if controller is not None else 100.0
    a = np.full(n, a_max)
    b = np.zeros(n)
    records: list[StepRecord] = []
    for k in range(steps):
        d = gen_demand(workload, k, None if eta is None else eta[k])
        x, y, b, mrt, cr = serve(d, a, model, b, dt=dt, v=None if v is None else v[k])
        flagged = False
        a_next = a
        if loop is not None:
            try:
                decision = loop.control_step(y)
                a_next = decision.allocation
                flagged = decision.feasibility_failed
            except Exception:
                flagged = True  # hold the previous allocation
        records.append(StepRecord(k=k, demand=d, usage=x, observation=y,
                                  allocation=a.copy(), backlog=b.copy(),
                                  mrt=mrt, cr=cr, flagged=flagged))
        a = a_next
    return records, compute_metrics(records, model.slo_threshold)


def compute_metrics(records: list[StepRecord], slo_threshold: float = 0.5) -> RunMetrics:
    n = records[0].usage.shape[0]
    total_cr = sum(r.cr for r in records)
    avg_cpu = tuple(float(np.mean([r.usage[i] for r in records])) for i in range(n))
    if total_cr > 0:
        amrt = sum(r.cr * r.mrt for r in records) / total_cr
        sloo = sum(r.cr for r in records if r.mrt <= slo_threshold) / total_cr
    else:
        amrt = float(np.mean([r.mrt for r in records]))
        sloo = sum(1 for r in records if r.mrt <= slo_threshold) / len(records)
    return RunMetrics(completed_requests=total_cr, avg_cpu=avg_cpu,
                      avg_mrt=float(amrt), slo_obedience=float(sloo))


def calibrate_knee(model: ServerModel, gains=(0.063, 0.0173), think: float = 7.0) -> int:
    """Smallest client count whose steady-state mRT at full allocation
    breaks the objective threshold (binary search; defaults land near
    the 1350-client saturation knee)."""
    gains = np.asarray(gains, dtype=float)
    factor = 7.0 / think

    def steady_mrt(n_clients: float) -> float:
        d = np.clip(gains * n_clients * factor, 0.0, 100.0)
        x, _, _, mrt, _ = serve(d, np.full(len(gains), 100.0), model, np.zeros(len(gains)))
        return mrt

    if steady_mrt(0) > model.slo_threshold:
        return 0
    hi = 1024
    while steady_mrt(hi) <= model.slo_threshold:
        hi *= 2
        if hi > 10**9:
            raise RuntimeError("response model never crosses the objective threshold")
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if steady_mrt(mid) > model.slo_threshold:
            hi = mid
        else:
            lo = mid
    return hi


# -- trace CSV ----------------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def trace_to_csv(records: list[StepRecord]) -> str:
    """Render records in the trace schema: one row per component per sample,
    comma-separated, LF line endings, '.' decimal separator."""
    lines = [",".join(TRACE_COLUMNS)]
    for r in records:
        for i in range(r.usage.shape[0]):
            lines.append(",".join([
                str(r.k), str(i), _fmt(r.demand[i]), _fmt(r.usage[i]),
                _fmt(r.observation[i]), _fmt(r.allocation[i]), _fmt(r.backlog[i]),
                _fmt(r.mrt), str(r.cr),
            ]))
    return "\n".join(lines) + "\n"


def write_trace(path, records: list[StepRecord]) -> None:
    atomic_write_text(path, trace_to_csv(records))


def read_trace(path) -> list[StepRecord]:
    """Parse a trace CSV back into records (flags are not persisted)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty trace file")
        missing = [c for c in TRACE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing trace column {missing[0]!r}")
        by_k: dict[int, list[dict]] = {}
        for row in reader:
            by_k.setdefault(int(row["k"]), []).append(row)
    records = []
    for k in sorted(by_k):
        rows = sorted(by_k[k], key=lambda r: int(r["component"]))
        records.append(StepRecord(
            k=k,
            demand=np.array([float(r["demand"]) for r in rows]),
            usage=np.array([float(r["usage"]) for r in rows]),
            observation=np.array([float(r["observation"]) for r in rows]),
            allocation=np.array([float(r["allocation"]) for r in rows]),
            backlog=np.array([float(r["backlog"]) for r in rows]),
            mrt=float(rows[0]["mrt"]),
            cr=int(rows[0]["cr"]),
        ))
    return records


def atomic_write_text(path, text: str) -> None:
    """Write-then-rename so concurrent readers never see partial files."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".provisim-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
