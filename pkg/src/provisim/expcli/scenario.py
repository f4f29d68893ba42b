"""Flat key = value scenario files.

One assignment per line, `#` starts a comment, unknown keys are
rejected with their line number. Omitted controller keys fall back to
the standard experiment configuration (P0=10, W0=4, V=1, T=5, 5 s
control interval, c=0.8); the omitted workload defaults to the abrupt
two-burst profile. Example:

    workload.phases = 0:700, 10:1200, 25:700, 30:1200, 45:700
    workload.gains  = 0.063, 0.0173
    workload.noise  = gaussian:0.05
    workload.seed   = 1
    controller.filter   = hinf
    controller.topology = siso
    controller.theta    = 0.7
    controller.c        = 0.8
    run.steps = 50
    run.out   = results

`--set key=value` command-line overrides reuse exactly this vocabulary
and win over file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..provisioner import AllocationPolicy, ControllerSpec
from ..simcluster import ServerModel, WorkloadSpec, workload_wl1


class ScenarioError(Exception):
    """Invalid scenario content; carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


_WL1 = workload_wl1()

KNOWN_KEYS = {
    "workload.phases", "workload.think", "workload.think_multipliers",
    "workload.gains", "workload.noise", "workload.seed",
    "model.r_base", "model.alpha", "model.gamma", "model.beta",
    "model.epsilon", "model.kappa", "model.slo", "model.noise",
    "controller.filter", "controller.topology", "controller.theta",
    "controller.sigma", "controller.c", "controller.h", "controller.T",
    "controller.a_min", "controller.a_max", "controller.W0", "controller.V",
    "controller.P0", "controller.interval", "controller.sub_interval",
    "controller.x0",
    "run.steps", "run.out",
}


@dataclass
class Scenario:
    workload: WorkloadSpec
    model: ServerModel
    controller: ControllerSpec
    steps: int = 50
    out_dir: str = "out"


def parse_assignments(text: str, source: str = "<scenario>") -> dict[str, tuple[str, int | None]]:
    """Parse `key = value` lines into {key: (value, line_number)}."""
    entries: dict[str, tuple[str, int | None]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {line!r}", lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ScenarioError(f"unknown key {key!r}", lineno)
        entries[key] = (value.strip(), lineno)
    return entries


def apply_overrides(entries: dict, sets) -> dict:
    for item in sets or ():
        if "=" not in item:
            raise ScenarioError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ScenarioError(f"unknown override key {key!r}")
        entries[key] = (value.strip(), None)
    return entries


def load_scenario(path=None, sets=(), seed: int | None = None) -> Scenario:
    """Read a scenario file (or pure defaults when path is None), apply
    `--set` overrides and an optional seed override, and build the specs."""
    entries: dict[str, tuple[str, int | None]] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
        entries = parse_assignments(text, source=str(path))
    apply_overrides(entries, sets)
    if seed is not None:
        entries["workload.seed"] = (str(seed), None)
    return build_scenario(entries)


class _Reader:
    """Typed access to raw entries, turning bad values into ScenarioError."""

    def __init__(self, entries: dict[str, tuple[str, int | None]]):
        self.entries = entries

    def has(self, key: str) -> bool:
        return key in self.entries and self.entries[key][0] != ""

    def _get(self, key: str, parse, default):
        if not self.has(key):
            return default
        value, line = self.entries[key]
        try:
            return parse(value)
        except ScenarioError:
            raise
        except Exception as exc:
            raise ScenarioError(f"bad value for {key}: {value!r} ({exc})", line) from exc

    def str_(self, key, default=None):
        return self._get(key, str, default)

    def float_(self, key, default=None):
        return self._get(key, float, default)

    def int_(self, key, default=None):
        return self._get(key, int, default)

    def schedule(self, key, default=None):
        return self._get(key, _parse_schedule, default)

    def floats(self, key, default=None):
        return self._get(key, _parse_floats, default)

    def noise(self, key, default=None):
        return self._get(key, _parse_noise, default)


def _parse_schedule(value: str) -> tuple:
    pairs = []
    for chunk in value.split(","):
        start, _, level = chunk.partition(":")
        if not _:
            raise ValueError(f"expected start:value, got {chunk.strip()!r}")
        pairs.append((int(start.strip()), float(level.strip())))
    return tuple(pairs)


def _parse_floats(value: str) -> tuple:
    return tuple(float(chunk.strip()) for chunk in value.split(","))


def _parse_noise(value: str) -> tuple:
    value = value.strip()
    if value == "none":
        return ("none", 0.0)
    kind, _, scale = value.partition(":")
    if not _:
        raise ValueError(f"expected kind:scale or 'none', got {value!r}")
    return (kind.strip(), float(scale.strip()))


def build_scenario(entries: dict[str, tuple[str, int | None]]) -> Scenario:
    r = _Reader(entries)

    workload = WorkloadSpec(
        phases=r.schedule("workload.phases", _WL1.phases),
        gains=r.floats("workload.gains", _WL1.gains),
        think_time=r.float_("workload.think", _WL1.think_time),
        think_multipliers=r.schedule("workload.think_multipliers", None),
        demand_noise=r.noise("workload.noise", _WL1.demand_noise),
        seed=r.int_("workload.seed", 0),
    )
    defaults = ServerModel()
    model = ServerModel(
        r_base=r.float_("model.r_base", defaults.r_base),
        alpha=r.float_("model.alpha", defaults.alpha),
        gamma=r.float_("model.gamma", defaults.gamma),
        beta=r.float_("model.beta", defaults.beta),
        epsilon=r.float_("model.epsilon", defaults.epsilon),
        kappa=r.float_("model.kappa", defaults.kappa),
        slo_threshold=r.float_("model.slo", defaults.slo_threshold),
        measurement_noise=r.noise("model.noise", defaults.measurement_noise),
    )
    controller = build_controller(r)
    steps = r.int_("run.steps", 50)
    if steps < 1:
        raise ScenarioError("run.steps must be at least 1")
    return Scenario(workload=workload, model=model, controller=controller,
                    steps=steps, out_dir=r.str_("run.out", "out"))


def build_controller(r: _Reader) -> ControllerSpec:
    if r.has("controller.c") and r.has("controller.h"):
        raise ScenarioError("give controller.c or controller.h, not both")
    a_min = r.float_("controller.a_min", 20.0)
    a_max = r.float_("controller.a_max", 100.0)
    try:
        if r.has("controller.h"):
            policy = AllocationPolicy(h=r.float_("controller.h"), a_min=a_min, a_max=a_max)
        else:
            policy = AllocationPolicy.from_ratio(r.float_("controller.c", 0.8), a_min=a_min, a_max=a_max)
        return ControllerSpec(
            filter=r.str_("controller.filter", "kalman"),
            topology=r.str_("controller.topology", "siso"),
            theta=r.float_("controller.theta", None),
            sigma=r.float_("controller.sigma", 100.0),
            window=r.int_("controller.T", 5),
            w0=r.float_("controller.W0", 4.0),
            v=r.float_("controller.V", 1.0),
            p0=r.float_("controller.P0", 10.0),
            policy=policy,
            control_interval=r.float_("controller.interval", 5.0),
            sub_interval=r.float_("controller.sub_interval", 1.0),
            x0=r.float_("controller.x0", None),
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def replace_controller(scenario: Scenario, **changes) -> Scenario:
    return dataclasses.replace(
        scenario, controller=dataclasses.replace(scenario.controller, **changes))
