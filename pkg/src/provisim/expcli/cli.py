"""provisim command line.

    provisim run SCENARIO [--set k=v ...] [--out DIR] [--seed N]
    provisim compare SCENARIO [--filters kalman,hinf,mcc] [--topologies siso,mimo] ...
    provisim sweep SCENARIO --param {c,theta,sigma,T} --values 0.7,0.8,0.9 ...
    provisim replay TRACE [--scenario FILE] [--set k=v ...] [--out DIR]

Exit codes: 0 success, 1 runtime failure, 2 usage or parse failure.
Set PROVISIM_THREADS to run sweep/compare points in parallel; every
output file is written atomically and input files are never modified.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from ..provisioner import AllocationPolicy, ControlLoop
from ..simcluster import (
    RunMetrics,
    StepRecord,
    atomic_write_text,
    read_trace,
    run_scenario,
    trace_to_csv,
    write_trace,
)
from . import svgplot
from .scenario import Scenario, ScenarioError, load_scenario, replace_controller

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

SWEEP_PARAMS = ("c", "theta", "sigma", "T")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except ScenarioError as exc:
        print(f"provisim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"provisim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="provisim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario key")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override workload.seed")

    p_run = sub.add_parser("run", help="run one scenario, write trace/metrics/timeline")
    p_run.add_argument("scenario")
    common(p_run)
    p_run.set_defaults(handler=cmd_run)

    p_cmp = sub.add_parser("compare", help="run several controllers on one workload")
    p_cmp.add_argument("scenario")
    p_cmp.add_argument("--filters", default="kalman,hinf,mcc")
    p_cmp.add_argument("--topologies", default="siso,mimo")
    common(p_cmp)
    p_cmp.set_defaults(handler=cmd_compare)

    p_swp = sub.add_parser("sweep", help="sweep one controller parameter")
    p_swp.add_argument("scenario")
    p_swp.add_argument("--param", required=True)
    p_swp.add_argument("--values", required=True, help="comma-separated values")
    common(p_swp)
    p_swp.set_defaults(handler=cmd_sweep)

    p_rep = sub.add_parser("replay", help="drive a controller over a recorded trace")
    p_rep.add_argument("trace")
    p_rep.add_argument("--scenario", default=None, help="scenario file for the controller settings")
    common(p_rep)
    p_rep.set_defaults(handler=cmd_replay)
    return parser


def _out_dir(args, scenario: Scenario) -> str:
    out = args.out or scenario.out_dir
    os.makedirs(out, exist_ok=True)
    return out


def _metrics_csv(metrics: RunMetrics) -> str:
    n = len(metrics.avg_cpu)
    header = ["CR"] + [f"avg_vm{i + 1}_cpu" for i in range(n)] + ["AmRT", "SLOO"]
    row = ([str(metrics.completed_requests)]
           + [repr(float(c)) for c in metrics.avg_cpu]
           + [repr(metrics.avg_mrt), repr(metrics.slo_obedience)])
    return ",".join(header) + "\n" + ",".join(row) + "\n"


def _timeline_svg(records: list[StepRecord], slo: float) -> str:
    ks = [r.k for r in records]
    panels = []
    n = records[0].usage.shape[0]
    for i in range(n):
        panels.append(svgplot.Panel(
            title=f"component {i + 1}: CPU usage vs allocation",
            x_label="control sample", y_label="CPU (pp)",
            series=[
                ("usage", ks, [r.usage[i] for r in records]),
                ("allocation", ks, [r.allocation[i] for r in records]),
            ],
        ))
    panels.append(svgplot.Panel(
        title="mean response time", x_label="control sample", y_label="mRT (s)",
        series=[("mRT", ks, [r.mrt for r in records])], hline=slo,
    ))
    return svgplot.render(panels)


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario, sets=args.set, seed=args.seed)
    out = _out_dir(args, scenario)
    records, metrics = run_scenario(scenario.workload, scenario.model,
                                    scenario.controller, scenario.steps)
    write_trace(os.path.join(out, "trace.csv"), records)
    atomic_write_text(os.path.join(out, "metrics.csv"), _metrics_csv(metrics))
    atomic_write_text(os.path.join(out, "timeline.svg"),
                      _timeline_svg(records, scenario.model.slo_threshold))
    return EXIT_OK


def _parallel_map(fn, jobs: list):
    workers = int(os.environ.get("PROVISIM_THREADS", "1") or "1")
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario, sets=args.set, seed=args.seed)
    filters = [f.strip() for f in args.filters.split(",") if f.strip()]
    topologies = [t.strip() for t in args.topologies.split(",") if t.strip()]
    if not filters or not topologies:
        raise ScenarioError("need at least one filter and one topology")
    variants = [(f, t) for f in filters for t in topologies]

    def one(variant):
        f, t = variant
        s = replace_controller(scenario, filter=f, topology=t)
        _, metrics = run_scenario(s.workload, s.model, s.controller, s.steps)
        return metrics

    results = _parallel_map(one, variants)
    out = _out_dir(args, scenario)
    n = len(results[0].avg_cpu)
    header = (["controller", "topology", "workload_seed", "CR"]
              + [f"avg_vm{i + 1}_cpu" for i in range(n)] + ["AmRT", "SLOO"])
    lines = [",".join(header)]
    for (f, t), m in zip(variants, results):
        lines.append(",".join([f, t, str(scenario.workload.seed), str(m.completed_requests)]
                              + [repr(float(c)) for c in m.avg_cpu]
                              + [repr(m.avg_mrt), repr(m.slo_obedience)]))
    atomic_write_text(os.path.join(out, "comparison.csv"), "\n".join(lines) + "\n")

    labels = [f"{f}-{t}" for f, t in variants]
    panels = [
        svgplot.Panel(title="average mRT by controller", y_label="AmRT (s)", kind="bar",
                      bars=list(zip(labels, [m.avg_mrt for m in results]))),
        svgplot.Panel(title="SLO obedience by controller", y_label="SLOO", kind="bar",
                      bars=list(zip(labels, [m.slo_obedience for m in results]))),
    ]
    atomic_write_text(os.path.join(out, "comparison.svg"), svgplot.render(panels))
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMS:
        raise ScenarioError(f"unknown sweep parameter {args.param!r}; expected one of {SWEEP_PARAMS}")
    raw_values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not raw_values:
        raise ScenarioError("sweep needs at least one value")
    try:
        values = [float(v) for v in raw_values]
    except ValueError as exc:
        raise ScenarioError(f"bad sweep value: {exc}") from exc
    scenario = load_scenario(args.scenario, sets=args.set, seed=args.seed)

    def one(value):
        if args.param == "c":
            policy = AllocationPolicy.from_ratio(value, a_min=scenario.controller.policy.a_min,
                                                 a_max=scenario.controller.policy.a_max)
            s = replace_controller(scenario, policy=policy)
        elif args.param == "theta":
            s = replace_controller(scenario, theta=value)
        elif args.param == "sigma":
            s = replace_controller(scenario, sigma=value)
        else:
            s = replace_controller(scenario, window=int(value))
        _, metrics = run_scenario(s.workload, s.model, s.controller, s.steps)
        return metrics

    results = _parallel_map(one, values)
    out = _out_dir(args, scenario)
    lines = ["value,AmRT,SLOO,CR"]
    for value, m in zip(values, results):
        lines.append(",".join([repr(value), repr(m.avg_mrt), repr(m.slo_obedience),
                               str(m.completed_requests)]))
    atomic_write_text(os.path.join(out, "sweep.csv"), "\n".join(lines) + "\n")
    panel = svgplot.Panel(title=f"average mRT vs {args.param}", x_label=args.param,
                          y_label="AmRT (s)",
                          series=[("AmRT", values, [m.avg_mrt for m in results])])
    atomic_write_text(os.path.join(out, "sweep.svg"), svgplot.render([panel]))
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        records = read_trace(args.trace)
    except (OSError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc
    if not records:
        raise ScenarioError(f"{args.trace}: trace has no data rows")
    scenario = load_scenario(args.scenario, sets=args.set, seed=args.seed)
    n = records[0].usage.shape[0]
    loop = ControlLoop(scenario.controller, n)

    allocation = [scenario.controller.policy.a_max] * n
    lines = [trace_to_csv(records).splitlines()[0] + ",replay_allocation"]
    body = trace_to_csv(records).splitlines()[1:]
    row_idx = 0
    for record in records:
        for i in range(n):
            lines.append(body[row_idx] + "," + repr(float(allocation[i])))
            row_idx += 1
        decision = loop.control_step(record.observation)
        allocation = list(decision.allocation)

    out = _out_dir(args, scenario)
    atomic_write_text(os.path.join(out, "replay.csv"), "\n".join(lines) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
