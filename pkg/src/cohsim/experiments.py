"""End-to-end execution of scenarios and catalog experiments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import engine
from .engine import FAILED, STABLE, UNSTABLE, TimeSeries, build_model, make_solver_config, run
from .errors import CohsimError
from .metrics import damping_metrics
from .scenarios import ExperimentSpec, Scenario, load_scenario

log = logging.getLogger(__name__)


def run_scenario(scenario: Scenario, channels=None) -> TimeSeries:
    """Build, initialize and integrate one scenario."""
    model = build_model(scenario)
    config = make_solver_config(scenario.data, model)
    series = run(model, config, channels=channels)
    series.meta["scenario"] = scenario.name
    series.meta["seed"] = scenario.data.get("seed")
    return series


def first_event_time(scenario: Scenario) -> float:
    events = scenario.data.get("events") or []
    return min((ev["time"] for ev in events), default=0.0)


def series_metrics(series: TimeSeries, event_time: float = 0.0) -> dict:
    """Damping metrics for every recorded channel."""
    out = {}
    for name in series.names():
        m = damping_metrics(series.t, series[name], event_time)
        out[name] = m.as_dict()
    return out


def variant_scenario(spec: ExperimentSpec, label: str) -> Scenario:
    base = load_scenario(spec.system)
    return base.with_overrides(spec.variant_overrides(label))


def run_experiment(spec: ExperimentSpec, out_dir=None,
                   run_cache=None) -> dict:
    """Run every sweep point of an experiment and evaluate its assertions.

    Returns a report dict:
      {"id", "order": [labels], "rows": {label: {"status", "series",
       "metrics", "csv"}}, "assertions": [(name, ok, detail)], "passed"}

    run_cache, when given, maps a scenario fingerprint to a finished
    TimeSeries so experiments sharing runs are not recomputed.
    """
    report = {"id": spec.id, "order": [], "rows": {}}
    for label, _value, _ov in spec.variants:
        scenario = variant_scenario(spec, label)
        key = (spec.system, repr(sorted(spec.variant_overrides(label).items())))
        series = None
        if run_cache is not None:
            series = run_cache.get(key)
        if series is None:
            log.info("%s: running variant %s", spec.id, label)
            try:
                series = run_scenario(scenario)
            except CohsimError as exc:
                log.error("%s %s failed: %s", spec.id, label, exc)
                series = TimeSeries([], {}, status=FAILED, meta={"error": str(exc)})
            if run_cache is not None:
                run_cache[key] = series
        row = {
            "status": series.status,
            "series": series,
            "metrics": series_metrics(series, first_event_time(scenario))
            if len(series.t) else {},
        }
        if out_dir is not None and len(series.t):
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            csv_path = out_dir / f"{spec.id}_{label.replace('=', '')}.csv"
            series.to_csv(csv_path)
            row["csv"] = str(csv_path)
        report["order"].append(label)
        report["rows"][label] = row

    report["assertions"] = []
    for assertion in spec.assertions:
        try:
            ok, detail = assertion.check(report)
        except Exception as exc:       # a broken row must not hide the report
            ok, detail = False, f"assertion raised {exc!r}"
        report["assertions"].append((assertion.name, ok, detail))
    report["passed"] = all(ok for _, ok, _ in report["assertions"])
    report["failed_runs"] = [lab for lab in report["order"]
                             if report["rows"][lab]["status"] == FAILED]
    return report


def format_report(report: dict, machine: bool = False) -> str:
    lines = []
    if machine:
        for label in report["order"]:
            row = report["rows"][label]
            coi = row["metrics"].get("coi.freq", {})
            lines.append("\t".join([
                report["id"], label, row["status"],
                repr(coi.get("peak_to_peak")), repr(coi.get("peak_ratio")),
                repr(coi.get("settling_time"))]))
        for name, ok, detail in report["assertions"]:
            lines.append("\t".join([report["id"], "assert",
                                    "PASS" if ok else "FAIL", name]))
        return "\n".join(lines)
    lines.append(f"experiment {report['id']}")
    header = f"  {'variant':<16} {'status':<9} {'p2p(coi)':>12} {'peak_ratio':>11} {'settling':>9}"
    lines.append(header)
    for label in report["order"]:
        row = report["rows"][label]
        coi = row["metrics"].get("coi.freq", {})
        p2p = coi.get("peak_to_peak")
        pr = coi.get("peak_ratio")
        st = coi.get("settling_time")
        lines.append(
            f"  {label:<16} {row['status']:<9} "
            f"{p2p if p2p is None else f'{p2p:.5g}':>12} "
            f"{pr if pr is None else f'{pr:.4g}':>11} "
            f"{st if st is None else f'{st:.4g}':>9}")
    for name, ok, detail in report["assertions"]:
        lines.append(f"  [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return "\n".join(lines)


def metrics_text(series: TimeSeries, metrics: dict, extra: dict = None) -> str:
    """Flat key=value report for one run."""
    lines = [f"status={series.status}"]
    for k, v in sorted((extra or {}).items()):
        lines.append(f"{k}={v}")
    for k, v in sorted(series.meta.items()):
        lines.append(f"meta.{k}={v}")
    for channel in metrics:
        for mname, mval in metrics[channel].items():
            lines.append(f"{channel}.{mname}={mval}")
    return "\n".join(lines) + "\n"
