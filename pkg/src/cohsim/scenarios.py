"""Scenario files, validation and the built-in experiment catalog.

A scenario is a YAML document with the sections system / buses / branches /
loads / devices / events / measurements / solver / channels (all electrical
quantities per-unit on the declared system MVA base, angles in radians).
Validation normalizes defaults in place and reports offending fields by
path. The catalog maps each study to a base scenario plus per-variant
overrides expressed in the same dotted-path syntax the CLI accepts.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from .errors import ConfigurationError
from .metrics import max_deviation, window_correlation

BUILTIN_SCENARIOS = ("kundur2a", "ieee39")

_SM_KEYS_4 = {"s_n", "order", "h", "d", "ra", "xd", "xq", "xdp", "xqp", "td0p", "tq0p"}
_SM_KEYS_6 = _SM_KEYS_4 | {"xdpp", "xqpp", "td0pp", "tq0pp"}
_AVR_KEYS = {
    "dc1": {"type", "ka", "ta", "ke", "te", "kf", "tf", "vr_max", "vr_min"},
    "ac4": {"type", "ka", "ta", "tb", "tc", "vr_max", "vr_min"},
}
_GOV_KEYS = {"type", "r", "ts", "tc", "t3", "t4", "t5", "p_max", "p_min"}
_PSS_KEYS = {"type", "kw", "tw", "t1", "t2", "t3", "t4", "vs_max", "vs_min"}
_SOLVER_KEYS = {"h", "t_end", "output_step", "newton_tol", "max_newton_iters"}


@dataclass
class Scenario:
    """A validated, normalized scenario."""
    data: dict

    @property
    def name(self) -> str:
        return self.data["system"]["name"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def save(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.data, fh, sort_keys=False)

    def with_overrides(self, overrides: dict) -> "Scenario":
        raw = self.to_dict()
        apply_overrides(raw, overrides)
        return Scenario(validate_scenario(raw))

    def device(self, dev_id: str) -> dict:
        for d in self.data["devices"]:
            if d["id"] == dev_id:
                return d
        raise ConfigurationError(f"unknown device {dev_id!r}")


def load_scenario(source) -> Scenario:
    """Load and validate a scenario from a built-in name or a file path."""
    if isinstance(source, dict):
        return Scenario(validate_scenario(copy.deepcopy(source)))
    name = str(source)
    if name in BUILTIN_SCENARIOS:
        text = resources.files("cohsim").joinpath(f"data/{name}.yaml").read_text()
    else:
        path = Path(name)
        if not path.exists():
            raise ConfigurationError(
                f"unknown scenario {name!r}: not a built-in "
                f"({', '.join(BUILTIN_SCENARIOS)}) and no such file")
        text = path.read_text()
    raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ConfigurationError(f"scenario {name!r} does not parse to a mapping")
    return Scenario(validate_scenario(raw))


# --------------------------------------------------------------------------
# validation


def _fail(path, msg):
    raise ConfigurationError(f"{path}: {msg}")


def _require(d, key, path, kind=None):
    if key not in d or d[key] is None:
        _fail(f"{path}.{key}", "required field missing")
    if kind is not None:
        _check_type(d[key], kind, f"{path}.{key}")
    return d[key]


def _check_type(value, kind, path):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(path, f"expected a number, got {value!r}")
        if not math.isfinite(float(value)):
            _fail(path, "value must be finite")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(path, f"expected an integer, got {value!r}")
        return value
    if not isinstance(value, kind):
        _fail(path, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _check_keys(d, allowed, path):
    unknown = set(d) - allowed
    if unknown:
        _fail(f"{path}.{sorted(unknown)[0]}", "unknown field")


def validate_scenario(raw: dict) -> dict:
    """Validate and normalize a raw scenario mapping in place."""
    _check_keys(raw, {"system", "buses", "branches", "loads", "devices", "events",
                      "measurements", "solver", "channels", "seed"}, "scenario")
    sysd = _require(raw, "system", "scenario", dict)
    _check_keys(sysd, {"name", "base_mva", "f_nom", "description"}, "system")
    _require(sysd, "name", "system", str)
    if _require(sysd, "base_mva", "system", float) <= 0:
        _fail("system.base_mva", "must be positive")
    sysd["base_mva"] = float(sysd["base_mva"])
    sysd["f_nom"] = float(_require(sysd, "f_nom", "system", float))
    sysd.setdefault("description", "")

    buses = _require(raw, "buses", "scenario", list)
    bus_ids = set()
    for i, b in enumerate(buses):
        path = f"buses[{i}]"
        _check_type(b, dict, path)
        _check_keys(b, {"id", "base_kv", "g", "b"}, path)
        bid = _require(b, "id", path, int)
        if bid in bus_ids:
            _fail(f"{path}.id", f"duplicate bus id {bid}")
        bus_ids.add(bid)
        b["base_kv"] = _check_type(_require(b, "base_kv", path), float, f"{path}.base_kv")
        b["g"] = _check_type(b.get("g", 0.0), float, f"{path}.g")
        b["b"] = _check_type(b.get("b", 0.0), float, f"{path}.b")

    branches = _require(raw, "branches", "scenario", list)
    seen_circuits = set()
    for i, br in enumerate(branches):
        path = f"branches[{i}]"
        _check_type(br, dict, path)
        _check_keys(br, {"from", "to", "r", "x", "b", "tap", "circuit"}, path)
        f = _require(br, "from", path, int)
        t = _require(br, "to", path, int)
        for end, bid in (("from", f), ("to", t)):
            if bid not in bus_ids:
                _fail(f"{path}.{end}", f"references unknown bus {bid}")
        br["r"] = _check_type(_require(br, "r", path), float, f"{path}.r")
        br["x"] = _check_type(_require(br, "x", path), float, f"{path}.x")
        if br["r"] == 0.0 and br["x"] == 0.0:
            _fail(f"{path}.x", "branch impedance cannot be zero")
        br["b"] = _check_type(br.get("b", 0.0), float, f"{path}.b")
        br["tap"] = _check_type(br.get("tap", 1.0), float, f"{path}.tap")
        br["circuit"] = _check_type(br.get("circuit", 1), int, f"{path}.circuit")
        key = (min(f, t), max(f, t), br["circuit"])
        if key in seen_circuits:
            _fail(f"{path}.circuit",
                  f"duplicate circuit {br['circuit']} between buses {f} and {t}")
        seen_circuits.add(key)

    loads = raw.setdefault("loads", [])
    _check_type(loads, list, "loads")
    for i, ld in enumerate(loads):
        path = f"loads[{i}]"
        _check_type(ld, dict, path)
        _check_keys(ld, {"bus", "p", "q"}, path)
        if _require(ld, "bus", path, int) not in bus_ids:
            _fail(f"{path}.bus", f"references unknown bus {ld['bus']}")
        ld["p"] = _check_type(_require(ld, "p", path), float, f"{path}.p")
        ld["q"] = _check_type(_require(ld, "q", path), float, f"{path}.q")

    devices = _require(raw, "devices", "scenario", list)
    dev_ids = []
    slack_count = 0
    for i, dv in enumerate(devices):
        path = f"devices[{i}]"
        _check_type(dv, dict, path)
        _check_keys(dv, {"id", "bus", "kind", "slack", "dispatch", "rating", "sm",
                         "avr", "gov", "pss", "coherency", "ibr", "measurement"}, path)
        dev_id = _require(dv, "id", path, str)
        path = f"devices[{dev_id}]"
        if dev_id in dev_ids:
            _fail(f"{path}.id", "duplicate device id")
        dev_ids.append(dev_id)
        if _require(dv, "bus", path, int) not in bus_ids:
            _fail(f"{path}.bus", f"references unknown bus {dv['bus']}")
        kind = _require(dv, "kind", path, str)
        if kind not in ("sm", "hybrid", "ibr"):
            _fail(f"{path}.kind", f"must be one of sm|hybrid|ibr, got {kind!r}")
        dv["slack"] = bool(dv.get("slack", False))
        slack_count += dv["slack"]
        dispatch = dv.setdefault("dispatch", {})
        _check_keys(dispatch, {"p", "q", "v"}, f"{path}.dispatch")
        for k in ("p", "q", "v"):
            if k in dispatch and dispatch[k] is not None:
                dispatch[k] = _check_type(dispatch[k], float, f"{path}.dispatch.{k}")
        if kind in ("sm", "hybrid"):
            sm = _require(dv, "sm", path, dict)
            sm.setdefault("order", 6)
            if sm["order"] not in (4, 6):
                _fail(f"{path}.sm.order", f"must be 4 or 6, got {sm['order']!r}")
            allowed = _SM_KEYS_6 if sm["order"] == 6 else _SM_KEYS_4
            _check_keys(sm, allowed, f"{path}.sm")
            for k in sorted(allowed - {"order", "d", "ra"}):
                sm[k] = _check_type(_require(sm, k, f"{path}.sm"), float, f"{path}.sm.{k}")
            sm["d"] = _check_type(sm.get("d", 0.0), float, f"{path}.sm.d")
            sm["ra"] = _check_type(sm.get("ra", 0.0), float, f"{path}.sm.ra")
            if sm["h"] <= 0:
                _fail(f"{path}.sm.h", "inertia must be positive")
            avr = _require(dv, "avr", path, dict)
            avr_type = _require(avr, "type", f"{path}.avr", str)
            if avr_type not in _AVR_KEYS:
                _fail(f"{path}.avr.type", f"must be one of dc1|ac4, got {avr_type!r}")
            _check_keys(avr, _AVR_KEYS[avr_type], f"{path}.avr")
            if dv.get("gov"):
                dv["gov"].setdefault("type", "tg1")
                _check_keys(dv["gov"], _GOV_KEYS, f"{path}.gov")
            if dv.get("pss"):
                dv["pss"].setdefault("type", "pss2")
                _check_keys(dv["pss"], _PSS_KEYS, f"{path}.pss")
        if kind == "hybrid":
            coh = _require(dv, "coherency", path, dict)
            _check_keys(coh, {"c", "reference", "mode"}, f"{path}.coherency")
            coh["c"] = _check_type(_require(coh, "c", f"{path}.coherency"), float,
                                   f"{path}.coherency.c")
            if not 0.0 <= coh["c"] <= 1.0:
                _fail(f"{path}.coherency.c",
                      f"coherency share must lie in [0, 1], got {coh['c']}")
            coh.setdefault("mode", "complex")
            if coh["mode"] not in ("complex", "conventional"):
                _fail(f"{path}.coherency.mode",
                      f"must be complex|conventional, got {coh['mode']!r}")
        if kind == "ibr":
            if dispatch.get("p") is None or dispatch.get("q") is None:
                _fail(f"{path}.dispatch", "ibr device needs fixed p and q dispatch")
            if dv.get("coherency"):
                _check_keys(dv["coherency"], {"c", "reference", "mode"},
                            f"{path}.coherency")
                dv["coherency"].setdefault("c", 1.0)
                dv["coherency"].setdefault("mode", "complex")
        if dv.get("coherency", {}).get("reference") == dev_id:
            _fail(f"{path}.coherency.reference",
                  "a device cannot use itself as coherency reference")
        ibr = dv.setdefault("ibr", {})
        _check_keys(ibr, {"tau_idq", "pll"}, f"{path}.ibr")
        ibr.setdefault("tau_idq", 0.01)
        pll = ibr.setdefault("pll", {})
        _check_keys(pll, {"kp", "ki"}, f"{path}.ibr.pll")
        pll.setdefault("kp", 0.1)
        pll.setdefault("ki", 0.05)
        meas = dv.setdefault("measurement", {})
        _check_keys(meas, {"delay", "noise"}, f"{path}.measurement")
        meas["delay"] = _check_type(meas.get("delay", 0.0), float, f"{path}.measurement.delay")
        if meas["delay"] < 0:
            _fail(f"{path}.measurement.delay", "delay cannot be negative")
        noise = meas.setdefault("noise", {})
        _check_keys(noise, {"sigma", "alpha", "w"}, f"{path}.measurement.noise")
        noise.setdefault("sigma", 0.01)
        noise.setdefault("alpha", 10.0)
        noise["w"] = _check_type(noise.get("w", 0.0), float, f"{path}.measurement.noise.w")

    if slack_count != 1:
        _fail("devices", f"exactly one slack device required, found {slack_count}")
    for i, dv in enumerate(devices):
        ref = (dv.get("coherency") or {}).get("reference")
        if ref is not None and ref not in dev_ids:
            _fail(f"devices[{dv['id']}].coherency.reference",
                  f"references unknown device {ref!r}")

    events = raw.setdefault("events", [])
    _check_type(events, list, "events")
    active_faults = set()
    for i, ev in enumerate(sorted(events, key=lambda e: e.get("time", 0.0))):
        path = f"events[{i}]"
        _check_type(ev, dict, path)
        _check_keys(ev, {"time", "kind", "bus", "from", "to", "circuit", "y_fault"}, path)
        ev["time"] = _check_type(_require(ev, "time", path), float, f"{path}.time")
        if ev["time"] < 0:
            _fail(f"{path}.time", "event time cannot be negative")
        kind = _require(ev, "kind", path, str)
        if kind == "branch_trip":
            f, t = _require(ev, "from", path, int), _require(ev, "to", path, int)
            ev.setdefault("circuit", 1)
            key = (min(f, t), max(f, t), ev["circuit"])
            if key not in seen_circuits:
                _fail(path, f"no branch {f}-{t} circuit {ev['circuit']} to trip")
        elif kind == "fault_apply":
            if _require(ev, "bus", path, int) not in bus_ids:
                _fail(f"{path}.bus", f"references unknown bus {ev['bus']}")
            active_faults.add(ev["bus"])
        elif kind == "fault_clear":
            if _require(ev, "bus", path, int) not in active_faults:
                _fail(path, f"fault_clear at bus {ev.get('bus')} without a prior fault_apply")
            active_faults.discard(ev["bus"])
        else:
            _fail(f"{path}.kind", f"unknown event kind {kind!r}")

    measurements = raw.setdefault("measurements", [])
    _check_type(measurements, list, "measurements")
    seen_meas = set()
    for i, m in enumerate(measurements):
        path = f"measurements[{i}]"
        _check_type(m, dict, path)
        _check_keys(m, {"id", "device", "part", "tau_f"}, path)
        mid = _require(m, "id", path, str)
        if mid in seen_meas:
            _fail(f"{path}.id", f"duplicate measurement id {mid!r}")
        seen_meas.add(mid)
        if _require(m, "device", path, str) not in dev_ids:
            _fail(f"{path}.device", f"references unknown device {m['device']!r}")
        m.setdefault("part", "total")
        if m["part"] not in ("total", "sm", "ibr"):
            _fail(f"{path}.part", f"must be total|sm|ibr, got {m['part']!r}")
        m["tau_f"] = _check_type(m.get("tau_f", 0.02), float, f"{path}.tau_f")
        if m["tau_f"] <= 0:
            _fail(f"{path}.tau_f", "filter time constant must be positive")

    solver = raw.setdefault("solver", {})
    _check_type(solver, dict, "solver")
    _check_keys(solver, _SOLVER_KEYS, "solver")
    for k in list(solver):
        if k == "max_newton_iters":
            solver[k] = _check_type(solver[k], int, f"solver.{k}")
        else:
            solver[k] = _check_type(solver[k], float, f"solver.{k}")

    channels = raw.setdefault("channels", None)
    if channels is not None:
        _check_type(channels, list, "channels")
        for i, c in enumerate(channels):
            _check_type(c, str, f"channels[{i}]")
    raw["seed"] = _check_type(raw.get("seed", 12345), int, "seed")
    return raw


# --------------------------------------------------------------------------
# dotted-path overrides


def apply_overrides(raw: dict, overrides: dict):
    """Apply {dotted.path: value} overrides to a raw scenario mapping.

    List sections are addressed by element id (devices, measurements) or by
    integer index (events, buses, branches, loads).
    """
    for path, value in overrides.items():
        _set_path(raw, path.split("."), value, path)


def _set_path(node, tokens, value, full_path):
    head, rest = tokens[0], tokens[1:]
    if isinstance(node, list):
        element = None
        if head.isdigit() and int(head) < len(node):
            element = node[int(head)]
        else:
            for item in node:
                if isinstance(item, dict) and item.get("id") == head:
                    element = item
                    break
        if element is None:
            raise ConfigurationError(
                f"override {full_path!r}: no list element {head!r}")
        if not rest:
            raise ConfigurationError(
                f"override {full_path!r}: cannot replace a whole list element")
        _set_path(element, rest, value, full_path)
        return
    if not isinstance(node, dict):
        raise ConfigurationError(f"override {full_path!r}: {head!r} is not addressable")
    if not rest:
        node[head] = value
        return
    if head not in node or node[head] is None:
        node[head] = {}
    _set_path(node[head], rest, value, full_path)


# --------------------------------------------------------------------------
# experiment catalog


@dataclass
class ExperimentAssertion:
    name: str
    check: Callable[[dict], tuple[bool, str]]


@dataclass
class ExperimentSpec:
    id: str
    description: str
    system: str                                  # base scenario name
    axis: str                                    # sweep parameter name
    variants: list                               # [(label, value, overrides)]
    base_overrides: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)

    def variant_labels(self):
        return [label for label, _, _ in self.variants]

    def variant_overrides(self, label):
        for lab, _, ov in self.variants:
            if lab == label:
                merged = dict(self.base_overrides)
                merged.update(ov)
                return merged
        raise ConfigurationError(f"{self.id}: unknown variant {label!r}")

    def label_for_value(self, value) -> str:
        for lab, val, _ in self.variants:
            if str(val) == str(value) or lab == value:
                return lab
        raise ConfigurationError(
            f"{self.id}: {self.axis}={value!r} is not a catalog sweep point")


_TRIP_7_8 = [{"time": 1.0, "kind": "branch_trip", "from": 7, "to": 8, "circuit": 2}]
_FAULT_BUS1 = [{"time": 1.0, "kind": "fault_apply", "bus": 1},
               {"time": 1.12, "kind": "fault_clear", "bus": 1}]
_KUNDUR_IBR_DEVICES = ("g1", "g2", "g4")


def _kundur_c_overrides(c):
    return {f"devices.{d}.coherency.c": c for d in _KUNDUR_IBR_DEVICES}


def _metric(report, label, channel, metric):
    row = report["rows"][label]
    value = row["metrics"].get(channel, {}).get(metric)
    return value, row["status"]


def _check_monotone(report, labels, channel, metric, decreasing=True):
    values = []
    for lab in labels:
        v, status = _metric(report, lab, channel, metric)
        if v is None:
            return False, f"{lab}: {metric}({channel}) undefined (status {status})"
        values.append(v)
    pairs = zip(values, values[1:])
    ok = all((a > b) if decreasing else (a < b) for a, b in pairs)
    arrow = ">" if decreasing else "<"
    detail = f" {arrow} ".join(f"{v:.4g}" for v in values)
    return ok, f"{metric}({channel}): {detail}"


def _cs_amplitude(report):
    ok, detail = _check_monotone(report, [lab for lab, _, _ in _cs_variants()],
                                 "coi.freq", "peak_to_peak", decreasing=True)
    return ok, detail


def _cs_halving(report):
    v1, _ = _metric(report, "C=1", "coi.freq", "peak_to_peak")
    v0, _ = _metric(report, "C=0", "coi.freq", "peak_to_peak")
    if v1 is None or v0 is None or v0 == 0:
        return False, "peak_to_peak undefined"
    return v1 <= 0.5 * v0, f"peak_to_peak C=1 / C=0 = {v1 / v0:.3f} (gate 0.50)"


def _cs_variants():
    return [(f"C={c:g}", c, _kundur_c_overrides(c)) for c in (0.0, 0.25, 0.5, 0.75, 1.0)]


def _delay_ordering(report):
    values = []
    for lab in ("tau_d=0.01", "tau_d=0.1", "tau_d=1"):
        v, status = _metric(report, lab, "coi.freq", "peak_ratio")
        if v is None:
            v = np.inf if status == "UNSTABLE" else None
        if v is None:
            return False, f"{lab}: peak_ratio undefined (status {status})"
        values.append(v)
    ok = values[0] < values[1] < values[2]
    return ok, "peak_ratio(coi.freq): " + " < ".join(f"{v:.4g}" for v in values)

def _delay_long_unstable(report):
    v, status = _metric(report, "tau_d=1", "coi.freq", "peak_ratio")
    if status == "UNSTABLE":
        return True, "tau_d=1 s flagged UNSTABLE"
    if v is None:
        return False, f"peak_ratio undefined with status {status}"
    return v >= 0.9, f"peak_ratio {v:.3f} (gate >= 0.9 when not UNSTABLE)"


def _noise_monotone(report):
    values = []
    for lab in ("W=1", "W=10", "W=50"):
        series = report["rows"][lab]["series"]
        values.append(max_deviation(series.t, series["bus1.vmag"]))
    ok = values[0] < values[1] < values[2]
    return ok, "max |dV(bus1)|: " + " < ".join(f"{v:.4g}" for v in values)


def _noise_band(report):
    series = report["rows"]["W=50"]["series"]
    dv = max_deviation(series.t, series["bus1.vmag"])
    return 0.025 <= dv <= 0.10, f"max |dV(bus1)| at W=50 = {dv:.4f} pu (band [0.025, 0.10])"


def _mode_ordering(report):
    vals = {}
    for lab in ("complex", "conventional", "none"):
        v, status = _metric(report, lab, "coi.freq", "peak_ratio")
        if v is None:
            return False, f"{lab}: peak_ratio undefined (status {status})"
        vals[lab] = v
    ok = vals["complex"] <= vals["conventional"] < vals["none"]
    return ok, (f"peak_ratio: complex {vals['complex']:.3f} <= "
                f"conventional {vals['conventional']:.3f} < none {vals['none']:.3f}")


def _fault39_settling(report):
    v1, _ = _metric(report, "C71=1", "coi.freq", "settling_time")
    v0, _ = _metric(report, "C71=0", "coi.freq", "settling_time")
    if v1 is None or v0 is None:
        return False, "settling_time undefined"
    return v1 < v0, f"settling_time(coi.freq): C71=1 {v1:.2f} s < C71=0 {v0:.2f} s"


def _fault39_damping(report):
    v1, _ = _metric(report, "C71=1", "coi.freq", "peak_ratio")
    v0, _ = _metric(report, "C71=0", "coi.freq", "peak_ratio")
    if v1 is None or v0 is None:
        return False, "peak_ratio undefined"
    return v1 < v0, f"peak_ratio(coi.freq): C71=1 {v1:.3f} < C71=0 {v0:.3f}"


def _cluster_correlations(report):
    out = {}
    for lab in ("C71=0", "C71=1"):
        series = report["rows"][lab]["series"]
        out[lab] = window_correlation(series.t, series["cf_g6.omega"],
                                      series["cf_g1.omega"], 3.0, 11.0)
    return out


def _cluster_antiphase(report):
    corr = _cluster_correlations(report)
    return corr["C71=0"] < 0, f"corr(omega_i SM6, SM1) at C71=0 = {corr['C71=0']:.3f}"


def _cluster_coherent(report):
    corr = _cluster_correlations(report)
    ok = corr["C71=1"] > corr["C71=0"]
    return ok, (f"corr moves {corr['C71=0']:.3f} -> {corr['C71=1']:.3f} "
                "with the coherency control")


def catalog() -> list[ExperimentSpec]:
    """The built-in experiments, one per study."""
    kundur_cf = [
        {"id": "cf_g1", "device": "g1", "part": "total"},
        {"id": "cf_g2", "device": "g2", "part": "total"},
        {"id": "cf_g4", "device": "g4", "part": "total"},
        {"id": "cf_g3", "device": "g3", "part": "total"},
    ]
    cluster_cf = [
        {"id": "cf_g1", "device": "g1", "part": "total"},
        {"id": "cf_g6", "device": "g6", "part": "total"},
        {"id": "cf_g7", "device": "g7", "part": "total"},
        {"id": "cf_g10", "device": "g10", "part": "total"},
    ]
    return [
        ExperimentSpec(
            id="EXP-CSWEEP",
            description="Two-area: line 7-8 circuit trip while the coherency "
                        "share C of the converters at buses 1, 2 and 4 "
                        "(referencing the machine at bus 3) sweeps 0..1",
            system="kundur2a",
            axis="C",
            variants=_cs_variants(),
            base_overrides={"events": _TRIP_7_8, "measurements": kundur_cf},
            assertions=[
                ExperimentAssertion(
                    "coi peak-to-peak strictly decreasing in C", _cs_amplitude),
                ExperimentAssertion(
                    "coi peak-to-peak at C=1 at most half of C=0", _cs_halving),
            ]),
        ExperimentSpec(
            id="EXP-DELAY",
            description="Two-area at C=0.25: first-order communication delays "
                        "of 0.01/0.1/1 s in the measured reference current",
            system="kundur2a",
            axis="tau_d",
            variants=[(f"tau_d={tau:g}", tau,
                       {**_kundur_c_overrides(0.25),
                        **{f"devices.{d}.measurement.delay": tau
                           for d in _KUNDUR_IBR_DEVICES}})
                      for tau in (0.01, 0.1, 1.0)],
            base_overrides={"events": _TRIP_7_8, "measurements": kundur_cf},
            assertions=[
                ExperimentAssertion(
                    "damping degrades with increasing delay", _delay_ordering),
                ExperimentAssertion(
                    "1 s delay destabilizes or nearly undamps the system",
                    _delay_long_unstable),
            ]),
        ExperimentSpec(
            id="EXP-NOISE",
            description="Two-area at C=0.25, no contingency: OU measurement "
                        "noise scaled by W = 1/10/50 on the reference current",
            system="kundur2a",
            axis="W",
            variants=[(f"W={w:g}", w,
                       {**_kundur_c_overrides(0.25),
                        **{f"devices.{d}.measurement.noise.w": float(w)
                           for d in _KUNDUR_IBR_DEVICES}})
                      for w in (1, 10, 50)],
            base_overrides={"events": [], "measurements": kundur_cf},
            assertions=[
                ExperimentAssertion(
                    "bus 1 voltage excursion grows with W", _noise_monotone),
                ExperimentAssertion(
                    "bus 1 voltage excursion at W=50 within the expected band",
                    _noise_band),
            ]),
        ExperimentSpec(
            id="EXP-MODE",
            description="Two-area, line 7-8 circuit trip: no control vs "
                        "conventional (phase-only) vs complex coherency at C=0.25",
            system="kundur2a",
            axis="mode",
            variants=[
                ("none", "none", _kundur_c_overrides(0.0)),
                ("conventional", "conventional",
                 {**_kundur_c_overrides(0.25),
                  **{f"devices.{d}.coherency.mode": "conventional"
                     for d in _KUNDUR_IBR_DEVICES}}),
                ("complex", "complex",
                 {**_kundur_c_overrides(0.25),
                  **{f"devices.{d}.coherency.mode": "complex"
                     for d in _KUNDUR_IBR_DEVICES}}),
            ],
            base_overrides={"events": _TRIP_7_8, "measurements": kundur_cf},
            assertions=[
                ExperimentAssertion(
                    "complex coherency damps at least as well as conventional, "
                    "both better than none", _mode_ordering),
            ]),
        ExperimentSpec(
            id="EXP-39FAULT",
            description="39-bus: three-phase fault at bus 1 cleared after "
                        "120 ms, with and without the converter at bus 36 "
                        "replacing machine 7 to imitate machine 1",
            system="ieee39",
            axis="C71",
            variants=[("C71=0", 0, {"devices.g7.coherency.c": 0.0}),
                      ("C71=1", 1, {"devices.g7.coherency.c": 1.0})],
            base_overrides={"events": _FAULT_BUS1, "measurements": cluster_cf,
                            "solver.t_end": 15.0},
            assertions=[
                ExperimentAssertion(
                    "forced coherency shortens the COI settling time",
                    _fault39_settling),
                ExperimentAssertion(
                    "forced coherency improves the COI damping", _fault39_damping),
            ]),
        ExperimentSpec(
            id="EXP-39CLUSTER",
            description="39-bus, same fault runs: current complex-frequency "
                        "clustering of machines 1, 6, 7 and 10",
            system="ieee39",
            axis="C71",
            variants=[("C71=0", 0, {"devices.g7.coherency.c": 0.0}),
                      ("C71=1", 1, {"devices.g7.coherency.c": 1.0})],
            base_overrides={"events": _FAULT_BUS1, "measurements": cluster_cf,
                            "solver.t_end": 15.0},
            assertions=[
                ExperimentAssertion(
                    "machine 6 swings against machine 1 without the control",
                    _cluster_antiphase),
                ExperimentAssertion(
                    "forced coherency removes the anti-phase relation",
                    _cluster_coherent),
            ]),
    ]


def get_experiment(exp_id: str) -> ExperimentSpec:
    for spec in catalog():
        if spec.id == exp_id:
            return spec
    raise ConfigurationError(f"unknown experiment {exp_id!r}")
