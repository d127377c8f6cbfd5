"""Simulation engine: model assembly, implicit-trapezoidal DAE integration
with exact event handling, and time-series recording.

The differential states of all devices are advanced with the implicit
trapezoidal rule solved by a chord Newton iteration; the network algebraic
equations are eliminated exactly inside every residual evaluation through a
real-valued linear solve (machine rotor saliency makes the injection map
affine in V and conj(V), so the algebraic block is linear given the states).
Events snap the integration grid, so discontinuities happen only at step
boundaries.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .converter import CoherencyController, HybridDevice, IbrDevice, Pll, PllParams
from .errors import ConfigurationError, InitializationError, SolveError, StepError
from .machines import (AvrAc4, AvrAc4Params, AvrDc1, AvrDc1Params, GovTg1,
                       GovTg1Params, MachineParams, Pss2, Pss2Params, SmDevice,
                       SynchronousMachine)
from .metrics import coi_frequency
from .network import (Branch, Bus, LoadZ, Network, NetworkEvent,
                      total_injection_balance)
from .powerflow import newton_power_flow
from .signals import CfEstimator, OuNoise

log = logging.getLogger(__name__)

STABLE, UNSTABLE, FAILED = "STABLE", "UNSTABLE", "FAILED"
V_MAX_GUARD = 2.0           # pu, instability detector
DOMEGA_MAX_GUARD = 0.2      # pu
TIME_SNAP = 1e-9
FAST_BLOCK_LIMIT = 0.01     # s; any faster first-order block shrinks the default step


@dataclass
class SolverConfig:
    h: float = 0.005
    t_end: float = 20.0
    output_step: float = 0.01
    newton_tol: float = 1e-10
    max_newton_iters: int = 20

    def __post_init__(self):
        if self.h <= 0:
            raise ConfigurationError("integration step h must be positive")
        if self.output_step < self.h - TIME_SNAP:
            raise ConfigurationError("output step must be >= integration step")


@dataclass
class SimulationState:
    t: float
    x: np.ndarray       # differential states
    y: np.ndarray       # algebraic states (complex bus voltages)


class TimeSeries:
    """Uniformly sampled named channels plus run status metadata."""

    UNITS = {
        "freq": "pu", "speed": "pu", "vmag": "pu", "vang": "rad", "p": "pu",
        "q": "pu", "rho": "1/s", "omega": "rad/s", "i_re": "pu", "i_im": "pu",
        "delta": "rad", "pm": "pu", "efd": "pu", "balance": "pu", "imag": "pu",
        "iang": "rad",
    }

    def __init__(self, t, channels, status=STABLE, meta=None):
        self.t = np.asarray(t, dtype=float)
        self.channels = {k: np.asarray(v, dtype=float) for k, v in channels.items()}
        self.status = status
        self.meta = dict(meta or {})

    def __getitem__(self, name):
        return self.channels[name]

    def __contains__(self, name):
        return name in self.channels

    def names(self):
        return list(self.channels)

    def to_csv(self, path):
        units = ["s"] + [self.UNITS.get(name.rsplit(".", 1)[-1], "pu")
                         for name in self.channels]
        with open(path, "w") as fh:
            fh.write("# units: " + ",".join(units) + "\n")
            fh.write(",".join(["t_s"] + list(self.channels)) + "\n")
            cols = [self.t] + list(self.channels.values())
            for row in zip(*cols):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


class StepContext:
    """Per-evaluation view the devices pull their remote measurements from."""

    __slots__ = ("currents", "noise_values")

    def __init__(self, currents, noise_values):
        self.currents = currents
        self.noise_values = noise_values

    def raw_current(self, device_id: str) -> complex:
        return self.currents[device_id]

    def noise(self, device_id: str) -> complex:
        return self.noise_values.get(device_id, 0j)


class PowerSystemModel:
    """Network plus devices, estimators and noise processes for one run."""

    def __init__(self, network: Network, devices, base_mva: float, f_nom: float):
        self.network = network
        self.devices = list(devices)
        self.device_by_id = {dev.id: dev for dev in self.devices}
        if len(self.device_by_id) != len(self.devices):
            raise ConfigurationError("duplicate device ids")
        self.base_mva = base_mva
        self.f_nom = f_nom
        self.slices = {}
        offset = 0
        for dev in self.devices:
            self.slices[dev.id] = slice(offset, offset + dev.n_states)
            offset += dev.n_states
        self.n_states = offset
        self._names = []
        lo = np.full(offset, -np.inf)
        hi = np.full(offset, np.inf)
        for dev in self.devices:
            self._names.extend(dev.state_names())
            for i, (a, b) in enumerate(dev.bounds(), start=self.slices[dev.id].start):
                lo[i] = -np.inf if a is None else a
                hi[i] = np.inf if b is None else b
        self.bounds_lo, self.bounds_hi = lo, hi
        self.noise_values: dict[str, complex] = {}
        self.noise_processes: dict[str, tuple[OuNoise, OuNoise]] = {}
        # estimators: list of (measurement id, device id, part, CfEstimator)
        self.estimators: list[tuple[str, str, str, CfEstimator]] = []
        self.events: list[NetworkEvent] = []
        self.x0 = None
        self.default_channels: list[str] = []
        self.coi_fallback = False
        self._bus_of = {dev.id: network.bus_index(dev.bus) for dev in self.devices}
        self._refresh_topology()

    # --- algebraic network solve -----------------------------------------

    def _refresh_topology(self):
        """Rebuild the cached real-block network matrix after a topology change."""
        a = self.network.ybus.toarray()
        for dev in self.devices:
            k = self._bus_of[dev.id]
            a[k, k] += self._device_y1(dev)
        n = self.network.n_bus
        m0 = np.zeros((2 * n, 2 * n))
        m0[:n, :n] = a.real
        m0[:n, n:] = -a.imag
        m0[n:, :n] = a.imag
        m0[n:, n:] = a.real
        self._m0 = m0

    @staticmethod
    def _device_y1(dev) -> complex:
        if isinstance(dev, SmDevice):
            return dev.machine._m_a
        if isinstance(dev, HybridDevice) and dev.sm is not None:
            return dev.sm.machine._m_a
        return 0j

    def solve_algebraic(self, x) -> np.ndarray:
        n = self.network.n_bus
        m = self._m0.copy()
        rhs = np.zeros(2 * n)
        for dev in self.devices:
            xd = x[self.slices[dev.id]]
            _, y2, i_src = dev.network_contrib(xd)
            k = self._bus_of[dev.id]
            rhs[k] += i_src.real
            rhs[n + k] += i_src.imag
            if y2 != 0j:
                m[k, k] += y2.real
                m[k, n + k] += y2.imag
                m[n + k, k] += y2.imag
                m[n + k, n + k] -= y2.real
        try:
            sol = scipy.linalg.solve(m, rhs)
        except scipy.linalg.LinAlgError as exc:
            raise SolveError(f"network algebraic solve failed: {exc}") from exc
        if not np.all(np.isfinite(sol)):
            raise SolveError("network algebraic solve returned non-finite voltages")
        return sol[:n] + 1j * sol[n:]

    def device_currents(self, x, v) -> dict[str, complex]:
        return {dev.id: dev.current(x[self.slices[dev.id]], v[self._bus_of[dev.id]])
                for dev in self.devices}

    def network_state(self, x):
        v = self.solve_algebraic(x)
        return v, self.device_currents(x, v)

    def part_current(self, x, v, dev_id: str, part: str) -> complex:
        dev = self.device_by_id[dev_id]
        return dev.part_current(x[self.slices[dev_id]], v[self._bus_of[dev_id]], part)

    # --- dynamics ---------------------------------------------------------

    def f(self, t, x) -> np.ndarray:
        v = self.solve_algebraic(x)
        currents = self.device_currents(x, v)
        ctx = StepContext(currents, self.noise_values)
        dx = np.empty(self.n_states)
        for dev in self.devices:
            sl = self.slices[dev.id]
            dx[sl] = dev.derivatives(x[sl], v[self._bus_of[dev.id]], ctx)
        return dx

    def state_names(self):
        return list(self._names)

    def apply_event(self, event: NetworkEvent):
        self.network.apply_event(event)
        self._refresh_topology()

    # --- outputs ----------------------------------------------------------

    def coi(self, x, v) -> float:
        speeds, weights = [], []
        for dev in self.devices:
            if dev.has_machine and dev.inertia_weight() > 0:
                speeds.append(dev.speed(x[self.slices[dev.id]]))
                weights.append(dev.inertia_weight())
        if speeds:
            return coi_frequency(speeds, weights)
        # no machine left: fall back to the first converter PLL frequency
        self.coi_fallback = True
        for dev in self.devices:
            ibr = dev.ibr if isinstance(dev, HybridDevice) else (
                dev if isinstance(dev, IbrDevice) else None)
            if ibr is not None:
                sl = self.slices[dev.id]
                x_ibr = x[sl][dev._sl_ibr] if isinstance(dev, HybridDevice) else x[sl]
                return ibr.pll.frequency(x_ibr[ibr._sl_pll], v[self._bus_of[dev.id]])
        raise SolveError("no machine and no converter to define a system frequency")

    def power_balance(self, x, v) -> float:
        s_total = 0j
        for dev in self.devices:
            s_total += dev.power(x[self.slices[dev.id]], v[self._bus_of[dev.id]])
        return total_injection_balance(self.network, v, s_total)


# --------------------------------------------------------------------------
# trapezoidal stepping


class ChordNewton:
    """Finite-difference Jacobian of f, reused across steps until invalidated."""

    def __init__(self, model, eps: float = 1e-7):
        self.model = model
        self.eps = eps
        self.jac = None

    def invalidate(self):
        self.jac = None

    def build(self, t, x, f0=None):
        n = len(x)
        f0 = self.model.f(t, x) if f0 is None else f0
        jac = np.empty((n, n))
        for j in range(n):
            dx = self.eps * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += dx
            jac[:, j] = (self.model.f(t, xp) - f0) / dx
        self.jac = jac

    def newton_matrix_lu(self, h):
        a = np.eye(len(self.jac)) - 0.5 * h * self.jac
        return scipy.linalg.lu_factor(a)


def step_trapezoidal(model, t, x, h, f_old, newton: ChordNewton,
                     tol: float = 1e-10, max_iter: int = 20) -> np.ndarray:
    """One implicit trapezoidal step from t to t+h.

    Raises StepError with the worst-residual equation name when the chord
    Newton iteration does not converge even after a Jacobian rebuild.
    """
    if np.max(np.abs(f_old)) * h < tol:
        return x.copy()                     # equilibrium: hold the state bit-exact
    xi = x + h * f_old                      # explicit predictor
    rebuilt = newton.jac is None
    if newton.jac is None:
        newton.build(t, x, f0=f_old)
    lu = newton.newton_matrix_lu(h)
    r = np.zeros_like(x)
    rn = np.inf
    for it in range(max_iter):
        f_new = model.f(t + h, xi)
        r = xi - x - 0.5 * h * (f_old + f_new)
        rn = np.max(np.abs(r))
        if not np.isfinite(rn):
            raise StepError(f"non-finite residual at t={t + h:.6f} s", time=t + h)
        if rn < tol:
            return xi
        if it == max_iter // 2 and not rebuilt:
            newton.build(t + h, xi)
            lu = newton.newton_matrix_lu(h)
            rebuilt = True
        xi = xi + scipy.linalg.lu_solve(lu, -r)
    worst = int(np.argmax(np.abs(r)))
    names = model.state_names()
    worst_name = names[worst] if worst < len(names) else f"state[{worst}]"
    raise StepError(
        f"Newton did not converge at t={t + h:.6f} s "
        f"(worst residual {rn:.3e} on {worst_name})",
        time=t + h, worst_equation=worst_name)


# --------------------------------------------------------------------------
# channel extraction


class Recorder:
    def __init__(self, model: PowerSystemModel, channel_names):
        self.model = model
        self.names = list(channel_names)
        if len(set(self.names)) != len(self.names):
            raise ConfigurationError("duplicate channel names requested")
        self.estimators = {mid: (dev_id, part, est)
                           for mid, dev_id, part, est in model.estimators}
        self._fns = [self._resolve(name) for name in self.names]
        self.rows = []
        self.times = []

    def _resolve(self, name):
        model = self.model
        if name == "coi.freq":
            return lambda t, x, v, cur: model.coi(x, v)
        if name == "sys.balance":
            return lambda t, x, v, cur: model.power_balance(x, v)
        head, _, quantity = name.rpartition(".")
        if head in self.estimators:
            dev_id, part, est = self.estimators[head]
            if quantity == "rho":
                return lambda t, x, v, cur, est=est: est.estimate.rho
            if quantity == "omega":
                return lambda t, x, v, cur, est=est: est.estimate.omega
            if quantity in ("i_re", "i_im"):
                attr = "real" if quantity == "i_re" else "imag"
                return lambda t, x, v, cur, d=dev_id, p=part, a=attr: \
                    getattr(model.part_current(x, v, d, p), a)
            raise ConfigurationError(f"unknown estimator quantity in channel {name!r}")
        if head.startswith("bus"):
            try:
                bus_id = int(head[3:])
            except ValueError:
                raise ConfigurationError(f"bad bus channel name {name!r}") from None
            k = model.network.bus_index(bus_id)
            if quantity == "vmag":
                return lambda t, x, v, cur, k=k: abs(v[k])
            if quantity == "vang":
                return lambda t, x, v, cur, k=k: math.atan2(v[k].imag, v[k].real)
            raise ConfigurationError(f"unknown bus quantity in channel {name!r}")
        if head in model.device_by_id:
            dev = model.device_by_id[head]
            sl = model.slices[dev.id]
            k = model._bus_of[dev.id]
            if quantity == "p":
                return lambda t, x, v, cur, dev=dev, sl=sl, k=k: dev.power(x[sl], v[k]).real
            if quantity == "q":
                return lambda t, x, v, cur, dev=dev, sl=sl, k=k: dev.power(x[sl], v[k]).imag
            if quantity == "imag":
                return lambda t, x, v, cur, dev=dev: abs(cur[dev.id])
            if quantity == "iang":
                return lambda t, x, v, cur, dev=dev: math.atan2(cur[dev.id].imag,
                                                                cur[dev.id].real)
            if quantity == "speed" and dev.has_machine:
                return lambda t, x, v, cur, dev=dev, sl=sl: dev.speed(x[sl])
            if quantity == "delta" and dev.has_machine:
                return lambda t, x, v, cur, sl=sl: x[sl.start]
            if quantity == "pm" and dev.has_machine:
                return lambda t, x, v, cur, dev=dev, sl=sl: dev.mech_power(x[sl])
            if quantity == "efd" and dev.has_machine:
                return lambda t, x, v, cur, dev=dev, sl=sl: dev.field_voltage(x[sl])
            raise ConfigurationError(f"unknown device quantity in channel {name!r}")
        raise ConfigurationError(f"cannot resolve channel {name!r}")

    def record(self, t, x, v, currents):
        self.times.append(t)
        self.rows.append([fn(t, x, v, currents) for fn in self._fns])

    def to_series(self, status, meta) -> TimeSeries:
        data = (np.asarray(self.rows, dtype=float)
                if self.rows else np.zeros((0, len(self.names))))
        channels = {name: data[:, i] for i, name in enumerate(self.names)}
        return TimeSeries(self.times, channels, status=status, meta=meta)


def run(model: PowerSystemModel, config: SolverConfig, channels=None) -> TimeSeries:
    """Integrate the model from its initialized state to t_end.

    Events are applied exactly at their times; the run aborts flagged
    UNSTABLE when the instability detector trips, and FAILED when a step is
    rejected. The partial series is returned in both cases.
    """
    if model.x0 is None:
        raise InitializationError("model is not initialized")
    x = model.x0.copy()
    t = 0.0
    events = sorted(model.events, key=lambda e: e.time)
    next_event = 0
    newton = ChordNewton(model)
    recorder = Recorder(model, channels or model.default_channels)

    # events scheduled at t=0 apply before the first sample
    while next_event < len(events) and events[next_event].time <= TIME_SNAP:
        model.apply_event(events[next_event])
        newton.invalidate()
        next_event += 1

    v, currents = model.network_state(x)
    for _, dev_id, part, est in model.estimators:
        est.reset(model.part_current(x, v, dev_id, part))
    recorder.record(0.0, x, v, currents)

    status = STABLE
    meta = {"h": config.h, "t_end": config.t_end}
    out_k = 1
    while t < config.t_end - TIME_SNAP:
        while next_event < len(events) and events[next_event].time <= t + TIME_SNAP:
            model.apply_event(events[next_event])
            newton.invalidate()
            next_event += 1

        h = config.h
        if next_event < len(events):
            h = min(h, events[next_event].time - t)
        h = min(h, out_k * config.output_step - t, config.t_end - t)
        h = max(h, TIME_SNAP)

        for dev_id, (noise_re, noise_im) in model.noise_processes.items():
            model.noise_values[dev_id] = complex(noise_re.step(h), noise_im.step(h))

        f_old = model.f(t, x)
        try:
            x_new = step_trapezoidal(model, t, x, h, f_old, newton,
                                     tol=config.newton_tol,
                                     max_iter=config.max_newton_iters)
        except (StepError, SolveError) as exc:
            log.error("step rejected: %s", exc)
            status = FAILED
            meta["error"] = str(exc)
            break
        np.clip(x_new, model.bounds_lo, model.bounds_hi, out=x_new)
        x = x_new
        t = t + h

        v, currents = model.network_state(x)
        for _, dev_id, part, est in model.estimators:
            est.step(model.part_current(x, v, dev_id, part), h)

        if abs(t - out_k * config.output_step) < TIME_SNAP:
            recorder.record(out_k * config.output_step, x, v, currents)
            out_k += 1

        vmax = float(np.max(np.abs(v)))
        domega = max((abs(dev.speed(x[model.slices[dev.id]]) - 1.0)
                      for dev in model.devices if dev.has_machine), default=0.0)
        if not np.isfinite(vmax) or vmax > V_MAX_GUARD or domega > DOMEGA_MAX_GUARD:
            status = UNSTABLE
            meta["abort_time"] = t
            log.warning("instability detected at t=%.3f s (|V|max=%.3f, |dw|max=%.3f)",
                        t, vmax, domega)
            break

    meta["coi_fallback"] = model.coi_fallback
    return recorder.to_series(status, meta)


# --------------------------------------------------------------------------
# model assembly from a scenario


def _build_sm_device(dev: dict, base_mva: float, f_nom: float,
                     rating_share: float = 1.0) -> SmDevice:
    md = dict(dev["sm"])
    order = int(md.pop("order", 6))
    s_n = md.pop("s_n") * rating_share
    machine = SynchronousMachine(MachineParams(s_n=s_n, **md), base_mva, order, f_nom)
    avr_cfg = dict(dev["avr"])
    avr_type = avr_cfg.pop("type")
    if avr_type == "dc1":
        avr = AvrDc1(AvrDc1Params(**avr_cfg))
    elif avr_type == "ac4":
        avr = AvrAc4(AvrAc4Params(**avr_cfg))
    else:
        raise ConfigurationError(f"device {dev['id']}: unknown avr type {avr_type!r}")
    gov = None
    if dev.get("gov"):
        gov_cfg = dict(dev["gov"])
        gov_type = gov_cfg.pop("type", "tg1")
        if gov_type != "tg1":
            raise ConfigurationError(f"device {dev['id']}: unknown governor type {gov_type!r}")
        gov = GovTg1(GovTg1Params(**gov_cfg), s_n, base_mva)
    pss = None
    if dev.get("pss"):
        pss_cfg = dict(dev["pss"])
        pss_type = pss_cfg.pop("type", "pss2")
        if pss_type != "pss2":
            raise ConfigurationError(f"device {dev['id']}: unknown pss type {pss_type!r}")
        pss = Pss2(Pss2Params(**pss_cfg))
    return SmDevice(dev["id"], dev["bus"], machine, avr, gov, pss)


def _build_ibr(dev: dict, rating: float, f_nom: float,
               controller: CoherencyController | None) -> IbrDevice:
    ibr_cfg = dict(dev.get("ibr") or {})
    pll_cfg = ibr_cfg.get("pll") or {}
    pll = Pll(PllParams(kp=pll_cfg.get("kp", 0.1), ki=pll_cfg.get("ki", 0.05)), f_nom)
    meas = dev.get("measurement") or {}
    noise = meas.get("noise") or {}
    return IbrDevice(
        dev["id"], dev["bus"], rating,
        tau_idq=ibr_cfg.get("tau_idq", 0.01),
        pll=pll, controller=controller,
        delay=meas.get("delay", 0.0),
        noise_w=noise.get("w", 0.0),
        f_nom=f_nom)


def split_device(dev: dict, base_mva: float, f_nom: float):
    """Build the runtime device for a scenario entry of kind sm/hybrid/ibr.

    For hybrids the machine keeps (1-C) of the rating and the converter the
    remaining C; the degenerate shares drop the corresponding part.
    """
    kind = dev["kind"]
    if kind == "sm":
        return _build_sm_device(dev, base_mva, f_nom)
    if kind == "ibr":
        controller = _make_controller(dev)
        rating = dev.get("rating", base_mva)
        return _build_ibr(dev, rating, f_nom, controller)
    if kind == "hybrid":
        c = float(dev["coherency"]["c"])
        if not 0.0 <= c <= 1.0:
            raise ConfigurationError(
                f"device {dev['id']}: coherency share C={c} outside [0, 1]")
        sm = _build_sm_device(dev, base_mva, f_nom, rating_share=1.0 - c) if c < 1.0 else None
        ibr = None
        if c > 0.0:
            controller = _make_controller(dev)
            if controller is None:
                raise ConfigurationError(
                    f"device {dev['id']}: hybrid with C>0 needs a coherency block")
            ibr = _build_ibr(dev, c * dev["sm"]["s_n"], f_nom, controller)
            ibr.id = dev["id"] + "#ibr"
        hybrid = HybridDevice(dev["id"], dev["bus"], c, sm, ibr)
        return hybrid
    raise ConfigurationError(f"device {dev['id']}: unknown kind {kind!r}")


def _make_controller(dev: dict) -> CoherencyController | None:
    coh = dev.get("coherency")
    if not coh or coh.get("reference") is None:
        return None
    if coh["reference"] == dev["id"]:
        raise ConfigurationError(
            f"device {dev['id']}: cannot use itself as coherency reference")
    return CoherencyController(reference_device=coh["reference"],
                               c=coh.get("c", 0.0),
                               mode=coh.get("mode", "complex"))


def build_model(scenario) -> PowerSystemModel:
    """Assemble and initialize a PowerSystemModel from a validated scenario."""
    data = scenario.data if hasattr(scenario, "data") else scenario
    sysd = data["system"]
    base_mva = sysd["base_mva"]
    f_nom = sysd["f_nom"]

    buses = [Bus(b["id"], b["base_kv"], shunt=complex(b.get("g", 0.0), b.get("b", 0.0)))
             for b in data["buses"]]
    branches = [Branch(br["from"], br["to"], br["r"], br["x"], br.get("b", 0.0),
                       br.get("tap", 1.0), br.get("circuit", 1))
                for br in data["branches"]]
    network = Network(buses, branches)

    devices = [split_device(d, base_mva, f_nom) for d in data["devices"]]
    bus_of_device = {}
    for dev, cfg in zip(devices, data["devices"]):
        if dev.bus in bus_of_device:
            raise ConfigurationError(f"more than one device at bus {dev.bus}")
        bus_of_device[dev.bus] = cfg

    # power flow at the original (unsplit) dispatch
    s_fixed = np.zeros(network.n_bus, dtype=complex)
    for ld in data["loads"]:
        s_fixed[network.bus_index(ld["bus"])] -= complex(ld["p"], ld["q"])
    slack_idx = None
    v_slack = 1.0
    pv = {}
    for cfg in data["devices"]:
        k = network.bus_index(cfg["bus"])
        disp = cfg.get("dispatch") or {}
        if cfg.get("slack"):
            if slack_idx is not None:
                raise ConfigurationError("more than one slack device")
            slack_idx = k
            v_slack = disp.get("v", 1.0)
        elif cfg["kind"] == "ibr" or disp.get("v") is None:
            s_fixed[k] += complex(disp.get("p", 0.0), disp.get("q", 0.0))
        else:
            pv[k] = (disp.get("p", 0.0), disp["v"])
    if slack_idx is None:
        raise ConfigurationError("no slack device designated")

    pf = newton_power_flow(network.ybus, slack_idx, v_slack, pv, s_fixed)
    for bus, v in zip(network.buses, pf.v):
        bus.v0 = v

    # loads freeze to constant impedance at the solved voltages
    loads = [LoadZ.from_power(ld["bus"], ld["p"], ld["q"],
                              pf.v[network.bus_index(ld["bus"])])
             for ld in data["loads"]]
    network.set_loads(loads)

    model = PowerSystemModel(network, devices, base_mva, f_nom)
    model.pf_result = pf

    # device dispatch from the solved operating point (net injection + local load)
    x0 = np.zeros(model.n_states)
    for dev, cfg in zip(devices, data["devices"]):
        k = network.bus_index(dev.bus)
        s_dev = pf.s_injection[k]
        for ld in data["loads"]:
            if ld["bus"] == dev.bus:
                s_dev += complex(ld["p"], ld["q"])
        x0[model.slices[dev.id]] = dev.initialize(pf.v[k], s_dev)

    # coherency gains and measurement-chain states need the reference currents
    v0 = pf.v
    currents0 = {dev.id: dev.current(x0[model.slices[dev.id]], v0[model._bus_of[dev.id]])
                 for dev in devices}
    for dev in devices:
        ctrl = None
        if isinstance(dev, HybridDevice) and dev.ibr is not None:
            ctrl = dev.ibr.controller
        elif isinstance(dev, IbrDevice):
            ctrl = dev.controller
        if ctrl is None:
            continue
        if ctrl.reference_device not in currents0:
            raise ConfigurationError(
                f"device {dev.id}: unknown coherency reference {ctrl.reference_device!r}")
        dev.finalize_measurement(x0[model.slices[dev.id]], currents0[ctrl.reference_device])
    model.x0 = x0

    # noise processes, one complex pair per converter with a weighting factor
    seed = int(data.get("seed", 12345))
    chan = 0
    for dev, cfg in zip(devices, data["devices"]):
        noise = (cfg.get("measurement") or {}).get("noise") or {}
        if noise.get("w", 0.0) > 0.0 and cfg["kind"] in ("hybrid", "ibr"):
            target = dev.ibr if isinstance(dev, HybridDevice) else dev
            if target is None:
                continue
            model.noise_processes[target.id] = (
                OuNoise(noise.get("sigma", 0.01), noise.get("alpha", 10.0),
                        noise.get("w", 1.0), seed=seed, channel=chan),
                OuNoise(noise.get("sigma", 0.01), noise.get("alpha", 10.0),
                        noise.get("w", 1.0), seed=seed, channel=chan + 1))
            chan += 2

    # complex-frequency estimator channels
    for m in data.get("measurements", []):
        dev_id = m["device"]
        if dev_id not in model.device_by_id:
            raise ConfigurationError(f"measurement {m['id']}: unknown device {dev_id!r}")
        est = CfEstimator(tau_f=m.get("tau_f", 0.02))
        model.estimators.append((m["id"], dev_id, m.get("part", "total"), est))

    # events
    for ev in data.get("events", []):
        kind = ev["kind"]
        if kind == "branch_trip":
            event = NetworkEvent(ev["time"], kind,
                                 branch=(ev["from"], ev["to"], ev.get("circuit", 1)))
        else:
            event = NetworkEvent(ev["time"], kind, bus=ev.get("bus"),
                                 y_fault=complex(ev.get("y_fault", 1e6)))
        model.events.append(event)

    model.default_channels = data.get("channels") or _default_channels(data, model)

    # consistency: the initialized model must sit at an equilibrium
    dx0 = model.f(0.0, x0)
    worst = float(np.max(np.abs(dx0))) if len(dx0) else 0.0
    if worst > 1e-7:
        name = model.state_names()[int(np.argmax(np.abs(dx0)))]
        raise InitializationError(
            f"initialization left a residual derivative of {worst:.3e} on {name}")
    return model


def _default_channels(data, model) -> list[str]:
    channels = ["coi.freq", "sys.balance"]
    for cfg in data["devices"]:
        channels += [f"{cfg['id']}.p", f"{cfg['id']}.q"]
        if model.device_by_id[cfg["id"]].has_machine:
            channels.append(f"{cfg['id']}.speed")
    for m in data.get("measurements", []):
        channels += [f"{m['id']}.rho", f"{m['id']}.omega",
                     f"{m['id']}.i_re", f"{m['id']}.i_im"]
    bus_ids = sorted({cfg["bus"] for cfg in data["devices"]}
                     | {ld["bus"] for ld in data["loads"]}
                     | {ev["bus"] for ev in data.get("events", []) if ev.get("bus")})
    channels += [f"bus{b}.vmag" for b in bus_ids]
    return channels


def make_solver_config(data: dict, model: PowerSystemModel | None = None) -> SolverConfig:
    """Solver settings from the scenario block; unless the step is pinned
    explicitly, it shrinks to 2 ms when any block is faster than 10 ms."""
    solver = dict(data.get("solver") or {})
    cfg = SolverConfig(
        h=solver.get("h", 0.005),
        t_end=solver.get("t_end", 20.0),
        output_step=solver.get("output_step", 0.01),
        newton_tol=solver.get("newton_tol", 1e-10),
        max_newton_iters=solver.get("max_newton_iters", 20))
    if "h" not in solver and model is not None:
        taus = []
        for dev in model.devices:
            ibr = dev.ibr if isinstance(dev, HybridDevice) else (
                dev if isinstance(dev, IbrDevice) else None)
            if ibr is not None:
                taus.append(ibr.tau)
                if ibr.delay > 0:
                    taus.append(ibr.delay)
        for _, _, _, est in model.estimators:
            taus.append(est.tau_f)
        if any(tau < FAST_BLOCK_LIMIT for tau in taus):
            cfg.h = min(cfg.h, 0.002)
    return cfg
