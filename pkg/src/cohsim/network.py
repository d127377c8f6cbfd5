"""Static network model: buses, branches, constant-impedance loads and events.

All quantities are per-unit on the system MVA base. Phasors live in a frame
rotating at nominal synchronous speed. Device injections are positive into
the network; loads enter the admittance matrix as fixed shunt admittances
computed at the solved power-flow point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, SolveError

DEFAULT_FAULT_ADMITTANCE = 1e6 + 0j
SOLVE_RESIDUAL_TOL = 1e-10


@dataclass
class Bus:
    id: int
    base_kv: float
    v0: complex = 1.0 + 0j      # power-flow solution, filled by initialization
    shunt: complex = 0j         # fixed shunt admittance g + jb


@dataclass
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0              # total line charging susceptance
    tap: float = 1.0            # off-nominal tap magnitude on the from side
    circuit_id: int = 1
    in_service: bool = True

    def series_admittance(self) -> complex:
        z = complex(self.r, self.x)
        if z == 0:
            raise ConfigurationError(
                f"branch {self.from_bus}-{self.to_bus} (circuit {self.circuit_id}) "
                "has zero series impedance")
        return 1.0 / z

    @property
    def key(self):
        return (self.from_bus, self.to_bus, self.circuit_id)


@dataclass
class LoadZ:
    """Constant-impedance load, frozen at the power-flow point."""
    bus: int
    y_load: complex

    @classmethod
    def from_power(cls, bus: int, p: float, q: float, v0: complex) -> "LoadZ":
        return cls(bus=bus, y_load=complex(p, -q) / abs(v0) ** 2)


@dataclass
class NetworkEvent:
    time: float
    kind: str                                   # branch_trip | fault_apply | fault_clear
    bus: int | None = None
    branch: tuple[int, int, int] | None = None  # (from, to, circuit_id)
    y_fault: complex = DEFAULT_FAULT_ADMITTANCE

    def __post_init__(self):
        if self.kind not in ("branch_trip", "fault_apply", "fault_clear"):
            raise ConfigurationError(f"unknown event kind {self.kind!r}")
        if self.kind == "branch_trip" and self.branch is None:
            raise ConfigurationError("branch_trip event needs a branch reference")
        if self.kind in ("fault_apply", "fault_clear") and self.bus is None:
            raise ConfigurationError(f"{self.kind} event needs a bus")


def build_ybus(buses, branches, loads=(), faults=None) -> sp.csr_matrix:
    """Assemble the complex bus admittance matrix.

    Off-nominal taps stamp the standard pi model with the tap on the from
    side (tap magnitude only, so the matrix stays structurally symmetric).
    `faults` maps bus id -> fault shunt admittance.
    """
    index = {bus.id: i for i, bus in enumerate(buses)}
    if len(index) != len(buses):
        raise ConfigurationError("duplicate bus ids in network")
    n = len(buses)
    y = sp.lil_matrix((n, n), dtype=complex)
    for br in branches:
        if br.from_bus not in index or br.to_bus not in index:
            raise ConfigurationError(
                f"branch {br.from_bus}-{br.to_bus} has a dangling endpoint")
        if not br.in_service:
            continue
        i, j = index[br.from_bus], index[br.to_bus]
        ys = br.series_admittance()
        bsh = 1j * br.b / 2.0
        a = br.tap if br.tap else 1.0
        y[i, i] += (ys + bsh) / (a * a)
        y[j, j] += ys + bsh
        y[i, j] -= ys / a
        y[j, i] -= ys / a
    for bus in buses:
        y[index[bus.id], index[bus.id]] += bus.shunt
    for load in loads:
        if load.bus not in index:
            raise ConfigurationError(f"load references unknown bus {load.bus}")
        y[index[load.bus], index[load.bus]] += load.y_load
    for bus_id, yf in (faults or {}).items():
        y[index[bus_id], index[bus_id]] += yf
    return y.tocsr()


class Network:
    """Mutable-by-events network; everything else is fixed after construction."""

    def __init__(self, buses, branches, loads=()):
        self.buses = list(buses)
        self.branches = list(branches)
        self.loads = list(loads)
        self.index = {bus.id: i for i, bus in enumerate(self.buses)}
        if len(self.index) != len(self.buses):
            raise ConfigurationError("duplicate bus ids in network")
        keys = [br.key for br in self.branches]
        if len(set(keys)) != len(keys):
            raise ConfigurationError(
                "parallel circuits between the same bus pair must carry distinct circuit_id")
        self.faults: dict[int, complex] = {}
        self.ybus = build_ybus(self.buses, self.branches, self.loads, self.faults)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    def bus_index(self, bus_id: int) -> int:
        try:
            return self.index[bus_id]
        except KeyError:
            raise ConfigurationError(f"unknown bus {bus_id}") from None

    def set_loads(self, loads):
        self.loads = list(loads)
        self.rebuild()

    def rebuild(self):
        self.ybus = build_ybus(self.buses, self.branches, self.loads, self.faults)

    def find_branch(self, from_bus, to_bus, circuit_id=1) -> Branch:
        for br in self.branches:
            if br.key in ((from_bus, to_bus, circuit_id), (to_bus, from_bus, circuit_id)):
                return br
        raise ConfigurationError(
            f"no branch {from_bus}-{to_bus} circuit {circuit_id} in network")

    def apply_event(self, event: NetworkEvent):
        if event.kind == "branch_trip":
            br = self.find_branch(*event.branch)
            if not br.in_service:
                warnings.warn(
                    f"branch {br.from_bus}-{br.to_bus} circuit {br.circuit_id} "
                    "is already out of service; trip ignored", RuntimeWarning)
                return
            br.in_service = False
        elif event.kind == "fault_apply":
            self.bus_index(event.bus)
            self.faults[event.bus] = event.y_fault
        elif event.kind == "fault_clear":
            if event.bus not in self.faults:
                raise ConfigurationError(
                    f"fault_clear at bus {event.bus} without an active fault")
            del self.faults[event.bus]
        self.rebuild()


def solve_network(y_aug, i_src) -> np.ndarray:
    """Solve Y_aug V = i_src for the bus voltage phasors.

    Dense direct solve (the target systems are well under 50 buses); raises
    SolveError naming the offending bus when the matrix is singular.
    """
    a = y_aug.toarray() if sp.issparse(y_aug) else np.asarray(y_aug, dtype=complex)
    rhs = np.asarray(i_src, dtype=complex)
    zero_diag = np.where(np.abs(np.diag(a)) < 1e-14)[0]
    if zero_diag.size:
        raise SolveError(
            f"singular network matrix: bus index {zero_diag[0]} has no connection "
            "(islanded bus with no shunt?)")
    try:
        v = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolveError(f"network solve failed: {exc}") from exc
    residual = np.linalg.norm(a @ v - rhs, ord=np.inf)
    scale = max(1.0, np.linalg.norm(rhs, ord=np.inf))
    if not np.isfinite(residual) or residual > SOLVE_RESIDUAL_TOL * scale * 1e3:
        raise SolveError(f"network solve residual {residual:.3e} exceeds tolerance")
    return v


def branch_flows(network: Network, v: np.ndarray):
    """Complex power entering each in-service branch at both ends.

    Returns a list of (branch, s_from, s_to); losses are s_from + s_to.
    """
    flows = []
    for br in network.branches:
        if not br.in_service:
            continue
        i = network.bus_index(br.from_bus)
        j = network.bus_index(br.to_bus)
        ys = br.series_admittance()
        bsh = 1j * br.b / 2.0
        a = br.tap if br.tap else 1.0
        vi, vj = v[i], v[j]
        ii = (ys + bsh) / (a * a) * vi - ys / a * vj
        ij = (ys + bsh) * vj - ys / a * vi
        flows.append((br, vi * np.conj(ii), vj * np.conj(ij)))
    return flows


def total_injection_balance(network: Network, v: np.ndarray, s_devices: complex) -> float:
    """Active-power balance residual: generation - loads - losses - fault dissipation."""
    p_load = sum(abs(v[network.bus_index(ld.bus)]) ** 2 * ld.y_load.real
                 for ld in network.loads)
    p_shunt = sum(abs(v[network.bus_index(b.id)]) ** 2 * b.shunt.real
                  for b in network.buses)
    p_fault = sum(abs(v[network.bus_index(bus)]) ** 2 * yf.real
                  for bus, yf in network.faults.items())
    p_loss = sum((sf + st).real for _, sf, st in branch_flows(network, v))
    return s_devices.real - p_load - p_shunt - p_fault - p_loss
