"""Synchronous machine models and their controls.

Machine conventions:
  * rotor angle delta is the angle of the q-axis in the synchronous frame,
    d-axis lagging q by 90 degrees;
  * dq components of a network phasor X: x_d + j x_q = X * exp(-j(delta - pi/2));
  * all device parameters are given on the machine MVA base and converted to
    the system base at construction (reactances * Sb/Sn, H and D * Sn/Sb).

Machine orders:
  * 6th order: delta, omega, e'q, e'd, e''q, e''d with subtransient stator
    algebra (Anderson-Fouad structure);
  * 4th order: delta, omega, e'q, e'd two-axis model with transient stator
    algebra.

Control block diagrams (states in brackets):
  * dc1 exciter: regulator Ka/(1+sTa) [vr, windup limits] -> exciter
    1/(Ke+sTe) [efd] with rate feedback sKf/(1+sTf) [xf]; no saturation.
  * ac4 exciter: lead-lag (1+sTc)/(1+sTb) [xll] -> regulator Ka/(1+sTa)
    [efd, non-windup limits].
  * governor: droop 1/R into servo 1/(1+sTs) [xg1], transient gain reduction
    (1+sT3)/(1+sTc) [xg2] and reheat (1+sT4)/(1+sT5) [xg3].
  * stabilizer: washout sKw*Tw/(1+sTw) [v1] and two lead-lag stages
    (1+sT1)/(1+sT2) [v2], (1+sT3)/(1+sT4) [v3], clamped output.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InitializationError


@dataclass
class MachineParams:
    s_n: float                  # machine MVA rating
    h: float                    # inertia constant, s (machine base)
    d: float = 0.0              # damping torque coefficient (machine base)
    ra: float = 0.0
    xd: float = 0.0
    xq: float = 0.0
    xdp: float = 0.0
    xqp: float = 0.0
    td0p: float = 0.0
    tq0p: float = 0.0
    xdpp: float = 0.0           # subtransient data, 6th order only
    xqpp: float = 0.0
    td0pp: float = 0.0
    tq0pp: float = 0.0


@dataclass
class AvrDc1Params:
    ka: float = 20.0
    ta: float = 0.055
    ke: float = 1.0
    te: float = 0.36
    kf: float = 0.125
    tf: float = 1.8
    vr_max: float = 5.0
    vr_min: float = -5.0


@dataclass
class AvrAc4Params:
    ka: float = 200.0
    ta: float = 0.015
    tb: float = 10.0
    tc: float = 1.0
    vr_max: float = 10.0
    vr_min: float = -10.0


@dataclass
class GovTg1Params:
    r: float = 0.05             # droop, machine base
    ts: float = 0.1             # governor time constant
    tc: float = 0.45            # servo time constant
    t3: float = 0.0
    t4: float = 12.0
    t5: float = 50.0
    p_max: float = 1.2          # machine base
    p_min: float = 0.0


@dataclass
class Pss2Params:
    kw: float = 5.0
    tw: float = 10.0
    t1: float = 0.15
    t2: float = 0.03
    t3: float = 0.15
    t4: float = 0.03
    vs_max: float = 0.2
    vs_min: float = -0.2


def to_dq(x: complex, delta: float) -> complex:
    """Network phasor -> machine dq components (d real, q imaginary)."""
    return x * cmath.exp(-1j * (delta - math.pi / 2))


def from_dq(x_dq: complex, delta: float) -> complex:
    return x_dq * cmath.exp(1j * (delta - math.pi / 2))


class SynchronousMachine:
    """6th- or 4th-order machine, selected by `order`, on the system base."""

    def __init__(self, params: MachineParams, base_mva: float, order: int = 6,
                 f_nom: float = 60.0):
        if order not in (4, 6):
            raise InitializationError(f"unsupported machine order {order}")
        if params.h <= 0:
            raise InitializationError("machine inertia H must be positive")
        self.order = order
        self.omega_b = 2 * math.pi * f_nom
        k = base_mva / params.s_n   # impedance conversion factor
        self.ra = params.ra * k
        self.xd = params.xd * k
        self.xq = params.xq * k
        self.xdp = params.xdp * k
        self.xqp = params.xqp * k
        self.td0p = params.td0p
        self.tq0p = params.tq0p
        self.h = params.h / k       # H and D scale with the rating share
        self.d = params.d / k
        if order == 6:
            if not (params.xdpp <= params.xdp <= params.xd):
                raise InitializationError("expected xd'' <= xd' <= xd")
            self.xdpp = params.xdpp * k
            self.xqpp = params.xqpp * k
            self.td0pp = params.td0pp
            self.tq0pp = params.tq0pp
            self.x_stator = (self.xdpp, self.xqpp)
        else:
            self.x_stator = (self.xdp, self.xqp)
        # Stator algebra i_dq = M (e_dq - v_dq) expressed as M z = a z + b conj(z)
        xd_s, xq_s = self.x_stator
        det = self.ra ** 2 + xd_s * xq_s
        self._m_a = complex(self.ra, -(xd_s + xq_s) / 2) / det
        self._m_b = 1j * (xq_s - xd_s) / 2 / det

    @property
    def n_states(self) -> int:
        return self.order

    def state_names(self):
        names = ["delta", "omega", "eqp", "edp"]
        if self.order == 6:
            names += ["eqpp", "edpp"]
        return names

    # --- stator / network interface -------------------------------------

    def _emf_dq(self, x) -> complex:
        if self.order == 6:
            return complex(x[5], x[4])      # e''d + j e''q
        return complex(x[3], x[2])          # e'd + j e'q

    def norton(self, x):
        """Injection model I = i_src - y1 V - y2 conj(V) at the terminal."""
        delta = x[0]
        rot = cmath.exp(1j * (delta - math.pi / 2))
        e_dq = self._emf_dq(x)
        i_src = rot * (self._m_a * e_dq + self._m_b * e_dq.conjugate())
        y2 = self._m_b * rot * rot
        return self._m_a, y2, i_src

    def current(self, x, v: complex) -> complex:
        y1, y2, i_src = self.norton(x)
        return i_src - y1 * v - y2 * v.conjugate()

    def dq_currents(self, x, v: complex):
        i_dq = to_dq(self.current(x, v), x[0])
        return i_dq.real, i_dq.imag

    def electrical_torque(self, x, i_d: float, i_q: float) -> float:
        e_dq = self._emf_dq(x)
        xd_s, xq_s = self.x_stator
        return e_dq.real * i_d + e_dq.imag * i_q + (xq_s - xd_s) * i_d * i_q

    # --- dynamics --------------------------------------------------------

    def derivatives(self, x, v: complex, efd: float, pm: float) -> np.ndarray:
        delta, omega = x[0], x[1]
        i_d, i_q = self.dq_currents(x, v)
        te = self.electrical_torque(x, i_d, i_q)
        dx = np.empty(self.order)
        dx[0] = self.omega_b * (omega - 1.0)
        dx[1] = (pm / omega - te - self.d * (omega - 1.0)) / (2 * self.h)
        dx[2] = (efd - x[2] - (self.xd - self.xdp) * i_d) / self.td0p
        dx[3] = (-x[3] + (self.xq - self.xqp) * i_q) / self.tq0p
        if self.order == 6:
            dx[4] = (x[2] - x[4] - (self.xdp - self.xdpp) * i_d) / self.td0pp
            dx[5] = (x[3] - x[5] + (self.xqp - self.xqpp) * i_q) / self.tq0pp
        return dx

    def initialize(self, v: complex, s: complex):
        """Back-solve the machine states from the power-flow point.

        Returns (x0, efd0, pm0), all on the system base.
        """
        if abs(s) > 0 and abs(v) < 1e-6:
            raise InitializationError("cannot initialize machine at a dead bus")
        i = np.conj(s / v) if abs(v) > 0 else 0j
        eq = v + complex(self.ra, self.xq) * i
        delta = cmath.phase(eq)
        i_dq = to_dq(i, delta)
        i_d, i_q = i_dq.real, i_dq.imag
        efd = abs(eq) + (self.xd - self.xq) * i_d
        eqp = efd - (self.xd - self.xdp) * i_d
        edp = (self.xq - self.xqp) * i_q
        x = [delta, 1.0, eqp, edp]
        if self.order == 6:
            x += [eqp - (self.xdp - self.xdpp) * i_d,
                  edp + (self.xqp - self.xqpp) * i_q]
        x = np.array(x)
        pm = s.real + self.ra * abs(i) ** 2
        return x, efd, pm


class AvrDc1:
    """DC rotating exciter with regulator windup limits, no saturation."""

    N_STATES = 3    # vr, efd, xf

    def __init__(self, params: AvrDc1Params):
        self.p = params
        self.vref = None

    def initialize(self, efd0: float, vc0: float) -> np.ndarray:
        vr0 = self.p.ke * efd0
        if not (self.p.vr_min <= vr0 <= self.p.vr_max):
            raise InitializationError(
                f"dc1 exciter: initial regulator output {vr0:.3f} outside limits")
        self.vref = vc0 + vr0 / self.p.ka
        return np.array([vr0, efd0, efd0])

    def output(self, x) -> float:
        return x[1]

    def derivatives(self, x, vc: float, vpss: float) -> np.ndarray:
        vr, efd, xf = x
        vf = self.p.kf * (efd - xf) / self.p.tf
        dvr = (self.p.ka * (self.vref - vc + vpss - vf) - vr) / self.p.ta
        vr_lim = min(max(vr, self.p.vr_min), self.p.vr_max)
        defd = (vr_lim - self.p.ke * efd) / self.p.te
        dxf = (efd - xf) / self.p.tf
        return np.array([dvr, defd, dxf])

    def state_names(self):
        return ["vr", "efd", "xf"]

    def bounds(self):
        return [(None, None)] * 3


class AvrAc4:
    """Static exciter: lead-lag plus first-order regulator, non-windup limits."""

    N_STATES = 2    # xll, efd

    def __init__(self, params: AvrAc4Params):
        self.p = params
        self.vref = None

    def initialize(self, efd0: float, vc0: float) -> np.ndarray:
        if not (self.p.vr_min <= efd0 <= self.p.vr_max):
            raise InitializationError(
                f"ac4 exciter: initial field voltage {efd0:.3f} outside limits")
        u0 = efd0 / self.p.ka
        self.vref = vc0 + u0
        return np.array([(1 - self.p.tc / self.p.tb) * u0, efd0])

    def output(self, x) -> float:
        return x[1]

    def derivatives(self, x, vc: float, vpss: float) -> np.ndarray:
        xll, efd = x
        u = self.vref - vc + vpss
        ll_out = xll + self.p.tc / self.p.tb * u
        dxll = ((1 - self.p.tc / self.p.tb) * u - xll) / self.p.tb
        defd = (self.p.ka * ll_out - efd) / self.p.ta
        if efd >= self.p.vr_max and defd > 0:
            defd = 0.0
        elif efd <= self.p.vr_min and defd < 0:
            defd = 0.0
        return np.array([dxll, defd])

    def state_names(self):
        return ["xll", "efd"]

    def bounds(self):
        return [(None, None), (self.p.vr_min, self.p.vr_max)]


class GovTg1:
    """Speed-droop governor with servo, gain reduction and reheat stages.

    Parameters arrive on the machine base; conversion to the system base is
    handled through the rating passed at construction.
    """

    N_STATES = 3    # xg1, xg2, xg3

    def __init__(self, params: GovTg1Params, s_n: float, base_mva: float):
        k = s_n / base_mva
        self.r = params.r / k           # droop on system base
        self.ts = params.ts
        self.tc = params.tc
        self.t3 = params.t3
        self.t4 = params.t4
        self.t5 = params.t5
        self.p_max = params.p_max * k
        self.p_min = params.p_min * k
        self.pref = None

    def initialize(self, pm0: float) -> np.ndarray:
        if not (self.p_min <= pm0 <= self.p_max):
            raise InitializationError(
                f"governor: initial mechanical power {pm0:.3f} outside limits")
        self.pref = pm0
        return np.array([pm0,
                         (1 - self.t3 / self.tc) * pm0,
                         (1 - self.t4 / self.t5) * pm0])

    def output(self, x) -> float:
        xg1, xg2, xg3 = x
        return xg3 + self.t4 / self.t5 * (xg2 + self.t3 / self.tc * xg1)

    def derivatives(self, x, omega: float) -> np.ndarray:
        xg1, xg2, xg3 = x
        p_in = self.pref + (1.0 - omega) / self.r
        p_in = min(max(p_in, self.p_min), self.p_max)
        dxg1 = (p_in - xg1) / self.ts
        mid = xg2 + self.t3 / self.tc * xg1
        dxg2 = ((1 - self.t3 / self.tc) * xg1 - xg2) / self.tc
        dxg3 = ((1 - self.t4 / self.t5) * mid - xg3) / self.t5
        return np.array([dxg1, dxg2, dxg3])

    def state_names(self):
        return ["xg1", "xg2", "xg3"]

    def bounds(self):
        return [(None, None)] * 3


class Pss2:
    """Speed-input stabilizer: washout plus two lead-lag stages."""

    N_STATES = 3    # v1, v2, v3

    def __init__(self, params: Pss2Params):
        self.p = params

    def initialize(self, domega0: float = 0.0) -> np.ndarray:
        return np.array([-self.p.kw * domega0, 0.0, 0.0])

    def output(self, x, domega: float) -> float:
        wo = self.p.kw * domega + x[0]
        o1 = x[1] + self.p.t1 / self.p.t2 * wo
        vs = x[2] + self.p.t3 / self.p.t4 * o1
        return min(max(vs, self.p.vs_min), self.p.vs_max)

    def derivatives(self, x, domega: float) -> np.ndarray:
        wo = self.p.kw * domega + x[0]
        o1 = x[1] + self.p.t1 / self.p.t2 * wo
        return np.array([
            -wo / self.p.tw,
            ((1 - self.p.t1 / self.p.t2) * wo - x[1]) / self.p.t2,
            ((1 - self.p.t3 / self.p.t4) * o1 - x[2]) / self.p.t4,
        ])

    def state_names(self):
        return ["pss_v1", "pss_v2", "pss_v3"]

    def bounds(self):
        return [(None, None)] * 3


class SmDevice:
    """A synchronous machine with its exciter and optional governor/stabilizer.

    State layout: [machine | avr | gov? | pss?].
    """

    def __init__(self, dev_id: str, bus: int, machine: SynchronousMachine,
                 avr, gov=None, pss=None):
        self.id = dev_id
        self.bus = bus
        self.machine = machine
        self.avr = avr
        self.gov = gov
        self.pss = pss
        self.pm0 = None
        n = machine.n_states
        self._sl_m = slice(0, n)
        self._sl_avr = slice(n, n + avr.N_STATES)
        n += avr.N_STATES
        if gov is not None:
            self._sl_gov = slice(n, n + gov.N_STATES)
            n += gov.N_STATES
        else:
            self._sl_gov = None
        if pss is not None:
            self._sl_pss = slice(n, n + pss.N_STATES)
            n += pss.N_STATES
        else:
            self._sl_pss = None
        self.n_states = n

    def state_names(self):
        names = self.machine.state_names() + self.avr.state_names()
        if self.gov is not None:
            names += self.gov.state_names()
        if self.pss is not None:
            names += self.pss.state_names()
        return [f"{self.id}.{n}" for n in names]

    def bounds(self):
        b = [(None, None)] * self.machine.n_states + self.avr.bounds()
        if self.gov is not None:
            b += self.gov.bounds()
        if self.pss is not None:
            b += self.pss.bounds()
        return b

    def initialize(self, v0: complex, s0: complex) -> np.ndarray:
        xm, efd0, pm0 = self.machine.initialize(v0, s0)
        self.pm0 = pm0
        parts = [xm, self.avr.initialize(efd0, abs(v0))]
        if self.gov is not None:
            parts.append(self.gov.initialize(pm0))
        if self.pss is not None:
            parts.append(self.pss.initialize(0.0))
        return np.concatenate(parts)

    def derivatives(self, x, v: complex, ctx=None) -> np.ndarray:
        omega = x[1]
        domega = omega - 1.0
        vpss = self.pss.output(x[self._sl_pss], domega) if self.pss is not None else 0.0
        efd = self.avr.output(x[self._sl_avr])
        pm = self.gov.output(x[self._sl_gov]) if self.gov is not None else self.pm0
        dx = np.empty(self.n_states)
        dx[self._sl_m] = self.machine.derivatives(x[self._sl_m], v, efd, pm)
        dx[self._sl_avr] = self.avr.derivatives(x[self._sl_avr], abs(v), vpss)
        if self.gov is not None:
            dx[self._sl_gov] = self.gov.derivatives(x[self._sl_gov], omega)
        if self.pss is not None:
            dx[self._sl_pss] = self.pss.derivatives(x[self._sl_pss], domega)
        return dx

    # --- engine interface -------------------------------------------------

    def network_contrib(self, x):
        return self.machine.norton(x[self._sl_m])

    def current(self, x, v: complex) -> complex:
        return self.machine.current(x[self._sl_m], v)

    def part_current(self, x, v: complex, part: str) -> complex:
        if part in ("total", "sm"):
            return self.current(x, v)
        raise ConfigurationError(f"device {self.id} has no part {part!r}")

    def power(self, x, v: complex) -> complex:
        return v * np.conj(self.current(x, v))

    @property
    def has_machine(self) -> bool:
        return True

    def speed(self, x) -> float:
        return x[1]

    def inertia_weight(self) -> float:
        return self.machine.h   # already scaled by the rating share

    def mech_power(self, x) -> float:
        if self.gov is not None:
            return self.gov.output(x[self._sl_gov])
        return self.pm0

    def field_voltage(self, x) -> float:
        return self.avr.output(x[self._sl_avr])
