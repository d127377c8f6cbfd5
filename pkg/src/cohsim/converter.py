"""Grid-following converter with coherency current control.

The converter injects the current state rotated by the PLL angle, so it
appears to the network as a pure current source. Power references come
either from fixed setpoints or from the coherency controller, which scales
a remotely measured current by a complex gain frozen at t=0:

    i_ref = k * |i_meas| * exp(j(theta_k + arg(i_meas)))     (complex mode)
    i_ref = i_mag0      * exp(j(theta_k + arg(i_meas)))      (conventional mode)

The measured remote current may pass through an additive noise process and a
first-order communication delay before reaching the controller.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InitializationError
from .machines import SmDevice

VOLTAGE_HOLD_THRESHOLD = 0.01   # pu; below this the current references freeze


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(theta, 2 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2 * math.pi
    return wrapped


def init_gain(i_local0: complex, i_ext0: complex) -> tuple[float, float]:
    """Magnitude ratio and phase offset between the local and reference
    currents at the initial operating point."""
    if abs(i_ext0) < 1e-9:
        raise InitializationError(
            "coherency reference device carries no current at t=0")
    k_mag = abs(i_local0) / abs(i_ext0)
    theta_k = wrap_angle(cmath.phase(i_local0) - cmath.phase(i_ext0))
    return k_mag, theta_k


def power_reference(v_term: complex, i_ref: complex) -> tuple[float, float]:
    """Active/reactive power references from the terminal voltage and the
    scaled external current."""
    s = v_term * np.conj(i_ref)
    return s.real, s.imag


@dataclass
class CoherencyController:
    reference_device: str
    k_mag: float = 1.0
    theta_k: float = 0.0
    c: float = 0.0
    mode: str = "complex"           # complex | conventional
    i_mag0: float = 0.0

    def __post_init__(self):
        if self.mode not in ("complex", "conventional"):
            raise ConfigurationError(f"unknown coherency mode {self.mode!r}")
        if not 0.0 <= self.c <= 1.0:
            raise ConfigurationError(f"coherency share C={self.c} outside [0, 1]")

    def set_gain(self, i_local0: complex, i_ext0: complex):
        self.k_mag, self.theta_k = init_gain(i_local0, i_ext0)
        self.i_mag0 = abs(i_local0)

    def reference_current(self, i_ext_meas: complex) -> complex:
        mag = self.i_mag0 if self.mode == "conventional" else self.k_mag * abs(i_ext_meas)
        return mag * cmath.exp(1j * (self.theta_k + cmath.phase(i_ext_meas)))


def coherency_reference(i_ext_meas: complex, ctrl: CoherencyController) -> complex:
    return ctrl.reference_current(i_ext_meas)


@dataclass
class PllParams:
    kp: float = 0.1
    ki: float = 0.05


class Pll:
    """Synchronous-reference-frame PLL on the terminal voltage.

    States: tracked angle theta and the integrator xi (pu frequency
    deviation); d(theta)/dt = omega_b * (kp*vq + xi).
    """

    N_STATES = 2

    def __init__(self, params: PllParams, f_nom: float = 60.0):
        self.kp = params.kp
        self.ki = params.ki
        self.omega_b = 2 * math.pi * f_nom

    def initialize(self, v0: complex) -> np.ndarray:
        return np.array([cmath.phase(v0), 0.0])

    def q_error(self, x, v: complex) -> float:
        if abs(v) < 1e-6:
            return 0.0
        return (v * cmath.exp(-1j * x[0])).imag

    def derivatives(self, x, v: complex) -> np.ndarray:
        vq = self.q_error(x, v)
        return np.array([self.omega_b * (self.kp * vq + x[1]), self.ki * vq])

    def frequency(self, x, v: complex) -> float:
        """Tracked frequency in pu of nominal."""
        return 1.0 + self.kp * self.q_error(x, v) + x[1]


class IbrDevice:
    """Power-controlled grid-following converter.

    State layout: [pll_theta, pll_xi, i_d, i_q] plus, when a communication
    delay is configured, the delayed measurement phasor [zm_re, zm_im].
    """

    def __init__(self, dev_id: str, bus: int, rating: float, tau_idq: float = 0.01,
                 pll: Pll = None, controller: CoherencyController = None,
                 delay: float = 0.0, noise_w: float = 0.0, f_nom: float = 60.0):
        self.id = dev_id
        self.bus = bus
        self.rating = rating
        self.tau = tau_idq
        self.pll = pll if pll is not None else Pll(PllParams(), f_nom)
        self.controller = controller
        self.delay = delay
        self.noise_w = noise_w
        self.p_ref0 = 0.0
        self.q_ref0 = 0.0
        self.n_states = 4 + (2 if delay > 0 else 0)
        self._sl_pll = slice(0, 2)
        self._sl_i = slice(2, 4)
        self._sl_delay = slice(4, 6) if delay > 0 else None

    def state_names(self):
        names = ["pll_theta", "pll_xi", "i_d", "i_q"]
        if self._sl_delay is not None:
            names += ["meas_re", "meas_im"]
        return [f"{self.id}.{n}" for n in names]

    def bounds(self):
        return [(None, None)] * self.n_states

    def initialize(self, v0: complex, s0: complex) -> np.ndarray:
        x = np.zeros(self.n_states)
        x[self._sl_pll] = self.pll.initialize(v0)
        i0 = np.conj(s0 / v0)
        i_dq = i0 * cmath.exp(-1j * x[0])
        x[self._sl_i] = [i_dq.real, i_dq.imag]
        self.p_ref0, self.q_ref0 = s0.real, s0.imag
        return x

    def finalize_measurement(self, x, i_ext0: complex):
        """Bind the coherency gain and settle the delay state at t=0."""
        i_local0 = self.current(x, 0j)
        self.controller.set_gain(i_local0, i_ext0)
        if self._sl_delay is not None:
            x[self._sl_delay] = [i_ext0.real, i_ext0.imag]

    def current(self, x, v: complex) -> complex:
        return complex(x[2], x[3]) * cmath.exp(1j * x[0])

    def power(self, x, v: complex) -> complex:
        return v * np.conj(self.current(x, v))

    def network_contrib(self, x):
        return 0j, 0j, self.current(x, 0j)

    def part_current(self, x, v: complex, part: str) -> complex:
        if part in ("total", "ibr"):
            return self.current(x, v)
        raise ConfigurationError(f"device {self.id} has no part {part!r}")

    def derivatives(self, x, v: complex, ctx) -> np.ndarray:
        dx = np.zeros(self.n_states)
        dx[self._sl_pll] = self.pll.derivatives(x[self._sl_pll], v)
        theta = x[0]

        i_ext_noisy = 0j
        if self.controller is not None:
            i_ext_noisy = ctx.raw_current(self.controller.reference_device)
            i_ext_noisy += ctx.noise(self.id)
        if self._sl_delay is not None:
            z = complex(x[4], x[5])
            dz = (i_ext_noisy - z) / self.delay
            dx[4], dx[5] = dz.real, dz.imag
            i_meas = z
        else:
            i_meas = i_ext_noisy

        if abs(v) < VOLTAGE_HOLD_THRESHOLD:
            # ride-through placeholder: hold the current references
            i_dq_ref = complex(x[2], x[3])
        elif self.controller is not None:
            i_ref = self.controller.reference_current(i_meas)
            s_ref = v * np.conj(i_ref)
            i_dq_ref = np.conj(s_ref / (v * cmath.exp(-1j * theta)))
        else:
            s_ref = complex(self.p_ref0, self.q_ref0)
            i_dq_ref = np.conj(s_ref / (v * cmath.exp(-1j * theta)))
        dx[2] = (i_dq_ref.real - x[2]) / self.tau
        dx[3] = (i_dq_ref.imag - x[3]) / self.tau
        return dx

    @property
    def has_machine(self) -> bool:
        return False


class HybridDevice:
    """A synchronous machine and a coherency-controlled converter sharing one
    terminal; the machine part keeps the voltage-regulation duty.

    With share C, the machine part is scaled to (1-C) of the original rating
    and dispatch, and the converter carries the remaining C. C=0 degenerates
    to the plain machine, C=1 to a pure converter (the machine is dropped).
    """

    def __init__(self, dev_id: str, bus: int, c: float,
                 sm: SmDevice | None, ibr: IbrDevice | None):
        if not 0.0 <= c <= 1.0:
            raise ConfigurationError(f"coherency share C={c} outside [0, 1]")
        self.id = dev_id
        self.bus = bus
        self.c = c
        self.sm = sm
        self.ibr = ibr
        n_sm = sm.n_states if sm is not None else 0
        n_ibr = ibr.n_states if ibr is not None else 0
        self._sl_sm = slice(0, n_sm)
        self._sl_ibr = slice(n_sm, n_sm + n_ibr)
        self.n_states = n_sm + n_ibr

    def state_names(self):
        names = []
        if self.sm is not None:
            names += self.sm.state_names()
        if self.ibr is not None:
            names += self.ibr.state_names()
        return names

    def bounds(self):
        b = []
        if self.sm is not None:
            b += self.sm.bounds()
        if self.ibr is not None:
            b += self.ibr.bounds()
        return b

    def initialize(self, v0: complex, s0: complex) -> np.ndarray:
        parts = []
        if self.sm is not None:
            parts.append(self.sm.initialize(v0, (1.0 - self.c) * s0))
        if self.ibr is not None:
            parts.append(self.ibr.initialize(v0, self.c * s0))
        return np.concatenate(parts) if parts else np.zeros(0)

    def finalize_measurement(self, x, i_ext0: complex):
        if self.ibr is not None and self.ibr.controller is not None:
            self.ibr.finalize_measurement(x[self._sl_ibr], i_ext0)

    def derivatives(self, x, v: complex, ctx) -> np.ndarray:
        dx = np.empty(self.n_states)
        if self.sm is not None:
            dx[self._sl_sm] = self.sm.derivatives(x[self._sl_sm], v, ctx)
        if self.ibr is not None:
            dx[self._sl_ibr] = self.ibr.derivatives(x[self._sl_ibr], v, ctx)
        return dx

    def network_contrib(self, x):
        y1, y2, i_src = 0j, 0j, 0j
        if self.sm is not None:
            y1, y2, i_src = self.sm.network_contrib(x[self._sl_sm])
        if self.ibr is not None:
            i_src += self.ibr.current(x[self._sl_ibr], 0j)
        return y1, y2, i_src

    def current(self, x, v: complex) -> complex:
        i = 0j
        if self.sm is not None:
            i += self.sm.current(x[self._sl_sm], v)
        if self.ibr is not None:
            i += self.ibr.current(x[self._sl_ibr], v)
        return i

    def part_current(self, x, v: complex, part: str) -> complex:
        if part == "total":
            return self.current(x, v)
        if part == "sm":
            if self.sm is None:
                raise ConfigurationError(f"device {self.id} has no machine part")
            return self.sm.current(x[self._sl_sm], v)
        if part == "ibr":
            if self.ibr is None:
                raise ConfigurationError(f"device {self.id} has no converter part")
            return self.ibr.current(x[self._sl_ibr], v)
        raise ConfigurationError(f"unknown device part {part!r}")

    def power(self, x, v: complex) -> complex:
        return v * np.conj(self.current(x, v))

    @property
    def has_machine(self) -> bool:
        return self.sm is not None

    def speed(self, x) -> float:
        return self.sm.speed(x[self._sl_sm])

    def inertia_weight(self) -> float:
        return self.sm.inertia_weight() if self.sm is not None else 0.0

    def mech_power(self, x) -> float:
        return self.sm.mech_power(x[self._sl_sm])

    def field_voltage(self, x) -> float:
        return self.sm.field_voltage(x[self._sl_sm])
