"""Newton-Raphson power flow in polar coordinates.

Used once per run to fix the pre-disturbance operating point. Loads enter as
PQ injections here; their constant-impedance conversion happens afterwards,
at the solved voltages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InitializationError

MAX_ITERATIONS = 50
TOLERANCE = 1e-8


@dataclass
class PowerFlowResult:
    v: np.ndarray               # complex bus voltages
    s_injection: np.ndarray     # net complex power injection per bus
    iterations: int
    max_mismatch: float


def newton_power_flow(ybus, slack: int, v_slack: float, pv: dict, s_fixed,
                      tol: float = TOLERANCE, max_iter: int = MAX_ITERATIONS) -> PowerFlowResult:
    """Solve the power flow.

    ybus       admittance matrix without loads (lines + fixed shunts)
    slack      slack bus index; angle reference, magnitude v_slack
    pv         {bus index: (p_set, v_set)} for PV buses
    s_fixed    complex array of fixed PQ injections (loads negative)
    """
    y = ybus.toarray() if sp.issparse(ybus) else np.asarray(ybus, dtype=complex)
    n = y.shape[0]
    g, b = y.real, y.imag

    vm = np.ones(n)
    va = np.zeros(n)
    vm[slack] = v_slack
    p_spec = np.array([s.real for s in s_fixed], dtype=float)
    q_spec = np.array([s.imag for s in s_fixed], dtype=float)
    for i, (p_set, v_set) in pv.items():
        vm[i] = v_set
        p_spec[i] += p_set

    pv_idx = sorted(pv.keys())
    pq_idx = [i for i in range(n) if i != slack and i not in pv]
    ang_idx = pv_idx + pq_idx           # unknown angles
    mag_idx = pq_idx                    # unknown magnitudes

    def injections(vm, va):
        v = vm * np.exp(1j * va)
        s = v * np.conj(y @ v)
        return s.real, s.imag

    it = 0
    while True:
        p_calc, q_calc = injections(vm, va)
        dp = p_spec[ang_idx] - p_calc[ang_idx]
        dq = q_spec[mag_idx] - q_calc[mag_idx]
        mismatch = np.concatenate([dp, dq])
        max_mis = np.linalg.norm(mismatch, ord=np.inf) if mismatch.size else 0.0
        if max_mis < tol:
            break
        if it >= max_iter:
            raise InitializationError(
                f"power flow did not converge in {max_iter} iterations "
                f"(max mismatch {max_mis:.3e} pu)")
        jac = _jacobian(g, b, vm, va, ang_idx, mag_idx)
        dx = np.linalg.solve(jac, mismatch)
        va[ang_idx] += dx[:len(ang_idx)]
        vm[mag_idx] += dx[len(ang_idx):]
        it += 1

    v = vm * np.exp(1j * va)
    s_inj = v * np.conj(y @ v)
    return PowerFlowResult(v=v, s_injection=s_inj, iterations=it, max_mismatch=max_mis)


def _jacobian(g, b, vm, va, ang_idx, mag_idx):
    """Standard polar power-flow Jacobian [[dP/da, dP/dV], [dQ/da, dQ/dV]]."""
    n = len(vm)
    v = vm * np.exp(1j * va)
    y = g + 1j * b
    i_inj = y @ v
    s = v * np.conj(i_inj)

    # dS/da and dS/d|V| in complex form (standard matrix identities)
    dv = np.diag(v)
    di = np.diag(i_inj)
    ds_da = 1j * dv @ (np.conj(di) - np.conj(y) @ np.conj(dv))
    ds_dv = dv @ np.conj(y) @ np.diag(np.exp(-1j * va)) + np.diag(np.conj(i_inj) * np.exp(1j * va))

    j11 = ds_da.real[np.ix_(ang_idx, ang_idx)]
    j12 = ds_dv.real[np.ix_(ang_idx, mag_idx)]
    j21 = ds_da.imag[np.ix_(mag_idx, ang_idx)]
    j22 = ds_dv.imag[np.ix_(mag_idx, mag_idx)]
    return np.block([[j11, j12], [j21, j22]])
