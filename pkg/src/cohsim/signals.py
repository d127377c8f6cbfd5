"""Measurement chain: complex-frequency estimation, communication delay and
Ornstein-Uhlenbeck measurement noise.

The complex frequency of a phasor x(t) = |x| e^{j theta} is

    eta(t) = d(ln|x|)/dt + j d(theta)/dt = rho + j omega,

with rho the instantaneous bandwidth (1/s) and omega the instantaneous
angular-frequency deviation from the synchronous frame (rad/s). The
estimator tracks ln|x| through a washout filter and the phase through a
PLL-style loop; both channels integrate their own outputs exactly, which
makes the integral of the estimate match the endpoint change of
ln|x| + j theta up to the final tracking error.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import SolveError

MIN_MAGNITUDE = 1e-6


@dataclass
class CfEstimate:
    rho: float      # 1/s
    omega: float    # rad/s, deviation from the synchronous frame


class CfEstimator:
    """Causal complex-frequency estimator with filter time constant tau_f.

    Magnitude channel: washout s/(1 + s tau_f) on ln|x| (state z).
    Phase channel: critically damped tracking loop with natural frequency
    1/tau_f (states theta_t, om_i):

        eps = sin(arg(x) - theta_t)
        d(theta_t)/dt = kp*eps + om_i,   d(om_i)/dt = ki*eps

    Both channels have unit DC gain on the derivative they estimate.
    """

    def __init__(self, tau_f: float = 0.02, kp: float = None, ki: float = None):
        if tau_f <= 0:
            raise ValueError("tau_f must be positive")
        self.tau_f = tau_f
        self.kp = kp if kp is not None else 2.0 / tau_f
        self.ki = ki if ki is not None else 1.0 / tau_f ** 2
        self.z = 0.0
        self.theta_t = 0.0
        self.om_i = 0.0
        self._u = 0.0           # last ln|x| input
        self._eps = 0.0         # last phase error
        self.valid = True

    def reset(self, x0: complex):
        mag = max(abs(x0), MIN_MAGNITUDE)
        self.z = math.log(mag)
        self._u = self.z
        self.theta_t = cmath.phase(x0)
        self.om_i = 0.0
        self._eps = 0.0
        self.valid = True

    @property
    def estimate(self) -> CfEstimate:
        return CfEstimate(rho=(self._u - self.z) / self.tau_f,
                          omega=self.kp * self._eps + self.om_i)

    def step(self, x: complex, h: float) -> CfEstimate:
        """Advance one sample with trapezoidal updates of both channels."""
        if abs(x) < MIN_MAGNITUDE:
            self.valid = False
            return self.estimate        # hold the last estimate
        self.valid = True

        # magnitude channel, closed-form trapezoid of dz/dt = (u - z)/tau
        u1 = math.log(abs(x))
        a = h / (2.0 * self.tau_f)
        self.z = (self.z * (1 - a) + a * (self._u + u1)) / (1 + a)
        self._u = u1

        # phase channel, small Newton solve for the implicit angle update
        theta_x = cmath.phase(x)
        eps0 = self._eps
        om0 = self.om_i
        w0 = self.kp * eps0 + om0
        th = self.theta_t + h * w0      # predictor
        for _ in range(8):
            eps1 = math.sin(theta_x - th)
            om1 = om0 + 0.5 * h * self.ki * (eps0 + eps1)
            w1 = self.kp * eps1 + om1
            g = th - self.theta_t - 0.5 * h * (w0 + w1)
            dg = 1.0 + 0.5 * h * (self.kp + 0.5 * h * self.ki) * math.cos(theta_x - th)
            th -= g / dg
            if abs(g) < 1e-13:
                break
        eps1 = math.sin(theta_x - th)
        self.om_i = om0 + 0.5 * h * self.ki * (eps0 + eps1)
        self.theta_t = th
        self._eps = eps1
        return self.estimate


def estimate_cf(samples, estimator: CfEstimator, h: float):
    """Run the estimator over a phasor sample stream.

    Returns (rho, omega, valid) arrays; the estimator is reset on the first
    sample, so estimates start at zero for a settled signal.
    """
    samples = np.asarray(samples, dtype=complex)
    n = len(samples)
    rho = np.zeros(n)
    omega = np.zeros(n)
    valid = np.ones(n, dtype=bool)
    estimator.reset(samples[0])
    for k in range(1, n):
        est = estimator.step(samples[k], h)
        rho[k] = est.rho
        omega[k] = est.omega
        valid[k] = estimator.valid
    return rho, omega, valid


def cf_integral_identity(t, samples, eta) -> float:
    """Residual of the integral identity between a complex-frequency series
    and its phasor trajectory:

        | integral(eta dt) - (ln(x1/x0) + j*(theta1 - theta0)) |

    with the phase difference unwrapped along the trajectory. Serves as the
    independent oracle for the estimator.
    """
    t = np.asarray(t, dtype=float)
    samples = np.asarray(samples, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    mags = np.abs(samples)
    if np.any(mags < MIN_MAGNITUDE):
        raise SolveError("phasor magnitude crosses zero; integral identity undefined")
    integral = np.trapz(eta, t)
    dlog = math.log(mags[-1] / mags[0])
    theta = np.unwrap(np.angle(samples))
    return abs(integral - complex(dlog, theta[-1] - theta[0]))


class FirstOrderDelay:
    """First-order lag applied independently to both rectangular components."""

    def __init__(self, tau_d: float):
        if tau_d <= 0:
            raise ValueError("delay time constant must be positive")
        self.tau_d = tau_d
        self.state = 0j
        self._u = 0j

    def reset(self, x0: complex):
        self.state = x0
        self._u = x0

    def step(self, u: complex, h: float) -> complex:
        a = h / (2.0 * self.tau_d)
        self.state = (self.state * (1 - a) + a * (self._u + u)) / (1 + a)
        self._u = u
        return self.state


class OuNoise:
    """Mean-reverting Gaussian noise with exact discretization.

    n_{k+1} = n_k e^{-alpha h} + sigma sqrt(1 - e^{-2 alpha h}) xi_k,
    output = W * n. The stationary distribution of n is Normal(0, sigma^2)
    and the lag-1 autocorrelation at step h is e^{-alpha h}. Draws come from
    a counter-based Philox generator keyed on (seed, channel) so paths are
    bit-reproducible.
    """

    def __init__(self, sigma: float = 0.01, alpha: float = 10.0, w: float = 1.0,
                 seed: int = 0, channel: int = 0):
        self.sigma = sigma
        self.alpha = alpha
        self.w = w
        self.seed = seed
        self.channel = channel
        self.rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, channel], dtype=np.uint64)))
        self.n = 0.0

    def reset(self):
        self.rng = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.channel], dtype=np.uint64)))
        self.n = 0.0

    @property
    def output(self) -> float:
        return self.w * self.n

    def step(self, h: float) -> float:
        decay = math.exp(-self.alpha * h)
        diffusion = self.sigma * math.sqrt(max(0.0, 1.0 - decay * decay))
        self.n = self.n * decay + diffusion * self.rng.standard_normal()
        return self.w * self.n

    def sample_path(self, n_steps: int, h: float) -> np.ndarray:
        """Vectorized path of n_steps outputs, same recursion as step()."""
        decay = math.exp(-self.alpha * h)
        diffusion = self.sigma * math.sqrt(max(0.0, 1.0 - decay * decay))
        xi = self.rng.standard_normal(n_steps)
        path, zf = lfilter([diffusion], [1.0, -decay], xi, zi=[decay * self.n])
        self.n = path[-1]
        return self.w * path


def ou_step(noise: OuNoise, h: float) -> float:
    return noise.step(h)


def delay_step(delay: FirstOrderDelay, u: complex, h: float) -> complex:
    if delay.tau_d < h:
        warnings.warn(
            f"delay time constant {delay.tau_d} s is shorter than the step {h} s "
            "(under-resolved)", RuntimeWarning)
    return delay.step(u, h)
