"""Post-event oscillation metrics for recorded channels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DampingMetrics:
    peak_to_peak: float
    peak_ratio: float | None     # None when fewer than two same-sign peaks exist
    settling_time: float

    def as_dict(self):
        return {
            "peak_to_peak": self.peak_to_peak,
            "peak_ratio": self.peak_ratio,
            "settling_time": self.settling_time,
        }


def coi_frequency(speeds, weights) -> float:
    """Inertia-weighted mean speed; weights are H_i * S_i products."""
    speeds = np.asarray(speeds, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        raise ValueError("no in-service machine inertia for the COI frequency")
    return float(np.dot(speeds, weights) / total)


def _local_extrema(d, floor):
    """Indices of strict local extrema of d with magnitude above floor."""
    idx = []
    for i in range(1, len(d) - 1):
        if abs(d[i]) < floor:
            continue
        if (d[i] - d[i - 1]) * (d[i + 1] - d[i]) < 0:
            idx.append(i)
    return idx


def damping_metrics(t, y, event_time: float = 0.0) -> DampingMetrics:
    """Quantify the post-event transient of one channel.

    peak_to_peak    max - min after the event;
    peak_ratio      deviation magnitude of the second same-sign peak over the
                    first one (< 1 means the oscillation decays);
    settling_time   time after the event from which the channel stays inside
                    a band of +/-2% of the maximum post-event deviation
                    around the final value.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = t >= event_time - 1e-12
    t, y = t[mask], y[mask]
    if len(y) < 3:
        return DampingMetrics(0.0, None, 0.0)

    peak_to_peak = float(y.max() - y.min())
    d = y - y[-1]
    dmax = np.abs(d).max()
    if dmax < 1e-12:
        return DampingMetrics(peak_to_peak, None, 0.0)

    floor = 1e-4 * dmax
    extrema = _local_extrema(d, floor)
    peak_ratio = None
    if extrema:
        first = extrema[0]
        for k in extrema[1:]:
            if np.sign(d[k]) == np.sign(d[first]):
                peak_ratio = float(abs(d[k]) / abs(d[first]))
                break

    band = 0.02 * dmax
    outside = np.where(np.abs(d) > band)[0]
    if outside.size == 0:
        settling = 0.0
    elif outside[-1] == len(d) - 1:
        settling = float(t[-1] - t[0])      # never settles inside the window
    else:
        settling = float(t[outside[-1] + 1] - t[0])
    return DampingMetrics(peak_to_peak, peak_ratio, settling)


def max_deviation(t, y, t_from: float = 0.0) -> float:
    """Largest absolute excursion from the initial value after t_from."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    base = y[0]
    mask = t >= t_from - 1e-12
    return float(np.abs(y[mask] - base).max())


def window_correlation(t, y1, y2, t_start: float, t_end: float) -> float:
    """Pearson correlation of two channels over a time window."""
    t = np.asarray(t, dtype=float)
    mask = (t >= t_start - 1e-12) & (t <= t_end + 1e-12)
    a = np.asarray(y1, dtype=float)[mask]
    b = np.asarray(y2, dtype=float)[mask]
    if len(a) < 3 or np.std(a) < 1e-15 or np.std(b) < 1e-15:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])
