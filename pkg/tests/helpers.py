"""Shared test utilities: brute-force metric oracles and small data builders.

The oracles deliberately avoid the library's code paths (plain Python
loops, hand-solved normal equations) so they stay independent of what
they check.
"""
from __future__ import annotations

import math

import numpy as np

from loadcast.ingest import LoadSeries, TempSeries
from loadcast.timebase import STEP_MINUTES, instant_from_iso


# ---------------------------------------------------------------------------
# oracles


def oracle_mse(actual, predicted) -> float:
    return sum((a - p) ** 2 for a, p in zip(actual, predicted)) / len(actual)


def oracle_mape(actual, predicted) -> float:
    return 100.0 * sum(abs(a - p) / a for a, p in zip(actual, predicted)) / len(actual)


def oracle_pearson(x, y) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def oracle_percentile(values, q) -> float:
    """Linear interpolation between order statistics."""
    xs = sorted(values)
    if len(xs) == 1:
        return float(xs[0])
    pos = (len(xs) - 1) * q / 100.0
    lo = math.floor(pos)
    hi = math.ceil(pos)
    frac = pos - lo
    return xs[lo] * (1 - frac) + xs[hi] * frac


def oracle_cqv(values) -> float:
    q1 = oracle_percentile(values, 25)
    q3 = oracle_percentile(values, 75)
    return (q3 - q1) / (q3 + q1)


def _solve_cramer(A, b):
    A = [list(row) for row in A]
    n = len(A)
    if n == 2:
        det = A[0][0] * A[1][1] - A[0][1] * A[1][0]
        return [
            (b[0] * A[1][1] - A[0][1] * b[1]) / det,
            (A[0][0] * b[1] - b[0] * A[1][0]) / det,
        ]
    if n == 3:
        def det3(m):
            return (
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            )

        det = det3(A)
        out = []
        for col in range(3):
            M = [row[:] for row in A]
            for r in range(3):
                M[r][col] = b[r]
            out.append(det3(M) / det)
        return out
    raise ValueError("only 2x2 and 3x3 systems supported")


def oracle_polyfit_r2(x, y, order) -> float:
    """Least-squares polynomial r^2 via hand-built normal equations and Cramer's rule."""
    n = len(x)
    size = order + 1
    A = [[sum(xi ** (i + j) for xi in x) for j in range(size)] for i in range(size)]
    b = [sum((xi**i) * yi for xi, yi in zip(x, y)) for i in range(size)]
    coeffs = _solve_cramer(A, b)
    ss_res = sum((yi - sum(c * xi**i for i, c in enumerate(coeffs))) ** 2 for xi, yi in zip(x, y))
    my = sum(y) / n
    ss_tot = sum((yi - my) ** 2 for yi in y)
    r2 = 1.0 - ss_res / ss_tot
    return min(max(r2, 0.0), 1.0)


# ---------------------------------------------------------------------------
# data builders


def make_load(values, start="2015-10-01T00:00", station_id="test", gaps=()):
    values = np.asarray(values, dtype=np.float64)
    t0 = instant_from_iso(start)
    times = t0 + STEP_MINUTES * np.arange(values.size, dtype=np.int64)
    return LoadSeries(station_id, times, values, np.asarray(list(gaps), dtype=np.int64))


def make_temp(values, start="2015-10-01T00:00", location=None):
    values = np.asarray(values, dtype=np.float64)
    t0 = instant_from_iso(start)
    times = t0 + STEP_MINUTES * np.arange(values.size, dtype=np.int64)
    return TempSeries(location, times, values)


def trim_to_season_blocks(load: LoadSeries, years, days=45) -> LoadSeries:
    """Keep the first ``days`` days of each season starting in ``years``."""
    keep = np.zeros(len(load), dtype=bool)
    for y in years:
        t0 = instant_from_iso(f"{y}-10-01T00:00")
        keep |= (load.times >= t0) & (load.times < t0 + days * 1440)
    return LoadSeries(load.station_id, load.times[keep], load.values[keep])


def rel_err(a, b, floor=1e-12) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)
