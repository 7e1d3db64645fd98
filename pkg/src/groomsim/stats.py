"""Estimators for tie-strength logs.

* discrete power-law MLE for the strength distribution
* attachment probability p(d): chance a tie of strength d is groomed next day
* the no-intercept regression ``log N = -a log m + b log u``
* communication volume tables keyed by strength or by density d/t
"""

from __future__ import annotations

import csv
import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Sequence, TextIO, Tuple

import mpmath
import numpy as np
from scipy import optimize, special, stats

from groomsim.ledger import InteractionEvent, RelationshipLedger, UserSummary, build_ledger


class EstimationError(ValueError):
    """The data cannot support the requested estimate."""


def strength_level(d: float) -> int:
    """Integer level of a strength; fractional simulated strengths are floored."""
    return int(math.floor(d + 1e-9))


# -- power law ---------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    x_min: int
    n_tail: int
    loglik: float
    estimator: str = "discrete_mle"


MIN_TAIL = 10


# mpmath keeps its working precision in a process-wide context that zeta
# temporarily raises, so concurrent calls from threads must not interleave
_MP_LOCK = threading.Lock()


def _mean_log_model(gamma: float, x_min: int) -> float:
    """E[log X] under the discrete power law, i.e. -zeta'(gamma, x_min) / zeta(gamma, x_min)."""
    with _MP_LOCK:
        z = mpmath.zeta(gamma, x_min)
        dz = mpmath.zeta(gamma, x_min, 1)
    return float(-dz / z)


def power_law_score(gamma: float, x, x_min: int = 1) -> float:
    """Per-sample derivative of the log-likelihood in the exponent."""
    x = np.asarray(x, dtype=float)
    tail = x[x >= x_min]
    return _mean_log_model(gamma, x_min) - float(np.mean(np.log(tail)))


def fit_power_law(strengths: Sequence[float], x_min: int = 1) -> PowerLawFit:
    """Discrete maximum-likelihood exponent of ``P(d) ~ d^-gamma`` for d >= x_min.

    Values are floored to integers first. The MLE solves
    ``E_gamma[log X] = mean(log x)`` which has a unique root whenever the tail
    is not concentrated on ``x_min``.
    """
    if x_min < 1:
        raise ValueError("x_min must be >= 1")
    x = np.floor(np.asarray(strengths, dtype=float) + 1e-9)
    tail = x[x >= x_min]
    n = len(tail)
    if n < MIN_TAIL:
        raise EstimationError(f"need at least {MIN_TAIL} values >= {x_min}, got {n}")
    if np.all(tail == tail[0]):
        raise EstimationError("degenerate sample: all tail values are equal")
    target = float(np.mean(np.log(tail)))

    def score(g):
        return _mean_log_model(g, x_min) - target

    lo, hi = 1.0 + 1e-6, 2.0
    while score(hi) > 0:
        lo, hi = hi, hi * 2
        if hi > 1e3:
            raise EstimationError("exponent diverged")
    gamma = optimize.brentq(score, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps)
    loglik = -gamma * n * target - n * math.log(special.zeta(gamma, x_min))
    return PowerLawFit(exponent=gamma, x_min=int(x_min), n_tail=n, loglik=loglik)


# -- attachment probability --------------------------------------------------

@dataclass(frozen=True)
class AttachmentCurve:
    levels: np.ndarray
    p: np.ndarray
    n: np.ndarray
    window_days: int

    def rows(self) -> List[Tuple[int, float, int]]:
        return list(zip(self.levels.tolist(), self.p.tolist(), self.n.tolist()))

    def restrict(self, min_n: int) -> "AttachmentCurve":
        keep = self.n >= min_n
        return AttachmentCurve(self.levels[keep], self.p[keep], self.n[keep], self.window_days)

    def linear_r2(self) -> float:
        """R^2 of a least-squares line through (d, p)."""
        if len(self.levels) < 3:
            raise EstimationError("need at least 3 levels for a linear fit")
        return float(stats.linregress(self.levels, self.p).rvalue ** 2)


def attachment_probability(
    events: Iterable[InteractionEvent], ledger: RelationshipLedger, window_days: int = 30
) -> AttachmentCurve:
    """Estimate p(d) over the first ``window_days`` days of the log.

    Every pair contributes one state per day from its first grooming day up to
    the day before the window ends: its running strength after that day's
    events. The state counts as a success if the pair is groomed the next day.
    Running strength grows by one per active day, or by the event volume for
    ledgers in ``volume`` mode.
    """
    if window_days < 2:
        raise ValueError("window must span at least 2 days")
    if window_days > ledger.t_obs:
        raise ValueError(f"window {window_days} exceeds observation period {ledger.t_obs}")
    events = list(events)
    if not events:
        raise EstimationError("no events")
    start = min(e.day for e in events)
    end = start + window_days - 1

    by_pair: Dict[tuple, Dict[int, float]] = defaultdict(dict)
    for e in events:
        if e.day <= end:
            per_day = by_pair[(e.groomer, e.groomee)]
            per_day[e.day] = per_day.get(e.day, 0.0) + e.volume
    if not by_pair:
        raise EstimationError("window holds no events")

    trials: Dict[int, int] = defaultdict(int)
    hits: Dict[int, int] = defaultdict(int)
    volume_mode = ledger.mode == "volume"
    for per_day in by_pair.values():
        days = sorted(per_day)
        running = 0.0
        idx = 0
        for t in range(days[0], end):
            if idx < len(days) and days[idx] == t:
                running += per_day[t] if volume_mode else 1
                idx += 1
            level = strength_level(running)
            trials[level] += 1
            if idx < len(days) and days[idx] == t + 1:
                hits[level] += 1
    if not trials:
        raise EstimationError("window holds no pair-day states")
    levels = np.array(sorted(trials))
    n = np.array([trials[k] for k in levels])
    p = np.array([hits[k] / trials[k] for k in levels])
    return AttachmentCurve(levels=levels, p=p, n=n, window_days=window_days)


# -- N-m-u regression --------------------------------------------------------

@dataclass(frozen=True)
class RegressionResult:
    a: float
    b: float
    se_a: float
    se_b: float
    t_a_vs_1: float
    t_b_vs_0: float
    p_a_vs_1: float
    p_b_vs_0: float
    adj_r2: float
    sigma: float
    n: int
    residuals: np.ndarray = field(repr=False, compare=False)

    def rows(self):
        return [
            ("a", self.a, self.se_a, self.t_a_vs_1, self.p_a_vs_1),
            ("b", self.b, self.se_b, self.t_b_vs_0, self.p_b_vs_0),
        ]


def fit_nm_arrays(N, m, u) -> RegressionResult:
    """OLS of log N on (-log m, log u) without intercept.

    Standard errors use the residual variance with n - 2 degrees of freedom.
    The t statistic for ``a`` is taken against 1 (the cost-independent value)
    and p-values are two-sided. Adjusted R^2 is measured about zero, as is
    usual for models without an intercept.
    """
    N = np.asarray(N, dtype=float)
    m = np.asarray(m, dtype=float)
    u = np.asarray(u, dtype=float)
    n = len(N)
    if n < 3:
        raise EstimationError(f"need at least 3 users, got {n}")
    if np.any(N <= 0) or np.any(m <= 0) or np.any(u <= 0):
        raise EstimationError("N, m and u must be positive")
    y = np.log(N)
    X = np.column_stack([-np.log(m), np.log(u)])
    if np.linalg.matrix_rank(X) < 2 or np.linalg.cond(X) > 1e12:
        raise EstimationError("singular design: regressors are collinear")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    df = n - 2
    rss = float(resid @ resid)
    sigma2 = rss / df if df > 0 else 0.0
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    a, b = float(coef[0]), float(coef[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        t_a = (a - 1.0) / se[0]
        t_b = b / se[1]
    p_a = float(2 * stats.t.sf(abs(t_a), df)) if df > 0 else float("nan")
    p_b = float(2 * stats.t.sf(abs(t_b), df)) if df > 0 else float("nan")
    tss = float(y @ y)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * n / df if df > 0 else r2
    return RegressionResult(
        a=a, b=b, se_a=float(se[0]), se_b=float(se[1]),
        t_a_vs_1=float(t_a), t_b_vs_0=float(t_b), p_a_vs_1=p_a, p_b_vs_0=p_b,
        adj_r2=adj, sigma=math.sqrt(sigma2), n=n, residuals=resid,
    )


def fit_nm_regression(summaries: Sequence[UserSummary]) -> RegressionResult:
    return fit_nm_arrays([s.N for s in summaries], [s.m for s in summaries],
                         [s.u for s in summaries])


def regression_line(result, u_fixed: float) -> Callable:
    """``log m -> log N`` along the fitted law with u held at ``u_fixed``.

    ``result`` may be a :class:`RegressionResult` or any object with ``a`` and
    ``b`` attributes.
    """
    if not u_fixed > 0:
        raise ValueError("u_fixed must be positive")
    a, b = result.a, result.b
    intercept = b * math.log(u_fixed)

    def line(log_m):
        return -a * np.asarray(log_m, dtype=float) + intercept

    return line


# -- volume tables -----------------------------------------------------------

@dataclass(frozen=True)
class VolumeRow:
    key: float
    percentile: str
    value: float
    n: int


@dataclass
class VolumeTable:
    rows: List[VolumeRow]
    min_n: int

    def get(self, key, percentile) -> float:
        for r in self.rows:
            if r.key == key and r.percentile == str(percentile):
                return r.value
        raise KeyError((key, percentile))

    def keys(self, percentile=50) -> List[float]:
        return [r.key for r in self.rows if r.percentile == str(percentile)]

    def series(self, percentile=50) -> Dict[float, float]:
        return {r.key: r.value for r in self.rows if r.percentile == str(percentile)}


def _daily_volumes(events: Iterable[InteractionEvent], last_day=None) -> Dict[tuple, Dict[int, float]]:
    out: Dict[tuple, Dict[int, float]] = defaultdict(dict)
    seen = False
    for e in events:
        if last_day is not None and e.day > last_day:
            continue
        seen = True
        per_day = out[(e.groomer, e.groomee)]
        per_day[e.day] = per_day.get(e.day, 0.0) + e.volume
    if not seen:
        raise EstimationError("no volumes present")
    return out


def _table(groups: Dict[float, List[float]], percentiles, min_n) -> VolumeTable:
    rows = []
    for key in sorted(groups):
        v = np.asarray(groups[key], dtype=float)
        if len(v) <= min_n:
            continue
        for pct in percentiles:
            rows.append(VolumeRow(key, str(pct), float(np.percentile(v, pct)), len(v)))
    return VolumeTable(rows, min_n)


def volume_by_strength(
    events: Iterable[InteractionEvent],
    ledger: RelationshipLedger,
    percentiles=(25, 50, 75),
    min_n: int = 20,
) -> VolumeTable:
    """Percentiles of per-day volume grouped by each pair's final strength level.

    Groups need strictly more than ``min_n`` pair-days to be reported.
    """
    daily = _daily_volumes(events)
    groups: Dict[float, List[float]] = defaultdict(list)
    for pair, per_day in daily.items():
        d = ledger.strength.get(pair)
        if d is None:
            continue
        groups[strength_level(d)].extend(per_day.values())
    return _table(groups, percentiles, min_n)


def volume_by_density(
    events: Iterable[InteractionEvent],
    ledger: RelationshipLedger,
    period_fractions=(1.0, 0.9, 0.8),
    min_n: int = 20,
    bucket_width: float | None = None,
    percentiles=(50,),
) -> Dict[float, VolumeTable]:
    """Per-day volume by grooming density d/t for truncated observation periods.

    For each fraction f the log is cut to its first ``ceil(f * T_obs)`` days,
    strengths are recomputed on that window and each pair is bucketed by
    ``d / t``. Buckets have fixed width, ``1 / T_obs`` by default, and are
    keyed by their lower edge.
    """
    events = list(events)
    T = ledger.t_obs
    for f in period_fractions:
        if not 0 < f <= 1:
            raise ValueError(f"period fraction must be in (0, 1], got {f}")
    width = bucket_width if bucket_width is not None else 1.0 / T
    out = {}
    for f in period_fractions:
        t = math.ceil(f * T - 1e-9)
        cut = [e for e in events if e.day <= t]
        daily = _daily_volumes(cut)
        sub = build_ledger(cut, t_obs=t, mode=ledger.mode)
        groups: Dict[float, List[float]] = defaultdict(list)
        for pair, per_day in daily.items():
            d = sub.strength.get(pair)
            if d is None:
                continue
            idx = math.floor(d / t / width + 1e-9)
            groups[idx * width].extend(per_day.values())
        out[f] = _table(groups, percentiles, min_n)
    return out


# -- CSV export --------------------------------------------------------------

def write_powerlaw_csv(fit: PowerLawFit, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("exponent", "xmin", "n"))
    w.writerow((repr(fit.exponent), fit.x_min, fit.n_tail))


def write_attachment_csv(curve: AttachmentCurve, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("d", "p", "n"))
    for d, p, n in curve.rows():
        w.writerow((d, repr(p), n))


def write_regression_csv(result: RegressionResult, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("coef", "estimate", "se", "t", "p"))
    for row in result.rows():
        w.writerow((row[0],) + tuple(repr(float(x)) for x in row[1:]))


def write_volume_csv(table: VolumeTable, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("key", "percentile", "value", "n"))
    for r in table.rows:
        w.writerow((repr(float(r.key)), r.percentile, repr(r.value), r.n))
