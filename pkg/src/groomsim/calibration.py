"""Fitting the cost function (alpha, beta) to an observed N-m law, and alpha sweeps.

All simulations for a given target reuse the same replicate seeds, so the
objective is a deterministic function of (alpha, beta) and Nelder-Mead can
work on it directly.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, TextIO, Tuple

import numpy as np
from scipy import optimize

from groomsim.model import SimConfig, even_q_values, run_simulation
from groomsim.stats import EstimationError, fit_nm_arrays, fit_power_law

log = logging.getLogger(__name__)

ALPHA_BOUNDS = (0.0, 8.0)
BETA_BOUNDS = (0.01, 2.0)
ALPHA_GRID = np.concatenate([[0.0], np.geomspace(0.05, 8.0, 7)])
BETA_GRID = np.geomspace(0.05, 1.0, 8)


def derive_seed(master: int, *key: int) -> int:
    """64-bit seed for a (replicate, ...) index, depending only on the key."""
    ss = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class CalibrationTarget:
    a: float
    b: float
    u_fixed: float
    steps: int
    r0: float
    groomers: int = 200
    q_values: tuple = ()
    replicates: int = 2
    seed: int = 0
    groomee_pool: Optional[int] = None

    def __post_init__(self):
        if not self.u_fixed > 0:
            raise ValueError("u_fixed must be positive")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.q_values:
            object.__setattr__(self, "q_values", even_q_values(self.groomers))

    def replicate_seeds(self) -> List[int]:
        return [derive_seed(self.seed, r) for r in range(self.replicates)]

    def sim_config(self, alpha: float, beta: float, seed: int) -> SimConfig:
        return SimConfig(alpha=alpha, beta=beta, r0=self.r0, steps=self.steps,
                         groomers=self.groomers, q_values=self.q_values,
                         groomee_pool=self.groomee_pool, seed=seed)


def squared_residuals(alpha: float, beta: float, target: CalibrationTarget,
                      threads: int = 1) -> List[np.ndarray]:
    """Per-replicate arrays of squared distances from the target line."""
    if alpha < 0 or not beta > 0:
        raise ValueError("need alpha >= 0 and beta > 0")
    intercept = target.b * math.log(target.u_fixed)
    out = []
    for seed in target.replicate_seeds():
        res = run_simulation(target.sim_config(alpha, beta, seed), threads=threads)
        N, m, _ = res.nmu()
        out.append((np.log(N) - (-target.a * np.log(m) + intercept)) ** 2)
    if not sum(len(r) for r in out):
        raise EstimationError("simulation produced no groomers with relationships")
    return out


def objective(alpha: float, beta: float, target: CalibrationTarget, threads: int = 1) -> float:
    """Mean squared error between simulated (log m, log N) and the target line."""
    return float(np.mean(np.concatenate(squared_residuals(alpha, beta, target, threads))))


def objective_se(alpha: float, beta: float, target: CalibrationTarget, threads: int = 1) -> float:
    """Monte-Carlo standard error of :func:`objective` across replicates."""
    per_rep = [r.mean() for r in squared_residuals(alpha, beta, target, threads)]
    if len(per_rep) < 2:
        return float("nan")
    return float(np.std(per_rep, ddof=1) / math.sqrt(len(per_rep)))


@dataclass
class CalibrationResult:
    alpha_hat: float
    beta_hat: float
    objective: float
    evaluations: int
    trace: List[Tuple[float, float, float, str]] = field(default_factory=list)
    converged: bool = False

    def write_csv(self, stream: TextIO) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(("alpha", "beta", "mse", "phase"))
        for a, b, v, phase in self.trace:
            w.writerow((repr(a), repr(b), repr(v), phase))
        w.writerow((repr(self.alpha_hat), repr(self.beta_hat), repr(self.objective),
                    "final" if self.converged else "final-unconverged"))


class _BudgetExhausted(Exception):
    pass


def calibrate(
    target: CalibrationTarget,
    budget: int = 200,
    xatol: float = 1e-3,
    alpha_grid: Sequence[float] = ALPHA_GRID,
    beta_grid: Sequence[float] = BETA_GRID,
    threads: int = 1,
) -> CalibrationResult:
    """Grid search over (alpha, beta), then Nelder-Mead from the best grid point.

    ``budget`` caps the Nelder-Mead evaluations. The search stops once the
    simplex is smaller than ``xatol`` in every coordinate; if the budget runs
    out first (or is below the 3 points a simplex needs) the best point seen
    is returned with ``converged=False``.
    """
    trace: List[Tuple[float, float, float, str]] = []

    def evaluate(alpha, beta, phase):
        v = objective(alpha, beta, target)
        trace.append((float(alpha), float(beta), v, phase))
        return v

    points = [(a, b) for a in alpha_grid for b in beta_grid]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(lambda p: objective(p[0], p[1], target), points))
        trace.extend((float(a), float(b), v, "grid") for (a, b), v in zip(points, values))
    else:
        for a, b in points:
            evaluate(a, b, "grid")
    best = min(trace, key=lambda r: r[2])
    log.info("best grid point alpha=%.4g beta=%.4g mse=%.4g", *best[:3])

    converged = False
    if budget >= 3:
        a0, b0 = best[0], best[1]
        da = max(0.1 * a0, 0.05)
        db = 0.1 * b0
        a1 = a0 + da if a0 + da <= ALPHA_BOUNDS[1] else a0 - da
        b1 = b0 + db if b0 + db <= BETA_BOUNDS[1] else b0 - db
        simplex = np.array([[a0, b0], [a1, b0], [a0, b1]])
        used = [0]

        def f(x):
            # points outside the box score +inf instead of being clipped onto it;
            # clipping collapses the simplex onto the bound face
            if not (ALPHA_BOUNDS[0] <= x[0] <= ALPHA_BOUNDS[1] and BETA_BOUNDS[0] <= x[1] <= BETA_BOUNDS[1]):
                return np.inf
            if used[0] >= budget:
                raise _BudgetExhausted
            used[0] += 1
            return evaluate(x[0], x[1], "nelder-mead")

        try:
            res = optimize.minimize(
                f, simplex[0], method="Nelder-Mead",
                options=dict(initial_simplex=simplex, xatol=xatol, fatol=np.inf,
                             maxfev=10 * budget),
            )
            converged = bool(res.status == 0)
        except _BudgetExhausted:
            converged = False

    best = min(trace, key=lambda r: r[2])
    return CalibrationResult(alpha_hat=best[0], beta_hat=best[1], objective=best[2],
                             evaluations=len(trace), trace=trace, converged=converged)


# -- alpha sweeps ------------------------------------------------------------

@dataclass(frozen=True)
class SweepSettings:
    beta: float
    r0: float
    steps: int
    groomers: int = 200
    replicates: int = 10
    seed: int = 0
    plexp_xmin: int = 10


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    a_mean: float
    a_sd: float
    plexp_mean: float
    plexp_sd: float
    a_values: tuple = field(repr=False, default=())
    plexp_values: tuple = field(repr=False, default=())


def _sweep_cell(alpha: float, i: int, r: int, settings: SweepSettings):
    cfg = SimConfig(alpha=alpha, beta=settings.beta, r0=settings.r0, steps=settings.steps,
                    groomers=settings.groomers, seed=derive_seed(settings.seed, i, r))
    res = run_simulation(cfg)
    a = fit_nm_arrays(*res.nmu()).a
    plexp = fit_power_law(res.all_strengths(), x_min=settings.plexp_xmin).exponent
    return a, plexp


def sweep_alpha(alphas: Sequence[float], settings: SweepSettings, threads: int = 1) -> List[SweepRow]:
    """Effect of the cost gradient on the N-m exponent and the strength tail.

    Each (alpha index, replicate) cell has its own seed, so rows do not depend
    on the order cells are evaluated in. The power law is fitted to the tail
    ``d >= plexp_xmin``.
    """
    if len(alphas) < 1:
        raise ValueError("need at least one alpha")
    cells = [(a, i, r) for i, a in enumerate(alphas) for r in range(settings.replicates)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _sweep_cell(*c, settings), cells))
    else:
        results = [_sweep_cell(*c, settings) for c in cells]
    rows = []
    R = settings.replicates
    for i, alpha in enumerate(alphas):
        chunk = np.array(results[i * R:(i + 1) * R])
        ddof = 1 if R > 1 else 0
        rows.append(SweepRow(
            alpha=float(alpha),
            a_mean=float(chunk[:, 0].mean()), a_sd=float(chunk[:, 0].std(ddof=ddof)),
            plexp_mean=float(chunk[:, 1].mean()), plexp_sd=float(chunk[:, 1].std(ddof=ddof)),
            a_values=tuple(chunk[:, 0].tolist()), plexp_values=tuple(chunk[:, 1].tolist()),
        ))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("alpha", "a_mean", "a_sd", "plexp_mean", "plexp_sd"))
    for r in rows:
        w.writerow((repr(r.alpha), repr(r.a_mean), repr(r.a_sd), repr(r.plexp_mean), repr(r.plexp_sd)))
