"""Individual-based social grooming simulation.

Each step every groomer gets a fresh resource budget ``r0`` and spends it on
grooming acts until it is exhausted. An act either opens a tie with a stranger
(probability ``q``, cost ``beta``) or reinforces an existing tie chosen with
probability proportional to its strength (cost ``alpha * d / t + beta``). A
groomee is groomed at most once per step. When the remaining budget cannot
cover an act, the act is paid partially and the strength increment is scaled
by the fraction paid.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from functools import cached_property
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, TextIO

import numpy as np

from groomsim._kernel import run_groomer
from groomsim.config import ConfigError, dump_kv, parse_kv
from groomsim.ledger import InteractionEvent, RelationshipLedger, build_ledger
from groomsim.presets import get_preset

# relative slack below which a remaining budget counts as spent
BUDGET_TOL = 1e-12


class NoEligiblePartner(LookupError):
    pass


def grooming_cost(d: float, t: int, alpha: float, beta: float) -> float:
    """Cost of reinforcing a tie of current strength ``d`` at step ``t``."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    return alpha * d / t + beta


def select_partner(strengths: Dict, excluded: Set, draw: float):
    """Pick a key of ``strengths`` with probability proportional to its value.

    ``draw`` is a uniform on [0, 1); keys in ``excluded`` are skipped and the
    remaining weights renormalised.
    """
    total = 0.0
    for j, d in strengths.items():
        if j not in excluded:
            total += d
    if not total > 0.0:
        raise NoEligiblePartner
    threshold = draw * total
    acc = 0.0
    chosen = None
    for j, d in strengths.items():
        if j not in excluded:
            acc += d
            chosen = j
            if acc > threshold:
                break
    return chosen


def even_q_values(n: int) -> tuple:
    """``n`` evenly spaced probabilities on [0, 1]."""
    if n == 1:
        return (0.5,)
    return tuple(float(x) for x in np.linspace(0.0, 1.0, n))


@dataclass(frozen=True)
class SimConfig:
    alpha: float
    beta: float
    r0: float
    steps: int
    groomers: int
    q_values: tuple = ()
    groomee_pool: Optional[int] = None  # None: unbounded
    seed: int = 0

    def __post_init__(self):
        if not self.q_values:
            object.__setattr__(self, "q_values", even_q_values(self.groomers))
        object.__setattr__(self, "q_values", tuple(float(q) for q in self.q_values))
        checks = [
            ("alpha", math.isfinite(self.alpha) and self.alpha >= 0, "must be >= 0"),
            ("beta", math.isfinite(self.beta) and self.beta > 0, "must be > 0"),
            ("r0", math.isfinite(self.r0) and self.r0 > 0, "must be > 0"),
            ("steps", self.steps >= 1, "must be >= 1"),
            ("groomers", self.groomers >= 1, "must be >= 1"),
            ("q_values", len(self.q_values) == self.groomers,
             f"needs {self.groomers} values, got {len(self.q_values)}"),
            ("q_values", all(0.0 <= q <= 1.0 for q in self.q_values), "must lie in [0, 1]"),
            ("groomee_pool", self.groomee_pool is None or self.groomee_pool >= 1,
             "must be >= 1 or unbounded"),
            ("seed", 0 <= self.seed < 2**64, "must be a 64-bit unsigned integer"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)
        if self.actions_cap > 50_000_000:
            raise ConfigError("beta", "r0 / beta * steps is too large to simulate")

    @property
    def actions_per_step(self) -> int:
        """Upper bound on acts per groomer per step (each full act costs >= beta)."""
        return int(math.floor(self.r0 / self.beta)) + 2

    @property
    def actions_cap(self) -> int:
        return self.steps * self.actions_per_step

    def groomer_stream(self, i: int) -> np.ndarray:
        """Uniform draws for groomer ``i``; independent of the groomer count."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(i,))
        return np.random.Generator(np.random.PCG64(ss)).random(2 * self.actions_cap)

    def to_kv(self) -> Dict[str, str]:
        return {
            "alpha": repr(self.alpha),
            "beta": repr(self.beta),
            "r0": repr(self.r0),
            "steps": str(self.steps),
            "groomers": str(self.groomers),
            "q_values": ("even" if self.q_values == even_q_values(self.groomers)
                         else ",".join(repr(q) for q in self.q_values)),
            "groomee_pool": "unbounded" if self.groomee_pool is None else str(self.groomee_pool),
            "seed": str(self.seed),
        }

    def dumps(self) -> str:
        return dump_kv(self.to_kv())

    @classmethod
    def from_kv(cls, values: Dict[str, str]) -> "SimConfig":
        """Build a config from flat key/value strings.

        ``preset = <dataset>`` fills r0, steps, alpha and beta; explicit keys
        win. ``q_values`` takes a comma list or ``even`` (the default).
        """
        values = dict(values)
        known = {"alpha", "beta", "r0", "steps", "groomers", "q_values",
                 "groomee_pool", "seed", "preset"}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        if "preset" in values:
            try:
                p = get_preset(values.pop("preset"))
            except KeyError as exc:
                raise ConfigError("preset", str(exc)) from None
            for key in ("alpha", "beta", "r0", "steps"):
                values.setdefault(key, str(getattr(p, key)))
            values.setdefault("groomers", "200")

        def need(key, conv):
            if key not in values:
                raise ConfigError(key, "missing required key")
            try:
                return conv(values[key])
            except ValueError:
                raise ConfigError(key, f"cannot parse {values[key]!r}") from None

        groomers = need("groomers", int)
        q_text = values.get("q_values", "even").strip()
        if q_text == "even":
            q_values = even_q_values(groomers) if groomers >= 1 else ()
        else:
            try:
                q_values = tuple(float(x) for x in q_text.split(",") if x.strip())
            except ValueError:
                raise ConfigError("q_values", f"cannot parse {q_text!r}") from None
        pool_text = values.get("groomee_pool", "unbounded").strip()
        if pool_text == "unbounded":
            pool = None
        else:
            try:
                pool = int(pool_text)
            except ValueError:
                raise ConfigError("groomee_pool", f"cannot parse {pool_text!r}") from None
        return cls(
            alpha=need("alpha", float),
            beta=need("beta", float),
            r0=need("r0", float),
            steps=need("steps", int),
            groomers=groomers,
            q_values=q_values,
            groomee_pool=pool,
            seed=int(values.get("seed", "0")),
        )

    @classmethod
    def loads(cls, text: str) -> "SimConfig":
        return cls.from_kv(parse_kv(text))


def groomer_id(i: int) -> str:
    return f"g{i}"


def groomee_id(i: int, k: int) -> str:
    return f"g{i}.{k}"


@dataclass
class GroomerState:
    """Pure-Python groomer; the reference path for the compiled kernel."""

    id: int
    q: float
    resource: float = 0.0
    strengths: Dict[int, float] = field(default_factory=dict)

    def step(self, t: int, draws: Iterator[float], config: SimConfig) -> List[tuple]:
        """Spend one step's budget. Returns ``(partner, increment, paid)`` per act."""
        r0, alpha, beta = config.r0, config.alpha, config.beta
        pool = config.groomee_pool
        tol = BUDGET_TOL * r0
        self.resource = r0
        excluded: Set[int] = set()
        acts = []
        while self.resource > 0.0:
            x, y = next(draws), next(draws)
            can_new = pool is None or len(self.strengths) < pool
            try:
                partner = select_partner(self.strengths, excluded, y)
            except NoEligiblePartner:
                partner = None
            if partner is None and not can_new:
                break
            if (x < self.q and can_new) or partner is None:
                partner = len(self.strengths)
                self.strengths[partner] = 0.0
                cost = beta
            else:
                cost = grooming_cost(self.strengths[partner], t, alpha, beta)
            if self.resource < cost - tol:
                inc, paid = self.resource / cost, self.resource
            else:
                inc, paid = 1.0, cost
            self.strengths[partner] += inc
            self.resource -= paid
            if self.resource < tol:
                self.resource = 0.0
            excluded.add(partner)
            acts.append((partner, inc, paid))
        return acts


def _run_python(config: SimConfig, i: int):
    state = GroomerState(i, config.q_values[i])
    draws = iter(config.groomer_stream(i))
    steps, partners, incs = [], [], []
    spent = np.zeros(config.steps)
    actions = np.zeros(config.steps, np.int64)
    for t in range(1, config.steps + 1):
        for partner, inc, paid in state.step(t, draws, config):
            steps.append(t)
            partners.append(partner)
            incs.append(inc)
            spent[t - 1] += paid
            actions[t - 1] += 1
    d = np.array([state.strengths[k] for k in range(len(state.strengths))], dtype=float)
    return (d, np.array(steps, np.int64), np.array(partners, np.int64),
            np.array(incs, dtype=float), spent, actions)


def _run_compiled(config: SimConfig, i: int):
    pool = -1 if config.groomee_pool is None else config.groomee_pool
    return run_groomer(config.groomer_stream(i), config.q_values[i], config.steps,
                       config.r0, config.alpha, config.beta, pool, BUDGET_TOL * config.r0)


@dataclass
class SimResult:
    """Simulation output.

    The trace is stored column-wise, ordered by (step, groomer, act index).
    ``spent``/``actions`` are ``(groomers, steps)`` audit arrays.
    """

    config: SimConfig
    strengths: List[np.ndarray]
    trace_step: np.ndarray
    trace_groomer: np.ndarray
    trace_partner: np.ndarray
    trace_increment: np.ndarray
    spent: np.ndarray
    actions: np.ndarray

    @cached_property
    def events(self) -> List[InteractionEvent]:
        return [
            InteractionEvent(int(t), groomer_id(g), groomee_id(g, k), float(v))
            for t, g, k, v in zip(self.trace_step.tolist(), self.trace_groomer.tolist(),
                                  self.trace_partner.tolist(), self.trace_increment.tolist())
        ]

    @cached_property
    def ledger(self) -> RelationshipLedger:
        strength = {}
        for g, d in enumerate(self.strengths):
            gid = groomer_id(g)
            for k, v in enumerate(d.tolist()):
                strength[(gid, groomee_id(g, k))] = v
        daily: Dict[tuple, Dict[int, float]] = {}
        for e in self.events:
            daily.setdefault((e.groomer, e.groomee), {})[e.day] = e.volume
        return RelationshipLedger(t_obs=self.config.steps, mode="volume",
                                  strength=strength, daily=daily)

    def nmu(self):
        """Arrays (N, m, u) over groomers holding at least one tie."""
        N = np.array([len(d) for d in self.strengths])
        keep = N > 0
        m = np.array([d.mean() if len(d) else 0.0 for d in self.strengths])
        u = (self.actions > 0).sum(axis=1)
        return N[keep], m[keep], u[keep]

    def all_strengths(self) -> np.ndarray:
        return np.concatenate(self.strengths) if self.strengths else np.zeros(0)

    def write_trace(self, stream: TextIO) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(("day", "groomer", "groomee", "volume"))
        for t, g, k, v in zip(self.trace_step.tolist(), self.trace_groomer.tolist(),
                              self.trace_partner.tolist(), self.trace_increment.tolist()):
            w.writerow((t, groomer_id(g), groomee_id(g, k), repr(v)))

    def write_spend_audit(self, stream: TextIO) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(("step", "groomer", "spent", "actions"))
        G, T = self.spent.shape
        for t in range(T):
            for g in range(G):
                w.writerow((t + 1, groomer_id(g), repr(float(self.spent[g, t])),
                            int(self.actions[g, t])))


def run_simulation(config: SimConfig, threads: int = 1, engine: str = "compiled") -> SimResult:
    """Run every groomer for ``config.steps`` steps.

    Groomers share no state, so with ``threads > 1`` they run concurrently;
    the merged trace is identical to a serial run.
    """
    if engine == "compiled":
        one = _run_compiled
    elif engine == "python":
        one = _run_python
    else:
        raise ValueError(f"unknown engine {engine!r}")
    ids = range(config.groomers)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda i: one(config, i), ids))
    else:
        parts = [one(config, i) for i in ids]

    steps = np.concatenate([p[1] for p in parts])
    groomer = np.concatenate([np.full(len(p[1]), i, np.int64) for i, p in enumerate(parts)])
    partner = np.concatenate([p[2] for p in parts])
    inc = np.concatenate([p[3] for p in parts])
    # lexsort is stable, so act order within (step, groomer) survives
    order = np.lexsort((groomer, steps))
    return SimResult(
        config=config,
        strengths=[p[0] for p in parts],
        trace_step=steps[order],
        trace_groomer=groomer[order],
        trace_partner=partner[order],
        trace_increment=inc[order],
        spent=np.vstack([p[4] for p in parts]),
        actions=np.vstack([p[5] for p in parts]),
    )


def replay_trace(trace: Iterable[InteractionEvent], t_obs: int | None = None) -> RelationshipLedger:
    """Rebuild a simulated ledger by accumulating trace increments in order."""
    trace = list(trace)
    for prev, cur in zip(trace, trace[1:]):
        if cur.day < prev.day:
            raise ValueError(f"trace out of order: step {cur.day} after step {prev.day}")
    return build_ledger(trace, t_obs=t_obs, mode="volume")
