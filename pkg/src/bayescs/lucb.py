"""LUCB best-arm identification driven by per-arm confidence sequences."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core import BettingConfig
from .oracle import TrueLaw
from .sequence import ConfidenceSequence


class ReplayExhausted(Exception):
    """A replay buffer has no rewards left."""


class ReplaySource:
    """Rewards consumed in file order."""

    def __init__(self, rewards: Sequence[float]):
        self.rewards = [float(r) for r in rewards]
        self.position = 0

    def draw(self) -> float:
        if self.position >= len(self.rewards):
            raise ReplayExhausted
        r = self.rewards[self.position]
        self.position += 1
        return r


class LawSource:
    """Rewards simulated from a known law with the arm's own generator."""

    def __init__(self, law: TrueLaw, rng: np.random.Generator):
        self.law = law
        self.rng = rng

    def draw(self) -> float:
        return float(self.law.sample(1, self.rng)[0])


@dataclass
class Arm:
    name: str
    source: Union[LawSource, ReplaySource]
    cs: ConfidenceSequence
    pulls: int = 0
    total: float = 0.0
    lower: float = 0.0
    upper: float = 1.0
    saw_empty: bool = False

    @property
    def empirical_mean(self) -> float:
        return self.total / self.pulls if self.pulls else math.nan

    def absorb(self, x: float) -> None:
        iv = self.cs.update(x).interval
        self.pulls += 1
        self.total += x
        if iv.empty:
            # an empty running interval keeps the last non-empty bounds
            self.saw_empty = True
        else:
            self.lower, self.upper = iv.lower, iv.upper


@dataclass(frozen=True)
class LucbConfig:
    m: int = 1
    alpha: float = 0.1
    epsilon: float = 0.1
    max_pulls: int = 100_000
    union_bound: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_pulls < 1:
            raise ValueError("max_pulls must be >= 1")

    def arm_alpha(self, n_arms: int) -> float:
        return self.alpha / n_arms if self.union_bound else self.alpha


def make_arm(name: str, source, predictor, betting: BettingConfig, lucb: LucbConfig, n_arms: int) -> Arm:
    """Arm whose confidence sequence runs at the (optionally corrected) per-arm level."""
    cfg = replace(betting, alpha=lucb.arm_alpha(n_arms))
    return Arm(name, source, ConfidenceSequence(predictor, cfg))


@dataclass
class LucbState:
    arms: list
    config: LucbConfig
    t: int = 0
    J: tuple = ()
    h: int = -1
    l: int = -1
    stopped: bool = False
    truncated: bool = False
    reason: str = ""
    trace: list = field(default_factory=list)

    @property
    def total_pulls(self) -> int:
        return sum(a.pulls for a in self.arms)

    @property
    def gap(self) -> float:
        return self.arms[self.l].upper - self.arms[self.h].lower


def _rank(state: LucbState) -> None:
    arms = state.arms
    # stable sort on -mean keeps the lower index first among ties
    order = sorted(range(len(arms)), key=lambda a: -arms[a].empirical_mean)
    J = tuple(sorted(order[: state.config.m]))
    rest = [a for a in range(len(arms)) if a not in J]
    # min/max return the first (lowest-index) optimum
    state.J = J
    state.h = min(J, key=lambda a: arms[a].lower)
    state.l = max(rest, key=lambda a: (arms[a].upper, -a))
    state.trace.append(
        (state.t, state.h, state.l, tuple((a.lower, a.upper) for a in arms))
    )
    # U_l - L_h < eps, written so that L_h > U_l - eps holds exactly in floating point
    if arms[state.h].lower > arms[state.l].upper - state.config.epsilon:
        state.stopped = True
        state.reason = "separated"


def _pull(state: LucbState, indices) -> bool:
    draws = {}
    try:
        for a in indices:
            draws[a] = state.arms[a].source.draw()
    except ReplayExhausted:
        state.stopped = state.truncated = True
        state.reason = "replay exhausted"
        return False
    for a in sorted(draws):
        state.arms[a].absorb(draws[a])
    return True


def lucb_init(arms: list, config: LucbConfig) -> LucbState:
    if len(arms) < 2:
        raise ValueError("LUCB needs at least two arms")
    if config.m >= len(arms):
        raise ValueError(f"m={config.m} must be smaller than the number of arms ({len(arms)})")
    state = LucbState(list(arms), config)
    if _pull(state, range(len(arms))):
        state.t = len(arms)
        _rank(state)
    return state


def lucb_step(state: LucbState) -> LucbState:
    if state.stopped:
        raise RuntimeError(f"LUCB already stopped ({state.reason})")
    if state.total_pulls + 2 > state.config.max_pulls:
        state.stopped = state.truncated = True
        state.reason = "max_pulls reached"
        return state
    if _pull(state, (state.h, state.l)):
        state.t += 1
        _rank(state)
    return state


@dataclass
class LucbResult:
    selected: tuple
    total_pulls: int
    truncated: bool
    reason: str
    trace: list
    state: LucbState = field(repr=False)


def lucb_run(arms: list, config: LucbConfig) -> LucbResult:
    state = lucb_init(arms, config)
    while not state.stopped:
        lucb_step(state)
    return LucbResult(state.J, state.total_pulls, state.truncated, state.reason, state.trace, state)


def read_replay_csv(path) -> tuple[list[str], list[list[float]]]:
    """Arm names from the header and one reward column per arm.

    Blank cells end a column early; every reward must lie in [0, 1].
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read replay file {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: replay file is empty")
    names = [h.strip() for h in rows[0]]
    columns: list[list[float]] = [[] for _ in names]
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) > len(names):
            raise ValueError(f"{path}:{lineno}: {len(row)} fields, header has {len(names)}")
        for j, cell in enumerate(row):
            if not cell.strip():
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: cannot parse {cell!r}") from None
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{path}:{lineno}: reward {v} outside [0, 1]")
            columns[j].append(v)
    return names, columns


TRACE_COLUMNS = ("t", "h", "l")


def write_trace(result: LucbResult, handle) -> None:
    names = [a.name for a in result.state.arms]
    cols = list(TRACE_COLUMNS)
    for n in names:
        cols += [f"L_{n}", f"U_{n}"]
    handle.write(",".join(cols) + "\n")
    for t, h, l, bounds in result.trace:
        cells = [str(t), str(h), str(l)]
        for lo, hi in bounds:
            cells += [repr(float(lo)), repr(float(hi))]
        handle.write(",".join(cells) + "\n")


def arm_seeds(seed: int, n_arms: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_arms)]


def simulated_arms(laws: Sequence[TrueLaw], seed: int, predictor_factory, betting: BettingConfig,
                   config: LucbConfig, names: Optional[Sequence[str]] = None) -> list:
    """Arms drawing from ``laws``; ``predictor_factory(index)`` builds each arm's predictor."""
    rngs = arm_seeds(seed, len(laws))
    names = names or [f"arm{i}" for i in range(len(laws))]
    return [
        make_arm(names[i], LawSource(law, rngs[i]), predictor_factory(i), betting, config, len(laws))
        for i, law in enumerate(laws)
    ]
