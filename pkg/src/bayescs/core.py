"""Grid-based wealth-process engine.

For every candidate mean ``mu`` on the grid ``{1/G, ..., (G-1)/G}`` the engine
keeps the cumulative log-wealth ``log W_n(mu)`` of a betting test martingale.
A candidate is rejected once its log-wealth exceeds ``log(1/alpha)``; the
retained candidates are turned into an interval (enlarged by one grid step and
clipped to [0, 1]) and intersected with the previous running interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

# lambdas this close to an endpoint of I_{mu,c} are accepted as feasible
_FEASIBILITY_SLACK = 1e-12


@dataclass(frozen=True)
class BettingConfig:
    alpha: float = 0.1
    c: float = 0.95
    grid_size: int = 500

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"c must lie in (0, 1), got {self.c}")
        if int(self.grid_size) != self.grid_size or self.grid_size < 2:
            raise ValueError(f"grid_size must be an integer >= 2, got {self.grid_size}")


def candidate_grid(grid_size: int) -> np.ndarray:
    """Equally spaced candidate means ``k / G`` for ``k = 1, ..., G-1``."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    return np.arange(1, grid_size, dtype=float) / grid_size


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    empty: bool = False

    def __post_init__(self):
        if not self.empty and self.lower > self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    @classmethod
    def empty_interval(cls) -> "ConfidenceInterval":
        return cls(math.nan, math.nan, True)

    @property
    def width(self) -> float:
        return 0.0 if self.empty else self.upper - self.lower

    def contains(self, value: float) -> bool:
        return (not self.empty) and self.lower <= value <= self.upper


FULL_INTERVAL = ConfidenceInterval(0.0, 1.0)


@dataclass
class WealthLedger:
    """Per-candidate log-wealth plus the interval state of one stream."""

    grid: np.ndarray
    log_wealth: np.ndarray
    step: float
    n: int = 0
    last_raw_interval: ConfidenceInterval = FULL_INTERVAL
    running_interval: ConfidenceInterval = FULL_INTERVAL

    @classmethod
    def fresh(cls, grid_size: int) -> "WealthLedger":
        grid = candidate_grid(grid_size)
        return cls(grid=grid, log_wealth=np.zeros_like(grid), step=1.0 / grid_size)

    def copy(self) -> "WealthLedger":
        return WealthLedger(
            grid=self.grid,
            log_wealth=self.log_wealth.copy(),
            step=self.step,
            n=self.n,
            last_raw_interval=self.last_raw_interval,
            running_interval=self.running_interval,
        )


def betting_interval(mu, c: float):
    """Feasible betting coefficients ``[-c/(1-mu), c/mu]``.

    Works elementwise when ``mu`` is an array.
    """
    mu_arr = np.asarray(mu, dtype=float)
    if np.any((mu_arr <= 0.0) | (mu_arr >= 1.0)):
        raise ValueError(f"candidate mean must lie in (0, 1), got {mu}")
    if not 0.0 < c < 1.0:
        raise ValueError(f"truncation c must lie in (0, 1), got {c}")
    lo = -c / (1.0 - mu_arr)
    hi = c / mu_arr
    if mu_arr.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def wealth_step(log_w: float, lam: float, x: float, mu: float) -> float:
    factor = 1.0 + lam * (x - mu)
    if not factor > 0.0:
        raise ValueError(
            f"non-positive wealth factor {factor!r} (lambda={lam}, x={x}, mu={mu}); "
            "lambda lies outside the feasible betting interval"
        )
    return log_w + math.log(factor)


def invert_grid(ledger: WealthLedger, alpha: float) -> ConfidenceInterval:
    threshold = math.log(1.0 / alpha)
    retained = ledger.grid[ledger.log_wealth <= threshold]
    if retained.size == 0:
        return ConfidenceInterval.empty_interval()
    lower = max(0.0, float(retained[0]) - ledger.step)
    upper = min(1.0, float(retained[-1]) + ledger.step)
    return ConfidenceInterval(lower, upper)


def intersect(a: ConfidenceInterval, b: ConfidenceInterval) -> ConfidenceInterval:
    if a.empty or b.empty:
        return ConfidenceInterval.empty_interval()
    lower = max(a.lower, b.lower)
    upper = min(a.upper, b.upper)
    if lower > upper:
        return ConfidenceInterval.empty_interval()
    return ConfidenceInterval(lower, upper)


def running_intersect(ledger: WealthLedger, new_interval: ConfidenceInterval) -> ConfidenceInterval:
    result = intersect(ledger.running_interval, new_interval)
    ledger.running_interval = result
    return result


_BOUNDS_CACHE: dict = {}


def _slackened_bounds(grid: np.ndarray, c: float) -> tuple[np.ndarray, np.ndarray]:
    key = (grid.tobytes(), c)
    if key not in _BOUNDS_CACHE:
        if len(_BOUNDS_CACHE) > 64:
            _BOUNDS_CACHE.clear()
        lo, hi = betting_interval(grid, c)
        slack = _FEASIBILITY_SLACK * np.maximum(np.abs(lo), np.abs(hi))
        _BOUNDS_CACHE[key] = (lo - slack, hi + slack)
    return _BOUNDS_CACHE[key]


def check_lambdas(grid: np.ndarray, lambdas: np.ndarray, c: float) -> None:
    lo_s, hi_s = _slackened_bounds(grid, c)
    bad = np.flatnonzero(~((lambdas >= lo_s) & (lambdas <= hi_s)))
    if bad.size:
        i = int(bad[0])
        lo, hi = betting_interval(grid, c)
        raise ValueError(
            f"lambda {lambdas[i]!r} at grid index {i} (mu={grid[i]}) lies outside "
            f"the betting interval [{lo[i]}, {hi[i]}]"
        )


def process_observation(
    ledger: WealthLedger,
    x: float,
    lambdas: np.ndarray,
    config: BettingConfig,
) -> tuple[WealthLedger, ConfidenceInterval]:
    """Apply one observation to every candidate mean and refresh the intervals.

    The ledger is updated in place and returned together with the running
    interval.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"observation {x!r} outside [0, 1]")
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.shape != ledger.grid.shape:
        raise ValueError(
            f"expected {ledger.grid.size} lambdas, got shape {lambdas.shape}"
        )
    check_lambdas(ledger.grid, lambdas, config.c)
    factors = 1.0 + lambdas * (x - ledger.grid)
    bad = np.flatnonzero(~(factors > 0.0))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"non-positive wealth factor at grid index {i}")
    ledger.log_wealth = ledger.log_wealth + np.log(factors)
    ledger.n += 1
    raw = invert_grid(ledger, config.alpha)
    ledger.last_raw_interval = raw
    return ledger, running_intersect(ledger, raw)


@dataclass(frozen=True)
class StepRecord:
    n: int
    x: float
    interval: ConfidenceInterval
    raw_interval: ConfidenceInterval


STREAM_COLUMNS = ("n", "x", "lower", "upper", "raw_lower", "raw_upper", "empty_flag")


def _fmt(value: float) -> str:
    return repr(float(value)) if math.isfinite(value) else "nan"


def format_step_row(record: StepRecord) -> str:
    iv, raw = record.interval, record.raw_interval
    return ",".join(
        [
            str(record.n),
            _fmt(record.x),
            _fmt(iv.lower),
            _fmt(iv.upper),
            _fmt(raw.lower),
            _fmt(raw.upper),
            "1" if iv.empty else "0",
        ]
    )


@dataclass
class StreamWriter:
    """Streaming CSV sink: one flushed row per processed observation."""

    handle: IO[str]
    flush: bool = True
    _header_written: bool = field(default=False, init=False)

    def header(self) -> None:
        if not self._header_written:
            self.handle.write(",".join(STREAM_COLUMNS) + "\n")
            self._header_written = True
            if self.flush:
                self.handle.flush()

    def write(self, record: StepRecord) -> None:
        self.header()
        self.handle.write(format_step_row(record) + "\n")
        if self.flush:
            self.handle.flush()


def interval_from_row(lower: str, upper: str, empty: str) -> ConfidenceInterval:
    if empty.strip() == "1":
        return ConfidenceInterval.empty_interval()
    return ConfidenceInterval(float(lower), float(upper))


def step_interval(ledger: WealthLedger, raw: bool = False) -> Optional[ConfidenceInterval]:
    return ledger.last_raw_interval if raw else ledger.running_interval
