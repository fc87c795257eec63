"""Predictive-assisted confidence sequences: predictor + lambda solver + wealth engine."""
from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .betting import BETA_BINS, PredictiveDistribution, solve_lambda_grid
from .core import (
    BettingConfig,
    ConfidenceInterval,
    StepRecord,
    WealthLedger,
    candidate_grid,
    process_observation,
)


class ConfidenceSequence:
    """Runs one stream: at each step the predictor's predictive (built from the
    past only) fixes a betting coefficient per candidate mean, then the new
    observation updates every wealth and the running interval.

    ``candidates`` replaces the default grid ``{1/G, ..., (G-1)/G}``; the
    interval inversion still uses one grid step ``1/G`` of enlargement.
    ``probes`` are extra candidate means whose log-wealth is tracked in
    ``probe_log_wealth`` but never used for the interval.
    """

    def __init__(
        self,
        predictor,
        config: BettingConfig = BettingConfig(),
        candidates: Optional[np.ndarray] = None,
        bins: int = BETA_BINS,
        record_lambdas: bool = False,
        probes=(),
    ):
        self.predictor = predictor
        self.config = config
        grid = candidate_grid(config.grid_size) if candidates is None else np.asarray(candidates, dtype=float)
        self.ledger = WealthLedger(grid=grid, log_wealth=np.zeros_like(grid), step=1.0 / config.grid_size)
        self.bins = bins
        self.record_lambdas = record_lambdas
        self.lambda_history: list[np.ndarray] = []
        self.last_predictive: Optional[PredictiveDistribution] = None
        self.probes = np.asarray(probes, dtype=float).reshape(-1)
        self.probe_log_wealth = np.zeros_like(self.probes)
        self._all_mus = np.concatenate([grid, self.probes])
        self._warm: Optional[np.ndarray] = None

    @property
    def grid(self) -> np.ndarray:
        return self.ledger.grid

    @property
    def interval(self) -> ConfidenceInterval:
        return self.ledger.running_interval

    def _solve_all(self) -> np.ndarray:
        fixed = getattr(self.predictor, "fixed_lambdas", None)
        if fixed is not None:
            return fixed(self._all_mus, self.config.c)
        pred = self.predictor.predictive()
        self.last_predictive = pred
        if pred.safe_default:
            return np.zeros_like(self._all_mus)
        x, w = pred.discretized(self.bins)
        lam = solve_lambda_grid(x, w, self._all_mus, self.config.c, init=self._warm)
        self._warm = lam
        return lam

    def next_lambdas(self) -> np.ndarray:
        """Coefficients on the grid for the next observation (uses past data only)."""
        return self._solve_all()[: self.grid.size]

    def update(self, x: float) -> StepRecord:
        x = float(x)
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"observation {x!r} outside [0, 1]")
        lam_all = self._solve_all()
        g = self.grid.size
        lam = lam_all[:g]
        if self.record_lambdas:
            self.lambda_history.append(lam)
        _, iv = process_observation(self.ledger, x, lam, self.config)
        if self.probes.size:
            self.probe_log_wealth = self.probe_log_wealth + np.log1p(lam_all[g:] * (x - self.probes))
        self.predictor.update(x)
        return StepRecord(self.ledger.n, x, iv, self.ledger.last_raw_interval)

    def run(self, xs: Iterable[float]) -> list[StepRecord]:
        return [self.update(x) for x in xs]
