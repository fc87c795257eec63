"""Prediction-powered inference on top of the bounded-mean confidence sequences.

The target ``theta = E[Y]`` is split as ``m + Delta`` with ``m = E[f(X)]``
estimated once from a large unlabeled pool (and then held fixed) and the
rectifier ``Delta = E[Y - f(X)]`` learned sequentially from labeled pairs.
Residuals are rescaled to ``Z = (R - ell) / (u - ell)`` in [0, 1]; a confidence
sequence for ``E[Z]`` maps back to ``theta`` by ``z -> m_hat + ell + (u - ell) z``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .core import BettingConfig, ConfidenceInterval
from .predictives import BetaPrior
from .sequence import ConfidenceSequence

PPI_NU_PRIOR = (7.5, 1.0)


@dataclass(frozen=True)
class PpiDataset:
    unlabeled_predictions: tuple
    labeled_pairs: tuple  # (y, f_x) in arrival order
    residual_bounds: tuple = (-1.0, 1.0)

    def __post_init__(self):
        ell, u = self.residual_bounds
        if not ell < u:
            raise ValueError(f"residual bounds must satisfy ell < u, got {self.residual_bounds}")
        object.__setattr__(self, "unlabeled_predictions", tuple(float(v) for v in self.unlabeled_predictions))
        object.__setattr__(self, "labeled_pairs", tuple((float(y), float(f)) for y, f in self.labeled_pairs))

    def validate(self) -> None:
        """Check every residual against the declared bounds (raises with the row index)."""
        for i, (y, f) in enumerate(self.labeled_pairs):
            rescale_residual(y - f, self.residual_bounds, row=i)


@dataclass(frozen=True)
class PpiConfig:
    n0: int = 1000
    alpha: float = 0.1
    method: str = "mdp"
    classical: bool = False

    def __post_init__(self):
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


def plugin_mean(ds: PpiDataset) -> float:
    if not ds.unlabeled_predictions:
        raise ValueError("the unlabeled pool is empty")
    return math.fsum(ds.unlabeled_predictions) / len(ds.unlabeled_predictions)


def rescale_residual(r: float, bounds, row: Optional[int] = None) -> float:
    ell, u = bounds
    if not ell <= r <= u:
        where = f" at row {row}" if row is not None else ""
        raise ValueError(f"residual {r!r}{where} outside the declared bounds [{ell}, {u}]")
    return (r - ell) / (u - ell)


def prior_concentration(n0: int, bounds) -> float:
    """``xi(n0) = (n0 (u - ell)^2 / 4 - 1) / 2``.

    Beta(xi, xi) on the rescaled mean then has variance ``1 / (n0 (u - ell)^2)``,
    i.e. ``1 / n0`` back on the residual scale.
    """
    ell, u = bounds
    s = n0 * (u - ell) ** 2 / 4.0
    if not s > 1.0:
        raise ValueError(
            f"n0 * (u - ell)^2 / 4 = {s} must exceed 1 for the variance target 1/n0 to be attainable"
        )
    return 0.5 * (s - 1.0)


def rectifier_prior(n0: int, bounds) -> BetaPrior:
    """Zero-centred prior on the rectifier, expressed on the rescaled scale.

    Symmetric bounds give Beta(xi, xi); asymmetric bounds keep the variance
    target and centre the beta at the image of 0.  The concentration prior is
    Gamma(7.5, 1).
    """
    ell, u = bounds
    if not ell < 0.0 < u:
        raise ValueError(f"a zero-centred prior needs ell < 0 < u, got {bounds}")
    if ell == -u:
        xi = prior_concentration(n0, bounds)
        return BetaPrior(xi, xi, *PPI_NU_PRIOR)
    m0 = -ell / (u - ell)
    var = 1.0 / (n0 * (u - ell) ** 2)
    total = m0 * (1.0 - m0) / var - 1.0
    if not total > 0:
        raise ValueError(f"variance target 1/n0 unattainable for n0={n0} and bounds {bounds}")
    return BetaPrior(m0 * total, (1.0 - m0) * total, *PPI_NU_PRIOR)


def to_theta(iv: ConfidenceInterval, m_hat: float, bounds) -> ConfidenceInterval:
    """Affine image ``m_hat + ell + (u - ell) z`` of a rescaled interval."""
    if iv.empty:
        return ConfidenceInterval.empty_interval()
    ell, u = bounds
    return ConfidenceInterval(m_hat + ell + (u - ell) * iv.lower, m_hat + ell + (u - ell) * iv.upper)


@dataclass
class PpiState:
    cs: ConfidenceSequence
    m_hat: float
    bounds: tuple
    classical: bool = False
    n: int = 0
    history: list = field(default_factory=list)

    @property
    def z_interval(self) -> ConfidenceInterval:
        return self.cs.interval

    @property
    def theta_interval(self) -> ConfidenceInterval:
        return to_theta(self.cs.interval, self.m_hat, self.bounds)


def ppi_init(ds: PpiDataset, config: PpiConfig, predictor, betting: Optional[BettingConfig] = None) -> PpiState:
    """``predictor`` drives the rescaled-residual sequence (see :func:`rectifier_prior`)."""
    betting = betting or BettingConfig(alpha=config.alpha)
    if betting.alpha != config.alpha:
        raise ValueError("betting alpha and PPI alpha differ")
    m_hat = 0.0 if config.classical else plugin_mean(ds)
    return PpiState(ConfidenceSequence(predictor, betting), m_hat, tuple(ds.residual_bounds), config.classical)


def ppi_cs_step(state: PpiState, pair, ds: Optional[PpiDataset] = None, config: Optional[PpiConfig] = None):
    """Feed one labeled pair; returns ``(theta_interval, step_record)``.

    In classical mode the label itself is the bounded observation (no
    predictions, ``m_hat = 0``).
    """
    y, f = pair
    r = y if state.classical else y - f
    z = rescale_residual(r, state.bounds, row=state.n)
    record = state.cs.update(z)
    state.n += 1
    return to_theta(record.interval, state.m_hat, state.bounds), record


def sequential_test_stop_time(state: PpiState, pairs: Iterable, null_threshold: float = 0.0) -> Optional[int]:
    """First n at which the theta-scale running interval lies strictly above the threshold."""
    for pair in pairs:
        iv, _ = ppi_cs_step(state, pair)
        if not iv.empty and iv.lower > null_threshold:
            return state.n
    return None


def _read_rows(path, required: Sequence[str]):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in required if c not in (reader.fieldnames or [])]
            if missing:
                raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    yield lineno, [float(row[c]) for c in required]
                except (TypeError, ValueError):
                    raise ValueError(f"{path}:{lineno}: cannot parse row {row}") from None
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def read_labeled_csv(path) -> list[tuple[float, float]]:
    return [(y, f) for _, (y, f) in _read_rows(path, ("y", "f_x"))]


def read_unlabeled_csv(path) -> list[float]:
    return [f for _, (f,) in _read_rows(path, ("f_x",))]
