"""Declarative scenario runner: coverage, width and width relative to the oracle."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .betting import BETA_BINS
from .core import BettingConfig
from .oracle import OraclePredictor, TrueLaw
from .predictives import (
    BetaPrior,
    EmpiricalPredictor,
    EtelConfig,
    EtelPredictor,
    MdpPredictor,
    ParametricPredictor,
)
from .sequence import ConfidenceSequence

METHODS = ("empirical", "parametric", "mdp", "betel", "retel", "oracle")
REGIMES = ("informative", "noninformative", "misspecified", "custom")
PRIOR_FREE = ("empirical", "oracle")

_NONINFORMATIVE = BetaPrior(1.0, 1.0, 1.5, 1.0)
# nu prior per beta law, shared by the informative and misspecified regimes
_BETA_NU = {(0.5, 0.5): (7.5, 1.0), (1.0, 1.0): (2.0, 0.1), (10.0, 30.0): (2.0, 1.0)}
_MIXTURE = ((5.0, 15.0, 0.25), (15.0, 5.0, 0.75))


def _beta_around(mean: float, strength: float, nu_shape: float, nu_rate: float) -> BetaPrior:
    a = strength * mean
    return BetaPrior(a, strength - a, nu_shape, nu_rate)


def preset_prior(law: TrueLaw, regime: str, method: str) -> Optional[BetaPrior]:
    """Prior hyperparameters of the synthetic study for ``law`` and ``regime``.

    For parametric and mdp the result is the (rho, nu) prior; betel and retel
    use its rho part as the prior on the mean.  Methods without a prior
    (empirical, oracle) get ``None``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    if regime not in REGIMES or regime == "custom":
        raise ValueError(f"no preset for regime {regime!r}; presets: informative, noninformative, misspecified")
    if method in PRIOR_FREE:
        return None
    kind, params = law.kind, law.params
    if kind == "bernoulli" and params[0] in (0.1, 0.5):
        p = params[0]
        if regime == "informative":
            return _beta_around(p, 500.0, 1.0, 100.0)
        if regime == "noninformative":
            return _NONINFORMATIVE
        return _beta_around(0.5 if p == 0.1 else 0.1, 500.0, 7.5, 1.0)
    if kind == "beta" and params in _BETA_NU:
        nu = _BETA_NU[params]
        if regime == "informative":
            return _beta_around(law.mean, 200.0, *nu)
        if regime == "noninformative":
            return _NONINFORMATIVE
        return _beta_around(0.9, 200.0, *nu)
    if kind == "beta_mixture" and params == _MIXTURE:
        if regime == "informative":
            return _beta_around(law.mean, 500.0, 2.0, 2.0)
        if regime == "noninformative":
            return _NONINFORMATIVE
        return _beta_around(0.1, 200.0, 2.0, 2.0)
    raise ValueError(f"no preset prior for law {law} under regime {regime!r}")


@dataclass(frozen=True)
class MethodSettings:
    kappa: float = 50.0
    tau: float = 1.0
    etel_grid_size: int = 1000
    k_rho: int = 40
    k_nu: int = 25
    bins: int = BETA_BINS


def make_predictor(method: str, prior: Optional[BetaPrior] = None, law: Optional[TrueLaw] = None,
                   settings: MethodSettings = MethodSettings()):
    """Fresh predictor for one stream."""
    if method == "empirical":
        return EmpiricalPredictor()
    if method == "oracle":
        if law is None:
            raise ValueError("the oracle method needs the true law")
        return OraclePredictor(law)
    if method in ("parametric", "mdp", "betel", "retel") and prior is None:
        prior = _NONINFORMATIVE
    if method == "parametric":
        return ParametricPredictor(prior, settings.k_rho, settings.k_nu, settings.bins)
    if method == "mdp":
        return MdpPredictor(prior, settings.kappa, k_rho=settings.k_rho, k_nu=settings.k_nu, bins=settings.bins)
    if method in ("betel", "retel"):
        tau = 0.0 if method == "betel" else settings.tau
        return EtelPredictor(EtelConfig(tau, settings.etel_grid_size, prior.rho_a, prior.rho_b))
    raise ValueError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")


def default_probe(mu_star: float, grid_size: int) -> float:
    """A false candidate mean a quarter away from the truth, snapped to the grid."""
    target = mu_star + 0.25 if mu_star + 0.25 < 0.95 else mu_star - 0.25
    k = min(max(round(target * grid_size), 1), grid_size - 1)
    return k / grid_size


@dataclass(frozen=True)
class Scenario:
    law: TrueLaw
    method: str
    prior_regime: str = "informative"
    n_max: int = 200
    repetitions: int = 100
    seed: int = 0
    config: BettingConfig = BettingConfig()
    settings: MethodSettings = MethodSettings()
    custom_prior: Optional[BetaPrior] = None
    probes: Optional[tuple] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; valid methods: {', '.join(METHODS)}")
        if self.prior_regime not in REGIMES:
            raise ValueError(f"unknown prior regime {self.prior_regime!r}; valid: {', '.join(REGIMES)}")
        if self.prior_regime == "custom" and self.custom_prior is None and self.method not in PRIOR_FREE:
            raise ValueError("the custom regime needs custom_prior")
        if self.repetitions < 1 or self.n_max < 1:
            raise ValueError("repetitions and n_max must be >= 1")

    @property
    def prior(self) -> Optional[BetaPrior]:
        if self.method in PRIOR_FREE:
            return None
        if self.prior_regime == "custom":
            return self.custom_prior
        return preset_prior(self.law, self.prior_regime, self.method)

    @property
    def probe_mus(self) -> tuple:
        if self.probes is not None:
            return tuple(self.probes)
        return (default_probe(self.law.mean, self.config.grid_size),)


def repetition_rng(seed: int, r: int) -> np.random.Generator:
    """Counter-based split of the scenario seed: repetition ``r`` gets spawn key ``(r,)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))


@dataclass
class RepetitionTrace:
    width: np.ndarray
    oracle_width: np.ndarray
    missed: np.ndarray
    log_growth: np.ndarray
    empty: bool


def run_repetition(s: Scenario, r: int) -> RepetitionTrace:
    xs = s.law.sample(s.n_max, repetition_rng(s.seed, r))
    probes = s.probe_mus
    cs = ConfidenceSequence(
        make_predictor(s.method, s.prior, s.law, s.settings), s.config, bins=s.settings.bins, probes=probes
    )
    oracle = ConfidenceSequence(OraclePredictor(s.law), s.config)
    mu = s.law.mean
    width = np.empty(s.n_max)
    oracle_width = np.empty(s.n_max)
    missed = np.zeros(s.n_max, dtype=bool)
    log_growth = np.empty((s.n_max, len(probes)))
    ever = False
    empty = False
    for i, x in enumerate(xs):
        iv = cs.update(x).interval
        width[i] = iv.width
        empty |= iv.empty
        ever |= not iv.contains(mu)
        missed[i] = ever
        log_growth[i] = cs.probe_log_wealth / (i + 1)
        if s.method == "oracle":
            oracle_width[i] = width[i]
        else:
            oracle_width[i] = oracle.update(x).interval.width
    return RepetitionTrace(width, oracle_width, missed, log_growth, empty)


@dataclass
class RunResult:
    n: np.ndarray
    mean_width: np.ndarray
    width_over_oracle: np.ndarray
    cum_miscoverage: np.ndarray
    mean_log_growth_rate: np.ndarray  # shape (n_max, len(probes))
    probes: tuple = ()
    seed: Optional[int] = None
    repetitions: int = 0
    empty_repetitions: tuple = ()
    # per-repetition (1/n) log-wealth at the probes, shape (R, n_max, len(probes))
    repetition_log_growth: Optional[np.ndarray] = field(default=None, repr=False)
    final_missed: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def empty(cls) -> "RunResult":
        z = np.empty(0)
        return cls(np.empty(0, dtype=int), z, z, z, np.empty((0, 1)))


def run_scenario(s: Scenario, executor=None) -> RunResult:
    """Run ``s.repetitions`` independent streams and average them step by step.

    ``executor`` (anything with an order-preserving ``map``) may run the
    repetitions in parallel; the reduction is always in repetition order.
    """
    reps = range(s.repetitions)
    if executor is None:
        traces = [run_repetition(s, r) for r in reps]
    else:
        traces = list(executor.map(run_repetition, [s] * s.repetitions, reps))
    width = np.mean([t.width for t in traces], axis=0)
    oracle_width = np.mean([t.oracle_width for t in traces], axis=0)
    missed = np.array([t.missed for t in traces])
    growth = np.array([t.log_growth for t in traces])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(oracle_width > 0, width / oracle_width, np.nan)
    return RunResult(
        n=np.arange(1, s.n_max + 1),
        mean_width=width,
        width_over_oracle=ratio,
        cum_miscoverage=missed.mean(axis=0),
        mean_log_growth_rate=growth.mean(axis=0),
        probes=s.probe_mus,
        seed=s.seed,
        repetitions=s.repetitions,
        empty_repetitions=tuple(r for r, t in enumerate(traces) if t.empty),
        repetition_log_growth=growth,
        final_missed=missed[:, -1],
    )


RESULT_COLUMNS = ("n", "mean_width", "width_over_oracle", "cum_miscoverage", "mean_log_growth_rate")


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else "nan"


def _write_results(r: RunResult, fh) -> None:
    if r.seed is not None:
        fh.write(
            f"# seed={r.seed} repetitions={r.repetitions} "
            f"repetition_seed=SeedSequence(seed, spawn_key=(r,)) "
            f"probe_mu={r.probes[0] if r.probes else 'nan'}\n"
        )
    fh.write(",".join(RESULT_COLUMNS) + "\n")
    for i in range(r.n.size):
        growth = r.mean_log_growth_rate[i, 0] if r.mean_log_growth_rate.shape[1] else math.nan
        cells = [str(int(r.n[i])), _fmt(r.mean_width[i]), _fmt(r.width_over_oracle[i]),
                 _fmt(r.cum_miscoverage[i]), _fmt(growth)]
        fh.write(",".join(cells) + "\n")


def export_results(r: RunResult, path) -> None:
    """Write the per-step aggregates as CSV (log growth at the first probe).

    ``path`` may also be an open text handle.
    """
    if hasattr(path, "write"):
        _write_results(r, path)
        return
    try:
        with open(path, "w", newline="") as fh:
            _write_results(r, fh)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results(path) -> dict[str, np.ndarray]:
    """Read a file written by :func:`export_results` into column arrays."""
    try:
        with open(path, newline="") as fh:
            rows = [line for line in fh if not line.startswith("#")]
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
    reader = csv.DictReader(rows)
    cols: dict[str, list] = {c: [] for c in RESULT_COLUMNS}
    for row in reader:
        for c in RESULT_COLUMNS:
            cols[c].append(float(row[c]))
    out = {c: np.array(v, dtype=float) for c, v in cols.items()}
    out["n"] = out["n"].astype(int)
    return out


def scenario_grid(laws: Sequence[TrueLaw], methods: Sequence[str], regimes: Sequence[str]):
    """All (law, method, regime) cells; prior-free methods appear once per law."""
    for law in laws:
        for method in methods:
            for regime in (regimes[:1] if method in PRIOR_FREE else regimes):
                yield law, method, regime
