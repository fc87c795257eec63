"""Known-distribution baselines and diagnostics."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
from scipy.special import betainc, betaincinv

from .betting import (
    QUADRATURE_NODES,
    LambdaSolution,
    PredictiveDistribution,
    expected_loggrowth,
    solve_lambda,
    solve_lambda_grid,
)
from .core import BettingConfig, ConfidenceInterval, WealthLedger, process_observation

W1_POINTS = 4096


@dataclass(frozen=True)
class TrueLaw:
    """A data-generating law on [0, 1].

    ``kind`` is one of ``bernoulli``, ``beta``, ``beta_mixture`` or
    ``finite_atoms``; ``params`` holds ``(p,)``, ``(a, b)``, a tuple of
    ``(a, b, weight)`` triples, or a tuple of ``(location, weight)`` pairs.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        k, p = self.kind, self.params
        if k == "bernoulli":
            if not 0.0 < p[0] < 1.0:
                raise ValueError("Bernoulli p must lie in (0, 1)")
        elif k == "beta":
            if p[0] <= 0 or p[1] <= 0:
                raise ValueError("beta shapes must be positive")
        elif k == "beta_mixture":
            if any(a <= 0 or b <= 0 or w < 0 for a, b, w in p):
                raise ValueError("invalid beta mixture component")
            if abs(sum(w for _, _, w in p) - 1.0) > 1e-12:
                raise ValueError("mixture weights must sum to 1")
        elif k == "finite_atoms":
            if any(not 0.0 <= x <= 1.0 or w < 0 for x, w in p):
                raise ValueError("invalid atom")
            if abs(sum(w for _, w in p) - 1.0) > 1e-12:
                raise ValueError("atom weights must sum to 1")
        else:
            raise ValueError(f"unknown law kind {k!r}")
        if not 0.0 < self.mean < 1.0:
            raise ValueError("the law's mean must lie in (0, 1)")

    @classmethod
    def bernoulli(cls, p: float) -> "TrueLaw":
        return cls("bernoulli", (float(p),))

    @classmethod
    def beta(cls, a: float, b: float) -> "TrueLaw":
        return cls("beta", (float(a), float(b)))

    @classmethod
    def beta_mixture(cls, components) -> "TrueLaw":
        return cls("beta_mixture", tuple((float(a), float(b), float(w)) for a, b, w in components))

    @classmethod
    def finite_atoms(cls, atoms) -> "TrueLaw":
        return cls("finite_atoms", tuple((float(x), float(w)) for x, w in atoms))

    @property
    def mean(self) -> float:
        k, p = self.kind, self.params
        if k == "bernoulli":
            return p[0]
        if k == "beta":
            return p[0] / (p[0] + p[1])
        if k == "beta_mixture":
            return sum(w * a / (a + b) for a, b, w in p)
        return sum(x * w for x, w in p)

    def as_predictive(self) -> PredictiveDistribution:
        k, p = self.kind, self.params
        if k == "bernoulli":
            return PredictiveDistribution(atom_x=[0.0, 1.0], atom_w=[1.0 - p[0], p[0]])
        if k == "beta":
            return PredictiveDistribution(beta_a=[p[0]], beta_b=[p[1]], beta_w=[1.0])
        if k == "beta_mixture":
            return PredictiveDistribution.from_betas(p)
        return PredictiveDistribution.from_atoms(p)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        k, p = self.kind, self.params
        if k == "bernoulli":
            return (rng.random(n) < p[0]).astype(float)
        if k == "beta":
            return rng.beta(p[0], p[1], size=n)
        if k == "beta_mixture":
            w = np.array([c[2] for c in p])
            comp = rng.choice(len(p), size=n, p=w / w.sum())
            a = np.array([c[0] for c in p])[comp]
            b = np.array([c[1] for c in p])[comp]
            return rng.beta(a, b)
        locs = np.array([x for x, _ in p])
        w = np.array([wt for _, wt in p])
        return locs[rng.choice(len(p), size=n, p=w / w.sum())]

    def cdf(self, t) -> np.ndarray:
        return self.as_predictive().cdf(t)

    def __str__(self) -> str:
        k, p = self.kind, self.params
        if k == "bernoulli":
            return f"bernoulli({p[0]:g})"
        if k == "beta":
            return f"beta({p[0]:g},{p[1]:g})"
        if k == "beta_mixture":
            return "mixture(" + ";".join(f"{w:g},{a:g},{b:g}" for a, b, w in p) + ")"
        return "atoms(" + ";".join(f"{x:g},{w:g}" for x, w in p) + ")"


_LAW_RE = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$")


def parse_law(text: str) -> TrueLaw:
    """Parse ``bernoulli(p)``, ``beta(a,b)``, ``mixture(w,a,b; ...)`` or ``atoms(x,w; ...)``."""
    m = _LAW_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse law {text!r}")
    kind, body = m.group(1).lower(), m.group(2)
    try:
        if kind == "bernoulli":
            return TrueLaw.bernoulli(float(body))
        if kind == "beta":
            a, b = (float(v) for v in body.split(","))
            return TrueLaw.beta(a, b)
        groups = [[float(v) for v in g.split(",")] for g in body.split(";") if g.strip()]
        if kind in ("mixture", "beta_mixture"):
            return TrueLaw.beta_mixture([(a, b, w) for w, a, b in groups])
        if kind in ("atoms", "finite_atoms"):
            return TrueLaw.finite_atoms([(x, w) for x, w in groups])
    except (TypeError, ValueError) as exc:
        raise ValueError(f"cannot parse law {text!r}: {exc}") from exc
    raise ValueError(f"unknown law kind {kind!r} in {text!r}")


Distribution = Union[PredictiveDistribution, TrueLaw]


def oracle_growth(law: TrueLaw, lam: float, mu: float, nodes: int = QUADRATURE_NODES) -> float:
    """Expected log-growth ``E[log(1 + lam (X - mu))]`` under the true law."""
    return expected_loggrowth(law.as_predictive(), lam, mu, nodes)


def oracle_lambda(law: TrueLaw, mu: float, c: float, nodes: int = QUADRATURE_NODES) -> LambdaSolution:
    return solve_lambda(law.as_predictive(), mu, c, nodes=nodes)


def bernoulli_oracle_lambda(p: float, mu: float, c: float) -> float:
    """Closed form ``clip((p - mu) / (mu (1 - mu)), I_{mu,c})``."""
    return min(max((p - mu) / (mu * (1.0 - mu)), -c / (1.0 - mu)), c / mu)


class OraclePredictor:
    """Constant per-candidate coefficients maximising the true expected log-growth."""

    name = "oracle"

    def __init__(self, law: TrueLaw):
        self.law = law
        self._cache: dict = {}

    def update(self, x: float) -> None:
        pass

    def fixed_lambdas(self, grid: np.ndarray, c: float) -> np.ndarray:
        key = (grid.tobytes(), c)
        if key not in self._cache:
            x, w = self.law.as_predictive().quadrature()
            self._cache[key] = solve_lambda_grid(x, w, grid, c, tol=1e-13)
        return self._cache[key]


def oracle_cs_stream(law: TrueLaw, xs: Iterable[float], config: BettingConfig) -> list[ConfidenceInterval]:
    ledger = WealthLedger.fresh(config.grid_size)
    lambdas = OraclePredictor(law).fixed_lambdas(ledger.grid, config.c)
    out = []
    for x in xs:
        _, iv = process_observation(ledger, float(x), lambdas, config)
        out.append(iv)
    return out


# --------------------------------------------------------------------------
# Wasserstein-1
# --------------------------------------------------------------------------

def _as_distribution(d: Distribution) -> PredictiveDistribution:
    if isinstance(d, TrueLaw):
        return d.as_predictive()
    if d.safe_default:
        raise ValueError("the safe-default sentinel has no distribution")
    return d


def _atoms_vs_beta(x: np.ndarray, w: np.ndarray, a: float, b: float) -> float:
    """Exact W1 between atoms ``(x, w)`` and Beta(a, b).

    On each gap between atoms the atomic CDF is a constant ``c``; the
    integral of ``|c - F|`` splits where ``F`` crosses ``c`` and uses the
    antiderivative ``t F(t) - E[X; X <= t]`` of the beta CDF.
    """
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    start = np.concatenate([[0.0], x])
    end = np.concatenate([x, [1.0]])
    level = np.concatenate([[0.0], np.cumsum(w)])
    level[-1] = 1.0
    mean = a / (a + b)
    edges = np.append(start, 1.0)
    F = betainc(a, b, edges)
    anti_edges = edges * F - mean * betainc(a + 1.0, b, edges)
    # F crosses the level inside a gap only where it straddles it; elsewhere
    # the crossing sits at the nearer end
    cross = np.where(level <= F[:-1], start, end)
    inside = (F[:-1] < level) & (level < F[1:])
    cross[inside] = np.clip(betaincinv(a, b, level[inside]), start[inside], end[inside])
    fc = cross * betainc(a, b, cross) - mean * betainc(a + 1.0, b, cross)
    fs, fe = anti_edges[:-1], anti_edges[1:]
    below = level * (cross - start) - (fc - fs)
    above = (fe - fc) - level * (end - cross)
    return float(np.sum(below + above))


def _single_beta(d: PredictiveDistribution) -> bool:
    return d.atom_x.size == 0 and np.count_nonzero(d.beta_w) == 1


def wasserstein1(p: Distribution, q: Distribution, points: int = W1_POINTS) -> float:
    """``int_0^1 |F_p(t) - F_q(t)| dt``.

    Exact for purely atomic inputs and for atoms against a single beta law;
    otherwise the CDFs are integrated by the midpoint rule on ``points``
    cells refined at every atom.
    """
    p, q = _as_distribution(p), _as_distribution(q)
    for d, e in ((p, q), (q, p)):
        if _single_beta(d) and e.beta_w.size == 0:
            k = int(np.flatnonzero(d.beta_w)[0])
            return _atoms_vs_beta(e.atom_x, e.atom_w / e.atom_w.sum(), d.beta_a[k], d.beta_b[k])
    atoms = np.concatenate([p.atom_x, q.atom_x])
    if p.beta_w.size == 0 and q.beta_w.size == 0:
        t = np.unique(np.concatenate([atoms, [0.0, 1.0]]))
        diff = np.abs(p.cdf(t[:-1]) - q.cdf(t[:-1]))
        return float(np.dot(diff, np.diff(t)))
    t = np.unique(np.concatenate([np.linspace(0.0, 1.0, points + 1), atoms]))
    mid = 0.5 * (t[:-1] + t[1:])
    diff = np.abs(p.cdf(mid) - q.cdf(mid))
    return float(np.dot(diff, np.diff(t)))


def wasserstein1_to_law(x: np.ndarray, w: np.ndarray, law: TrueLaw, points: int = W1_POINTS) -> float:
    """W1 between the discrete distribution ``(x, w)`` and ``law``."""
    return wasserstein1(PredictiveDistribution(atom_x=x, atom_w=w / w.sum()), law, points)


def lipschitz_const(mu: float, c: float) -> float:
    """``c / ((1 - c) min(mu, 1 - mu))``."""
    if not 0.0 < mu < 1.0 or not 0.0 < c < 1.0:
        raise ValueError("mu and c must lie in (0, 1)")
    return c / ((1.0 - c) * min(mu, 1.0 - mu))


def separation_rate(t: float) -> float:
    """``min(-log(1 - t/2), t^2 / 2)`` for ``t`` in (0, 1]."""
    if not 0.0 < t <= 1.0:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    return min(-math.log1p(-t / 2.0), t * t / 2.0)
