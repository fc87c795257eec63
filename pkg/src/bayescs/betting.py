"""Predictive distributions on [0, 1] and the one-step log-growth maximisation.

A :class:`PredictiveDistribution` is a finite mixture of point masses and beta
components.  For a candidate mean ``mu`` the betting coefficient maximises

    E_Q[log(1 + lam * (X - mu))]     over lam in [-c/(1-mu), c/mu],

which is done by locating the root of the (strictly decreasing) score
``E_Q[(X - mu) / (1 + lam * (X - mu))]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from numba import njit
from scipy.special import betainc, roots_jacobi

from .core import betting_interval

QUADRATURE_NODES = 64
BETA_BINS = 200
DEFAULT_TOL = 1e-10


@lru_cache(maxsize=8192)
def _jacobi_rule(a: float, b: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Jacobi on [0, 1] for the weight x^(a-1) (1-x)^(b-1); exact for
    # polynomial integrands of degree < 2 * nodes, endpoint singularities included.
    t, w = roots_jacobi(nodes, b - 1.0, a - 1.0)
    x = np.clip(0.5 * (1.0 + t), 0.0, 1.0)
    return x, w / w.sum()


def beta_quadrature(a: float, b: float, nodes: int = QUADRATURE_NODES):
    """Nodes and normalised weights integrating against Beta(a, b)."""
    return _jacobi_rule(float(a), float(b), int(nodes))


def _bin_edges(bins: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, bins + 1)


def beta_bin_moments(a, b, bins: int = BETA_BINS):
    """Exact mass and first moment of Beta(a, b) within ``bins`` equal cells.

    Returns two arrays of shape ``(len(a), bins)``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))[:, None]
    b = np.atleast_1d(np.asarray(b, dtype=float))[:, None]
    edges = _bin_edges(bins)[None, :]
    mass = np.diff(betainc(a, b, edges), axis=1)
    # E[X 1{X in cell}] = a/(a+b) * P_{Beta(a+1, b)}(cell)
    moment = (a / (a + b)) * np.diff(betainc(a + 1.0, b, edges), axis=1)
    return np.maximum(mass, 0.0), np.maximum(moment, 0.0)


def collapse_bins(mass: np.ndarray, moment: np.ndarray):
    """Turn per-cell (mass, moment) totals into moment-matched atoms.

    Cells holding less than 1e-16 of the total mass are dropped (at most
    ``1e-16 * bins`` of mass in all), which keeps concentrated predictives cheap.
    """
    keep = mass > 1e-16 * mass.sum()
    m = mass[keep]
    loc = np.clip(moment[keep] / m, 0.0, 1.0)
    return loc, m


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    """Weighted point masses plus weighted beta components on [0, 1].

    ``safe_default`` marks the sentinel used when no sensible predictive is
    available yet; it makes every betting coefficient zero.
    """

    atom_x: np.ndarray = field(default_factory=lambda: np.empty(0))
    atom_w: np.ndarray = field(default_factory=lambda: np.empty(0))
    beta_a: np.ndarray = field(default_factory=lambda: np.empty(0))
    beta_b: np.ndarray = field(default_factory=lambda: np.empty(0))
    beta_w: np.ndarray = field(default_factory=lambda: np.empty(0))
    safe_default: bool = False
    # moment-matched atoms standing in for the beta part: (locations, weights)
    beta_atoms: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("atom_x", "atom_w", "beta_a", "beta_b", "beta_w"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.atom_x.shape != self.atom_w.shape:
            raise ValueError("atom locations and weights differ in length")
        if not (self.beta_a.shape == self.beta_b.shape == self.beta_w.shape):
            raise ValueError("beta component arrays differ in length")
        if self.safe_default:
            return
        if np.any((self.atom_x < 0.0) | (self.atom_x > 1.0)):
            raise ValueError("atom locations must lie in [0, 1]")
        if np.any(self.atom_w < 0.0) or np.any(self.beta_w < 0.0):
            raise ValueError("weights must be nonnegative")
        if np.any(self.beta_a <= 0.0) or np.any(self.beta_b <= 0.0):
            raise ValueError("beta shapes must be positive")
        total = self.total_weight
        if self.atom_w.size + self.beta_w.size and abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, expected 1")

    # constructors -------------------------------------------------------
    @classmethod
    def _trusted(cls, atom_x=None, atom_w=None, beta_a=None, beta_b=None, beta_w=None,
                 beta_atoms=None) -> "PredictiveDistribution":
        """Skip validation for float arrays built by this package's own constructions."""
        obj = object.__new__(cls)
        empty = np.empty(0)
        for name, value in (("atom_x", atom_x), ("atom_w", atom_w), ("beta_a", beta_a),
                            ("beta_b", beta_b), ("beta_w", beta_w)):
            object.__setattr__(obj, name, empty if value is None else value)
        object.__setattr__(obj, "safe_default", False)
        object.__setattr__(obj, "beta_atoms", beta_atoms)
        return obj

    @classmethod
    def from_atoms(cls, atoms) -> "PredictiveDistribution":
        atoms = list(atoms)
        x = np.array([a[0] for a in atoms], dtype=float)
        w = np.array([a[1] for a in atoms], dtype=float)
        return cls(atom_x=x, atom_w=w)

    @classmethod
    def from_betas(cls, components) -> "PredictiveDistribution":
        comps = list(components)
        return cls(
            beta_a=[cc[0] for cc in comps],
            beta_b=[cc[1] for cc in comps],
            beta_w=[cc[2] for cc in comps],
        )

    @classmethod
    def point_mass(cls, x: float) -> "PredictiveDistribution":
        return cls(atom_x=[x], atom_w=[1.0])

    @classmethod
    def sentinel(cls) -> "PredictiveDistribution":
        return cls(safe_default=True)

    # views --------------------------------------------------------------
    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.atom_x.tolist(), self.atom_w.tolist()))

    @property
    def beta_components(self) -> list[tuple[float, float, float]]:
        return list(zip(self.beta_a.tolist(), self.beta_b.tolist(), self.beta_w.tolist()))

    @property
    def total_weight(self) -> float:
        return float(self.atom_w.sum() + self.beta_w.sum())

    @property
    def is_empty(self) -> bool:
        return not self.safe_default and self.atom_w.size == 0 and self.beta_w.size == 0

    def mean(self) -> float:
        m = float(np.dot(self.atom_w, self.atom_x))
        if self.beta_w.size:
            m += float(np.dot(self.beta_w, self.beta_a / (self.beta_a + self.beta_b)))
        return m

    def quadrature(self, nodes: int = QUADRATURE_NODES) -> tuple[np.ndarray, np.ndarray]:
        """All support points and weights, beta parts replaced by Gauss-Jacobi rules."""
        xs = [self.atom_x]
        ws = [self.atom_w]
        for a, b, w in zip(self.beta_a, self.beta_b, self.beta_w):
            if w == 0.0:
                continue
            qx, qw = beta_quadrature(a, b, nodes)
            xs.append(qx)
            ws.append(w * qw)
        return np.concatenate(xs), np.concatenate(ws)

    def discretized(self, bins: int = BETA_BINS) -> tuple[np.ndarray, np.ndarray]:
        """Atoms with every beta component folded into moment-matched cell atoms.

        Cell masses and cell means are exact, so the result has the same mean
        and the same mass in every cell as the mixture.
        """
        if self.beta_w.size == 0:
            return self.atom_x, self.atom_w
        if self.beta_atoms is not None:
            bx, bw = self.beta_atoms
        else:
            mass, moment = beta_bin_moments(self.beta_a, self.beta_b, bins)
            bx, bw = collapse_bins(self.beta_w @ mass, self.beta_w @ moment)
        return np.concatenate([self.atom_x, bx]), np.concatenate([self.atom_w, bw])

    def cdf(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        if self.atom_x.size:
            order = np.argsort(self.atom_x, kind="stable")
            cum = np.concatenate([[0.0], np.cumsum(self.atom_w[order])])
            out += cum[np.searchsorted(self.atom_x[order], t, side="right")]
        keep = self.beta_w > 0.0
        if np.any(keep):
            out += self.beta_w[keep] @ betainc(
                self.beta_a[keep][:, None], self.beta_b[keep][:, None], np.clip(t, 0.0, 1.0)[None, :]
            )
        return np.clip(out, 0.0, 1.0)


def mixture(parts) -> PredictiveDistribution:
    """Convex combination of ``(weight, PredictiveDistribution)`` pairs.

    Zero-weight parts are dropped so that a unit weight reproduces its part
    exactly.
    """
    parts = [(float(w), p) for w, p in parts if w > 0.0]
    if not parts:
        raise ValueError("mixture needs at least one part with positive weight")
    if len(parts) == 1 and parts[0][0] == 1.0:
        return parts[0][1]
    cat = lambda attr, scale: np.concatenate(  # noqa: E731
        [w * getattr(p, attr) if scale else getattr(p, attr) for w, p in parts]
    )
    beta_atoms = None
    with_beta = [(w, p) for w, p in parts if p.beta_w.size]
    if with_beta and all(p.beta_atoms is not None for _, p in with_beta):
        beta_atoms = (
            np.concatenate([p.beta_atoms[0] for _, p in with_beta]),
            np.concatenate([w * p.beta_atoms[1] for w, p in with_beta]),
        )
    total = sum(w for w, _ in parts)
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"mixture weights sum to {total!r}, expected 1")
    return PredictiveDistribution._trusted(
        atom_x=cat("atom_x", False),
        atom_w=cat("atom_w", True),
        beta_a=cat("beta_a", False),
        beta_b=cat("beta_b", False),
        beta_w=cat("beta_w", True),
        beta_atoms=beta_atoms,
    )


@dataclass(frozen=True)
class LambdaSolution:
    lam: float
    at_boundary: bool
    foc_residual: float


def _check_positive(x: np.ndarray, lam: float, mu: float) -> np.ndarray:
    factor = 1.0 + lam * (x - mu)
    if np.any(factor <= 0.0) or 1.0 + lam * (0.0 - mu) <= 0.0 or 1.0 + lam * (1.0 - mu) <= 0.0:
        raise ValueError(f"lambda={lam} makes a wealth factor non-positive for mu={mu}")
    return factor


def expected_score(pred: PredictiveDistribution, lam: float, mu: float,
                   nodes: int = QUADRATURE_NODES) -> float:
    """``E[(X - mu) / (1 + lam (X - mu))]`` under ``pred``."""
    x, w = pred.quadrature(nodes)
    factor = _check_positive(x, lam, mu)
    return float(np.dot(w, (x - mu) / factor))


def expected_loggrowth(pred: PredictiveDistribution, lam: float, mu: float,
                       nodes: int = QUADRATURE_NODES) -> float:
    x, w = pred.quadrature(nodes)
    factor = _check_positive(x, lam, mu)
    return float(np.dot(w, np.log(factor)))


def solve_lambda(pred: PredictiveDistribution, mu: float, c: float,
                 tol: float = DEFAULT_TOL, nodes: int = QUADRATURE_NODES) -> LambdaSolution:
    if tol <= 0:
        raise ValueError("tol must be positive")
    if pred.is_empty:
        raise ValueError("empty predictive distribution")
    if pred.safe_default:
        return LambdaSolution(0.0, False, 0.0)
    lo, hi = betting_interval(mu, c)
    x, w = pred.quadrature(nodes)
    d = x - mu
    if not np.any((w > 0.0) & (d != 0.0)):
        return LambdaSolution(0.0, False, 0.0)

    def score(lam):
        return float(np.dot(w, d / (1.0 + lam * d)))

    s_lo = score(lo)
    if s_lo <= 0.0:
        return LambdaSolution(lo, True, s_lo)
    s_hi = score(hi)
    if s_hi >= 0.0:
        return LambdaSolution(hi, True, s_hi)
    root = brentq(score, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return LambdaSolution(float(root), False, score(root))


# reassociation lets LLVM vectorise the reductions; no NaN/inf assumptions are made
_REDUCTION_FLAGS = {"reassoc", "nsz", "arcp", "contract"}


@njit(cache=True, fastmath=_REDUCTION_FLAGS)
def _score(x, w, mu, lam):
    s = 0.0
    ds = 0.0
    for k in range(x.size):
        d = x[k] - mu
        r = d / (1.0 + lam * d)
        q = w[k] * r
        s += q
        ds -= q * r
    return s, ds


@njit(cache=True)
def _solve_grid_kernel(x, w, mus, c, init, tol, max_iter, out):
    for j in range(mus.size):
        mu = mus[j]
        lo = -c / (1.0 - mu)
        hi = c / mu
        lam = init[j]
        if not (lo < lam < hi):
            lam = 0.0
        s, ds = _score(x, w, mu, lam)
        if ds == 0.0:
            # every atom sits at mu: the log-growth is flat, bet nothing
            out[j] = 0.0
            continue
        if s > 0.0:
            s_end, _ = _score(x, w, mu, hi)
            if s_end >= 0.0:
                out[j] = hi
                continue
            a, b = lam, hi
        elif s < 0.0:
            s_end, _ = _score(x, w, mu, lo)
            if s_end <= 0.0:
                out[j] = lo
                continue
            a, b = lo, lam
        else:
            out[j] = lam
            continue
        for _ in range(max_iter):
            if abs(s) <= tol:
                break
            if s > 0.0:
                a = lam
            else:
                b = lam
            if b - a <= 4e-16 * max(abs(a), abs(b)):
                break
            nxt = lam - s / ds
            if not (a < nxt < b):
                nxt = 0.5 * (a + b)
            lam = nxt
            s, ds = _score(x, w, mu, lam)
        out[j] = lam


def solve_lambda_grid(
    x: np.ndarray,
    w: np.ndarray,
    mus: np.ndarray,
    c: float,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = 200,
) -> np.ndarray:
    """Betting coefficients for many candidate means at once.

    ``x``/``w`` are the atoms of a discrete predictive.  Each candidate starts
    from ``init`` (warm start from the previous step) or 0; the sign of the
    score there tells which endpoint could be optimal, and otherwise Newton's
    method safeguarded by the shrinking bracket finds the interior root.
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    if mus.size and not (0.0 < mus.min() and mus.max() < 1.0 and 0.0 < c < 1.0):
        betting_interval(mus, c)  # raises with the offending value
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    keep = w > 0.0
    x, w = np.ascontiguousarray(x[keep]), np.ascontiguousarray(w[keep])
    out = np.zeros_like(mus)
    if x.size == 0:
        return out
    start = np.zeros_like(mus) if init is None else np.ascontiguousarray(init, dtype=float)
    _solve_grid_kernel(x, w, np.ascontiguousarray(mus), float(c), start, float(tol), int(max_iter), out)
    return out
