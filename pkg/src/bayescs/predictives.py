"""Predictable predictive distributions built from the observation history.

Five constructions are provided: the empirical distribution, a beta working
model posterior predictive (``rho`` mean, ``nu`` concentration), the
mixture-DP-style blend of the two, and the exponentially tilted empirical
likelihood predictives (BETEL for ``tau = 0``, RETEL with the two-point
regulariser ``(delta_0 + delta_1) / 2`` for ``tau > 0``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import stats
from scipy.special import betaln, expit, xlog1py, xlogy

from .betting import BETA_BINS, PredictiveDistribution, beta_bin_moments, collapse_bins, mixture

CLAMP_EPS = 1e-6
TILT_TOL = 1e-10


class History:
    """Ordered observations in [0, 1] with a cached (unique, count) view."""

    def __init__(self, observations=()):
        self._obs: list[float] = []
        self._counts: dict[float, int] = {}
        self._unique = None
        for x in observations:
            self.append(x)

    def append(self, x: float) -> None:
        x = float(x)
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"observation {x!r} outside [0, 1]")
        self._obs.append(x)
        self._counts[x] = self._counts.get(x, 0) + 1
        self._unique = None

    @property
    def observations(self) -> list[float]:
        return list(self._obs)

    @property
    def n(self) -> int:
        return len(self._obs)

    def __len__(self) -> int:
        return len(self._obs)

    def array(self) -> np.ndarray:
        return np.asarray(self._obs, dtype=float)

    def unique(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted distinct values and their multiplicities."""
        if self._unique is None:
            keys = sorted(self._counts)
            self._unique = (
                np.array(keys, dtype=float),
                np.array([self._counts[k] for k in keys], dtype=float),
            )
        return self._unique

    def mean(self) -> float:
        return math.fsum(self._obs) / len(self._obs)


def _as_history(history) -> History:
    return history if isinstance(history, History) else History(history)


# --------------------------------------------------------------------------
# empirical
# --------------------------------------------------------------------------

def empirical_predictive(history) -> PredictiveDistribution:
    history = _as_history(history)
    if history.n == 0:
        return PredictiveDistribution.sentinel()
    values, counts = history.unique()
    return PredictiveDistribution._trusted(atom_x=values, atom_w=counts / history.n)


# --------------------------------------------------------------------------
# parametric beta working model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BetaPrior:
    """``rho ~ Beta(rho_a, rho_b)`` and ``nu ~ Gamma(nu_shape, rate=nu_rate)``."""

    rho_a: float = 1.0
    rho_b: float = 1.0
    nu_shape: float = 1.5
    nu_rate: float = 1.0

    def __post_init__(self):
        if min(self.rho_a, self.rho_b, self.nu_shape, self.nu_rate) <= 0:
            raise ValueError(f"prior hyperparameters must be positive: {self}")


@dataclass
class BetaPosterior:
    """Weighted particle approximation of the (rho, nu) posterior.

    Particles sit on a fixed product grid of prior quantiles; only the
    log-weights move as data arrive.
    """

    rho: np.ndarray
    nu: np.ndarray
    log_weights: np.ndarray
    prior: BetaPrior
    clamped: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def shape_a(self) -> np.ndarray:
        if "a" not in self._cache:
            self._cache["a"] = self.rho * self.nu
        return self._cache["a"]

    @property
    def shape_b(self) -> np.ndarray:
        if "b" not in self._cache:
            self._cache["b"] = (1.0 - self.rho) * self.nu
        return self._cache["b"]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def posterior_mean_rho(self) -> float:
        return float(np.dot(self.weights, self.rho))

    def _log_norm(self) -> np.ndarray:
        if "betaln" not in self._cache:
            self._cache["betaln"] = betaln(self.shape_a, self.shape_b)
        return self._cache["betaln"]

    def bin_moments(self, bins: int = BETA_BINS):
        key = ("bins", bins)
        if key not in self._cache:
            self._cache[key] = beta_bin_moments(self.shape_a, self.shape_b, bins)
        return self._cache[key]


@lru_cache(maxsize=64)
def _particle_grid(prior: BetaPrior, k_rho: int, k_nu: int):
    rho_levels = (np.arange(1, k_rho + 1) - 0.5) / k_rho
    nu_levels = (np.arange(1, k_nu + 1) - 0.5) / k_nu
    rho = stats.beta.ppf(rho_levels, prior.rho_a, prior.rho_b)
    nu = stats.gamma.ppf(nu_levels, prior.nu_shape, scale=1.0 / prior.nu_rate)
    # extremely concentrated priors can push quantiles onto the boundary
    rho = np.clip(rho, 1e-9, 1.0 - 1e-9)
    nu = np.maximum(nu, 1e-12)
    rr, nn = np.meshgrid(rho, nu, indexing="ij")
    rr, nn = rr.ravel(), nn.ravel()
    rr.flags.writeable = False
    nn.flags.writeable = False
    # shared by every posterior on this grid: betaln and bin moments depend on the particles only
    return rr, nn, {}


def beta_posterior_init(prior: BetaPrior, k_rho: int = 40, k_nu: int = 25) -> BetaPosterior:
    """Equal weights on the product grid of prior quantiles at levels ``(k - 1/2) / K``."""
    rho, nu, cache = _particle_grid(prior, int(k_rho), int(k_nu))
    p = rho.size
    return BetaPosterior(rho=rho, nu=nu, log_weights=np.full(p, -math.log(p)), prior=prior, _cache=cache)


def beta_posterior_update(post: BetaPosterior, x: float) -> BetaPosterior:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"observation {x!r} outside [0, 1]")
    clamped = post.clamped
    xc = min(max(x, CLAMP_EPS), 1.0 - CLAMP_EPS)
    if xc != x:
        clamped += 1
    a, b = post.shape_a, post.shape_b
    # xc is interior, so plain logs are finite for every shape
    lw = post.log_weights + (a - 1.0) * math.log(xc) + (b - 1.0) * math.log1p(-xc) - post._log_norm()
    top = lw.max()
    lw -= top + math.log(np.exp(lw - top).sum())
    return BetaPosterior(post.rho, post.nu, lw, post.prior, clamped, post._cache)


def beta_posterior_predictive(post: BetaPosterior, bins: int = BETA_BINS) -> PredictiveDistribution:
    w = post.weights
    w = w / w.sum()
    mass, moment = post.bin_moments(bins)
    # particles below 1e-16 of the top weight move the binned atoms by < 1e-13 in total
    live = np.flatnonzero(w > 1e-16 * w.max())
    wl = w[live]
    return PredictiveDistribution._trusted(
        beta_a=post.shape_a,
        beta_b=post.shape_b,
        beta_w=w,
        beta_atoms=collapse_bins(wl @ mass[live], wl @ moment[live]),
    )


# --------------------------------------------------------------------------
# mixture-DP-style blend
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MdpConfig:
    kappa: float = 50.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


def mdp_predictive(param_pred: PredictiveDistribution, history, kappa: float) -> PredictiveDistribution:
    """``kappa/(kappa+m) * param_pred + m/(kappa+m) * empirical`` for ``m`` past points."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    history = _as_history(history)
    m = history.n
    if m == 0:
        return param_pred if kappa > 0 else PredictiveDistribution.sentinel()
    empirical = empirical_predictive(history)
    return mixture([(kappa / (kappa + m), param_pred), (m / (kappa + m), empirical)])


# --------------------------------------------------------------------------
# exponentially tilted empirical likelihood
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EtelConfig:
    tau: float = 1.0
    grid_size: int = 1000
    prior_a: float = 1.0
    prior_b: float = 1.0

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if self.prior_a <= 0 or self.prior_b <= 0:
            raise ValueError("prior shapes must be positive")


@dataclass(frozen=True)
class TiltSolution:
    gamma: float
    sample_weights: np.ndarray
    regularizer_weight: float
    endpoint_mass_p: float
    mu0: float

    def tilted_mean(self, observations) -> float:
        return float(
            np.dot(self.sample_weights, np.asarray(observations, dtype=float))
            + self.regularizer_weight * self.endpoint_mass_p
        )


class HullViolation(ValueError):
    """The candidate mean is not reachable by tilting the empirical measure."""


@njit(cache=True)
def _tilt_moments(values, counts, tau, g):
    """Shift, normaliser, tilted mean and tilted variance at ``g``."""
    shift = max(g * values[0], g * values[-1])
    if tau > 0.0:
        shift = max(shift, max(g, 0.0))
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    for i in range(values.size):
        e = counts[i] * math.exp(g * values[i] - shift)
        s0 += e
        s1 += e * values[i]
        s2 += e * values[i] * values[i]
    h1 = 0.0
    if tau > 0.0:
        h1 = 0.5 * tau * math.exp(g - shift)
        s0 += 0.5 * tau * math.exp(-shift) + h1
    m = (s1 + h1) / s0
    v = (s2 + h1) / s0 - m * m
    return shift, s0, m, v


@njit(cache=True)
def _solve_gamma_kernel(values, counts, tau, mu0, g0, tol, max_iter, gamma, shift, norm):
    for j in range(mu0.size):
        g = g0[j]
        if not math.isfinite(g):
            g = 0.0
        lo = -math.inf
        hi = math.inf
        current = False
        sh = z = 0.0
        for _ in range(max_iter):
            sh, z, m, v = _tilt_moments(values, counts, tau, g)
            current = True
            r = m - mu0[j]
            if abs(r) <= tol:
                break
            if r < 0.0:
                lo = g
            else:
                hi = g
            both = math.isfinite(lo) and math.isfinite(hi)
            if both and hi - lo <= 4e-16 * max(1.0, max(abs(lo), abs(hi))):
                break
            # the step is capped so the iterate at most doubles while one side is open
            cap = max(1.0, abs(g))
            if v > 0.0:
                step = min(max(-r / v, -cap), cap)
            else:
                step = cap if r < 0.0 else -cap
            nxt = g + step
            if both and not (lo < nxt < hi):
                nxt = 0.5 * (lo + hi)
            g = nxt
            current = False
        if not current:
            sh, z, m, v = _tilt_moments(values, counts, tau, g)
        gamma[j] = g
        shift[j] = sh
        norm[j] = z


def _solve_gamma(values, counts, tau, mu0, gamma0=None, tol=TILT_TOL, max_iter=500):
    """Solve ``tilted_mean(gamma) = mu0`` for every grid point.

    Safeguarded Newton per point: the bracket starts unbounded and closes as
    residual signs are observed (the tilted mean is increasing in ``gamma``).
    Returns ``(gamma, shift, normaliser)`` where ``shift`` is the largest
    exponent and the normaliser is scaled by ``exp(-shift)``.
    """
    mu0 = np.ascontiguousarray(mu0, dtype=float)
    g0 = np.zeros_like(mu0) if gamma0 is None else np.ascontiguousarray(gamma0, dtype=float)
    gamma, shift, norm = np.empty_like(mu0), np.empty_like(mu0), np.empty_like(mu0)
    _solve_gamma_kernel(
        np.ascontiguousarray(values, dtype=float), np.ascontiguousarray(counts, dtype=float),
        float(tau), mu0, g0, float(tol), int(max_iter), gamma, shift, norm,
    )
    return gamma, shift, norm


def _check_tilt_domain(history: History, mu0: float, tau: float) -> None:
    if not 0.0 < mu0 < 1.0:
        raise ValueError(f"mu0 must lie in (0, 1), got {mu0}")
    if history.n == 0 and tau == 0:
        raise HullViolation("empty history has no convex hull")
    if tau == 0:
        values, _ = history.unique()
        if not values[0] < mu0 < values[-1]:
            raise HullViolation(
                f"mu0={mu0} outside the open empirical hull ({values[0]}, {values[-1]})"
            )


def etel_tilt_solve(history, mu0: float, config: EtelConfig, tol: float = TILT_TOL) -> TiltSolution:
    """Tilt the (regularised) empirical measure to have mean ``mu0``.

    The tilting parameter is found by bisection on an adaptively doubled
    bracket; the tilted mean is monotone in ``gamma``.
    """
    history = _as_history(history)
    tau = config.tau
    _check_tilt_domain(history, mu0, tau)
    if history.n == 0:
        values = np.empty(0)
        counts = np.empty(0)
    else:
        values, counts = history.unique()

    def residual(gamma: float) -> float:
        if values.size == 0:
            # only the regulariser: mean is the endpoint probability
            return float(expit(gamma)) - mu0
        return _tilt_moments(values, counts, tau, gamma)[2] - mu0

    lo, hi = -1.0, 1.0
    while residual(lo) > 0.0:
        lo, hi = 2.0 * lo, lo
    while residual(hi) < 0.0:
        lo, hi = hi, 2.0 * hi
    gamma = 0.5 * (lo + hi)
    r = residual(gamma)
    for _ in range(2000):
        if abs(r) <= tol:
            break
        if r < 0.0:
            lo = gamma
        else:
            hi = gamma
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        gamma = mid
        r = residual(gamma)
    return _solution_from_gamma(history, gamma, tau, mu0)


def _solution_from_gamma(history: History, gamma: float, tau: float, mu0: float) -> TiltSolution:
    obs = history.array()
    exponents = [gamma * obs.min(), gamma * obs.max()] if obs.size else []
    if tau > 0:
        exponents += [0.0, gamma]
    top = max(exponents)
    ws = np.exp(gamma * obs - top)
    h = 0.5 * tau * (math.exp(-top) + math.exp(gamma - top)) if tau > 0 else 0.0
    Z = ws.sum() + h
    p = float(expit(gamma)) if tau > 0 else 0.5
    return TiltSolution(float(gamma), ws / Z, h / Z, p, float(mu0))


@dataclass(frozen=True)
class PseudoPosterior:
    """Grid approximation of the (regularised) ETEL pseudo-posterior."""

    mu0: np.ndarray
    weights: np.ndarray
    gamma: np.ndarray
    log_likelihood: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    tau: float
    # largest exponent per grid point and the partition sum scaled by exp(-shift)
    shift: np.ndarray
    normaliser: np.ndarray
    mass0: np.ndarray
    mass1: np.ndarray

    @property
    def terms(self) -> np.ndarray:
        """Shifted tilt terms ``count * exp(gamma * value - shift)``, one row per grid point."""
        E = np.multiply.outer(self.gamma, self.values)
        E -= self.shift[:, None]
        np.exp(E, out=E)
        E *= self.counts
        return E

    @property
    def value_probs(self) -> np.ndarray:
        """Tilted probability of each distinct value, one row per grid point."""
        return self.terms / self.normaliser[:, None]

    def mixed_value_probs(self) -> np.ndarray:
        # grid points with negligible posterior weight contribute nothing measurable
        keep = self.weights > 1e-300
        E = np.multiply.outer(self.gamma[keep], self.values)
        E -= self.shift[keep, None]
        np.exp(E, out=E)
        return ((self.weights[keep] / self.normaliser[keep]) @ E) * self.counts

    def solutions(self, history) -> list[tuple[float, float, TiltSolution]]:
        history = _as_history(history)
        return [
            (float(m), float(w), _solution_from_gamma(history, float(g), self.tau, float(m)))
            for m, w, g in zip(self.mu0, self.weights, self.gamma)
        ]


def etel_grid(history: History, config: EtelConfig) -> np.ndarray:
    G = config.grid_size
    if config.tau > 0:
        return np.arange(1, G + 1, dtype=float) / (G + 1)
    values, _ = history.unique()
    lo, hi = values[0], values[-1]
    delta = 1e-9 * (hi - lo)
    return np.linspace(lo + delta, hi - delta, G)


def betel_pseudo_posterior(history, config: EtelConfig, gamma_init=None):
    """Pseudo-posterior over a grid of candidate means.

    Returns ``None`` (the safe-default sentinel) when the history cannot
    support a tilt: empty, or a single distinct value with ``tau = 0``.
    """
    history = _as_history(history)
    tau = config.tau
    if history.n == 0:
        return None
    values, counts = history.unique()
    if tau == 0 and values.size < 2:
        return None
    mu0 = etel_grid(history, config)
    gamma, shift, Z = _solve_gamma(values, counts, tau, mu0, gamma0=gamma_init)
    # sum_i log w_i with log w_i = gamma * X_i - shift - log Z
    loglik = gamma * float(counts @ values) - float(counts.sum()) * (shift + np.log(Z))
    logprior = (
        xlogy(config.prior_a - 1.0, mu0) + xlog1py(config.prior_b - 1.0, -mu0)
        - betaln(config.prior_a, config.prior_b)
    )
    logpost = loglik + logprior
    post = np.exp(logpost - logpost.max())
    post /= post.sum()
    if tau > 0:
        mass0 = 0.5 * tau * np.exp(-shift) / Z
        mass1 = 0.5 * tau * np.exp(gamma - shift) / Z
    else:
        mass0 = mass1 = np.zeros_like(mu0)
    return PseudoPosterior(
        mu0=mu0,
        weights=post,
        gamma=gamma,
        log_likelihood=loglik,
        values=values,
        counts=counts,
        tau=tau,
        shift=shift,
        normaliser=Z,
        mass0=mass0,
        mass1=mass1,
    )


def etel_predictive(history, config: EtelConfig, posterior: PseudoPosterior | None = None) -> PredictiveDistribution:
    history = _as_history(history)
    if posterior is None:
        posterior = betel_pseudo_posterior(history, config)
    if posterior is None:
        return PredictiveDistribution.sentinel()
    pi = posterior.weights
    atom_x = posterior.values
    atom_w = posterior.mixed_value_probs()
    if posterior.tau > 0:
        atom_x = np.concatenate([[0.0], atom_x, [1.0]])
        atom_w = np.concatenate([[pi @ posterior.mass0], atom_w, [pi @ posterior.mass1]])
    atom_w = atom_w / atom_w.sum()
    return PredictiveDistribution._trusted(atom_x=atom_x, atom_w=atom_w)


# --------------------------------------------------------------------------
# stateful predictors used by the streaming engine
# --------------------------------------------------------------------------

class Predictor:
    """Base class: keeps the history and yields the next-step predictive."""

    name = "base"

    def __init__(self):
        self.history = History()

    def update(self, x: float) -> None:
        self.history.append(x)

    def predictive(self) -> PredictiveDistribution:
        raise NotImplementedError


class EmpiricalPredictor(Predictor):
    name = "empirical"

    def predictive(self) -> PredictiveDistribution:
        return empirical_predictive(self.history)


class ParametricPredictor(Predictor):
    name = "parametric"

    def __init__(self, prior: BetaPrior, k_rho: int = 40, k_nu: int = 25, bins: int = BETA_BINS):
        super().__init__()
        self.posterior = beta_posterior_init(prior, k_rho, k_nu)
        self.bins = bins

    def update(self, x: float) -> None:
        super().update(x)
        self.posterior = beta_posterior_update(self.posterior, x)

    def predictive(self) -> PredictiveDistribution:
        return beta_posterior_predictive(self.posterior, self.bins)


class MdpPredictor(ParametricPredictor):
    name = "mdp"

    def __init__(self, prior: BetaPrior, kappa: float = 50.0, **kwargs):
        super().__init__(prior, **kwargs)
        self.kappa = MdpConfig(kappa).kappa

    def predictive(self) -> PredictiveDistribution:
        m = self.history.n
        if self.kappa == 0:
            param = PredictiveDistribution.sentinel()
        else:
            param = beta_posterior_predictive(self.posterior, self.bins)
        if m == 0:
            return param
        return mdp_predictive(param, self.history, self.kappa)


class EtelPredictor(Predictor):
    def __init__(self, config: EtelConfig):
        super().__init__()
        self.config = config
        self._previous = None
        self.name = "retel" if config.tau > 0 else "betel"

    def pseudo_posterior(self):
        warm = None
        if self._previous is not None and self.history.n:
            # gamma is increasing in mu0, so interpolation onto a moved hull grid is a good start
            old_mu, old_gamma = self._previous
            warm = np.interp(etel_grid(self.history, self.config), old_mu, old_gamma)
        post = betel_pseudo_posterior(self.history, self.config, gamma_init=warm)
        if post is not None:
            self._previous = (post.mu0, post.gamma)
        return post

    def predictive(self) -> PredictiveDistribution:
        return etel_predictive(self.history, self.config, posterior=self.pseudo_posterior())
