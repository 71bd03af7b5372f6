"""Hierarchical truncated-series prior and its reversible-jump sampler.

Prior::

    j           ~ p(j),            j = 1..J_max
    s2          ~ IG(a, b_rate)
    theta | j,s2 ~ N(0, s2 * diag(xi2[:m_j]))
    b           = sum_{l <= m_j} theta_l psi_l

Within a model, ``theta`` and ``s2`` are updated by conjugate Gibbs steps.
Model jumps go to a neighbouring level and are accepted on the ratio of
model marginals with both ``theta`` and ``s2`` integrated out; an accepted
jump then draws ``(s2, theta)`` afresh from their joint conditional in the new
model, which keeps the joint posterior invariant.

The ``theta`` integral of a model marginal is Gaussian and done analytically
through the eigendecomposition of ``Xi^{1/2} Sigma Xi^{1/2}``; the remaining
``s2`` integral is done by adaptive quadrature over ``log s2``.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln

from .basis import BasisFamily, Fourier
from .errors import ConditioningError, QuadratureError
from .likelihood import SufficientStats, sufficient_statistics
from .paths import SamplePath
from .rng import as_generator

# Drop (in nats) below the peak at which the s2 integrand is truncated.
_TAIL_NATS = 50.0


@dataclass(frozen=True)
class HierPrior:
    family: BasisFamily
    levels: np.ndarray
    model_weights: np.ndarray
    xi2: np.ndarray
    a: float
    b_rate: float

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=int).ravel()
        w = np.asarray(self.model_weights, dtype=float).ravel()
        xi2 = np.asarray(self.xi2, dtype=float).ravel()
        if levels.size < 1 or levels[0] < 1 or np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be strictly increasing positive counts")
        if w.shape != levels.shape or np.any(w <= 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-12):
            raise ValueError("model weights must be positive, one per level, and sum to 1")
        if xi2.size < levels[-1] or np.any(xi2 <= 0) or np.any(np.diff(xi2) > 0):
            raise ValueError("need positive, nonincreasing xi2 for every basis function")
        if not (self.a > 0 and self.b_rate > 0):
            raise ValueError("inverse-gamma parameters must be positive")
        for arr in (levels, w, xi2):
            arr.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "model_weights", w)
        object.__setattr__(self, "xi2", xi2[:levels[-1]])

    @property
    def J_max(self) -> int:
        return self.levels.size

    @property
    def m_max(self) -> int:
        return int(self.levels[-1])

    def m(self, j: int) -> int:
        return int(self.levels[j - 1])

    @classmethod
    def default(cls, family: BasisFamily | None = None, J_max: int = 5, a: float = 2.0, b_rate: float = 1.0,
                weight_ratio: float = 0.5, xi_power: float = 2.0, xi2=None) -> "HierPrior":
        """Geometric ``p(j)`` with the given ratio and ``xi2_l = l^{-xi_power}``."""
        family = family or Fourier()
        levels = family.level_bounds(J_max)
        w = weight_ratio ** np.arange(J_max)
        if xi2 is None:
            xi2 = np.arange(1, levels[-1] + 1, dtype=float) ** -xi_power
        return cls(family, levels, w / w.sum(), xi2, a, b_rate)


@dataclass
class HierState:
    j: int
    s2: float
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        if not self.s2 > 0:
            raise ValueError("s2 must be positive")


def _check_state(state: HierState, prior: HierPrior):
    if not 1 <= state.j <= prior.J_max:
        raise ValueError(f"model index {state.j} outside 1..{prior.J_max}")
    if state.theta.size != prior.m(state.j):
        raise ValueError(f"theta has length {state.theta.size}, model {state.j} needs {prior.m(state.j)}")


def _is_empty(stats: SufficientStats) -> bool:
    return not (np.any(stats.mu) or np.any(stats.sigma))


# -- within-model Gibbs steps -------------------------------------------------

def gibbs_theta(state: HierState, stats: SufficientStats, prior: HierPrior, rng=None) -> np.ndarray:
    """Draw ``theta | j, s2, X`` from its Gaussian conditional."""
    rng = as_generator(rng)
    m = prior.m(state.j)
    if stats.m < m:
        raise ValueError(f"statistics cover {stats.m} functions, model {state.j} needs {m}")
    prior_var = state.s2 * prior.xi2[:m]
    mu = stats.mu[:m]
    sigma = stats.sigma[:m, :m]
    z = rng.standard_normal(m)
    if not (np.any(mu) or np.any(sigma)):
        return np.sqrt(prior_var) * z
    prec = sigma + np.diag(1.0 / prior_var)
    try:
        L = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise ConditioningError("theta conditional precision not positive definite",
                                float(np.linalg.eigvalsh(prec)[0])) from None
    mean = np.linalg.solve(L.T, np.linalg.solve(L, mu))
    return mean + np.linalg.solve(L.T, z)


def gibbs_s2(state: HierState, prior: HierPrior, rng=None) -> float:
    """Draw ``s2 ~ IG(a + m_j/2, b_rate + theta.Xi^{-1}.theta / 2)``."""
    rng = as_generator(rng)
    _check_state(state, prior)
    m = state.theta.size
    shape = prior.a + 0.5 * m
    rate = prior.b_rate + 0.5 * float(np.sum(state.theta**2 / prior.xi2[:m]))
    return rate / rng.gamma(shape)


# -- model marginals ------------------------------------------------------------

def _stirling_gap(a: float) -> float:
    """``a log a - a - lgamma(a)`` without cancellation for large ``a``."""
    if a < 50.0:
        return a * math.log(a) - a - float(gammaln(a))
    r = 1.0 / (a * a)
    corr = (1.0 / 12 - r * (1.0 / 360 - r * (1.0 / 1260 - r / 1680))) / a
    return 0.5 * math.log(a / (2.0 * math.pi)) - corr


class ModelEvidence:
    """Marginal likelihood of model ``j`` and the ``s2 | j, X`` law."""

    def __init__(self, j: int, stats: SufficientStats, prior: HierPrior):
        m = prior.m(j)
        if stats.m < m:
            raise ValueError(f"statistics cover {stats.m} functions, model {j} needs {m}")
        self.j, self.prior = j, prior
        self.trivial = _is_empty(stats.leading(m))
        xi = np.sqrt(prior.xi2[:m])
        A = xi[:, None] * stats.sigma[:m, :m] * xi[None, :]
        e, Q = np.linalg.eigh(0.5 * (A + A.T))
        self.e = np.clip(e, 0.0, None)
        self.v2 = (Q.T @ (xi * stats.mu[:m])) ** 2
        a, b = prior.a, prior.b_rate
        self._u_scale = math.log(b / a)
        self._ig_const = _stirling_gap(a)
        self._log_marginal = None
        self._grid = None

    def log_gaussian_part(self, s2):
        """``log int exp(theta.mu - theta.Sigma.theta/2) N(theta; 0, s2 Xi) dtheta``."""
        s2 = np.asarray(s2, dtype=float)[..., None]
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            # s2 v2 / (1 + s2 e) written to stay finite as s2 -> inf.
            quad = np.where(self.v2 == 0, 0.0, self.v2 / (1.0 / s2 + self.e))
            logdet = np.where(self.e == 0, 0.0, np.log1p(s2 * self.e))
        return np.sum(-0.5 * logdet + 0.5 * quad, axis=-1)

    def log_integrand(self, u):
        """Integrand over ``u = log s2`` (Jacobian included), in logs.

        Written in ``t = u - log(b/a)`` so that large shapes do not cancel:
        ``a log a - a - lgamma(a) - a (t + e^{-t} - 1)``.
        """
        u = np.asarray(u, dtype=float)
        a = self.prior.a
        t = u - self._u_scale
        with np.errstate(over="ignore"):
            ig = self._ig_const - a * (np.expm1(-t) + t)
            s2 = np.exp(u)
        out = self.log_gaussian_part(s2) + ig
        return np.where(np.isnan(out), -np.inf, out)

    def _bounds(self):
        a, b = self.prior.a, self.prior.b_rate
        u0 = math.log(b / (a + 1.0))
        grid = u0 + np.linspace(-60.0, 60.0, 4001)
        h = self.log_integrand(grid)
        i = int(np.nanargmax(h))
        res = optimize.minimize_scalar(lambda u: -float(self.log_integrand(u)),
                                       bounds=(grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]),
                                       method="bounded", options={"xatol": 1e-12})
        u_star = float(res.x) if -res.fun >= h[i] else float(grid[i])
        h_star = float(self.log_integrand(u_star))
        target = h_star - _TAIL_NATS

        def edge(direction):
            d = 1e-8
            while float(self.log_integrand(u_star + direction * d)) > target:
                d *= 2.0
                if d > 1e4:
                    raise QuadratureError("s2 integrand does not decay", {"j": self.j, "u_star": u_star})
            f = lambda u: float(self.log_integrand(u)) - target
            lo, hi = sorted((u_star + direction * d / 2, u_star + direction * d))
            return optimize.brentq(f, lo, hi, xtol=1e-12 * max(1.0, abs(u_star)))

        return u_star, h_star, edge(-1.0), edge(+1.0)

    def log_marginal(self) -> float:
        """``log int int exp(theta.mu - theta.Sigma.theta/2) dN dIG``."""
        if self._log_marginal is not None:
            return self._log_marginal
        if self.trivial:
            self._log_marginal = 0.0
            return 0.0
        u_star, h_star, lo, hi = self._bounds()
        f = lambda u: math.exp(float(self.log_integrand(u)) - h_star)
        total, err = 0.0, 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                for a_, b_, pts in ((lo, hi, [u_star]), (-np.inf, lo, None), (hi, np.inf, None)):
                    kw = {"points": pts} if pts else {}
                    val, e = integrate.quad(f, a_, b_, epsabs=0.0, epsrel=1e-9, limit=500, **kw)
                    total += val
                    err += e
            except integrate.IntegrationWarning as w:
                raise QuadratureError("s2 marginal quadrature failed",
                                      {"j": self.j, "u_star": u_star, "bounds": (lo, hi), "warning": str(w)}) from None
        if not (total > 0 and err <= 1e-8 * total):
            raise QuadratureError("s2 marginal quadrature inaccurate",
                                  {"j": self.j, "value": total, "abserr": err})
        self._log_marginal = h_star + math.log(total)
        return self._log_marginal

    def sample_s2(self, rng, n_grid: int = 8193) -> float:
        """Draw ``s2 | j, X`` (theta integrated out).

        Exact inverse-gamma draw without data; otherwise inverse-CDF sampling
        from a trapezoid table of the density on ``log s2``, covering all but
        ``exp(-50)`` of the peak density.
        """
        if self.trivial:
            return self.prior.b_rate / rng.gamma(self.prior.a)
        if self._grid is None:
            u_star, h_star, lo, hi = self._bounds()
            u = np.linspace(lo, hi, n_grid)
            dens = np.exp(self.log_integrand(u) - h_star)
            cum = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(u))))
            self._grid = (u, dens, cum)
        u, dens, cum = self._grid
        r = rng.random() * cum[-1]
        i = min(max(int(np.searchsorted(cum, r, side="right")) - 1, 0), u.size - 2)
        # The density is linear within a cell; invert its integral exactly.
        target = r - cum[i]
        du = u[i + 1] - u[i]
        f0, f1 = dens[i], dens[i + 1]
        slope = (f1 - f0) / du
        if abs(f1 - f0) <= 1e-9 * max(f0, f1):
            x = target / (0.5 * (f0 + f1))
        else:
            x = (-f0 + math.sqrt(max(f0 * f0 + 2.0 * slope * target, 0.0))) / slope
        return math.exp(u[i] + min(max(x, 0.0), du))


def log_model_marginal(j: int, stats: SufficientStats, prior: HierPrior) -> float:
    """Log marginal likelihood of model ``j``; ``0`` when there are no data."""
    if not 1 <= j <= prior.J_max:
        raise ValueError(f"model index {j} outside 1..{prior.J_max}")
    return ModelEvidence(j, stats, prior).log_marginal()


class EvidenceCache:
    """Per-statistics cache of :class:`ModelEvidence` objects."""

    def __init__(self, stats: SufficientStats, prior: HierPrior):
        self.stats, self.prior = stats, prior
        self._models: dict[int, ModelEvidence] = {}

    def __getitem__(self, j: int) -> ModelEvidence:
        ev = self._models.get(j)
        if ev is None:
            ev = self._models[j] = ModelEvidence(j, self.stats, self.prior)
        return ev


# -- reversible jump ------------------------------------------------------------

def _proposal_prob(j_from: int, J: int) -> float:
    return 1.0 if j_from in (1, J) else 0.5


def rj_log_acceptance(j: int, j_new: int, stats: SufficientStats, prior: HierPrior,
                      cache: EvidenceCache | None = None) -> float:
    """Log acceptance ratio of a jump ``j -> j_new`` (before ``min(0, .)``)."""
    cache = cache or EvidenceCache(stats, prior)
    J = prior.J_max
    w = prior.model_weights
    return (math.log(w[j_new - 1]) - math.log(w[j - 1])
            + cache[j_new].log_marginal() - cache[j].log_marginal()
            + math.log(_proposal_prob(j_new, J)) - math.log(_proposal_prob(j, J)))


def rj_acceptance_probability(j: int, j_new: int, stats: SufficientStats, prior: HierPrior,
                              cache: EvidenceCache | None = None) -> float:
    return math.exp(min(0.0, rj_log_acceptance(j, j_new, stats, prior, cache)))


def propose_model(j: int, J: int, rng) -> int:
    """Nearest-neighbour proposal, reflecting at ``1`` and ``J``."""
    if J == 1:
        return 1
    if j == 1:
        return 2
    if j == J:
        return J - 1
    return j + 1 if rng.random() < 0.5 else j - 1


def rj_step(state: HierState, stats: SufficientStats, prior: HierPrior, rng=None,
            cache: EvidenceCache | None = None) -> HierState:
    """One model-jump move; returns the (possibly unchanged) state.

    The returned state carries ``accepted`` as an attribute for bookkeeping.
    """
    rng = as_generator(rng)
    _check_state(state, prior)
    cache = cache or EvidenceCache(stats, prior)
    j_new = propose_model(state.j, prior.J_max, rng)
    if j_new == state.j:
        out = HierState(state.j, state.s2, state.theta)
        out.accepted = False
        return out
    log_alpha = rj_log_acceptance(state.j, j_new, stats, prior, cache)
    if math.log(rng.random()) >= log_alpha:
        out = HierState(state.j, state.s2, state.theta)
        out.accepted = False
        return out
    s2 = cache[j_new].sample_s2(rng)
    tmp = HierState(j_new, s2, np.zeros(prior.m(j_new)))
    out = HierState(j_new, s2, gibbs_theta(tmp, stats, prior, rng))
    out.accepted = True
    return out


# -- chains ---------------------------------------------------------------------

@dataclass
class HierChain:
    """Retained draws of a hierarchical chain.

    ``theta`` is zero-padded to ``m_max`` columns.
    """

    prior: HierPrior = field(repr=False)
    iters: np.ndarray = field(repr=False)
    j: np.ndarray = field(repr=False)
    s2: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    loglik: np.ndarray = field(repr=False)
    jump_acceptance: float = float("nan")
    x_grid: np.ndarray | None = field(default=None, repr=False)
    drift: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return self.j.size

    def model_frequencies(self) -> np.ndarray:
        return np.bincount(self.j, minlength=self.prior.J_max + 1)[1:] / max(len(self), 1)

    def drift_values(self, x_grid) -> np.ndarray:
        D = self.prior.family.design(np.asarray(x_grid, dtype=float), self.prior.m_max)
        return self.theta @ D.T

    def write_trace_csv(self, dest, extra: dict | None = None) -> None:
        """``iter,j,s2,loglik`` plus any per-row ``extra`` columns."""
        extra = extra or {}
        buf = io.StringIO()
        buf.write(",".join(["iter", "j", "s2", "loglik", *extra]) + "\n")
        cols = [np.asarray(v) for v in extra.values()]
        for r in range(len(self)):
            row = [str(int(self.iters[r])), str(int(self.j[r])), repr(float(self.s2[r])),
                   repr(float(self.loglik[r]))] + [repr(float(c[r])) for c in cols]
            buf.write(",".join(row) + "\n")
        Path(dest).write_text(buf.getvalue())

    def write_drift_csv(self, dest) -> None:
        """Wide CSV: one row per retained iteration, one column per grid point."""
        if self.drift is None:
            raise ValueError("chain was run without an x grid")
        buf = io.StringIO()
        buf.write(",".join(["iter"] + [f"x={float(x)!r}" for x in self.x_grid]) + "\n")
        for it, row in zip(self.iters, self.drift):
            buf.write(str(int(it)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
        Path(dest).write_text(buf.getvalue())


def initial_state(prior: HierPrior, rng=None) -> HierState:
    """A draw from the prior."""
    rng = as_generator(rng)
    j = int(rng.choice(prior.J_max, p=prior.model_weights)) + 1
    s2 = prior.b_rate / rng.gamma(prior.a)
    theta = np.sqrt(s2 * prior.xi2[:prior.m(j)]) * rng.standard_normal(prior.m(j))
    return HierState(j, s2, theta)


def hier_sweep(state: HierState, stats: SufficientStats, prior: HierPrior, rng,
               cache: EvidenceCache | None = None, order: str = "theta-first") -> HierState:
    """Model jump followed by the two within-model Gibbs updates."""
    state = rj_step(state, stats, prior, rng, cache)
    accepted = state.accepted
    if order == "theta-first":
        state.theta = gibbs_theta(state, stats, prior, rng)
        state.s2 = gibbs_s2(state, prior, rng)
    elif order == "s2-first":
        state.s2 = gibbs_s2(state, prior, rng)
        state.theta = gibbs_theta(state, stats, prior, rng)
    else:
        raise ValueError(f"unknown update order {order!r}")
    state.accepted = accepted
    return state


def run_chain(data, prior: HierPrior, n_iter: int, burn_in: int = 0, thinning: int = 1, rng=None,
              x_grid=None, init: HierState | None = None, order: str = "theta-first") -> HierChain:
    """Run the reversible-jump Gibbs sampler.

    Parameters
    ----------
    data : SufficientStats or SamplePath
        Statistics covering at least ``m_max`` functions, or a path from
        which they are computed.
    n_iter, burn_in, thinning : int
        Total sweeps, discarded leading sweeps, and retention stride.
    x_grid : array, optional
        If given, drift draws on this grid are stored for every retained
        iteration.
    """
    if n_iter <= burn_in or thinning < 1 or burn_in < 0:
        raise ValueError("need n_iter > burn_in >= 0 and thinning >= 1")
    rng = as_generator(rng)
    if isinstance(data, SamplePath):
        stats = sufficient_statistics(data, prior.family, prior.m_max)
    else:
        stats = data
    cache = EvidenceCache(stats, prior)
    state = init if init is not None else initial_state(prior, rng)
    _check_state(state, prior)

    n_keep = len(range(burn_in, n_iter, thinning))
    iters = np.empty(n_keep, dtype=int)
    js = np.empty(n_keep, dtype=int)
    s2s = np.empty(n_keep)
    thetas = np.zeros((n_keep, prior.m_max))
    logliks = np.empty(n_keep)
    n_acc = n_prop = 0
    r = 0
    mu, sig = stats.mu, stats.sigma
    for it in range(n_iter):
        state = hier_sweep(state, stats, prior, rng, cache, order)
        if prior.J_max > 1:
            n_prop += 1
            n_acc += state.accepted
        if it >= burn_in and (it - burn_in) % thinning == 0:
            m = state.theta.size
            iters[r], js[r], s2s[r] = it, state.j, state.s2
            thetas[r, :m] = state.theta
            th = state.theta
            logliks[r] = th @ mu[:m] - 0.5 * th @ sig[:m, :m] @ th
            r += 1
    chain = HierChain(prior, iters, js, s2s, thetas, logliks,
                      n_acc / n_prop if n_prop else float("nan"))
    if x_grid is not None:
        chain.x_grid = np.asarray(x_grid, dtype=float)
        chain.drift = chain.drift_values(chain.x_grid)
    return chain
