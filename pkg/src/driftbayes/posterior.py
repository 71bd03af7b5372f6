"""Gaussian priors on basis coefficients and the conjugate posterior.

With prior ``c ~ N(0, Lambda)`` and likelihood ``exp(c.mu - c.Sigma.c / 2)``
the posterior is ``N(P^{-1} mu, P^{-1})`` with precision ``P = Sigma +
Lambda^{-1}``.

The spectral prior is the diagonal prior whose precision eigenvalues on the
Fourier family are ``eta (4 pi^2 ceil(k/2)^2)^p + delta``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg, stats

from .basis import BasisFamily
from .errors import ConditioningError
from .likelihood import SufficientStats
from .rng import as_generator


@dataclass(frozen=True)
class GaussianPrior:
    """Centred Gaussian prior ``N(0, covariance)`` on ``m`` coefficients."""

    covariance: np.ndarray = field(repr=False)
    precision: np.ndarray = field(repr=False)

    def __post_init__(self):
        cov = np.array(self.covariance, dtype=float)
        prec = np.array(self.precision, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape != prec.shape:
            raise ValueError("covariance and precision must be matching square matrices")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=0):
            raise ValueError("covariance must be symmetric")
        for a in (cov, prec):
            a.setflags(write=False)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "precision", prec)

    @property
    def m(self) -> int:
        return self.covariance.shape[0]

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.covariance).copy()

    @classmethod
    def diagonal(cls, variances) -> "GaussianPrior":
        v = np.asarray(variances, dtype=float).ravel()
        if v.size < 1 or not np.all(v > 0) or not np.all(np.isfinite(v)):
            raise ValueError("prior variances must be positive and finite")
        return cls(np.diag(v), np.diag(1.0 / v))

    @classmethod
    def from_covariance(cls, cov) -> "GaussianPrior":
        cov = np.asarray(cov, dtype=float)
        ev = np.linalg.eigvalsh(0.5 * (cov + cov.T))
        if ev[0] <= 0:
            raise ValueError(f"covariance is not positive definite (min eigenvalue {ev[0]:.3e})")
        return cls(cov, np.linalg.inv(cov))


def spectral_precisions(eta: float, delta: float, p: int, m: int) -> np.ndarray:
    """``lambda_k^{-1} = eta (4 pi^2 ceil(k/2)^2)^p + delta`` for ``k = 1..m``."""
    _check_spectral(eta, delta, p)
    if m < 1:
        raise ValueError("m must be >= 1")
    freq = np.ceil(np.arange(1, m + 1) / 2.0)
    return eta * (4.0 * math.pi**2 * freq**2) ** p + delta


def _check_spectral(eta, delta, p):
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if int(p) != p or p < 2:
        raise ValueError(f"p must be an integer >= 2, got {p}")


def truncation_level(eta: float, delta: float, p: int, ratio: float = 1e-8, m_max: int = 100_000) -> int:
    """Smallest even ``m`` with ``lambda_m / lambda_1 < ratio``."""
    _check_spectral(eta, delta, p)
    # Ratio of the stored variances, so the default level agrees with the prior it builds.
    lam = 1.0 / spectral_precisions(eta, delta, p, m_max)
    hits = np.flatnonzero(lam[1::2] / lam[0] < ratio)
    if hits.size:
        return 2 * (int(hits[0]) + 1)
    raise ValueError(f"variance ratio {ratio} not reached within m_max={m_max} (delta too large?)")


def spectral_prior(eta: float, delta: float, p: int, m: int | None = None, ratio: float = 1e-8) -> GaussianPrior:
    """Diagonal prior with the precision-operator eigenvalues.

    ``m`` defaults to :func:`truncation_level` at ``ratio``.  ``delta`` here
    is the additive constant in the eigenvalues, i.e. ``eta * kappa`` for the
    operator ``eta((-Laplacian)^p + kappa I)``.
    """
    if m is None:
        m = truncation_level(eta, delta, p, ratio)
    prec = spectral_precisions(eta, delta, p, m)
    return GaussianPrior(np.diag(1.0 / prec), np.diag(prec))


@dataclass(frozen=True)
class GaussianPosterior:
    """``N(mean, precision^{-1})``; immutable, holds its Cholesky factor."""

    mean: np.ndarray = field(repr=False)
    precision: np.ndarray = field(repr=False)
    chol: np.ndarray = field(repr=False, compare=False)

    @property
    def m(self) -> int:
        return self.mean.size

    @property
    def covariance(self) -> np.ndarray:
        Linv = linalg.solve_triangular(self.chol, np.eye(self.m), lower=True)
        return Linv.T @ Linv

    def to_json(self) -> str:
        return json.dumps({"m": self.m, "mean": self.mean.tolist(), "precision": self.precision.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "GaussianPosterior":
        d = json.loads(text)
        prec = np.asarray(d["precision"], dtype=float)
        return cls(np.asarray(d["mean"], dtype=float), prec, _cholesky(prec))


def _cholesky(precision: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(precision)
    except np.linalg.LinAlgError:
        ev = np.linalg.eigvalsh(precision)
        raise ConditioningError("posterior precision is not positive definite", float(ev[0])) from None


def gaussian_posterior(mu, sigma, prior_precision) -> GaussianPosterior:
    """Posterior from raw ``mu``, ``Sigma`` and prior precision arrays."""
    precision = np.asarray(sigma) + np.asarray(prior_precision)
    precision = 0.5 * (precision + precision.T)
    L = _cholesky(precision)
    mean = linalg.cho_solve((L, True), np.asarray(mu, dtype=float))
    return GaussianPosterior(mean, precision, L)


def posterior(stats: SufficientStats, prior: GaussianPrior) -> GaussianPosterior:
    """Conjugate update: precision ``Sigma + Lambda^{-1}``, mean solving ``P c = mu``.

    Raises
    ------
    ConditioningError
        If the precision is not positive definite; reports its smallest
        eigenvalue.
    """
    if stats.m != prior.m:
        raise ValueError(f"statistics have m={stats.m} but prior has m={prior.m}")
    return gaussian_posterior(stats.mu, stats.sigma, prior.precision)


def sample_coeffs(post: GaussianPosterior, rng=None, size: int | None = None) -> np.ndarray:
    """Exact draws ``mean + L^{-T} z`` where ``precision = L L^T``."""
    rng = as_generator(rng)
    n = 1 if size is None else size
    z = rng.standard_normal((post.m, n))
    draws = post.mean[:, None] + linalg.solve_triangular(post.chol, z, lower=True, trans="T")
    return draws[:, 0] if size is None else draws.T


@dataclass
class Bands:
    x: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sd: np.ndarray
    level: float
    mc_lower: np.ndarray | None = None
    mc_upper: np.ndarray | None = None

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def to_csv(self, dest) -> None:
        buf = io.StringIO()
        buf.write("x,mean,lower,upper\n")
        for row in zip(self.x, self.mean, self.lower, self.upper):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        Path(dest).write_text(buf.getvalue())

    @classmethod
    def from_csv(cls, src, level: float = float("nan")) -> "Bands":
        d = np.loadtxt(src, delimiter=",", skiprows=1, ndmin=2)
        return cls(d[:, 0], d[:, 1], d[:, 2], d[:, 3], (d[:, 3] - d[:, 2]) / 2, level)


def credible_bands(post: GaussianPosterior, family: BasisFamily, x_grid, level: float = 0.95,
                   n_draws: int = 0, rng=None) -> Bands:
    """Pointwise posterior mean and equal-tailed Gaussian credible bands.

    ``sd(x)^2 = psi(x)^T Lambda_T psi(x)``.  When ``n_draws > 0`` Monte Carlo
    quantile bands from exact posterior draws are attached for cross-checking.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    x = np.asarray(x_grid, dtype=float).ravel()
    D = family.design(x, post.m)
    mean = D @ post.mean
    V = linalg.solve_triangular(post.chol, D.T, lower=True)
    sd = np.sqrt(np.sum(V * V, axis=0))
    z = stats.norm.ppf(0.5 + level / 2)
    bands = Bands(x, mean, mean - z * sd, mean + z * sd, sd, level)
    if n_draws:
        draws = sample_coeffs(post, rng, size=n_draws) @ D.T
        bands.mc_lower, bands.mc_upper = np.quantile(draws, [0.5 - level / 2, 0.5 + level / 2], axis=0)
    return bands


# -- regularity of prior draws ----------------------------------------------

def increment_scaling_exponent(samples, lags, order: int) -> float:
    """Hölder exponent from ``E|Delta_h^r f|^2 ~ h^{2 alpha}`` on periodic grids.

    ``samples`` has shape ``(n_draws, n_grid)`` with values on ``i / n_grid``.
    """
    samples = np.atleast_2d(samples)
    n = samples.shape[1]
    msd = []
    for lag in lags:
        d = samples
        for _ in range(order):
            d = np.roll(d, -lag, axis=1) - d
        msd.append(np.mean(d * d))
    slope = np.polyfit(np.log(np.asarray(lags) / n), np.log(msd), 1)[0]
    return slope / 2.0


def prior_regularity(eta: float, delta: float, p: int, n_draws: int = 200, rng=None,
                     n_freq: int = 1024, n_grid: int = 8192, lags=(32, 64, 128, 256)) -> float:
    """Empirical Hölder exponent of spectral-prior draws.

    Draws use ``n_freq`` frequency pairs (``m = 2 n_freq``) and are evaluated
    on a grid by inverse FFT; differences of order ``p`` are used so that the
    exponent (expected just below ``p - 1/2``) is not saturated.
    """
    rng = as_generator(rng)
    lam = 1.0 / spectral_precisions(eta, delta, p, 2 * n_freq)
    c = rng.standard_normal((n_draws, 2 * n_freq)) * np.sqrt(lam)
    # sqrt2 (a sin + b cos) -> complex coefficient for irfft of length n_grid.
    spec = np.zeros((n_draws, n_grid // 2 + 1), dtype=complex)
    spec[:, 1:n_freq + 1] = (c[:, 1::2] - 1j * c[:, 0::2]) * (math.sqrt(2.0) / 2.0) * n_grid
    f = np.fft.irfft(spec, n=n_grid, axis=1)
    return increment_scaling_exponent(f, lags, order=int(p))
