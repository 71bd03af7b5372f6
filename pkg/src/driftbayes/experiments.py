"""Reusable experiment drivers shared by the CLI and the test-suite."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as sstats

from .basis import DriftSpec, Fourier
from .hierarchical import HierPrior, run_chain
from .likelihood import occupation_fields, sufficient_statistics
from .paths import simulate_path
from .posterior import Bands, GaussianPrior, credible_bands, posterior, spectral_prior
from .rng import CHAIN, SIMULATE, stream

# Drift -x(x - 1)(x + 1) / 2 as power-series coefficients.
DOUBLE_WELL = (0.0, 0.5, 0.0, -0.5)

# Smooth periodic drift used for the contraction study.
SMOOTH_FOURIER = (1.0, -0.5, 0.4, 0.3, -0.2, 0.1)


def butane_like_drift(h1: float = 0.4, h3: float = 0.6) -> DriftSpec:
    """Synthetic periodic three-well drift ``-V'`` with
    ``V(x) = h1 cos(2 pi x) + h3 cos(6 pi x)``.

    A stand-in for a dihedral-angle series (angle rescaled to ``[0, 1)``);
    not fitted to any real data.
    """
    c = np.zeros(6)
    c[0] = 2 * math.pi * h1 / math.sqrt(2)
    c[4] = 6 * math.pi * h3 / math.sqrt(2)
    return DriftSpec(Fourier(), c)


def l2_error(coeffs, truth) -> float:
    """``L2([0, 1])`` distance of two Fourier drifts via Parseval."""
    a = np.asarray(coeffs, dtype=float)
    b = np.asarray(truth, dtype=float)
    n = max(a.size, b.size)
    return float(np.linalg.norm(np.pad(a, (0, n - a.size)) - np.pad(b, (0, n - b.size))))


def chain_bands(drift_draws: np.ndarray, x_grid, level: float) -> Bands:
    """Pointwise mean and equal-tailed quantile bands from drift draws."""
    lo, hi = np.quantile(drift_draws, [0.5 - level / 2, 0.5 + level / 2], axis=0)
    sd = drift_draws.std(axis=0, ddof=1)
    return Bands(np.asarray(x_grid, dtype=float), drift_draws.mean(axis=0), lo, hi, sd, level)


def pair_power_hier_prior(J_max: int = 10, power: float = 4.0, a: float = 2.0, b_rate: float = 1.0) -> HierPrior:
    """Fourier hierarchical prior with ``xi2_l = ceil(l / 2)^-power``."""
    fam = Fourier()
    levels = fam.level_bounds(J_max)
    w = 0.5 ** np.arange(J_max)
    xi2 = np.ceil(np.arange(1, levels[-1] + 1) / 2.0) ** -power
    return HierPrior(fam, levels, w / w.sum(), xi2, a, b_rate)


def band_comparison(seed: int, T: float = 50.0, dt: float = 0.002, m_x: int = 100, level: float = 0.95,
                    eta: float = 0.02, delta: float = 0.0, p: int = 2, n_iter: int = 3000,
                    burn_in: int = 500, drift: DriftSpec | None = None) -> dict:
    """Spectral vs hierarchical bands on one simulated periodic dataset.

    Returns the Spearman correlation of spectral band width with local time,
    and the mean band widths of both priors over the cells in the lowest
    local-time decile.
    """
    drift = drift or butane_like_drift()
    fam = Fourier()
    path = simulate_path(drift, 0.5, T, int(round(T / dt)), stream(seed, SIMULATE))
    occ = occupation_fields(path, m_x)
    sprior = spectral_prior(eta, delta, p)
    hprior = pair_power_hier_prior()
    st = sufficient_statistics(path, fam, max(sprior.m, hprior.m_max))
    spec = credible_bands(posterior(st.leading(sprior.m), sprior), fam, occ.grid, level)
    chain = run_chain(st.leading(hprior.m_max), hprior, n_iter, burn_in, rng=stream(seed, CHAIN), x_grid=occ.grid)
    hier = chain_bands(chain.drift, occ.grid, level)
    rho = float(sstats.spearmanr(spec.width, occ.local_time)[0])
    edge = occ.local_time <= np.quantile(occ.local_time, 0.1)
    return {"seed": seed, "rank_corr": rho, "spectral_edge_width": float(spec.width[edge].mean()),
            "hier_edge_width": float(hier.width[edge].mean()), "n_edge_cells": int(edge.sum())}


def contraction_experiment(truth=SMOOTH_FOURIER, horizons=(100.0, 400.0, 1600.0), n_seeds: int = 10,
                           dt: float = 0.01, x0: float = 0.0, prior: GaussianPrior | None = None,
                           seed: int = 0) -> dict:
    """L2 error of the conjugate posterior mean over increasing horizons.

    Each (horizon, replicate) pair simulates its own path from the stream
    ``(seed, SIMULATE, horizon index, replicate)``.  The log-log slope of the
    mean error against ``T`` is fitted by least squares; with a single
    horizon no slope is reported.
    """
    fam = Fourier()
    prior = prior or spectral_prior(0.02, 0.0, 2)
    drift = DriftSpec(fam, truth)
    errors = np.empty((len(horizons), n_seeds))
    for h, T in enumerate(horizons):
        n = int(round(T / dt))
        for r in range(n_seeds):
            path = simulate_path(drift, x0, T, n, stream(seed, SIMULATE, h, r))
            post = posterior(sufficient_statistics(path, fam, prior.m), prior)
            errors[h, r] = l2_error(post.mean, truth)
    mean = errors.mean(axis=1)
    out = {"horizons": [float(T) for T in horizons], "mean_error": mean.tolist(),
           "se_error": (errors.std(axis=1, ddof=1) / math.sqrt(n_seeds)).tolist() if n_seeds > 1 else None,
           "errors": errors.tolist(), "slope": None, "slope_se": None,
           "strictly_decreasing": bool(np.all(np.diff(mean) < 0))}
    if len(horizons) >= 2:
        fit = sstats.linregress(np.log(horizons), np.log(mean))
        out["slope"] = float(fit.slope)
        out["slope_se"] = float(fit.stderr) if len(horizons) > 2 else None
    return out
