import math

import numpy as np
import pytest

from driftbayes.basis import Fourier
from driftbayes.experiments import (butane_like_drift, chain_bands, contraction_experiment, l2_error,
                                    pair_power_hier_prior)
from driftbayes.posterior import spectral_prior


def test_l2_error_matches_quadrature():
    a, b = [0.3, -0.2, 0.5], [0.1, 0.4]
    x = (np.arange(4096) + 0.5) / 4096
    f = Fourier()
    diff = f.design(x, 3) @ np.array(a) - f.design(x, 2) @ np.array(b)
    assert l2_error(a, b) == pytest.approx(math.sqrt(np.mean(diff**2)), rel=1e-10)


def test_butane_like_drift_has_three_wells():
    d = butane_like_drift()
    x = np.linspace(0, 1, 4001)[:-1]
    b = d(x)
    # Stable equilibria: b changes sign from + to -.
    wells = np.sum((b > 0) & (np.roll(b, -1) <= 0))
    assert wells == 3


def test_chain_bands_quantiles():
    draws = np.random.default_rng(0).standard_normal((20_000, 3)) * [1.0, 2.0, 0.5]
    b = chain_bands(draws, [0.0, 0.5, 1.0], 0.95)
    assert np.allclose(b.upper, 1.96 * np.array([1.0, 2.0, 0.5]), rtol=0.05)
    assert np.allclose(b.mean, 0.0, atol=0.05)


def test_pair_power_prior():
    p = pair_power_hier_prior(J_max=3, power=4)
    assert np.allclose(p.xi2, [1, 1, 1 / 16, 1 / 16, 1 / 81, 1 / 81])


def test_contraction_single_horizon_has_no_slope():
    res = contraction_experiment(horizons=(20.0,), n_seeds=2, dt=0.02, prior=spectral_prior(0.02, 0.0, 2, 10))
    assert res["slope"] is None and len(res["errors"][0]) == 2
