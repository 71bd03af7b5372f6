import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from driftbayes.basis import Fourier, linear_family, synthesize
from driftbayes.config import Polynomial
from driftbayes.errors import DomainError, SimulationDiverged
from driftbayes.paths import (ObservationSet, SamplePath, brownian_bridges, quadratic_variation,
                              read_observations_csv, read_path_csv, refine_path, sample_brownian_bridge,
                              simulate_path, simulate_paths, unit_diffusion_transform,
                              write_observations_csv, write_path_csv)
from driftbayes.rng import stream


def zero_drift(x):
    return 0.0 * x


# -- SamplePath / ObservationSet ---------------------------------------------------

def test_path_invariants():
    p = SamplePath(0.0, 0.5, [0.0, 1.0, 3.0])
    assert p.n_steps == 2 and p.duration == 1.0
    assert np.allclose(p.times, [0, 0.5, 1.0])
    with pytest.raises(ValueError):
        SamplePath(0.0, 0.1, [1.0])
    with pytest.raises(ValueError):
        SamplePath(0.0, 0.0, [1.0, 2.0])
    with pytest.raises(ValueError):
        SamplePath(0.0, 0.1, [1.0, np.nan])
    with pytest.raises(ValueError):
        ObservationSet(-1.0, [0.0, 1.0])


def test_subsample_keeps_every_kth_value():
    p = SamplePath(0.0, 0.1, np.arange(11.0))
    obs = p.subsample(5)
    assert obs.delta == pytest.approx(0.5)
    assert list(obs.values) == [0.0, 5.0, 10.0]
    with pytest.raises(ValueError):
        p.subsample(3)


# -- simulate_path ------------------------------------------------------------------

def test_zero_drift_gives_unit_variance_endpoint():
    ends = np.array([simulate_path(zero_drift, 0.0, 1.0, 10, stream(1, i)).values[-1] for i in range(10_000)])
    assert abs(ends.mean()) < 0.05
    assert ends.var() == pytest.approx(1.0, rel=0.05)


def test_ou_long_run_variance():
    path = simulate_path(synthesize(linear_family(), [-1.0]), 0.0, 5000.0, 500_000, rng=11)
    burn = 10_000
    assert np.var(path.values[burn:]) == pytest.approx(0.5, rel=0.10)


def test_double_well_stays_in_band():
    path = simulate_path(Polynomial([0.0, 0.5, 0.0, -0.5]), 0.0, 200.0, 200_000, rng=3)
    inside = np.mean(np.abs(path.values) <= 2.0)
    assert inside >= 0.99


def test_simulate_is_reproducible():
    drift = synthesize(Fourier(), [0.3, -0.2, 0.1])
    a = simulate_path(drift, 0.1, 2.0, 1000, rng=42)
    b = simulate_path(drift, 0.1, 2.0, 1000, rng=42)
    assert np.array_equal(a.values, b.values)
    assert a.dt == 2.0 / 1000


def test_fast_scalar_drift_matches_vectorized_evaluation():
    drift = synthesize(Fourier(), [0.3, -0.2, 0.1, 0.05, 0.7])
    f = drift.scalar_fn()
    xs = np.linspace(-3, 3, 101)
    assert np.allclose([f(x) for x in xs], drift(xs), atol=1e-12)


def test_divergence_names_the_step():
    with pytest.raises(SimulationDiverged) as exc:
        simulate_path(lambda x: x**3, 1.0, 10.0, 1000, rng=0)
    assert exc.value.step >= 0
    with pytest.raises(SimulationDiverged) as exc:
        simulate_path(lambda x: float("nan") if x > 0.5 else 0.0, 1.0, 1.0, 10, rng=0)
    assert exc.value.step == 0


def test_simulate_paths_matches_moments():
    out = simulate_paths(lambda x: -x, 0.0, 5.0, 500, 4000, rng=5)
    assert out.shape == (4000, 501)
    assert np.var(out[:, -1]) == pytest.approx(0.5 * (1 - math.exp(-10)), rel=0.08)


def test_zero_drift_increments_battery():
    """Increments should be iid N(0, dt): normality, scale and lag-1 independence."""
    failures = 0
    for seed in range(20):
        p = simulate_path(zero_drift, 0.0, 10.0, 2000, rng=seed)
        z = p.increments / math.sqrt(p.dt)
        pvals = [
            stats.kstest(z, "norm").pvalue,
            stats.normaltest(z).pvalue,
            stats.pearsonr(z[:-1], z[1:])[1],
        ]
        failures += min(pvals) < 0.01
    assert failures <= 2


# -- Brownian bridges --------------------------------------------------------------

def test_bridge_midpoint_variance():
    D = 0.8
    mids = brownian_bridges(np.zeros(10_000), 0.0, D, 64, rng=7)[:, 32]
    assert abs(mids.mean()) < 3 * math.sqrt(D / 4 / 10_000)
    assert mids.var() == pytest.approx(D / 4, rel=0.05)


def test_bridge_midpoint_mean_interpolates():
    mids = brownian_bridges(np.ones(10_000), 3.0, 1.0, 16, rng=8)[:, 8]
    assert mids.mean() == pytest.approx(2.0, rel=0.05)


def test_single_step_bridge_is_deterministic():
    p = sample_brownian_bridge(1.5, -2.0, 0.3, 1)
    assert list(p.values) == [1.5, -2.0]


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1e-3, 10), st.integers(1, 50), st.integers(0, 2**32))
@settings(max_examples=60, deadline=None)
def test_bridge_endpoints_exact(a, b, D, n, seed):
    p = sample_brownian_bridge(a, b, D, n, rng=seed)
    assert p.values[0] == a and p.values[-1] == b
    assert len(p) == n + 1


def test_bridge_rows_do_not_depend_on_other_rows():
    many = brownian_bridges(np.zeros(5), np.arange(5.0), 1.0, 10, stream(3))
    # Row 0 of a 5-row draw equals a 1-row draw from the same stream.
    one = brownian_bridges([0.0], [0.0], 1.0, 10, stream(3))
    assert np.array_equal(many[0], one[0])


def test_refine_keeps_original_points():
    p = simulate_path(zero_drift, 0.0, 1.0, 50, rng=1)
    q = refine_path(p, 4, rng=2)
    assert q.n_steps == 200 and q.dt == pytest.approx(p.dt / 4)
    assert np.array_equal(q.values[::4], p.values)


# -- quadratic variation -----------------------------------------------------------

def test_qv_of_line():
    t = np.arange(101) * 0.01
    qv = quadratic_variation(SamplePath(0.0, 0.01, t))
    assert qv[-1] == pytest.approx(0.01, rel=1e-12)


def test_qv_of_constant_is_zero():
    assert not np.any(quadratic_variation(SamplePath(0.0, 0.1, np.full(10, 2.5))))


def test_qv_of_unit_diffusion():
    for seed in range(5):
        p = simulate_path(synthesize(Fourier(), [0.5, 0.5]), 0.0, 10.0, 100_000, rng=seed)
        assert 9.5 <= quadratic_variation(p)[-1] <= 10.5


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=200))
def test_qv_nondecreasing_from_zero(vals):
    qv = quadratic_variation(SamplePath(0.0, 1.0, vals))
    assert qv[0] == 0.0
    assert np.all(np.diff(qv) >= 0)


# -- unit diffusion transform ------------------------------------------------------

def test_transform_identity():
    p = simulate_path(zero_drift, 0.3, 1.0, 1000, rng=4)
    q = unit_diffusion_transform(p, lambda x: np.ones_like(x))
    assert np.max(np.abs(q.values - p.values)) < 1e-10


def test_transform_constant_sigma():
    q = unit_diffusion_transform(SamplePath(0.0, 1.0, [0.0, 2.0, 4.0]), lambda x: 2.0 + 0 * x)
    assert np.allclose(q.values, [0.0, 1.0, 2.0], atol=1e-12)


def test_transform_makes_unit_diffusion():
    sigma = lambda x: 1.0 + x**2  # noqa: E731
    p = simulate_path(zero_drift, 0.0, 5.0, 200_000, rng=9, sigma=sigma)
    q = unit_diffusion_transform(p, sigma)
    assert quadratic_variation(q)[-1] == pytest.approx(5.0, rel=0.05)
    # F(x) = arctan(x) for this sigma.
    assert np.max(np.abs(q.values - np.arctan(p.values))) < 1e-8 * np.ptp(q.values)


def test_transform_rejects_nonpositive_sigma():
    with pytest.raises(DomainError):
        unit_diffusion_transform(SamplePath(0.0, 1.0, [-1.0, 1.0]), lambda x: x)


# -- CSV ------------------------------------------------------------------------------

def test_path_csv_roundtrip(tmp_path):
    p = simulate_path(zero_drift, 0.1, 1.0, 100, rng=1)
    write_path_csv(p, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().startswith("t,x\n")
    q = read_path_csv(tmp_path / "p.csv")
    assert np.array_equal(p.values, q.values)
    assert q.dt == pytest.approx(p.dt, rel=1e-12)


def test_observation_csv_roundtrip(tmp_path):
    obs = ObservationSet(0.25, [0.0, 0.1, -1.0 / 3.0])
    write_observations_csv(obs, tmp_path / "o.csv")
    text = (tmp_path / "o.csv").read_text()
    assert text.splitlines()[:2] == ["# delta=0.25", "k,x"]
    back = read_observations_csv(tmp_path / "o.csv")
    assert back.delta == 0.25 and np.array_equal(back.values, obs.values)
