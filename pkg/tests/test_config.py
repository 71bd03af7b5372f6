import json

import numpy as np
import pytest

from driftbayes.basis import IndicatorPartition
from driftbayes.config import DEFAULTS, Polynomial, RunConfig, build_drift, strip_comments
from driftbayes.errors import ConfigError
from driftbayes.hierarchical import HierPrior
from driftbayes.posterior import GaussianPrior, spectral_precisions


def test_defaults_are_valid():
    cfg = RunConfig()
    assert cfg.seed == 0 and cfg.raw == DEFAULTS
    assert isinstance(cfg.prior(), GaussianPrior)


def test_comment_lines_are_ignored():
    text = """
    // simulation settings
    {
      # the root seed
      "seed": 7,
      "simulate": {"T": 5.0, "n_steps": 500}
    }
    """
    cfg = RunConfig.from_text(text)
    assert cfg.seed == 7 and cfg["simulate"]["T"] == 5.0 and cfg["simulate"]["x0"] == 0.0
    assert "seed" not in strip_comments('# "seed": 1')


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"simulate": {"T": -1.0}},
    {"simulate": {"n_steps": 100, "obs_every": 3}},
    {"seed": -1},
    {"seed": 1.5},
    {"mcmc": {"n_iter": 10, "burn_in": 10}},
    {"bands": {"level": 1.2}},
    {"bands": {"lo": 1.0}},
    {"prior": {"kind": "spectral", "eta": 0.02, "p": 1}},
    {"prior": {"kind": "spectral", "eta": 0.02, "delta": -1.0}},
    {"prior": {"kind": "mystery"}},
    {"drift": {"kind": "basis"}},
    {"basis": "wavelet"},
    {"contract": {"horizons": [400.0, 100.0]}},
    {"contract": {"horizons": []}},
])
def test_invalid_configs_rejected(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


def test_bad_json_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "nope.json")


def test_kappa_maps_to_delta():
    cfg = RunConfig.from_dict({"prior": {"kind": "spectral", "eta": 0.5, "kappa": 2.0, "p": 2, "m": 4}})
    assert np.allclose(cfg.prior().precision.diagonal(), spectral_precisions(0.5, 1.0, 2, 4))


def test_hierarchical_prior_rules():
    cfg = RunConfig.from_dict({"prior": {"kind": "hierarchical", "J_max": 3, "weights": "uniform",
                                         "xi2": "pair-power:4", "a": 3.0, "b_rate": 0.5}})
    p = cfg.prior()
    assert isinstance(p, HierPrior) and p.J_max == 3 and p.a == 3.0
    assert np.allclose(p.model_weights, 1 / 3)
    assert np.allclose(p.xi2, [1, 1, 1 / 16, 1 / 16, 1 / 81, 1 / 81])
    geo = RunConfig.from_dict({"prior": {"kind": "hierarchical", "J_max": 2}}).prior()
    assert np.allclose(geo.model_weights, [2 / 3, 1 / 3])


def test_gaussian_prior_on_indicators():
    cfg = RunConfig.from_dict({"basis": "indicator interval=-2..2 cells=20",
                               "prior": {"kind": "gaussian", "m": 20, "variance": 4.0}})
    assert isinstance(cfg.family(), IndicatorPartition)
    assert np.allclose(cfg.prior().variances, 4.0)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"basis": "indicator interval=-2..2 cells=20",
                             "prior": {"kind": "spectral", "eta": 0.02}})


def test_drift_kinds():
    assert build_drift({"kind": "zero"})(0.3) == 0.0
    poly = build_drift({"kind": "polynomial", "coeffs": [1.0, 2.0]})
    assert isinstance(poly, Polynomial) and poly(2.0) == 5.0
    assert poly.scalar_fn()(2.0) == 5.0
    x = np.linspace(0, 1, 11)
    minus_dv = 2 * np.pi * 0.4 * np.sin(2 * np.pi * x) + 6 * np.pi * 0.6 * np.sin(6 * np.pi * x)
    assert np.allclose(build_drift({"kind": "butane"})(x), minus_dv, atol=1e-12)
    with pytest.raises(ConfigError):
        build_drift({"kind": "nope"})


def test_with_seed_and_echo():
    cfg = RunConfig.from_dict({"seed": 3}).with_seed(11)
    assert cfg.seed == 11
    json.dumps(cfg.raw)
