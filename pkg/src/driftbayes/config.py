"""Run configuration: a JSON document, optionally with comment lines.

Lines whose first non-blank characters are ``//`` or ``#`` are dropped before
parsing.  Every section is merged over its defaults and validated when the
file is loaded, so a bad value fails before any computation starts.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BasisFamily, DriftSpec, Fourier, parse_family
from .errors import ConfigError
from .hierarchical import HierPrior
from .posterior import GaussianPrior, spectral_prior

DEFAULTS: dict = {
    "seed": 0,
    "drift": {"kind": "polynomial", "coeffs": [0.0, 0.5, 0.0, -0.5]},
    "simulate": {"x0": 0.0, "T": 200.0, "n_steps": 20000, "obs_every": 1},
    "data": {"path": None, "observations": None},
    "basis": "fourier",
    "prior": {"kind": "spectral", "eta": 0.02, "delta": 0.0, "p": 2, "m": None, "ratio": 1e-8},
    "mcmc": {"n_iter": 2000, "burn_in": 500, "thinning": 1, "inner_steps": 64, "mh_sweeps": 5},
    "bands": {"level": 0.95, "n_grid": 201, "lo": None, "hi": None, "n_draws": 0},
    "contract": {"horizons": [100.0, 400.0, 1600.0], "n_seeds": 10, "dt": 0.01, "x0": 0.0},
    "diag": {"trace": None, "columns": None, "ess_threshold": 100.0, "rhat_threshold": 1.05},
    "plot": {"bands": None, "output": None, "title": None, "truth": False},
}

_COMMENT = re.compile(r"^\s*(//|#)")


def strip_comments(text: str) -> str:
    return "\n".join("" if _COMMENT.match(line) else line for line in text.splitlines())


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and k not in ("drift", "prior"):
            out[k] = _merge(base[k], v, where + k + ".")
        else:
            out[k] = v
    return out


def _pos(value, name, integer=False, allow_zero=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
    if ok and integer:
        ok = float(value).is_integer()
    if ok:
        ok = value >= 0 if allow_zero else value > 0
    if not ok:
        kind = "integer" if integer else "number"
        sign = "non-negative" if allow_zero else "positive"
        raise ConfigError(f"{name} must be a {sign} {kind}, got {value!r}")
    return int(value) if integer else float(value)


@dataclass
class RunConfig:
    """Validated configuration; ``raw`` is the merged document echoed in reports."""

    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls(_merge(DEFAULTS, d))

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(strip_comments(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def with_seed(self, seed: int) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = seed
        return RunConfig(raw)

    # -- validation ---------------------------------------------------------------

    def validate(self) -> None:
        r = self.raw
        seed = r["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        s = r["simulate"]
        _pos(s["T"], "simulate.T")
        _pos(s["n_steps"], "simulate.n_steps", integer=True)
        _pos(s["obs_every"], "simulate.obs_every", integer=True)
        if s["n_steps"] % s["obs_every"]:
            raise ConfigError("simulate.obs_every must divide simulate.n_steps")
        if not isinstance(s["x0"], (int, float)) or not math.isfinite(s["x0"]):
            raise ConfigError("simulate.x0 must be a finite number")
        self.family()
        self.drift()
        self.prior()
        mc = r["mcmc"]
        for k in ("n_iter", "inner_steps", "mh_sweeps", "thinning"):
            _pos(mc[k], f"mcmc.{k}", integer=True)
        _pos(mc["burn_in"], "mcmc.burn_in", integer=True, allow_zero=True)
        if mc["n_iter"] <= mc["burn_in"]:
            raise ConfigError("mcmc.n_iter must exceed mcmc.burn_in")
        b = r["bands"]
        if not (isinstance(b["level"], (int, float)) and 0 < b["level"] < 1):
            raise ConfigError(f"bands.level must lie in (0, 1), got {b['level']!r}")
        _pos(b["n_grid"], "bands.n_grid", integer=True)
        _pos(b["n_draws"], "bands.n_draws", integer=True, allow_zero=True)
        if (b["lo"] is None) != (b["hi"] is None) or (b["lo"] is not None and not b["lo"] < b["hi"]):
            raise ConfigError("bands.lo and bands.hi must both be given with lo < hi, or both omitted")
        c = r["contract"]
        hs = c["horizons"]
        if not isinstance(hs, list) or not hs:
            raise ConfigError("contract.horizons must be a non-empty list")
        for h in hs:
            _pos(h, "contract.horizons entry")
        if any(b_ <= a_ for a_, b_ in zip(hs, hs[1:])):
            raise ConfigError("contract.horizons must be strictly increasing")
        _pos(c["n_seeds"], "contract.n_seeds", integer=True)
        _pos(c["dt"], "contract.dt")
        d = r["diag"]
        _pos(d["ess_threshold"], "diag.ess_threshold")
        _pos(d["rhat_threshold"], "diag.rhat_threshold")

    # -- builders -----------------------------------------------------------------

    def family(self) -> BasisFamily:
        text = self.raw["basis"]
        if not isinstance(text, str):
            raise ConfigError("basis must be a string such as 'fourier'")
        try:
            return parse_family(text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad basis {text!r}: {exc}") from None

    def drift(self):
        """The data-generating drift as a vectorized callable."""
        return build_drift(self.raw["drift"])

    def prior(self):
        """A :class:`GaussianPrior` or a :class:`HierPrior`."""
        return build_prior(self.raw["prior"], self.family())


def build_drift(d: dict):
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("drift must be an object with a 'kind'")
    kind = d["kind"]
    try:
        if kind == "zero":
            return DriftSpec(Fourier(), [0.0])
        if kind == "basis":
            fam = parse_family(d.get("family", "fourier"))
            return DriftSpec(fam, d["coeffs"])
        if kind == "polynomial":
            return Polynomial(d["coeffs"])
        if kind == "butane":
            from .experiments import butane_like_drift
            return butane_like_drift(**{k: v for k, v in d.items() if k != "kind"})
    except KeyError as exc:
        raise ConfigError(f"drift of kind {kind!r} needs {exc}") from None
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"bad drift: {exc}") from None
    raise ConfigError(f"unknown drift kind {kind!r}")


class Polynomial:
    """``b(x) = sum_i coeffs[i] x^i``."""

    def __init__(self, coeffs):
        self.coeffs = np.array(coeffs, dtype=float).ravel()
        if self.coeffs.size < 1 or not np.all(np.isfinite(self.coeffs)):
            raise ValueError("polynomial needs finite coefficients")
        self._poly = np.polynomial.Polynomial(self.coeffs)

    def __call__(self, x):
        out = self._poly(np.asarray(x, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def scalar_fn(self):
        c = [float(v) for v in self.coeffs[::-1]]

        def f(x):
            s = 0.0
            for a in c:
                s = s * x + a
            return s
        return f


def _weights(rule, J: int) -> np.ndarray:
    if isinstance(rule, list):
        w = np.asarray(rule, dtype=float)
        if w.size != J:
            raise ConfigError("prior.weights must have J_max entries")
    else:
        name, _, arg = str(rule).partition(":")
        if name == "geometric":
            w = float(arg or 0.5) ** np.arange(J)
        elif name == "uniform":
            w = np.ones(J)
        else:
            raise ConfigError(f"unknown weight rule {rule!r}")
    if np.any(w <= 0):
        raise ConfigError("model weights must be positive")
    return w / w.sum()


def _xi2(rule, m: int) -> np.ndarray:
    if isinstance(rule, list):
        xi2 = np.asarray(rule, dtype=float)
        if xi2.size < m:
            raise ConfigError(f"prior.xi2 needs at least {m} entries")
        return xi2
    name, _, arg = str(rule).partition(":")
    idx = np.arange(1, m + 1, dtype=float)
    power = float(arg or 2.0)
    if name == "power":
        return idx ** -power
    if name == "pair-power":
        return np.ceil(idx / 2) ** -power
    raise ConfigError(f"unknown xi rule {rule!r}")


def build_prior(p: dict, family: BasisFamily):
    if not isinstance(p, dict) or "kind" not in p:
        raise ConfigError("prior must be an object with a 'kind'")
    kind = p["kind"]
    try:
        if kind == "spectral":
            if not isinstance(family, Fourier):
                raise ConfigError("the spectral prior is defined on the fourier basis")
            if p.get("kappa") is not None:
                delta = float(p["eta"]) * float(p["kappa"])
            else:
                delta = float(p.get("delta", 0.0))
            return spectral_prior(float(p.get("eta", 0.02)), delta, p.get("p", 2), p.get("m"),
                                  float(p.get("ratio", 1e-8)))
        if kind == "gaussian":
            m = int(p["m"])
            var = p.get("variances", p.get("variance", 1.0))
            var = np.broadcast_to(np.asarray(var, dtype=float), (m,))
            family.check_m(m)
            return GaussianPrior.diagonal(var)
        if kind == "hierarchical":
            J = int(p.get("J_max", 5))
            if J < 1:
                raise ConfigError("prior.J_max must be >= 1")
            levels = family.level_bounds(J)
            family.check_m(int(levels[-1]))
            w = _weights(p.get("weights", "geometric:0.5"), J)
            xi2 = _xi2(p.get("xi2", p.get("xi", "power:2")), int(levels[-1]))
            return HierPrior(family, levels, w, xi2, float(p.get("a", 2.0)), float(p.get("b_rate", 1.0)))
    except ConfigError:
        raise
    except (ValueError, TypeError, IndexError, KeyError) as exc:
        raise ConfigError(f"bad {kind} prior: {exc}") from None
    raise ConfigError(f"unknown prior kind {kind!r}")
