"""Low-frequency data: bridge imputation inside a Gibbs sampler.

Given observations ``X_0, X_D, ..., X_{nD}`` the latent path between two
consecutive observations is a diffusion bridge.  On an Euler grid of
``inner_steps`` steps its law has density ``exp(w)`` relative to the Brownian
bridge with the same endpoints, where ``w`` is the segment Girsanov exponent.
Bridges are updated by independence Metropolis-Hastings with Brownian-bridge
proposals, which targets that discretized law exactly.

Random numbers for a sweep over all segments come from the stream keyed by
``(seed, IMPUTE, iteration, sweep)``.  Segment ``i`` always uses row ``i`` of
that stream's normals and entry ``i`` of its uniforms, so results are the same
whatever order the segments are processed in.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BasisFamily, DriftSpec
from .errors import DomainError
from .hierarchical import HierPrior, HierState, hier_sweep, initial_state
from .likelihood import SufficientStats, log_girsanov, stats_from_increments
from .paths import ObservationSet, SamplePath, brownian_bridges
from .posterior import GaussianPrior, posterior, sample_coeffs
from .rng import DRIFT, IMPUTE, INIT, as_generator, child_seed, stream


def segment_log_weight(segment: SamplePath, drift) -> float:
    """Left-point Girsanov exponent ``int b dX - 1/2 int b^2 dt`` of one segment."""
    return log_girsanov(segment, drift)


def log_weights(segments: np.ndarray, dt: float, drift) -> np.ndarray:
    """Row-wise Girsanov exponents of an ``(n, k + 1)`` array of segments."""
    segments = np.atleast_2d(segments)
    b = np.asarray(drift(segments[:, :-1]), dtype=float)
    if not np.all(np.isfinite(b)):
        raise DomainError("drift is not finite on the imputed path")
    dx = np.diff(segments, axis=1)
    return np.sum(b * dx, axis=1) - 0.5 * dt * np.sum(b * b, axis=1)


def bridge_acceptance_probability(current: SamplePath, proposal: SamplePath, drift) -> float:
    """``min(1, exp(w(proposal) - w(current)))``."""
    d = segment_log_weight(proposal, drift) - segment_log_weight(current, drift)
    return math.exp(min(0.0, d))


def mh_bridge_sweep(segments: np.ndarray, duration: float, drift, rng, order=None,
                    weights: np.ndarray | None = None):
    """One independence-MH update of every row of ``segments``.

    Parameters
    ----------
    segments : array, shape (n, k + 1)
        Current bridges; row ``i`` runs over one inter-observation gap.
    order : sequence of int, optional
        Process rows one at a time in this order instead of all at once.
        The outcome is identical either way.
    weights : array, optional
        Cached log weights of the current rows.

    Returns
    -------
    new_segments, accepted, new_weights
    """
    segments = np.atleast_2d(segments)
    n, k1 = segments.shape
    k = k1 - 1
    dt = duration / k
    rng = as_generator(rng)
    proposals = brownian_bridges(segments[:, 0], segments[:, -1], duration, k, rng)
    log_u = np.log(rng.random(n))
    if weights is None:
        weights = log_weights(segments, dt, drift)
    out = segments.copy()
    new_w = np.array(weights, dtype=float)
    accepted = np.zeros(n, dtype=bool)
    if order is None:
        w_prop = log_weights(proposals, dt, drift)
        accepted = log_u < w_prop - weights
        out[accepted] = proposals[accepted]
        new_w[accepted] = w_prop[accepted]
    else:
        for i in order:
            w_i = log_weights(proposals[i:i + 1], dt, drift)[0]
            if log_u[i] < w_i - weights[i]:
                out[i] = proposals[i]
                new_w[i] = w_i
                accepted[i] = True
    return out, accepted, new_w


def bridge_mh_update(segment: SamplePath, drift, rng=None) -> SamplePath:
    """One independence-MH step for a single bridge; endpoints are unchanged."""
    vals, _, _ = mh_bridge_sweep(segment.values[None, :], segment.duration, drift, rng)
    return SamplePath(segment.t0, segment.dt, vals[0])


@dataclass
class AugmentedState:
    """Observations plus imputed bridges, one row per gap.

    ``segments[i]`` covers ``[i D, (i + 1) D]`` on ``inner_steps`` steps and
    starts and ends on observations ``i`` and ``i + 1``.
    """

    obs: ObservationSet
    segments: np.ndarray = field(repr=False)
    drift: object = None
    hier: HierState | None = None

    @property
    def inner_steps(self) -> int:
        return self.segments.shape[1] - 1

    @property
    def dt(self) -> float:
        return self.obs.delta / self.inner_steps

    @property
    def path(self) -> SamplePath:
        """Segments glued into one path on ``[0, n D]``."""
        vals = np.empty(self.obs.n * self.inner_steps + 1)
        vals[:-1] = self.segments[:, :-1].ravel()
        vals[-1] = self.segments[-1, -1]
        return SamplePath(0.0, self.dt, vals)

    def stats(self, family: BasisFamily, m: int) -> SufficientStats:
        left = self.segments[:, :-1].ravel()
        dx = np.diff(self.segments, axis=1).ravel()
        return stats_from_increments(left, dx, self.dt, family, m)


def initial_segments(obs: ObservationSet, inner_steps: int, rng=None) -> np.ndarray:
    """Brownian bridges between consecutive observations."""
    v = obs.values
    return brownian_bridges(v[:-1], v[1:], obs.delta, inner_steps, rng)


def impute_full_path(obs: ObservationSet, drift, inner_steps: int = 64, rng=None,
                     segments: np.ndarray | None = None, order=None) -> AugmentedState:
    """One MH update of every bridge given a fixed drift.

    Starts from ``segments`` if given, else from Brownian bridges drawn from
    the first rows of ``rng``.
    """
    if inner_steps < 1:
        raise ValueError("inner_steps must be >= 1")
    rng = as_generator(rng)
    if segments is None:
        segments = initial_segments(obs, inner_steps, rng)
    if inner_steps == 1:
        return AugmentedState(obs, segments.copy(), drift)
    new, _, _ = mh_bridge_sweep(segments, obs.delta, drift, rng, order=order)
    return AugmentedState(obs, new, drift)


# -- Gibbs sampler ----------------------------------------------------------------

@dataclass(frozen=True)
class AugmentConfig:
    inner_steps: int = 64
    mh_sweeps: int = 5
    n_iter: int = 1000
    burn_in: int = 0
    thinning: int = 1

    def __post_init__(self):
        if self.inner_steps < 1 or self.mh_sweeps < 1:
            raise ValueError("inner_steps and mh_sweeps must be >= 1")
        if self.n_iter <= self.burn_in or self.burn_in < 0 or self.thinning < 1:
            raise ValueError("need n_iter > burn_in >= 0 and thinning >= 1")


@dataclass
class AugmentedChain:
    """Retained drift draws and per-segment bridge acceptance.

    For a conjugate prior ``j`` is ``1`` and ``s2`` is NaN throughout.
    """

    family: BasisFamily = field(repr=False)
    iters: np.ndarray = field(repr=False)
    j: np.ndarray = field(repr=False)
    s2: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    loglik: np.ndarray = field(repr=False)
    seg_acceptance: np.ndarray = field(repr=False)
    seg_acceptance_trace: np.ndarray = field(repr=False)
    jump_acceptance: float = float("nan")
    final: AugmentedState | None = field(default=None, repr=False)

    def __len__(self):
        return self.iters.size

    def drift_values(self, x_grid) -> np.ndarray:
        D = self.family.design(np.asarray(x_grid, dtype=float), self.theta.shape[1])
        return self.theta @ D.T

    def write_trace_csv(self, dest) -> None:
        """``iter,j,s2,loglik,acc_rate_seg_1,...`` with running acceptance rates."""
        n_seg = self.seg_acceptance.size
        buf = io.StringIO()
        buf.write(",".join(["iter", "j", "s2", "loglik"] + [f"acc_rate_seg_{i + 1}" for i in range(n_seg)]) + "\n")
        for r in range(len(self)):
            row = [str(int(self.iters[r])), str(int(self.j[r])), repr(float(self.s2[r])), repr(float(self.loglik[r]))]
            row += [repr(float(a)) for a in self.seg_acceptance_trace[r]]
            buf.write(",".join(row) + "\n")
        Path(dest).write_text(buf.getvalue())


def _seed_of(rng) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return child_seed(as_generator(rng))


def run_augmented_gibbs(obs: ObservationSet, prior, config: AugmentConfig = AugmentConfig(), rng=None,
                        family: BasisFamily | None = None) -> AugmentedChain:
    """Alternate bridge imputation and a drift update.

    Parameters
    ----------
    prior : GaussianPrior or HierPrior
        A conjugate prior on the first ``prior.m`` functions of ``family``,
        or a hierarchical prior (which carries its own family).
    rng : int or Generator
        An int is used directly as the root of the keyed streams.

    Each iteration runs ``config.mh_sweeps`` bridge sweeps under the current
    drift, then draws the drift given the glued path.  With
    ``inner_steps == 1`` there is nothing to impute and the observations are
    used as the path.
    """
    seed = _seed_of(rng)
    if isinstance(prior, HierPrior):
        family = prior.family
        m = prior.m_max
    elif isinstance(prior, GaussianPrior):
        if family is None:
            raise ValueError("a conjugate prior needs a basis family")
        m = prior.m
    else:
        raise TypeError(f"unsupported prior type {type(prior).__name__}")
    family.check_m(m)

    k = config.inner_steps
    n_seg = obs.n
    segments = initial_segments(obs, k, stream(seed, INIT, 0))
    state = AugmentedState(obs, segments, DriftSpec(family, np.zeros(m)))
    hier = initial_state(prior, stream(seed, INIT, 1)) if isinstance(prior, HierPrior) else None
    drift = state.drift
    if hier is not None:
        drift = DriftSpec(family, np.pad(hier.theta, (0, m - hier.theta.size)))

    n_keep = len(range(config.burn_in, config.n_iter, config.thinning))
    iters = np.empty(n_keep, dtype=int)
    js = np.ones(n_keep, dtype=int)
    s2s = np.full(n_keep, np.nan)
    thetas = np.zeros((n_keep, m))
    logliks = np.empty(n_keep)
    acc_trace = np.empty((n_keep, n_seg))
    acc = np.zeros(n_seg)
    n_updates = 0
    n_jump = n_prop = 0
    stats = state.stats(family, m)
    r = 0
    for it in range(config.n_iter):
        if k > 1:
            w = None
            for sweep in range(config.mh_sweeps):
                segments, accepted, w = mh_bridge_sweep(segments, obs.delta, drift,
                                                        stream(seed, IMPUTE, it, sweep), weights=w)
                acc += accepted
                n_updates += 1
            state.segments = segments
            stats = state.stats(family, m)
        drng = stream(seed, DRIFT, it)
        if hier is None:
            theta = sample_coeffs(posterior(stats, prior), drng)
        else:
            hier = hier_sweep(hier, stats, prior, drng)
            if prior.J_max > 1:
                n_prop += 1
                n_jump += hier.accepted
            theta = np.pad(hier.theta, (0, m - hier.theta.size))
        drift = DriftSpec(family, theta)
        if it >= config.burn_in and (it - config.burn_in) % config.thinning == 0:
            iters[r] = it
            thetas[r] = theta
            logliks[r] = stats.quad_form(theta)
            if hier is not None:
                js[r], s2s[r] = hier.j, hier.s2
            acc_trace[r] = acc / n_updates if n_updates else 1.0
            r += 1
    state.drift, state.hier = drift, hier
    rates = acc / n_updates if n_updates else np.ones(n_seg)
    return AugmentedChain(family, iters, js, s2s, thetas, logliks, rates, acc_trace,
                          n_jump / n_prop if n_prop else float("nan"), state)
