"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line (shown in the terminal summary and
printed to stdout) before asserting.
"""

import math
import time

import numpy as np
from scipy import stats as sps

from conftest import ACCEPTANCE_LINES
from driftbayes.augment import AugmentConfig, bridge_acceptance_probability, mh_bridge_sweep, run_augmented_gibbs
from driftbayes.basis import Fourier, constant_family, linear_family, synthesize
from driftbayes.experiments import band_comparison, contraction_experiment
from driftbayes.hierarchical import HierPrior, run_chain
from driftbayes.likelihood import (SufficientStats, log_girsanov, occupation_fields, stats_from_occupation,
                                   sufficient_statistics)
from driftbayes.paths import refine_path, sample_brownian_bridge, simulate_path
from driftbayes.posterior import GaussianPrior, posterior, spectral_precisions
from driftbayes.rng import stream

# 0.02 (4 pi^2)^2 to 25 digits (mpmath).
INV_LAMBDA_1 = 31.17090913088077991566091

# Midpoint law of the OU bridge dX = -X dt + dW over [0, 1] from 0.8 to -0.4,
# from the Gaussian conditioning of the exact transition (mpmath).
OU_BRIDGE_MEAN = 0.17736377679401478173
OU_BRIDGE_VAR = 0.23105857863000487925


def verdict(n, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{elapsed:.1f}s / {budget:g}s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def grid_moments(variances, mu, sigma, n=400, half_width=6.0):
    m = len(mu)
    axis = -half_width + (np.arange(n) + 0.5) * (2 * half_width / n)
    pts = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), -1).reshape(-1, m)
    logw = -0.5 * np.sum(pts**2 / variances, axis=1) + pts @ mu - 0.5 * np.einsum("ni,ij,nj->n", pts, sigma, pts)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    mean = w @ pts
    dev = pts - mean
    return mean, (w[:, None] * dev).T @ dev


def test_criterion_1_conjugate_correctness():
    t0 = time.perf_counter()
    worst = 0.0
    for m in (1, 2):
        for seed in range(5):
            rng = np.random.default_rng(100 * m + seed)
            A = rng.standard_normal((m, m))
            sigma = A @ A.T + 0.5 * np.eye(m)
            mu = rng.uniform(-1, 1, m)
            var = rng.uniform(0.5, 2.0, m)
            post = posterior(SufficientStats(mu, sigma, 1.0), GaussianPrior.diagonal(var))
            mean, cov = grid_moments(var, mu, sigma)
            worst = max(worst, np.max(np.abs(post.mean - mean)), np.max(np.abs(np.diag(post.covariance - cov))))
    ok = verdict(1, worst < 1e-3, f"max |mean/variance - grid oracle| = {worst:.2e} (< 1e-3)",
                 time.perf_counter() - t0, 10)
    assert ok


def test_criterion_2_quadratic_form_identity():
    t0 = time.perf_counter()
    f = Fourier()
    worst = 0.0
    for i in range(100):
        rng = np.random.default_rng(i)
        m = int(rng.integers(1, 13))
        c = rng.standard_normal(m) * rng.uniform(0.1, 5)
        p = simulate_path(synthesize(f, rng.standard_normal(3)), rng.uniform(-1, 1), 2.0, 1000, rng=stream(2, i))
        s = sufficient_statistics(p, f, m)
        worst = max(worst, abs(s.quad_form(c) - log_girsanov(p, synthesize(f, c))))
    ok = verdict(2, worst < 1e-10, f"max identity error over 100 pairs = {worst:.2e} (< 1e-10)",
                 time.perf_counter() - t0, 5)
    assert ok


def test_criterion_3_occupation_field_equivalence():
    # Per entry is measured relative to the largest entry of the same statistic
    # (several entries of mu sit near zero), averaged over 12 paths for the trend.
    t0 = time.perf_counter()
    f = Fourier()
    levels = ((125_000, 512), (250_000, 1024), (500_000, 2048), (1_000_000, 4096))
    errs = np.empty((12, len(levels)))
    for r in range(12):
        path = simulate_path(lambda x: 0.0, 0.0, 0.25, levels[0][0], rng=stream(3, r))
        for i, (n, m_x) in enumerate(levels):
            if i:
                path = refine_path(path, 2, rng=stream(3, r, i))
            assert path.n_steps == n
            d = sufficient_statistics(path, f, 8)
            o = stats_from_occupation(occupation_fields(path, m_x), f, 8)
            errs[r, i] = max(np.max(np.abs(o.mu - d.mu)) / np.max(np.abs(d.mu)),
                             np.max(np.abs(o.sigma - d.sigma)) / np.max(np.abs(d.sigma)))
    mean = errs.mean(axis=0)
    final_worst = errs[:, -1].max()
    ok = final_worst < 0.02 and np.all(np.diff(mean) < 0)
    ok = verdict(3, ok, f"worst relative error at n=1e6 {final_worst:.4f} (< 0.02); mean over doublings "
                 f"{np.round(mean, 4).tolist()} decreasing", time.perf_counter() - t0, 60)
    assert ok


def test_criterion_4_eigenvalue_pairing():
    t0 = time.perf_counter()
    lam_inv = spectral_precisions(0.02, 0.0, 2, 6)
    pairs = bool(np.all(1 / lam_inv[0::2] == 1 / lam_inv[1::2]))
    ulp = abs(lam_inv[0] - INV_LAMBDA_1) / np.spacing(INV_LAMBDA_1)
    ok = verdict(4, pairs and ulp <= 2, f"lambda_1 == lambda_2: {pairs}; 1/lambda_1 = {float(lam_inv[0])!r}, "
                 f"{ulp:.0f} ulp from the 25-digit value", time.perf_counter() - t0, 1)
    assert ok


def test_criterion_5_local_time_identities():
    t0 = time.perf_counter()
    worst_lt, worst_w = 0.0, 0.0
    m_x = 1024
    for seed in range(50):
        T = 1.0 + seed % 5
        p = simulate_path(synthesize(Fourier(), [0.5, -0.3]), 0.2, T, 20_000, rng=stream(5, seed))
        occ = occupation_fields(p, m_x)
        worst_lt = max(worst_lt, abs(occ.integrate(np.ones(m_x)) - T) / T)
        worst_w = max(worst_w, abs(occ.integrate(np.ones(m_x), "winding") - (p.values[-1] - p.values[0])) * m_x)
    ok = verdict(5, worst_lt < 1e-8 and worst_w <= 1.0,
                 f"local time rel. error {worst_lt:.1e} (< 1e-8); winding error {worst_w:.3f} cell widths (<= 1)",
                 time.perf_counter() - t0, 30)
    assert ok


def test_criterion_6_bridge_exactness():
    t0 = time.perf_counter()
    a, c, D, k = -0.2, 0.9, 0.7, 32
    details, ok = [], True
    for name, drift in (("zero", synthesize(Fourier(), [0.0])), ("constant", synthesize(constant_family(), [1.3]))):
        failures = 0
        min_acc = 1.0
        for seed in range(20):
            segs = np.tile(np.linspace(a, c, k + 1), (2000, 1))
            w = None
            for sweep in range(3):
                segs, accepted, w = mh_bridge_sweep(segs, D, drift, stream(6, seed, sweep), weights=w)
                min_acc = min(min_acc, accepted.mean())
            cur = sample_brownian_bridge(a, c, D, k, stream(6, seed, 99))
            prop = sample_brownian_bridge(a, c, D, k, stream(6, seed, 100))
            min_acc = min(min_acc, bridge_acceptance_probability(cur, prop, drift) + 1e-12)
            p = sps.kstest(segs[:, k // 2], sps.norm((a + c) / 2, math.sqrt(D / 4)).cdf).pvalue
            failures += p < 0.01
        ok &= min_acc >= 1.0 and failures <= 2
        details.append(f"{name}: acceptance {min_acc:.3f}, {failures}/20 midpoint tests rejected")
    ok = verdict(6, ok, "; ".join(details), time.perf_counter() - t0, 60)
    assert ok


def test_criterion_7_ou_bridge_oracle():
    t0 = time.perf_counter()
    n_chains, k, sweeps = 10_000, 512, 50
    segs = np.tile(np.linspace(0.8, -0.4, k + 1), (n_chains, 1))
    w = None
    for s in range(sweeps):
        segs, _, w = mh_bridge_sweep(segs, 1.0, lambda x: -x, stream(7, s), weights=w)
    mid = segs[:, k // 2]
    se_mean = mid.std(ddof=1) / math.sqrt(n_chains)
    se_var = mid.var(ddof=1) * math.sqrt(2.0 / (n_chains - 1))
    z_mean = (mid.mean() - OU_BRIDGE_MEAN) / se_mean
    z_var = (mid.var(ddof=1) - OU_BRIDGE_VAR) / se_var
    ok = verdict(7, abs(z_mean) < 2 and abs(z_var) < 2,
                 f"midpoint mean {mid.mean():.4f} (oracle {OU_BRIDGE_MEAN:.4f}, {z_mean:+.2f} SE), "
                 f"variance {mid.var(ddof=1):.4f} (oracle {OU_BRIDGE_VAR:.4f}, {z_var:+.2f} SE)",
                 time.perf_counter() - t0, 120)
    assert ok


def test_criterion_8_prior_reproduction():
    t0 = time.perf_counter()
    prior = HierPrior.default(Fourier(), J_max=5, a=2.0, b_rate=1.0)
    empty = SufficientStats(np.zeros(prior.m_max), np.zeros((prior.m_max, prior.m_max)), 0.0)
    ch = run_chain(empty, prior, 1_000_000, rng=stream(8))
    thin = slice(0, None, 50)
    j = ch.j[thin]
    s2 = ch.s2[thin]
    counts = np.bincount(j, minlength=prior.J_max + 1)[1:]
    p_j = sps.chisquare(counts, counts.sum() * prior.model_weights).pvalue
    p_s2 = sps.kstest(s2, sps.invgamma(prior.a, scale=prior.b_rate).cdf).pvalue
    z1 = ch.theta[thin, 0] / np.sqrt(s2 * prior.xi2[0])
    p_t1 = sps.kstest(z1, "norm").pvalue
    last = np.array([prior.m(jj) - 1 for jj in j])
    z_last = ch.theta[thin][np.arange(j.size), last] / np.sqrt(s2 * prior.xi2[last])
    p_tl = sps.kstest(z_last, "norm").pvalue
    pvals = [p_j, p_s2, p_t1, p_tl]
    alpha = 0.01 / len(pvals)
    ok = verdict(8, min(pvals) > alpha,
                 f"p-values j {p_j:.3f}, s2 {p_s2:.3f}, theta_1 {p_t1:.3f}, theta_m_j {p_tl:.3f} "
                 f"(Bonferroni threshold {alpha:.4f}; 1e6 sweeps, every 50th kept)",
                 time.perf_counter() - t0, 300)
    assert ok


def test_criterion_9_augmentation_consistency():
    t0 = time.perf_counter()
    fam = linear_family()
    prior = GaussianPrior.diagonal([10.0])
    cfg = AugmentConfig(inner_steps=64, mh_sweeps=5, n_iter=300, burn_in=50)
    passes, zs = 0, []
    for seed in range(10):
        fine = simulate_path(synthesize(fam, [-1.0]), 0.0, 500.0, 128_000, rng=stream(9, seed))
        cont = posterior(sufficient_statistics(fine, fam, 1), prior)
        obs = fine.subsample(64)
        ch = run_augmented_gibbs(obs, prior, cfg, rng=seed, family=fam)
        z = (ch.theta[:, 0].mean() - cont.mean[0]) / math.sqrt(cont.covariance[0, 0])
        zs.append(round(float(z), 2))
        passes += abs(z) <= 3
    ok = verdict(9, passes >= 9, f"{passes}/10 seeds within 3 posterior sd; deviations in sd {zs}",
                 time.perf_counter() - t0, 600)
    assert ok


def test_criterion_10_figure_level_claims():
    t0 = time.perf_counter()
    res = [band_comparison(seed) for seed in range(5)]
    a = sum(r["rank_corr"] < 0 for r in res)
    b = sum(r["hier_edge_width"] >= r["spectral_edge_width"] for r in res)
    ok = verdict(10, a >= 3 and b >= 3,
                 f"(a) negative width/local-time rank correlation on {a}/5 seeds "
                 f"{[round(r['rank_corr'], 3) for r in res]}; (b) hierarchical edge bands at least as wide on "
                 f"{b}/5 seeds", time.perf_counter() - t0, 600)
    assert ok


def test_criterion_11_contraction_trend():
    t0 = time.perf_counter()
    res = contraction_experiment(horizons=(100.0, 400.0, 1600.0), n_seeds=10, seed=11)
    ok = verdict(11, res["strictly_decreasing"] and res["slope"] < 0,
                 f"mean L2 errors {np.round(res['mean_error'], 4).tolist()}, "
                 f"log-log slope {res['slope']:.3f}", time.perf_counter() - t0, 900)
    assert ok
