"""MCMC trace diagnostics: batch-means ESS and split-chain R-hat."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DiagnosticsError

MIN_SAMPLES = 10


@dataclass(frozen=True)
class ESSResult:
    ess: float
    n: int
    batch_size: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"ess": self.ess, "n": self.n, "batch_size": self.batch_size, "degenerate": self.degenerate}


def _trace(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < MIN_SAMPLES:
        raise DiagnosticsError(f"need at least {MIN_SAMPLES} retained samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DiagnosticsError("trace contains non-finite values")
    return x


def batch_means_ess(trace, batch_size: int | None = None) -> ESSResult:
    """ESS ``= n var(x) / (b var(batch means))`` with ``b = floor(sqrt(n))``.

    A trace with zero variance is flagged as degenerate and given ESS 1.
    """
    x = _trace(trace)
    n = x.size
    b = batch_size or int(math.isqrt(n))
    n_batch = n // b
    if n_batch < 2:
        raise DiagnosticsError("batch size leaves fewer than two batches")
    var = np.var(x, ddof=1)
    if var == 0 or var <= 1e-14 * max(np.mean(x * x), 1e-300):
        return ESSResult(1.0, n, b, True)
    means = x[: n_batch * b].reshape(n_batch, b).mean(axis=1)
    sigma2 = b * np.var(means, ddof=1)
    if sigma2 <= 0:
        return ESSResult(float(n), n, b)
    return ESSResult(float(n * var / sigma2), n, b)


def split_rhat(*chains) -> float:
    """Potential scale reduction over the halves of every chain."""
    halves = []
    for c in chains:
        c = _trace(c)
        h = c.size // 2
        halves += [c[:h], c[c.size - h:]]
    n = min(h.size for h in halves)
    arr = np.stack([h[:n] for h in halves])
    means = arr.mean(axis=1)
    within = arr.var(axis=1, ddof=1).mean()
    between = n * means.var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else float("inf")
    var_plus = (n - 1) / n * within + between / n
    return float(math.sqrt(var_plus / within))


def acceptance_summary(rates) -> dict:
    r = np.asarray(rates, dtype=float).ravel()
    if r.size == 0:
        return {}
    return {"mean": float(r.mean()), "min": float(r.min()), "median": float(np.median(r)),
            "max": float(r.max()), "count": int(r.size)}


def summarize(columns: dict, ess_threshold: float = 100.0, rhat_threshold: float = 1.05) -> dict:
    """Diagnostics for each named trace column.

    Thresholds only set the ``ok`` flags; nothing is enforced.
    """
    out = {}
    for name, vals in columns.items():
        ess = batch_means_ess(vals)
        rhat = split_rhat(vals)
        out[name] = {**ess.to_dict(), "rhat": rhat,
                     "mean": float(np.mean(vals)), "sd": float(np.std(vals, ddof=1)),
                     "ess_ok": ess.ess >= ess_threshold, "rhat_ok": rhat <= rhat_threshold}
    return out
