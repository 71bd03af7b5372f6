"""Girsanov likelihood and the statistics through which data enter it.

For a drift ``b = sum_k c_k psi_k`` the log-likelihood of a unit-diffusion
path is the quadratic form ``c.mu - c.Sigma.c / 2`` with

    mu_k      = int psi_k(X_t) dX_t          (left-point Ito sum)
    Sigma_kl  = int psi_k(X_t) psi_l(X_t) dt  (left-point Riemann sum)

For periodic differentiable families the same numbers can be recovered from
the periodic local time ``L`` and the winding field ``chi`` of the path:

    Sigma_kl = int_0^1 psi_k psi_l L dx
    mu_k     = int_0^1 chi psi_k dx - 1/2 int_0^1 L psi_k' dx
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BasisFamily
from .errors import DomainError, UnsupportedFamily
from .paths import SamplePath

CHUNK = 1 << 16


@dataclass(frozen=True)
class SufficientStats:
    mu: np.ndarray
    sigma: np.ndarray
    horizon: float

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).ravel()
        sigma = np.array(self.sigma, dtype=float)
        if sigma.shape != (mu.size, mu.size):
            raise ValueError(f"sigma must be {mu.size}x{mu.size}, got {sigma.shape}")
        sigma = 0.5 * (sigma + sigma.T)
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def m(self) -> int:
        return self.mu.size

    @classmethod
    def empty(cls, m: int, horizon: float = 0.0) -> "SufficientStats":
        return cls(np.zeros(m), np.zeros((m, m)), horizon)

    def leading(self, k: int) -> "SufficientStats":
        """Statistics of the first ``k`` basis functions."""
        if not 1 <= k <= self.m:
            raise ValueError(f"cannot take {k} of {self.m} functions")
        return SufficientStats(self.mu[:k], self.sigma[:k, :k], self.horizon)

    def quad_form(self, c) -> float:
        """Log-likelihood ``c.mu - c.Sigma.c / 2`` of coefficients ``c``."""
        c = np.asarray(c, dtype=float)
        return float(c @ self.mu - 0.5 * c @ self.sigma @ c)

    def is_psd(self, rtol: float = 1e-8) -> bool:
        ev = np.linalg.eigvalsh(self.sigma)
        return bool(ev[0] >= -rtol * max(ev[-1], 0.0))

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        return SufficientStats(self.mu + other.mu, self.sigma + other.sigma, self.horizon + other.horizon)

    def to_json(self) -> str:
        return json.dumps({"m": self.m, "T": self.horizon, "mu": self.mu.tolist(),
                           "sigma": self.sigma.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "SufficientStats":
        d = json.loads(text)
        out = cls(d["mu"], d["sigma"], d["T"])
        if out.m != d["m"]:
            raise ValueError("m does not match the length of mu")
        return out


def log_girsanov(path: SamplePath, drift) -> float:
    """``int b(X) dX - 1/2 int b(X)^2 dt`` by left-point sums."""
    b = np.asarray(drift(path.values[:-1]), dtype=float)
    if not np.all(np.isfinite(b)):
        bad = int(np.argmin(np.isfinite(b)))
        raise DomainError(f"drift is not finite at grid point {bad} (x={path.values[bad]})")
    dx = np.diff(path.values)
    return float(b @ dx - 0.5 * path.dt * (b @ b))


def stats_from_increments(left, dx, dt: float, family: BasisFamily, m: int) -> SufficientStats:
    """Statistics from left endpoints and increments of (possibly glued) steps."""
    left = np.asarray(left, dtype=float).ravel()
    dx = np.asarray(dx, dtype=float).ravel()
    if left.shape != dx.shape:
        raise ValueError("need one increment per left endpoint")
    family.check_m(m)
    mu = np.zeros(m)
    gram = np.zeros((m, m))
    # Chunked so the design matrix stays small; sums are associative.
    for i in range(0, left.size, CHUNK):
        D = family.design(left[i:i + CHUNK], m)
        mu += D.T @ dx[i:i + CHUNK]
        gram += D.T @ D
    return SufficientStats(mu, dt * gram, dt * left.size)


def sufficient_statistics(path: SamplePath, family: BasisFamily, m: int) -> SufficientStats:
    """``mu`` and ``Sigma`` of the first ``m`` functions of ``family``."""
    v = path.values
    return stats_from_increments(v[:-1], np.diff(v), path.dt, family, m)


# -- occupation fields -------------------------------------------------------

@dataclass(frozen=True)
class OccupationFields:
    """Periodic local time and winding field on ``m_x`` cells of ``[0, 1)``.

    ``grid`` holds cell midpoints.  ``local_time`` is the occupation
    histogram (time spent with ``X mod 1`` in the cell, divided by the cell
    width); ``winding`` is the signed count of ``k`` with ``x + k`` strictly
    between ``X_0`` and ``X_T``.
    """

    grid: np.ndarray = field(repr=False)
    local_time: np.ndarray = field(repr=False)
    winding: np.ndarray = field(repr=False)
    horizon: float = 0.0

    @property
    def m_x(self) -> int:
        return self.grid.size

    @property
    def width(self) -> float:
        return 1.0 / self.grid.size

    def integrate(self, f_vals, weight: str = "local_time") -> float:
        """Midpoint rule ``int_0^1 f(x) w(x) dx`` for ``w`` one of the fields."""
        w = getattr(self, weight)
        return float(np.sum(np.asarray(f_vals) * w) * self.width)

    def to_csv(self, dest) -> None:
        buf = io.StringIO()
        buf.write("x,local_time,winding\n")
        for x, lt, wd in zip(self.grid, self.local_time, self.winding):
            buf.write(f"{float(x)!r},{float(lt)!r},{int(wd)}\n")
        Path(dest).write_text(buf.getvalue())

    @classmethod
    def from_csv(cls, src, horizon: float | None = None) -> "OccupationFields":
        data = np.loadtxt(src, delimiter=",", skiprows=1, ndmin=2)
        lt = data[:, 1]
        T = float(np.sum(lt) / lt.size) if horizon is None else horizon
        return cls(data[:, 0], lt, data[:, 2].astype(int), T)


def open_integer_count(lo, hi):
    """Number of integers ``k`` with ``lo < k < hi`` (zero when ``hi <= lo``)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return np.maximum(np.ceil(hi) - np.floor(lo) - 1, 0).astype(int)


def winding_field(x0: float, xT: float, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if xT > x0:
        return open_integer_count(x0 - grid, xT - grid)
    if xT < x0:
        return -open_integer_count(xT - grid, x0 - grid)
    return np.zeros(grid.shape, dtype=int)


def occupation_fields(path: SamplePath, m_x: int) -> OccupationFields:
    """Histogram local time and midpoint winding field of ``path`` modulo 1."""
    if m_x < 2:
        raise ValueError("need at least two cells")
    v = path.values
    u = np.mod(v[:-1], 1.0)
    idx = np.minimum((u * m_x).astype(np.int64), m_x - 1)
    counts = np.bincount(idx, minlength=m_x)
    local_time = counts * (path.dt * m_x)
    grid = (np.arange(m_x) + 0.5) / m_x
    return OccupationFields(grid, local_time, winding_field(v[0], v[-1], grid), path.duration)


def stats_from_occupation(fields: OccupationFields, family: BasisFamily, m: int) -> SufficientStats:
    """Sufficient statistics from ``(L, chi)`` by midpoint quadrature on ``[0, 1)``.

    Only valid for periodic, differentiable, zero-mean families (Fourier):
    the Ito integral is rewritten through the periodic antiderivative.

    Raises
    ------
    UnsupportedFamily
        For non-periodic or non-differentiable families.
    """
    if not family.periodic:
        raise UnsupportedFamily(f"{family.name} family is not periodic")
    x = fields.grid
    D = family.design(x, m)
    Dp = family.derivative_design(x, m)
    w = fields.width
    L = fields.local_time
    sigma = w * (D.T * L) @ D
    mu = w * (D.T @ fields.winding - 0.5 * (Dp.T @ L))
    return SufficientStats(mu, sigma, fields.horizon)
