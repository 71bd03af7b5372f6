"""Basis families for drift expansions ``b = sum_k c_k psi_k``.

Indices ``k`` are 1-based throughout, matching the usual ``psi_1, psi_2, ...``
labelling; column ``k - 1`` of a design matrix holds ``psi_k``.

The Fourier family orders functions as ``psi_{2k-1}(x) = sqrt(2) sin(2 pi k x)``
and ``psi_{2k}(x) = sqrt(2) cos(2 pi k x)``.
"""

from __future__ import annotations

import bisect
import cmath
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import UnsupportedFamily

SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Periodic:
    period: float = 1.0


@dataclass(frozen=True)
class Compact:
    """Support ``[lo, hi)`` (or ``[lo, hi]`` if ``closed``); zero elsewhere."""

    lo: float
    hi: float
    closed: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi})")

    def mask(self, x):
        upper = (x <= self.hi) if self.closed else (x < self.hi)
        return (x >= self.lo) & upper

    def contains(self, x: float) -> bool:
        return self.lo <= x and (x <= self.hi if self.closed else x < self.hi)


class BasisFamily:
    """Interface shared by all families.

    Subclasses implement :meth:`design`; differentiable families also
    implement :meth:`derivative_design`.
    """

    name = "abstract"
    size: int | None = None  # None for infinite families
    periodic = False
    default_support = None

    def __init__(self, level_bounds: Sequence[int] | None = None):
        if level_bounds is not None:
            lb = np.asarray(level_bounds, dtype=int)
            if lb.ndim != 1 or lb.size == 0 or lb[0] < 1 or np.any(np.diff(lb) <= 0):
                raise ValueError("level bounds must be a strictly increasing sequence of positive counts")
            if self.size is not None and lb[-1] > self.size:
                raise ValueError(f"level bound {lb[-1]} exceeds family size {self.size}")
            level_bounds = tuple(int(v) for v in lb)
        self._level_bounds = level_bounds

    # -- levels ---------------------------------------------------------
    def _default_level(self, j: int) -> int:
        return j

    def level_bounds(self, J: int) -> np.ndarray:
        """Sizes ``m_1 < m_2 < ... < m_J`` of the nested models."""
        if J < 1:
            raise ValueError("need at least one level")
        if self._level_bounds is not None:
            if J > len(self._level_bounds):
                raise ValueError(f"only {len(self._level_bounds)} levels configured, asked for {J}")
            return np.array(self._level_bounds[:J])
        out = np.array([self._default_level(j) for j in range(1, J + 1)])
        if self.size is not None and out[-1] > self.size:
            raise ValueError(f"level {J} needs {out[-1]} functions; family has {self.size}")
        return out

    # -- evaluation -----------------------------------------------------
    def check_m(self, m: int) -> None:
        if m < 1:
            raise IndexError("basis index must be >= 1")
        if self.size is not None and m > self.size:
            raise IndexError(f"index {m} out of range for {self.name} family of size {self.size}")

    def design(self, x, m: int) -> np.ndarray:
        raise NotImplementedError

    def derivative_design(self, x, m: int) -> np.ndarray:
        raise UnsupportedFamily(f"{self.name} family is not differentiable")

    def quadrature_interval(self) -> tuple[float, float]:
        return (0.0, 1.0)

    def default_grid_size(self) -> int:
        return 2**14


class Fourier(BasisFamily):
    """Orthonormal trigonometric basis of zero-mean 1-periodic functions.

    Default level bounds are ``m_j = 2 j``: one sine/cosine pair per level.
    """

    name = "fourier"
    periodic = True
    default_support = Periodic()

    def _default_level(self, j):
        return 2 * j

    def design(self, x, m):
        self.check_m(m)
        u = np.mod(np.asarray(x, dtype=float).ravel(), 1.0)
        K = (m + 1) // 2
        ang = np.multiply.outer(u, TWO_PI * np.arange(1, K + 1))
        out = np.empty((u.size, 2 * K))
        out[:, 0::2] = np.sin(ang)
        out[:, 1::2] = np.cos(ang)
        out *= SQRT2
        return out[:, :m]

    def derivative_design(self, x, m):
        self.check_m(m)
        u = np.mod(np.asarray(x, dtype=float).ravel(), 1.0)
        K = (m + 1) // 2
        freq = TWO_PI * np.arange(1, K + 1)
        ang = np.multiply.outer(u, freq)
        out = np.empty((u.size, 2 * K))
        out[:, 0::2] = np.cos(ang) * freq
        out[:, 1::2] = -np.sin(ang) * freq
        out *= SQRT2
        return out[:, :m]

    def __repr__(self):
        return "Fourier()"


class IndicatorPartition(BasisFamily):
    """Indicators of ``cells`` equal subintervals tiling ``[lo, hi]``.

    Cells are half-open ``[e_{k-1}, e_k)`` except the last, which also
    contains ``hi``.  With ``normalized=True`` each indicator is scaled by
    ``1 / sqrt(width)`` so the family is orthonormal.
    """

    name = "indicator"

    def __init__(self, lo: float, hi: float, cells: int, normalized: bool = False, level_bounds=None):
        if not lo < hi:
            raise ValueError("interval must have lo < hi")
        if cells < 1:
            raise ValueError("need at least one cell")
        self.lo, self.hi, self.cells = float(lo), float(hi), int(cells)
        self.size = self.cells
        self.normalized = bool(normalized)
        self.edges = np.linspace(self.lo, self.hi, self.cells + 1)
        self.width = (self.hi - self.lo) / self.cells
        self.height = 1.0 / math.sqrt(self.width) if normalized else 1.0
        self.default_support = Compact(self.lo, self.hi, closed=True)
        super().__init__(level_bounds)

    def cell_index(self, x) -> np.ndarray:
        """0-based cell of each ``x``; ``-1`` outside ``[lo, hi]``."""
        x = np.asarray(x, dtype=float).ravel()
        idx = np.searchsorted(self.edges, x, side="right") - 1
        idx[x == self.hi] = self.cells - 1
        idx[(x < self.lo) | (x > self.hi)] = -1
        return idx

    def design(self, x, m):
        self.check_m(m)
        idx = self.cell_index(x)
        out = np.zeros((idx.size, m))
        ok = (idx >= 0) & (idx < m)
        out[np.nonzero(ok)[0], idx[ok]] = self.height
        return out

    def quadrature_interval(self):
        return (self.lo, self.hi)

    def default_grid_size(self):
        return self.cells * 1024

    def __repr__(self):
        return (f"IndicatorPartition(lo={self.lo}, hi={self.hi}, cells={self.cells}"
                f"{', normalized=True' if self.normalized else ''})")


class CustomFamily(BasisFamily):
    """A finite family given by vectorized callables.

    Parameters
    ----------
    functions : sequence of callables
        ``psi_1, ..., psi_m``.
    derivatives : sequence of callables, optional
        Their derivatives; required by the occupation-field route.
    periodic : bool
        Whether the functions are 1-periodic (evaluation then reduces ``x``
        modulo 1 first).
    """

    name = "custom"

    def __init__(self, functions: Sequence[Callable], derivatives: Sequence[Callable] | None = None,
                 periodic: bool = False, interval=(0.0, 1.0), level_bounds=None, name: str = "custom"):
        self.functions = tuple(functions)
        if not self.functions:
            raise ValueError("need at least one function")
        if derivatives is not None and len(derivatives) != len(self.functions):
            raise ValueError("one derivative per function")
        self.derivatives = tuple(derivatives) if derivatives is not None else None
        self.size = len(self.functions)
        self.periodic = periodic
        self.default_support = Periodic() if periodic else None
        self.interval = tuple(interval)
        self.name = name
        super().__init__(level_bounds)

    def _eval(self, funcs, x, m):
        self.check_m(m)
        x = np.asarray(x, dtype=float).ravel()
        if self.periodic:
            x = np.mod(x, 1.0)
        out = np.empty((x.size, m))
        for k in range(m):
            out[:, k] = np.broadcast_to(np.asarray(funcs[k](x), dtype=float), x.shape)
        return out

    def design(self, x, m):
        return self._eval(self.functions, x, m)

    def derivative_design(self, x, m):
        if self.derivatives is None:
            raise UnsupportedFamily(f"{self.name} family has no derivatives")
        return self._eval(self.derivatives, x, m)

    def quadrature_interval(self):
        return self.interval

    @classmethod
    def from_table(cls, table, name="tabulated", level_bounds=None):
        """Periodic family from values on the grid ``i / n``, ``i < n``.

        ``table`` has shape ``(n, m)``; functions are linear interpolants,
        derivatives are the matching piecewise-constant slopes.
        """
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[0] < 2:
            raise ValueError("table must be (n_grid, m) with n_grid >= 2")
        n = table.shape[0]
        ext = np.vstack([table, table[:1]])
        slopes = np.diff(ext, axis=0) * n

        def make(col):
            def f(x):
                s = x * n
                i = np.minimum(np.floor(s).astype(int), n - 1)
                w = s - i
                return (1 - w) * ext[i, col] + w * ext[i + 1, col]

            def df(x):
                i = np.minimum(np.floor(x * n).astype(int), n - 1)
                return slopes[i, col]
            return f, df

        pairs = [make(c) for c in range(table.shape[1])]
        return cls([p[0] for p in pairs], [p[1] for p in pairs], periodic=True,
                   level_bounds=level_bounds, name=name)


def constant_family() -> CustomFamily:
    """The single function ``psi_1 = 1`` on the whole line."""
    return CustomFamily([lambda x: np.ones_like(x)], [lambda x: np.zeros_like(x)], name="constant")


def linear_family() -> CustomFamily:
    """The single function ``psi_1(x) = x``; ``c psi_1`` is an OU drift."""
    return CustomFamily([lambda x: x], [lambda x: np.ones_like(x)], name="linear")


def eval_basis(family: BasisFamily, k: int, x):
    """Value of ``psi_k`` at ``x`` (scalar in, scalar out)."""
    family.check_m(k)
    scalar = np.ndim(x) == 0
    vals = family.design(np.atleast_1d(x), k)[:, k - 1]
    return float(vals[0]) if scalar else vals.reshape(np.shape(x))


def orthonormality_gram(family: BasisFamily, m: int, n_grid: int | None = None) -> np.ndarray:
    """Midpoint-rule Gram matrix ``int psi_i psi_j`` over the family's interval."""
    lo, hi = family.quadrature_interval()
    n = n_grid or family.default_grid_size()
    h = (hi - lo) / n
    x = lo + h * (np.arange(n) + 0.5)
    D = family.design(x, m)
    return h * (D.T @ D)


class DriftSpec:
    """A drift ``b(x) = sum_k coeffs[k-1] psi_k(x)`` with a support rule.

    ``support`` is :class:`Periodic` (argument reduced modulo the period,
    so ``b(x + 1) == b(x)`` whenever ``x + 1`` is exactly representable),
    :class:`Compact` (zero outside the interval), or ``None``.
    """

    def __init__(self, basis: BasisFamily, coeffs, support="default"):
        self.basis = basis
        self.coeffs = np.array(coeffs, dtype=float).ravel()
        if self.coeffs.size < 1:
            raise ValueError("need at least one coefficient")
        basis.check_m(self.coeffs.size)
        self.support = basis.default_support if support == "default" else support
        self.coeffs.setflags(write=False)

    @property
    def m(self) -> int:
        return self.coeffs.size

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        xa = np.asarray(x, dtype=float).ravel()
        if isinstance(self.support, Periodic):
            vals = self.basis.design(np.mod(xa, self.support.period), self.m) @ self.coeffs
        else:
            vals = self.basis.design(xa, self.m) @ self.coeffs
            if isinstance(self.support, Compact):
                vals = np.where(self.support.mask(xa), vals, 0.0)
        return float(vals[0]) if scalar else vals.reshape(np.shape(x))

    def derivative(self, x):
        xa = np.asarray(x, dtype=float).ravel()
        return (self.basis.derivative_design(xa, self.m) @ self.coeffs).reshape(np.shape(x))

    def restrict(self, lo: float, hi: float) -> "DriftSpec":
        """``b_S`` for ``S = [lo, hi)``."""
        return DriftSpec(self.basis, self.coeffs, Compact(lo, hi))

    def scalar_fn(self) -> Callable[[float], float]:
        """A fast pure-Python evaluator used by the Euler loop."""
        c = [float(v) for v in self.coeffs]
        if isinstance(self.basis, Fourier) and isinstance(self.support, Periodic) and self.support.period == 1.0:
            pairs = [(c[2 * k] if 2 * k < len(c) else 0.0, c[2 * k + 1] if 2 * k + 1 < len(c) else 0.0)
                     for k in range((len(c) + 1) // 2)]

            def f(x):
                z = cmath.exp(1j * TWO_PI * (x % 1.0))
                w = 1.0
                s = 0.0
                for a_sin, a_cos in pairs:
                    w *= z
                    s += a_sin * w.imag + a_cos * w.real
                return SQRT2 * s
            return f
        if isinstance(self.basis, IndicatorPartition) and isinstance(self.support, Compact):
            edges = list(self.basis.edges)
            fam, sup = self.basis, self.support
            vals = [v * fam.height for v in c]

            def f(x):
                if not sup.contains(x) or x < fam.lo or x > fam.hi:
                    return 0.0
                i = len(edges) - 1 if x == fam.hi else bisect.bisect_right(edges, x)
                i -= 1
                return vals[i] if i < len(vals) else 0.0
            return f
        if isinstance(self.basis, CustomFamily) and self.support is None:
            terms = list(zip(c, self.basis.functions))
            return lambda x: sum(ck * float(fk(x)) for ck, fk in terms)
        return lambda x: float(self(np.array([x]))[0])

    def __repr__(self):
        return f"DriftSpec({self.basis!r}, m={self.m}, support={self.support!r})"


def synthesize(family: BasisFamily, coeffs, support="default") -> DriftSpec:
    """The drift ``sum_k coeffs[k-1] psi_k``."""
    return DriftSpec(family, coeffs, support)


def restrict(drift: Callable, lo: float, hi: float, inside: bool = True) -> Callable:
    """``b`` restricted to ``[lo, hi)`` (or to its complement)."""
    def f(x):
        x = np.asarray(x, dtype=float)
        m = (x >= lo) & (x < hi)
        if not inside:
            m = ~m
        return np.where(m, drift(x), 0.0)
    return f


def parse_family(text: str) -> BasisFamily:
    """Parse a family description such as ``"fourier"`` or
    ``"indicator interval=-2..2 cells=20 normalized=false"``.

    ``levels=2,4,6`` may be appended to either to override the level bounds.
    """
    parts = text.split()
    if not parts:
        raise ValueError("empty basis description")
    kind, opts = parts[0].lower(), {}
    for p in parts[1:]:
        key, sep, val = p.partition("=")
        if not sep:
            raise ValueError(f"malformed basis option {p!r}")
        opts[key.lower()] = val
    levels = None
    if "levels" in opts:
        levels = [int(v) for v in opts.pop("levels").split(",")]
    if kind == "fourier":
        if opts:
            raise ValueError(f"unknown fourier options {sorted(opts)}")
        return Fourier(level_bounds=levels)
    if kind == "indicator":
        try:
            lo_s, hi_s = opts.pop("interval").split("..")
            cells = int(opts.pop("cells"))
        except KeyError as exc:
            raise ValueError(f"indicator basis needs {exc.args[0]}=") from None
        normalized = opts.pop("normalized", "false").lower() in ("1", "true", "yes")
        if opts:
            raise ValueError(f"unknown indicator options {sorted(opts)}")
        return IndicatorPartition(float(lo_s), float(hi_s), cells, normalized, level_bounds=levels)
    raise ValueError(f"unknown basis kind {kind!r}")
