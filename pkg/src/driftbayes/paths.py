"""Sample paths on uniform grids and their simulation.

Paths are stored as a start time, a grid step and the array of states.  All
stochastic integrals built on these paths elsewhere in the package use the
left-point (Ito) rule.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError, SimulationDiverged
from .rng import as_generator


@dataclass(frozen=True)
class SamplePath:
    """A trajectory ``X_{t0}, X_{t0+dt}, ...`` on a uniform time grid."""

    t0: float
    dt: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("a path needs at least two values")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"grid step must be positive, got {self.dt}")
        if not np.all(np.isfinite(values)):
            raise ValueError("path values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def __len__(self):
        return self.values.size

    def reversed(self) -> "SamplePath":
        """The time-reversed path on the same grid."""
        return SamplePath(self.t0, self.dt, self.values[::-1].copy())

    def subsample(self, every: int) -> "ObservationSet":
        """Keep every ``every``-th state as a low-frequency observation set."""
        if every < 1 or self.n_steps % every:
            raise ValueError(f"n_steps={self.n_steps} is not a multiple of {every}")
        return ObservationSet(self.dt * every, self.values[::every].copy())


@dataclass(frozen=True)
class ObservationSet:
    """Discrete observations ``X_0, X_delta, ..., X_{n delta}``."""

    delta: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("need at least one observation gap (n >= 1)")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not np.all(np.isfinite(values)):
            raise ValueError("observations must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def horizon(self) -> float:
        return self.n * self.delta

    def as_path(self) -> SamplePath:
        return SamplePath(0.0, self.delta, self.values)


def _scalar_drift(drift) -> Callable[[float], float]:
    fast = getattr(drift, "scalar_fn", None)
    return fast() if fast is not None else drift


def simulate_path(drift, x0: float, T: float, n_steps: int, rng=None, sigma=None) -> SamplePath:
    """Euler scheme ``X_{t+h} = X_t + b(X_t) h + sigma(X_t) sqrt(h) Z``.

    Parameters
    ----------
    drift : callable
        Drift ``b``; a :class:`~driftbayes.basis.DriftSpec` or any function of
        one float.
    x0 : float
        Initial state.
    T : float
        Time horizon.
    n_steps : int
        Number of Euler steps; the grid step is ``T / n_steps``.
    rng : Generator or int, optional
        Random stream.  One standard normal is drawn per step, in order.
    sigma : callable, optional
        Diffusion coefficient; unit diffusion when omitted.

    Raises
    ------
    SimulationDiverged
        If a drift value or a state becomes non-finite.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not T > 0:
        raise ValueError("T must be positive")
    rng = as_generator(rng)
    h = T / n_steps
    sqh = math.sqrt(h)
    z = (rng.standard_normal(n_steps) * sqh).tolist()
    b = _scalar_drift(drift)
    out = np.empty(n_steps + 1)
    x = float(x0)
    out[0] = x
    isfinite = math.isfinite
    try:
        if sigma is None:
            for i in range(n_steps):
                bx = b(x)
                x = x + bx * h + z[i]
                if not isfinite(x):
                    raise SimulationDiverged(i, x)
                out[i + 1] = x
        else:
            for i in range(n_steps):
                x = x + b(x) * h + sigma(x) * z[i]
                if not isfinite(x):
                    raise SimulationDiverged(i, x)
                out[i + 1] = x
    except (OverflowError, ValueError) as exc:
        raise SimulationDiverged(i, x) from exc
    return SamplePath(0.0, h, out)


def simulate_paths(drift, x0, T: float, n_steps: int, n_paths: int, rng=None) -> np.ndarray:
    """Simulate ``n_paths`` independent Euler paths at once.

    ``drift`` must accept arrays.  Returns an array of shape
    ``(n_paths, n_steps + 1)``.
    """
    if n_steps < 1 or n_paths < 1:
        raise ValueError("n_steps and n_paths must be >= 1")
    rng = as_generator(rng)
    h = T / n_steps
    out = np.empty((n_paths, n_steps + 1))
    out[:, 0] = x0
    x = out[:, 0].copy()
    sqh = math.sqrt(h)
    for i in range(n_steps):
        bx = np.asarray(drift(x), dtype=float)
        if not np.all(np.isfinite(bx)):
            raise SimulationDiverged(i)
        x = x + bx * h + sqh * rng.standard_normal(n_paths)
        out[:, i + 1] = x
    return out


def brownian_bridges(starts, ends, duration: float, n_steps: int, rng=None) -> np.ndarray:
    """Brownian bridges from ``starts`` to ``ends`` over ``duration``.

    Row ``i`` of the result (shape ``(len(starts), n_steps + 1)``) is pinned
    to ``starts[i]`` and ``ends[i]`` exactly.  Row ``i`` consumes normals
    ``i * n_steps`` onwards of the stream, so its value does not depend on
    how other rows are processed.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not duration > 0:
        raise ValueError("duration must be positive")
    starts = np.atleast_1d(np.asarray(starts, dtype=float))
    ends = np.broadcast_to(np.asarray(ends, dtype=float), starts.shape)
    n = starts.size
    out = np.empty((n, n_steps + 1))
    out[:, 0] = starts
    out[:, -1] = ends
    if n_steps == 1:
        return out
    rng = as_generator(rng)
    h = duration / n_steps
    # B_t = W_t - (t/D) W_D, built from n_steps increments of W.
    w = np.cumsum(rng.standard_normal((n, n_steps)) * math.sqrt(h), axis=1)
    frac = np.arange(1, n_steps) / n_steps
    out[:, 1:-1] = (starts[:, None] + (w[:, :-1] - frac * w[:, -1:])
                    + frac * (ends - starts)[:, None])
    return out


def sample_brownian_bridge(start: float, end: float, duration: float, n_steps: int, rng=None) -> SamplePath:
    """A single Brownian bridge path, pinned exactly at both ends."""
    vals = brownian_bridges([start], [end], duration, n_steps, rng)[0]
    return SamplePath(0.0, duration / n_steps, vals)


def refine_path(path: SamplePath, factor: int, rng=None) -> SamplePath:
    """Brownian-bridge infill: insert ``factor - 1`` points in every step.

    Original grid points are kept exactly; the new grid step is
    ``path.dt / factor``.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return path
    v = path.values
    fill = brownian_bridges(v[:-1], v[1:], path.dt, factor, rng)
    vals = np.empty(path.n_steps * factor + 1)
    vals[:-1] = fill[:, :-1].ravel()
    vals[-1] = v[-1]
    return SamplePath(path.t0, path.dt / factor, vals)


def quadratic_variation(path: SamplePath) -> np.ndarray:
    """Running sum of squared increments, one entry per grid time."""
    qv = np.empty(len(path))
    qv[0] = 0.0
    np.cumsum(np.diff(path.values) ** 2, out=qv[1:])
    return qv


def unit_diffusion_transform(path: SamplePath, sigma, *, rtol: float = 1e-8, n_grid: int = 257,
                             max_grid: int = 2**22) -> SamplePath:
    """Map ``X_t`` to ``F(X_t)`` with ``F(x) = int_0^x 1/sigma(u) du``.

    ``F`` is evaluated by composite trapezoid quadrature on a grid covering the
    path range and ``0``, with the path values inserted as nodes.  The grid is
    doubled until the Richardson error estimate falls below ``rtol`` times the
    range of ``F``.

    Raises
    ------
    DomainError
        If ``sigma`` is not strictly positive and finite on the range.
    """
    vals = path.values
    lo = min(0.0, float(vals.min()))
    hi = max(0.0, float(vals.max()))
    if hi == lo:
        return SamplePath(path.t0, path.dt, np.zeros_like(vals))
    order = np.argsort(vals, kind="stable")
    sorted_vals = vals[order]

    def antiderivative(m):
        base = np.linspace(lo, hi, m)
        nodes, inverse = np.unique(np.concatenate((base, sorted_vals, [0.0])), return_inverse=True)
        s = np.asarray(sigma(nodes), dtype=float)
        s = np.broadcast_to(s, nodes.shape)
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            bad = nodes[~(np.isfinite(s) & (s > 0))][0]
            raise DomainError(f"sigma must be positive on the path range; sigma({bad}) = {sigma(bad)}")
        g = 1.0 / s
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(nodes))))
        cum -= cum[inverse[-1]]
        return cum[inverse[m:m + vals.size]]

    m = n_grid
    coarse = antiderivative(m)
    while True:
        m = 2 * m - 1
        fine = antiderivative(m)
        span = max(np.ptp(fine), np.finfo(float).tiny)
        err = np.max(np.abs(fine - coarse)) / 3.0
        if err <= rtol * span or m > max_grid:
            break
        coarse = fine
    # Richardson extrapolation of the trapezoid rule.
    best = fine + (fine - coarse) / 3.0
    out = np.empty_like(vals)
    out[order] = best
    return SamplePath(path.t0, path.dt, out)


# -- CSV formats -------------------------------------------------------------

def _fmt(x: np.ndarray) -> list[str]:
    return [repr(float(v)) for v in x]


def write_path_csv(path: SamplePath, dest) -> None:
    """Write ``t,x`` rows at full double precision."""
    buf = io.StringIO()
    buf.write("t,x\n")
    for t, x in zip(_fmt(path.times), _fmt(path.values)):
        buf.write(f"{t},{x}\n")
    Path(dest).write_text(buf.getvalue())


def read_path_csv(src) -> SamplePath:
    text = Path(src).read_text().splitlines()
    rows = [ln for ln in text if ln and not ln.startswith("#")]
    if not rows or rows[0].strip() != "t,x":
        raise ValueError(f"{src}: expected header 't,x'")
    data = np.array([[float(c) for c in ln.split(",")] for ln in rows[1:]])
    if data.shape[0] < 2:
        raise ValueError(f"{src}: a path needs at least two rows")
    t = data[:, 0]
    dt = (t[-1] - t[0]) / (t.size - 1)
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12 * max(1.0, abs(t[-1]))):
        raise ValueError(f"{src}: time grid is not uniform")
    return SamplePath(t[0], dt, data[:, 1])


def write_observations_csv(obs: ObservationSet, dest) -> None:
    """Write the ``# delta=`` metadata line followed by ``k,x`` rows."""
    buf = io.StringIO()
    buf.write(f"# delta={obs.delta!r}\n")
    buf.write("k,x\n")
    for k, x in enumerate(_fmt(obs.values)):
        buf.write(f"{k},{x}\n")
    Path(dest).write_text(buf.getvalue())


def read_observations_csv(src) -> ObservationSet:
    delta = None
    rows = []
    for ln in Path(src).read_text().splitlines():
        ln = ln.strip()
        if not ln:
            continue
        if ln.startswith("#"):
            key, _, val = ln[1:].strip().partition("=")
            if key.strip() == "delta":
                delta = float(val)
            continue
        rows.append(ln)
    if delta is None:
        raise ValueError(f"{src}: missing '# delta=<value>' line")
    if not rows or rows[0] != "k,x":
        raise ValueError(f"{src}: expected header 'k,x'")
    ks, xs = zip(*[(int(r.split(",")[0]), float(r.split(",")[1])) for r in rows[1:]])
    if list(ks) != list(range(len(ks))):
        raise ValueError(f"{src}: observation indices must be 0, 1, 2, ...")
    return ObservationSet(delta, np.array(xs))
