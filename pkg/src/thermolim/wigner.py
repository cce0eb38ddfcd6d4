"""Phase-space numerics: Wigner grids, the closed-form interference
term of the evolved cat, finite-window time averaging, and fringe
metrics.

Convention: W(x, p) = (1/pi) <psi| D(2 lam) Pi |psi>, lam = (x+ip)/sqrt(2),
so a coherent state |a> gives (1/pi) exp[-(x - sqrt2 Re a)^2
- (p - sqrt2 Im a)^2] and the Riemann sum over dx dp is 1.  With this
normalization |W| <= 1/pi for any state.

The closed-form interference term is defined WITHOUT the cat's
normalization factor; callers multiply by N^2 explicitly when comparing
against full-state numerics.  The decomposition test pins that
bookkeeping.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import DomainError, ValidationError
from .fock import FieldState, ModelParams, _scaled_diagonal
from .propagator import frame

__all__ = [
    "WignerGrid",
    "default_grid",
    "wigner_numeric",
    "w_int_closed",
    "interference_phase_offset",
    "fit_interference_offset",
    "count_time_zero_crossings",
    "TimeAverageReport",
    "time_average",
    "fringe_visibility",
    "save_wgrd",
    "load_wgrd",
    "save_csv",
    "load_csv",
]

MAX_SPACING = 0.25  # resolves unit-variance Gaussian envelopes
_WGRD_MAGIC = b"WGRD"


@dataclass(frozen=True)
class WignerGrid:
    """Rectangular phase-space grid with values W[ix, ip].

    Axis points are implied: x runs over nx uniform samples on
    [x_min, x_max], likewise p; both spacings must stay at or below
    0.25.
    """

    x_min: float
    x_max: float
    p_min: float
    p_max: float
    nx: int
    np: int
    values: np.ndarray

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.p_max > self.p_min):
            raise ValidationError("grid bounds must be increasing")
        if self.nx < 2 or self.np < 2:
            raise ValidationError("need at least 2 points per axis")
        if self.dx > MAX_SPACING + 1e-12 or self.dp > MAX_SPACING + 1e-12:
            raise ValidationError(
                f"grid spacing ({self.dx:.4f}, {self.dp:.4f}) exceeds {MAX_SPACING}")
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.shape != (self.nx, self.np):
            raise ValidationError(
                f"values shape {vals.shape} != ({self.nx}, {self.np})")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("grid values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / (self.np - 1)

    @property
    def x_axis(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def p_axis(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.np)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x_axis, self.p_axis, indexing="ij")

    def integral(self) -> float:
        """Riemann sum; lands in [0.98, 1.02] for a normalized state on
        a grid covering 6 sigma around every branch center."""
        return float(self.values.sum() * self.dx * self.dp)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values: np.ndarray) -> "WignerGrid":
        return WignerGrid(self.x_min, self.x_max, self.p_min, self.p_max,
                          self.nx, self.np, values)

    def same_geometry(self, other: "WignerGrid") -> bool:
        return (self.nx == other.nx and self.np == other.np
                and self.x_min == other.x_min and self.x_max == other.x_max
                and self.p_min == other.p_min and self.p_max == other.p_max)

    @classmethod
    def empty(cls, x_min: float, x_max: float, p_min: float, p_max: float,
              spacing: float = 0.1) -> "WignerGrid":
        """Zero-valued grid over the given bounds; the actual spacing is
        the largest value <= ``spacing`` that fits the span exactly."""
        if spacing <= 0 or spacing > MAX_SPACING + 1e-12:
            raise ValidationError(f"spacing must be in (0, {MAX_SPACING}]")
        nx = int(math.ceil((x_max - x_min) / spacing)) + 1
        npts = int(math.ceil((p_max - p_min) / spacing)) + 1
        return cls(x_min, x_max, p_min, p_max, nx, npts,
                   np.zeros((nx, npts)))


def default_grid(centers: Iterable[complex], spacing: float = 0.1,
                 nsigma: float = 6.0) -> WignerGrid:
    """Grid covering ``nsigma`` standard deviations (sigma = 1/sqrt2 in
    these quadratures) around every coherent branch center, given in
    field-amplitude units."""
    cs = [complex(c) for c in centers]
    if not cs:
        raise DomainError("need at least one branch center")
    xs = [math.sqrt(2) * c.real for c in cs]
    ps = [math.sqrt(2) * c.imag for c in cs]
    pad = nsigma / math.sqrt(2)
    return WignerGrid.empty(min(xs) - pad, max(xs) + pad,
                            min(ps) - pad, max(ps) + pad, spacing)


def wigner_numeric(state: FieldState, grid: WignerGrid) -> WignerGrid:
    """Displaced-parity Wigner evaluation of a truncated state.

    Runs the parity sum one displacement diagonal at a time with the
    magnitude-bounded kernel, so no term can overflow however far the
    grid reaches.  States whose tail mass exceeds 1e-6 are rejected:
    past that point the missing amplitudes would corrupt the sum by
    more than the advertised accuracy.
    """
    state.require_tail(1e-6)
    psi = state.amplitudes
    ncut = state.ncut
    signs = (-1.0) ** np.arange(ncut + 1)
    # |S_d| <= sqrt(sum_{j>=d} |psi_j|^2) by Cauchy-Schwarz: stop once
    # the remaining diagonals cannot contribute above rounding level
    suffix = np.sqrt(np.cumsum((np.abs(psi) ** 2)[::-1])[::-1])
    dmax = ncut
    while dmax > 0 and suffix[dmax] < 1e-12:
        dmax -= 1
    weights = [np.conjugate(psi[d:]) * signs[: ncut - d + 1] * psi[: ncut - d + 1]
               for d in range(dmax + 1)]

    X, P = grid.meshgrid()
    xs, ps = X.ravel(), P.ravel()
    out = np.empty(xs.size)
    chunk = 16384
    for lo in range(0, xs.size, chunk):
        x = xs[lo:lo + chunk]
        p = ps[lo:lo + chunk]
        xarg = 2.0 * (x * x + p * p)
        eith = np.exp(1j * np.arctan2(p, x))
        acc = np.zeros(x.size)
        ph = np.ones(x.size, dtype=complex)
        for d in range(dmax + 1):
            m = _scaled_diagonal(d, xarg, ncut - d)
            contrib = np.real(ph * (weights[d] @ m))
            acc += contrib if d == 0 else 2.0 * contrib
            ph *= eith
        out[lo:lo + chunk] = acc / math.pi
    return grid.with_values(out.reshape(grid.nx, grid.np))


def interference_phase_offset(params: ModelParams, alpha: float, phi: float,
                              t: float) -> float:
    """The spatially constant part of the interference-fringe phase:
    alpha^2 sin 2phi + 4 alpha (N g / omega) sin phi (1 - cos omega t).
    Grows linearly with N at fixed coupling ratio."""
    wt = params.omega * t
    return (alpha**2 * math.sin(2 * phi)
            + 4.0 * alpha * (params.n_atoms * params.g / params.omega)
            * math.sin(phi) * (1.0 - math.cos(wt)))


def w_int_closed(params: ModelParams, alpha: float, phi: float, t: float,
                 grid: WignerGrid) -> WignerGrid:
    """Closed-form interference term of the leading-order evolved cat,
    without the cat normalization factor:

        (2/pi) exp[-(x-xb)^2 - (p-pb)^2]
             * cos[2 sqrt2 a sin(phi) (p sin wt - x cos wt) + offset]

    centered on the branch midpoint m = beta' + a cos(phi) e^{-i w t}
    (xb = sqrt2 Re m, pb = sqrt2 Im m), with ``offset`` from
    interference_phase_offset."""
    fr = frame(params, alpha, phi, t)
    wt = params.omega * t
    mid = fr.beta_prime + alpha * math.cos(phi) * complex(math.cos(wt), -math.sin(wt))
    xb, pb = math.sqrt(2) * mid.real, math.sqrt(2) * mid.imag
    X, P = grid.meshgrid()
    env = (2.0 / math.pi) * np.exp(-((X - xb) ** 2) - (P - pb) ** 2)
    arg = (2.0 * math.sqrt(2) * alpha * math.sin(phi)
           * (P * math.sin(wt) - X * math.cos(wt))
           + interference_phase_offset(params, alpha, phi, t))
    return grid.with_values(env * np.cos(arg))


def fit_interference_offset(grid: WignerGrid, params: ModelParams, alpha: float,
                            phi: float, t: float) -> float:
    """Recover the constant fringe phase from an interference grid by
    envelope-weighted least squares against the known linear part.
    Returns the principal value in (-pi, pi]."""
    fr = frame(params, alpha, phi, t)
    wt = params.omega * t
    mid = fr.beta_prime + alpha * math.cos(phi) * complex(math.cos(wt), -math.sin(wt))
    xb, pb = math.sqrt(2) * mid.real, math.sqrt(2) * mid.imag
    X, P = grid.meshgrid()
    env = (2.0 / math.pi) * np.exp(-((X - xb) ** 2) - (P - pb) ** 2)
    lin = (2.0 * math.sqrt(2) * alpha * math.sin(phi)
           * (P * math.sin(wt) - X * math.cos(wt)))
    # vals = env (cos lin cos c - sin lin sin c): 2x2 normal equations
    a1 = (env * np.cos(lin)).ravel()
    a2 = (-env * np.sin(lin)).ravel()
    b = np.asarray(grid.values).ravel()
    g11, g12, g22 = a1 @ a1, a1 @ a2, a2 @ a2
    r1, r2 = a1 @ b, a2 @ b
    det = g11 * g22 - g12 * g12
    if det <= 0 or not np.isfinite(det):
        raise DomainError("fringe geometry is degenerate; cannot fit a phase")
    u = (g22 * r1 - g12 * r2) / det
    v = (g11 * r2 - g12 * r1) / det
    return math.atan2(v, u)


def count_time_zero_crossings(params: ModelParams, alpha: float, phi: float,
                              n_samples: int = 4096) -> int:
    """Sign changes of the central fringe cos(offset(t)) over one field
    period; grows linearly with N at fixed coupling ratio."""
    if n_samples < 16:
        raise DomainError("need at least 16 samples")
    period = 2 * math.pi / params.omega
    ts = (np.arange(n_samples) + 0.5) * (period / n_samples)
    vals = np.cos([interference_phase_offset(params, alpha, phi, t) for t in ts])
    return int(np.count_nonzero(np.diff(np.sign(vals)) != 0))


@dataclass(frozen=True)
class TimeAverageReport:
    """Outcome of the convergence-by-doubling loop."""

    n_samples: int
    doublings: int
    max_change: float
    converged: bool


def _mean_of_samples(evaluator, t0: float, t1: float, n: int) -> np.ndarray:
    # midpoint sampling: exact for full periods of trig signals; pairwise
    # reduction keeps the result independent of any chunking
    h = (t1 - t0) / n
    stack: list[tuple[int, np.ndarray, int]] = []  # (level, sum, count)
    for i in range(n):
        v = evaluator(t0 + (i + 0.5) * h)
        arr = np.asarray(v.values if isinstance(v, WignerGrid) else v, dtype=np.float64)
        level, acc, cnt = 0, arr.copy(), 1
        while stack and stack[-1][0] == level:
            lvl, prev, pcnt = stack.pop()
            acc = prev + acc
            cnt += pcnt
            level += 1
        stack.append((level, acc, cnt))
    total = stack[0][1]
    for _, part, _ in stack[1:]:
        total = part + total
    return total / n


def time_average(
    evaluator: Callable[[float], "WignerGrid | np.ndarray | float"],
    window: tuple[float, float],
    n_samples: int = 64,
) -> tuple["WignerGrid | np.ndarray", TimeAverageReport]:
    """Uniform finite-window average of a time-dependent grid (or plain
    array/scalar signal), the operational stand-in for a summability
    limit of the oscillating interference term.

    Doubles the sample count until the pointwise change drops below
    1e-4; after 4 doublings without convergence the result is returned
    flagged rather than raised, so sweeps can report partial data.
    """
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise DomainError(f"need t1 > t0, got {window}")
    if n_samples < 64:
        raise DomainError(f"need n_samples >= 64, got {n_samples}")
    probe = evaluator(t0 + 0.5 * (t1 - t0) / n_samples)
    grid_template = probe if isinstance(probe, WignerGrid) else None

    n = n_samples
    current = _mean_of_samples(evaluator, t0, t1, n)
    doublings = 0
    max_change = math.inf
    converged = False
    while doublings < 4:
        n *= 2
        doublings += 1
        refined = _mean_of_samples(evaluator, t0, t1, n)
        max_change = float(np.max(np.abs(refined - current)))
        current = refined
        if max_change < 1e-4:
            converged = True
            break
    report = TimeAverageReport(n_samples=n, doublings=doublings,
                               max_change=max_change, converged=converged)
    if grid_template is not None:
        return grid_template.with_values(current), report
    return current, report


def fringe_visibility(w_full: WignerGrid, w_branches: WignerGrid) -> float:
    """Sup-norm of the interference residual relative to the branch
    background, clipped to [0, 2]."""
    if not w_full.same_geometry(w_branches):
        raise ValidationError("visibility needs identical grids")
    denom = w_branches.sup_norm()
    if denom == 0.0:
        raise DomainError("branch grid is identically zero")
    ratio = float(np.max(np.abs(w_full.values - w_branches.values))) / denom
    return min(max(ratio, 0.0), 2.0)


# ------------------------------------------------------------- serialization

def save_wgrd(grid: WignerGrid, path) -> None:
    """Dense binary block: 32-byte header (magic "WGRD", uint32 nx/np,
    float32 bounds, 4 reserved bytes), then row-major float64 values,
    all little-endian."""
    header = (_WGRD_MAGIC
              + struct.pack("<II", grid.nx, grid.np)
              + struct.pack("<4f", grid.x_min, grid.x_max, grid.p_min, grid.p_max)
              + b"\x00" * 4)
    assert len(header) == 32
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def load_wgrd(path) -> WignerGrid:
    with open(path, "rb") as fh:
        header = fh.read(32)
        if len(header) != 32 or header[:4] != _WGRD_MAGIC:
            raise ValidationError(f"{path}: not a WGRD block")
        nx, npts = struct.unpack("<II", header[4:12])
        x_min, x_max, p_min, p_max = struct.unpack("<4f", header[12:28])
        data = np.frombuffer(fh.read(nx * npts * 8), dtype="<f8")
    if data.size != nx * npts:
        raise ValidationError(f"{path}: truncated WGRD payload")
    return WignerGrid(float(x_min), float(x_max), float(p_min), float(p_max),
                      nx, npts, data.reshape(nx, npts))


def save_csv(grid: WignerGrid, path) -> None:
    """Three-column x,p,W rows, x-major, '.' decimals, LF endings."""
    xs = grid.x_axis
    ps = grid.p_axis
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,p,W\n")
        for i in range(grid.nx):
            for j in range(grid.np):
                fh.write(f"{xs[i]:.17g},{ps[j]:.17g},{grid.values[i, j]:.17g}\n")


def load_csv(path) -> WignerGrid:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValidationError(f"{path}: expected x,p,W columns")
    xs = np.unique(data[:, 0])
    ps = np.unique(data[:, 1])
    nx, npts = xs.size, ps.size
    if nx * npts != data.shape[0]:
        raise ValidationError(f"{path}: grid is not rectangular")
    vals = data[:, 2].reshape(nx, npts)
    return WignerGrid(float(xs[0]), float(xs[-1]), float(ps[0]), float(ps[-1]),
                      nx, npts, vals)
