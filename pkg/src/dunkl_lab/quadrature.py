"""Weighted quadrature grids for densities prod |<x, alpha>|^{k(alpha)}.

1D rules are composite Gauss panels on [-radius, radius], geometrically graded
toward the origin so the |x|^{2k} factor is resolved for any k in [0, 8]; the
single panel touching 0 absorbs the axis weight into a Gauss-Jacobi rule (all
nodes stay strictly off the reflection hyperplanes).  Multi-dimensional grids
for the product kind are tensor products, capped at N <= 3.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .root_system import (
    KIND_PRODUCT,
    KIND_RANK_ONE,
    RootSystemError,
    RootSystemSpec,
    SQRT2,
    weight_density,
)


class QuadratureError(ValueError):
    """Invalid grid construction or use."""


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor quadrature grid with the weight folded into dw_weights."""

    rs: RootSystemSpec
    radius: float
    resolution: int
    axes_nodes: tuple
    axes_weights: tuple  # per-axis weights including the axis density factor
    nodes: np.ndarray    # (M, N)
    dw_weights: np.ndarray  # (M,) strictly positive
    shape: tuple

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def flip_permutation(self, signs) -> np.ndarray:
        """Index array perm with nodes[perm[i]] = diag(signs) @ nodes[i]."""
        signs = np.asarray(signs)
        idx = np.arange(self.n_nodes).reshape(self.shape)
        for j, s in enumerate(signs):
            if s == -1:
                idx = np.flip(idx, axis=j)
            elif s != 1:
                raise QuadratureError("signs must be +-1")
        return idx.ravel()


@dataclass(eq=False)
class GridFunction:
    """Function samples aligned with a grid's node ordering."""

    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n_nodes,):
            raise QuadratureError("values must align with grid nodes")


# ---------------------------------------------------------------------------
# 1D panel machinery

def _panel_intervals(L: float, n_panels: int):
    """Descending panel list [(lo, hi), ...] covering (0, L], graded to 0."""
    if n_panels == 1:
        return [(0.0, L)]
    if n_panels <= 8:
        bounds = [L * 2.0 ** (-i) for i in range(n_panels)] + [0.0]
    else:
        n_geo = n_panels - 8
        uni = [L - i * (L / 8.0) for i in range(8)]  # L, 7L/8, ..., L/8
        geo = [(L / 8.0) * 2.0 ** (-i) for i in range(1, n_geo + 1)]
        bounds = uni + geo + [0.0]
    return [(bounds[i + 1], bounds[i]) for i in range(len(bounds) - 1)]


def _half_axis_rule(L: float, n_half: int, s_exp: float):
    """Nodes/weights on (0, L] for integrand (sqrt(2)|x|)^s * f(x)."""
    m = 8 if n_half >= 64 else max(4, min(8, n_half))
    n_panels = max(1, n_half // m)
    base = n_half // n_panels
    extra = n_half - base * n_panels  # spread over the outermost panels
    intervals = _panel_intervals(L, n_panels)
    nodes, weights = [], []
    for i, (lo, hi) in enumerate(intervals):
        mi = base + (1 if i < extra else 0)
        if lo == 0.0:
            # Gauss-Jacobi on [0, hi] with the weight x^s absorbed
            u, w = roots_jacobi(mi, 0.0, s_exp)
            x = 0.5 * hi * (1.0 + u)
            wx = (0.5 * hi) ** (s_exp + 1.0) * w * SQRT2**s_exp
        else:
            u, w = roots_legendre(mi)
            x = 0.5 * (hi - lo) * u + 0.5 * (hi + lo)
            wx = 0.5 * (hi - lo) * w * (SQRT2 * x) ** s_exp
        nodes.append(x)
        weights.append(wx)
    x = np.concatenate(nodes)
    w = np.concatenate(weights)
    order = np.argsort(x)
    return x[order], w[order]


def _axis_rule(L: float, resolution: int, s_exp: float):
    """Symmetric rule on [-L, L]; nodes exactly closed under negation."""
    xp, wp = _half_axis_rule(L, resolution // 2, s_exp)
    x = np.concatenate([-xp[::-1], xp])
    w = np.concatenate([wp[::-1], wp])
    return x, w


def build_grid(rs: RootSystemSpec, radius: float, resolution: int) -> QuadratureGrid:
    """Tensor grid for rank-one (N=1) or product (N<=3) root systems."""
    if rs.kind not in (KIND_RANK_ONE, KIND_PRODUCT):
        raise QuadratureError("grids support rank-one and product kinds only")
    if rs.kind == KIND_PRODUCT and rs.dimension > 3:
        raise QuadratureError("product grids capped at N <= 3 (cost guard)")
    if radius <= 0:
        raise QuadratureError("radius must be positive")
    if resolution < 8 or resolution % 2:
        raise QuadratureError("resolution must be even and >= 8")

    exps = rs.axis_exponents()
    axes_nodes, axes_weights = [], []
    for j in range(rs.dimension):
        x, w = _axis_rule(radius, resolution, exps[j])
        axes_nodes.append(x)
        axes_weights.append(w)
    axes_weights[0] = axes_weights[0] * rs.weight_prefactor

    mesh = np.meshgrid(*axes_nodes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*axes_weights, indexing="ij")
    dw = np.ones(nodes.shape[0])
    for wm in wmesh:
        dw = dw * wm.ravel()

    if np.any(dw <= 0):
        raise QuadratureError("nonpositive quadrature weight")
    scal = nodes @ rs.roots.T
    if np.min(np.abs(scal)) <= 0:
        raise QuadratureError("node on a reflection hyperplane")

    return QuadratureGrid(
        rs=rs,
        radius=float(radius),
        resolution=int(resolution),
        axes_nodes=tuple(axes_nodes),
        axes_weights=tuple(axes_weights),
        nodes=nodes,
        dw_weights=dw,
        shape=tuple(len(a) for a in axes_nodes),
    )


def sample_on_grid(grid: QuadratureGrid, fn) -> GridFunction:
    """Sample a callable fn(points (M, N)) -> (M,) on the grid."""
    vals = np.asarray(fn(grid.nodes))
    return GridFunction(grid, vals)


def integrate(grid: QuadratureGrid, f) -> complex:
    """int f dw over the grid window (f: GridFunction or callable)."""
    if callable(f):
        f = sample_on_grid(grid, f)
    if f.grid is not grid:
        raise QuadratureError("grid function belongs to a different grid")
    total = np.sum(f.values * grid.dw_weights)
    return complex(total) if np.iscomplexobj(f.values) else float(total)


def lp_norm(grid: QuadratureGrid, f, p: float) -> float:
    """L^p(dw) norm over the grid window; p = inf gives the sup over nodes."""
    if callable(f):
        f = sample_on_grid(grid, f)
    a = np.abs(f.values)
    if math.isinf(p):
        return float(np.max(a))
    if p < 1:
        raise QuadratureError("p must be >= 1")
    return float(np.sum(a**p * grid.dw_weights) ** (1.0 / p))


# ---------------------------------------------------------------------------
# ball measures w(B(center, r))

def _graded_breaks(a: float, b: float, grade_a: bool, grade_b: bool, n_panels: int):
    if n_panels <= 1 or not (grade_a or grade_b):
        return list(np.linspace(a, b, max(2, n_panels + 1)))
    if grade_a and grade_b:
        half = max(1, n_panels // 2)
        mid = 0.5 * (a + b)
        left = [a + (mid - a) * 2.0 ** (-i) for i in range(half, 0, -1)]
        right = [b - (b - mid) * 2.0 ** (-i) for i in range(1, half + 1)]
        return [a] + left + right[1:] + [b]
    if grade_a:
        lad = [a + (b - a) * 2.0 ** (-i) for i in range(n_panels - 1, 0, -1)]
        return [a] + lad + [b]
    lad = [b - (b - a) * 2.0 ** (-i) for i in range(1, n_panels)]
    return [a] + lad + [b]


def _interval_rule(lo: float, hi: float, n: int, s_exp: float, grade_ends: bool):
    """Nodes/weights for int_lo^hi (sqrt(2)|x|)^s f(x) dx, 0-aware."""
    if hi <= lo:
        return np.empty(0), np.empty(0)
    pieces = []
    if lo < 0.0 < hi:
        pieces = [(lo, 0.0), (0.0, hi)]
    else:
        pieces = [(lo, hi)]
    xs, ws = [], []
    n_piece = max(8, n // len(pieces))
    m = 8
    for a, b in pieces:
        npan = max(1, n_piece // m)
        zero_at_a = abs(a) < 1e-300
        zero_at_b = abs(b) < 1e-300
        breaks = _graded_breaks(
            a, b, zero_at_a or grade_ends, zero_at_b or grade_ends, npan
        )
        for i in range(len(breaks) - 1):
            pa, pb = breaks[i], breaks[i + 1]
            if pb - pa <= 0:
                continue
            if zero_at_a and i == 0:
                # weight (1-u)^s with x = pa + h/2*(1-u) puts |x-pa|^s at u=1
                u, w = roots_jacobi(m, s_exp, 0.0)
                x = pa + 0.5 * (pb - pa) * (1.0 - u)
                wx = (0.5 * (pb - pa)) ** (s_exp + 1.0) * w * SQRT2**s_exp
                xs.append(x)
                ws.append(wx)
                continue
            if zero_at_b and i == len(breaks) - 2:
                u, w = roots_jacobi(m, s_exp, 0.0)
                x = pb - 0.5 * (pb - pa) * (1.0 - u)
                wx = (0.5 * (pb - pa)) ** (s_exp + 1.0) * w * SQRT2**s_exp
                xs.append(x)
                ws.append(wx)
                continue
            u, w = roots_legendre(m)
            x = 0.5 * (pb - pa) * u + 0.5 * (pb + pa)
            wx = 0.5 * (pb - pa) * w * (SQRT2 * np.abs(x)) ** s_exp
            xs.append(x)
            ws.append(wx)
    return np.concatenate(xs), np.concatenate(ws)


def ball_measure(rs: RootSystemSpec, center, r: float, resolution: int = 96) -> float:
    """w(B(center, r)) by nested quadrature (rank-one and product kinds)."""
    if rs.kind not in (KIND_RANK_ONE, KIND_PRODUCT):
        raise QuadratureError("ball_measure supports rank-one and product kinds")
    if r <= 0:
        raise QuadratureError("r must be positive")
    center = np.asarray(center, dtype=float).reshape(rs.dimension)
    exps = rs.axis_exponents()

    def level(j: int, c_rem: np.ndarray, rad: float) -> float:
        x, w = _interval_rule(
            c_rem[0] - rad, c_rem[0] + rad, resolution, exps[j], grade_ends=j < rs.dimension - 1
        )
        if j == rs.dimension - 1:
            return float(np.sum(w))
        h = np.sqrt(np.maximum(rad**2 - (x - c_rem[0]) ** 2, 0.0))
        inner = np.array([level(j + 1, c_rem[1:], hi) if hi > 0 else 0.0 for hi in h])
        return float(np.sum(w * inner))

    return rs.weight_prefactor * level(0, center, float(r))


# ---------------------------------------------------------------------------
# grid function serialization

def grid_function_to_csv(f: GridFunction, path: str) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        dim = f.grid.rs.dimension
        wr.writerow([f"x{j+1}" for j in range(dim)] + ["re", "im"])
        vals = np.asarray(f.values, dtype=complex)
        for node, v in zip(f.grid.nodes, vals):
            wr.writerow([repr(float(c)) for c in node] + [repr(v.real), repr(v.imag)])


def grid_function_from_csv(grid: QuadratureGrid, path: str) -> GridFunction:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        dim = grid.rs.dimension
        if header[:dim] != [f"x{j+1}" for j in range(dim)]:
            raise QuadratureError("csv header does not match grid dimension")
        rows = list(rd)
    if len(rows) != grid.n_nodes:
        raise QuadratureError("csv row count does not match grid")
    nodes = np.array([[float(c) for c in row[:dim]] for row in rows])
    if not np.allclose(nodes, grid.nodes, atol=1e-12):
        raise QuadratureError("csv nodes do not match grid nodes")
    vals = np.array([complex(float(row[dim]), float(row[dim + 1])) for row in rows])
    if np.max(np.abs(vals.imag)) == 0.0:
        vals = vals.real
    return GridFunction(grid, vals)


def grid_function_to_npz(f: GridFunction, path: str) -> None:
    np.savez(
        path,
        nodes=f.grid.nodes,
        values=f.values,
        radius=f.grid.radius,
        resolution=f.grid.resolution,
    )


def grid_function_from_npz(grid: QuadratureGrid, path: str) -> GridFunction:
    with np.load(path) as data:
        if not np.allclose(data["nodes"], grid.nodes, atol=1e-12):
            raise QuadratureError("stored nodes do not match grid nodes")
        return GridFunction(grid, data["values"])
