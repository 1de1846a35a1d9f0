"""Deformed directional derivatives, their joint eigenfunction kernel, the
deformed Laplacian, and the carre du champ form.

Two function representations are supported.  PolyGaussian is a closed-form
Schwartz family P(x) exp(-a ||x||^2) closed under every operator here, with
all algebra (derivatives, reflections, division by x_j) done exactly on
coefficients.  GridFunction values are handled spectrally via the transform
module (multiplier route) with a direct difference-quotient route as the
independent cross-check.

The kernel E(x, y) is evaluated from its defining series.  At purely
imaginary arguments the series loses accuracy once |<x,y>| grows (terms of
size e^{|s|} cancel down to O(1)), so the per-axis profile is continued by
integrating the real ODE system A' = -B, B' = A - 2k B / s that the defining
equation induces on E(x, iy) = A + iB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .root_system import (
    KIND_PRODUCT,
    KIND_RANK_ONE,
    RootSystemSpec,
)
from .quadrature import GridFunction, QuadratureGrid, integrate, lp_norm, sample_on_grid


class DunklError(ValueError):
    """Invalid operation in the deformed-derivative layer."""


# ---------------------------------------------------------------------------
# closed-form Schwartz family

def _clean(coeffs: dict) -> dict:
    return {e: c for e, c in coeffs.items() if c != 0}


@dataclass(eq=False)
class PolyGaussian:
    """P(x) * exp(-a ||x||^2) with polynomial coefficients {exponents: coeff}.

    Exponent keys are tuples of length `dimension`.  The class is closed
    under differentiation, sign flips, products, and exact division by a
    coordinate, which is what makes the operator algebra below exact.
    """

    dimension: int
    rate: float
    coeffs: dict

    def __post_init__(self):
        if self.rate <= 0:
            raise DunklError("Gaussian rate must be positive")
        self.coeffs = _clean(
            {tuple(int(v) for v in e): complex(c) for e, c in self.coeffs.items()}
        )
        for e in self.coeffs:
            if len(e) != self.dimension or any(v < 0 for v in e):
                raise DunklError("bad exponent tuple")

    # -- evaluation ---------------------------------------------------------
    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0], dtype=complex)
        for e, c in self.coeffs.items():
            mono = np.ones(x.shape[0])
            for j, power in enumerate(e):
                if power:
                    mono = mono * x[:, j] ** power
            out += c * mono
        out *= np.exp(-self.rate * np.sum(x**2, axis=1))
        if np.max(np.abs(out.imag), initial=0.0) == 0.0:
            out = out.real
        return out

    def __call__(self, x):
        return self.evaluate(x)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.coeffs), default=0)

    # -- coefficient algebra --------------------------------------------------
    def _with(self, coeffs: dict) -> "PolyGaussian":
        return PolyGaussian(self.dimension, self.rate, coeffs)

    def scale(self, c) -> "PolyGaussian":
        return self._with({e: c * v for e, v in self.coeffs.items()})

    def __add__(self, other: "PolyGaussian") -> "PolyGaussian":
        if other.rate != self.rate or other.dimension != self.dimension:
            raise DunklError("can only add families with identical envelopes")
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0) + c
        return self._with(out)

    def __sub__(self, other: "PolyGaussian") -> "PolyGaussian":
        return self + other.scale(-1.0)

    def __mul__(self, other: "PolyGaussian") -> "PolyGaussian":
        if other.dimension != self.dimension:
            raise DunklError("dimension mismatch")
        out: dict = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return PolyGaussian(self.dimension, self.rate + other.rate, out)

    def shift_up(self, j: int) -> "PolyGaussian":
        """Multiply by the coordinate x_j."""
        out = {}
        for e, c in self.coeffs.items():
            ee = list(e)
            ee[j] += 1
            out[tuple(ee)] = c
        return self._with(out)

    def partial(self, j: int) -> "PolyGaussian":
        """Exact d/dx_j, including the envelope term -2a x_j P."""
        out: dict = {}
        for e, c in self.coeffs.items():
            if e[j] > 0:
                ee = list(e)
                ee[j] -= 1
                key = tuple(ee)
                out[key] = out.get(key, 0) + c * e[j]
            ee = list(e)
            ee[j] += 1
            key = tuple(ee)
            out[key] = out.get(key, 0) - 2.0 * self.rate * c
        return self._with(out)

    def flip_axis(self, j: int) -> "PolyGaussian":
        return self._with(
            {e: (-c if e[j] % 2 else c) for e, c in self.coeffs.items()}
        )

    def compose_signs(self, signs) -> "PolyGaussian":
        out = {}
        for e, c in self.coeffs.items():
            s = 1
            for j, power in enumerate(e):
                if signs[j] == -1 and power % 2:
                    s = -s
            out[e] = s * c
        return self._with(out)

    def divide_axis(self, j: int) -> "PolyGaussian":
        """Exact division of the polynomial part by x_j."""
        out = {}
        for e, c in self.coeffs.items():
            if e[j] == 0:
                raise DunklError("polynomial part is not divisible by the coordinate")
            ee = list(e)
            ee[j] -= 1
            out[tuple(ee)] = c
        return self._with(out)

    def parity_split(self, j: int = 0):
        """(even part, odd part) with respect to x_j -> -x_j; exact."""
        even = {e: c for e, c in self.coeffs.items() if e[j] % 2 == 0}
        odd = {e: c for e, c in self.coeffs.items() if e[j] % 2 == 1}
        return self._with(even), self._with(odd)

    def is_real(self) -> bool:
        return all(c.imag == 0 for c in self.coeffs.values())


def symmetrize(rs: RootSystemSpec, f: PolyGaussian) -> PolyGaussian:
    """Group average |G|^{-1} sum_sigma f(sigma x); exact for sign-flip groups."""
    _require_axis_kind(rs)
    out = None
    for g in rs.group:
        signs = np.sign(np.diag(g)).astype(int)
        term = f.compose_signs(signs)
        out = term if out is None else out + term
    return out.scale(1.0 / len(rs.group))


def _require_axis_kind(rs: RootSystemSpec) -> None:
    if rs.kind not in (KIND_RANK_ONE, KIND_PRODUCT):
        raise DunklError("operation requires rank-one or product kind")


def _axis_ks(rs: RootSystemSpec) -> np.ndarray:
    return np.asarray(rs.axis_exponents()) / 2.0


# ---------------------------------------------------------------------------
# the deformed directional derivative

def dunkl_axis(rs: RootSystemSpec, f: PolyGaussian, j: int) -> PolyGaussian:
    """T_j f = d_j f + k_j (f - f o sigma_j) / x_j, exactly on coefficients."""
    _require_axis_kind(rs)
    k = _axis_ks(rs)[j]
    out = f.partial(j)
    if k != 0.0:
        diff = f - f.flip_axis(j)
        if diff.coeffs:
            out = out + diff.divide_axis(j).scale(k)
    return out


def apply_dunkl_operator(rs, f, xi, freq_grid=None, method="spectral"):
    """T_xi f for a closed-form family (exact) or a grid function.

    Grid functions use the transform-side multiplier i<xi, .> by default;
    method="direct" instead differentiates the inversion integral through
    the kernel and adds node-permutation difference quotients, giving an
    independent route for cross-checks.
    """
    xi = np.asarray(xi, dtype=float).reshape(rs.dimension)
    if isinstance(f, PolyGaussian):
        out = None
        for j in range(rs.dimension):
            if xi[j] == 0.0:
                continue
            term = dunkl_axis(rs, f, j).scale(xi[j])
            out = term if out is None else out + term
        if out is None:
            out = f.scale(0.0)
        return out
    if not isinstance(f, GridFunction):
        raise DunklError("f must be a PolyGaussian or GridFunction")

    from . import transform  # local import: transform builds on this module

    grid = f.grid
    if freq_grid is None:
        freq_grid = grid
    if method == "spectral":
        F = transform.forward(grid, f, freq_grid)
        Fm = transform.apply_multiplier(F, lambda nodes: 1j * (nodes @ xi))
        return transform.inverse(freq_grid, Fm, grid)
    if method != "direct":
        raise DunklError("method must be 'spectral' or 'direct'")
    ks = _axis_ks(rs)
    out = np.zeros(grid.n_nodes, dtype=complex)
    for j in range(rs.dimension):
        if xi[j] == 0.0:
            continue
        F = transform.forward(grid, f, freq_grid)
        dj = transform.inverse_partial(freq_grid, F, grid, j).values
        if ks[j] != 0.0:
            signs = [1] * rs.dimension
            signs[j] = -1
            perm = grid.flip_permutation(signs)
            dj = dj + ks[j] * (f.values - f.values[perm]) / grid.nodes[:, j]
        out += xi[j] * dj
    return GridFunction(grid, out)


def dunkl_laplacian(rs, f, freq_grid=None, method="spectral"):
    """Sum of squared deformed derivatives.

    Closed-form path: Laplacian plus the per-root correction
    k ( 2 x_j d_j f - f + f o sigma_j ) / x_j^2, exact on coefficients.
    Grid path: multiplier -||xi||^2 (default) or repeated direct application.
    """
    if isinstance(f, PolyGaussian):
        _require_axis_kind(rs)
        ks = _axis_ks(rs)
        out = None
        for j in range(rs.dimension):
            term = f.partial(j).partial(j)
            if ks[j] != 0.0:
                num = f.partial(j).shift_up(j).scale(2.0) - f + f.flip_axis(j)
                if num.coeffs:
                    term = term + num.divide_axis(j).divide_axis(j).scale(ks[j])
            out = term if out is None else out + term
        return out
    if not isinstance(f, GridFunction):
        raise DunklError("f must be a PolyGaussian or GridFunction")

    from . import transform

    grid = f.grid
    if freq_grid is None:
        freq_grid = grid
    if method == "spectral":
        F = transform.forward(grid, f, freq_grid)
        Fm = transform.apply_multiplier(F, lambda nodes: -np.sum(nodes**2, axis=1))
        return transform.inverse(freq_grid, Fm, grid)
    if method != "direct":
        raise DunklError("method must be 'spectral' or 'direct'")
    out = np.zeros(grid.n_nodes, dtype=complex)
    for j in range(rs.dimension):
        e = np.zeros(rs.dimension)
        e[j] = 1.0
        tj = apply_dunkl_operator(rs, f, e, freq_grid, method="direct")
        out += apply_dunkl_operator(rs, tj, e, freq_grid, method="direct").values
    return GridFunction(grid, out)


def carre_du_champ(rs: RootSystemSpec, f: PolyGaussian, g: PolyGaussian, x):
    """<grad f, grad g> + sum_alpha (k/2) (f - f o sigma)(g - g o sigma)/<alpha,x>^2."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    scal = x @ rs.roots.T
    if np.min(np.abs(scal)) == 0.0:
        raise DunklError("carre du champ undefined on reflection hyperplanes")
    out = np.zeros(x.shape[0], dtype=complex)
    for j in range(rs.dimension):
        out += f.partial(j).evaluate(x) * g.partial(j).evaluate(x)
    fx, gx = f.evaluate(x), g.evaluate(x)
    for i, alpha in enumerate(rs.roots):
        k = rs.multiplicities[i]
        if k == 0.0:
            continue
        sx = x - np.outer(scal[:, i], alpha)  # sigma_alpha, ||alpha||^2 = 2
        out += (k / 2.0) * (fx - f.evaluate(sx)) * (gx - g.evaluate(sx)) / scal[:, i] ** 2
    if np.max(np.abs(out.imag), initial=0.0) == 0.0:
        out = out.real
    return out


def skew_symmetry_residual(rs, grid: QuadratureGrid, f: PolyGaussian,
                           g: PolyGaussian, xi) -> float:
    """| int (T_xi f) g dw + int f (T_xi g) dw | / (||f||_2 ||g||_2)."""
    tf = apply_dunkl_operator(rs, f, xi)
    tg = apply_dunkl_operator(rs, g, xi)
    a = integrate(grid, lambda x: tf.evaluate(x) * g.evaluate(x))
    b = integrate(grid, lambda x: f.evaluate(x) * tg.evaluate(x))
    nf = lp_norm(grid, lambda x: f.evaluate(x), 2.0)
    ng = lp_norm(grid, lambda x: g.evaluate(x), 2.0)
    return float(abs(a + b) / (nf * ng))


# ---------------------------------------------------------------------------
# kernel evaluation

_SERIES_SPLIT = 10.0  # switch from series to ODE continuation beyond this |s|
_ODE_SMAX = 72.0
_RANGE_GUARD = 64.0


class KernelSeriesError(RuntimeError):
    """Series cap reached before tolerance; carries the last increment."""

    def __init__(self, increment: float):
        super().__init__(
            f"kernel series did not converge; last increment {increment:.3e}"
        )
        self.increment = increment


@dataclass(eq=False)
class KernelEval:
    """Evaluator for the joint eigenfunction kernel E(x, y).

    Rank-one values come from the power series sum a_n x^n with a_0 = 1 and
    a_{n+1} = y a_n / (n + 1 + 2k [n+1 odd]); product-kind values are the
    per-axis product.  Purely imaginary arguments beyond |s| = 10 use the
    cached ODE continuation of the profile (see module docstring).
    """

    rs: RootSystemSpec
    series_tol: float = 1e-14
    max_terms: int = 512
    _ode_cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        _require_axis_kind(self.rs)
        if self.series_tol <= 0:
            raise DunklError("series_tol must be positive")
        if self.max_terms < 32:
            raise DunklError("max_terms must be at least 32")

    # -- scalar profile e_k(t) = rank-one E(1, t) -----------------------------
    def _series(self, k: float, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=complex)
        term = np.ones_like(t)
        total = term.copy()
        streak = np.zeros(t.shape, dtype=int)
        for n in range(1, self.max_terms + 1):
            term = term * t / (n + 2.0 * k * (n % 2))
            total = total + term
            small = np.abs(term) <= self.series_tol * (np.abs(total) + 1e-300)
            streak = np.where(small, streak + 1, 0)
            if np.all(streak >= 4):
                return total
        raise KernelSeriesError(float(np.max(np.abs(term))))

    def _ode_profile(self, k: float):
        sol = self._ode_cache.get(k)
        if sol is None:
            s0 = _SERIES_SPLIT
            f0 = self._series(k, np.array([1j * s0]))[0]
            rhs = lambda s, y: [-y[1], y[0] - 2.0 * k * y[1] / s]
            res = solve_ivp(
                rhs, (s0, _ODE_SMAX), [f0.real, f0.imag],
                method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True,
            )
            if not res.success:
                raise DunklError("kernel profile continuation failed")
            sol = res.sol
            self._ode_cache[k] = sol
        return sol

    def profile_imag(self, k: float, s) -> np.ndarray:
        """Kernel profile at t = i s for real s (vectorized)."""
        s = np.asarray(s, dtype=float)
        if np.max(np.abs(s), initial=0.0) > _RANGE_GUARD:
            raise DunklError("kernel range guard exceeded (|x_j y_j| > 64)")
        if k == 0.0:
            return np.exp(1j * s)
        out = np.empty(s.shape, dtype=complex)
        a = np.abs(s)
        near = a <= _SERIES_SPLIT
        if np.any(near):
            out[near] = self._series(k, 1j * a[near])
        if np.any(~near):
            ab = self._ode_profile(k)(a[~near].ravel())
            out[~near] = (ab[0] + 1j * ab[1]).reshape(a[~near].shape)
        neg = s < 0
        out[neg] = np.conj(out[neg])
        return out

    def profile(self, k: float, t) -> np.ndarray:
        """Kernel profile at complex t (real, imaginary, or mildly mixed)."""
        t = np.asarray(t, dtype=complex)
        if np.max(np.abs(t), initial=0.0) > _RANGE_GUARD:
            raise DunklError("kernel range guard exceeded (|x_j y_j| > 64)")
        if np.all(t.imag == 0.0):
            if k == 0.0:
                return np.exp(t.real).astype(complex)
            return self._series(k, t)
        if np.all(t.real == 0.0):
            return self.profile_imag(k, t.imag)
        if np.max(np.abs(t) - t.real) > 30.0:
            raise DunklError("mixed complex argument outside the stable series range")
        if k == 0.0:
            return np.exp(t)
        return self._series(k, t)


def dunkl_kernel(ke: KernelEval, x, y) -> complex:
    """E(x, y) for x real and y real or complex; batch x allowed."""
    rs = ke.rs
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=complex).reshape(rs.dimension)
    ks = _axis_ks(rs)
    out = np.ones(x.shape[0], dtype=complex)
    for j in range(rs.dimension):
        out *= ke.profile(ks[j], x[:, j] * y[j])
    return complex(out[0]) if out.shape[0] == 1 else out


def kernel_ode_residual(ke: KernelEval, x: float, y: float) -> float:
    """|T_x E(x,y) - y E(x,y)| / (1 + |E|) with T applied termwise (rank-one).

    The truncated series is differentiated coefficientwise, so this checks
    the defining equation rather than the recurrence that produced it.
    """
    ks = _axis_ks(ke.rs)
    if ke.rs.dimension != 1:
        raise DunklError("the termwise residual check is rank-one only")
    k = ks[0]
    # coefficients a_n of sum a_n x^n for the given y
    a = [1.0 + 0.0j]
    for n in range(1, ke.max_terms + 1):
        a.append(a[-1] * y / (n + 2.0 * k * (n % 2)))
        if abs(a[-1]) * abs(x) ** n < 1e-30:
            break
    val = sum(c * x**n for n, c in enumerate(a))
    # T (x^n) = (n + 2k [n odd]) x^{n-1}
    tval = sum(
        c * (n + 2.0 * k * (n % 2)) * x ** (n - 1) for n, c in enumerate(a) if n
    )
    return abs(tval - y * val) / (1.0 + abs(val))
