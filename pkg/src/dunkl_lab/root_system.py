"""Normalized root systems, their reflection groups, and the weight they induce.

A root system here is a finite set R of vectors of norm sqrt(2) with
R intersect(alpha R) = {+-alpha}, closed under its own reflections.  Together
with a G-invariant multiplicity k >= 0 it defines the density

    w(x) = prefactor * prod_{alpha in R} |<x, alpha>|^{k(alpha)}

All downstream modules consume the frozen spec produced here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

SQRT2 = math.sqrt(2.0)

_MATCH_TOL = 1e-10
_GROUP_CAP = 1024

KIND_RANK_ONE = "rank-one"
KIND_PRODUCT = "product"
KIND_GENERAL = "general"
_KINDS = (KIND_RANK_ONE, KIND_PRODUCT, KIND_GENERAL)


class RootSystemError(ValueError):
    """Invalid root-system construction or query."""


@dataclass(frozen=True, eq=False)
class RootSystemSpec:
    """Frozen root system with reflection group and multiplicities.

    roots: (n_roots, dimension), each of squared norm 2.
    multiplicities: (n_roots,), nonnegative, constant on group orbits.
    group: (|G|, dimension, dimension) orthogonal matrices, closed, with id.
    orbits: tuple of index tuples partitioning the roots, in a deterministic
            order (sorted by lexicographically smallest member root).
    """

    kind: str
    dimension: int
    roots: np.ndarray
    multiplicities: np.ndarray
    group: np.ndarray
    orbits: tuple[tuple[int, ...], ...]
    weight_prefactor: float = 1.0

    @property
    def k_sum(self) -> float:
        """sum_{alpha in R} k(alpha), the homogeneity excess of the weight."""
        return float(self.multiplicities.sum())

    @property
    def homogeneous_dimension(self) -> float:
        return self.dimension + self.k_sum

    def axis_exponents(self) -> np.ndarray:
        """Per-axis exponent 2*k_j for rank-one/product kinds."""
        if self.kind not in (KIND_RANK_ONE, KIND_PRODUCT):
            raise RootSystemError("axis exponents only defined for rank-one/product kinds")
        exps = np.zeros(self.dimension)
        for alpha, k in zip(self.roots, self.multiplicities):
            j = int(np.argmax(np.abs(alpha)))
            exps[j] += k
        return exps


def _key(vec: np.ndarray) -> tuple:
    return tuple(np.round(vec, 9))


def _group_closure(generators: list[np.ndarray], dim: int) -> np.ndarray:
    eye = np.eye(dim)
    elems = {_key(eye.ravel()): eye}
    frontier = [eye]
    while frontier:
        new = []
        for g in frontier:
            for h in generators:
                prod = h @ g
                k = _key(prod.ravel())
                if k not in elems:
                    if len(elems) >= _GROUP_CAP:
                        raise RootSystemError(
                            f"reflection group closure exceeds cap {_GROUP_CAP}"
                        )
                    elems[k] = prod
                    new.append(prod)
        frontier = new
    return np.array([elems[k] for k in sorted(elems)])


def _find_root(roots: np.ndarray, vec: np.ndarray) -> int:
    d = np.linalg.norm(roots - vec[None, :], axis=1)
    i = int(np.argmin(d))
    if d[i] > 1e-8:
        return -1
    return i


def _reflection_matrix(alpha: np.ndarray) -> np.ndarray:
    # sigma_alpha(x) = x - 2 <x, alpha>/||alpha||^2 alpha ; ||alpha||^2 = 2 here
    return np.eye(alpha.size) - np.outer(alpha, alpha)


def _orbits(roots: np.ndarray, group: np.ndarray) -> tuple[tuple[int, ...], ...]:
    n = len(roots)
    seen = [False] * n
    orbits = []
    for i in range(n):
        if seen[i]:
            continue
        orb = set()
        stack = [i]
        while stack:
            j = stack.pop()
            if seen[j]:
                continue
            seen[j] = True
            orb.add(j)
            for g in group:
                m = _find_root(roots, g @ roots[j])
                if m >= 0 and not seen[m]:
                    stack.append(m)
        orbits.append(tuple(sorted(orb)))
    orbits.sort(key=lambda orb: min(tuple(roots[i]) for i in orb))
    return tuple(orbits)


def _validate_roots(roots: np.ndarray) -> None:
    norms2 = np.sum(roots**2, axis=1)
    if not np.allclose(norms2, 2.0, atol=1e-9):
        raise RootSystemError("every root must have squared norm 2")
    n = len(roots)
    # R cap alpha*R = {+-alpha}: with all norms fixed this reduces to "no
    # duplicates" (cos = +1 means an identical root)
    for i in range(n):
        for j in range(i + 1, n):
            if roots[i] @ roots[j] > 2.0 - 1e-9:
                raise RootSystemError("duplicate root")
    for alpha in roots:
        if _find_root(roots, -alpha) < 0:
            raise RootSystemError("root system is not closed under negation")
        sigma = _reflection_matrix(alpha)
        for beta in roots:
            if _find_root(roots, sigma @ beta) < 0:
                raise RootSystemError("root system is not reflection-invariant")


def _normalize_multiplicities(k_values, roots, orbits) -> np.ndarray:
    n = len(roots)
    mult = np.empty(n)
    if np.isscalar(k_values):
        mult[:] = float(k_values)
    elif isinstance(k_values, dict):
        for oi, orb in enumerate(orbits):
            if oi not in k_values and str(oi) not in k_values:
                raise RootSystemError(f"missing multiplicity for orbit {oi}")
            v = k_values.get(oi, k_values.get(str(oi)))
            mult[list(orb)] = float(v)
    else:
        arr = np.asarray(k_values, dtype=float)
        if arr.shape == (len(orbits),) and len(orbits) != n:
            for oi, orb in enumerate(orbits):
                mult[list(orb)] = arr[oi]
        elif arr.shape == (n,):
            mult = arr.copy()
        else:
            raise RootSystemError("multiplicity list length matches neither roots nor orbits")
    if np.any(mult < 0):
        raise RootSystemError("multiplicities must be nonnegative")
    for orb in orbits:
        vals = mult[list(orb)]
        if not np.allclose(vals, vals[0], atol=1e-12):
            raise RootSystemError("multiplicity must be constant on group orbits")
    return mult


def make_root_system(kind, dimension, k_values, roots=None, weight_prefactor=1.0):
    """Build a validated RootSystemSpec.

    kind "rank-one": dimension 1, R = {+-sqrt(2)}, G = {id, -id}.
    kind "product":  R = {+-sqrt(2) e_j}, G = sign flips (Z_2^N); k_values may
                     be a scalar or a per-axis sequence.
    kind "general":  explicit roots required; the group is computed by closure.
    """
    if kind not in _KINDS:
        raise RootSystemError(f"unknown kind {kind!r}")
    if dimension < 1:
        raise RootSystemError("dimension must be >= 1")
    if weight_prefactor <= 0:
        raise RootSystemError("weight_prefactor must be positive")

    if kind == KIND_RANK_ONE:
        if dimension != 1:
            raise RootSystemError("rank-one kind requires dimension 1")
        roots = np.array([[-SQRT2], [SQRT2]])
        if not np.isscalar(k_values):
            k_values = float(np.asarray(k_values).ravel()[0])
    elif kind == KIND_PRODUCT:
        # orbits sort axis-by-axis, so per-axis k_values (scalar, sequence, or
        # {axis: k} dict) pass straight through as per-orbit multiplicities
        roots = np.zeros((2 * dimension, dimension))
        for j in range(dimension):
            roots[2 * j, j] = -SQRT2
            roots[2 * j + 1, j] = SQRT2
    else:
        if roots is None:
            raise RootSystemError("general kind requires explicit roots")
        roots = np.asarray(roots, dtype=float)
        if roots.ndim != 2 or roots.shape[1] != dimension:
            raise RootSystemError("roots must have shape (n_roots, dimension)")

    _validate_roots(roots)
    generators = [_reflection_matrix(a) for a in roots]
    group = _group_closure(generators, dimension)
    orbits = _orbits(roots, group)
    mult = _normalize_multiplicities(k_values, roots, orbits)
    return RootSystemSpec(
        kind=kind,
        dimension=dimension,
        roots=roots,
        multiplicities=mult,
        group=group,
        orbits=orbits,
        weight_prefactor=float(weight_prefactor),
    )


def reflect(rs: RootSystemSpec, alpha, x):
    """sigma_alpha(x) for a root alpha of rs; x may be a batch (..., N)."""
    alpha = np.asarray(alpha, dtype=float).reshape(rs.dimension)
    if _find_root(rs.roots, alpha) < 0:
        raise RootSystemError("alpha is not a root of this system")
    x = np.asarray(x, dtype=float)
    return x - (x @ alpha)[..., None] * alpha  # ||alpha||^2 = 2 cancels the 2

def orbit_distance(rs: RootSystemSpec, x, y) -> float:
    """d(x, y) = min_{sigma in G} ||sigma(x) - y||."""
    x = np.asarray(x, dtype=float).reshape(rs.dimension)
    y = np.asarray(y, dtype=float).reshape(rs.dimension)
    imgs = rs.group @ x
    return float(np.min(np.linalg.norm(imgs - y[None, :], axis=1)))


def weight_density(rs: RootSystemSpec, x):
    """w(x) = prefactor * prod_alpha |<x, alpha>|^{k(alpha)}; batch-safe."""
    x = np.asarray(x, dtype=float)
    scal = x @ rs.roots.T  # (..., n_roots)
    out = np.prod(np.abs(scal) ** rs.multiplicities, axis=-1)
    return rs.weight_prefactor * out


# ---------------------------------------------------------------------------
# serialization

def root_system_to_json(rs: RootSystemSpec) -> str:
    doc = {
        "kind": rs.kind,
        "dimension": rs.dimension,
        "roots": [[float(v) for v in alpha] for alpha in rs.roots],
        "multiplicity": {
            str(oi): float(rs.multiplicities[orb[0]]) for oi, orb in enumerate(rs.orbits)
        },
    }
    if rs.weight_prefactor != 1.0:
        doc["weight_prefactor"] = rs.weight_prefactor
    return json.dumps(doc, sort_keys=True)


def root_system_from_json(text: str) -> RootSystemSpec:
    doc = json.loads(text)
    kind = doc["kind"]
    dim = int(doc["dimension"])
    roots = np.asarray(doc["roots"], dtype=float)
    pref = float(doc.get("weight_prefactor", 1.0))
    mult = {int(k): float(v) for k, v in doc["multiplicity"].items()}
    if kind == KIND_GENERAL:
        return make_root_system(kind, dim, mult, roots=roots, weight_prefactor=pref)
    # rank-one / product rebuild from their canonical roots; recover per-axis k
    probe = make_root_system(kind, dim, 0.0, weight_prefactor=pref)
    per_orbit = [mult[oi] for oi in range(len(probe.orbits))]
    if kind == KIND_RANK_ONE:
        return make_root_system(kind, dim, per_orbit[0], weight_prefactor=pref)
    per_axis = np.zeros(dim)
    for oi, orb in enumerate(probe.orbits):
        j = int(np.argmax(np.abs(probe.roots[orb[0]])))
        per_axis[j] = per_orbit[oi]
    return make_root_system(kind, dim, per_axis, weight_prefactor=pref)
