"""Tensor-product B-spline surfaces over a control grid.

The surface is ``S(u, v) = sum_i sum_j N_{i,p}(u) M_{j,q}(v) P_{i,j}`` with
``i`` running over control-grid rows and ``j`` over columns. Knot vectors are
clamped; the right end of the parameter domain is closed so that the last
basis function equals 1 at ``u = U[-1]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidInputError

_DOMAIN_TOL = 1e-12


def validate_knots(knots, p: int) -> np.ndarray:
    """Return ``knots`` as a float array after checking it is a clamped vector."""
    U = np.asarray(knots, dtype=np.float64)
    if U.ndim != 1 or len(U) < 2 * (p + 1):
        raise InvalidInputError(f"knot vector of length {len(U)} too short for degree {p}")
    if np.any(np.diff(U) < 0):
        raise InvalidInputError("knot vector must be nondecreasing")
    if np.any(U[: p + 1] != U[0]) or np.any(U[-(p + 1):] != U[-1]):
        raise InvalidInputError("knot vector must be clamped (p+1 equal end knots)")
    return U


def make_clamped_knots(num_ctrl: int, p: int) -> np.ndarray:
    """Clamped knot vector on [0, 1] with uniformly spaced interior knots."""
    if p < 0:
        raise InvalidInputError("degree must be nonnegative")
    if num_ctrl <= p:
        raise InvalidInputError(f"need more than {p} control points for degree {p}, got {num_ctrl}")
    n_interior = num_ctrl - p - 1
    interior = np.arange(1, n_interior + 1, dtype=np.float64) / (n_interior + 1)
    return np.concatenate([np.zeros(p + 1), interior, np.ones(p + 1)])


def _last_span(U) -> int:
    """Index of the last nonempty knot interval."""
    nz = np.flatnonzero(np.diff(U) > 0)
    if len(nz) == 0:
        raise InvalidInputError("knot vector has no nonempty interval")
    return int(nz[-1])


def _check_param(u, U):
    if not (U[0] - _DOMAIN_TOL <= u <= U[-1] + _DOMAIN_TOL):
        raise DomainError(f"parameter {u} outside knot range [{U[0]}, {U[-1]}]")
    return min(max(u, U[0]), U[-1])


def basis(i: int, p: int, u: float, U) -> float:
    """Cox-de Boor recursion for ``N_{i,p}(u)``; ``0/0`` terms count as 0."""
    U = np.asarray(U, dtype=np.float64)
    if i < 0 or i + p + 1 >= len(U):
        raise InvalidInputError(f"basis index {i} out of range for degree {p} and {len(U)} knots")
    u = _check_param(u, U)
    last = _last_span(U)

    def rec(i, p):
        if p == 0:
            if U[i] <= u < U[i + 1]:
                return 1.0
            return 1.0 if (u == U[-1] and i == last) else 0.0
        left = right = 0.0
        d1 = U[i + p] - U[i]
        if d1 > 0:
            left = (u - U[i]) / d1 * rec(i, p - 1)
        d2 = U[i + p + 1] - U[i + 1]
        if d2 > 0:
            right = (U[i + p + 1] - u) / d2 * rec(i + 1, p - 1)
        return left + right

    return rec(i, p)


def find_span(u: float, p: int, U) -> int:
    """Knot interval ``k`` with ``U[k] <= u < U[k+1]`` (last interval at the end)."""
    n = len(U) - p - 2
    if u >= U[n + 1]:
        return n
    k = int(np.searchsorted(U, u, side="right")) - 1
    return max(p, min(k, n))


def basis_funs(span: int, u: float, p: int, U) -> np.ndarray:
    """The ``p + 1`` nonzero basis values on ``span`` (triangular scheme)."""
    N = np.zeros(p + 1)
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    N[0] = 1.0
    for j in range(1, p + 1):
        left[j] = u - U[span + 1 - j]
        right[j] = U[span + j] - u
        saved = 0.0
        for r in range(j):
            denom = right[r + 1] + left[j - r]
            tmp = N[r] / denom if denom != 0 else 0.0
            N[r] = saved + right[r + 1] * tmp
            saved = left[j - r] * tmp
        N[j] = saved
    return N


def basis_matrix(params, p: int, U) -> np.ndarray:
    """Dense ``(len(params), n_ctrl)`` matrix of basis values."""
    U = np.asarray(U, dtype=np.float64)
    n_ctrl = len(U) - p - 1
    out = np.zeros((len(params), n_ctrl))
    for a, u in enumerate(params):
        u = _check_param(float(u), U)
        span = find_span(u, p, U)
        out[a, span - p: span + 1] = basis_funs(span, u, p, U)
    return out


@dataclass(frozen=True)
class BSplineSurface:
    control: np.ndarray  # (rows, cols, 3)
    degree_u: int
    degree_v: int
    knots_u: np.ndarray
    knots_v: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.control, dtype=np.float64)
        if P.ndim != 3 or P.shape[2] != 3:
            raise InvalidInputError(f"control net must have shape (rows, cols, 3), got {P.shape}")
        if self.degree_u < 1 or self.degree_v < 1:
            raise InvalidInputError("degrees must be >= 1")
        U = validate_knots(self.knots_u, self.degree_u)
        V = validate_knots(self.knots_v, self.degree_v)
        if len(U) != P.shape[0] + self.degree_u + 1 or len(V) != P.shape[1] + self.degree_v + 1:
            raise InvalidInputError("knot vector lengths inconsistent with control net and degrees")
        object.__setattr__(self, "control", P)
        object.__setattr__(self, "knots_u", U)
        object.__setattr__(self, "knots_v", V)

    @property
    def shape(self) -> tuple[int, int]:
        return self.control.shape[0], self.control.shape[1]


def lift(points) -> np.ndarray:
    """Append ``z = 0`` to a ``(rows, cols, 2)`` net; 3D nets pass through."""
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 3 or P.shape[2] not in (2, 3):
        raise InvalidInputError(f"expected (rows, cols, 2|3) control net, got {P.shape}")
    if P.shape[2] == 2:
        P = np.concatenate([P, np.zeros(P.shape[:2] + (1,))], axis=2)
    return P


def surface_from_net(points, p: int = 1, q: int = 1) -> BSplineSurface:
    """Clamped uniform B-spline surface over a control net (planar nets get z = 0)."""
    P = lift(points)
    rows, cols = P.shape[:2]
    return BSplineSurface(P, p, q, make_clamped_knots(rows, p), make_clamped_knots(cols, q))


def eval_surface(s: BSplineSurface, u: float, v: float) -> np.ndarray:
    """Evaluate ``S(u, v)`` using only the nonzero basis functions."""
    for t in (u, v):
        if not (-_DOMAIN_TOL <= t <= 1 + _DOMAIN_TOL):
            raise DomainError(f"parameter {t} outside [0, 1]")
    U, V, p, q = s.knots_u, s.knots_v, s.degree_u, s.degree_v
    u = _check_param(float(u), U)
    v = _check_param(float(v), V)
    su = find_span(u, p, U)
    sv = find_span(v, q, V)
    Nu = basis_funs(su, u, p, U)
    Nv = basis_funs(sv, v, q, V)
    patch = s.control[su - p: su + 1, sv - q: sv + 1]
    return np.einsum("i,j,ijk->k", Nu, Nv, patch)


@dataclass(frozen=True)
class SampledSurface:
    points: np.ndarray  # (K, 3), row-major over (u, v)
    params: np.ndarray  # (K, 2)
    shape: tuple[int, int]  # (K_u, K_v)

    @property
    def K(self) -> int:
        return len(self.points)

    def grid(self) -> np.ndarray:
        """Points reshaped to ``(K_u, K_v, 3)``."""
        return self.points.reshape(self.shape + (3,))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v", "x", "y", "z"])
            for (u, v), (x, y, z) in zip(self.params, self.points):
                w.writerow([repr(float(u)), repr(float(v)), repr(float(x)), repr(float(y)), repr(float(z))])


def sample_params(K_u: int, K_v: int) -> np.ndarray:
    if K_u < 2 or K_v < 2:
        raise InvalidInputError("need at least 2 samples per direction")
    us = np.arange(K_u) / (K_u - 1)
    vs = np.arange(K_v) / (K_v - 1)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    return np.column_stack([uu.ravel(), vv.ravel()])


def sample_surface(s: BSplineSurface, K_u: int = 100, K_v: int = 100) -> SampledSurface:
    """Evaluate ``S`` on the uniform lattice ``u_a = a/(K_u-1)``, ``v_b = b/(K_v-1)``."""
    params = sample_params(K_u, K_v)
    us = np.arange(K_u) / (K_u - 1)
    vs = np.arange(K_v) / (K_v - 1)
    Bu = basis_matrix(us, s.degree_u, s.knots_u)
    Bv = basis_matrix(vs, s.degree_v, s.knots_v)
    pts = np.einsum("ai,bj,ijk->abk", Bu, Bv, s.control)
    return SampledSurface(pts.reshape(-1, 3), params, (K_u, K_v))
