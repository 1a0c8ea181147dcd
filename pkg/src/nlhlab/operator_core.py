"""Weighted finite-dimensional Hilbert-space linear algebra.

Every space carries a diagonal mass matrix ``M`` and the inner product
``<x, y> = x^H M y`` (antilinear in the first slot).  Maps are stored as
plain matrices; adjoints, projections and the minimum modulus are taken with
respect to the weighted inner products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import StructuralError

RANK_TOL = 1e-10
DENSE_SVD_LIMIT = 2000
ORTHONORMAL_TOL = 1e-12


def _as_dense(mat) -> np.ndarray:
    if sp.issparse(mat):
        return mat.toarray()
    return np.asarray(mat)


@dataclass(frozen=True, eq=False)
class HilbertSpace:
    """A coordinate space K^dim with diagonal mass weights."""

    dim: int
    mass: np.ndarray = field(default=None)
    name: str = ""

    def __post_init__(self):
        if self.dim < 0:
            raise StructuralError("dimension must be non-negative")
        mass = np.ones(self.dim) if self.mass is None else np.asarray(self.mass, dtype=float)
        if mass.shape != (self.dim,):
            raise StructuralError(f"mass has shape {mass.shape}, expected ({self.dim},)")
        if np.any(mass <= 0):
            raise StructuralError("mass weights must be strictly positive")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def uniform(cls, dim: int, weight: float = 1.0, name: str = "") -> "HilbertSpace":
        return cls(dim, np.full(dim, float(weight)), name)

    def inner(self, x, y):
        """Weighted inner product; columns are paired if 2-d arrays are passed."""
        x = np.asarray(x)
        y = np.asarray(y)
        if x.ndim == 1:
            return np.vdot(x, self.mass * y) if y.ndim == 1 else (x.conj() * self.mass) @ y
        return x.conj().T @ (self.mass[:, None] * y) if y.ndim == 2 else x.conj().T @ (self.mass * y)

    def norm(self, x) -> float:
        x = np.asarray(x)
        return float(np.sqrt(np.sum(self.mass * np.abs(x) ** 2)))

    def sqrt_mass(self) -> np.ndarray:
        return np.sqrt(self.mass)

    def same_as(self, other: "HilbertSpace") -> bool:
        return self is other or (self.dim == other.dim and np.array_equal(self.mass, other.mass))


@dataclass(frozen=True, eq=False)
class LinearMap:
    """A matrix acting from ``domain`` to ``codomain``."""

    domain: HilbertSpace
    codomain: HilbertSpace
    matrix: object

    def __post_init__(self):
        shape = self.matrix.shape
        if shape != (self.codomain.dim, self.domain.dim):
            raise StructuralError(
                f"matrix shape {shape} does not match (codomain.dim, domain.dim) = "
                f"({self.codomain.dim}, {self.domain.dim})"
            )

    @property
    def shape(self):
        return self.matrix.shape

    def __call__(self, x):
        return self.matrix @ x

    def dense(self) -> np.ndarray:
        return _as_dense(self.matrix)

    def symmetrized(self) -> np.ndarray:
        """Dense matrix of the map in mass-orthonormal coordinates, W_cod A W_dom^-1."""
        wc = self.codomain.sqrt_mass()
        wd = self.domain.sqrt_mass()
        return wc[:, None] * self.dense() / wd[None, :]

    def op_norm(self) -> float:
        """Operator norm in the weighted norms."""
        if min(self.shape) == 0:
            return 0.0
        return float(np.linalg.norm(self.symmetrized(), 2))


@dataclass(frozen=True, eq=False)
class Subspace:
    """Subspace of ``ambient`` spanned by mass-orthonormal columns."""

    ambient: HilbertSpace
    basis: np.ndarray
    check: bool = True

    def __post_init__(self):
        basis = np.asarray(self.basis)
        if basis.ndim == 1:
            basis = basis[:, None]
        if basis.shape[0] != self.ambient.dim:
            raise StructuralError("basis rows must match ambient dimension")
        if basis.shape[1] > self.ambient.dim:
            raise StructuralError("more basis vectors than ambient dimension")
        if self.check and basis.shape[1]:
            gram = self.ambient.inner(basis, basis)
            err = np.max(np.abs(gram - np.eye(basis.shape[1])))
            if err > 1e3 * ORTHONORMAL_TOL * max(1, basis.shape[1]):
                raise StructuralError(f"basis is not mass-orthonormal (error {err:.2e})")
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def full(cls, space: HilbertSpace) -> "Subspace":
        return cls(space, np.diag(1.0 / np.sqrt(space.mass)))

    @classmethod
    def zero(cls, space: HilbertSpace) -> "Subspace":
        return cls(space, np.zeros((space.dim, 0)))

    @classmethod
    def span(cls, space: HilbertSpace, vectors, tol: float = RANK_TOL) -> "Subspace":
        """Mass-orthonormal basis of the span of the given columns."""
        vectors = np.asarray(vectors)
        if vectors.ndim == 1:
            vectors = vectors[:, None]
        if vectors.shape[1] == 0:
            return cls.zero(space)
        w = space.sqrt_mass()
        u, s, _ = np.linalg.svd(w[:, None] * vectors, full_matrices=False)
        rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
        return cls(space, u[:, :rank] / w[:, None])

    def embedding(self) -> LinearMap:
        """The canonical embedding iota: K^dim -> ambient."""
        return LinearMap(HilbertSpace(self.dim), self.ambient, self.basis)

    def coordinates(self, v):
        """iota^* v, the coordinates of the orthogonal projection of v."""
        return self.basis.conj().T @ (self.ambient.mass[:, None] * v if np.ndim(v) == 2
                                      else self.ambient.mass * v)

    def complement(self) -> "Subspace":
        """Orthogonal complement in the ambient space."""
        w = self.ambient.sqrt_mass()
        q = w[:, None] * self.basis
        if self.dim == 0:
            return Subspace.full(self.ambient)
        full_q, _ = np.linalg.qr(q, mode="complete")
        rest = full_q[:, self.dim:]
        return Subspace(self.ambient, rest / w[:, None])


def adjoint(A: LinearMap) -> LinearMap:
    """Weighted adjoint ``M_dom^-1 A^H M_cod``."""
    if not isinstance(A, LinearMap):
        raise StructuralError("adjoint expects a LinearMap")
    mat = A.matrix
    if sp.issparse(mat):
        adj = sp.diags(1.0 / A.domain.mass) @ mat.conj().T @ sp.diags(A.codomain.mass)
        adj = adj.tocsr()
    else:
        adj = (np.asarray(mat).conj().T * A.codomain.mass[None, :]) / A.domain.mass[:, None]
    return LinearMap(A.codomain, A.domain, adj)


def _svd_symmetrized(A: LinearMap):
    mat = A.symmetrized()
    if max(mat.shape) <= DENSE_SVD_LIMIT:
        return np.linalg.svd(mat, full_matrices=True)
    # Large maps: column-pivoted QR reveals the rank; an SVD of the small
    # triangular factor then recovers singular values and bases.
    q, r, perm = sla.qr(mat, pivoting=True, mode="full")
    inv_perm = np.argsort(perm)
    u_r, s, vt_r = np.linalg.svd(r[:, inv_perm], full_matrices=True)
    return q @ u_r, s, vt_r


def _rank(s: np.ndarray, tol: float) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def fundamental_subspaces(A: LinearMap, tol: float = RANK_TOL):
    """Mass-orthonormal bases of ker(A) in the domain and ran(A) in the codomain."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    m, n = A.shape
    if min(m, n) == 0:
        # Either the domain is trivial or every vector is mapped to K^0.
        return Subspace.full(A.domain), Subspace.zero(A.codomain)
    u, s, vt = _svd_symmetrized(A)
    r = _rank(s, tol)
    wd = A.domain.sqrt_mass()
    wc = A.codomain.sqrt_mass()
    kernel = Subspace(A.domain, vt[r:].conj().T / wd[:, None])
    rng = Subspace(A.codomain, u[:, :r] / wc[:, None])
    return kernel, rng


def project(S: Subspace, v) -> np.ndarray:
    """Orthogonal projection onto S: basis (basis^H M v)."""
    v = np.asarray(v)
    if v.shape[0] != S.ambient.dim:
        raise StructuralError("vector does not live in the ambient space of S")
    return S.basis @ S.coordinates(v)


def singular_values(A: LinearMap) -> np.ndarray:
    if min(A.shape) == 0:
        return np.zeros(0)
    return np.linalg.svd(A.symmetrized(), compute_uv=False)


def min_modulus(A: LinearMap, tol: float = RANK_TOL) -> float:
    """inf over nonzero phi orthogonal to ker(A) of |A phi| / |phi|."""
    s = singular_values(A)
    r = _rank(s, tol)
    if r == 0:
        return float("inf")
    return float(s[r - 1])


def direct_sum(As: Sequence[LinearMap]) -> LinearMap:
    """Block-diagonal map between the direct sums of domains and codomains."""
    As = list(As)
    if not As:
        raise StructuralError("direct_sum needs at least one map")
    if len(As) == 1:
        return As[0]
    dom = HilbertSpace(sum(a.domain.dim for a in As), np.concatenate([a.domain.mass for a in As]))
    cod = HilbertSpace(sum(a.codomain.dim for a in As), np.concatenate([a.codomain.mass for a in As]))
    if all(sp.issparse(a.matrix) for a in As):
        mat = sp.block_diag([a.matrix for a in As], format="csr")
    else:
        mat = sla.block_diag(*[a.dense() for a in As])
    return LinearMap(dom, cod, mat)


def compress(A: LinearMap, S0: Subspace, S1: Subspace) -> LinearMap:
    """iota_{S1}^* A iota_{S0} written in the two subspace bases."""
    if not (S0.ambient.same_as(A.domain) and S1.ambient.same_as(A.codomain)):
        raise StructuralError("subspaces must live in the domain/codomain of A")
    image = A.matrix @ S0.basis
    mat = S1.coordinates(np.asarray(image))
    return LinearMap(HilbertSpace(S0.dim), HilbertSpace(S1.dim), np.asarray(mat))
