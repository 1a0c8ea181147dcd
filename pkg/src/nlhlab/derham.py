"""Discrete de Rham complex on voxel domains.

A domain is a union of closed unit voxels scaled by ``h``.  Degrees of freedom
live on the open cells (nodes, edges, faces, voxels) lying in the interior of
that union; cells on the boundary are dropped, which encodes the homogeneous
Dirichlet condition for potentials and the electric (tangential) condition for
fields.  The incidence matrices are exact integer matrices scaled by 1/h, so
``Ccirc @ G == 0`` holds exactly.

Ordering of degrees of freedom: by direction, then z, then y, then x (x
fastest), restricted to interior cells.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateDomainError, StructuralError
from .operator_core import HilbertSpace, LinearMap, Subspace, adjoint

MAX_VOXELS = 8_000_000


@dataclass(frozen=True, eq=False)
class VoxelDomain:
    """Boolean occupancy on an ``(nx, ny, nz)`` voxel grid with spacing ``h``."""

    mask: np.ndarray
    h: float = field(default=None)

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 3:
            raise StructuralError("voxel mask must be 3-dimensional")
        if min(mask.shape) < 1:
            raise StructuralError("voxel shape entries must be positive")
        if not mask.any():
            raise StructuralError("domain has no occupied voxel")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        h = 1.0 / mask.shape[0] if self.h is None else float(self.h)
        if not h > 0:
            raise StructuralError("spacing h must be positive")
        object.__setattr__(self, "h", h)

    @property
    def shape(self) -> tuple:
        return self.mask.shape

    @property
    def volume(self) -> float:
        return float(self.mask.sum()) * self.h ** 3

    def cavity_count(self) -> int:
        """Bounded components of the complement (26-connected empty voxels)."""
        comp = ~np.pad(self.mask, 1, constant_values=False)
        _, n = ndi.label(comp, structure=np.ones((3, 3, 3), dtype=bool))
        return int(n) - 1

    def component_count(self) -> int:
        """Connected components of the open domain (face-connected voxels)."""
        _, n = ndi.label(self.mask)
        return int(n)


# -- fixtures ---------------------------------------------------------------

def solid_cube(n: int, h: float | None = None) -> VoxelDomain:
    return VoxelDomain(np.ones((n, n, n), dtype=bool), h)


def cavity_cube(n: int, m: int, h: float | None = None) -> VoxelDomain:
    """n^3 cube with a centred m^3 cavity."""
    if not 0 < m <= n - 2:
        raise StructuralError("cavity must fit strictly inside the cube")
    mask = np.ones((n, n, n), dtype=bool)
    lo = (n - m) // 2
    mask[lo:lo + m, lo:lo + m, lo:lo + m] = False
    return VoxelDomain(mask, h)


def two_cavity(h: float | None = None) -> VoxelDomain:
    """11^3 cube with two disjoint 3^3 cavities."""
    mask = np.ones((11, 11, 11), dtype=bool)
    mask[2:5, 4:7, 4:7] = False
    mask[6:9, 4:7, 4:7] = False
    return VoxelDomain(mask, h)


def replicate_domain(domain: VoxelDomain, k: int, gap: int = 1) -> VoxelDomain:
    """k translated copies along x separated by ``gap`` empty voxel layers."""
    if k < 1:
        raise StructuralError("k must be at least 1")
    if gap < 1:
        raise StructuralError("gap must be positive")
    nx, ny, nz = domain.shape
    total_x = k * nx + (k - 1) * gap
    if total_x * ny * nz > MAX_VOXELS:
        raise StructuralError("replicated domain exceeds the voxel budget")
    mask = np.zeros((total_x, ny, nz), dtype=bool)
    for c in range(k):
        x0 = c * (nx + gap)
        mask[x0:x0 + nx] = domain.mask
    return VoxelDomain(mask, domain.h)


def fixture(name: str, h: float | None = None) -> VoxelDomain:
    """Named fixtures: 'solid-cube N', 'cavity-cube N M', 'two-cavity', 'replicated k'."""
    parts = name.replace("_", "-").split()
    if not parts:
        raise StructuralError("empty fixture name")
    key, args = parts[0], [int(a) for a in parts[1:]]
    if key == "solid-cube" and len(args) == 1:
        return solid_cube(args[0], h)
    if key == "cavity-cube" and len(args) == 2:
        return cavity_cube(args[0], args[1], h)
    if key == "two-cavity" and not args:
        return two_cavity(h)
    if key == "replicated" and len(args) == 1:
        return replicate_domain(cavity_cube(9, 3, h), args[0], gap=1)
    raise StructuralError(f"unknown fixture {name!r}")


# -- incidence assembly -----------------------------------------------------

def _diff(n: int) -> sp.csr_matrix:
    """1-D incidence from n+1 nodes to n edges."""
    return sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr", dtype=np.int64)


def _eye(n: int) -> sp.csr_matrix:
    return sp.identity(n, format="csr", dtype=np.int64)


def _kron3(kx, ky, kz) -> sp.csr_matrix:
    # Fortran ravel (x fastest) of an (a, b, c) array pairs with kron(kz, ky, kx).
    return sp.kron(kz, sp.kron(ky, kx, format="csr"), format="csr")


def _window_all(padded: np.ndarray, node_axes) -> np.ndarray:
    """AND of occupancy over the voxels incident to each cell.

    ``node_axes[a]`` is True when the cell sits on grid nodes along axis a (two
    incident voxel layers) and False when it spans a voxel (one layer).
    """
    out = padded
    for ax, is_node in enumerate(node_axes):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        if is_node:
            lo[ax], hi[ax] = slice(0, -1), slice(1, None)
            out = out[tuple(lo)] & out[tuple(hi)]
        else:
            lo[ax] = slice(1, -1)
            out = out[tuple(lo)]
    return out


def _full_operators(shape):
    nx, ny, nz = shape
    dx, dy, dz = _diff(nx), _diff(ny), _diff(nz)
    ix, iy, iz = _eye(nx + 1), _eye(ny + 1), _eye(nz + 1)
    cx, cy, cz = _eye(nx), _eye(ny), _eye(nz)
    grad = sp.vstack([
        _kron3(dx, iy, iz),
        _kron3(ix, dy, iz),
        _kron3(ix, iy, dz),
    ], format="csr")
    # edge blocks: Ex on (nx, ny+1, nz+1), Ey on (nx+1, ny, nz+1), Ez on (nx+1, ny+1, nz)
    n_ex = nx * (ny + 1) * (nz + 1)
    n_ey = (nx + 1) * ny * (nz + 1)
    n_ez = (nx + 1) * (ny + 1) * nz
    z_x = lambda r: sp.csr_matrix((r, n_ex), dtype=np.int64)  # noqa: E731
    z_y = lambda r: sp.csr_matrix((r, n_ey), dtype=np.int64)  # noqa: E731
    z_z = lambda r: sp.csr_matrix((r, n_ez), dtype=np.int64)  # noqa: E731
    # faces: Fx on (nx+1, ny, nz) = dy Ez - dz Ey
    fx_dyEz = _kron3(ix, dy, cz)
    fx_dzEy = _kron3(ix, cy, dz)
    # Fy on (nx, ny+1, nz) = dz Ex - dx Ez
    fy_dzEx = _kron3(cx, iy, dz)
    fy_dxEz = _kron3(dx, iy, cz)
    # Fz on (nx, ny, nz+1) = dx Ey - dy Ex
    fz_dxEy = _kron3(dx, cy, iz)
    fz_dyEx = _kron3(cx, dy, iz)
    n_fx, n_fy, n_fz = fx_dyEz.shape[0], fy_dzEx.shape[0], fz_dxEy.shape[0]
    curl = sp.bmat([
        [z_x(n_fx).tocsr(), -fx_dzEy, fx_dyEz],
        [fy_dzEx, z_y(n_fy).tocsr(), -fy_dxEz],
        [-fz_dyEx, fz_dxEy, z_z(n_fz).tocsr()],
    ], format="csr")
    div = sp.hstack([
        _kron3(dx, cy, cz),
        _kron3(cx, dy, cz),
        _kron3(cx, cy, dz),
    ], format="csr")
    return grad, curl, div


@dataclass(frozen=True, eq=False)
class GridComplex:
    """Interior-cell cochain complex X0 -G-> H -Ccirc-> X1 -D-> X3."""

    domain: VoxelDomain
    X0: HilbertSpace
    H: HilbertSpace
    X1: HilbertSpace
    X3: HilbertSpace
    G: LinearMap
    Ccirc: LinearMap
    D: LinearMap
    G_int: sp.csr_matrix
    C_int: sp.csr_matrix
    node_ids: np.ndarray
    edge_ids: tuple
    face_ids: tuple
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    @property
    def h(self) -> float:
        return self.domain.h

    @property
    def div(self) -> LinearMap:
        return self._cached("div", lambda: adjoint(self.G))

    @property
    def curl(self) -> LinearMap:
        return self._cached("curl", lambda: adjoint(self.Ccirc))

    def _cached(self, key, build):
        with self._lock:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]

    # -- geometry -------------------------------------------------------
    def edge_directions(self) -> np.ndarray:
        return np.concatenate([np.full(len(ids), d) for d, ids in enumerate(self.edge_ids)])

    def edge_midpoints(self) -> np.ndarray:
        """Physical midpoints of the interior edges, shape (n_edges, 3)."""
        nx, ny, nz = self.domain.shape
        shapes = [(nx, ny + 1, nz + 1), (nx + 1, ny, nz + 1), (nx + 1, ny + 1, nz)]
        pts = []
        for d, ids in enumerate(self.edge_ids):
            ijk = np.column_stack(np.unravel_index(ids, shapes[d], order="F")).astype(float)
            ijk[:, d] += 0.5
            pts.append(ijk * self.h)
        return np.vstack(pts)

    def edge_voxels(self) -> np.ndarray:
        """Linear (x-fastest) indices of the four voxels around each interior edge."""
        nx, ny, nz = self.domain.shape
        shapes = [(nx, ny + 1, nz + 1), (nx + 1, ny, nz + 1), (nx + 1, ny + 1, nz)]
        out = []
        for d, ids in enumerate(self.edge_ids):
            ijk = np.column_stack(np.unravel_index(ids, shapes[d], order="F"))
            others = [a for a in range(3) if a != d]
            cols = []
            for s0 in (-1, 0):
                for s1 in (-1, 0):
                    v = ijk.copy()
                    v[:, others[0]] += s0
                    v[:, others[1]] += s1
                    cols.append(np.ravel_multi_index(v.T, (nx, ny, nz), order="F"))
            out.append(np.column_stack(cols))
        return np.vstack(out) if out else np.zeros((0, 4), dtype=int)

    def voxel_ids(self) -> np.ndarray:
        return np.flatnonzero(self.domain.mask.ravel(order="F"))

    def counts(self) -> dict:
        return {"nodes": self.X0.dim, "edges": self.H.dim, "faces": self.X1.dim, "cells": self.X3.dim}

    # -- topology -------------------------------------------------------
    def cavity_count(self) -> int:
        return self.domain.cavity_count()

    def handle_count(self) -> int:
        """dim ker of the face Hodge Laplacian (first Betti number of the domain)."""
        n0, n1, n2, n3 = self.X0.dim, self.H.dim, self.X1.dim, self.X3.dim
        return n2 - n1 + n0 + self.cavity_count() - n3 + self.domain.component_count()

    # -- epsilon-independent solvers ------------------------------------
    def node_laplacian(self) -> sp.csc_matrix:
        """div G = G^T G (uniform masses)."""
        return self._cached("L0", lambda: (self.G.matrix.T @ self.G.matrix).tocsc())

    def solve_node_laplacian(self, b):
        lu = self._cached("L0_lu", lambda: spla.splu(self.node_laplacian()))
        return lu.solve(np.asarray(b, dtype=float)) if not np.iscomplexobj(b) else \
            lu.solve(np.real(b)) + 1j * lu.solve(np.imag(b))

    def face_laplacian(self) -> sp.csc_matrix:
        """Ccirc curl + div_f^* div_f on faces (uniform masses)."""
        def build():
            c, d = self.Ccirc.matrix, self.D.matrix
            return (c @ c.T + d.T @ d).tocsc()
        return self._cached("L2", build)

    def solve_face_laplacian(self, b):
        """Solve L2 x = b for b orthogonal to ker(L2); x is taken orthogonal to ker(L2)."""
        if np.iscomplexobj(b):
            return self.solve_face_laplacian(np.real(b)) + 1j * self.solve_face_laplacian(np.imag(b))
        b = np.asarray(b, dtype=float)
        handles = self._cached("handles", self.handle_count)
        lap = self.face_laplacian()
        if handles == 0:
            lu = self._cached("L2_lu", lambda: spla.splu(lap))
            return lu.solve(b)
        # Singular Laplacian: shifted factorization plus iterative refinement,
        # which converges on ran(L2) and leaves the kernel component at O(shift).
        shift = 1e-9 * float(lap.diagonal().max())
        lu = self._cached("L2s_lu", lambda: spla.splu((lap + shift * sp.identity(lap.shape[0])).tocsc()))
        x = lu.solve(b)
        for _ in range(6):
            x = x + lu.solve(b - lap @ x)
        return x

    def hodge_curl_part(self, e):
        """Component of e in ran(curl): curl L2^-1 Ccirc e."""
        ce = self.Ccirc.matrix @ e
        return self.curl.matrix @ self.solve_face_laplacian(ce)

    def hodge_grad_part(self, e):
        """Component of e in ran(G): G (div G)^-1 div e."""
        return self.G.matrix @ self.solve_node_laplacian(self.div.matrix @ e)

    def project_dirichlet_harmonic(self, e):
        return e - self.hodge_grad_part(e) - self.hodge_curl_part(e)


def build_complex(domain: VoxelDomain) -> GridComplex:
    shape = domain.shape
    padded = np.pad(domain.mask, 1, constant_values=False)
    node_mask = _window_all(padded, (True, True, True))
    edge_masks = [
        _window_all(padded, (False, True, True)),
        _window_all(padded, (True, False, True)),
        _window_all(padded, (True, True, False)),
    ]
    face_masks = [
        _window_all(padded, (True, False, False)),
        _window_all(padded, (False, True, False)),
        _window_all(padded, (False, False, True)),
    ]
    node_ids = np.flatnonzero(node_mask.ravel(order="F"))
    if node_ids.size == 0:
        raise DegenerateDomainError("domain has no interior node")
    edge_ids = tuple(np.flatnonzero(m.ravel(order="F")) for m in edge_masks)
    face_ids = tuple(np.flatnonzero(m.ravel(order="F")) for m in face_masks)
    voxel_ids = np.flatnonzero(domain.mask.ravel(order="F"))

    edge_offsets = np.cumsum([0] + [m.size for m in edge_masks])
    face_offsets = np.cumsum([0] + [m.size for m in face_masks])
    edge_sel = np.concatenate([ids + edge_offsets[d] for d, ids in enumerate(edge_ids)])
    face_sel = np.concatenate([ids + face_offsets[d] for d, ids in enumerate(face_ids)])

    grad, curl, div = _full_operators(shape)
    g_int = grad[edge_sel][:, node_ids].tocsr()
    c_int = curl[face_sel][:, edge_sel].tocsr()
    d_int = div[voxel_ids][:, face_sel].tocsr()

    h = domain.h
    vol = h ** 3
    X0 = HilbertSpace.uniform(node_ids.size, vol, "X0")
    H = HilbertSpace.uniform(edge_sel.size, vol, "H")
    X1 = HilbertSpace.uniform(face_sel.size, vol, "X1")
    X3 = HilbertSpace.uniform(voxel_ids.size, vol, "X3")
    G = LinearMap(X0, H, (g_int / h).tocsr())
    Ccirc = LinearMap(H, X1, (c_int / h).tocsr())
    D = LinearMap(X1, X3, (d_int / h).tocsr())
    return GridComplex(domain, X0, H, X1, X3, G, Ccirc, D, g_int, c_int,
                       node_ids, edge_ids, face_ids)


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    """Basis of a harmonic field space: Dirichlet, eps or eps-dual."""

    complex: GridComplex
    basis: Subspace
    kind: str = "Dirichlet"
    coefficient: object = None

    @property
    def dim(self) -> int:
        return self.basis.dim


def harmonic_dirichlet(cx: GridComplex, seed: int = 12345) -> HarmonicBasis:
    """Mass-orthonormal basis of ker(div) intersected with ker(Ccirc).

    Random probes are projected with the Hodge decomposition; the number of
    probes doubles until the projected block is rank deficient, so the rank
    equals the dimension of the harmonic space.
    """
    def build():
        rng = np.random.default_rng(seed)
        n = cx.H.dim
        samples = 8
        while True:
            r = rng.standard_normal((n, samples))
            p = np.column_stack([cx.project_dirichlet_harmonic(r[:, j]) for j in range(samples)])
            u, s, _ = np.linalg.svd(p, full_matrices=False)
            thresh = 1e-8 * np.linalg.norm(r, 2)
            rank = int(np.sum(s > thresh))
            if rank < samples or samples >= n:
                break
            samples *= 2
        vecs = u[:, :rank]
        if rank:
            vecs = np.column_stack([cx.project_dirichlet_harmonic(vecs[:, j]) for j in range(rank)])
        return HarmonicBasis(cx, Subspace.span(cx.H, vecs), "Dirichlet")
    return cx._cached(("HD", seed), build)
