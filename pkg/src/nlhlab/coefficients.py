"""Local (multiplication) and nonlocal (convolution) coefficient operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft
import scipy.ndimage as ndi
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CoercivityError, StructuralError
from .derham import GridComplex
from .operator_core import LinearMap, fundamental_subspaces

COND_CAP = 1e12
DENSE_LIMIT = 2000
DIRECT_SUPPORT_LIMIT = 15 ** 3


@dataclass(frozen=True, eq=False)
class Coefficient:
    """An operator eps on the field space H of a GridComplex.

    ``operator.matrix`` is a sparse matrix, a dense array or a
    ``scipy.sparse.linalg.LinearOperator`` (matrix-free convolution).
    """

    complex: GridComplex
    operator: LinearMap
    kind: str
    params: dict = field(default_factory=dict)
    symmetric: bool = False
    alpha_bound: float | None = None

    def __post_init__(self):
        if not (self.operator.domain.same_as(self.complex.H) and self.operator.codomain.same_as(self.complex.H)):
            raise StructuralError("coefficient must act on the field space H")

    @property
    def matrix(self):
        return self.operator.matrix

    @property
    def dim(self) -> int:
        return self.complex.H.dim

    def apply(self, x):
        return self.operator.matrix @ x

    def apply_adjoint(self, x):
        mat = self.operator.matrix
        if isinstance(mat, spla.LinearOperator):
            return mat.rmatmat(x) if np.ndim(x) == 2 else mat.rmatvec(x)
        return mat.conj().T @ x

    def dense(self) -> np.ndarray:
        mat = self.operator.matrix
        if isinstance(mat, spla.LinearOperator):
            return mat.matmat(np.eye(self.dim))
        if sp.issparse(mat):
            return mat.toarray()
        return np.asarray(mat)

    def is_sparse(self) -> bool:
        return sp.issparse(self.operator.matrix)


def _linear_operator(A: LinearMap):
    mat = A.matrix
    if isinstance(mat, spla.LinearOperator):
        return mat
    return spla.aslinearoperator(mat)


def custom_coefficient(cx: GridComplex, matrix, kind: str = "custom", params=None,
                       symmetric: bool | None = None) -> Coefficient:
    if symmetric is None:
        if sp.issparse(matrix):
            symmetric = abs(matrix - matrix.T).max() == 0 if matrix.nnz else True
        elif isinstance(matrix, spla.LinearOperator):
            symmetric = False
        else:
            symmetric = bool(np.array_equal(np.asarray(matrix), np.asarray(matrix).T))
    return Coefficient(cx, LinearMap(cx.H, cx.H, matrix), kind, dict(params or {}), bool(symmetric))


def identity_coefficient(cx: GridComplex) -> Coefficient:
    return Coefficient(cx, LinearMap(cx.H, cx.H, sp.identity(cx.H.dim, format="csr")), "multiplication",
                       {"tensor": "identity"}, True, 1.0)


# -- multiplication ---------------------------------------------------------

def _tensor_field(cx: GridComplex, tensor_field) -> np.ndarray:
    t = np.asarray(tensor_field, dtype=float)
    shape = cx.domain.shape
    if t.shape == (3, 3):
        t = np.broadcast_to(t, shape + (3, 3))
    if t.shape == (3,):
        t = np.broadcast_to(np.diag(t), shape + (3, 3))
    if t.shape == shape + (3,):
        t = np.einsum("...i,ij->...ij", t, np.eye(3))
    if t.shape != shape + (3, 3):
        raise StructuralError(f"tensor field has shape {t.shape}, expected {shape + (3, 3)}")
    return t


def cell_averaging(cx: GridComplex) -> sp.csr_matrix:
    """Row-normalized edge-to-cell averaging P: H -> (occupied voxels) x 3.

    Row (voxel, d) averages the four d-directed edges of the voxel; edges
    missing from H (boundary) contribute zero.  Every row and column has
    absolute sum at most 1, hence ||P|| <= 1.
    """
    vox = cx.edge_voxels()
    dirs = cx.edge_directions()
    occupied = cx.voxel_ids()
    pos = np.full(int(np.prod(cx.domain.shape)), -1)
    pos[occupied] = np.arange(occupied.size)
    rows = (3 * pos[vox] + dirs[:, None]).ravel()
    cols = np.repeat(np.arange(cx.H.dim), 4)
    return sp.csr_matrix((np.full(rows.size, 0.25), (rows, cols)), shape=(3 * occupied.size, cx.H.dim))


def multiplication_coefficient(cx: GridComplex, tensor_field, alpha: float | None = None,
                               params: dict | None = None) -> Coefficient:
    """Edge operator of a per-voxel 3x3 tensor field.

    Diagonal fields: each edge gets the mean of its direction's component over
    the four incident voxels.  Full fields: eps_h = alpha I + P^T (eps_c - alpha I) P
    with P from :func:`cell_averaging`, so that the symmetric part stays above
    alpha.
    """
    t = _tensor_field(cx, tensor_field)
    occ = cx.domain.mask
    t_occ = t[occ]
    sym = 0.5 * (t_occ + np.swapaxes(t_occ, -1, -2))
    min_eig = float(np.linalg.eigvalsh(sym).min())
    if alpha is None:
        alpha = min_eig
    if not alpha > 0:
        raise CoercivityError("coercivity constant alpha must be positive")
    if min_eig < alpha - 1e-12 * max(1.0, abs(alpha)):
        raise CoercivityError(f"tensor symmetric part has eigenvalue {min_eig:.4g} below alpha = {alpha:.4g}")
    par = {"alpha": alpha}
    par.update(params or {})
    offdiag = t_occ.copy()
    offdiag[:, [0, 1, 2], [0, 1, 2]] = 0.0
    if not np.any(offdiag):
        # voxel-linear index with x fastest, matching GridComplex.edge_voxels
        diag = t.transpose(2, 1, 0, 3, 4).reshape(-1, 3, 3)[:, [0, 1, 2], [0, 1, 2]]
        vox = cx.edge_voxels()
        dirs = cx.edge_directions()
        vals = diag[vox, dirs[:, None]].mean(axis=1)
        mat = sp.diags(vals, format="csr")
        par["assembly"] = "diagonal"
        return Coefficient(cx, LinearMap(cx.H, cx.H, mat), "multiplication", par, True, float(vals.min()))
    P = cell_averaging(cx)
    eps_c = _block_diag3(t_occ - alpha * np.eye(3))
    mat = (alpha * sp.identity(cx.H.dim, format="csr") + P.T @ eps_c @ P).tocsr()
    par["assembly"] = "splitting"
    symmetric = bool(np.allclose(t_occ, np.swapaxes(t_occ, -1, -2), rtol=0, atol=0))
    return Coefficient(cx, LinearMap(cx.H, cx.H, mat), "multiplication", par, symmetric, alpha)


def _block_diag3(blocks: np.ndarray) -> sp.csr_matrix:
    m = blocks.shape[0]
    rows = np.repeat(np.arange(3 * m).reshape(m, 3), 3, axis=1).ravel()
    cols = np.tile(np.arange(3 * m).reshape(m, 3), (1, 3)).ravel()
    return sp.csr_matrix((blocks.reshape(-1), (rows, cols)), shape=(3 * m, 3 * m))


def random_coercive_tensor(shape, alpha: float, seed: int, spread: float = 2.0,
                           skew: float = 0.5) -> np.ndarray:
    """Random non-symmetric per-voxel tensors with symmetric part in [alpha, alpha + spread]."""
    rng = np.random.default_rng(seed)
    n = int(np.prod(shape))
    q, _ = np.linalg.qr(rng.standard_normal((n, 3, 3)))
    lam = alpha + spread * rng.random((n, 3))
    sym = np.einsum("nij,nj,nkj->nik", q, lam, q)
    a = rng.standard_normal((n, 3, 3)) * skew
    return (sym + 0.5 * (a - np.swapaxes(a, 1, 2))).reshape(tuple(shape) + (3, 3))


def random_coercive_coefficient(cx: GridComplex, alpha: float = 0.3, seed: int = 0) -> Coefficient:
    t = random_coercive_tensor(cx.domain.shape, alpha, seed)
    return multiplication_coefficient(cx, t, alpha, {"family": "random", "seed": seed})


def laminate_fraction(x0, x1, n: int, length: float, fraction: float = 0.5) -> np.ndarray:
    """Share of [x0, x1] occupied by the first phase of a period-(length/n) laminate."""
    def cum(x):
        t = np.asarray(x) * n / length
        k = np.floor(t)
        return k * fraction + np.minimum(t - k, fraction)
    return (cum(x1) - cum(x0)) * length / n / (np.asarray(x1) - np.asarray(x0))


def layered_tensor(cx: GridComplex, a_minus: float, a_plus: float, n: int,
                   fraction: float = 0.5) -> np.ndarray:
    """Per-voxel exact laminate of a(n x1): harmonic mean along x1, arithmetic across."""
    nx = cx.domain.shape[0]
    h = cx.h
    x = np.arange(nx + 1) * h
    theta = laminate_fraction(x[:-1], x[1:], n, nx * h, fraction)
    harm = 1.0 / (theta / a_minus + (1 - theta) / a_plus)
    arith = theta * a_minus + (1 - theta) * a_plus
    diag = np.zeros(cx.domain.shape + (3,))
    diag[..., 0] = harm[:, None, None]
    diag[..., 1] = arith[:, None, None]
    diag[..., 2] = arith[:, None, None]
    return diag


# -- convolution ------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    """Scalar kernel rho on R^3 with compact support of the given radius."""

    rho: Callable[[np.ndarray], np.ndarray]
    radius: float
    description: str = ""

    def samples(self, h: float, n: int = 1) -> np.ndarray:
        """Cube of rho(n * o * h) * h^3 over integer offsets o."""
        r = int(np.floor(self.radius / (n * h) + 1e-12))
        o = np.arange(-r, r + 1)
        oz, oy, ox = np.meshgrid(o, o, o, indexing="ij")
        pts = np.stack([ox, oy, oz], axis=-1).reshape(-1, 3) * (n * h)
        vals = np.asarray(self.rho(pts), dtype=float).reshape(2 * r + 1, 2 * r + 1, 2 * r + 1)
        # axis order (x, y, z) to match the Fortran-ordered edge arrays
        return np.transpose(vals, (2, 1, 0)) * h ** 3

    def ell1(self, h: float, n: int = 1) -> float:
        return float(np.abs(self.samples(h, n)).sum())


def zero_kernel() -> Kernel:
    return Kernel(lambda p: np.zeros(len(p)), 0.0, "zero")


def gaussian_kernel(h: float, ell1: float = 0.5, sigma: float | None = None,
                    cutoff: float = 2.5) -> Kernel:
    """Truncated Gaussian normalized so that h^3 sum |rho(o h)| = ell1 at n = 1."""
    sigma = 2.0 * h if sigma is None else float(sigma)
    radius = cutoff * sigma

    def shape_fn(p):
        r2 = np.sum(np.asarray(p) ** 2, axis=-1)
        return np.where(r2 <= radius ** 2 * (1 + 1e-12), np.exp(-r2 / (2 * sigma ** 2)), 0.0)

    base = Kernel(shape_fn, radius)
    scale = ell1 / base.ell1(h, 1)
    return Kernel(lambda p: scale * shape_fn(p), radius,
                  f"gaussian sigma={sigma:.6g} cutoff={cutoff} ell1={ell1}")


def table_kernel(table: dict, h: float) -> Kernel:
    """Kernel given by values at integer offsets of the base grid, nearest-offset lookup."""
    entries = {tuple(int(c) for c in k): float(v) for k, v in table.items()}
    radius = max((np.sqrt(sum(c * c for c in k)) for k in entries), default=0.0) * h

    def rho(p):
        idx = np.rint(np.asarray(p) / h).astype(int)
        exact = np.all(np.isclose(idx * h, p, atol=1e-9 * h), axis=-1)
        return np.array([entries.get(tuple(i), 0.0) if e else 0.0 for i, e in zip(idx, exact)])

    return Kernel(rho, radius, "table")


class _ConvolutionOperator(spla.LinearOperator):
    """id + K with K the componentwise lattice convolution restricted to interior edges."""

    def __init__(self, cx: GridComplex, weights: np.ndarray, method: str = "auto"):
        self.cx = cx
        self.weights = weights
        self.flipped = weights[::-1, ::-1, ::-1]
        nx, ny, nz = cx.domain.shape
        self.shapes = [(nx, ny + 1, nz + 1), (nx + 1, ny, nz + 1), (nx + 1, ny + 1, nz)]
        self.offsets = np.cumsum([0] + [len(ids) for ids in cx.edge_ids])
        self.r = (weights.shape[0] - 1) // 2
        if method == "auto":
            method = "direct" if weights.size <= DIRECT_SUPPORT_LIMIT else "fft"
        self.method = method
        self._fft_cache = {}
        self.symmetric = bool(np.allclose(weights, self.flipped, rtol=0, atol=0))
        super().__init__(dtype=np.float64, shape=(cx.H.dim, cx.H.dim))

    def _scatter(self, x, d):
        shape = self.shapes[d]
        ids = self.cx.edge_ids[d]
        seg = x[self.offsets[d]:self.offsets[d + 1]]
        batch = seg.shape[1:] if seg.ndim == 2 else ()
        arr = np.zeros((int(np.prod(shape)),) + batch, dtype=x.dtype)
        arr[ids] = seg
        return arr.reshape(shape + batch, order="F")

    def _conv_direct(self, arr, kernel):
        if arr.ndim == 3:
            return ndi.convolve(arr, kernel, mode="constant", cval=0.0)
        return np.stack([ndi.convolve(arr[..., j], kernel, mode="constant", cval=0.0)
                         for j in range(arr.shape[-1])], axis=-1)

    def _conv_fft(self, arr, kernel):
        shape = arr.shape[:3]
        full = tuple(s + kernel.shape[i] - 1 for i, s in enumerate(shape))
        fast = tuple(sfft.next_fast_len(s, real=True) for s in full)
        key = (fast, id(kernel))
        if key not in self._fft_cache:
            self._fft_cache[key] = sfft.rfftn(kernel, fast, axes=(0, 1, 2))
        kf = self._fft_cache[key]
        if arr.ndim == 4:
            kf = kf[..., None]
        out = sfft.irfftn(sfft.rfftn(arr, fast, axes=(0, 1, 2)) * kf, fast, axes=(0, 1, 2))
        r = self.r
        return out[r:r + shape[0], r:r + shape[1], r:r + shape[2]]

    def convolve(self, x, method=None, kernel=None):
        method = self.method if method is None else method
        kernel = self.weights if kernel is None else kernel
        x = np.asarray(x)
        if np.iscomplexobj(x):
            return self.convolve(x.real, method, kernel) + 1j * self.convolve(x.imag, method, kernel)
        out = np.zeros_like(x, dtype=float)
        for d in range(3):
            arr = self._scatter(x, d)
            conv = self._conv_direct(arr, kernel) if method == "direct" else self._conv_fft(arr, kernel)
            batch = x.shape[1:]
            flat = conv.reshape((-1,) + batch, order="F")
            out[self.offsets[d]:self.offsets[d + 1]] = flat[self.cx.edge_ids[d]]
        return out

    def _matvec(self, x):
        x = np.asarray(x).reshape(-1)
        return x + self.convolve(x)

    def _matmat(self, X):
        X = np.asarray(X)
        out = np.empty_like(X, dtype=np.result_type(X.dtype, float))
        step = 256
        for j in range(0, X.shape[1], step):
            blk = X[:, j:j + step]
            out[:, j:j + step] = blk + self.convolve(blk, method="fft")
        return out

    def _rmatvec(self, x):
        x = np.asarray(x).reshape(-1)
        return x + self.convolve(x, kernel=self.flipped)

    def _rmatmat(self, X):
        return X + self.convolve(np.asarray(X), method="fft", kernel=self.flipped)

    def kernel_part(self) -> spla.LinearOperator:
        """K alone, without the identity."""
        return spla.LinearOperator(self.shape, matvec=lambda x: self.convolve(np.asarray(x).reshape(-1)),
                                   rmatvec=lambda x: self.convolve(np.asarray(x).reshape(-1),
                                                                   kernel=self.flipped),
                                   dtype=np.float64)


def convolution_coefficient(cx: GridComplex, kernel: Kernel, n: int = 1,
                            limit_kernel: Kernel | None = None, method: str = "auto") -> Coefficient:
    """eps_n = id + K_n, K_n = componentwise convolution with rho(n .) h^3."""
    if n < 1:
        raise StructuralError("index n must be positive")
    weights = kernel.samples(cx.h, n)
    ell1 = float(np.abs(weights).sum())
    if ell1 >= 1.0:
        raise CoercivityError(f"discrete l1 norm {ell1:.4g} of the kernel is not below 1")
    op = _ConvolutionOperator(cx, weights, method)
    params = {"n": n, "ell1": ell1, "kernel": kernel.description, "limit_kernel": limit_kernel}
    return Coefficient(cx, LinearMap(cx.H, cx.H, op), "convolution", params, op.symmetric, 1.0 - ell1)


def convolution_limit(cx: GridComplex, limit_kernel: Kernel | None = None) -> Coefficient:
    """The limit 1 + tilde-rho *; identity when the weak-* limit kernel is zero."""
    if limit_kernel is None or limit_kernel.radius == 0:
        return identity_coefficient(cx)
    return convolution_coefficient(cx, limit_kernel, 1)


def operator_norm(eps: Coefficient, tol: float = 1e-10) -> float:
    """Spectral norm of eps (weighted norm equals Euclidean norm for uniform masses)."""
    if eps.dim <= DENSE_LIMIT:
        return float(np.linalg.norm(eps.dense(), 2))
    A = _linear_operator(eps.operator)
    try:
        s = spla.svds(A, k=1, which="LM", tol=tol, return_singular_vectors=False, random_state=0)
    except spla.ArpackError:
        return power_norm(A, eps.dim, 2000)
    return float(s[0])


def kernel_norm(eps: Coefficient, iters: int = 500) -> float:
    """Spectral norm of K_n for a convolution coefficient eps = id + K_n."""
    if eps.kind != "convolution":
        raise StructuralError("kernel_norm needs a convolution coefficient")
    return power_norm(eps.operator.matrix.kernel_part(), eps.dim, iters)


def power_norm(op, dim: int, iters: int = 200, seed: int = 0) -> float:
    """Power iteration on A^T A; independent of any factorization."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(dim)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = op.rmatvec(op.matvec(x))
        lam_new = np.linalg.norm(y)
        x = y / lam_new
        if abs(lam_new - lam) <= 1e-14 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(lam))


# -- admissibility ----------------------------------------------------------

@dataclass(frozen=True)
class AdmissibilityReport:
    a1_ok: bool
    a2_ok: bool
    a3_ok: bool
    conds: tuple
    alpha: float
    beta: float
    method: str

    @property
    def admissible(self) -> bool:
        return self.a1_ok and self.a2_ok and self.a3_ok


def _sym_min_eig(eps: Coefficient) -> float:
    if eps.dim <= DENSE_LIMIT:
        a = eps.dense()
        return float(np.linalg.eigvalsh(0.5 * (a + a.conj().T)).min())
    A = _linear_operator(eps.operator)
    S = spla.LinearOperator(A.shape, matvec=lambda x: 0.5 * (A.matvec(x) + A.rmatvec(x)), dtype=float)
    try:
        vals = spla.eigsh(S, k=1, which="SA", tol=1e-10, return_eigenvectors=False, maxiter=20000,
                          v0=np.ones(A.shape[0]))
        return float(vals[0])
    except spla.ArpackError:
        # Krylov breakdown when the spectrum has very few distinct values.
        X = np.random.default_rng(0).standard_normal((A.shape[0], 4))
        vals = spla.lobpcg(S, X, largest=False, tol=1e-10, maxiter=2000)[0]
        return float(np.min(vals))


def _cond(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 1.0
    with np.errstate(all="ignore"):
        c = np.linalg.cond(mat)
    return float(c) if np.isfinite(c) else float("inf")


def admissibility_check(eps: Coefficient, tol: float = COND_CAP) -> AdmissibilityReport:
    """Invertibility of eps, of its compression to ran(G) and of the compression of eps^-1 to ran(curl).

    Small problems use dense condition numbers with explicit orthonormal bases.
    Large problems rely on the coercivity bound Re eps >= alpha > 0, which gives
    cond(eps) <= |eps| / alpha, the same bound for the compression to ran(G)
    and |eps|^2 / alpha^2 for the compression of eps^-1.
    """
    cx = eps.complex
    alpha = _sym_min_eig(eps)
    if eps.dim <= DENSE_LIMIT:
        a = eps.dense()
        c1 = _cond(a)
        ok1 = c1 < tol
        _, ran_g = fundamental_subspaces(cx.G)
        q = ran_g.basis
        c2 = _cond(q.T @ (cx.H.mass[:, None] * (a @ q)))
        _, ran_curl = fundamental_subspaces(cx.curl)
        k = ran_curl.basis
        if ok1:
            a_inv = np.linalg.inv(a)
            c3 = _cond(k.T @ (cx.H.mass[:, None] * (a_inv @ k)))
            s_inv = 0.5 * (a_inv + a_inv.conj().T)
            inv_min = float(np.linalg.eigvalsh(s_inv).min())
        else:
            c3, inv_min = float("inf"), float("nan")
        beta = 1.0 / inv_min if inv_min > 0 else float("inf")
        return AdmissibilityReport(ok1, c2 < tol, c3 < tol, (c1, c2, c3), alpha, beta, "dense")
    if alpha > 0:
        norm = operator_norm(eps)
        c1 = norm / alpha
        c3 = (norm / alpha) ** 2
        if eps.symmetric:
            inv_min = 1.0 / norm
        else:
            inv_min = alpha / norm ** 2  # lower bound for Re eps^-1
        return AdmissibilityReport(c1 < tol, c1 < tol, c3 < tol, (c1, c1, c3), alpha, 1.0 / inv_min,
                                   "coercivity-bound")
    # Indefinite and large: estimate with a sparse LU where possible.
    if not eps.is_sparse():
        raise StructuralError("indefinite matrix-free coefficients are only checked at dense scale")
    mat = eps.matrix.tocsc()
    try:
        lu = spla.splu(mat)
    except RuntimeError:
        return AdmissibilityReport(False, False, False, (float("inf"),) * 3, alpha, float("inf"), "sparse-lu")
    inv_op = spla.LinearOperator(mat.shape, matvec=lu.solve, rmatvec=lambda y: lu.solve(y, trans="T"))
    c1 = spla.onenormest(mat) * spla.onenormest(inv_op)
    g = cx.G.matrix
    comp = (g.T @ mat @ g).tocsc()
    try:
        lu2 = spla.splu(comp)
        inv2 = spla.LinearOperator(comp.shape, matvec=lu2.solve, rmatvec=lambda y: lu2.solve(y, trans="T"))
        c2 = spla.onenormest(comp) * spla.onenormest(inv2)
    except RuntimeError:
        c2 = float("inf")
    return AdmissibilityReport(c1 < tol, c2 < tol, c2 < tol, (c1, c2, c2), alpha, float("nan"), "sparse-lu")


def engineered_rotation(cx: GridComplex, seed: int = 0) -> Coefficient:
    """id with a quarter turn in the plane spanned by a unit z in ran(G) and a unit w in ran(curl).

    eps z = w and eps w = -z, so eps is invertible while the compression of eps
    to ran(G) and of eps^-1 to ran(curl) are both singular.
    """
    rng = np.random.default_rng(seed)
    z = cx.G.matrix @ rng.standard_normal(cx.X0.dim)
    w = cx.curl.matrix @ rng.standard_normal(cx.X1.dim)
    w = w - cx.hodge_grad_part(w)
    z /= cx.H.norm(z)
    w /= cx.H.norm(w)
    m = cx.H.mass
    zt, wt = z * m, w * m
    a = np.eye(cx.H.dim) - np.outer(z, zt) - np.outer(w, wt) + np.outer(w, zt) - np.outer(z, wt)
    return custom_coefficient(cx, a, "custom", {"construction": "rotation"}, symmetric=False)


def compressions_dense(eps: Coefficient):
    """Dense compressions of eps to ran(G) and of eps^-1 to ran(curl) (test oracle)."""
    cx = eps.complex
    a = eps.dense()
    _, ran_g = fundamental_subspaces(cx.G)
    _, ran_curl = fundamental_subspaces(cx.curl)
    q, k = ran_g.basis, ran_curl.basis
    m = cx.H.mass[:, None]
    return q.T @ (m * (a @ q)), k.T @ (m * (np.linalg.solve(a, k)))


__all__ = [
    "Coefficient", "AdmissibilityReport", "Kernel", "identity_coefficient", "custom_coefficient",
    "multiplication_coefficient", "convolution_coefficient", "convolution_limit", "gaussian_kernel",
    "table_kernel", "zero_kernel", "layered_tensor", "laminate_fraction", "random_coercive_tensor",
    "random_coercive_coefficient", "admissibility_check", "engineered_rotation", "cell_averaging",
    "operator_norm", "power_norm", "kernel_norm", "compressions_dense",
]
