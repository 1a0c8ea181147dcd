"""Generalised Helmholtz decompositions and the two electrostatics solvers.

All field-space masses are uniform (``h^3``), so weighted adjoints reduce to
transposes and the mass factor cancels from every projection formula below.

The curl-side problem ``Ccirc eps^-1 curl v = g`` is solved without ever
forming ``eps^-1`` (which is dense for convolution coefficients):

1. ``w_g = curl L2^-1 g`` is the minimal-norm field with ``Ccirc w_g = g``,
   where ``L2`` is the face Hodge Laplacian of the complex.
2. The solution field ``w = eps^-1 curl v`` is ``w_g + J c`` with
   ``J = [G, X_D]`` spanning ``ker(Ccirc)``, fixed by ``eps w`` being
   orthogonal to ``ker(Ccirc)``: ``(J^T eps J) c = -J^T eps w_g``.  That
   compression is invertible exactly when (a2) and (a3) hold.
3. ``v = L2^-1 Ccirc (eps w)`` then satisfies ``curl v = eps w``.
"""

from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .block_schur import COND_CAP
from .coefficients import Coefficient
from .derham import GridComplex, HarmonicBasis, harmonic_dirichlet
from .errors import AdmissibilityError, DataError, SolveError, StructuralError

RESIDUAL_TOL = 1e-10
RANGE_TOL = 1e-10
_CHUNK = 256


def _norm(x) -> float:
    return float(np.linalg.norm(x))


def _rel(res, ref) -> float:
    r = _norm(res)
    s = _norm(ref)
    return r / s if s > 0 else r


class _Factor:
    """LU factorization of a sparse or dense square matrix with cond screening."""

    def __init__(self, mat, what: str):
        self.what = what
        self.shape = mat.shape
        if mat.shape[0] == 0:
            self.kind = "empty"
            return
        if sp.issparse(mat):
            self.kind = "sparse"
            self.mat = mat.tocsc()
            try:
                self.lu = spla.splu(self.mat)
            except RuntimeError as exc:
                raise AdmissibilityError(f"{what} is singular") from exc
            cond = self._cond_estimate()
        else:
            self.kind = "dense"
            self.mat = np.asarray(mat)
            self.lu = sla.lu_factor(self.mat, check_finite=True)
            cond = float(np.linalg.cond(self.mat)) if self.mat.shape[0] <= 3000 else self._cond_estimate()
        self.cond = cond
        if not cond < COND_CAP:
            raise AdmissibilityError(f"{what} is not invertible (condition estimate {cond:.3e})")

    def _cond_estimate(self) -> float:
        n = self.shape[0]
        inv = spla.LinearOperator(self.shape, matvec=self.solve, rmatvec=lambda y: self.solve(y, trans="T"),
                                  dtype=float)
        fwd = spla.aslinearoperator(self.mat)
        with np.errstate(all="ignore"):
            est = spla.onenormest(fwd) * spla.onenormest(inv) if n > 4 else \
                np.linalg.cond(self.mat.toarray() if sp.issparse(self.mat) else self.mat, 1)
        return float(est) if np.isfinite(est) else float("inf")

    def solve(self, b, trans: str = "N"):
        b = np.asarray(b)
        if self.kind == "empty":
            return np.zeros_like(b, dtype=float)
        if np.iscomplexobj(b):
            return self.solve(b.real, trans) + 1j * self.solve(b.imag, trans)
        if self.kind == "sparse":
            return self.lu.solve(np.asarray(b, dtype=float), trans=trans)
        return sla.lu_solve(self.lu, b, trans=0 if trans == "N" else 1)


class EpsSolver:
    """Factorizations attached to a (complex, eps) pair."""

    def __init__(self, eps: Coefficient, harmonic: HarmonicBasis | None = None):
        self.eps = eps
        self.cx: GridComplex = eps.complex
        mass = self.cx.H.mass
        if mass.size and not np.all(mass == mass[0]):
            raise StructuralError("solver assumes uniform field-space masses")
        self.G = self.cx.G.matrix
        self.C = self.cx.Ccirc.matrix
        self.harmonic = harmonic_dirichlet(self.cx) if harmonic is None else harmonic
        self.XD = self.harmonic.basis.basis
        self._lock = threading.RLock()
        self._grad = None
        self._border = None
        self._eps_inv = None

    # -- eps application ------------------------------------------------
    def eps_apply(self, x):
        return self.eps.apply(x)

    def eps_apply_T(self, x):
        return self.eps.apply_adjoint(x)

    def eps_inverse(self, y):
        """eps^-1 y (used only for the eps-dual projection and residual checks)."""
        with self._lock:
            if self._eps_inv is None:
                mat = self.eps.matrix
                if isinstance(mat, spla.LinearOperator):
                    self._eps_inv = "iterative"
                else:
                    self._eps_inv = _Factor(mat if sp.issparse(mat) else np.asarray(mat), "eps")
        if self._eps_inv == "iterative":
            y = np.asarray(y)
            if y.ndim == 2:
                return np.column_stack([self.eps_inverse(y[:, j]) for j in range(y.shape[1])])
            if np.iscomplexobj(y):
                return self.eps_inverse(y.real) + 1j * self.eps_inverse(y.imag)
            solver = spla.cg if self.eps.symmetric else spla.gmres
            x, info = solver(self.eps.matrix, y, rtol=1e-15, atol=0.0, maxiter=5000)
            if info != 0:
                x2, info = spla.gmres(self.eps.matrix, y, x0=x, rtol=1e-15, atol=1e-300, maxiter=5000)
                x = x2
            return x
        return self._eps_inv.solve(y)

    # -- grad side ------------------------------------------------------
    def _grad_matrix(self):
        mat = self.eps.matrix
        if sp.issparse(mat):
            return (self.G.T @ mat @ self.G).tocsc()
        n0 = self.G.shape[1]
        out = np.empty((n0, n0))
        for j in range(0, n0, _CHUNK):
            cols = self.G[:, j:j + _CHUNK].toarray()
            out[:, j:j + _CHUNK] = self.G.T @ self.eps_apply(cols)
        return out

    @property
    def grad_factor(self) -> _Factor:
        with self._lock:
            if self._grad is None:
                self._grad = _Factor(self._grad_matrix(), "compression of eps to ran(grad) (a2)")
            return self._grad

    def solve_grad(self, f):
        """u with div eps G u = f."""
        return self.grad_factor.solve(f)

    # -- bordered compression on ker(Ccirc) = ran(G) + H_D ----------------
    @property
    def border(self):
        with self._lock:
            if self._border is None:
                XD = self.XD
                k = XD.shape[1]
                if k == 0:
                    self._border = (np.zeros((self.G.shape[1], 0)), np.zeros((0, self.G.shape[1])),
                                    np.zeros((0, 0)), None, np.zeros((self.G.shape[1], 0)), 1.0)
                    return self._border
                eXD = self.eps_apply(XD)
                B = self.G.T @ eXD                          # G^T eps X_D
                Cb = self.G.T @ self.eps_apply_T(XD)        # (X_D^T eps G)^T
                Cb = Cb.T
                Dm = XD.T @ eXD
                AinvB = self.grad_factor.solve(B)
                S = Dm - Cb @ AinvB
                cond = float(np.linalg.cond(S))
                if not cond < COND_CAP:
                    raise AdmissibilityError(
                        f"compression of eps to ker(curl) is singular (condition {cond:.3e}); (a3) fails")
                self._border = (B, Cb, S, sla.lu_factor(S), AinvB, cond)
            return self._border

    def solve_kernel_compression(self, r0, r1):
        """Solve [[G^T eps G, G^T eps X_D], [X_D^T eps G, X_D^T eps X_D]] [y0; y1] = [r0; r1]."""
        B, Cb, S, S_lu, AinvB, _ = self.border
        a_r0 = self.grad_factor.solve(r0)
        if S_lu is None:
            return a_r0, np.zeros((0,) + np.shape(r0)[1:])
        y1 = sla.lu_solve(S_lu, r1 - Cb @ a_r0)
        y0 = a_r0 - AinvB @ y1
        return y0, y1

    def check_curl_data(self, g):
        """Minimal-norm preimage w_g and a range check of g."""
        w_g = self.cx.curl.matrix @ self.cx.solve_face_laplacian(g)
        res = _rel(self.C @ w_g - g, g)
        if res > RANGE_TOL:
            raise DataError(f"g is not in ran(Ccirc) (relative defect {res:.2e})")
        return w_g

    def solve_curl(self, g, in_range: bool = False):
        """(v, w) with Ccirc w = g and eps w = curl v; w = eps^-1 curl v.

        ``in_range`` skips the range check for data of the form Ccirc E, whose
        relative defect is rounding noise when E is nearly curl-free.
        """
        g = np.asarray(g, dtype=float) if not np.iscomplexobj(g) else np.asarray(g)
        if _norm(g) == 0:
            z = np.zeros(self.cx.H.dim, dtype=g.dtype)
            return np.zeros_like(g), z
        if in_range:
            w_g = self.cx.curl.matrix @ self.cx.solve_face_laplacian(g)
        else:
            w_g = self.check_curl_data(g)
        e_wg = self.eps_apply(w_g)
        y0, y1 = self.solve_kernel_compression(-(self.G.T @ e_wg), -(self.XD.T @ e_wg))
        w = w_g + self.G @ y0 + self.XD @ y1
        ew = self.eps_apply(w)
        v = self.cx.solve_face_laplacian(self.C @ ew)
        return v, w

    # -- projections helpers --------------------------------------------
    def grad_projection_eps(self, y):
        """G (div eps G)^-1 div eps y."""
        return self.G @ self.solve_grad(self.G.T @ self.eps_apply(y))

    def orth_grad_projection(self, y):
        """Orthogonal projection onto ran(G)."""
        return self.G @ self.cx.solve_node_laplacian(self.G.T @ y)

    def harmonic_projection(self, y):
        y = np.asarray(y)
        m = self.cx.H.mass if y.ndim == 1 else self.cx.H.mass[:, None]
        return self.XD @ (self.XD.T @ (m * y)) if self.XD.shape[1] else np.zeros_like(y)


_SOLVERS: "weakref.WeakKeyDictionary[Coefficient, EpsSolver]" = weakref.WeakKeyDictionary()
_SOLVERS_LOCK = threading.Lock()


def solver_for(eps: Coefficient) -> EpsSolver:
    """Cached EpsSolver for the given coefficient object."""
    with _SOLVERS_LOCK:
        s = _SOLVERS.get(eps)
        if s is None:
            s = EpsSolver(eps)
            _SOLVERS[eps] = s
        return s


# -- reduced solves -----------------------------------------------------------

def reduced_solve_grad(eps: Coefficient, f) -> np.ndarray:
    s = solver_for(eps)
    f = np.asarray(f)
    if f.shape != (eps.complex.X0.dim,):
        raise StructuralError("f must be a vector on X0")
    u = s.solve_grad(f)
    res = _rel(s.G.T @ s.eps_apply(s.G @ u) - f, f)
    if res > RESIDUAL_TOL:
        raise SolveError(f"grad solve residual {res:.2e} above tolerance")
    return u


def reduced_solve_curl(eps: Coefficient, g) -> np.ndarray:
    """v in ran(Ccirc) with Ccirc eps^-1 curl v = g."""
    return reduced_solve_curl_full(eps, g)[0]


def reduced_solve_curl_full(eps: Coefficient, g):
    """(v, w, residuals) where w = eps^-1 curl v."""
    s = solver_for(eps)
    g = np.asarray(g)
    if g.shape != (eps.complex.X1.dim,):
        raise StructuralError("g must be a vector on X1")
    v, w = s.solve_curl(g)
    res_eq = _rel(s.C @ w - g, g)
    res_flux = _rel(s.cx.curl.matrix @ v - s.eps_apply(w), s.eps_apply(w))
    if max(res_eq, res_flux) > RESIDUAL_TOL:
        raise SolveError(f"curl solve residuals {res_eq:.2e}, {res_flux:.2e} above tolerance")
    return v, w, {"curl_eq": res_eq, "flux": res_flux}


# -- decompositions -------------------------------------------------------------

@dataclass(frozen=True)
class Decomposition:
    """E = G u + eps^-1 curl F + x_eps with w = eps^-1 curl F stored explicitly."""

    u: np.ndarray
    F: np.ndarray
    w: np.ndarray
    x_eps: np.ndarray
    grad_part: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.grad_part + self.w + self.x_eps


def helmholtz_decompose(E, eps: Coefficient) -> Decomposition:
    s = solver_for(eps)
    E = np.asarray(E)
    u = s.solve_grad(s.G.T @ s.eps_apply(E))
    F, w = s.solve_curl(s.C @ E, in_range=True)
    gu = s.G @ u
    x = E - gu - w
    return Decomposition(u, F, w, x, gu)


@dataclass(frozen=True)
class DualDecomposition:
    """H = eps G u + curl F + q with q in the eps-dual harmonic space."""

    u: np.ndarray
    F: np.ndarray
    q: np.ndarray


def dual_decompose(Hf, eps: Coefficient) -> DualDecomposition:
    s = solver_for(eps)
    d = helmholtz_decompose(s.eps_inverse(np.asarray(Hf)), eps)
    return DualDecomposition(d.u, d.F, np.asarray(Hf) - s.eps_apply(d.grad_part) - s.cx.curl.matrix @ d.F)


def project_harmonic(E, eps: Coefficient | None, which: str = "eps", complex: GridComplex | None = None):
    """pi_D (orthogonal), pi_eps or the eps-dual projection."""
    if which == "Dirichlet":
        cx = complex if eps is None else eps.complex
        if cx is None:
            raise StructuralError("a complex is needed for the Dirichlet projection")
        basis = harmonic_dirichlet(cx).basis.basis
        E = np.asarray(E)
        m = cx.H.mass if E.ndim == 1 else cx.H.mass[:, None]
        return basis @ (basis.T @ (m * E)) if basis.shape[1] else np.zeros_like(E)
    if eps is None:
        raise StructuralError("eps is required for the eps and eps-dual projections")
    if which == "eps":
        return helmholtz_decompose(E, eps).x_eps
    if which == "eps-dual":
        return dual_decompose(E, eps).q
    raise StructuralError(f"unknown projection {which!r}")


def eps_harmonic_from_dirichlet(x, eps: Coefficient) -> np.ndarray:
    """x_eps = (1 - G (div eps G)^-1 div eps) x for x in H_D."""
    s = solver_for(eps)
    return np.asarray(x) - s.grad_projection_eps(x)


# -- electrostatics ---------------------------------------------------------------

@dataclass(frozen=True)
class ElectrostaticData:
    f: np.ndarray
    g: np.ndarray
    x: np.ndarray
    formulation: str = "P"

    def __post_init__(self):
        if self.formulation not in ("P", "P-dual", "piD-normalized"):
            raise DataError(f"unknown formulation {self.formulation!r}")


@dataclass(frozen=True)
class SolveResult:
    field: np.ndarray
    potential_part: np.ndarray
    curl_part: np.ndarray
    harmonic_part: np.ndarray
    curl_field: np.ndarray
    residuals: dict = field(default_factory=dict)
    formulation: str = "P"


def _check_data(eps: Coefficient, data: ElectrostaticData):
    cx = eps.complex
    if np.shape(data.f) != (cx.X0.dim,) or np.shape(data.g) != (cx.X1.dim,) or np.shape(data.x) != (cx.H.dim,):
        raise DataError("data vectors do not match the complex dimensions")


def solve_electrostatics(eps: Coefficient, data: ElectrostaticData, check: bool = True) -> SolveResult:
    """Solve P_eps (E), P^eps (H = eps E) or the pi_D-normalized problem."""
    _check_data(eps, data)
    s = solver_for(eps)
    f = np.asarray(data.f)
    g = np.asarray(data.g)
    x = np.asarray(data.x)
    u = s.solve_grad(f)
    v, w = s.solve_curl(g)
    gu = s.G @ u
    res = {}
    if data.formulation in ("P", "piD-normalized"):
        if data.formulation == "piD-normalized":
            if check:
                xd = project_harmonic(x, eps, "Dirichlet")
                res["data_harm"] = _rel(x - xd, x)
                if res["data_harm"] > 1e-9:
                    raise DataError("x is not a harmonic Dirichlet field")
            x_eps = eps_harmonic_from_dirichlet(x, eps)
        else:
            x_eps = x
        E = gu + w + x_eps
        if check:
            eE = s.eps_apply(E)
            res["div"] = _rel(s.G.T @ eE - f, f) if _norm(f) else _norm(s.G.T @ eE) / max(_norm(eE), 1e-300)
            res["curl"] = _rel(s.C @ E - g, g) if _norm(g) else _norm(s.C @ E) / max(_norm(E), 1e-300)
            pe = helmholtz_decompose(E, eps).x_eps
            if data.formulation == "P":
                res["harm"] = _rel(pe - x, x) if _norm(x) else _norm(pe) / max(_norm(E), 1e-300)
            else:
                pd = project_harmonic(pe, eps, "Dirichlet")
                res["harm"] = _rel(pd - x, x) if _norm(x) else _norm(pd) / max(_norm(E), 1e-300)
        return SolveResult(E, u, v, x_eps, w, res, data.formulation)
    # P-dual: H = eps G u + curl v + x^eps
    curl_v = s.cx.curl.matrix @ v
    Hf = s.eps_apply(gu) + curl_v + x
    if check:
        res["div"] = _rel(s.G.T @ Hf - f, f) if _norm(f) else _norm(s.G.T @ Hf) / max(_norm(Hf), 1e-300)
        einv = s.eps_inverse(Hf)
        res["curl"] = _rel(s.C @ einv - g, g) if _norm(g) else _norm(s.C @ einv) / max(_norm(einv), 1e-300)
        q = dual_decompose(Hf, eps).q
        res["harm"] = _rel(q - x, x) if _norm(x) else _norm(q) / max(_norm(Hf), 1e-300)
    return SolveResult(Hf, u, v, x, curl_v, res, "P-dual")


# -- dual norms --------------------------------------------------------------------

def hminus_norm(cx: GridComplex, f) -> float:
    """sqrt(<f, (div G)^-1 f>) on X0."""
    f = np.asarray(f)
    if not f.any():
        return 0.0
    val = cx.X0.inner(f, cx.solve_node_laplacian(f))
    return float(np.sqrt(max(np.real(val), 0.0)))


def hminus_curl_norm(cx: GridComplex, g) -> float:
    """Norm of the minimal-norm field w with Ccirc w = g (dual norm on ran(Ccirc))."""
    g = np.asarray(g)
    if not g.any():
        return 0.0
    return cx.H.norm(cx.curl.matrix @ cx.solve_face_laplacian(g))


# -- Schur maps on the field space -------------------------------------------------

SPLITS = ("grad", "curl")


class FieldSchurMaps:
    """The four Schur maps of eps lifted to the field space.

    ``split='grad'``: H0 = ran(G), H1 = ker(div).
    ``split='curl'``: H0 = ker(Ccirc) = ran(G) + H_D, H1 = ran(curl).
    With J spanning H0, P0 = J (J^T J)^-1 J^T and P1 = 1 - P0 the maps are
    J (J^T eps J)^-1 J^T, J (J^T eps J)^-1 J^T eps P1, P1 eps J (J^T eps J)^-1 J^T
    and P1 eps P1 - P1 eps J (J^T eps J)^-1 J^T eps P1.
    """

    def __init__(self, eps: Coefficient, split: str = "grad"):
        if split not in SPLITS:
            raise StructuralError(f"unknown split {split!r}")
        self.eps = eps
        self.solver = solver_for(eps)
        self.split_kind = split
        self.split = (id(eps.complex), split)
        self.with_harmonic = split == "curl" and self.solver.XD.shape[1] > 0

    def _JT(self, y):
        s = self.solver
        a = s.G.T @ y
        b = s.XD.T @ y if self.with_harmonic else None
        return a, b

    def _J(self, a, b):
        s = self.solver
        out = s.G @ a
        if self.with_harmonic:
            out = out + s.XD @ b
        return out

    def _solve_compression(self, a, b):
        s = self.solver
        if self.with_harmonic:
            return s.solve_kernel_compression(a, b)
        return s.solve_grad(a), None

    def P0(self, y):
        s = self.solver
        out = s.orth_grad_projection(y)
        if self.with_harmonic:
            out = out + s.harmonic_projection(y)
        return out

    def P1(self, y):
        return y - self.P0(y)

    def inv00(self, y):
        return self._J(*self._solve_compression(*self._JT(y)))

    def m01(self, y):
        return self.inv00(self.solver.eps_apply(self.P1(y)))

    def m10(self, y):
        return self.P1(self.solver.eps_apply(self.inv00(y)))

    def schur(self, y):
        p1y = self.P1(y)
        e = self.solver.eps_apply(p1y)
        return self.P1(e - self.solver.eps_apply(self.inv00(e)))

    def apply_all(self, y):
        return self.inv00(y), self.m01(y), self.m10(y), self.schur(y)

    def pairings(self, family) -> np.ndarray:
        T = family.vectors
        m = self.eps.complex.H.mass
        TM = (T * m[:, None]).conj().T
        images = self.apply_all(T)
        return np.stack([TM @ im for im in images])


def field_schur_maps(eps: Coefficient, split: str = "grad") -> FieldSchurMaps:
    return FieldSchurMaps(eps, split)


def nonlquadr_residuals(eps: Coefficient, probes) -> dict:
    """Residuals of the two block identities on the split ran(G) + ker(div).

    (c) G (div eps G)^-1 div eps = P0 + iota_0 eps00^-1 eps01 iota_1^*
    (d) eps (1 - G (div eps G)^-1 div eps) = iota_1 (eps11 - eps10 eps00^-1 eps01) iota_1^*
    Left sides are evaluated with the direct solve, right sides with the
    lifted Schur maps.
    """
    maps = FieldSchurMaps(eps, "grad")
    s = maps.solver
    Y = np.asarray(probes)
    lhs_c = s.G @ s.solve_grad(s.G.T @ s.eps_apply(Y))
    rhs_c = maps.P0(Y) + maps.m01(Y)
    lhs_d = s.eps_apply(Y - lhs_c)
    rhs_d = maps.schur(Y)
    scale = max(_norm(Y), 1e-300)
    eps_scale = max(_norm(s.eps_apply(Y)), 1e-300)
    return {"c": _norm(lhs_c - rhs_c) / scale, "d": _norm(lhs_d - rhs_d) / eps_scale}
