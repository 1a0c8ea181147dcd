"""2x2 block decompositions and the maps generating the nonlocal H-topology.

For a split H = H0 (+) H1 with canonical embeddings iota_0, iota_1 an operator
``a`` has blocks ``a_jk = iota_j^* a iota_k``.  Membership in M(H0, H1) means
that a00 and ``a`` are invertible; the topology is the initial one for

    a00^-1,   a00^-1 a01,   a10 a00^-1,   a11 - a10 a00^-1 a01

with weak-operator targets.  In finite dimensions the weak operator topology
is realized by pairings against a fixed :class:`TestFamily`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MembershipError, StructuralError
from .operator_core import HilbertSpace, LinearMap, Subspace

COND_CAP = 1e12
MAP_NAMES = ("inv00", "m01", "m10", "schur")


def _cond(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 1.0
    with np.errstate(all="ignore"):
        c = np.linalg.cond(mat)
    return float(c) if np.isfinite(c) else float("inf")


def _inv_checked(mat: np.ndarray, what: str) -> np.ndarray:
    c = _cond(mat)
    if not c < COND_CAP:
        raise MembershipError(f"{what} is not invertible (condition number {c:.3e})")
    if mat.size == 0:
        return mat.copy()
    return np.linalg.inv(mat)


@dataclass(frozen=True, eq=False)
class BlockSplit:
    """Orthogonal decomposition ambient = H0 (+) H1."""

    ambient: HilbertSpace
    H0: Subspace
    H1: Subspace

    def __post_init__(self):
        if self.H0.dim + self.H1.dim != self.ambient.dim:
            raise StructuralError("H0.dim + H1.dim must equal the ambient dimension")
        if self.H0.dim and self.H1.dim:
            cross = self.ambient.inner(self.H0.basis, self.H1.basis)
            if np.max(np.abs(cross)) > 1e-10:
                raise StructuralError("H0 and H1 are not orthogonal")

    @classmethod
    def from_subspace(cls, H0: Subspace) -> "BlockSplit":
        return cls(H0.ambient, H0, H0.complement())

    @classmethod
    def from_dims(cls, d0: int, d1: int) -> "BlockSplit":
        """Coordinate split of K^(d0+d1) with unit mass."""
        space = HilbertSpace(d0 + d1)
        eye = np.eye(d0 + d1)
        return cls(space, Subspace(space, eye[:, :d0]), Subspace(space, eye[:, d0:]))

    def swapped(self) -> "BlockSplit":
        return BlockSplit(self.ambient, self.H1, self.H0)

    def coordinates(self, v):
        """Block coordinates (iota_0^* v, iota_1^* v)."""
        return self.H0.coordinates(v), self.H1.coordinates(v)

    def same_as(self, other: "BlockSplit") -> bool:
        if self is other:
            return True
        return (
            self.H0.dim == other.H0.dim
            and self.ambient.same_as(other.ambient)
            and np.allclose(self.H0.basis, other.H0.basis, atol=1e-12)
        )


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """Blocks a_jk of an operator with respect to a BlockSplit."""

    split: BlockSplit
    a00: np.ndarray
    a01: np.ndarray
    a10: np.ndarray
    a11: np.ndarray

    @classmethod
    def from_operator(cls, op, split: BlockSplit) -> "BlockOperator":
        mat = op.dense() if isinstance(op, LinearMap) else np.asarray(op)
        if mat.shape != (split.ambient.dim, split.ambient.dim):
            raise StructuralError("operator does not act on the split's ambient space")
        b0, b1 = split.H0.basis, split.H1.basis
        d0, d1 = b0.shape[1], b1.shape[1]
        a00 = np.asarray(split.H0.coordinates(mat @ b0)).reshape(d0, d0)
        a01 = np.asarray(split.H0.coordinates(mat @ b1)).reshape(d0, d1)
        a10 = np.asarray(split.H1.coordinates(mat @ b0)).reshape(d1, d0)
        a11 = np.asarray(split.H1.coordinates(mat @ b1)).reshape(d1, d1)
        return cls(split, a00, a01, a10, a11)

    @classmethod
    def from_blocks(cls, a00, a01, a10, a11) -> "BlockOperator":
        a00, a01, a10, a11 = (np.atleast_2d(np.asarray(x)) for x in (a00, a01, a10, a11))
        split = BlockSplit.from_dims(a00.shape[0], a11.shape[0])
        return cls(split, a00, a01, a10, a11)

    def block_matrix(self) -> np.ndarray:
        """[[a00, a01], [a10, a11]] in block coordinates."""
        return np.block([[self.a00, self.a01], [self.a10, self.a11]])

    def assemble(self) -> np.ndarray:
        """Reassemble the ambient operator from its blocks."""
        s = self.split
        mass = s.ambient.mass
        b = np.hstack([s.H0.basis, s.H1.basis])
        return b @ self.block_matrix() @ (b.conj().T * mass[None, :])

    def norm(self) -> float:
        return float(np.linalg.norm(self.block_matrix(), 2)) if self.split.ambient.dim else 0.0


@dataclass(frozen=True, eq=False)
class SchurData:
    """The four maps a00^-1, a00^-1 a01, a10 a00^-1 and the Schur complement."""

    split: BlockSplit
    inv00: np.ndarray
    m01: np.ndarray
    m10: np.ndarray
    schur: np.ndarray

    def maps(self):
        return self.inv00, self.m01, self.m10, self.schur

    def pairings(self, family: "TestFamily") -> np.ndarray:
        """Array (4, m, m) of <t_j, iota_p M iota_q^* t_k> for the four maps M."""
        c0, c1 = self.split.coordinates(family.vectors)
        c0 = np.asarray(c0).reshape(self.split.H0.dim, family.size)
        c1 = np.asarray(c1).reshape(self.split.H1.dim, family.size)
        return np.stack([
            c0.conj().T @ self.inv00 @ c0,
            c0.conj().T @ self.m01 @ c1,
            c1.conj().T @ self.m10 @ c0,
            c1.conj().T @ self.schur @ c1,
        ])


@dataclass(frozen=True, eq=False)
class TestFamily:
    """Finite mass-orthonormal probe family with summable positive weights."""

    space: HilbertSpace
    vectors: np.ndarray
    weights: np.ndarray = field(default=None)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        vecs = np.asarray(self.vectors)
        if vecs.ndim == 1:
            vecs = vecs[:, None]
        w = geometric_weights(vecs.shape[1]) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (vecs.shape[1],):
            raise StructuralError("one weight per test vector is required")
        if np.any(w <= 0) or w.sum() > 1 + 1e-12:
            raise StructuralError("weights must be positive with sum <= 1")
        gram = self.space.inner(vecs, vecs)
        if vecs.shape[1] and np.max(np.abs(gram - np.eye(vecs.shape[1]))) > 1e-8:
            raise StructuralError("test vectors must be mass-orthonormal")
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_vectors(cls, space: HilbertSpace, vectors, weights=None) -> "TestFamily":
        """Orthonormalize ``vectors`` in order (earlier columns keep their direction)."""
        return cls(space, orthonormalize(space, vectors), weights)


def geometric_weights(m: int) -> np.ndarray:
    return 0.5 ** (np.arange(m) + 1.0)


def orthonormalize(space: HilbertSpace, vectors, tol: float = 1e-10) -> np.ndarray:
    """Modified Gram-Schmidt in the weighted inner product, dropping dependent columns."""
    vectors = np.array(vectors, dtype=np.result_type(np.asarray(vectors).dtype, float), copy=True)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    out = []
    for j in range(vectors.shape[1]):
        v = vectors[:, j].copy()
        scale = space.norm(v)
        if scale == 0:
            continue
        for _ in range(2):
            for q in out:
                v -= q * space.inner(q, v)
        nv = space.norm(v)
        if nv > tol * scale:
            out.append(v / nv)
    if not out:
        return np.zeros((space.dim, 0))
    return np.column_stack(out)


def default_test_family(space: HilbertSpace, n_modes: int = 8, n_random: int = 16,
                        seed: int = 0, modes=None) -> TestFamily:
    """Low-index cosine modes (or supplied ``modes``) followed by seeded random vectors."""
    if modes is None:
        idx = (np.arange(space.dim) + 0.5) / max(space.dim, 1)
        modes = np.column_stack([np.cos(np.pi * k * idx) for k in range(n_modes)]) if n_modes else \
            np.zeros((space.dim, 0))
    rng = np.random.default_rng(seed)
    rand = rng.standard_normal((space.dim, n_random))
    vecs = orthonormalize(space, np.hstack([np.asarray(modes), rand]))
    return TestFamily(space, vecs)


def _as_block_operator(a, split: BlockSplit | None = None) -> BlockOperator:
    if isinstance(a, BlockOperator):
        return a
    if split is None:
        raise StructuralError("a BlockSplit is required for a plain operator")
    return BlockOperator.from_operator(a, split)


def is_member(a: BlockOperator) -> bool:
    """a in M(H0, H1): a00 invertible and a invertible."""
    try:
        block_inverse(a)
    except MembershipError:
        return False
    return True


def schur_data(a: BlockOperator) -> SchurData:
    inv00 = _inv_checked(a.a00, "a00")
    m01 = inv00 @ a.a01
    m10 = a.a10 @ inv00
    schur = a.a11 - a.a10 @ m01
    return SchurData(a.split, inv00, m01, m10, schur)


def schur_factorization_residual(a: BlockOperator, data: SchurData | None = None) -> float:
    """Relative residual of L a U = diag(a00, a_S) with the unitriangular factors."""
    data = schur_data(a) if data is None else data
    d0, d1 = a.a00.shape[0], a.a11.shape[0]
    lower = np.block([[np.eye(d0), np.zeros((d0, d1))], [-data.m10, np.eye(d1)]])
    upper = np.block([[np.eye(d0), -data.m01], [np.zeros((d1, d0)), np.eye(d1)]])
    target = np.block([[a.a00, np.zeros((d0, d1))], [np.zeros((d1, d0)), data.schur]])
    resid = lower @ a.block_matrix() @ upper - target
    scale = max(a.norm(), 1e-300)
    return float(np.linalg.norm(resid, 2) / scale) if resid.size else 0.0


def block_inverse_blocks(a: BlockOperator, data: SchurData | None = None):
    """Blocks of a^-1 from the explicit Schur-complement formula."""
    data = schur_data(a) if data is None else data
    s_inv = _inv_checked(data.schur, "Schur complement a_S")
    b00 = data.inv00 + data.m01 @ s_inv @ data.m10
    b01 = -data.m01 @ s_inv
    b10 = -s_inv @ data.m10
    return b00, b01, b10, s_inv


def block_inverse(a: BlockOperator) -> LinearMap:
    """a^-1 on the ambient space, assembled from the Schur-complement formula."""
    b00, b01, b10, b11 = block_inverse_blocks(a)
    inv = BlockOperator(a.split, b00, b01, b10, b11)
    return LinearMap(a.split.ambient, a.split.ambient, inv.assemble())


def inversion_duality(a: BlockOperator) -> dict:
    """Residuals of the four identities linking a and a^-1 under the swapped split.

    a^-1 is computed by a dense solve of the full block matrix, independently of
    the Schur-complement formula.
    """
    data = schur_data(a)
    full = a.block_matrix()
    if not _cond(full) < COND_CAP:
        raise MembershipError("a is not invertible")
    d0 = a.a00.shape[0]
    inv = np.linalg.solve(full, np.eye(full.shape[0]))
    b00, b01 = inv[:d0, :d0], inv[:d0, d0:]
    b10, b11 = inv[d0:, :d0], inv[d0:, d0:]
    b11_inv = _inv_checked(b11, "[a^-1]_11")

    def nrm(x):
        return float(np.linalg.norm(x, 2)) if x.size else 0.0

    return {
        "inv11_eq_schur": nrm(b11_inv - data.schur),
        "inv11_inv10_eq_minus_m10": nrm(b11_inv @ b10 + data.m10),
        "inv01_inv11_eq_minus_m01": nrm(b01 @ b11_inv + data.m01),
        "swapped_schur_eq_inv00": nrm((b00 - b01 @ b11_inv @ b10) - data.inv00),
        "scale": a.norm(),
    }


def tau_bound(a: BlockOperator) -> float:
    """max of the operator norms of the four Schur maps."""
    data = schur_data(a)
    return max((float(np.linalg.norm(m, 2)) if m.size else 0.0) for m in data.maps())


def inverse_block_operator(a: BlockOperator) -> BlockOperator:
    """a^-1 written in the swapped split (H1, H0)."""
    b00, b01, b10, b11 = block_inverse_blocks(a)
    return BlockOperator(a.split.swapped(), b11, b10, b01, b00)


def schur_distance(a, b, family: TestFamily) -> float:
    """Pseudo-metric sum_{j,k} w_j w_k sum_maps |<t_j, (m_a - m_b) t_k>|.

    ``a`` and ``b`` are SchurData (or BlockOperators) over the same split, or any
    objects exposing ``pairings(family)`` and ``split``.  The value is zero
    whenever the four maps agree on all pairings of the family.
    """
    a = schur_data(a) if isinstance(a, BlockOperator) else a
    b = schur_data(b) if isinstance(b, BlockOperator) else b
    if not _same_split(a.split, b.split):
        raise StructuralError("operators are decomposed with respect to different splits")
    pa = a.pairings(family)
    pb = b.pairings(family)
    w = family.weights
    ww = np.outer(w, w)
    return float(np.sum(ww[None, :, :] * np.abs(pa - pb)))


def _same_split(s1, s2) -> bool:
    if isinstance(s1, BlockSplit) and isinstance(s2, BlockSplit):
        return s1.same_as(s2)
    return s1 == s2


@dataclass(frozen=True)
class ThreeBlockReport:
    residuals: dict
    coarse_schur: np.ndarray

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


def _blocks3(mat: np.ndarray, dims):
    cuts = np.cumsum((0,) + tuple(dims))
    return [[mat[cuts[i]:cuts[i + 1], cuts[j]:cuts[j + 1]] for j in range(3)] for i in range(3)]


def three_block_expansion(a, split3) -> ThreeBlockReport:
    """Compare the coarse-split maps with their expansions in fine-split maps.

    ``split3`` is a triple of mutually orthogonal Subspaces (L0, L1, L2) of the
    ambient space, or a triple of dimensions for a coordinate split.  The
    coarse split is (L0 + L1, L2); the fine split is (L0, L1 + L2).  Each coarse
    map is rebuilt from a00^-1, the fine off-diagonal maps and the fine Schur
    complement, with the identity of L1 interleaved exactly as in the
    product-continuity argument.
    """
    mat = a.dense() if isinstance(a, LinearMap) else np.asarray(a)
    if all(isinstance(d, (int, np.integer)) for d in split3):
        dims = tuple(int(d) for d in split3)
        space = HilbertSpace(sum(dims))
        eye = np.eye(space.dim)
        cuts = np.cumsum((0,) + dims)
        subs = [Subspace(space, eye[:, cuts[i]:cuts[i + 1]]) for i in range(3)]
    else:
        subs = list(split3)
        space = subs[0].ambient
        dims = tuple(s.dim for s in subs)
    if sum(dims) != space.dim or mat.shape != (space.dim, space.dim):
        raise StructuralError("three-way split does not match the operator")
    basis = np.hstack([s.basis for s in subs])
    coords = basis.conj().T @ (space.mass[:, None] * (mat @ basis))
    d0, d1, d2 = dims

    # fine split (L0, L1 + L2)
    fine = BlockOperator.from_blocks(coords[:d0, :d0], coords[:d0, d0:], coords[d0:, :d0], coords[d0:, d0:]) \
        if d0 else None
    if fine is None:
        raise StructuralError("L0 must be non-trivial")
    fdata = schur_data(fine)
    inv00 = fdata.inv00
    m10_1, m10_2 = fdata.m10[:d1], fdata.m10[d1:]
    m01_1, m01_2 = fdata.m01[:, :d1], fdata.m01[:, d1:]
    s11, s12 = fdata.schur[:d1, :d1], fdata.schur[:d1, d1:]
    s21, s22 = fdata.schur[d1:, :d1], fdata.schur[d1:, d1:]
    id1 = np.eye(d1)
    s_inv = _inv_checked(s11, "corner Schur complement a_S") if d1 else np.zeros((0, 0))

    exp_inv = np.block([
        [inv00 + m01_1 @ id1 @ s_inv @ id1 @ m10_1, -m01_1 @ id1 @ s_inv],
        [-s_inv @ id1 @ m10_1, s_inv],
    ])
    # (a20 a00^-1 a01 - a21) = -s21 ; (a10 a00^-1 a02 - a12) = -s12
    exp_m10 = np.hstack([m10_2 + (-s21) @ id1 @ s_inv @ id1 @ m10_1, s21 @ id1 @ s_inv])
    exp_m01 = np.vstack([m01_2 + m01_1 @ id1 @ s_inv @ id1 @ (-s12), s_inv @ id1 @ s12])
    exp_schur = s22 + s21 @ id1 @ s_inv @ id1 @ (-s12)

    # oracle: coarse split (L0 + L1, L2) computed directly
    k = d0 + d1
    coarse = BlockOperator.from_blocks(coords[:k, :k], coords[:k, k:], coords[k:, :k], coords[k:, k:]) \
        if d2 else None
    if coarse is None:
        raise StructuralError("L2 must be non-trivial")
    cdata = schur_data(coarse)

    def nrm(x):
        return float(np.linalg.norm(x, 2)) if x.size else 0.0

    residuals = {
        "coarse_inv00": nrm(exp_inv - cdata.inv00),
        "coarse_m10": nrm(exp_m10 - cdata.m10),
        "coarse_m01": nrm(exp_m01 - cdata.m01),
        "coarse_schur": nrm(exp_schur - cdata.schur),
    }
    return ThreeBlockReport(residuals, exp_schur)


# -- random instances ---------------------------------------------------------------

def random_coercive_matrix(dim: int, rng: np.random.Generator, alpha: float = 0.5,
                           complex_: bool = False) -> np.ndarray:
    """alpha*I + B B^* / dim + (C - C^*) / sqrt(dim): Re <x, a x> >= alpha |x|^2."""
    def draw(shape):
        z = rng.standard_normal(shape)
        return z + 1j * rng.standard_normal(shape) if complex_ else z
    B = draw((dim, dim))
    C = draw((dim, dim))
    return alpha * np.eye(dim) + B @ B.conj().T / dim + (C - C.conj().T) / np.sqrt(dim)


def random_split(dim: int, d0: int, rng: np.random.Generator) -> BlockSplit:
    """Split of K^dim along a random orthonormal frame with dim H0 = d0."""
    space = HilbertSpace(dim)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return BlockSplit(space, Subspace(space, q[:, :d0]), Subspace(space, q[:, d0:]))


def schur_identity_suite(seed: int, count: int = 200, dims=(10, 100)):
    """Rows of residuals for random coercive operators on random splits."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(count):
        dim = int(rng.integers(dims[0], dims[1] + 1))
        d0 = int(rng.integers(1, dim))
        split = random_split(dim, d0, rng)
        mat = random_coercive_matrix(dim, rng)
        a = BlockOperator.from_operator(mat, split)
        data = schur_data(a)
        inv = block_inverse(a).dense()
        dual = inversion_duality(a)
        rows.append({
            "instance": k, "dim": dim, "d0": d0,
            "factorization": schur_factorization_residual(a, data),
            "inverse": float(np.linalg.norm(inv @ mat - np.eye(dim), 2)),
            "duality": max(v for key, v in dual.items() if key != "scale") / dual["scale"],
        })
    return rows


def three_block_suite(seed: int, count: int = 50):
    """Rows of expanded-formula residuals for dims (10, d, 15), d in 1..5."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(count):
        d = int(rng.integers(1, 6))
        dims = (10, d, 15)
        mat = random_coercive_matrix(sum(dims), rng)
        report = three_block_expansion(mat, dims)
        rows.append({"instance": k, "d": d, "max_residual": report.max_residual})
    return rows
