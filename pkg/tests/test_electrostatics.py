import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlhlab.coefficients import (convolution_coefficient, engineered_rotation, gaussian_kernel,
                                 identity_coefficient, layered_tensor, multiplication_coefficient,
                                 random_coercive_coefficient)
from nlhlab.derham import build_complex, cavity_cube, harmonic_dirichlet, solid_cube
from nlhlab.electrostatics import (ElectrostaticData, eps_harmonic_from_dirichlet, helmholtz_decompose,
                                   hminus_curl_norm, hminus_norm, nonlquadr_residuals, project_harmonic,
                                   reduced_solve_curl, reduced_solve_curl_full, reduced_solve_grad,
                                   solve_electrostatics)
from nlhlab.errors import AdmissibilityError, DataError, StructuralError


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def layered(cx):
    return multiplication_coefficient(cx, layered_tensor(cx, 1.0, 4.0, 2), 1.0)


def random_data(cx, rng, formulation="piD-normalized"):
    f = rng.standard_normal(cx.X0.dim)
    g = cx.Ccirc.matrix @ rng.standard_normal(cx.H.dim)
    xd = harmonic_dirichlet(cx).basis.basis
    x = xd @ rng.standard_normal(xd.shape[1])
    return ElectrostaticData(f, g, x, formulation)


# -- reduced solves -------------------------------------------------------------

def test_grad_solve_zero(cavity9):
    np.testing.assert_array_equal(reduced_solve_grad(identity_coefficient(cavity9), np.zeros(cavity9.X0.dim)), 0)


def test_grad_solve_constructed(cavity9, rng):
    w = rng.standard_normal(cavity9.X0.dim)
    f = cavity9.node_laplacian() @ w
    u = reduced_solve_grad(identity_coefficient(cavity9), f)
    assert rel(u, w) <= 1e-10


def test_grad_solve_layered_residual(solid9, rng):
    eps = layered(solid9)
    f = rng.standard_normal(solid9.X0.dim)
    u = reduced_solve_grad(eps, f)
    G = solid9.G.matrix
    assert rel(G.T @ eps.apply(G @ u), f) <= 1e-10


def test_grad_solve_shape_error(cavity9):
    with pytest.raises(StructuralError):
        reduced_solve_grad(identity_coefficient(cavity9), np.zeros(3))


def test_curl_solve_zero(cavity9):
    v = reduced_solve_curl(identity_coefficient(cavity9), np.zeros(cavity9.X1.dim))
    assert not v.any()


def test_curl_solve_constructed_identity(cavity9, rng):
    cx = cavity9
    w = cx.Ccirc.matrix @ rng.standard_normal(cx.H.dim)   # reduced: w in ran(Ccirc)
    curl = cx.curl.matrix
    g = cx.Ccirc.matrix @ (curl @ w)
    v = reduced_solve_curl(identity_coefficient(cx), g)
    # equal up to ker(curl): compare the fields curl v and curl w
    assert rel(curl @ v, curl @ w) <= 1e-10


def test_curl_solve_convolution_residual(cavity9, rng):
    eps = convolution_coefficient(cavity9, gaussian_kernel(cavity9.h, 0.5), 1)
    g = cavity9.Ccirc.matrix @ rng.standard_normal(cavity9.H.dim)
    v, w, res = reduced_solve_curl_full(eps, g)
    assert max(res.values()) <= 1e-10
    assert rel(cavity9.Ccirc.matrix @ w, g) <= 1e-10
    assert rel(cavity9.curl.matrix @ v, eps.apply(w)) <= 1e-10


def test_curl_solve_rejects_data_outside_range(cavity9, rng):
    g = rng.standard_normal(cavity9.X1.dim)
    with pytest.raises(DataError):
        reduced_solve_curl(identity_coefficient(cavity9), g)


def test_rotation_fails_with_admissibility_error(cavity9, rng):
    eps = engineered_rotation(cavity9, seed=2)
    with pytest.raises(AdmissibilityError):
        reduced_solve_grad(eps, rng.standard_normal(cavity9.X0.dim))


# -- decompositions -------------------------------------------------------------

def test_decompose_gradient(cavity9, rng):
    w = rng.standard_normal(cavity9.X0.dim)
    E = cavity9.G.matrix @ w
    d = helmholtz_decompose(E, layered(cavity9))
    assert rel(d.u, w) <= 1e-10
    assert np.linalg.norm(d.w) <= 1e-10 * np.linalg.norm(E)
    assert np.linalg.norm(d.x_eps) <= 1e-10 * np.linalg.norm(E)


def test_decompose_harmonic_identity(cavity9):
    E = harmonic_dirichlet(cavity9).basis.basis[:, 0]
    d = helmholtz_decompose(E, identity_coefficient(cavity9))
    assert np.linalg.norm(d.grad_part) <= 1e-10 * np.linalg.norm(E)
    assert np.linalg.norm(d.w) <= 1e-10 * np.linalg.norm(E)
    assert rel(d.x_eps, E) <= 1e-10


def test_decompose_layered_random(cavity9, rng):
    eps = layered(cavity9)
    E = rng.standard_normal(cavity9.H.dim)
    d = helmholtz_decompose(E, eps)
    assert rel(d.reconstruct(), E) <= 1e-9
    ex = eps.apply(d.x_eps)
    assert np.linalg.norm(cavity9.G.matrix.T @ ex) <= 1e-9 * np.linalg.norm(ex)
    assert np.linalg.norm(cavity9.Ccirc.matrix @ d.x_eps) <= 1e-9 * np.linalg.norm(E)
    # the middle component is eps^-1 curl F
    assert rel(cavity9.curl.matrix @ d.F, eps.apply(d.w)) <= 1e-9


def test_directness_full_rank():
    cx = build_complex(cavity_cube(7, 3))
    eps = random_coercive_coefficient(cx, alpha=0.5, seed=7)
    a = eps.dense()
    ran_g = np.linalg.qr(cx.G.matrix.toarray())[0]
    curl = cx.curl.matrix.toarray()
    u, s, _ = np.linalg.svd(curl, full_matrices=False)
    ran_curl = u[:, s > 1e-10 * s[0]]
    middle = np.linalg.solve(a, ran_curl)
    xd = harmonic_dirichlet(cx).basis.basis
    harm = eps_harmonic_from_dirichlet(xd, eps)
    blocks = [ran_g, middle, harm]
    total = np.hstack([b / np.linalg.norm(b, axis=0) for b in blocks])
    assert sum(b.shape[1] for b in blocks) == cx.H.dim
    assert np.linalg.matrix_rank(total) == cx.H.dim
    for i in range(3):
        for j in range(i + 1, 3):
            pair = np.hstack([blocks[i], blocks[j]])
            assert np.linalg.matrix_rank(pair) == blocks[i].shape[1] + blocks[j].shape[1]


# -- projections ------------------------------------------------------------------

def test_projection_of_gradient_is_zero(cavity9, rng):
    E = cavity9.G.matrix @ rng.standard_normal(cavity9.X0.dim)
    assert np.linalg.norm(project_harmonic(E, layered(cavity9))) <= 1e-10 * np.linalg.norm(E)


def test_identity_projection_is_dirichlet(cavity9, rng):
    E = rng.standard_normal(cavity9.H.dim)
    eps = identity_coefficient(cavity9)
    pe = project_harmonic(E, eps, "eps")
    pd = project_harmonic(E, eps, "Dirichlet")
    assert rel(pe, pd) <= 1e-10
    assert rel(pd, cavity9.project_dirichlet_harmonic(E)) <= 1e-9


@pytest.mark.parametrize("which", ["Dirichlet", "eps", "eps-dual"])
def test_projections_idempotent(cavity9, rng, which):
    eps = random_coercive_coefficient(cavity9, alpha=0.5, seed=5)
    E = rng.standard_normal(cavity9.H.dim)
    p = project_harmonic(E, eps, which)
    assert rel(project_harmonic(p, eps, which), p) <= 1e-10


def test_reformulation_identities(cavity9, rng):
    eps = layered(cavity9)
    E = rng.standard_normal(cavity9.H.dim)
    pd = project_harmonic(E, eps, "Dirichlet")
    lhs = project_harmonic(pd, eps, "eps")
    G = cavity9.G.matrix
    rhs = pd - G @ np.linalg.solve((G.T @ eps.matrix @ G).toarray(), G.T @ eps.apply(pd))
    assert rel(lhs, rhs) <= 1e-9
    # bijection between the Dirichlet and eps-harmonic spaces
    pe = project_harmonic(E, eps, "eps")
    assert rel(project_harmonic(project_harmonic(pe, eps, "Dirichlet"), eps, "eps"), pe) <= 1e-9
    assert rel(project_harmonic(lhs, eps, "Dirichlet"), pd) <= 1e-9


def test_projection_errors(cavity9):
    with pytest.raises(StructuralError):
        project_harmonic(np.zeros(cavity9.H.dim), None, "eps")
    with pytest.raises(StructuralError):
        project_harmonic(np.zeros(cavity9.H.dim), identity_coefficient(cavity9), "other")


# -- electrostatics -------------------------------------------------------------------

def test_zero_data_gives_zero(cavity9):
    cx = cavity9
    data = ElectrostaticData(np.zeros(cx.X0.dim), np.zeros(cx.X1.dim), np.zeros(cx.H.dim), "P")
    res = solve_electrostatics(layered(cx), data)
    assert not res.field.any()


def test_recovers_constructed_field(solid9, rng):
    cx = solid9
    E_star = cx.G.matrix @ rng.standard_normal(cx.X0.dim) + cx.curl.matrix @ rng.standard_normal(cx.X1.dim)
    data = ElectrostaticData(cx.G.matrix.T @ E_star, cx.Ccirc.matrix @ E_star, np.zeros(cx.H.dim), "P")
    res = solve_electrostatics(identity_coefficient(cx), data)
    assert rel(res.field, E_star) <= 1e-9


@pytest.mark.parametrize("coef", ["layered", "convolution", "random"])
def test_primal_dual_equivalence(cavity9, rng, coef):
    cx = cavity9
    eps = {"layered": layered, "convolution": lambda c: convolution_coefficient(c, gaussian_kernel(c.h, 0.5), 2),
           "random": lambda c: random_coercive_coefficient(c, 0.5, 3)}[coef](cx)
    data = random_data(cx, rng)
    E = solve_electrostatics(eps, data)
    assert max(E.residuals.values()) <= 1e-9
    recon = cx.G.matrix @ E.potential_part + E.curl_field + E.harmonic_part
    assert rel(recon, E.field) <= 1e-9
    dual = ElectrostaticData(data.f, data.g, eps.apply(E.harmonic_part), "P-dual")
    H = solve_electrostatics(eps, dual)
    assert max(H.residuals.values()) <= 1e-9
    assert rel(H.field, eps.apply(E.field)) <= 1e-9
    # the primal formulation with x_eps gives the same field
    P = solve_electrostatics(eps, ElectrostaticData(data.f, data.g, E.harmonic_part, "P"))
    assert rel(P.field, E.field) <= 1e-9


def test_solve_deterministic(cavity9, rng):
    eps = layered(cavity9)
    data = random_data(cavity9, rng)
    a = solve_electrostatics(eps, data).field
    b = solve_electrostatics(eps, data).field
    assert a.tobytes() == b.tobytes()


def test_data_errors(cavity9, rng):
    with pytest.raises(DataError):
        ElectrostaticData(np.zeros(1), np.zeros(1), np.zeros(1), "Q")
    with pytest.raises(DataError):
        solve_electrostatics(identity_coefficient(cavity9), ElectrostaticData(np.zeros(3), np.zeros(3), np.zeros(3)))
    bad = ElectrostaticData(np.zeros(cavity9.X0.dim), np.zeros(cavity9.X1.dim),
                            rng.standard_normal(cavity9.H.dim), "piD-normalized")
    with pytest.raises(DataError):
        solve_electrostatics(identity_coefficient(cavity9), bad)


def test_block_identities(cavity9, rng):
    for eps in (layered(cavity9), random_coercive_coefficient(cavity9, 0.5, 9)):
        res = nonlquadr_residuals(eps, rng.standard_normal((cavity9.H.dim, 4)))
        assert res["c"] <= 1e-9 and res["d"] <= 1e-9


# -- dual norms -------------------------------------------------------------------------

def test_hminus_zero(solid5):
    assert hminus_norm(solid5, np.zeros(solid5.X0.dim)) == 0.0
    assert hminus_curl_norm(solid5, np.zeros(solid5.X1.dim)) == 0.0


def test_hminus_of_laplacian_image(solid5):
    e = np.zeros(solid5.X0.dim)
    e[7] = 1.0
    f = solid5.node_laplacian() @ e
    assert np.isclose(hminus_norm(solid5, f), np.sqrt(solid5.X0.inner(f, e)), rtol=1e-12)


def test_hminus_dense_oracle(rng):
    cx = build_complex(solid_cube(7))
    L = cx.node_laplacian().toarray()
    lam, V = np.linalg.eigh(L)
    f = rng.standard_normal(cx.X0.dim)
    c = V.T @ f
    oracle = np.sqrt(cx.h ** 3 * np.sum(c ** 2 / lam))
    assert abs(hminus_norm(cx, f) - oracle) <= 1e-10 * oracle


# -- property tests ---------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_decomposition_reconstructs_property(seed):
    cx = _small_cavity()
    eps = _small_eps()
    E = np.random.default_rng(seed).standard_normal(cx.H.dim)
    d = helmholtz_decompose(E, eps)
    assert rel(d.reconstruct(), E) <= 1e-9
    assert np.linalg.norm(cx.Ccirc.matrix @ d.x_eps) <= 1e-9 * np.linalg.norm(E)


_CACHE = {}


def _small_cavity():
    if "cx" not in _CACHE:
        _CACHE["cx"] = build_complex(cavity_cube(7, 3))
    return _CACHE["cx"]


def _small_eps():
    if "eps" not in _CACHE:
        _CACHE["eps"] = random_coercive_coefficient(_small_cavity(), 0.4, 21)
    return _CACHE["eps"]
