"""Acceptance criteria 1-9, each reported as one PASS/FAIL line."""

import pathlib
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from nullspace import hodge_kernel_dim
from nlhlab import lab
from nlhlab.block_schur import schur_identity_suite, three_block_suite
from nlhlab.coefficients import (convolution_coefficient, gaussian_kernel, identity_coefficient, kernel_norm,
                                 layered_tensor, multiplication_coefficient, random_coercive_coefficient)
from nlhlab.derham import VoxelDomain, build_complex, fixture, harmonic_dirichlet
from nlhlab.electrostatics import (ElectrostaticData, eps_harmonic_from_dirichlet, helmholtz_decompose,
                                   nonlquadr_residuals, project_harmonic, solve_electrostatics)
from nlhlab.errors import DegenerateDomainError

pytestmark = pytest.mark.slow

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"
NAMED_FIXTURES = ("solid-cube 9", "cavity-cube 9 3", "two-cavity", "replicated 1", "replicated 2", "replicated 3")


def report(capsys, number, ok, detail, seconds, limit):
    ok = bool(ok) and seconds < limit
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}  ({seconds:.1f} s, limit {limit:.0f} s)"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# -- shared scenario runs --------------------------------------------------------------------

@pytest.fixture(scope="module")
def layered_runs():
    cfg = lab.ScenarioConfig.from_file(CONFIGS / "layered.cfg")
    t = time.perf_counter()
    reports = {s: lab.run_homogenisation(cfg.with_split(s)) for s in ("grad", "curl")}
    return reports, time.perf_counter() - t


@pytest.fixture(scope="module")
def convolution_runs():
    cfg = lab.ScenarioConfig.from_file(CONFIGS / "convolution.cfg")
    t = time.perf_counter()
    reports = {s: lab.run_homogenisation(cfg.with_split(s)) for s in ("grad", "curl")}
    compact = lab.compactness_demo(cfg)
    return cfg, reports, compact, time.perf_counter() - t


# -- 1, 2: block algebra ------------------------------------------------------------------------

def test_criterion_1_schur_algebra(capsys):
    t = time.perf_counter()
    rows = schur_identity_suite(seed=1, count=200, dims=(10, 100))
    worst = {k: max(r[k] for r in rows) for k in ("factorization", "inverse", "duality")}
    ok = worst["factorization"] <= 1e-10 and worst["inverse"] <= 1e-10 and worst["duality"] <= 1e-9
    detail = (f"200 operators; max factorization {worst['factorization']:.1e}, "
              f"inverse {worst['inverse']:.1e}, duality {worst['duality']:.1e}")
    report(capsys, 1, ok and len(rows) == 200, detail, time.perf_counter() - t, 30)


def test_criterion_2_three_block(capsys):
    t = time.perf_counter()
    rows = three_block_suite(seed=2, count=50)
    worst = max(r["max_residual"] for r in rows)
    ds = sorted({r["d"] for r in rows})
    report(capsys, 2, worst <= 1e-9 and ds == [1, 2, 3, 4, 5],
           f"50 instances, d in {ds}; max residual {worst:.1e}", time.perf_counter() - t, 30)


# -- 3, 4: complex -------------------------------------------------------------------------------

def dense_rank(mat) -> int:
    if min(mat.shape) == 0:
        return 0
    m = mat.astype(float)
    small = m @ m.T if m.shape[0] <= m.shape[1] else m.T @ m
    ev = np.linalg.eigvalsh(small.toarray())
    return int(np.sum(ev > 1e-9 * ev.max()))


def random_masks(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        shape = tuple(int(s) for s in rng.integers(4, 9, size=3))
        mask = rng.random(shape) < rng.uniform(0.6, 0.95)
        try:
            out.append(build_complex(VoxelDomain(mask)))
        except DegenerateDomainError:
            continue
    return out


def test_criterion_3_exactness(capsys):
    t = time.perf_counter()
    complexes = random_masks(20, seed=3) + [build_complex(fixture(n)) for n in NAMED_FIXTURES]
    bad = []
    for k, cx in enumerate(complexes):
        product = cx.C_int @ cx.G_int
        exact = product.count_nonzero() == 0
        identity = dense_rank(cx.G_int) + dense_rank(cx.C_int) + harmonic_dirichlet(cx).dim == cx.H.dim
        if not (exact and identity):
            bad.append(k)
    report(capsys, 3, not bad, f"{len(complexes)} complexes (20 random + {len(NAMED_FIXTURES)} fixtures); "
           f"failures {bad}", time.perf_counter() - t, 600)


def test_criterion_4_topology(capsys):
    t = time.perf_counter()
    expected = {"solid-cube 9": 0, "cavity-cube 9 3": 1, "two-cavity": 2,
                "replicated 1": 1, "replicated 2": 2, "replicated 3": 3}
    found = {}
    for name, k in expected.items():
        cx = build_complex(fixture(name))
        found[name] = (harmonic_dirichlet(cx).dim, hodge_kernel_dim(cx))
    ok = all(found[n] == (k, k) for n, k in expected.items())
    detail = "; ".join(f"{n}: {v[0]}/{v[1]}" for n, v in found.items())
    report(capsys, 4, ok, f"dim H_D solver/oracle {detail}", time.perf_counter() - t, 120)


# -- 5: Helmholtz and solvers ------------------------------------------------------------------

def coefficients_for(cx):
    return {
        "identity": identity_coefficient(cx),
        "layered": multiplication_coefficient(cx, layered_tensor(cx, 1.0, 4.0, 2), 1.0),
        "convolution": convolution_coefficient(cx, gaussian_kernel(cx.h, 0.5), 1),
        "random": random_coercive_coefficient(cx, 0.5, 17),
    }


def solver_suite(cx, eps, rng):
    out = {}
    E = rng.standard_normal(cx.H.dim)
    d = helmholtz_decompose(E, eps)
    out["reconstruction"] = rel(d.reconstruct(), E)
    # projection identities are measured relative to |E|: on domains without
    # harmonic fields every projection is rounding noise
    scale = np.linalg.norm(E)

    def err(a, b):
        return float(np.linalg.norm(a - b) / scale)

    idem = 0.0
    for which in ("Dirichlet", "eps", "eps-dual"):
        p = project_harmonic(E, eps, which)
        idem = max(idem, err(project_harmonic(p, eps, which), p))
    out["idempotence"] = idem
    pd = project_harmonic(E, eps, "Dirichlet")
    pe = project_harmonic(E, eps, "eps")
    pepd = project_harmonic(pd, eps, "eps")
    out["reform"] = max(err(pepd, eps_harmonic_from_dirichlet(pd, eps)),
                        err(project_harmonic(project_harmonic(pe, eps, "Dirichlet"), eps, "eps"), pe),
                        err(project_harmonic(pepd, eps, "Dirichlet"), pd))
    nl = nonlquadr_residuals(eps, rng.standard_normal((cx.H.dim, 2)))
    out["block"] = max(nl.values())
    xd = harmonic_dirichlet(cx).basis.basis
    data = ElectrostaticData(rng.standard_normal(cx.X0.dim), cx.Ccirc.matrix @ rng.standard_normal(cx.H.dim),
                             xd @ rng.standard_normal(xd.shape[1]), "piD-normalized")
    P = solve_electrostatics(eps, data)
    D = solve_electrostatics(eps, ElectrostaticData(data.f, data.g, eps.apply(P.harmonic_part), "P-dual"))
    out["equivalence"] = rel(D.field, eps.apply(P.field))
    out["residuals"] = max(max(P.residuals.values()), max(D.residuals.values()))
    return out


def test_criterion_5_solvers(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    limits = {"reconstruction": 1e-9, "idempotence": 1e-10, "reform": 1e-9, "block": 1e-9,
              "equivalence": 1e-9, "residuals": 1e-9}
    worst = dict.fromkeys(limits, 0.0)
    cases = 0
    for name in ("solid-cube 15", "cavity-cube 15 5", "two-cavity"):
        cx = build_complex(fixture(name))
        for eps in coefficients_for(cx).values():
            res = solver_suite(cx, eps, rng)
            for k, v in res.items():
                worst[k] = max(worst[k], v)
            cases += 1
    ok = all(worst[k] <= limits[k] for k in limits)
    detail = f"{cases} fixture x coefficient cases; " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(capsys, 5, ok and cases == 12, detail, time.perf_counter() - t, 300)


# -- 6: homogenisation ------------------------------------------------------------------------

def test_criterion_6_homogenisation(capsys, layered_runs):
    reports, elapsed = layered_runs
    t = time.perf_counter()
    ref = lab.effective_tensor_reference(1.0, 4.0, n=8, N=48)
    elapsed += time.perf_counter() - t
    limit = lab.homogenised_tensor(1.0, 4.0)
    ref_err = float(np.max(np.abs(ref - limit) / limit))
    rep = reports["grad"]
    gaps = rep.column("energy_gap")
    flux = rep.column("flux_weak_max")
    ok = (lab.non_increasing_tail(gaps) and gaps[-1] <= 0.1 and flux[-1] <= 0.1 and ref_err <= 0.05
          and rep.verdicts["residuals"] == "PASS")
    detail = (f"energy gaps {np.array2string(gaps, precision=3)}, final flux {flux[-1]:.3g}; "
              f"reference {np.array2string(ref, precision=4)} vs {limit.tolist()} ({100 * ref_err:.2f}%)")
    report(capsys, 6, ok, detail, elapsed, 600)


# -- 7: convolution and compactness -----------------------------------------------------------

def test_criterion_7_convolution(capsys, convolution_runs):
    cfg, reports, compact, elapsed = convolution_runs
    t = time.perf_counter()
    cx = build_complex(fixture(cfg.domain))
    ratios = []
    for n in cfg.indices:
        eps = lab.convolution_sequence(cx, cfg, n)
        ratios.append(kernel_norm(eps) / (cfg.ell1 * n ** -3.0))
    elapsed += time.perf_counter() - t
    d = reports["grad"].column("d_schur")
    dist = compact.column("dist")
    ok = (max(ratios) <= 1.2 and bool(np.all(np.diff(d) < 0)) and bool(np.all(np.diff(dist) < 0))
          and compact.verdicts["sandwich"] == "PASS")
    detail = (f"|K_n| n^3 / 0.5 = {np.array2string(np.array(ratios), precision=3)}, "
              f"d_schur {np.array2string(d, precision=3)}, "
              f"|E_n - E| {' '.join(f'{v:.2e}' for v in dist)}, "
              f"sandwich {compact.verdicts['sandwich']}")
    report(capsys, 7, ok, detail, elapsed, 300)


# -- 8: incomparable topologies -----------------------------------------------------------------

def test_criterion_8_incomparable(capsys):
    t = time.perf_counter()
    cfg = lab.ScenarioConfig.from_file(CONFIGS / "incomparable.cfg")
    rep = lab.incomparable_demo(cfg)
    final = rep.rows[-1]
    detail = (f"final tau0 {final['tau0']:.1e}, tau1 cluster gap {rep.notes['tau1_cluster_gap']:.3f}; "
              f"inverse: final tau1 {final['tau1_inv']:.1e}, tau0 cluster gap {rep.notes['tau0_inv_cluster_gap']:.3f}")
    report(capsys, 8, rep.passed, detail, time.perf_counter() - t, 60)


# -- 9: split independence ------------------------------------------------------------------------

def test_criterion_9_split_independence(capsys, layered_runs, convolution_runs):
    t = time.perf_counter()
    layered, _ = layered_runs
    _, conv, _, _ = convolution_runs
    pairs = {"layered": layered, "convolution": conv}
    mismatches = [name for name, r in pairs.items() if r["grad"].verdicts != r["curl"].verdicts]
    summary = "; ".join(f"{name}: {r['grad'].verdicts['trend']}/{r['curl'].verdicts['trend']}"
                        for name, r in pairs.items())
    report(capsys, 9, not mismatches, f"trend verdicts grad/curl {summary}; mismatches {mismatches}",
           time.perf_counter() - t, 60)
