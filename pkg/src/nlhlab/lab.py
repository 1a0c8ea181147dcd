"""Scenario runner for homogenisation, div-curl, compactness and incomparability experiments."""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .block_schur import (BlockOperator, BlockSplit, TestFamily, block_inverse, default_test_family,
                          schur_data, schur_distance)
from .coefficients import (Coefficient, convolution_coefficient, convolution_limit, gaussian_kernel,
                           identity_coefficient, laminate_fraction, layered_tensor,
                           multiplication_coefficient)
from .derham import GridComplex, build_complex, fixture, harmonic_dirichlet
from .electrostatics import (ElectrostaticData, FieldSchurMaps, hminus_curl_norm, hminus_norm,
                             solve_electrostatics)
from .errors import DataError, StructuralError
from .operator_core import HilbertSpace
from .textio import parse_key_values

CSV_COLUMNS = ("n", "d_schur", "energy", "energy_gap", "e_weak_max", "flux_weak_max",
               "res_div", "res_curl", "res_harm")
TRACKED_GAPS = ("energy_gap", "d_schur")
WORKERS_ENV = "NLHLAB_WORKERS"
FAMILIES = ("layered", "convolution", "constant", "interleaved")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    domain: str = "cavity-cube 24 8"
    family: str = "layered"
    indices: tuple = (1, 2, 3, 4, 6, 8)
    a_minus: float = 1.0
    a_plus: float = 4.0
    fraction: float = 0.5
    ell1: float = 0.5
    sigma_cells: float = 2.0
    cutoff: float = 2.5
    seed_f: int = 1
    seed_g: int = 2
    seed_x: int = 3
    n_modes: int = 8
    n_random: int = 16
    family_seed: int = 0
    split: str = "grad"
    energy_tol: float = 0.1
    flux_tol: float = 0.1
    hypothesis_tol: float = 0.05
    block_dim: int = 1024
    outer_dim: int = 8
    alpha: float = 1.0
    beta: float = 2.0
    distance_tol: float = 1e-3
    cluster_gap: float = 0.1
    output: str | None = None

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if not idx:
            raise DataError("index list is empty")
        if any(i < 1 for i in idx) or any(b <= a for a, b in zip(idx, idx[1:])):
            raise DataError("indices must be positive and strictly increasing")
        if self.family not in FAMILIES:
            raise DataError(f"unknown coefficient family {self.family!r}")
        if self.split not in ("grad", "curl"):
            raise DataError(f"unknown split {self.split!r}")

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        values = parse_key_values(text)
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        if "indices" in values:
            values["indices"] = tuple(values["indices"])
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def with_split(self, split: str) -> "ScenarioConfig":
        return replace(self, split=split)


@dataclass
class ScenarioReport:
    rows: list
    verdicts: dict
    notes: dict = field(default_factory=dict)
    fields_n: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(v == "PASS" for v in self.verdicts.values())

    def to_csv(self, columns=CSV_COLUMNS) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in columns])
        for key, val in self.notes.items():
            buf.write(f"# {key}: {_fmt(val)}\n")
        for key, val in self.verdicts.items():
            buf.write(f"# verdict {key}: {val}\n")
        return buf.getvalue()

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10e}"
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, items):
    n = workers()
    if n == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def non_increasing_tail(values, k: int = 3, rtol: float = 1e-12, atol: float = 1e-14) -> bool:
    """True when the last k values never increase beyond roundoff."""
    tail = np.asarray(values, dtype=float)[-k:]
    return bool(np.all(tail[1:] <= tail[:-1] * (1 + rtol) + atol))


# -- coefficient families -----------------------------------------------------------

def layered_sequence(cx: GridComplex, params: ScenarioConfig, n: int) -> Coefficient:
    cap = cx.domain.shape[0] // 3
    if n > cap:
        raise DataError(f"index {n} exceeds the oscillation cap {cap} (layers must span 3 cells)")
    t = layered_tensor(cx, params.a_minus, params.a_plus, n, params.fraction)
    return multiplication_coefficient(cx, t, min(params.a_minus, params.a_plus),
                                      {"family": "layered", "n": n})


def homogenised_tensor(a_minus: float, a_plus: float, fraction: float = 0.5) -> np.ndarray:
    """Diagonal of the laminate limit: harmonic mean along x1, arithmetic across."""
    harm = 1.0 / (fraction / a_minus + (1 - fraction) / a_plus)
    arith = fraction * a_minus + (1 - fraction) * a_plus
    return np.array([harm, arith, arith])


def homogenised_limit(cx: GridComplex, params: ScenarioConfig) -> Coefficient:
    diag = homogenised_tensor(params.a_minus, params.a_plus, params.fraction)
    return multiplication_coefficient(cx, diag, float(diag.min()), {"family": "layered-limit"})


def convolution_sequence(cx: GridComplex, params: ScenarioConfig, n: int) -> Coefficient:
    kernel = gaussian_kernel(cx.h, params.ell1, params.sigma_cells * cx.h, params.cutoff)
    return convolution_coefficient(cx, kernel, n)


def family_members(cx: GridComplex, params: ScenarioConfig):
    """(callable n -> eps_n, eps_limit, coercivity constant of the family)."""
    if params.family == "layered":
        return (lambda n: layered_sequence(cx, params, n), homogenised_limit(cx, params),
                min(params.a_minus, params.a_plus))
    if params.family == "convolution":
        return (lambda n: convolution_sequence(cx, params, n), convolution_limit(cx),
                1.0 - params.ell1)
    if params.family == "constant":
        eps = identity_coefficient(cx)
        return (lambda n: eps, eps, 1.0)
    raise DataError(f"family {params.family!r} has no field-space realization")


# -- data and test family --------------------------------------------------------------

def _smooth_modes(points, length, rng, n_terms: int = 4):
    coef = rng.standard_normal(n_terms)
    ks = rng.integers(1, 3, size=(n_terms, 3))
    val = np.zeros(len(points))
    for c, k in zip(coef, ks):
        val += c * np.prod(np.sin(np.pi * k[None, :] * points / length[None, :]), axis=1)
    return val


def _node_points(cx: GridComplex):
    nx, ny, nz = cx.domain.shape
    ijk = np.column_stack(np.unravel_index(cx.node_ids, (nx + 1, ny + 1, nz + 1), order="F"))
    return ijk * cx.h


def _edge_field(cx: GridComplex, rng) -> np.ndarray:
    pts = cx.edge_midpoints()
    dirs = cx.edge_directions()
    length = np.array(cx.domain.shape, dtype=float) * cx.h
    comps = [_smooth_modes(pts, length, rng) for _ in range(3)]
    return np.choose(dirs, comps)


def scenario_data(cx: GridComplex, params: ScenarioConfig) -> ElectrostaticData:
    """Deterministic smooth data (f, g, x) with x in H_D; pi_D-normalized formulation."""
    length = np.array(cx.domain.shape, dtype=float) * cx.h
    f = _smooth_modes(_node_points(cx), length, np.random.default_rng(params.seed_f))
    g = cx.Ccirc.matrix @ _edge_field(cx, np.random.default_rng(params.seed_g))
    basis = harmonic_dirichlet(cx).basis.basis
    raw = _edge_field(cx, np.random.default_rng(params.seed_x))
    x = basis @ (basis.T @ (cx.H.mass * raw)) if basis.shape[1] else np.zeros(cx.H.dim)
    return ElectrostaticData(f, g, x, "piD-normalized")


def field_test_family(cx: GridComplex, n_modes: int = 8, n_random: int = 16, seed: int = 0) -> TestFamily:
    """Low sine modes per field component followed by seeded random vectors."""
    pts = cx.edge_midpoints()
    dirs = cx.edge_directions()
    length = np.array(cx.domain.shape, dtype=float) * cx.h
    waves = [(1, 1, 1), (2, 1, 1), (1, 2, 1), (1, 1, 2)]
    modes = []
    for k in waves:
        for d in range(3):
            val = np.prod(np.sin(np.pi * np.array(k)[None, :] * pts / length[None, :]), axis=1)
            modes.append(np.where(dirs == d, val, 0.0))
            if len(modes) == n_modes:
                break
        if len(modes) == n_modes:
            break
    mat = np.column_stack(modes) if modes else np.zeros((cx.H.dim, 0))
    return default_test_family(cx.H, n_modes=0, n_random=n_random, seed=seed, modes=mat)


# -- homogenisation ------------------------------------------------------------------------

def _weak_errors(family: TestFamily, diff, ref) -> float:
    m = family.space.mass
    pair = family.vectors.T @ (m * diff)
    scale = family.space.norm(ref)
    return float(np.max(np.abs(pair)) / scale) if scale > 0 else float(np.max(np.abs(pair)))


def run_homogenisation(config: ScenarioConfig, keep_fields: bool = False,
                       complex_: GridComplex | None = None) -> ScenarioReport:
    cx = build_complex(fixture(config.domain)) if complex_ is None else complex_
    member, eps_lim, _ = family_members(cx, config)
    data = scenario_data(cx, config)
    family = field_test_family(cx, config.n_modes, config.n_random, config.family_seed)
    lim = solve_electrostatics(eps_lim, data)
    E = lim.field
    flux = eps_lim.apply(E)
    energy_lim = float(np.real(cx.H.inner(flux, E)))
    lim_maps = FieldSchurMaps(eps_lim, config.split)
    lim_pairs = lim_maps.pairings(family)

    def one(n):
        eps = member(n)
        res = solve_electrostatics(eps, data)
        En = res.field
        fn = eps.apply(En)
        energy = float(np.real(cx.H.inner(fn, En)))
        maps = FieldSchurMaps(eps, config.split)
        w = family.weights
        d = float(np.sum(np.outer(w, w)[None] * np.abs(maps.pairings(family) - lim_pairs)))
        row = {
            "n": n,
            "d_schur": d,
            "energy": energy,
            "energy_gap": abs(energy - energy_lim) / abs(energy_lim) if energy_lim else abs(energy),
            "e_weak_max": _weak_errors(family, En - E, E),
            "flux_weak_max": _weak_errors(family, fn - flux, flux),
            "res_div": res.residuals["div"],
            "res_curl": res.residuals["curl"],
            "res_harm": res.residuals["harm"],
        }
        return row, (En, fn, eps)

    out = _map(one, config.indices)
    rows = [r for r, _ in out]
    report = ScenarioReport(rows, {}, {
        "scenario": config.name, "domain": config.domain, "family": config.family,
        "split": config.split, "limit_energy": energy_lim,
        "energy_gap": "relative to the limit energy",
        "weak errors": "max over the test family, relative to the limit field norm",
        "tolerances": f"energy_tol={config.energy_tol} flux_tol={config.flux_tol} (artifact-chosen)",
    })
    report.verdicts = homogenisation_verdicts(report, config)
    if keep_fields:
        report.fields_n = {"limit": (E, flux, eps_lim), **{r["n"]: f for r, f in out}}
    return report


def homogenisation_verdicts(report: ScenarioReport, config: ScenarioConfig) -> dict:
    # the trend test covers the energy gap and the Schur distance; weak-pairing maxima
    # over a finite family are not monotone at fixed resolution and are checked at the end
    gaps_ok = all(non_increasing_tail(report.column(c)) for c in TRACKED_GAPS)
    final_ok = report.rows[-1]["energy_gap"] <= config.energy_tol
    flux_ok = report.rows[-1]["flux_weak_max"] <= config.flux_tol
    res_ok = max(max(r["res_div"], r["res_curl"], r["res_harm"]) for r in report.rows) <= 1e-9
    return {
        "trend": "PASS" if gaps_ok else "FAIL",
        "final_energy_gap": "PASS" if final_ok else "FAIL",
        "final_flux_weak": "PASS" if flux_ok else "FAIL",
        "residuals": "PASS" if res_ok else "FAIL",
    }


# -- div-curl ----------------------------------------------------------------------------------

def divcurl_check(cx: GridComplex, r_seq, q_seq, r_lim, q_lim, hypothesis_tol: float = 0.05,
                  indices=None, gap_tol: float = 0.1) -> ScenarioReport:
    """Pairings <r_n, q_n> against <r, q> with H^-1 surrogates of the hypotheses."""
    if len(r_seq) != len(q_seq):
        raise DataError("sequences r_n and q_n must have equal length")
    if not r_seq:
        raise DataError("empty sequences")
    indices = list(range(1, len(r_seq) + 1)) if indices is None else list(indices)
    G, C = cx.G.matrix, cx.Ccirc.matrix
    lim_pair = float(np.real(cx.H.inner(r_lim, q_lim)))
    div_r = [G.T @ r for r in r_seq]
    curl_q = [C @ q for q in q_seq]
    rows = []
    for n, r, q, dr, cq in zip(indices, r_seq, q_seq, div_r, curl_q):
        pair = float(np.real(cx.H.inner(r, q)))
        rows.append({
            "n": n, "pairing": pair,
            "gap": abs(pair - lim_pair) / abs(lim_pair) if lim_pair else abs(pair),
            "div_hminus": hminus_norm(cx, dr), "curl_hminus": hminus_curl_norm(cx, cq),
            "div_l2": cx.X0.norm(dr),
        })
    spread_div = _cauchy_spread([hminus_norm(cx, dr - div_r[-1]) for dr in div_r[-3:]],
                                max(r["div_hminus"] for r in rows))
    spread_curl = _cauchy_spread([hminus_curl_norm(cx, cq - curl_q[-1]) for cq in curl_q[-3:]],
                                 max(r["curl_hminus"] for r in rows))
    applicable = spread_div <= hypothesis_tol and spread_curl <= hypothesis_tol
    report = ScenarioReport(rows, {}, {"limit_pairing": lim_pair, "spread_div_hminus": spread_div,
                                       "spread_curl_hminus": spread_curl,
                                       "hypothesis_tol": hypothesis_tol})
    if not applicable:
        report.verdicts = {"divcurl": "NOT-APPLICABLE"}
    else:
        gaps = report.column("gap")
        ok = non_increasing_tail(gaps) and gaps[-1] <= gap_tol
        report.verdicts = {"divcurl": "PASS" if ok else "FAIL"}
    return report


def _cauchy_spread(dists, scale) -> float:
    return float(max(dists) / scale) if scale > 0 else 0.0


def divcurl_from_config(config: ScenarioConfig) -> ScenarioReport:
    rep = run_homogenisation(config, keep_fields=True)
    E, flux, _ = rep.fields_n["limit"]
    cx = rep.fields_n[config.indices[0]][2].complex
    r_seq = [rep.fields_n[n][1] for n in config.indices]
    q_seq = [rep.fields_n[n][0] for n in config.indices]
    return divcurl_check(cx, r_seq, q_seq, flux, E, config.hypothesis_tol, config.indices, config.energy_tol)


def adversarial_divcurl(cx: GridComplex, indices=(2, 3, 4, 6), hypothesis_tol: float = 0.05) -> ScenarioReport:
    """r_n = q_n = normalized gradient of a high-frequency node mode (weak limit 0)."""
    nx, ny, nz = cx.domain.shape
    pts = _node_points(cx)
    length = np.array(cx.domain.shape, dtype=float) * cx.h
    seq = []
    for n in indices:
        k = 2 * n
        phi = np.sin(np.pi * k * pts[:, 0] / length[0]) * np.sin(np.pi * pts[:, 1] / length[1]) * \
            np.sin(np.pi * pts[:, 2] / length[2])
        e = cx.G.matrix @ phi
        seq.append(e / cx.H.norm(e))
    zero = np.zeros(cx.H.dim)
    return divcurl_check(cx, seq, seq, zero, zero, hypothesis_tol, indices)


# -- compactness ----------------------------------------------------------------------------------

def compactness_demo(config: ScenarioConfig) -> ScenarioReport:
    """Distances |E_n - E| with the coercivity sandwich and a weak-operator hypothesis surrogate.

    Strong convergence needs eps_n -> eps in the weak operator topology as well as
    in the Schur topology.  The surrogate is the largest pairing
    |<t_j, (eps_n - eps) t_k>| over the test family, relative to the largest
    pairing of eps.  When its final value exceeds ``hypothesis_tol`` the distance
    trend is reported as NOT-APPLICABLE instead of PASS/FAIL.
    """
    cx = build_complex(fixture(config.domain))
    member, eps_lim, c = family_members(cx, config)
    data = scenario_data(cx, config)
    E = solve_electrostatics(eps_lim, data).field
    family = field_test_family(cx, config.n_modes, config.n_random, config.family_seed)
    T = family.vectors
    TM = (T * cx.H.mass[:, None]).T
    lim_pair = TM @ eps_lim.apply(T)
    lim_scale = float(np.max(np.abs(lim_pair)))

    def one(n):
        eps = member(n)
        En = solve_electrostatics(eps, data).field
        diff = En - E
        lhs = c * float(np.real(cx.H.inner(diff, diff)))
        rhs = float(np.real(cx.H.inner(diff, eps.apply(diff))))
        slack = 1e-10 * max(abs(rhs), cx.H.norm(E) ** 2)
        wot = float(np.max(np.abs(TM @ eps.apply(T) - lim_pair))) / lim_scale
        return {"n": n, "dist": cx.H.norm(diff), "rel_dist": cx.H.norm(diff) / cx.H.norm(E),
                "sandwich_lhs": lhs, "sandwich_rhs": rhs, "sandwich_ok": bool(lhs <= rhs + slack),
                "wot_gap": wot}

    rows = _map(one, config.indices)
    report = ScenarioReport(rows, {}, {"family": config.family, "coercivity_c": c,
                                       "sandwich": "c |E_n - E|^2 <= Re <E_n - E, eps_n (E_n - E)>",
                                       "hypothesis_tol": config.hypothesis_tol})
    applicable = rows[-1]["wot_gap"] <= config.hypothesis_tol
    if applicable:
        trend = "PASS" if non_increasing_tail(report.column("dist")) else "FAIL"
    else:
        trend = "NOT-APPLICABLE"
        report.notes["hypotheses"] = "eps_n does not approach eps weakly; no strong convergence is claimed"
    report.verdicts = {
        "distance_trend": trend,
        "sandwich": "PASS" if all(r["sandwich_ok"] for r in rows) else "FAIL",
    }
    return report


# -- incomparability ------------------------------------------------------------------------------

def _oscillating(values, n_dim: int, m: int) -> np.ndarray:
    """Two-valued vector alternating on blocks of size n_dim / 2^(m+1)."""
    block = max(n_dim >> (m + 1), 1)
    idx = (np.arange(n_dim) // block) % 2
    return np.where(idx == 0, values[0], values[1])


def interleaved_diagonal(config: ScenarioConfig, n: int) -> np.ndarray:
    """Diagonal of b_n: f-type entries (inverse mean alpha) for even n, g-type (beta) for odd n."""
    N = config.block_dim
    if config.family == "constant":
        return np.ones(N)
    if n % 2 == 0:
        mean_inv = config.alpha
        m = n // 2
    else:
        mean_inv = config.beta
        m = (n - 1) // 2
    # values 1 +- s have mean 1 and inverse mean 1 / (1 - s^2)
    s = np.sqrt(max(0.0, 1.0 - 1.0 / mean_inv))
    return _oscillating((1 + s, 1 - s), N, m)


def incomparable_demo(config: ScenarioConfig) -> ScenarioReport:
    d0, N, d2 = config.outer_dim, config.block_dim, config.outer_dim
    dim = d0 + N + d2
    modes_l1 = np.zeros((dim, config.n_modes))
    idx = (np.arange(N) + 0.5) / N
    for k in range(config.n_modes):
        modes_l1[d0:d0 + N, k] = np.cos(np.pi * k * idx)
    space = HilbertSpace(dim)
    family = default_test_family(space, n_modes=0, n_random=config.n_random, seed=config.family_seed,
                                 modes=modes_l1)
    tau0 = BlockSplit.from_dims(d0, N + d2)
    tau1 = BlockSplit.from_dims(d0 + N, d2)
    limit = np.eye(dim)

    def c_matrix(n):
        diag = np.ones(dim)
        diag[d0:d0 + N] = interleaved_diagonal(config, n)
        return np.diag(diag)

    lim0 = schur_data(BlockOperator.from_operator(limit, tau0))
    lim1 = schur_data(BlockOperator.from_operator(limit, tau1))

    def one(n):
        c = c_matrix(n)
        c_inv = block_inverse(BlockOperator.from_operator(c, tau0)).dense()
        return {
            "n": n,
            "parity": "even" if n % 2 == 0 else "odd",
            "tau0": schur_distance(BlockOperator.from_operator(c, tau0), lim0, family),
            "tau1": schur_distance(BlockOperator.from_operator(c, tau1), lim1, family),
            "tau0_inv": schur_distance(BlockOperator.from_operator(c_inv, tau0), lim0, family),
            "tau1_inv": schur_distance(BlockOperator.from_operator(c_inv, tau1), lim1, family),
        }

    rows = _map(one, config.indices)
    report = ScenarioReport(rows, {}, {"alpha": config.alpha, "beta": config.beta,
                                       "block_dims": (d0, N, d2)})

    def cluster_gap(col):
        tail = rows[-4:] if len(rows) >= 4 else rows
        ev = [r[col] for r in tail if r["parity"] == "even"]
        od = [r[col] for r in tail if r["parity"] == "odd"]
        if not ev or not od:
            return 0.0
        return abs(float(np.mean(od)) - float(np.mean(ev)))

    g1, g0i = cluster_gap("tau1"), cluster_gap("tau0_inv")
    report.notes["tau1_cluster_gap"] = g1
    report.notes["tau0_inv_cluster_gap"] = g0i
    final = rows[-1]
    constant = config.family == "constant"
    if constant:
        ok_c = all(r["tau0"] <= config.distance_tol and r["tau1"] <= config.distance_tol for r in rows)
        ok_inv = all(r["tau0_inv"] <= config.distance_tol and r["tau1_inv"] <= config.distance_tol
                     for r in rows)
    else:
        ok_c = final["tau0"] <= config.distance_tol and g1 >= config.cluster_gap
        ok_inv = final["tau1_inv"] <= config.distance_tol and g0i >= config.cluster_gap
    report.verdicts = {"c_n": "PASS" if ok_c else "FAIL", "c_n_inverse": "PASS" if ok_inv else "FAIL"}
    return report


INCOMPARABLE_COLUMNS = ("n", "parity", "tau0", "tau1", "tau0_inv", "tau1_inv")
COMPACTNESS_COLUMNS = ("n", "dist", "rel_dist", "sandwich_lhs", "sandwich_rhs", "sandwich_ok", "wot_gap")
DIVCURL_COLUMNS = ("n", "pairing", "gap", "div_hminus", "curl_hminus", "div_l2")


# -- effective tensor reference ------------------------------------------------------------------

def effective_tensor_reference(a_minus: float, a_plus: float, n: int = 8, N: int = 48,
                               fraction: float = 0.5, rtol: float = 1e-10) -> np.ndarray:
    """Diagonal effective tensor of the laminate from fine-grid cell problems.

    For direction i the potential equals x_i on the two faces normal to e_i and
    satisfies natural conditions on the other faces; a_eff_ii is the energy
    per unit volume.  The solve uses all grid nodes of a solid N^3 cube
    (spacing 1/N) and a sparse direct solve.
    """
    h = 1.0 / N
    x = np.arange(N + 1) * h
    theta = laminate_fraction(x[:-1], x[1:], n, 1.0, fraction)
    harm = 1.0 / (theta / a_minus + (1 - theta) / a_plus)
    arith = theta * a_minus + (1 - theta) * a_plus
    dx = sp.diags([-np.ones(N), np.ones(N)], [0, 1], shape=(N, N + 1), format="csr")
    eye_n = sp.identity(N + 1, format="csr")
    # an edge carries a quarter of each incident voxel value (its share of the dual face),
    # so boundary edges see one or two voxels with the matching weight
    half = sp.diags([np.full(N, 0.5), np.full(N, 0.5)], [0, -1], shape=(N + 1, N), format="csr")
    side = half @ np.ones(N)
    node_arith = half @ arith
    grads = [sp.kron(eye_n, sp.kron(eye_n, dx)),
             sp.kron(eye_n, sp.kron(dx, eye_n)),
             sp.kron(dx, sp.kron(eye_n, eye_n))]
    # edge blocks in Fortran ordering: kron(z, y, x)
    coef = [np.kron(side, np.kron(side, harm)),
            np.kron(side, np.kron(np.ones(N), node_arith)),
            np.kron(np.ones(N), np.kron(side, node_arith))]
    G = sp.vstack(grads, format="csr") / h
    a = np.concatenate(coef)
    A = (G.T @ sp.diags(a) @ G).tocsr()
    coords = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)
    coords = coords.transpose(2, 1, 0, 3).reshape(-1, 3)  # x fastest
    out = np.zeros(3)
    for i in range(3):
        fixed = np.isclose(coords[:, i], 0.0) | np.isclose(coords[:, i], 1.0)
        free = ~fixed
        u = np.zeros(coords.shape[0])
        u[fixed] = coords[fixed, i]
        A_ff = A[free][:, free]
        rhs = -(A[free][:, fixed] @ u[fixed])
        sol = spla.splu(A_ff.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(rhs)
        if np.linalg.norm(A_ff @ sol - rhs) > rtol * np.linalg.norm(rhs):
            raise StructuralError("reference cell problem residual above tolerance")
        u[free] = sol
        gu = G @ u
        out[i] = float(np.sum(a * gu * gu) * h ** 3)
    return out
