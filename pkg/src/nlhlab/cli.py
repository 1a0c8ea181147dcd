"""Command-line entry point: ``nlhlab <subcommand> ...``; all reports are CSV on stdout."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import lab
from .block_schur import schur_identity_suite, three_block_suite
from .coefficients import (admissibility_check, convolution_coefficient, custom_coefficient,
                           engineered_rotation, gaussian_kernel, identity_coefficient, layered_tensor,
                           multiplication_coefficient, random_coercive_coefficient, table_kernel)
from .derham import build_complex, harmonic_dirichlet
from .electrostatics import ElectrostaticData, solve_electrostatics
from .errors import DataError, NlhError
from .textio import (kernel_table_from_dict, load_domain, tensor_field_from_dict, vector_from_dict)

COEFFICIENT_HELP = (
    "identity | layered A_MINUS A_PLUS N | convolution ELL1 N | random ALPHA SEED | "
    "rotation SEED | path.json (tensor field or kernel table)"
)
DATA_HELP = "smooth SEED_F SEED_G SEED_X | zero | path.json with f, g, x"


def coefficient_from_spec(cx, spec: str):
    if spec.endswith(".json"):
        with open(spec, encoding="utf-8") as fh:
            doc = json.load(fh)
        if "tensors" in doc:
            return multiplication_coefficient(cx, tensor_field_from_dict(doc, cx.domain.shape),
                                              doc.get("alpha"), {"source": spec})
        if "offsets" in doc:
            kernel = table_kernel(kernel_table_from_dict(doc), cx.h)
            return convolution_coefficient(cx, kernel, int(doc.get("n", 1)))
        if "matrix" in doc:
            return custom_coefficient(cx, np.asarray(doc["matrix"], dtype=float), params={"source": spec})
        raise DataError(f"{spec}: expected 'tensors', 'offsets' or 'matrix'")
    parts = spec.split()
    if not parts:
        raise DataError("empty coefficient specification")
    kind, args = parts[0], parts[1:]
    try:
        if kind == "identity" and not args:
            return identity_coefficient(cx)
        if kind == "layered" and len(args) == 3:
            a_minus, a_plus, n = float(args[0]), float(args[1]), int(args[2])
            return multiplication_coefficient(cx, layered_tensor(cx, a_minus, a_plus, n),
                                              min(a_minus, a_plus), {"family": "layered", "n": n})
        if kind == "convolution" and len(args) == 2:
            return convolution_coefficient(cx, gaussian_kernel(cx.h, float(args[0])), int(args[1]))
        if kind == "random" and len(args) == 2:
            return random_coercive_coefficient(cx, float(args[0]), int(args[1]))
        if kind == "rotation" and len(args) == 1:
            return engineered_rotation(cx, int(args[0]))
    except ValueError as exc:
        raise DataError(f"bad coefficient arguments in {spec!r}: {exc}") from exc
    raise DataError(f"unknown coefficient specification {spec!r}; expected {COEFFICIENT_HELP}")


def data_from_spec(cx, spec: str, formulation: str) -> ElectrostaticData:
    if spec.endswith(".json"):
        with open(spec, encoding="utf-8") as fh:
            doc = json.load(fh)
        f = vector_from_dict(doc["f"], cx.X0.dim)
        g = vector_from_dict(doc["g"], cx.Ccirc.codomain.dim)
        x = vector_from_dict(doc["x"], cx.H.dim)
        return ElectrostaticData(f, g, x, formulation)
    parts = spec.split()
    if parts == ["zero"]:
        return ElectrostaticData(np.zeros(cx.X0.dim), np.zeros(cx.Ccirc.codomain.dim), np.zeros(cx.H.dim),
                                 formulation)
    if len(parts) == 4 and parts[0] == "smooth":
        cfg = lab.ScenarioConfig(seed_f=int(parts[1]), seed_g=int(parts[2]), seed_x=int(parts[3]))
        data = lab.scenario_data(cx, cfg)
        return ElectrostaticData(data.f, data.g, data.x, formulation)
    raise DataError(f"unknown data specification {spec!r}; expected {DATA_HELP}")


def _write_rows(out, rows, columns):
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([lab._fmt(row[c]) for c in columns])


def _finish(text: str, verdicts: dict, output: str | None) -> int:
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if all(v == "PASS" for v in verdicts.values()) else 1


def _verdict_footer(verdicts: dict) -> str:
    return "".join(f"# verdict {k}: {v}\n" for k, v in verdicts.items())


def cmd_complex_info(args) -> int:
    cx = build_complex(load_domain(args.domain))
    hd = harmonic_dirichlet(cx)
    counts = cx.counts()
    G, C = cx.G.matrix, cx.Ccirc.matrix
    exact = (C @ G).count_nonzero() == 0
    rows = [{"key": k, "value": v} for k, v in counts.items()]
    rows += [{"key": "voxels", "value": int(cx.domain.mask.sum())},
             {"key": "components", "value": cx.domain.component_count()},
             {"key": "cavities", "value": cx.cavity_count()},
             {"key": "handles", "value": cx.handle_count()},
             {"key": "dim_HD", "value": hd.dim},
             {"key": "curl_grad_nonzeros", "value": int((C @ G).count_nonzero())}]
    verdicts = {"exactness": "PASS" if exact else "FAIL",
                "dim_HD_matches_cavities": "PASS" if hd.dim == cx.cavity_count() else "FAIL"}
    buf = io.StringIO()
    _write_rows(buf, rows, ("key", "value"))
    return _finish(buf.getvalue() + _verdict_footer(verdicts), verdicts, args.output)


def cmd_admissibility(args) -> int:
    cx = build_complex(load_domain(args.domain))
    eps = coefficient_from_spec(cx, args.coefficient)
    rep = admissibility_check(eps)
    names = ("a1", "a2", "a3")
    oks = (rep.a1_ok, rep.a2_ok, rep.a3_ok)
    rows = [{"condition": n, "ok": ok, "cond": c} for n, ok, c in zip(names, oks, rep.conds)]
    buf = io.StringIO()
    _write_rows(buf, rows, ("condition", "ok", "cond"))
    buf.write(f"# alpha: {lab._fmt(rep.alpha)}\n# beta: {lab._fmt(rep.beta)}\n# method: {rep.method}\n")
    verdicts = {"admissible": "PASS" if rep.admissible else "FAIL"}
    return _finish(buf.getvalue() + _verdict_footer(verdicts), verdicts, args.output)


def cmd_solve(args) -> int:
    cx = build_complex(load_domain(args.domain))
    eps = coefficient_from_spec(cx, args.coefficient)
    data = data_from_spec(cx, args.data, args.formulation)
    res = solve_electrostatics(eps, data)
    buf = io.StringIO()
    rows = [{"quantity": k, "value": v} for k, v in res.residuals.items()]
    rows.append({"quantity": "field_norm", "value": cx.H.norm(res.field)})
    _write_rows(buf, rows, ("quantity", "value"))
    if args.field_out:
        with open(args.field_out, "w", encoding="utf-8", newline="") as fh:
            mids = cx.edge_midpoints()
            dirs = cx.edge_directions()
            _write_rows(fh, [{"edge": i, "direction": int(d), "x": m[0], "y": m[1], "z": m[2], "value": v}
                             for i, (d, m, v) in enumerate(zip(dirs, mids, res.field))],
                        ("edge", "direction", "x", "y", "z", "value"))
    ok = max(v for k, v in res.residuals.items()) <= args.tol
    verdicts = {"residuals": "PASS" if ok else "FAIL"}
    return _finish(buf.getvalue() + _verdict_footer(verdicts), verdicts, args.output)


def _config(args) -> lab.ScenarioConfig:
    cfg = lab.ScenarioConfig.from_file(args.config)
    if getattr(args, "split", None):
        cfg = cfg.with_split(args.split)
    return cfg


def cmd_homogenise(args) -> int:
    cfg = _config(args)
    rep = lab.run_homogenisation(cfg)
    return _finish(rep.to_csv(), rep.verdicts, args.output or cfg.output)


def cmd_divcurl(args) -> int:
    cfg = _config(args)
    rep = lab.divcurl_from_config(cfg)
    return _finish(rep.to_csv(lab.DIVCURL_COLUMNS), rep.verdicts, args.output or cfg.output)


def cmd_compactness(args) -> int:
    cfg = _config(args)
    rep = lab.compactness_demo(cfg)
    return _finish(rep.to_csv(lab.COMPACTNESS_COLUMNS), rep.verdicts, args.output or cfg.output)


def cmd_incomparable(args) -> int:
    cfg = _config(args)
    rep = lab.incomparable_demo(cfg)
    return _finish(rep.to_csv(lab.INCOMPARABLE_COLUMNS), rep.verdicts, args.output or cfg.output)


def cmd_schur_identities(args) -> int:
    rows = schur_identity_suite(args.seed, args.count)
    three = three_block_suite(args.seed, args.three_count)
    buf = io.StringIO()
    _write_rows(buf, rows, ("instance", "dim", "d0", "factorization", "inverse", "duality"))
    worst = {k: max(r[k] for r in rows) for k in ("factorization", "inverse", "duality")}
    worst3 = max(r["max_residual"] for r in three) if three else 0.0
    for k, v in worst.items():
        buf.write(f"# max {k}: {lab._fmt(v)}\n")
    buf.write(f"# max three_block: {lab._fmt(worst3)}\n")
    verdicts = {
        "factorization": "PASS" if worst["factorization"] <= 1e-10 else "FAIL",
        "inverse": "PASS" if worst["inverse"] <= 1e-10 else "FAIL",
        "duality": "PASS" if worst["duality"] <= 1e-9 else "FAIL",
        "three_block": "PASS" if worst3 <= 1e-9 else "FAIL",
    }
    return _finish(buf.getvalue() + _verdict_footer(verdicts), verdicts, args.output)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlhlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("-o", "--output", help="write the CSV here instead of stdout")
        sp.set_defaults(func=fn)
        return sp

    sp = add("complex-info", cmd_complex_info, "counts, topology and exactness of a voxel complex")
    sp.add_argument("domain", help="fixture name (e.g. 'cavity-cube 15 5') or domain JSON")
    sp = add("admissibility", cmd_admissibility, "check conditions (a1)-(a3) for a coefficient")
    sp.add_argument("domain")
    sp.add_argument("coefficient", help=COEFFICIENT_HELP)
    sp = add("solve", cmd_solve, "solve the electrostatics problem and report residuals")
    sp.add_argument("domain")
    sp.add_argument("coefficient", help=COEFFICIENT_HELP)
    sp.add_argument("data", help=DATA_HELP)
    sp.add_argument("--formulation", default="piD-normalized", choices=("P", "P-dual", "piD-normalized"))
    sp.add_argument("--field-out", help="CSV file for the solution field")
    sp.add_argument("--tol", type=float, default=1e-9)
    for name, fn, help_ in (("homogenise", cmd_homogenise, "homogenisation trend scenario"),
                            ("divcurl", cmd_divcurl, "div-curl pairing scenario"),
                            ("compactness", cmd_compactness, "strong convergence scenario"),
                            ("incomparable", cmd_incomparable, "incomparable split topologies")):
        sp = add(name, fn, help_)
        sp.add_argument("config", help="key = value scenario file")
        if name in ("homogenise", "divcurl"):
            sp.add_argument("--split", choices=("grad", "curl"), help="override the config split")
    sp = add("schur-identities", cmd_schur_identities, "random block-operator identity suites")
    sp.add_argument("seed", type=int)
    sp.add_argument("--count", type=int, default=200)
    sp.add_argument("--three-count", type=int, default=50)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NlhError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
