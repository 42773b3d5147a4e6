"""Command-line entry point ``junction-asym``."""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import composite as comp
from . import cross_section as cs
from . import experiments as ex
from . import matching as mt
from .experiments import Workbench, write_csv
from .reference_axisym import solve_reference

def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _wb(args) -> Workbench:
    if not args.config:
        raise SystemExit("--config is required for this subcommand")
    return Workbench.from_file(args.config)


def _hs(args, wb: Workbench) -> list:
    return [float(h) for h in args.h] if getattr(args, "h", None) else wb.h_list


def cmd_green(args) -> int:
    wb = _wb(args)
    out = _out(args)
    bc = args.lateral_bc or wb.cfg.plate.lateral_bc
    pd = wb.plate(bc, args.mesh_size)
    pd.green.to_csv(out / "green_matrix.csv")
    for j, part in enumerate(pd.green.regular_parts):
        part.to_csv(out / f"green_regular_{j + 1}.csv")
    print(f"G = {np.array2string(pd.green.Gmatrix, precision=8)}")
    print(f"symmetry defect {pd.green.symmetry_defect():.3e}; vertices {pd.mesh.n_vertices}")
    return 0


def cmd_capacity(args) -> int:
    wb = _wb(args)
    rows = []
    n = wb.numerics
    for j, sec in enumerate(wb.cfg.rods):
        pot = cs.log_potential(sec)
        row = {"rod": j + 1, "kind": sec.kind, "c_log": pot.c_log,
               "flux": cs.flux_identity_check(pot), "area": sec.area()}
        text = f"rod {j + 1}: c_log = {pot.c_log:.10g}, flux = {row['flux']:.10g}"
        if sec.is_disk and not args.skip_q:
            lay = cs.junction_constant_q(sec, truncation=n.layer_truncation, level=n.layer_level)
            rep = lay.truncation_report
            row.update({"q": lay.q, "q_half_truncation": rep["q_half_truncation"],
                        "truncation_indicator": rep["indicator"], "R_trunc": rep["R"], "Z_trunc": rep["Z"]})
            text += f", q = {lay.q:.8g} (indicator {rep['indicator']:.2e})"
        rows.append(row)
        print(text)
    write_csv(_out(args) / "capacity.csv", rows, wb.provenance())
    return 0


def cmd_match(args) -> int:
    wb = _wb(args)
    alpha = wb.cfg.alpha if args.alpha is None else args.alpha
    bc = wb.cfg.plate.lateral_bc
    rows = []
    for h in _hs(args, wb):
        try:
            co = wb.coefficients(h, alpha, bc)
        except mt.NotPositiveDefinite as err:
            print(f"h = {h:g}: {err}", file=sys.stderr)
            rows.append({"h": h, "regime": "alpha1", "h0": err.h0, "error": str(err)})
            continue
        if co is None:
            rows.append({"h": h, "regime": "alpha0_dirichlet_lateral", "note": "no matching coefficients"})
            continue
        row = {"h": h, "regime": co.regime, "A0": co.A0 if co.A0 is not None else ""}
        row.update({f"A{j + 1}": a for j, a in enumerate(co.A)})
        row.update({"m": co.m if co.m is not None else "", "a0": co.a0 if co.a0 is not None else "",
                    "h0": co.h0 if co.h0 is not None else ""})
        if co.notes:
            row["note"] = "; ".join(co.notes)
        rows.append(row)
        print(", ".join(f"{k}={v:.8g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    write_csv(_out(args) / "match.csv", rows, wb.provenance())
    return 0


def _probe_points(wb: Workbench, h: float, n: int):
    cfg = wb.cfg
    plate = cfg.plate
    if plate.is_disk:
        lo, hi = np.array([-plate.radius] * 2), np.array([plate.radius] * 2)
    else:
        v = np.asarray(plate.vertices, float)
        lo, hi = v.min(axis=0), v.max(axis=0)
    g = np.stack(np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n)), -1).reshape(-1, 2)
    inside = plate.contains(g)
    for j, P in enumerate(plate.anchor_array):
        inside &= ~cfg.rods[j].contains((g - P) / h)
    y = g[inside]
    pts = [(np.column_stack([y, np.full(len(y), 0.5 * h)]), "plate")]
    for j, (P, sec) in enumerate(zip(plate.anchor_array, cfg.rods)):
        z = np.linspace(0.0, sec.length, n)
        pts.append((np.column_stack([np.tile(P, (n, 1)), z]), f"rod{j + 1}"))
    return pts


def cmd_asym(args) -> int:
    wb = _wb(args)
    h = args.h[0] if args.h else wb.cfg.h
    alpha = wb.cfg.alpha if args.alpha is None else args.alpha
    sol = wb.asymptotic(h, alpha, wb.cfg.plate.lateral_bc)
    rows = []
    for k, (x, tag) in enumerate(_probe_points(wb, h, args.n)):
        vals = sol.plate_value(x) if tag == "plate" else sol.rod_values[k - 1](x)
        rows += [{"x": p[0], "y": p[1], "z": p[2], "value": v, "part": tag} for p, v in zip(x, vals)]
    write_csv(_out(args) / "asym.csv", rows, wb.provenance(), sol.notes)
    print(f"{len(rows)} probe values written; regime {sol.regime}, h = {h:g}")
    return 0


def cmd_reference(args) -> int:
    h = args.h[0] if args.h else 0.05
    sol = solve_reference(args.a, h, args.R_plate, args.l, args.gamma, args.alpha,
                          f0=args.f0, f1=args.f1, level=args.mesh_level, lateral_bc=args.lateral_bc)
    out = _out(args)
    sol.to_csv(out / "reference.csv")
    print(f"energy {sol.energy:.10g}  dofs {sol.n_dof}  seconds {sol.seconds:.2f}  residual {sol.residual:.2e}")
    return 0


def cmd_errors(args) -> int:
    wb = _wb(args)
    alpha = wb.cfg.alpha if args.alpha is None else args.alpha
    bc = wb.cfg.plate.lateral_bc
    rows = []
    for h in _hs(args, wb):
        ref = wb.reference(h, alpha, bc)
        er = comp.error_norms(wb.asymptotic(h, alpha, bc), ref, quad=wb.quadrature(ref))
        rows.append(er.as_dict())
        print(", ".join(f"{k}={v:.6g}" for k, v in er.as_dict().items()))
    write_csv(_out(args) / f"errors_alpha{alpha}.csv", rows, wb.provenance())
    return 0


def _report(reports) -> int:
    for r in reports:
        print(r.summary())
    ok = all(r.passed for r in reports)
    print(f"{sum(r.passed for r in reports)}/{len(reports)} experiments passed")
    return 0 if ok else 1


def cmd_converge(args) -> int:
    wb = _wb(args)
    names = args.experiment or list(ex.CONVERGENCE)
    return _report(ex.run_many(wb, names, _out(args)))


def cmd_all(args) -> int:
    wb = _wb(args)
    return _report(ex.run_many(wb, list(ex.EXPERIMENTS), _out(args)))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="junction-asym",
                                description="Asymptotics of the plate + rods Poisson junction.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, h=True):
        sp.add_argument("--config", help="TOML or JSON configuration")
        sp.add_argument("--out", default="results", help="output directory")
        if h:
            sp.add_argument("--h", type=float, nargs="+", help="override the h sweep")

    sp = sub.add_parser("green", help="Green matrix and regular parts")
    common(sp, h=False)
    sp.add_argument("--mesh-size", type=float, default=None)
    sp.add_argument("--lateral-bc", choices=("neumann", "dirichlet"))
    sp.set_defaults(func=cmd_green)

    sp = sub.add_parser("capacity", help="logarithmic capacity of each rod section")
    common(sp, h=False)
    sp.add_argument("--skip-q", action="store_true", help="do not compute the junction constant")
    sp.set_defaults(func=cmd_capacity)

    sp = sub.add_parser("match", help="matching coefficients along the h sweep")
    common(sp)
    sp.add_argument("--alpha", type=int, choices=(0, 1))
    sp.set_defaults(func=cmd_match)

    sp = sub.add_parser("asym", help="sample the composite approximation on a probe grid")
    common(sp)
    sp.add_argument("--alpha", type=int, choices=(0, 1))
    sp.add_argument("--n", type=int, default=41, help="probes per direction")
    sp.set_defaults(func=cmd_asym)

    sp = sub.add_parser("reference", help="axisymmetric finite-element solve of the full problem")
    common(sp)
    sp.add_argument("--alpha", type=int, choices=(0, 1), default=1)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--a", type=float, default=1.0, help="rod radius in units of h")
    sp.add_argument("--l", type=float, default=1.0, help="rod length")
    sp.add_argument("--R-plate", dest="R_plate", type=float, default=1.0)
    sp.add_argument("--mesh-level", type=int, default=3)
    sp.add_argument("--f0", type=float, default=1.0, help="constant plate source")
    sp.add_argument("--f1", type=float, default=0.0, help="constant rod source")
    sp.add_argument("--lateral-bc", choices=("neumann", "dirichlet"), default="neumann")
    sp.set_defaults(func=cmd_reference)

    sp = sub.add_parser("errors", help="error norms against the reference solve")
    common(sp)
    sp.add_argument("--alpha", type=int, choices=(0, 1))
    sp.set_defaults(func=cmd_errors)

    sp = sub.add_parser("converge", help="convergence experiments with pass/fail targets")
    common(sp, h=False)
    sp.add_argument("--experiment", nargs="+", choices=sorted(ex.EXPERIMENTS))
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("all", help="every acceptance experiment")
    common(sp, h=False)
    sp.set_defaults(func=cmd_all)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", UserWarning)
    try:
        return args.func(args)
    except (ValueError, KeyError, RuntimeError, mt.NotPositiveDefinite) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
