"""``honeystrain`` command-line front end.

Every command reads one JSON config (``--config``), writes its artifacts plus a
``manifest.json`` into ``--out`` and exits with 0 (success), 2 (config error),
3 (numerical failure) or 4 (acceptance gate failed).
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import config_hash, load_config
from .exceptions import ConfigError, HigherDegeneracy, HoneystrainError, NoDegeneracyFound

log = logging.getLogger("honeystrain")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_GATE = 0, 2, 3, 4


class GateFailure(Exception):
    pass


def _medium(cfg):
    from .lattice import build_lattice
    from .media import FourierMedium, make_modulated_medium

    m = cfg["medium"]
    if m["file"]:
        return FourierMedium.from_json(m["file"])
    lat = build_lattice(m["scale"])
    return make_modulated_medium(lat, m["V0"], m["a_iso"], m["a_aniso"], m["offset"])


def _grid(g):
    from .grid import PeriodicGrid

    return PeriodicGrid(float(g["L1"]), float(g["L2"]), int(g["N1"]), int(g["N2"]))


def _dirac(medium, cfg):
    from .dirac_point import analyze_dirac_point

    s = cfg["solver"]
    return analyze_dirac_point(medium, M=s["M"], deg_tol=s["deg_tol"], struct_tol=s["struct_tol"],
                               vel_tol=s["vel_tol"], origin_search=s["origin_search"])


# -- commands ------------------------------------------------------------------------


def cmd_bands(cfg, out):
    from .bloch import band_path, high_symmetry_points
    from .dirac_point import locate_dirac_point

    medium = _medium(cfg)
    s = cfg["solver"]
    hs = high_symmetry_points(medium.lattice)
    table = band_path(medium, [hs["G"], hs["K"], hs["M"], hs["G"]], s["path_points"],
                      s["nbands"], s["M"])
    table.to_csv(out / "bands.csv")
    extra = {"path": "G-K-M-G", "waypoints": {k: v.tolist() for k, v in hs.items()},
             "warnings": []}
    if s["dirac"]:
        try:
            space = locate_dirac_point(medium, M=s["M"], deg_tol=s["deg_tol"])
            extra["dirac_point"] = {"E_D": space.E_D, "b_star": space.b_star}
        except (HigherDegeneracy, NoDegeneracyFound) as exc:
            extra["warnings"].append({"type": type(exc).__name__, "message": str(exc)})
    return ["bands.csv"], extra


def cmd_dirac_point(cfg, out):
    from .dirac_point import verify_cone

    medium = _medium(cfg)
    dpd, report, info = _dirac(medium, cfg)
    lat = medium.lattice
    dirs = [lat.k1 / np.linalg.norm(lat.k1)]
    R = lat.R
    dirs += [R @ dirs[0], R @ R @ dirs[0]]
    cone = verify_cone(info["medium"], dpd, cfg["solver"]["cone_radii"], dirs)
    dpd.cone_fit_residual = cone.max_relative_slope_error
    dpd.to_json(out / "dirac_point.json")
    io.write_json(out / "bifurcation_report.json", report.to_dict())
    io.write_json(out / "cone_report.json", cone.to_dict())
    extra = {"origin_search": info["origin_search"], "gap_below": info["gap_below"],
             "gap_above": info["gap_above"], "mu_is_real": dpd.mu_is_real,
             "report_passed": report.passed}
    return ["dirac_point.json", "bifurcation_report.json", "cone_report.json"], extra


def cmd_landau(cfg, out):
    from .dynamics import (apply_dirac, dirac_spectrum, landau_energy, landau_mode,
                           linear_gauge_spec)

    c = cfg["landau"]
    grid = _grid(c["grid"])
    spec = linear_gauge_spec(grid, c["v"], c["B0"], c["r_c"], c["w_c"])
    window = c["window"]
    spec_res = dirac_spectrum(spec, count=c["count"], window=window, k=c["k"])
    E = spec_res.energies
    rows = []
    worst = 0.0
    for n in range(c["nmax"] + 1):
        for sign in ((1,) if n == 0 else (1, -1)):
            exact = landau_energy(c["v"], c["B0"], n, sign)
            got = E[np.argmin(np.abs(E - exact))] if len(E) else np.nan
            rows.append((n, sign, exact, got, abs(got - exact)))
            worst = max(worst, abs(got - exact))
    io.write_csv(out / "spectrum.csv", ["n", "sign", "exact", "computed", "deviation"], rows)
    files = ["spectrum.csv"]
    mg = _grid(c["mode_grid"])
    mspec = linear_gauge_spec(mg, c["v"], c["B0"], c["r_c"], c["w_c"])
    residuals = {}
    for n in c["modes"]:
        for sign in ((1,) if n == 0 else (1, -1)):
            mode = landau_mode(mg, c["B0"], n, c["k"], sign, check_periodic=False)
            En = landau_energy(c["v"], c["B0"], n, sign)
            r = apply_dirac(mspec, mode).psi - En * mode.psi
            residuals[f"n={n},sign={sign:+d}"] = float(np.sqrt(np.sum(np.abs(r) ** 2) * mg.dA)
                                                      / mode.norm())
            name = f"mode_n{n}_{'p' if sign > 0 else 'm'}.csv"
            io.write_snapshot(out / name, mg, mode.psi)
            files.append(name)
    pairs = [(e, -e) for e in E if e > 1e-9]
    chiral = max((float(np.min(np.abs(E + e))) for e, _ in pairs), default=0.0)
    extra = {"energies": E, "weights": spec_res.weights, "max_deviation": worst,
             "chiral_defect": chiral, "mode_residuals": residuals}
    if worst >= 1e-3:
        raise GateFailure(f"Landau level deviation {worst:.2e} >= 1e-3", files, extra)
    return files, extra


def cmd_strain_fields(cfg, out):
    from .dirac_point import DiracPointData
    from .strain import Deformation, jacobian_U, magnetic_field, pseudo_fields

    s = cfg["strain"]
    if s["dirac_point"]:
        dpd = DiracPointData.from_json(s["dirac_point"])
    else:
        dpd, _, _ = _dirac(_medium(cfg), cfg)
    grid = _grid(s["grid"])
    deformation = Deformation(s["kind"], dict(s["params"]))
    gfd = pseudo_fields(jacobian_U(deformation, grid), dpd, s["flavor"], general=True)
    gfd.B = magnetic_field(gfd, s["curl"])
    gfd.to_csv(out / "gauge_fields.csv")
    io.write_json(out / "gauge_fields.json", gfd.header())
    extra = {"mu": dpd.mu, "nu_F": dpd.nu_F, "deformation": deformation.to_dict(),
             "max_abs_B": float(np.max(np.abs(gfd.B)))}
    return ["gauge_fields.csv", "gauge_fields.json"], extra


def cmd_simulate(cfg, out):
    from .dynamics import (DiracOperatorSpec, erf_gauge_spec, erf_zero_mode, evolve, fidelity,
                           gaussian_nodes, landau_mode, linear_gauge_spec,
                           wavepacket_superposition)
    from .grid import PeriodicGrid

    d = cfg["dynamics"]
    g = d["grid"]
    nodes, weights = gaussian_nodes(d["k0"], d["w"], d["nodes"], d["clip"])
    L2 = float(g["L2"])
    if d["commensurate"] and len(nodes) > 1:
        L2 = 2 * np.pi / (nodes[1] - nodes[0])
    grid = PeriodicGrid(float(g["L1"]), L2, int(g["N1"]), int(g["N2"]))
    if d["gauge"] == "erf":
        spec = erf_gauge_spec(grid, d["v"])
        mode = lambda k: erf_zero_mode(grid, k, check_periodic=False, tail_tol=1e-6)  # noqa: E731
    else:
        spec = (linear_gauge_spec(grid, d["v"], d["B0"], d["r_c"], d["w_c"])
                if d["gauge"] == "linear" else DiracOperatorSpec(grid, d["v"]))
        mode = lambda k: landau_mode(grid, d["B0"], d["n"], k, d["sign"],  # noqa: E731
                                     check_periodic=False)
    psi0, c = wavepacket_superposition(mode, d["k0"], d["w"], nodes, weights)
    traj = evolve(spec, psi0, d["dt"], d["T"], stride=d["stride"], method=d["method"])
    fid = fidelity(traj)
    files = []
    for t in d["snapshot_times"]:
        i = int(np.argmin(np.abs(traj.times - t)))
        name = f"snapshot_t{traj.times[i]:g}.csv"
        io.write_snapshot(out / name, grid, traj.snapshots[i])
        files.append(name)
        if d["images"]:
            img = f"density_t{traj.times[i]:g}.pgm"
            io.write_pgm(out / img, np.sum(np.abs(traj.snapshots[i]) ** 2, axis=0))
            files.append(img)
    steps = int(round(d["T"] / d["dt"]))
    drift = float(np.max(np.abs(traj.norms - traj.norms[0])))
    extra = {"times": traj.times, "fidelity": fid, "norms": traj.norms, "norm_drift": drift,
             "normalization": c, "L2_used": L2, "steps": steps, "grid": grid.to_dict(),
             "nodes": len(nodes)}
    if d["control"] and d["gauge"] != "free":
        ctrl = evolve(DiracOperatorSpec(grid, d["v"]), psi0, d["dt"], d["T"], stride=d["stride"])
        extra["control_fidelity"] = fidelity(ctrl)
    io.write_json(out / "fidelity.json", {"times": traj.times, "fidelity": fid})
    files.append("fidelity.json")
    if d["gauge"] != "free":
        ok = fid[-1] >= 0.99 and ("control_fidelity" not in extra
                                  or extra["control_fidelity"][-1] < 0.9)
        if not ok:
            raise GateFailure(f"fidelity {fid[-1]:.4f} at T={d['T']}", files, extra)
    return files, extra


def cmd_validate(cfg, out):
    from .continuum import ValidationSetup, convergence_study

    v = cfg["validation"]
    medium = _medium(cfg)
    dpd, _, info = _dirac(medium, cfg)
    setup = ValidationSetup(**v["envelope"])
    rep = convergence_study(dpd, info["medium"], v["epsilons"], v["rho"], v["flavor"], setup,
                            v["ratio_window"])
    rep.to_csv(out / "errors.csv")
    io.write_json(out / "report.json", rep.to_dict())
    files = ["errors.csv", "report.json"]
    extra = {"flavor": v["flavor"], "ratios": rep.ratios, "monotone": rep.monotone,
             "passed": rep.passed, "V0": cfg["medium"]["V0"]}
    if cfg["medium"]["V0"] == 0:
        extra["flag"] = "V0=0"
    if len(rep.runs) > 1:
        ok = rep.passed if v["flavor"] == "schrodinger" else rep.monotone
        if not ok:
            raise GateFailure(f"convergence ratios {rep.ratios} outside the window", files, extra)
    return files, extra


def cmd_expansion_check(cfg, out):
    from .continuum import expansion_study
    from .strain import Deformation

    e = cfg["expansion"]
    medium = _medium(cfg)
    dfm = Deformation(e["deformation"]["kind"], dict(e["deformation"]["params"]))
    rep = expansion_study(medium, dfm, e["epsilons"], tuple(e["blocks"]), tuple(e["points"]),
                          e["width"], e["ratio_window"])
    io.write_csv(out / "expansion.csv", ["epsilon", "residual", "ratio"], rep.rows())
    extra = rep.to_dict()
    if rep.passed is False:
        raise GateFailure(f"expansion ratios {rep.ratios} outside the window",
                          ["expansion.csv"], extra)
    return ["expansion.csv"], extra


COMMANDS = {
    "bands": cmd_bands,
    "dirac-point": cmd_dirac_point,
    "landau": cmd_landau,
    "strain-fields": cmd_strain_fields,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "expansion-check": cmd_expansion_check,
}

TOLERANCES = {
    "bands": {"residual": 1e-8},
    "dirac-point": {"structure": 1e-6, "velocity": 1e-8, "cone": 0.02},
    "landau": {"deviation": 1e-3},
    "strain-fields": {"mu": 1e-8},
    "simulate": {"fidelity": 0.99, "control": 0.9},
    "validate": {"krylov_local": 1e-9},
    "expansion-check": {},
}


def build_parser():
    p = argparse.ArgumentParser(prog="honeystrain", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file (defaults if omitted)")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--threads", type=int, default=None, help="cap on FFT workers")
        sp.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _error_doc(exc, code):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    key = getattr(exc, "key", None)
    if key:
        doc["key"] = key
    return doc


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = Path(args.out) if args.out else None
    try:
        overrides = {} if args.seed is None else {"seed": args.seed}
        cfg = load_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        code = EXIT_CONFIG
        doc = _error_doc(exc, code)
        print(json.dumps(doc), file=sys.stderr)
        if out is not None:
            io.write_json(out / "error.json", doc)
        return code
    out = out or Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    if args.threads:
        from .grid import set_fft_workers
        set_fft_workers(args.threads)
    np.random.seed(cfg["seed"] % 2 ** 32)
    h = config_hash(cfg)
    try:
        files, extra = COMMANDS[args.command](cfg, out)
        code = EXIT_OK
    except GateFailure as exc:
        msg, files, extra = exc.args
        extra = dict(extra, gate_failure=msg)
        code = EXIT_GATE
    except ConfigError as exc:
        doc = _error_doc(exc, EXIT_CONFIG)
        io.write_json(out / "error.json", doc)
        print(json.dumps(doc), file=sys.stderr)
        return EXIT_CONFIG
    except (HoneystrainError, np.linalg.LinAlgError, ValueError) as exc:
        doc = _error_doc(exc, EXIT_NUMERIC)
        report = getattr(exc, "report", None)
        if report is not None:
            doc["report"] = report.to_dict() if hasattr(report, "to_dict") else report
        io.write_json(out / "error.json", doc)
        print(json.dumps(io._plain(doc)), file=sys.stderr)
        return EXIT_NUMERIC
    io.write_json(out / "manifest.json",
                  io.manifest(args.command, cfg, h, TOLERANCES[args.command], files=files,
                              exit_code=code, **extra))
    if code == EXIT_GATE:
        print(json.dumps({"error": "GateFailure", "message": extra["gate_failure"]}),
              file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
