"""Command-line front end.

Every command reads a JSON run config, writes a deterministic
``report.json`` plus CSV field dumps to ``--out``, and keeps wall-clock
information in a separate ``run_info.json``::

    pnekit dec-check --config run.json --out out/
    pnekit find-pne --config run.json --out out/ --method graph
    pnekit stability --config run.json --surface out/surface.json --out st/
    pnekit topology --config run.json --surface out/surface.json --out tp/
"""

import argparse
import csv
import json
import os
import platform
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import load_config, validate_surface_json
from .errors import (ConfigError, KreinRutmanViolation, NonconvergenceError, OutOfChartError,
                     PnekitError)
from .fields import (InitialDataSet, ScalarField, dec_summary, export_fields_csv, modified_dec_margin,
                     write_fields_csv)
from .fields.data import MU_CONVENTIONS, TRACE_CONVENTIONS
from .solvers.graph import GraphConfig, pne_graph_solve, resample_surface
from .solvers.jang import JangConfig, tau_continuation
from .spectrum import assemble_L, principal_eigenpair, stability_verdict, topology_report
from .spherical import SphericalData, root_details, theta_profile
from .surfaces import Surface, barrier_margins, induced_geometry

__all__ = ["main", "EXIT_CODES", "run"]

# verdict -> exit code; one code per verdict
EXIT_CODES = {
    "pass": 0,
    "found": 0,
    "stable": 0,
    "positive-type": 0,
    "error": 1,
    "nonconvergent": 2,
    "eigensolver-failure": 2,
    "fail": 3,
    "none": 4,
    "unstable": 5,
    "borderline-rigidity": 6,
    "inconclusive": 7,
}


# -- output helpers -----------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([format(float(v), ".17g") for v in row])


def _surface_csv(path, surface, extra=None):
    coords = surface.grid.coordinates().reshape(-1, 2)
    axis = ["theta_coord", "phi_coord"] if surface.grid.kind == "lat-long" else ["x", "y"]
    header = axis + ["value"]
    cols = [coords[:, 0], coords[:, 1], surface.values.ravel()]
    for k, v in (extra or {}).items():
        header.append(k)
        cols.append(np.asarray(v, dtype=float).ravel())
    _write_rows(path, header, cols)


def _figure_dir(ctx):
    if not ctx["figures"]:
        return None
    d = os.path.join(ctx["out"], "figures")
    os.makedirs(d, exist_ok=True)
    return d


def _load_data(cfg, desc=None):
    return InitialDataSet.from_json(desc or cfg["data"], cfg.get("trace_convention"),
                                    cfg.get("mu_convention"))


def _load_surface(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read surface {path}: {exc}") from exc
    return Surface.from_json(validate_surface_json(obj))


# -- dec-check ----------------------------------------------------------------


def cmd_dec_check(cfg, ctx):
    data = _load_data(cfg)
    tol = cfg["dec"]["tolerance"]
    summary = dec_summary(data, tol)
    export_fields_csv(data, os.path.join(ctx["out"], "fields.csv"))
    figs = _figure_dir(ctx)
    if figs:
        from . import plotting

        plotting.dec_margin(data.chart.coordinates(), modified_dec_margin(data).values,
                            os.path.join(figs, "dec_margin.png"))
    verdict = "pass" if summary["passed"] else "fail"
    return verdict, {"dec": summary, "tolerance": tol, "files": ["fields.csv"]}


# -- find-pne -----------------------------------------------------------------


def _shell_check(cfg, fp):
    """Barrier margins of the coordinate spheres bounding ``fp["shell"]``."""
    shell = fp.get("shell")
    if not shell:
        return None
    counts = tuple(shell.get("counts", (32, 64)))
    desc = dict(cfg["data"])
    desc["chart"] = {"topology": "lat-long-sphere-shell", "radii": [shell["inner"], shell["outer"]],
                     "counts": [5, 8, 16]}
    data = _load_data(cfg, desc)
    m = barrier_margins(Surface.sphere(shell["inner"], counts), Surface.sphere(shell["outer"], counts),
                        data, first=shell.get("first", "inner"))
    return {"inner": shell["inner"], "outer": shell["outer"], "first": m.first,
            "min_margin_inner": m.min_inner, "min_margin_outer": m.min_outer, "ok": m.ok}


def _initial_surface(data, fp, ctx):
    if ctx.get("surface"):
        return _load_surface(ctx["surface"])
    counts = tuple(fp["surface_counts"])
    orient = fp["orientation"]
    ch = data.chart
    if ch.topology == "periodic-box":
        return Surface.plane(fp["initial_height"], counts, ch.lower[:2], ch.upper[:2], orient)
    return Surface.sphere(fp["initial_radius"], counts, orient, tuple(fp["center"]))


def _graph_config(fp):
    return GraphConfig(**fp["graph"])


def _dump_iterate(ctx, exc):
    it = exc.iterate
    files = []
    if isinstance(it, Surface):
        it.save(os.path.join(ctx["out"], "iterate.json"))
        files.append("iterate.json")
    elif it is not None:
        arr = np.asarray(it, dtype=float)
        _write_rows(os.path.join(ctx["out"], "iterate.csv"), ["index", "value"],
                    [np.arange(arr.size), arr.ravel()])
        files.append("iterate.csv")
    return {"message": str(exc), "history": list(exc.history), "files": files}


def _graph_report(sol, data, ctx, name="surface"):
    sol.surface.save(os.path.join(ctx["out"], f"{name}.json"))
    geom = induced_geometry(sol.surface, data)
    geom.to_csv(os.path.join(ctx["out"], f"{name}.csv"))
    out = sol.to_json()
    out["file"] = f"{name}.json"
    out["representation"] = sol.surface.representation
    out["orientation"] = sol.surface.orientation
    return out


def _find_spherical(cfg, fp, ctx):
    sd = SphericalData.from_json(cfg["data"], nodes=fp.get("radial_nodes"))
    prof = theta_profile(sd, fp["orientation"])
    roots = root_details(prof)
    prof.to_csv(os.path.join(ctx["out"], "profile.csv"))
    found = []
    for k, root in enumerate(roots):
        name = "surface" if k == 0 else f"surface_{k}"
        surf = Surface.shell(root["radius"], tuple(fp["surface_counts"]), fp["orientation"])
        surf.save(os.path.join(ctx["out"], f"{name}.json"))
        residual = float(abs(prof(np.array([root["radius"]]))[0]))
        found.append(dict(root, residual=residual, file=f"{name}.json"))
    figs = _figure_dir(ctx)
    if figs:
        from . import plotting

        plotting.radial_profile(prof.r, prof.values, [f["radius"] for f in found],
                                os.path.join(figs, "profile.png"), "theta - h on coordinate spheres")
    body = {"surfaces": found, "profile_nodes": int(prof.r.size), "files": ["profile.csv"]}
    return ("found" if found else "none"), body


def _find_graph(cfg, fp, ctx):
    data = _load_data(cfg)
    init = _initial_surface(data, fp, ctx)
    sol = pne_graph_solve(data, init, _graph_config(fp))
    rep = _graph_report(sol, data, ctx)
    write_json(os.path.join(ctx["out"], "solver_log.json"), {"graph": list(sol.log)})
    figs = _figure_dir(ctx)
    if figs:
        from . import plotting

        plotting.surface_field(sol.surface.grid, sol.surface.values,
                               os.path.join(figs, "surface.png"), "graph values", "value")
    return "found", {"surfaces": [rep], "files": ["surface.json", "surface.csv", "solver_log.json"]}


def _jang_csv(path, data, state):
    export = {"u": ScalarField(data.chart, state.u), "grad_u": ScalarField(data.chart, state.grad_norm)}
    write_fields_csv(path, data.chart, export)


def _find_jang(cfg, fp, ctx):
    data = _load_data(cfg)
    jkw = dict(fp["jang"])
    if "taus" in jkw:
        jkw["taus"] = tuple(jkw["taus"])
    res = tau_continuation(data, JangConfig(**jkw))
    log = [dict(entry, tau=s.tau) for s in res.states for entry in s.log]
    files = ["solver_log.json"]
    if res.states:
        _jang_csv(os.path.join(ctx["out"], "jang_final.csv"), data, res.states[-1])
        files.append("jang_final.csv")
    body = {"jang": res.to_json(), "files": files}
    figs = _figure_dir(ctx)
    if figs and res.states:
        from . import plotting

        plotting.jang_history(res.states, os.path.join(figs, "jang_history.png"))
        if data.chart.topology == "lat-long-sphere-shell":
            u = res.states[-1].u
            plotting.jang_section(data.chart.axes[0], u[:, u.shape[1] // 2, :].mean(axis=-1),
                                  os.path.join(figs, "jang_section.png"), f"tau = {res.states[-1].tau:g}")
    if res.verdict == "nonconvergent":
        write_json(os.path.join(ctx["out"], "solver_log.json"), {"jang": log})
        body["nonconvergence"] = {"message": res.error, "history": [], "files": []}
        return "nonconvergent", body
    if res.verdict != "blow-up" or res.locus_surface is None:
        write_json(os.path.join(ctx["out"], "solver_log.json"), {"jang": log})
        return "none", body
    surf = res.locus_surface
    surf = Surface(surf.representation, surf.grid, surf.values, fp["orientation"], surf.center)
    surf.save(os.path.join(ctx["out"], "locus.json"))
    body["files"].append("locus.json")
    if not fp["refine"]:
        write_json(os.path.join(ctx["out"], "solver_log.json"), {"jang": log})
        return "found", body
    start = resample_surface(surf, fp["surface_counts"])
    try:
        sol = pne_graph_solve(data, start, _graph_config(fp))
    finally:
        write_json(os.path.join(ctx["out"], "solver_log.json"), {"jang": log})
    body["surfaces"] = [_graph_report(sol, data, ctx)]
    body["refinement_log"] = list(sol.log)
    body["files"] += ["surface.json", "surface.csv"]
    return "found", body


def cmd_find_pne(cfg, ctx):
    fp = cfg["find_pne"]
    method = ctx.get("method") or fp["method"]
    body = {"method": method}
    # barrier bookkeeping first, so an invalid shell fails before a long solve
    shell = _shell_check(cfg, fp)
    if shell is not None:
        body["barrier"] = shell
    finder = {"spherical": _find_spherical, "graph": _find_graph, "jang": _find_jang}[method]
    try:
        verdict, extra = finder(cfg, fp, ctx)
    except NonconvergenceError as exc:
        body["nonconvergence"] = _dump_iterate(ctx, exc)
        return "nonconvergent", body
    except OutOfChartError as exc:
        body["reason"] = f"iterate left the chart: {exc}"
        return "none", body
    body.update(extra)
    return verdict, body


# -- stability and topology ---------------------------------------------------


def _surface_geometry(cfg, ctx):
    if not ctx.get("surface"):
        raise ConfigError("this command needs --surface")
    data = _load_data(cfg)
    surf = _load_surface(ctx["surface"])
    return data, surf, induced_geometry(surf, data)


def cmd_stability(cfg, ctx):
    st = cfg["stability"]
    data, surf, geom = _surface_geometry(cfg, ctx)
    op = assemble_L(geom, data)
    body = {"surface_residual": float(np.max(np.abs(geom.theta - geom.h))),
            "c0_min": float(op.c0.min()), "c0_max": float(op.c0.max())}
    try:
        res = principal_eigenpair(op, max_iter=st["max_iter"], seed=cfg["seed"])
    except (NonconvergenceError, KreinRutmanViolation) as exc:
        body["eigensolver_error"] = str(exc)
        return "eigensolver-failure", body
    verdict = stability_verdict(res, st.get("tolerance"))
    body["spectrum"] = res.to_json()
    body["certificate"] = {"eigenfunction_min": float(res.eigenfunction.min()),
                           "one_signed": res.positive}
    _surface_csv(os.path.join(ctx["out"], "eigenfunction.csv"), surf,
                 {"eigenfunction": res.eigenfunction, "c0": op.c0})
    body["files"] = ["eigenfunction.csv"]
    figs = _figure_dir(ctx)
    if figs:
        from . import plotting

        plotting.surface_field(surf.grid, res.eigenfunction, os.path.join(figs, "eigenfunction.png"),
                               f"lambda_1 = {res.eigenvalue:.6g}", "f")
    return verdict, body


def cmd_topology(cfg, ctx):
    tp = cfg["topology"]
    data, surf, geom = _surface_geometry(cfg, ctx)
    try:
        spec = principal_eigenpair(assemble_L(geom, data), seed=cfg["seed"])
    except (NonconvergenceError, KreinRutmanViolation) as exc:
        return "eigensolver-failure", {"eigensolver_error": str(exc)}
    rep = topology_report(geom, data, spec, factor=tp["factor"], floor=tp["floor"])
    body = {"topology": rep.to_json(), "stability": stability_verdict(spec)}
    verdict = rep.verdict
    if body["stability"] != "stable":
        # the conformal argument needs a stable surface
        verdict = "inconclusive"
        body["reason"] = "surface is unstable"
    _surface_csv(os.path.join(ctx["out"], "topology.csv"), surf,
                 {"S_tilde": rep.S_tilde, "f": rep.eigenfunction})
    body["files"] = ["topology.csv"]
    figs = _figure_dir(ctx)
    if figs:
        from . import plotting

        plotting.surface_field(surf.grid, rep.S_tilde, os.path.join(figs, "S_tilde.png"),
                               f"verdict: {verdict}", "S_tilde")
    return verdict, body


COMMANDS = {
    "dec-check": cmd_dec_check,
    "find-pne": cmd_find_pne,
    "stability": cmd_stability,
    "topology": cmd_topology,
}


# -- entry point --------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="pnekit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"pnekit {__version__}")
    parser.add_argument("--trace-convention", choices=TRACE_CONVENTIONS)
    parser.add_argument("--mu-convention", choices=MU_CONVENTIONS)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run config (JSON)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--figures", action="store_true", help="also write PNG figures")
        if name == "find-pne":
            p.add_argument("--method", choices=("spherical", "graph", "jang"))
            p.add_argument("--surface", help="initial surface (JSON) for the graph solve")
        if name in ("stability", "topology"):
            p.add_argument("--surface", required=True, help="surface file (JSON)")
    return parser


def run(args, argv=None):
    """Run a parsed command; returns ``(exit_code, report)``."""
    started = datetime.now(timezone.utc).isoformat()
    os.makedirs(args.out, exist_ok=True)
    ctx = {"out": args.out, "figures": args.figures, "surface": getattr(args, "surface", None),
           "method": getattr(args, "method", None)}
    report = {"command": args.command, "pnekit_version": __version__}
    try:
        cfg = load_config(args.config, args.trace_convention, args.mu_convention)
        report["config"] = cfg
        verdict, body = COMMANDS[args.command](cfg, ctx)
        report.update(body)
    except PnekitError as exc:
        verdict = "error"
        report["error"] = f"{type(exc).__name__}: {exc}"
        print(f"pnekit {args.command}: {report['error']}", file=sys.stderr)
    code = EXIT_CODES[verdict]
    report["verdict"] = verdict
    report["exit_code"] = code
    write_json(os.path.join(args.out, "report.json"), report)
    write_json(os.path.join(args.out, "run_info.json"), {
        "started": started, "finished": datetime.now(timezone.utc).isoformat(),
        "argv": list(sys.argv[1:] if argv is None else argv), "python": platform.python_version(), "pnekit_version": __version__})
    return code, report


def main(argv=None):
    args = build_parser().parse_args(argv)
    code, report = run(args, argv)
    print(f"{args.command}: {report['verdict']} (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
