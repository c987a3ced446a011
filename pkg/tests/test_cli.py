import json

import numpy as np
import pytest

from conftest import TWO_PI, box_chart, pg, shell_chart
from pnekit.cli import EXIT_CODES, main
from pnekit.surfaces import Surface


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, command, cfg, *extra, out="out"):
    cfg_path = cfg if isinstance(cfg, str) else write(tmp_path, cfg, f"{out}.json")
    out_dir = tmp_path / out
    code = main([command, "--config", cfg_path, "--out", str(out_dir), *extra])
    return code, json.loads((out_dir / "report.json").read_text()), out_dir


# -- dec-check --


def test_dec_minkowski(tmp_path):
    code, rep, out = run(tmp_path, "dec-check", {"data": {"preset": "minkowski", "chart": box_chart(3)}})
    assert code == 0 and rep["verdict"] == "pass"
    assert rep["dec"]["min_margin"] == 0.0
    assert (out / "fields.csv").exists() and (out / "run_info.json").exists()


def test_dec_constant_trace(tmp_path):
    code, rep, _ = run(tmp_path, "dec-check", {"data": {"preset": "constant-trace", "c": 1.0, "chart": box_chart(3)}})
    assert code == 0 and rep["dec"]["min_margin"] == pytest.approx(3.0, abs=1e-12)


def test_dec_schwarzschild(configs_dir, tmp_path):
    code, rep, _ = run(tmp_path, "dec-check", str(configs_dir / "schwarzschild_dec.json"))
    assert code == 0 and abs(rep["dec"]["min_margin"]) < 1e-3


def test_dec_fail(configs_dir, tmp_path):
    code, rep, _ = run(tmp_path, "dec-check", str(configs_dir / "dec_violating_torus.json"))
    assert code == 3 and rep["verdict"] == "fail" and rep["dec"]["min_margin"] < 0


def test_schema_rejection(tmp_path, capsys):
    for bad in ({"data": {"preset": "minkowski", "chart": box_chart(3)}, "colour": "red"},
                {"data": {"preset": "warp-drive", "chart": box_chart(3)}},
                {"schema_version": 2, "data": {"preset": "minkowski", "chart": box_chart(3)}},
                {"data": {"preset": "minkowski", "chart": box_chart(3)}, "find_pne": {"orientation": 2}}):
        code, rep, _ = run(tmp_path, "dec-check", bad)
        assert code == 1 and rep["verdict"] == "error"
        assert "config invalid" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, rep, _ = run(tmp_path, "dec-check", str(bad))
    assert code == 1 and "not valid JSON" in rep["error"]


def test_convention_flags(tmp_path):
    cfg = {"data": {"preset": "constant-trace", "c": 1.0, "chart": box_chart(3)}}
    path = write(tmp_path, cfg)
    out = tmp_path / "lit"
    assert main(["--mu-convention", "literal", "dec-check", "--config", path, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["mu_convention"] == "literal"
    assert rep["dec"]["min_margin"] == pytest.approx(6.0, abs=1e-12)


# -- find-pne --


def test_find_spherical(configs_dir, tmp_path):
    code, rep, out = run(tmp_path, "find-pne", str(configs_dir / "schwarzschild_spherical.json"))
    assert code == 0 and rep["verdict"] == "found"
    (s,) = rep["surfaces"]
    assert abs(s["radius"] - 2.0) < 1e-8
    surf = Surface.load(out / s["file"])
    assert np.allclose(surf.values, s["radius"])


def test_find_spherical_none(tmp_path):
    cfg = {"data": {"preset": "minkowski", "chart": {"topology": "radial-interval", "radii": [1.0, 5.0],
                                                     "counts": [201]}},
           "find_pne": {"method": "spherical"}}
    code, rep, _ = run(tmp_path, "find-pne", cfg)
    assert code == 4 and rep["verdict"] == "none"


def test_find_graph_flat_sphere(configs_dir, tmp_path):
    code, rep, out = run(tmp_path, "find-pne", str(configs_dir / "flat_sphere.json"))
    assert code == 0
    s = rep["surfaces"][0]
    assert abs(s["min_value"] - 4.0) < 1e-6 and abs(s["max_value"] - 4.0) < 1e-6
    assert (out / "surface.csv").exists() and (out / "solver_log.json").exists()


def test_find_graph_method_flag_and_surface(tmp_path):
    cfg = {"data": pg(), "find_pne": {"method": "spherical", "surface_counts": [16, 32]}}
    init = tmp_path / "init.json"
    Surface.sphere(2.3, (16, 32)).save(init)
    code, rep, out = run(tmp_path, "find-pne", cfg, "--method", "graph", "--surface", str(init))
    assert code == 0 and rep["method"] == "graph"
    assert np.max(np.abs(Surface.load(out / "surface.json").values - 2.0)) < 2e-3


def test_find_out_of_chart(tmp_path):
    cfg = {"data": {"preset": "minkowski", "h": 0.05, "chart": shell_chart(1.0, 6.0, (6, 6, 8))},
           "find_pne": {"initial_radius": 3.0, "surface_counts": [8, 16]}}
    code, rep, _ = run(tmp_path, "find-pne", cfg)
    assert code == 4 and rep["verdict"] == "none" and "reason" in rep


def test_find_nonconvergent_dumps_iterate(tmp_path):
    cfg = {"data": pg(), "find_pne": {"initial_radius": 2.5, "surface_counts": [8, 16], "graph": {"max_iter": 1}}}
    code, rep, out = run(tmp_path, "find-pne", cfg)
    assert code == 2 and rep["verdict"] == "nonconvergent"
    assert Surface.load(out / "iterate.json").values.shape == (8, 16)


def test_find_jang_small(tmp_path):
    cfg = {"data": pg(chart=shell_chart(1.5, 4.0, (21, 8, 16))),
           "find_pne": {"method": "jang", "surface_counts": [16, 32],
                        "shell": {"inner": 1.5, "outer": 4.0, "first": "outer"}}}
    code, rep, out = run(tmp_path, "find-pne", cfg)
    assert code == 0 and rep["verdict"] == "found"
    assert 1.8 <= rep["jang"]["locus_radius"] <= 2.2
    refined = Surface.load(out / "surface.json")
    assert np.max(np.abs(refined.values - 2.0)) < 2e-3
    assert rep["barrier"]["ok"]


# -- stability and topology --


def surface_file(tmp_path, surf, name="surface.json"):
    path = tmp_path / name
    surf.save(path)
    return str(path)


def test_stability_horizon(tmp_path):
    surf = surface_file(tmp_path, Surface.sphere(2.0, (16, 32)))
    code, rep, out = run(tmp_path, "stability", {"data": pg()}, "--surface", surf)
    assert code == 0 and rep["verdict"] == "stable"
    assert rep["spectrum"]["lambda_1"] == pytest.approx(0.25, abs=0.0025)
    assert rep["certificate"]["one_signed"]
    assert (out / "eigenfunction.csv").exists()


def test_stability_flat_torus(configs_dir, tmp_path):
    surf = surface_file(tmp_path, Surface.plane(1.0, (16, 16), (0, 0), (TWO_PI, TWO_PI)))
    code, rep, _ = run(tmp_path, "stability", str(configs_dir / "flat_torus.json"), "--surface", surf)
    assert code == 0 and abs(rep["spectrum"]["lambda_1"]) < 1e-10


def test_stability_unstable(configs_dir, tmp_path):
    surf = surface_file(tmp_path, Surface.plane(1.0, (16, 16), (0, 0), (TWO_PI, TWO_PI)))
    code, rep, _ = run(tmp_path, "stability", str(configs_dir / "unstable_torus.json"), "--surface", surf)
    assert code == 5 and rep["verdict"] == "unstable"
    assert rep["spectrum"]["lambda_1"] == pytest.approx(-1.0, abs=1e-10)


def test_stability_needs_surface(tmp_path):
    cfg = write(tmp_path, {"data": pg()})
    with pytest.raises(SystemExit):
        main(["stability", "--config", cfg, "--out", str(tmp_path / "o")])


def test_topology_verdicts(configs_dir, tmp_path):
    sphere = surface_file(tmp_path, Surface.sphere(2.0, (16, 32)), "h.json")
    plane = surface_file(tmp_path, Surface.plane(1.0, (16, 16), (0, 0), (TWO_PI, TWO_PI)), "p.json")
    code, rep, _ = run(tmp_path, "topology", {"data": pg()}, "--surface", sphere, out="a")
    assert code == 0 and rep["verdict"] == "positive-type"
    code, rep, _ = run(tmp_path, "topology", str(configs_dir / "flat_torus.json"), "--surface", plane, out="b")
    assert code == 6 and rep["verdict"] == "borderline-rigidity"
    code, rep, out = run(tmp_path, "topology", str(configs_dir / "dec_violating_torus.json"), "--surface", plane,
                         out="c")
    assert code == 7 and rep["verdict"] == "inconclusive" and rep["stability"] == "stable"
    assert rep["topology"]["min_S_tilde"] < 0
    assert (out / "topology.csv").exists()
    code, rep, _ = run(tmp_path, "topology", str(configs_dir / "unstable_torus.json"), "--surface", plane, out="d")
    assert code == 7 and rep["reason"] == "surface is unstable"


def test_bad_surface_file(tmp_path):
    bad = tmp_path / "s.json"
    bad.write_text(json.dumps({"representation": "radial-graph", "values": [1.0]}))
    code, rep, _ = run(tmp_path, "stability", {"data": pg()}, "--surface", str(bad))
    assert code == 1


# -- cross-cutting --


def test_exit_codes_total():
    verdicts = {"pass", "fail", "found", "none", "nonconvergent", "stable", "unstable", "eigensolver-failure",
                "positive-type", "borderline-rigidity", "inconclusive", "error"}
    assert set(EXIT_CODES) == verdicts
    assert all(isinstance(c, int) and 0 <= c < 8 for c in EXIT_CODES.values())


def test_determinism(configs_dir, tmp_path):
    cfg = str(configs_dir / "schwarzschild_spherical.json")
    _, _, a = run(tmp_path, "find-pne", cfg, out="a")
    _, _, b = run(tmp_path, "find-pne", cfg, out="b")
    for name in ("report.json", "profile.csv", "surface.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert json.loads((a / "run_info.json").read_text())["argv"][0] == "find-pne"


def test_surface_round_trip(configs_dir, tmp_path):
    _, rep, out = run(tmp_path, "find-pne", str(configs_dir / "flat_sphere.json"))
    s = Surface.load(out / "surface.json")
    s.save(tmp_path / "again.json")
    assert Surface.load(tmp_path / "again.json").same_as(s)
    assert (tmp_path / "again.json").read_bytes() == (out / "surface.json").read_bytes()


def test_figures_flag(tmp_path):
    surf = surface_file(tmp_path, Surface.sphere(2.0, (16, 32)))
    code, rep, out = run(tmp_path, "stability", {"data": pg()}, "--surface", surf, "--figures")
    assert code == 0 and (out / "figures" / "eigenfunction.png").stat().st_size > 0
    code, rep, out = run(tmp_path, "stability", {"data": pg()}, "--surface", surf, out="nofig")
    assert not (out / "figures").exists()
