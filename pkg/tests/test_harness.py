import json
import shutil
import warnings

import numpy as np
import pytest

from ikzm import harness
from ikzm.cli import main
from ikzm.config import ConfigError, RunConfig, parse_config
from ikzm.figures import FigureInputError, emit_figures
from ikzm.scaling import FitError, SweepCurve, fit_power_law, segment_regimes

BASIC = """
[chain]
L = 10
q = 2
end_ratio = 0.2
J0 = 2

[quench]
tau_min = 0.2
tau_max = 5
tau_count = 4
samples = 21
"""


def small_config(tmp_path, **over):
    cfg = RunConfig(L=10, q=2, alpha_q=0.8 / 25, J0=2.0, tau_grid=(0.2, 0.6, 1.8, 5.0), samples=21, out_dir=str(tmp_path))
    return cfg.replace(**over) if over else cfg


def tree_bytes(root, pattern):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.glob(pattern))}


# -- configuration --------------------------------------------------------------


def test_parse_basic_config(tmp_path):
    cfg = parse_config(BASIC + "[output]\ndir = here\n", base_dir=tmp_path)
    assert cfg.L == 10 and cfg.backend == "fermion"
    assert cfg.alpha_q == pytest.approx(0.8 / 25)
    assert len(cfg.tau_grid) == 4 and cfg.tau_grid[0] == pytest.approx(0.2) and cfg.tau_grid[-1] == pytest.approx(5.0)
    assert cfg.out_dir == str(tmp_path / "here")
    assert cfg.dt is None and cfg.dt_for(5.0) == pytest.approx(0.005)


@pytest.mark.parametrize(
    "extra,message",
    [
        ("[chain]\nlength = 3\n", "unknown"),
        ("[backend]\nchim = 4\n", "unknown key"),
        ("[plotting]\nx = 1\n", "unknown section"),
        ("[backend]\nname = gpu\n", "backend"),
        ("[backend]\nchi = 1.5\n", "cannot parse"),
    ],
)
def test_config_errors(extra, message):
    text = BASIC + extra
    if extra.startswith("[chain]"):
        text = BASIC.replace("J0 = 2", "J0 = 2\nlength = 3")
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


def test_config_rejects_both_profile_forms():
    with pytest.raises(ConfigError, match="not both"):
        parse_config(BASIC.replace("J0 = 2", "J0 = 2\nalpha_q = 0.01"))


def test_config_rejects_invalid_physics():
    with pytest.raises(ConfigError):
        parse_config(BASIC.replace("end_ratio = 0.2", "alpha_q = 1.0"))
    with pytest.raises(ConfigError):
        parse_config(BASIC.replace("tau_min = 0.2", "tau_min = -1"))
    with pytest.raises(ConfigError, match="tau_count"):
        parse_config(BASIC.replace("tau_count = 4", "tau_count = 1"))


def test_snapshot_contents():
    cfg = RunConfig(L=10, tau_grid=(1.0, 2.0))
    assert "seed" not in cfg.snapshot(1.0, "fermion")
    assert cfg.snapshot(1.0, "mps")["seed"] == 0
    assert harness.snapshot_key(cfg.snapshot(1.0, "fermion")) != harness.snapshot_key(cfg.snapshot(2.0, "fermion"))
    assert harness.snapshot_key(cfg.snapshot(1.0, "fermion")) == harness.snapshot_key(cfg.replace(seed=9).snapshot(1.0, "fermion"))


# -- sweeps -----------------------------------------------------------------------


def test_single_point_grid(tmp_path):
    cfg = parse_config(BASIC.replace("tau_min = 0.2\ntau_max = 5\ntau_count = 4", "tau_values = 1.0"), base_dir=tmp_path)
    cfg = cfg.replace(out_dir=str(tmp_path))
    res = harness.run_sweep(cfg)
    assert len(res.records) == 1 and len(list((tmp_path / "records").glob("*.json"))) == 1
    with pytest.raises(FitError):
        fit_power_law(res.curves["fermion"])


def test_reruns_are_byte_identical(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    harness.run_sweep(small_config(a))
    harness.run_sweep(small_config(b))
    harness.run_sweep(small_config(c, workers=2))
    ref = tree_bytes(a, "records/*.json") | tree_bytes(a, "curve_*.csv")
    assert ref
    assert tree_bytes(b, "records/*.json") | tree_bytes(b, "curve_*.csv") == ref
    assert tree_bytes(c, "records/*.json") | tree_bytes(c, "curve_*.csv") == ref


def test_resume_regenerates_curve(tmp_path):
    cfg = small_config(tmp_path)
    harness.run_sweep(cfg)
    curve = (tmp_path / "curve_fermion.csv").read_bytes()
    (tmp_path / "curve_fermion.csv").unlink()
    record_times = {p: p.stat().st_mtime_ns for p in (tmp_path / "records").glob("*.json")}
    harness.run_sweep(cfg)
    assert (tmp_path / "curve_fermion.csv").read_bytes() == curve
    # nothing was recomputed
    assert {p: p.stat().st_mtime_ns for p in (tmp_path / "records").glob("*.json")} == record_times


def test_partial_sweep_is_completed(tmp_path):
    full = small_config(tmp_path / "full")
    harness.run_sweep(full)
    part = small_config(tmp_path / "part")
    harness.run_sweep(part.replace(tau_grid=part.tau_grid[:2]))
    harness.run_sweep(part)
    assert (tmp_path / "part" / "curve_fermion.csv").read_bytes() == (tmp_path / "full" / "curve_fermion.csv").read_bytes()


def test_records_revalidate_from_snapshot(tmp_path):
    harness.run_sweep(small_config(tmp_path))
    store = harness.RecordStore(tmp_path)
    recs = store.all_records()
    assert len(recs) == 4
    for r in recs:
        r.validate()
        assert r.d_final == r.kink_density[-1]
        assert r.times[0] == pytest.approx(-r.tau_Q) and len(r.times) == 21
        assert r.wall_clock is not None
    path = next((tmp_path / "records").glob("*.json"))
    data = json.loads(path.read_text())
    data["d_final"] = 0.123
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError):
        store.load_key(path.stem)


def test_curve_csv_schema(tmp_path):
    harness.run_sweep(small_config(tmp_path))
    lines = (tmp_path / "curve_fermion.csv").read_text().splitlines()
    assert lines[0] == "# schema=1"
    assert lines[1] == ",".join(harness.CURVE_COLUMNS)
    (curve,) = harness.read_curve_csv(tmp_path / "curve_fermion.csv")
    assert curve.metadata["L"] == 10 and len(curve) == 4
    assert np.all(np.diff(curve.density) < 0)


def test_failed_points_are_excluded(tmp_path):
    cfg = small_config(tmp_path, backend="mps", chi=2, trunc_budget=1e-9, dt=0.01, tau_grid=(0.2, 0.21, 0.22, 0.23, 5.0))
    with pytest.raises(harness.SimulationError):
        harness.run_sweep(cfg)
    recs = harness.RecordStore(tmp_path).all_records()
    assert recs and all(not r.ok for r in recs if r.tau_Q == 5.0)
    failed = next(r for r in recs if not r.ok)
    assert "t_reached" in failed.diagnostics


def test_small_failure_fraction_is_tolerated(tmp_path):
    taus = tuple(np.geomspace(0.1, 0.2, 5))
    cfg = small_config(tmp_path, backend="mps", chi=4, trunc_budget=1e-6, dt=0.01, tau_grid=taus + (2.0,))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = harness.run_sweep(cfg)
    assert len(res.failures) == 1 and res.failures[0].tau_Q == 2.0
    assert len(res.curves["mps"]) == 5
    assert any("failed" in str(w.message) for w in caught)


# -- cross-validation -------------------------------------------------------------


def test_cross_validation_agrees(tmp_path):
    cfg = small_config(tmp_path, tau_grid=(0.5, 2.0), chi=64, dt=0.01)
    rep = harness.cross_validate(cfg)
    assert not rep.flagged and rep.max_abs < 1e-3
    assert (tmp_path / "validation.csv").read_text().startswith("# schema=1")


def test_starved_bond_dimension_is_flagged(tmp_path):
    cfg = small_config(tmp_path, L=12, alpha_q=0.8 / 36, tau_grid=(3.0,), chi=2, trunc_budget=1.0, dt=0.01)
    rep = harness.cross_validate(cfg)
    assert rep.flagged and rep.max_abs > 1e-3


def test_homogeneous_backends_give_same_exponent(tmp_path):
    cfg = RunConfig(L=12, tau_grid=tuple(np.geomspace(0.3, 3.0, 5)), samples=11, chi=64, dt=0.01, out_dir=str(tmp_path), backend="both")
    res = harness.run_sweep(cfg)
    ferm, mp = (fit_power_law(res.curves[b]) for b in ("fermion", "mps"))
    assert abs(ferm.beta - mp.beta) < ferm.delta_beta + mp.delta_beta
    np.testing.assert_allclose(res.curves["mps"].density, res.curves["fermion"].density, atol=1e-3)


# -- figures ------------------------------------------------------------------


def test_empty_inputs_raise(tmp_path):
    with pytest.raises(FigureInputError):
        emit_figures(tmp_path / "figs")
    assert not (tmp_path / "figs").exists()


def test_single_homogeneous_curve_figure(tmp_path):
    tau = np.geomspace(1, 100, 12)
    curve = SweepCurve(tau, 0.05 * tau**-0.5, {"backend": "fermion", "L": 100, "q": 2.0, "alpha_q": 0.0, "J0": 1.0})
    assert segment_regimes(curve).single_regime
    written, skipped = emit_figures(tmp_path, curves=[curve])
    assert "scaling_curves" in written
    data, svg = written["scaling_curves"]
    body = svg.read_text()
    assert "slope -0.5" in body and "slope -1.5" not in body
    assert "density_heatmap" in skipped and "exponent_vs_q" in skipped
    assert data.read_text().startswith("# ")


def test_heatmap_from_sweep(tmp_path):
    cfg = small_config(tmp_path)
    res = harness.run_sweep(cfg)
    written, _ = emit_figures(tmp_path / "figs", records=res.records, curves=list(res.curves.values()))
    data, svg = written["density_heatmap"]
    rows = [ln for ln in data.read_text().splitlines() if ln and not ln.startswith("#")]
    assert len(rows) == 1 + 4 * 21
    again, _ = emit_figures(tmp_path / "figs2", records=res.records, curves=list(res.curves.values()))
    assert again["density_heatmap"][1].read_bytes() == svg.read_bytes()


@pytest.mark.slow
def test_reference_heatmap_grid(tmp_path):
    cfg = RunConfig(L=50, q=2, alpha_q=0.00128, J0=5.0, tau_grid=tuple(np.geomspace(0.1, 100, 7)), out_dir=str(tmp_path), workers=2)
    res = harness.run_sweep(cfg)
    written, _ = emit_figures(tmp_path / "figs", records=res.records)
    assert "density_heatmap" in written
    recs = sorted(res.records, key=lambda r: r.tau_Q)
    assert all(len(r.times) == 200 for r in recs)
    finals = [r.d_final for r in recs]
    assert np.all(np.diff(finals) < 0)


# -- command line ---------------------------------------------------------------


def write_config(tmp_path, text=BASIC):
    path = tmp_path / "run.ini"
    path.write_text(text + "[output]\ndir = out\n")
    return path


def test_cli_predict_and_sweep(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["predict", "--config", str(cfg)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4 and json.loads(lines[0])["beta_kzm"] == 0.5
    assert main(["sweep", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "curve_fermion.csv").exists()
    assert main(["run", "--config", str(cfg), "--tau-q", "0.2"]) == 0
    assert "d_final" in capsys.readouterr().out


def test_cli_config_errors(tmp_path):
    bad = write_config(tmp_path, BASIC.replace("J0 = 2", "J0 = 2\nj1 = 3"))
    assert main(["sweep", "--config", str(bad)]) == 2
    assert main(["sweep", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["run", "--config", str(write_config(tmp_path))]) == 2
    assert main(["figures", "--out", str(tmp_path / "nothing")]) == 2


def test_cli_simulation_failure(tmp_path):
    cfg = write_config(tmp_path, BASIC + "[backend]\nname = mps\nchi = 2\ntrunc_budget = 1e-9\n")
    assert main(["run", "--config", str(cfg), "--tau-q", "3"]) == 3


def test_cli_fit_failure_and_success(tmp_path):
    short = write_config(tmp_path, BASIC.replace("tau_max = 5", "tau_max = 2"))
    assert main(["sweep", "--config", str(short)]) == 0
    assert main(["fit", "--config", str(short)]) == 4
    shutil.rmtree(tmp_path / "out")
    wide = write_config(tmp_path, BASIC.replace("tau_count = 4", "tau_count = 8").replace("tau_max = 5", "tau_max = 20"))
    assert main(["sweep", "--config", str(wide)]) == 0
    assert main(["fit", "--config", str(wide)]) == 0
    assert (tmp_path / "out" / "table.csv").exists()
    assert main(["figures", "--config", str(wide)]) == 0
    assert (tmp_path / "out" / "figures" / "scaling_curves.svg").exists()
