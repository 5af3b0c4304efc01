import json
import math
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from nsch.errors import CheckpointError, ConfigError
from nsch.harness import (
    RunConfig,
    apply_overrides,
    check,
    exit_status,
    load_checkpoint,
    load_config,
    read_series,
    resume,
    run,
    save_checkpoint,
    sweep,
)
from nsch.harness.cli import main, parse_overrides
from nsch.initial_data import PerturbationSpec, make_initial
from nsch.model import ModelParams
from nsch.spectral import make_grid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _quick(tmp_path, name="out", **over):
    """Small, fast run configuration."""
    base = {
        "grid.n": 16,
        "run.t_end": 0.2,
        "run.sample_every": 5,
        "run.checks": "energy_law,conservation,apriori",
        "run.output_dir": str(tmp_path / name),
    }
    base.update(over)
    return apply_overrides(RunConfig(), base)


def _lines(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


# -- configuration ------------------------------------------------------------

def test_shipped_configs_load():
    for path in sorted(CONFIGS.glob("*.ini")):
        cfg = load_config(path, env={})
        assert cfg.t_end > 0


def test_ini_values_and_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text(
        "[grid]\nn = 32\n[step]\nadaptive = no\ndt = 0.002\n"
        "[perturbation]\nphase_sign = stripe\nneg_s_target = none\n"
        "[run]\nchecks = apriori, decay@1\noutput_dir = from_file  # comment\n"
    )
    cfg = load_config(ini, env={})
    assert cfg.n == 32 and cfg.step.adaptive is False and cfg.step.dt == 0.002
    assert cfg.perturbation.phase_sign == "stripe" and cfg.perturbation.neg_s_target is None
    assert cfg.checks == ("apriori", "decay@1") and cfg.output_dir == "from_file"
    assert load_config(ini, env={"NSCH_OUTPUT_DIR": "from_env"}).output_dir == "from_env"
    cli = load_config(ini, {"run.output_dir": "from_cli"}, env={"NSCH_OUTPUT_DIR": "from_env"})
    assert cli.output_dir == "from_cli"


@pytest.mark.parametrize(
    "over",
    [
        {"run.t_end": "0"},
        {"run.sample_every": "0"},
        {"run.checks": "energy_law,bogus"},
        {"run.checks": "decay"},
        {"run.checks": "neg_sobolev@0"},
        {"run.initial": "huge"},
        {"grid.n": "24"},
        {"grid.n": "1.5"},
        {"step.cfl": "1.5"},
        {"step.adaptive": "maybe"},
        {"perturbation.k_max": "30"},
        {"params.nu0": "-1"},
        {"nosection.x": "1"},
        {"run.nokey": "1"},
        {"params": "1"},
    ],
)
def test_invalid_overrides(over):
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), over)


def test_config_dict_round_trip():
    cfg = apply_overrides(RunConfig(), {"perturbation.delta": 0.02, "run.s_values": "0.5,1.2", "grid.dim": 3, "grid.n": 32})
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_parse_overrides():
    assert parse_overrides(["--run.t_end", "3", "--grid.n=32"]) == {"run.t_end": "3", "grid.n": "32"}
    with pytest.raises(ConfigError):
        parse_overrides(["--run.t_end"])
    with pytest.raises(ConfigError):
        parse_overrides(["stray"])


# -- checkpoints --------------------------------------------------------------

def test_checkpoint_round_trip_bit_exact(tmp_path, grid):
    state = make_initial(PerturbationSpec(delta=0.03, seed=5), grid, ModelParams())
    state = replace(state, t=1.2345678901234567)
    path = save_checkpoint(tmp_path / "c.bin", state, {"note": [1, 2]})
    back, meta = load_checkpoint(path)
    assert meta == {"note": [1, 2]}
    assert back.t == state.t
    assert back.rho.values.tobytes() == state.rho.values.tobytes()
    assert back.mom.values.tobytes() == state.mom.values.tobytes()
    assert back.c.values.tobytes() == state.c.values.tobytes()


def test_checkpoint_corruption_detected(tmp_path):
    state = make_initial(PerturbationSpec(), make_grid(2, 16), ModelParams())
    path = save_checkpoint(tmp_path / "c.bin", state)
    blob = path.read_bytes()
    (tmp_path / "trunc.bin").write_bytes(blob[: len(blob) // 2])
    flipped = bytearray(blob)
    flipped[len(blob) // 2] ^= 0xFF
    (tmp_path / "flip.bin").write_bytes(bytes(flipped))
    (tmp_path / "junk.bin").write_bytes(b"not a checkpoint at all, clearly" * 3)
    for name in ("trunc.bin", "flip.bin", "junk.bin", "absent.bin"):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / name)


# -- run ----------------------------------------------------------------------

def test_equilibrium_run(tmp_path):
    cfg = load_config(CONFIGS / "equilibrium.ini", {"run.output_dir": str(tmp_path / "eq")}, env={})
    res = run(cfg)
    assert res.exit_status == 0
    header, samples, blowup = read_series(tmp_path / "eq" / "series.ndjson")
    assert header["schema"] == "nsch-series/1" and blowup is None
    assert samples[-1]["t"] >= 1.0
    for s in samples:
        assert s["energy"]["total"] == 0.0
        assert all(v == 0.0 for v in s["norms"]["l2"].values())


def test_run_artifacts(tmp_path):
    cfg = _quick(tmp_path, **{"run.checkpoint_every": 10})
    res = run(cfg)
    out = tmp_path / "out"
    lines = _lines(out / "series.ndjson")
    assert lines[0]["kind"] == "header" and lines[-1]["kind"] == "end"
    samples = [x for x in lines if x["kind"] == "sample"]
    assert [s["step"] for s in samples[:3]] == [0, 5, 10]
    assert all(np.diff([s["t"] for s in samples]) > 0)
    for key in ("energy", "norms", "neg_energy", "cum_diss", "interval"):
        assert key in samples[1]
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert verdicts == json.loads(json.dumps(res.verdicts))
    assert set(verdicts["checks"]) == {"energy_law", "conservation", "apriori"}
    assert all("anchor" in c for c in verdicts["checks"].values())
    assert res.exit_status == 0
    state, meta = load_checkpoint(out / "checkpoint.bin")
    assert state.t == res.state.t and meta["loop"]["step"] == lines[-1]["step"]


def test_blowup_is_structured(tmp_path):
    cfg = _quick(tmp_path, **{"step.safety": 0.9, "run.initial": "large", "perturbation.delta": 0.3})
    res = run(cfg)
    assert res.exit_status == 2
    b = res.verdicts["blowup"]
    assert b["reason"] == "vacuum" and math.isfinite(b["t"])
    assert {"rho_min", "linf_phi", "apriori_bracket"} <= set(b["last_valid"])
    assert _lines(tmp_path / "out" / "series.ndjson")[-1]["kind"] == "blowup"
    assert load_checkpoint(tmp_path / "out" / "checkpoint.bin")[0].t == b["last_valid"]["t"]


def test_exit_status_is_function_of_verdicts():
    ok = {"blowup": None, "checks": {"a": {"passed": True}}}
    assert exit_status(ok) == 0
    assert exit_status({"blowup": None, "checks": {"a": {"passed": True}, "b": {"passed": False}}}) == 1
    assert exit_status({"blowup": {"t": 1.0}, "checks": {"a": {"passed": True}}}) == 2


def test_mass_leak_detected(tmp_path):
    res = run(_quick(tmp_path, **{"run.mass_leak": 1e-9}))
    cons = res.verdicts["checks"]["conservation"]
    assert not cons["passed"] and cons["mass_drift"] > 1e-10
    assert res.exit_status == 1


def test_unknown_s_is_reported(tmp_path):
    res = run(_quick(tmp_path, **{"run.checks": "neg_sobolev@1.2", "run.s_values": "0.5"}))
    rep = res.verdicts["checks"]["neg_sobolev@1.2"]
    assert rep["passed"] is False and "1.2" in rep["error"]


# -- resume -------------------------------------------------------------------

def test_resume_matches_straight_run(tmp_path):
    straight = run(_quick(tmp_path, "a", **{"run.t_end": 0.3}))
    first = run(_quick(tmp_path, "b", **{"run.t_end": 0.15}))
    assert first.exit_status == 0
    resumed = resume(tmp_path / "b" / "checkpoint.bin", {"run.t_end": 0.3})
    a, b = straight.state, resumed.state
    assert a.t == b.t
    for x, y in ((a.rho, b.rho), (a.c, b.c)):
        assert np.array_equal(x.values, y.values)
    assert np.array_equal(a.mom.values, b.mom.values)
    kinds = [x["kind"] for x in _lines(tmp_path / "b" / "series.ndjson")]
    assert kinds.count("resume") == 1 and kinds[-1] == "end"
    # the resumed series yields the same verdicts as the straight one
    assert resumed.verdicts["checks"]["conservation"] == straight.verdicts["checks"]["conservation"]


def test_resume_with_new_step_controls(tmp_path):
    run(_quick(tmp_path, **{"run.t_end": 0.1}))
    res = resume(tmp_path / "out" / "checkpoint.bin", {"run.t_end": 0.2, "step.cfl": 0.2})
    marker = [x for x in _lines(tmp_path / "out" / "series.ndjson") if x["kind"] == "resume"][0]
    assert marker["overrides"] == {"run.t_end": "0.2", "step.cfl": "0.2"}
    assert marker["config"]["step"]["cfl"] == 0.2
    assert res.state.t >= 0.2


def test_resume_rejects_model_changes(tmp_path):
    run(_quick(tmp_path, **{"run.t_end": 0.05}))
    with pytest.raises(ConfigError):
        resume(tmp_path / "out" / "checkpoint.bin", {"params.nu0": 0.2})
    with pytest.raises(ConfigError):
        resume(tmp_path / "out" / "checkpoint.bin", {"grid.n": 32})


def test_resume_from_truncated_checkpoint(tmp_path):
    run(_quick(tmp_path, **{"run.t_end": 0.05}))
    path = tmp_path / "out" / "checkpoint.bin"
    path.write_bytes(path.read_bytes()[:-100])
    with pytest.raises(CheckpointError):
        resume(path, {"run.t_end": 0.1})


# -- check and sweep ----------------------------------------------------------

def test_check_reevaluates(tmp_path):
    res = run(_quick(tmp_path))
    (tmp_path / "out" / "verdicts.json").unlink()
    again = check(tmp_path / "out")
    assert again == json.loads(json.dumps(res.verdicts))
    assert (tmp_path / "out" / "verdicts.json").exists()


def test_single_value_sweep_equals_run(tmp_path):
    cfg = _quick(tmp_path, "sw")
    rep = sweep(cfg, "perturbation.delta", [0.01])
    solo = run(_quick(tmp_path, "solo", **{"perturbation.delta": 0.01}))
    member = rep["members"][0]
    assert member["exit_status"] == solo.exit_status == 0
    assert member["apriori_ratio"] == solo.verdicts["checks"]["apriori"]["ratio"]
    lines = _lines(tmp_path / "sw" / "sweep.ndjson")
    assert [x["kind"] for x in lines] == ["header", "member", "aggregate"]
    assert (tmp_path / "sw" / "perturbation.delta=0.01" / "verdicts.json").exists()


def test_sweep_parallel_and_errors(tmp_path):
    rep = sweep(_quick(tmp_path, "par"), "perturbation.seed", [1, 2], workers=2)
    assert rep["aggregate"]["all_passed"] and len(rep["members"]) == 2
    with pytest.raises(ConfigError):
        sweep(_quick(tmp_path, "bad"), "perturbation.k_max", [3, 99])
    with pytest.raises(ConfigError):
        sweep(_quick(tmp_path, "none"), "perturbation.delta", [])


# -- command line -------------------------------------------------------------

def test_cli_run_check_norms(tmp_path, capsys):
    out = tmp_path / "cli"
    args = ["run", str(CONFIGS / "equilibrium.ini"), "--run.output_dir", str(out), "--run.t_end=0.2"]
    assert main(args) == 0
    assert "PASS  energy_law" in capsys.readouterr().out
    assert main(["check", str(out)]) == 0
    capsys.readouterr()
    assert main(["norms", str(out / "checkpoint.bin")]) == 0
    ns = json.loads(capsys.readouterr().out)
    assert ns["rho_min"] == 1.0


def test_cli_error_codes(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.ini")]) == 3
    assert main(["run", str(CONFIGS / "equilibrium.ini"), "--grid.n", "12"]) == 3
    assert main(["check", str(tmp_path), "--run.t_end", "1"]) == 3
    assert main(["norms", str(tmp_path / "missing.bin")]) == 4
    assert main(["check", str(tmp_path / "nothing")]) == 4
    assert "error" in capsys.readouterr().err


def test_cli_resume_and_sweep(tmp_path, capsys):
    out = tmp_path / "r"
    base = ["--grid.n", "16", "--run.output_dir", str(out), "--run.checks", "conservation"]
    assert main(["run", str(CONFIGS / "default_2d.ini"), "--run.t_end", "0.05", *base]) == 0
    assert main(["resume", str(out / "checkpoint.bin"), "--run.t_end", "0.1"]) == 0
    sw = ["--grid.n", "16", "--run.t_end", "0.05", "--run.output_dir", str(tmp_path / "s"), "--run.checks", "apriori"]
    assert main(["sweep", str(CONFIGS / "default_2d.ini"), "--axis", "perturbation.delta", "--values", "0.02,0.01", *sw]) == 0
    assert "perturbation.delta=0.01" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "nsch", "run", str(CONFIGS / "equilibrium.ini"),
         "--run.output_dir", str(tmp_path / "m"), "--run.t_end", "0.1"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "exit status 0" in proc.stdout
