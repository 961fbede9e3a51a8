import json
import subprocess
import sys

import numpy as np
import pytest

from relboltz.errors import ConfigError
from relboltz.harness import build_scenario, load_config, parse_config, run_scenario, shipped_scenarios
from relboltz.harness.cli import main
from relboltz.harness.io import dumps, strip_timings
from relboltz.harness.run import run_dump_path, run_estimate, run_simulate

SMALL = """
name = "tiny"
seed = 4

[spacetime]
chart = "minkowski"

[field]
kind = "juttner"
beta = 2.0

[kernel]
name = "hard_sphere"
sigma = 1.0
p_max = 15.0

[hypersurface]
kind = "flat"
t0 = 0.0

[sim]
ds = 0.05
chunk_size = 64

[simulate]
n = 20
s_max = 1.0
record = true

[estimate]
n = 50
m = [1.0, 0.0, 0.0, 0.0]
p = [0.5, 0.0, 0.0]
"""


def _write(tmp_path, text, name="tiny.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_shipped_scenarios_listed():
    names = shipped_scenarios()
    assert {"minkowski-equilibrium", "minkowski-causality", "constant-kernel-thinning",
            "schwarzschild-geodesics", "flrw-lemma"} <= set(names)
    for n in names:
        build_scenario(load_config(n))


def test_empty_check_list_passes(tmp_path):
    res = run_scenario(_write(tmp_path, SMALL), out_dir=tmp_path)
    assert res.exit_code == 0 and res.summary["n_checks"] == 0
    assert (tmp_path / "tiny.verify.json").exists()


def test_unknown_top_level_key():
    with pytest.raises(ConfigError, match="unknown top-level"):
        build_scenario(parse_config("colour = 1\n" + SMALL))


def test_unknown_run_section_key():
    with pytest.raises(ConfigError, match="estimate"):
        build_scenario(parse_config(SMALL + "\ncolour = 1\n"))


def test_unknown_sim_key():
    with pytest.raises(ConfigError, match="sim"):
        build_scenario(parse_config(SMALL.replace("chunk_size = 64", "chunk_size = 64\nturbo = true")))


def test_lambda_bar_below_bound_is_config_error():
    with pytest.raises(ConfigError, match="lambda_bar"):
        build_scenario(parse_config(SMALL.replace("chunk_size = 64", "chunk_size = 64\nlambda_bar = 1.0")))


def test_bad_chart_and_kernel():
    with pytest.raises(ConfigError, match="spacetime"):
        build_scenario(parse_config(SMALL.replace('chart = "minkowski"', 'chart = "kerr"')))
    with pytest.raises(ConfigError, match="kernel"):
        build_scenario(parse_config(SMALL.replace('name = "hard_sphere"', 'name = "coulomb"')))


def test_unknown_check_name(tmp_path):
    with pytest.raises(ConfigError, match="unknown check"):
        run_scenario(_write(tmp_path, SMALL + '\n[[checks]]\nname = "vibes"\n'), out_dir=tmp_path)


def test_bad_toml():
    with pytest.raises(ConfigError):
        parse_config("name = ")


def test_failing_check_sets_exit_code(tmp_path):
    # the estimator at a point behind the hypersurface raises inside the check
    text = SMALL + '\n[[checks]]\nname = "estimate_equilibrium"\nn = 10\npoint = [-1.0, 0.0, 0.0, 0.0]\n'
    res = run_scenario(_write(tmp_path, text), out_dir=tmp_path)
    assert res.exit_code == 1
    assert "error" in res.summary["checks"][0] and "tiny" in res.summary["checks"][0]["error"]


def test_verify_summary_deterministic_across_workers(tmp_path):
    text = SMALL + '\n[[checks]]\nname = "estimate_equilibrium"\nn = 300\n'
    cfg = _write(tmp_path, text)
    a = run_scenario(cfg, workers=1, out_dir=tmp_path / "a").summary
    b = run_scenario(cfg, workers=4, out_dir=tmp_path / "b").summary
    assert dumps(strip_timings(a)) == dumps(strip_timings(b))
    assert "timings" in a and "timings" not in strip_timings(a)


def test_seed_override_changes_result(tmp_path):
    cfg = _write(tmp_path, SMALL)
    a = run_simulate(cfg, out_dir=tmp_path / "a").summary
    b = run_simulate(cfg, seed=5, out_dir=tmp_path / "b").summary
    assert a["seed"] == 4 and b["seed"] == 5


def test_simulate_writes_states_and_events(tmp_path):
    res = run_simulate(_write(tmp_path, SMALL), out_dir=tmp_path)
    states = (tmp_path / "tiny.states.csv").read_text().splitlines()
    meta = json.loads(states[0][1:])
    assert meta["schema_version"] == 1
    assert states[1].startswith("path,s,x0")
    assert len(states) == 2 + 20
    assert (tmp_path / "tiny.events.csv").exists()
    assert res.summary["n_paths"] == 20


def test_estimate_command(tmp_path):
    res = run_estimate(_write(tmp_path, SMALL), out_dir=tmp_path)
    s = res.summary
    # at equilibrium the estimate reproduces the field value
    assert abs(s["estimate"] - s["field_value"]) <= 1e-12 * s["field_value"]


def test_estimate_needs_hypersurface(tmp_path):
    text = SMALL.replace('[hypersurface]\nkind = "flat"\nt0 = 0.0\n', "")
    with pytest.raises(ConfigError):
        run_estimate(_write(tmp_path, text), out_dir=tmp_path)


def test_dump_path(tmp_path):
    res = run_dump_path(_write(tmp_path, SMALL), out_dir=tmp_path)
    lines = (tmp_path / "tiny.path.csv").read_text().splitlines()
    assert "schema_version" in lines[0]
    assert res.summary["n_records"] == len(lines) - 2 >= 20


def test_summary_json_has_no_nan(tmp_path):
    run_scenario(_write(tmp_path, SMALL), out_dir=tmp_path)
    text = (tmp_path / "tiny.verify.json").read_text()
    json.loads(text)
    assert "NaN" not in text


def test_dumps_handles_numpy_and_nonfinite():
    out = json.loads(dumps({"a": np.float64(1.5), "b": np.arange(2), "c": float("inf")}))
    assert out == {"a": 1.5, "b": [0, 1], "c": "inf"}


def test_cli_verify_and_list(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL + '\n[[checks]]\nname = "estimate_equilibrium"\nn = 50\n')
    assert main(["verify", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS estimate_equilibrium" in out
    assert main(["--list"]) == 0
    assert "flrw-lemma" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL + "\nbogus = 1\n")
    assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["verify", "--config", str(tmp_path / "missing.toml")]) == 2


def test_cli_module_entry_point(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = subprocess.run([sys.executable, "-m", "relboltz.harness", "estimate", "--config", cfg,
                          "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert "estimate" in out.stdout


def test_shipped_equilibrium_scenario_passes(tmp_path):
    res = run_scenario("minkowski-equilibrium", out_dir=tmp_path)
    assert res.exit_code == 0, [c for c in res.summary["checks"] if not c["passed"]]
