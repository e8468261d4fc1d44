import json
import subprocess
import sys

import pytest
import yaml

from eulerlimit.cli import main

SWEEP = {
    "regime": "quasineutral",
    "d": 2,
    "flow": {"family": "taylor_green", "params": {"amplitude": 1.0}},
    "N_list": [16, 32, 64],
    "epsilon_rule": {"c": 1.0, "gamma": 0.0833333333333},
    "t_end": 0.05,
    "observation_interval": 0.05,
    "seeds": [0],
    "sampling": {"density": "uniform", "velocity_mode": "monokinetic_exact"},
}


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data) if isinstance(data, dict) else data)
    return str(path)


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


def test_kernel_check(capsys):
    code, out = run(["kernel-check", "-d", "2", "--points", "50"], capsys)
    rep = json.loads(out.out)
    assert code == 0 and rep["passed"] and rep["max_abs_error_vs_oracle"] < 1e-8


def test_kernel_check_bad_dimension(capsys):
    with pytest.raises(SystemExit) as info:
        main(["kernel-check", "-d", "4"])
    assert info.value.code == 1


def test_flow_check(capsys):
    code, out = run(["flow-check", "--flow", "beltrami_abc", "--param", "A=0.5", "--grid", "16"], capsys)
    rep = json.loads(out.out)
    assert code == 0 and rep["flow"]["A"] == 0.5
    assert max(rep["residuals"].values()) < 1e-10


@pytest.mark.parametrize("args", [["--flow", "nope"], ["--flow", "taylor_green", "--param", "amplitude"], ["--flow", "abc", "--param", "A=x"]])
def test_flow_check_config_errors(capsys, args):
    assert main(["flow-check", *args]) == 1


def test_simulate_stdout(tmp_path, capsys):
    cfg = write(tmp_path, "sim.yaml", {**SWEEP, "N_list": [32]})
    code, out = run(["simulate", "--config", cfg], capsys)
    lines = [json.loads(s) for s in out.out.splitlines()]
    assert code == 0 and [r["t"] for r in lines] == pytest.approx([0.0, 0.05])


def test_simulate_needs_single_cell(tmp_path, capsys):
    cfg = write(tmp_path, "sim.yaml", SWEEP)
    assert main(["simulate", "--config", cfg]) == 1


def test_sweep(tmp_path, capsys):
    cfg = write(tmp_path, "sweep.yaml", {**SWEEP, "output": str(tmp_path / "out")})
    code, out = run(["sweep", "--config", cfg], capsys)
    rep = json.loads(out.out)
    assert code == 0 and rep["cells"] == 3 and rep["failed_cells"] == []
    assert (tmp_path / "out" / "records.jsonl").exists()
    assert (tmp_path / "out" / "summary.csv").exists()


def test_sweep_needs_output(tmp_path, capsys):
    cfg = write(tmp_path, "sweep.yaml", SWEEP)
    assert main(["sweep", "--config", cfg]) == 1


@pytest.mark.parametrize(
    "text",
    ["regime: [unclosed", "- just\n- a list\n", yaml.safe_dump({**SWEEP, "bogus": 1})],
)
def test_bad_configs(tmp_path, capsys, text):
    cfg = write(tmp_path, "bad.yaml", text)
    assert main(["sweep", "--config", cfg]) == 1


def test_missing_config(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "none.yaml")]) == 1


def test_numerical_failure_exit_code(tmp_path, capsys, monkeypatch):
    from eulerlimit import sweep as sweep_mod

    def poisoned(self):
        self.state.velocities[:] = float("nan")
        return self.state

    monkeypatch.setattr(sweep_mod.Stepper, "step", poisoned)
    cfg = write(tmp_path, "blow.yaml", {**SWEEP, "output": str(tmp_path / "o")})
    code, out = run(["sweep", "--config", cfg], capsys)
    assert code == 2
    assert len(json.loads(out.out)["failed_cells"]) == 3
    code, _ = run(["simulate", "--config", write(tmp_path, "one.yaml", {**SWEEP, "N_list": [16]})], capsys)
    assert code == 2


def test_init_stats(tmp_path, capsys):
    cfg = write(tmp_path, "init.yaml", {"d": 3, "N_list": [8, 27, 64], "trials": 4, "output": str(tmp_path / "s")})
    code, out = run(["init-stats", "--config", cfg], capsys)
    rep = json.loads(out.out)
    assert code == 0 and len(rep["rows"]) == 3 and rep["verdict"] in ("pass", "fail")
    assert (tmp_path / "s" / "init_stats.csv").read_text().startswith("d,N,trials")


def test_init_stats_bad(tmp_path, capsys):
    assert main(["init-stats", "--config", write(tmp_path, "i.yaml", {"d": 3, "N_list": [8], "trials": 4})]) == 1
    assert main(["init-stats", "--config", write(tmp_path, "j.yaml", {"d": 3, "N_list": [8, 27, 64], "x": 1})]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "eulerlimit", "kernel-check", "-d", "3", "--points", "20"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["passed"]
