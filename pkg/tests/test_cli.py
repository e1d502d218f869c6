"""End-to-end tests of the command-line front end."""

from pathlib import Path

import pytest

from sacbf.cli import RunManifest, build_parser, run_cli

SCENARIO = """
[scenario]
state = -3 0 0 1
dt = 0.1
horizon = 0.5
controller = hocbf

[input]
lower = -10 -10
upper = 10 10

[safety obs]
center = 0 0
radius = 1
lambda = 2 2
eta = 1 1
"""


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(SCENARIO)
    return path


def test_run_writes_artifacts(scenario_file, tmp_path):
    out = tmp_path / "out"
    manifest = RunManifest(scenario_path=str(scenario_file),
                           controllers=("hocbf",), out_dir=str(out))
    assert run_cli(manifest) == 0
    run_dir = out / "hocbf"
    for name in ("trace.csv", "audit.csv", "summary.txt",
                 "audit_report.txt"):
        assert (run_dir / name).exists(), name
    assert not (run_dir / "figure_data.csv").exists()


def test_figures_emitted_on_request(scenario_file, tmp_path):
    out = tmp_path / "out"
    manifest = RunManifest(scenario_path=str(scenario_file),
                           controllers=("r_sacbf",), out_dir=str(out),
                           emit_figure_data=True)
    assert run_cli(manifest) == 0
    run_dir = out / "r_sacbf"
    assert (run_dir / "figure_data.csv").exists()
    for name in ("trajectory.png", "barriers.png", "inputs.png"):
        assert (run_dir / name).stat().st_size > 0, name
    header = (run_dir / "figure_data.csv").read_text().splitlines()[0]
    assert header == "t,chain_id,psi0,psi_top"


def test_heading_sweep_creates_one_dir_per_run(scenario_file, tmp_path):
    out = tmp_path / "out"
    manifest = RunManifest(scenario_path=str(scenario_file),
                           controllers=("hocbf",), out_dir=str(out),
                           headings=(0.0, 0.5))
    assert run_cli(manifest) == 0
    dirs = sorted(p.name for p in out.iterdir())
    assert len(dirs) == 2
    assert all(d.startswith("hocbf_h") for d in dirs)


def test_missing_scenario_is_reported(tmp_path, capsys):
    manifest = RunManifest(scenario_path=str(tmp_path / "nope.cfg"),
                           controllers=("hocbf",),
                           out_dir=str(tmp_path / "out"))
    assert run_cli(manifest) == 1
    assert "cannot read scenario" in capsys.readouterr().err


def test_malformed_scenario_is_reported(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("[scenario]\nstate = -3 0 0 1\n")
    manifest = RunManifest(scenario_path=str(path), controllers=("hocbf",),
                           out_dir=str(tmp_path / "out"))
    assert run_cli(manifest) == 1
    assert "error" in capsys.readouterr().err


def test_parser_flags():
    parser = build_parser()
    args = parser.parse_args(["--scenario", "s.cfg", "--out", "o",
                              "--heading", "0.1", "--heading", "0.2",
                              "--jobs", "2", "--emit-figure-data"])
    assert args.heading == [0.1, 0.2]
    assert args.jobs == 2
    assert args.emit_figure_data
    assert args.controller == "all"
