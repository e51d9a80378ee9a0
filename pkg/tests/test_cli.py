import re
import subprocess
import sys

import numpy as np
import pytest

from softad.cli import main, read_quadratic_csv
from softad.harness import read_trial_csv
from softad.verify import CHECKS


def run_cli(args):
    return main([str(a) for a in args])


def write_config(tmp_path, text, name="cfg.txt"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def roundtrip_text(path):
    """Re-emit a CSV cell-by-cell through int/float parsing; identical
    text means the file round-trips."""
    lines = path.read_text().splitlines()
    out = [lines[0]]
    for row in lines[1:]:
        cells = []
        for cell in row.split(","):
            try:
                cells.append(str(int(cell)))
            except ValueError:
                try:
                    cells.append(repr(float(cell)))
                except ValueError:
                    cells.append(cell)
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def parse_summary(path):
    blocks = {}
    for chunk in path.read_text().strip().split("\n\n"):
        entries = dict(line.split(" = ", 1) for line in chunk.splitlines())
        blocks[entries["method"]] = entries
    return blocks


TINY_TRAIN = """
methods = erm,softad
seeds = 0,1
epochs = 4
hidden = 8
n_test = 300
grid_points = 3
"""


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run_cli(["no-such-command"]) == 2
    assert run_cli(["train", "--frobnicate"]) == 2
    assert run_cli(["demo-quadratic", "--outdir", tmp_path, "--steps", "0"]) == 2
    assert run_cli(["demo-quadratic", "--outdir", tmp_path, "--steps", "many"]) == 2
    assert "usage" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert run_cli(["--help"]) == 0
    assert "demo-quadratic" in capsys.readouterr().out


def test_bad_config_lines_exit_2(tmp_path):
    missing = tmp_path / "nowhere.txt"
    assert run_cli(["train", "--config", missing]) == 2
    bad_line = write_config(tmp_path, "epochs\n", name="a.txt")
    assert run_cli(["train", "--config", bad_line, "--outdir", tmp_path]) == 2
    bad_key = write_config(tmp_path, "epoches = 3\n", name="b.txt")
    assert run_cli(["train", "--config", bad_key, "--outdir", tmp_path]) == 2
    bad_value = write_config(tmp_path, "epochs = soon\n", name="c.txt")
    assert run_cli(["train", "--config", bad_value, "--outdir", tmp_path]) == 2


def test_demo_quadratic_columns(tmp_path):
    assert run_cli(["demo-quadratic", "--outdir", tmp_path, "--steps", 50]) == 0
    data = read_quadratic_csv(tmp_path / "quadratic.csv")
    assert data["t"].tolist() == list(range(51))
    closed_form = 2.0 * 0.9 ** np.arange(51)
    assert np.max(np.abs(data["x_gd"] - closed_form)) <= 1e-12
    for m in ("gd", "flood", "softad"):
        assert np.array_equal(data[f"f_{m}"], 0.5 * data[f"x_{m}"] ** 2)


def test_demo_quadratic_theta_zero_flood_equals_gd(tmp_path):
    args = ["demo-quadratic", "--outdir", tmp_path, "--steps", 40, "--theta", "0"]
    assert run_cli(args) == 0
    data = read_quadratic_csv(tmp_path / "quadratic.csv")
    assert np.array_equal(data["x_flood"], data["x_gd"])


def test_demo_quadratic_alpha_zero_is_constant(tmp_path):
    args = ["demo-quadratic", "--outdir", tmp_path, "--steps", 10, "--alpha", "0"]
    assert run_cli(args) == 0
    data = read_quadratic_csv(tmp_path / "quadratic.csv")
    for m in ("gd", "flood", "softad"):
        assert np.all(data[f"x_{m}"] == 2.0)


def test_demo_quadratic_divergence_exits_3(tmp_path):
    args = ["demo-quadratic", "--outdir", tmp_path, "--x0", "1e300", "--alpha", "3"]
    assert run_cli(args) == 3
    data = read_quadratic_csv(tmp_path / "quadratic.csv")
    assert not np.isfinite(data["x_gd"]).all()


def test_demo_2dmean_direction_consistency(tmp_path):
    assert run_cli(["demo-2dmean", "--outdir", tmp_path, "--seed", 3]) == 0
    points = (tmp_path / "2dmean_points.csv").read_text().splitlines()
    assert points[0] == "x1,x2" and len(points) == 9
    entries = dict(
        line.split(" = ", 1)
        for line in (tmp_path / "2dmean_summary.txt").read_text().splitlines()
    )
    rows = (tmp_path / "2dmean_transformed.csv").read_text().splitlines()
    assert rows[0] == "candidate,point,weight,g1,g2" and len(rows) == 17
    for label in ("outside", "inside"):
        erm = np.array([float(v) for v in entries[f"{label}_erm"].split(",")])
        flood = np.array([float(v) for v in entries[f"{label}_flood"].split(",")])
        softad = np.array([float(v) for v in entries[f"{label}_softad"].split(",")])
        flag = float(entries[f"{label}_flood_flag"])
        # collinearity: flood is erm scaled by the sign flag
        assert erm[0] * flood[1] - erm[1] * flood[0] == 0.0
        assert np.array_equal(flood, flag * erm)
        per_point = np.array(
            [
                [float(r.split(",")[3]), float(r.split(",")[4])]
                for r in rows[1:]
                if r.startswith(label + ",")
            ]
        )
        assert per_point.shape == (8, 2)
        assert np.max(np.abs(per_point.mean(axis=0) - softad)) <= 1e-12


def test_demo_2dmean_seed_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(["demo-2dmean", "--outdir", a, "--seed", 0]) == 0
    assert run_cli(["demo-2dmean", "--outdir", b, "--seed", 1]) == 0
    assert (a / "2dmean_points.csv").read_text() != (b / "2dmean_points.csv").read_text()


def test_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path, "steps = 5\n")
    assert run_cli(["demo-quadratic", "--config", cfg, "--outdir", tmp_path]) == 0
    assert len((tmp_path / "quadratic.csv").read_text().splitlines()) == 7
    args = ["demo-quadratic", "--config", cfg, "--outdir", tmp_path, "--steps", 9]
    assert run_cli(args) == 0
    assert len((tmp_path / "quadratic.csv").read_text().splitlines()) == 11


def test_outdir_env_override(tmp_path, monkeypatch):
    env_dir = tmp_path / "from_env"
    monkeypatch.setenv("SOFTAD_OUTDIR", str(env_dir))
    assert run_cli(["demo-quadratic", "--steps", 3]) == 0
    assert (env_dir / "quadratic.csv").exists()
    flag_dir = tmp_path / "from_flag"
    assert run_cli(["demo-quadratic", "--steps", 3, "--outdir", flag_dir]) == 0
    assert (flag_dir / "quadratic.csv").exists()


def test_train_writes_summary_and_trials(tmp_path):
    cfg = write_config(tmp_path, TINY_TRAIN)
    assert run_cli(["train", "--config", cfg, "--outdir", tmp_path]) == 0
    blocks = parse_summary(tmp_path / "summary.txt")
    assert set(blocks) == {"erm", "softad"}
    assert blocks["erm"]["selected"] == "none,none"
    assert blocks["erm"]["seeds"] == "0,1"
    selected = [float(v) for v in blocks["softad"]["selected"].split(",")]
    assert all(0.01 <= v <= 2.0 for v in selected)
    for name in ("erm", "softad"):
        for seed in (0, 1):
            data = read_trial_csv(tmp_path / f"trial_{name}_seed{seed}.csv")
            assert data["epoch"].tolist() == [1, 2, 3, 4]
    gap = float(blocks["softad"]["loss_gen_gap"])
    mean_test = float(blocks["softad"]["mean_test_loss"])
    mean_train = float(blocks["softad"]["mean_train_loss"])
    assert abs(gap - (mean_test - mean_train)) <= 1e-12


def test_train_seed_flag_overrides_seed_list(tmp_path):
    cfg = write_config(tmp_path, TINY_TRAIN)
    assert run_cli(["train", "--config", cfg, "--outdir", tmp_path, "--seed", 7]) == 0
    blocks = parse_summary(tmp_path / "summary.txt")
    assert blocks["erm"]["seeds"] == "7"
    assert (tmp_path / "trial_erm_seed7.csv").exists()
    assert not (tmp_path / "trial_erm_seed0.csv").exists()


def test_train_divergence_exits_3(tmp_path):
    cfg = write_config(
        tmp_path,
        "methods = erm\nseeds = 0\nepochs = 2\nhidden =\n"
        "optimizer = sgd\nlearning_rate = 1e200\nloss = squared-error\nn_test = 50\n",
    )
    assert run_cli(["train", "--config", cfg, "--outdir", tmp_path]) == 3


def test_sweep_heatmap_output(tmp_path):
    cfg = write_config(
        tmp_path, "n_test = 200\ntheta_points = 3\nsigma_points = 2\nepochs = 5\n"
    )
    assert run_cli(["sweep-heatmap", "--config", cfg, "--outdir", tmp_path]) == 0
    lines = (tmp_path / "heatmap.csv").read_text().splitlines()
    assert lines[0] == "theta,sigma,final_test_loss"
    assert len(lines) == 7
    values = [[float(c) for c in line.split(",")] for line in lines[1:]]
    assert all(np.isfinite(v).all() for v in values)
    assert sorted({v[0] for v in values}) == [0.01, 1.005, 2.0]


def test_sweep_divergence_exits_3(tmp_path):
    cfg = write_config(
        tmp_path,
        "theta_points = 2\nsigma_points = 1\nepochs = 2\nn_test = 50\n"
        "optimizer = sgd\nlearning_rate = 1e200\nloss = squared-error\n",
    )
    assert run_cli(["sweep-heatmap", "--config", cfg, "--outdir", tmp_path]) == 3
    lines = (tmp_path / "heatmap.csv").read_text().splitlines()
    assert len(lines) == 3
    assert all(np.isnan(float(line.split(",")[2])) for line in lines[1:])


def test_verify_report_and_exit_codes(tmp_path, capsys):
    assert run_cli(["verify", "--outdir", tmp_path]) == 0
    stdout_lines = capsys.readouterr().out.splitlines()
    file_lines = (tmp_path / "verify_report.txt").read_text().splitlines()
    assert stdout_lines == file_lines
    assert len(file_lines) == len(CHECKS)
    pattern = re.compile(r"^\w+ pass measured=\S+ tol=\S+( # .*)?$")
    assert all(pattern.match(line) for line in file_lines)
    assert run_cli(["verify", "--outdir", tmp_path, "--perturb-phi", "1"]) == 1
    perturbed = (tmp_path / "verify_report.txt").read_text()
    assert "softad_direction fail" in perturbed


def test_byte_identical_reruns(tmp_path):
    cfg = write_config(tmp_path, TINY_TRAIN)
    outputs = {}
    for tag in ("first", "second"):
        out = tmp_path / tag
        assert run_cli(["demo-quadratic", "--outdir", out, "--steps", 20]) == 0
        assert run_cli(["demo-2dmean", "--outdir", out]) == 0
        assert run_cli(["train", "--config", cfg, "--outdir", out]) == 0
        outputs[tag] = {
            p.name: p.read_bytes() for p in sorted(out.iterdir())
        }
    assert outputs["first"] == outputs["second"]


def test_emitted_csvs_round_trip(tmp_path):
    cfg = write_config(tmp_path, TINY_TRAIN)
    assert run_cli(["demo-quadratic", "--outdir", tmp_path, "--steps", 12]) == 0
    assert run_cli(["demo-2dmean", "--outdir", tmp_path]) == 0
    assert run_cli(["train", "--config", cfg, "--outdir", tmp_path]) == 0
    for name in (
        "quadratic.csv",
        "2dmean_points.csv",
        "2dmean_transformed.csv",
        "trial_softad_seed0.csv",
    ):
        path = tmp_path / name
        assert roundtrip_text(path) == path.read_text()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "softad", "demo-quadratic", "--outdir", str(tmp_path), "--steps", "3"],
        capture_output=True,
    )
    assert proc.returncode == 0
    assert (tmp_path / "quadratic.csv").exists()
