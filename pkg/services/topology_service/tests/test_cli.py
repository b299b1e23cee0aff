import json

import pytest
from typer.testing import CliRunner

from topoloss.cli import app

runner = CliRunner()


def write_diagram_file(path, points, dim=0):
    path.write_text(json.dumps({"points": [{"dim": dim, "birth": b, "death": d} for b, d in points]}))
    return path


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(
        json.dumps({"n_per_circle": 8, "hidden": [8, 8, 8], "eta": 0.05, "epsilon": 1e-300, "max_iters": 3})
    )
    return path


def test_generate_writes_csv(tmp_path):
    out = tmp_path / "circles.csv"
    result = runner.invoke(app, ["generate", "--out", str(out), "--n-per-circle", "5", "--seed", "3"])
    assert result.exit_code == 0, result.output
    assert len(out.read_text().splitlines()) == 10


def test_ph_prints_diagram(tmp_path):
    cloud = tmp_path / "cloud.csv"
    cloud.write_text("0\n1\n3\n")
    result = runner.invoke(app, ["ph", str(cloud)])
    assert result.exit_code == 0, result.output
    points = json.loads(result.output)["points"]
    finite = sorted((p["birth"], p["death"]) for p in points if p["death"] is not None)
    assert finite == [(0.0, 1.0), (0.0, 2.0)]
    assert sum(p["death"] is None for p in points) == 1


def test_ph_writes_file(tmp_path):
    cloud = tmp_path / "square.csv"
    cloud.write_text("0,0\n1,0\n1,1\n0,1\n")
    out = tmp_path / "dgm.json"
    result = runner.invoke(app, ["ph", str(cloud), "--hom-dim", "1", "--out", str(out)])
    assert result.exit_code == 0, result.output
    loops = [p for p in json.loads(out.read_text())["points"] if p["dim"] == 1 and p["death"] != p["birth"]]
    assert len(loops) == 1 and loops[0]["birth"] == 1.0


def test_dist_identical_diagrams(tmp_path):
    diagram = write_diagram_file(tmp_path / "a.json", [(0.0, 2.0), (1.0, 3.0)])
    result = runner.invoke(app, ["dist", str(diagram), str(diagram)])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["distance"] == 0.0
    assert report["bottleneck"] == 0.0


def test_dist_restoration_report(tmp_path):
    truth = write_diagram_file(tmp_path / "truth.json", [(0.0, 1.0), (0.0, 0.8)])
    pred = write_diagram_file(tmp_path / "pred.json", [(0.0, 0.9)])
    result = runner.invoke(app, ["dist", str(truth), str(pred), "--q", "inf", "--restoration"])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["restoration"]["restoration_cost"] == pytest.approx(0.33)
    assert report["restoration"]["shrinking_cost"] == 0.0
    assert report["distance"] == pytest.approx(0.4)


def test_dist_invalid_q_exits_1(tmp_path):
    diagram = write_diagram_file(tmp_path / "a.json", [(0.0, 2.0)])
    result = runner.invoke(app, ["dist", str(diagram), str(diagram), "--q", "abc"])
    assert result.exit_code == 1


def test_mixed_dimensions_exit_1(tmp_path):
    first = write_diagram_file(tmp_path / "a.json", [(0.0, 2.0)], dim=0)
    second = write_diagram_file(tmp_path / "b.json", [(0.0, 2.0)], dim=1)
    assert runner.invoke(app, ["dist", str(first), str(second)]).exit_code == 1


def test_missing_file_exits_2(tmp_path):
    result = runner.invoke(app, ["ph", str(tmp_path / "nope.csv")])
    assert result.exit_code == 2


def test_malformed_csv_exits_2(tmp_path):
    cloud = tmp_path / "bad.csv"
    cloud.write_text("0,1\n1,oops\n")
    result = runner.invoke(app, ["ph", str(cloud)])
    assert result.exit_code == 2


def test_embed_flags_override_config(tmp_path, small_config):
    out = tmp_path / "run"
    result = runner.invoke(app, ["embed", "--config", str(small_config), "--seed", "1", "--out", str(out)])
    assert result.exit_code == 0, result.output
    manifest = json.loads((out / "run_config.json").read_text())
    assert manifest["seed"] == 1
    assert manifest["max_iters"] == 3
    assert (out / "embedding.svg").exists()


def test_embed_invalid_eta_exits_1(tmp_path, small_config):
    result = runner.invoke(app, ["embed", "--config", str(small_config), "--eta", "0", "--out", str(tmp_path / "run")])
    assert result.exit_code == 1


def test_embed_bad_config_exits_2(tmp_path):
    config = tmp_path / "config.json"
    config.write_text("{not json")
    assert runner.invoke(app, ["embed", "--config", str(config)]).exit_code == 2


def test_trace_reports_checks(tmp_path, small_config):
    out = tmp_path / "run"
    assert runner.invoke(app, ["embed", "--config", str(small_config), "--out", str(out)]).exit_code == 0
    result = runner.invoke(app, ["trace", str(out / "trace.csv"), "--out", str(tmp_path / "plots")])
    assert result.exit_code == 0, result.output
    assert "trace_stitching" in result.output
    assert (tmp_path / "plots" / "configuration_updates.svg").exists()


def test_sweep_runs_every_cell(tmp_path, small_config):
    out = tmp_path / "sweep"
    result = runner.invoke(app, ["sweep", "--config", str(small_config), "--out", str(out), "--n-jobs", "1"])
    assert result.exit_code == 0, result.output
    assert len([p for p in out.iterdir() if p.is_dir()]) == 4
    assert (out / "summary.csv").exists()


def test_dist_reports_parsed_q(tmp_path):
    diagram = write_diagram_file(tmp_path / "a.json", [(0.0, 2.0)])
    report = json.loads(runner.invoke(app, ["dist", str(diagram), str(diagram), "--q", "2"]).output)
    assert report["q"] == 2.0
    report = json.loads(runner.invoke(app, ["dist", str(diagram), str(diagram), "--q", "INF"]).output)
    assert report["q"] == "inf"


def test_dist_restricts_ph_output_to_one_dimension(tmp_path):
    cloud = tmp_path / "square.csv"
    cloud.write_text("0,0\n1,0\n1,1\n0,1\n")
    dgm = tmp_path / "dgm.json"
    assert runner.invoke(app, ["ph", str(cloud), "--hom-dim", "1", "--out", str(dgm)]).exit_code == 0
    assert runner.invoke(app, ["dist", str(dgm), str(dgm)]).exit_code == 1

    result = runner.invoke(app, ["dist", str(dgm), str(dgm), "--dim", "1"])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["distance"] == 0.0
    assert len(report["matching"]["pairs"]) == 1


def test_generate_rejects_equal_radii(tmp_path):
    result = runner.invoke(app, ["generate", "--out", str(tmp_path / "c.csv"), "--r1", "1", "--r2", "1"])
    assert result.exit_code == 1


def test_embed_uses_truth_file(tmp_path, small_config):
    truth = write_diagram_file(tmp_path / "truth.json", [(0.0, 1.5)])
    out = tmp_path / "run"
    result = runner.invoke(app, ["embed", "--config", str(small_config), "--truth", str(truth), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert json.loads((out / "run_config.json").read_text())["truth"] == str(truth)


def test_embed_builds_prior(tmp_path, small_config):
    out = tmp_path / "run"
    result = runner.invoke(
        app,
        ["embed", "--config", str(small_config), "--prior-beta", "2", "--prior-death", "1.5", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    prior = json.loads((out / "run_config.json").read_text())["prior"]
    assert prior == {"beta": 2, "birth": 0.0, "death": 1.5}


@pytest.mark.parametrize(
    "flags",
    [
        ["--prior-beta", "2"],
        ["--prior-death", "-1"],
        ["--prior-death", "1.5", "--truth", "truth.json"],
    ],
)
def test_embed_bad_ground_truth_flags_exit_1(tmp_path, small_config, flags):
    write_diagram_file(tmp_path / "truth.json", [(0.0, 1.5)])
    flags = [str(tmp_path / f) if f == "truth.json" else f for f in flags]
    result = runner.invoke(app, ["embed", "--config", str(small_config), *flags, "--out", str(tmp_path / "run")])
    assert result.exit_code == 1


def test_embed_resumes_from_checkpoint(tmp_path, small_config):
    first = tmp_path / "first"
    assert runner.invoke(app, ["embed", "--config", str(small_config), "--out", str(first)]).exit_code == 0
    second = tmp_path / "second"
    result = runner.invoke(
        app,
        ["embed", "--config", str(small_config), "--init-checkpoint", str(first / "network.json"), "--out", str(second)],
    )
    assert result.exit_code == 0, result.output
    first_trace = (first / "trace.csv").read_text().splitlines()
    second_trace = (second / "trace.csv").read_text().splitlines()
    # the resumed run starts where the first one stopped
    assert second_trace[1].split(",")[1] == first_trace[-1].split(",")[3]


def test_embed_checkpoint_with_wrong_width_exits_1(tmp_path, small_config):
    first = tmp_path / "first"
    assert runner.invoke(app, ["embed", "--config", str(small_config), "--out", str(first)]).exit_code == 0
    flat = tmp_path / "flat.csv"
    flat.write_text("".join(f"{i},{i * i % 7}\n" for i in range(12)))
    result = runner.invoke(
        app,
        [
            "embed",
            "--config",
            str(small_config),
            "--input",
            str(flat),
            "--init-checkpoint",
            str(first / "network.json"),
            "--out",
            str(tmp_path / "second"),
        ],
    )
    assert result.exit_code == 1
