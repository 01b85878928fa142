import csv
import json

import pytest

from mvcons.cli import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUNTIME_ERROR, OverrideError, main, split_overrides

TINY_MODEL = [
    "--model.image_size", "16", "--model.stem_channels", "4", "--model.stage_blocks", "[1,1]",
    "--model.stage_dims", "[4,8]", "--model.latent_dim", "4", "--model.hidden_dim", "6",
    "--model.num_classes", "2",
]
ONE_EPOCH = ["--train.epochs", "1"]
SUBCOMMANDS = ["gen-data", "train-source", "adapt", "eval", "embed", "metrics", "plot", "gradcheck", "sweep"]


@pytest.fixture
def trained(tmp_path):
    """(data root, source checkpoint) after gen-data and one epoch of source training."""
    data = tmp_path / "data"
    assert main(["gen-data", "--out", str(data), "--classes", "2", "--per-class", "3",
                 "--image-size", "16", "--seed", "1", "--quiet"]) == EXIT_OK
    ckpt = tmp_path / "runs" / "source.ckpt"
    assert main(["train-source", "--data", str(data / "source"), "--out", str(ckpt), "--quiet"]
                + TINY_MODEL + ONE_EPOCH) == EXIT_OK
    return data, ckpt


def test_split_overrides():
    assert split_overrides(["--train.lambda", "0.5", "--augment.flip_p=0"]) == [("train.lambda", 0.5),
                                                                              ("augment.flip_p", 0)]
    with pytest.raises(OverrideError):
        split_overrides(["stray"])
    with pytest.raises(OverrideError):
        split_overrides(["--train.lambda"])


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_exits_cleanly(command, capsys):
    assert main([command, "--help"]) == EXIT_OK
    assert "usage: mvcons" in capsys.readouterr().out


def test_train_source_writes_checkpoint_log_and_record(trained):
    data, ckpt = trained
    assert ckpt.is_file()
    with open(ckpt.with_suffix(".log.csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["epoch", "lr", "l_class"] and len(rows) == 2
    record = json.loads((ckpt.parent / "run.json").read_text())["train-source"][str(ckpt)]
    assert record["config"]["model"]["latent_dim"] == 4
    assert record["seeds"] == {"init": 0, "train": 0}
    assert json.loads((data / "manifest.json").read_text())["domains"] == {"source": 6, "target": 6}


def test_adaptation_runs_without_source_data(trained, tmp_path):
    data, ckpt = trained
    (data / "source").rename(tmp_path / "source-moved")
    outputs = []
    for name in ("a.ckpt", "b.ckpt"):
        out = tmp_path / "adapted" / name
        assert main(["adapt", "--ckpt", str(ckpt), "--data", str(data / "target"), "--out", str(out),
                     "--quiet"] + ONE_EPOCH) == EXIT_OK
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    runs = json.loads((tmp_path / "adapted" / "run.json").read_text())["adapt"]
    assert sorted(runs) == sorted(str(tmp_path / "adapted" / name) for name in ("a.ckpt", "b.ckpt"))
    assert runs[str(tmp_path / "adapted" / "a.ckpt")]["config"]["model"]["hidden_dim"] == 6


def test_evaluation_and_analysis_chain(trained, tmp_path):
    data, ckpt = trained
    report = tmp_path / "eval.json"
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data / "target"), "--out", str(report),
                 "--quiet"]) == EXIT_OK
    assert 0.0 <= json.loads(report.read_text())["accuracy"] <= 1.0

    emb, points = tmp_path / "emb.csv", tmp_path / "tsne.csv"
    assert main(["embed", "--ckpt", str(ckpt), "--data", str(data / "source"), str(data / "target"),
                 "--out", str(emb), "--tsne", str(points), "--iterations", "50", "--quiet"]) == EXIT_OK
    header = emb.read_text().splitlines()[0]
    assert header == "id,label,domain,z0,z1,z2,z3"
    assert points.read_text().splitlines()[0] == "id,label,domain,y0,y1,kl_final"

    metrics = tmp_path / "metrics.json"
    assert main(["metrics", "--embeddings", str(emb), "--out", str(metrics), "--quiet"]) == EXIT_OK
    scores = json.loads(metrics.read_text())
    assert scores["n_samples"] == 12 and scores["n_clusters"] == 2
    assert -1.0 <= scores["silhouette"] <= 1.0

    svg = tmp_path / "scatter.svg"
    assert main(["plot", "--points", str(points), "--out", str(svg), "--title", "target", "--quiet"]) == EXIT_OK
    assert svg.read_text().lstrip().startswith("<?xml")


def test_repeated_runs_keep_separate_records(trained, tmp_path):
    data, ckpt = trained
    for domain in ("source", "target"):
        assert main(["embed", "--ckpt", str(ckpt), "--data", str(data / domain),
                     "--out", str(tmp_path / f"{domain}.csv"), "--quiet"]) == EXIT_OK
        assert main(["eval", "--ckpt", str(ckpt), "--data", str(data / domain), "--quiet"]) == EXIT_OK
    embeds = json.loads((tmp_path / "run.json").read_text())["embed"]
    assert sorted(embeds) == [str(tmp_path / "source.csv"), str(tmp_path / "target.csv")]
    evals = json.loads((ckpt.parent / "run.json").read_text())["eval"]
    assert sorted(evals) == [str(data / "source"), str(data / "target")]
    assert all(0.0 <= run["result"]["accuracy"] <= 1.0 for run in evals.values())
    assert evals[str(data / "target")]["result"]["domain"] == "target"


def test_raw_pixel_embedding(trained, tmp_path):
    data, _ = trained
    out = tmp_path / "raw.csv"
    assert main(["embed", "--raw", "--image-size", "16", "--data", str(data / "target"), "--out", str(out),
                 "--quiet"]) == EXIT_OK
    assert out.read_text().splitlines()[0].split(",")[-1] == "z767"


def test_sweep_writes_one_row_per_lambda(trained, tmp_path):
    data, ckpt = trained
    out = tmp_path / "sweep"
    assert main(["sweep", "--ckpt", str(ckpt), "--data", str(data / "target"), "--out", str(out),
                 "--lambdas", "0,0.5", "--quiet"] + ONE_EPOCH) == EXIT_OK
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["lambda", "l_class", "l_cons", "mean_pair_dist", "accuracy"]
    assert [row[0] for row in rows[1:]] == ["0.0", "0.5"]
    assert (out / "lambda_0.ckpt").is_file() and (out / "lambda_0.5.ckpt").is_file()


def test_gradcheck_passes():
    assert main(["gradcheck", "--quiet"]) == EXIT_OK


def test_exit_codes(tmp_path, trained):
    data, ckpt = trained
    assert main(["eval", "--ckpt", str(tmp_path / "missing.ckpt"), "--data", str(data / "target"),
                 "--quiet"]) == EXIT_RUNTIME_ERROR
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--config", str(broken), "--quiet"]) == EXIT_CONFIG_ERROR
    assert main(["adapt", "--ckpt", str(ckpt), "--data", str(data / "target"), "--out", str(tmp_path / "x.ckpt"),
                 "oops", "--quiet"]) == EXIT_CONFIG_ERROR
    assert main(["adapt", "--ckpt", str(ckpt), "--data", str(data / "target"), "--out", str(tmp_path / "x.ckpt"),
                 "--train.lambda", "-1", "--quiet"]) == EXIT_CONFIG_ERROR
    assert main(["train-source", "--data", str(data / "source"), "--out", str(tmp_path / "y.ckpt"),
                 "--quiet"] + ONE_EPOCH) == EXIT_CONFIG_ERROR
    assert main(["eval", "--quiet"]) == EXIT_CONFIG_ERROR
