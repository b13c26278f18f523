import pytest

from gpstgn.checkpoint import load_checkpoint
from gpstgn.cli import run
from gpstgn.complexity import parse_report
from gpstgn.data import load_adjacency, load_series
from gpstgn.evaluation import read_report

SMALL = ["--channels", "4,2,4", "--epochs", "2", "--batch-size", "16"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert run(["synth", "--nodes", "6", "--steps", "400", "--seed", "3", "--out", str(d)]) == 0
    return d


def data_flags(d):
    return ["--series", str(d / "series.csv"), "--adj", str(d / "adjacency.csv")]


@pytest.fixture(scope="module")
def trained(corpus):
    ckpt = corpus / "m.tlgp"
    assert run(["train", *data_flags(corpus), *SMALL, "--seed", "1", "--out", str(ckpt)]) == 0
    return ckpt


def test_synth_writes_files(corpus):
    assert load_series(corpus / "series.csv").values.shape == (400, 6)
    assert load_adjacency(corpus / "adjacency.csv").n == 6


def test_prints_resolved_config_first(corpus, capsys, tmp_path):
    run(["synth", "--nodes", "3", "--steps", "20", "--out", str(tmp_path)])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("config.")
    assert "config.noise=0.1" in lines and "config.seed=42" in lines


def test_train_writes_checkpoint_and_report(trained):
    ck = load_checkpoint(trained)
    assert ck.config.channels == ((4, 2, 4), (4, 2, 4))
    assert ck.metadata["pred_steps"] == "3"
    rows = read_report(f"{trained}.report.csv")
    assert [r["epoch"] for r in rows] == ["1", "2"]


def test_train_with_pruning(corpus, tmp_path):
    out = tmp_path / "p.tlgp"
    assert run(["train", *data_flags(corpus), *SMALL, "--prune", "--keep", "0.5", "--out", str(out)]) == 0
    ck = load_checkpoint(out)
    assert len(ck.metadata["kept"].split()) == 3
    assert run(["eval", *data_flags(corpus), "--ckpt", str(out), "--baselines", "ha",
                "--out", str(tmp_path / "e.csv")]) == 0


def test_eval_reports_models(corpus, trained, tmp_path):
    out, series_out = tmp_path / "metrics.csv", tmp_path / "series.csv"
    code = run(["eval", *data_flags(corpus), "--ckpt", str(trained), "--epochs", "2", "--fnn-hidden", "8",
                "--out", str(out), "--series-out", str(series_out), "--sensor", "2"])
    assert code == 0
    rows = read_report(out)
    assert [r["model"] for r in rows] == ["stgcn", "ha", "fnn"]
    assert all(float(r["mae"]) >= 0 for r in rows)
    test_rows = 400 - int(400 * 0.85)
    assert len(read_report(series_out)) == test_rows - 12 - 3 + 1


def test_transfer_command(corpus, trained, tmp_path):
    code = run(["transfer", *data_flags(corpus), "--source", str(trained), "--fraction", "0.5", "1.0",
                "--epochs", "1", "--out", str(tmp_path / "t.csv"), "--ckpt-out", str(tmp_path / "ft")])
    assert code == 0
    rows = read_report(tmp_path / "t.csv")
    assert [r["f"] for r in rows] == ["0.5", "1.0"]
    assert rows[0]["scratch_mae"] != ""
    assert load_checkpoint(tmp_path / "ft.f0.5.h15").metadata["transfer_fraction"] == "0.5"


def test_complexity_analytic(capsys, tmp_path):
    assert run(["complexity", "--cin", "16", "--cout", "32", "--kt", "3", "--m", "10000", "--blocks", "2",
                "--out", str(tmp_path / "c.txt")]) == 0
    rep = parse_report((tmp_path / "c.txt").read_text())
    assert float(rep["align_frobenius"]) == pytest.approx(4.6188, abs=1e-4)
    assert float(rep["conv_frobenius"]) == pytest.approx(8.0, abs=1e-12)
    assert float(rep["layer_bound"]) == pytest.approx(0.12619, abs=1e-5)


def test_complexity_measured(trained, tmp_path):
    assert run(["complexity", "--ckpt", str(trained), "--m", "100", "--out", str(tmp_path / "c.txt")]) == 0
    rep = parse_report((tmp_path / "c.txt").read_text())
    assert rep["mode"] == "measured"
    assert 0 < float(rep["network_bound_single"]) < float("inf")


def test_usage_errors_exit_1(corpus):
    assert run(["train", "--bogus"]) == 1
    assert run(["nonsense"]) == 1
    assert run(["train", *data_flags(corpus)]) == 1  # missing --out


def test_horizon_not_multiple_exit_2(corpus, tmp_path, capsys):
    code = run(["train", *data_flags(corpus), *SMALL, "--horizon-min", "12", "--out", str(tmp_path / "x")])
    assert code == 2
    assert "remainder 2" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert run(["train", "--series", str(tmp_path / "no.csv"), "--adj", str(tmp_path / "no.csv"),
                "--out", str(tmp_path / "x")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_exit_3(corpus, tmp_path):
    code = run(["train", *data_flags(corpus), *SMALL, "--lr", "1e300", "--out", str(tmp_path / "x")])
    assert code == 3


def test_config_file_merges_under_flags(corpus, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# comment\nseries={corpus / 'series.csv'}\nadj={corpus / 'adjacency.csv'}\n"
                   "epochs=1\nseed=7\nchannels=4,2,4\nprune=true\n")
    out = tmp_path / "m.tlgp"
    assert run(["--config", str(cfg), "train", "--seed", "8", "--out", str(out)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert "config.seed=8" in printed and "config.epochs=1" in printed and "config.prune=True" in printed
    assert load_checkpoint(out).metadata["seed"] == "8"


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("wibble=3\n")
    assert run(["--config", str(cfg), "complexity"]) == 1


def test_reruns_are_byte_identical(corpus, tmp_path):
    outs = []
    for i in range(2):
        ck = tmp_path / f"r{i}.tlgp"
        assert run(["train", *data_flags(corpus), *SMALL, "--out", str(ck)]) == 0
        ev = tmp_path / f"e{i}.csv"
        assert run(["eval", *data_flags(corpus), "--ckpt", str(ck), "--baselines", "ha", "--out", str(ev)]) == 0
        outs.append((ck.read_bytes(), ev.read_bytes(), (tmp_path / f"r{i}.tlgp.report.csv").read_bytes()))
    assert outs[0] == outs[1]
