import csv

import pytest

from dataflow_sca import io as sio
from dataflow_sca.cli import main, parse_grid
from dataflow_sca.errors import InvalidArgument

GEN = ["--period", "64", "--window", "512", "--loading", "1024"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--out", str(d / "db.scatrc"), "--traces-per-config", "20",
                 "--seed", "3", *GEN]) == 0
    assert main(["prepare", "--db", str(d / "db.scatrc"), "--classifier", "knn",
                 "--out", str(d / "knn.scam"), "--grid", "n_comp=2:6", "--grid", "k=1,3"]) == 0
    return d


def test_generate_writes_dataset(workdir):
    ds = sio.read_dataset(workdir / "db.scatrc")
    assert len(ds) == 160 and ds.metadata["simulator"][0]["window_samples"] == 512


def test_generate_is_byte_reproducible(tmp_path, workdir):
    main(["generate", "--out", str(tmp_path / "b.scatrc"), "--traces-per-config", "20",
          "--seed", "3", *GEN])
    assert (tmp_path / "b.scatrc").read_bytes() == (workdir / "db.scatrc").read_bytes()


def test_prepare_prints_choice(workdir, tmp_path, capsys):
    rc = main(["prepare", "--db", str(workdir / "db.scatrc"), "--classifier", "rf",
               "--grid", "n_comp=4", "--grid", "n_estimators=10", "--grid", "min_samples_split=2",
               "--out", str(tmp_path / "rf.scam")])
    out = capsys.readouterr().out
    assert rc == 0 and "n_comp=4" in out and "validation" in out
    assert sio.load_model(tmp_path / "rf.scam").classifier_kind == "rf"


def test_attack_output(workdir, capsys):
    rc = main(["attack", "--model", str(workdir / "knn.scam"), "--trace", str(workdir / "db.scatrc")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "folding=" in out and "quantization=" in out and "time.total=" in out


def test_attack_average_mismatch_is_contract_violation(workdir, capsys):
    rc = main(["attack", "--model", str(workdir / "knn.scam"), "--trace", str(workdir / "db.scatrc"),
               "--n-average", "4"])
    assert rc == 4
    assert "contract violation" in capsys.readouterr().err


def test_evaluate_and_reproducible_csv(workdir, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["evaluate", "--model", str(workdir / "knn.scam"), "--db", str(workdir / "db.scatrc"),
                 "--out", str(a)]) == 0
    sections = {r["section"] for r in csv.DictReader(a.open(newline=""))}
    assert {"meta", "accuracy", "timing_preparation", "timing_evaluation",
            "timing_attack_1trace"} <= sections
    for out in (a, b):
        main(["evaluate", "--model", str(workdir / "knn.scam"), "--db", str(workdir / "db.scatrc"),
              "--out", str(out), "--no-timing"])
    assert a.read_bytes() == b.read_bytes()
    assert b"timing" not in a.read_bytes()


def test_export_pca(workdir, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["export-pca", "--model", str(workdir / "knn.scam"), "--db",
                 str(workdir / "db.scatrc"), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 161


def test_export_pca_baseline_rejected(workdir, tmp_path):
    model = tmp_path / "base.scam"
    assert main(["prepare", "--db", str(workdir / "db.scatrc"), "--classifier", "knn",
                 "--features", "baseline", "--grid", "n_comp=3", "--grid", "k=3",
                 "--out", str(model)]) == 0
    assert main(["export-pca", "--model", str(model), "--db", str(workdir / "db.scatrc"),
                 "--out", str(tmp_path / "s.csv")]) == 2


def test_exit_codes(workdir, tmp_path):
    bad = tmp_path / "bad.scatrc"
    bad.write_bytes(b"garbage!" + bytes(30))
    assert main(["attack", "--model", str(workdir / "knn.scam"), "--trace", str(bad)]) == 3
    assert main(["attack", "--model", str(tmp_path / "missing.scam"), "--trace", str(bad)]) == 3
    assert main(["prepare", "--db", str(workdir / "db.scatrc"), "--classifier", "knn",
                 "--out", str(tmp_path / "m.scam"), "--grid", "bogus=1"]) == 2
    assert main(["generate", "--out", str(tmp_path / "x"), "--traces-per-config", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["prepare", "--db", "x"])
    assert exc.value.code == 2


def test_parse_grid():
    assert parse_grid(["n_comp=1:4", "k=3,5", "cv_folds=3"]) == {
        "n_comp_values": (1, 2, 3, 4), "knn_k_values": (3, 5), "cv_folds": 3}
    with pytest.raises(InvalidArgument):
        parse_grid(["k="])
