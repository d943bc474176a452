import csv

import numpy as np
import pytest

from mldict import io
from mldict.cli import load_bundled_two_class, main
from mldict.datasets import planted_image, random_atoms, synth_hyperlines
from mldict.numerics import make_rng
from mldict.subspace import classification_experiment


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def files_of(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.txt"}


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    X, _ = synth_hyperlines(6, 3, 2, 150, 0.02, 0.25, seed=4, max_coherence=0.6)
    io.write_samples(root / "x.mat", X)
    io.write_samples(root / "tiny.mat", X[:5])
    rng = make_rng(9)
    atoms = [random_atoms(16, 6, rng, zero_mean=True), random_atoms(16, 6, rng, zero_mean=True)]
    io.write_pgm(root / "img.pgm", planted_image(atoms, 32, 32, side=4, seed=2).pixels)
    return root


def run(*argv):
    return main([str(a) for a in argv])


SMALL = {
    "train": lambda d: ["--input", d / "x.mat", "--atoms", "3", "--levels", "3"],
    "mdl-estimate": lambda d: ["--input", d / "x.mat", "--candidates", "1,2,3,4", "--levels", "2"],
    "stability": lambda d: ["--T", "60,120", "--replace", "0,10", "--trials", "2", "--dim", "6",
                            "--atoms", "3", "--planted-atoms", "3"],
    "generalize": lambda d: ["--T", "100,300", "--test-size", "200", "--dim", "6", "--atoms", "3",
                             "--levels", "2", "--rounds", "3", "--rounds-sweep", "1,3"],
    "subspace": lambda d: ["--train-per-class", "10", "--atoms", "4", "--levels", "2", "--rounds", "3"],
}


@pytest.mark.parametrize("command", sorted(SMALL))
def test_deterministic_and_manifest_rerun(command, data, tmp_path):
    args = SMALL[command](data)
    for name in ("a", "b"):
        assert run(command, *args, "--seed", 7, "--out", tmp_path / name) == 0
    first = files_of(tmp_path / "a")
    assert first and first == files_of(tmp_path / "b")
    assert run(command, "--config", tmp_path / "a" / "manifest.txt", "--out", tmp_path / "c") == 0
    assert files_of(tmp_path / "c") == first


def test_encode_and_recover_deterministic(data, tmp_path):
    assert run("train", "--input", data / "img.pgm", "--patch-side", 4, "--stride", 4,
               "--atoms", 6, "--levels", 2, "--out", tmp_path / "d") == 0
    dic = tmp_path / "d" / "dictionary.mld"
    for name in ("a", "b"):
        assert run("encode", "--dictionary", dic, "--input", data / "img.pgm", "--out", tmp_path / name) == 0
        assert run("recover", "--dictionary", dic, "--image", data / "img.pgm", "--measurements", "8,12",
                   "--snr", "none,20", "--out", tmp_path / ("r" + name)) == 0
    assert files_of(tmp_path / "a") == files_of(tmp_path / "b")
    assert files_of(tmp_path / "ra") == files_of(tmp_path / "rb")
    assert len(read_csv(tmp_path / "ra" / "recovery.csv")) == 4


def test_train_then_encode_memorizes(data, tmp_path):
    assert run("train", "--input", data / "tiny.mat", "--atoms", 5, "--levels", 1, "--out", tmp_path / "t") == 0
    assert run("encode", "--dictionary", tmp_path / "t" / "dictionary.mld", "--input", data / "tiny.mat",
               "--out", tmp_path / "e") == 0
    summary = {r["metric"]: float(r["value"]) for r in read_csv(tmp_path / "e" / "summary.csv")}
    assert summary["mse"] <= 1e-8
    code = io.read_codes(tmp_path / "e" / "codes.mlc")
    assert code.coefficients.shape[0] == 5


def test_trace_residual_decreases(data, tmp_path):
    assert run("train", "--input", data / "x.mat", "--atoms", 3, "--levels", 4, "--out", tmp_path) == 0
    res = [float(r["residual_energy"]) for r in read_csv(tmp_path / "trace.csv")]
    assert len(res) == 4 and all(b < a for a, b in zip(res, res[1:]))


def test_robust_train(data, tmp_path):
    assert run("train", "--input", data / "x.mat", "--atoms", 3, "--levels", 2, "--rounds", 3,
               "--out", tmp_path) == 0
    d = io.read_dictionary(tmp_path / "dictionary.mld")
    assert d.n_features == 6


def test_mdl_single_candidate(data, tmp_path):
    assert run("mdl-estimate", "--input", data / "x.mat", "--candidates", 3, "--levels", 3, "--out", tmp_path) == 0
    assert all(r["K"] == "3" for r in read_csv(tmp_path / "selected.csv"))
    scores = read_csv(tmp_path / "mdl_scores.csv")
    assert scores and all(r["selected"] == "1" for r in scores)


def test_identity_recovery_matches_encoding(data, tmp_path):
    assert run("train", "--input", data / "img.pgm", "--patch-side", 4, "--stride", 4, "--atoms", 6,
               "--levels", 2, "--out", tmp_path / "d") == 0
    dic = tmp_path / "d" / "dictionary.mld"
    assert run("encode", "--dictionary", dic, "--input", data / "img.pgm", "--out", tmp_path / "e") == 0
    assert run("recover", "--dictionary", dic, "--image", data / "img.pgm", "--measurements", 16,
               "--identity", "true", "--out", tmp_path / "r") == 0
    enc = {r["metric"]: float(r["value"]) for r in read_csv(tmp_path / "e" / "summary.csv")}
    rec = read_csv(tmp_path / "r" / "recovery.csv")
    assert float(rec[0]["psnr"]) == pytest.approx(enc["psnr"], abs=1e-9)
    a = io.read_pgm(tmp_path / "e" / "reconstruction.pgm")
    b = io.read_pgm(tmp_path / "r" / "recovered_N16_snrnone.pgm")
    assert np.array_equal(a, b)


def test_stability_zero_replacement(tmp_path):
    assert run(*["stability", *SMALL["stability"](None), "--out", tmp_path]) == 0
    for r in read_csv(tmp_path / "stability.csv"):
        if r["replace_count"] == "0":
            assert float(r["difference"]) == 0.0


def test_subspace_matches_library(tmp_path):
    assert run("subspace", "--train-per-class", "10,20", "--methods", "raw,lpp-mld,lde-rmld", "--atoms", 4,
               "--levels", 2, "--rounds", 3, "--seed", 3, "--out", tmp_path) == 0
    X, y = load_bundled_two_class()
    rows, embs = classification_experiment(
        X, y, [10, 20], ["raw", "lpp-mld", "lde-rmld"], 3, 2, 5, 5, 4, 2, 3, 0.25, return_embeddings=True
    )
    got = read_csv(tmp_path / "accuracy.csv")
    assert [(r["method"], float(r["accuracy"])) for r in got] == [(r["method"], r["accuracy"]) for r in rows]
    for method, emb in embs.items():
        assert np.array_equal(io.read_matrix(tmp_path / f"embedding_{method}.mat"), emb.V)


def test_missing_input_is_data_error(tmp_path, capsys):
    assert run("train", "--input", tmp_path / "nope.mat", "--out", tmp_path) == 3
    assert "nope.mat" in capsys.readouterr().err


def test_missing_required_parameter(tmp_path):
    assert run("encode", "--input", "x.mat", "--out", tmp_path) == 2


def test_bad_parameter_value(data, tmp_path):
    assert run("mdl-estimate", "--input", data / "x.mat", "--alpha", "1.5", "--out", tmp_path) == 2
    assert run("train", "--input", data / "x.mat", "--levels", "many", "--out", tmp_path) == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("seed=1\nbogus=2\n")
    assert run("stability", "--config", cfg, "--out", tmp_path) == 2


def test_identity_needs_matching_measurements(data, tmp_path):
    assert run("train", "--input", data / "img.pgm", "--patch-side", 4, "--atoms", 4, "--levels", 1,
               "--out", tmp_path / "d") == 0
    assert run("recover", "--dictionary", tmp_path / "d" / "dictionary.mld", "--image", data / "img.pgm",
               "--measurements", 8, "--identity", "true", "--out", tmp_path / "r") == 2


def test_help(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for name in SMALL:
        assert name in text
