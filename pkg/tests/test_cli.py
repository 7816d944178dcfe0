"""Executable surface: subcommands, exit codes, determinism of outputs."""

import filecmp
import json

import numpy as np
import pytest

from kinseg.cli import main
from kinseg.data import DatasetManifest, load_dataset


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    assert run(["synth", "--out", str(root), "--seed", "7", "--classes", "3",
                "--sequences", "4", "--frames-min", "150",
                "--frames-max", "200", "--folds", "4"]) == 0
    return root


class TestSynth:
    def test_twice_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run(["synth", "--out", str(out), "--seed", "3",
                        "--classes", "3", "--sequences", "2",
                        "--frames-min", "80", "--frames-max", "100"]) == 0
        cmp = filecmp.dircmp(a, b)
        assert not cmp.diff_files
        seq_cmp = filecmp.dircmp(a / "sequences", b / "sequences")
        assert not seq_cmp.diff_files
        assert (a / "manifest.json").read_bytes() == \
            (b / "manifest.json").read_bytes()

    def test_manifest_valid(self, dataset):
        manifest = DatasetManifest.load(dataset / "manifest.json")
        assert len(manifest.sequences) == 4
        seqs = load_dataset(manifest, root=dataset)
        for s in seqs:
            s.validate()


class TestAugment:
    def test_identity_settings(self, dataset, tmp_path):
        out = tmp_path / "aug"
        assert run(["augment", "--data", str(dataset), "--out", str(out),
                    "--wfr-theta-max", "0", "--wfr-prob", "1",
                    "--hi-prob", "0", "--seed", "5"]) == 0
        orig = load_dataset(DatasetManifest.load(dataset / "manifest.json"),
                            root=dataset)
        aug = load_dataset(DatasetManifest.load(out / "manifest.json"),
                           root=out)
        for a, b in zip(orig, aug):
            assert np.allclose(a.channels, b.channels, atol=1e-9)
            assert np.array_equal(a.labels, b.labels)

    def test_rotation_changes_data(self, dataset, tmp_path):
        out = tmp_path / "aug2"
        assert run(["augment", "--data", str(dataset), "--out", str(out),
                    "--wfr-theta-max", "15", "--wfr-prob", "1",
                    "--hi-prob", "0", "--seed", "5"]) == 0
        orig = load_dataset(DatasetManifest.load(dataset / "manifest.json"),
                            root=dataset)
        aug = load_dataset(DatasetManifest.load(out / "manifest.json"),
                           root=out)
        assert not np.allclose(orig[0].channels, aug[0].channels, atol=1e-3)


class TestPreprocess:
    def test_writes_standardized_features(self, dataset, tmp_path):
        out = tmp_path / "pre"
        assert run(["preprocess", "--data", str(dataset),
                    "--out", str(out)]) == 0
        files = sorted((out / "features").glob("*.csv"))
        assert len(files) == 4
        feats = np.loadtxt(files[0], delimiter=",", skiprows=1)
        assert np.allclose(feats.mean(axis=0), 0.0, atol=1e-6)


class TestTrainEval:
    def test_train_then_eval(self, dataset, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("""
model.variant = L
model.num_layers_pg = 2
model.feature_maps = 8
model.rnn_hidden = 8
model.rnn_layers = 1
model.primary_sampling = 2
model.secondary_sampling = 3
loss.lambda = 0.3
train.lr = 0.002
train.epochs = 2
train.seeds = 0
data.fold_strategy = participant_kfold(4)
""")
        out = tmp_path / "run"
        assert run(["train", "--data", str(dataset), "--out", str(out),
                    "--config", str(cfg)]) == 0
        assert (out / "results.csv").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["records"]
        ckpts = sorted(out.glob("*.ckpt"))
        assert len(ckpts) == 4  # one per fold
        ev = tmp_path / "ev"
        assert run(["eval", "--checkpoint", str(ckpts[0]), "--data",
                    str(dataset), "--out", str(ev), "--split", "test",
                    "--fold", "0"]) == 0
        doc = json.loads((ev / "eval.json").read_text())
        assert all("pg_edit" in r for r in doc["records"])

    def test_set_overrides(self, dataset, tmp_path):
        out = tmp_path / "run2"
        assert run(["train", "--data", str(dataset), "--out", str(out),
                    "--set", "model.variant=L",
                    "--set", "model.num_layers_pg=2",
                    "--set", "model.feature_maps=8",
                    "--set", "model.rnn_hidden=8",
                    "--set", "model.rnn_layers=1",
                    "--set", "train.epochs=1",
                    "--set", "loss.lambda=0.2",
                    "--set", "data.fold_strategy=participant_kfold(4)"]) == 0


class TestExitCodes:
    def test_unknown_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--bogus"])
        assert exc.value.code == 2

    def test_runtime_failure_exits_1(self, tmp_path):
        assert run(["augment", "--data", str(tmp_path / "nope"),
                    "--out", str(tmp_path / "x")]) == 1

    def test_gradcheck_exits_0(self):
        assert run(["gradcheck", "--quiet"]) == 0
