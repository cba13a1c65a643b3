import csv
import textwrap

import numpy as np
import pytest

from icsplit import datasets
from icsplit.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main
from icsplit.manifest import ConfigError, read_manifest
from icsplit.plot import render_curve
from icsplit.runner import read_curve, read_results

from conftest import MNIST_DIR, mnist_available


def shapes(n, seed):
    """Three 8x8 uint8 classes: square, cross, diagonal band."""
    r = np.random.default_rng(seed)
    protos = np.zeros((3, 8, 8))
    protos[0, 2:6, 2:6] = 1
    protos[1, 3:5, :] = protos[1, :, 3:5] = 1
    protos[2] = np.abs(np.subtract.outer(np.arange(8), np.arange(8))) <= 1
    labels = np.arange(n) % 3
    imgs = np.clip(0.8 * protos[labels] + 0.1 + r.normal(0, 0.08, (n, 8, 8)), 0, 1)
    return (imgs * 255).astype(np.uint8), labels


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    for name, n, seed in (("train", 150, 0), ("test", 90, 1)):
        imgs, labels = shapes(n, seed)
        datasets.write_idx(imgs, labels, d / f"{name}-images", d / f"{name}-labels")
    return d


def write_manifest(path, data_dir, **sections):
    body = {
        "data": {"name": "shapes", "format": "idx", "train": data_dir / "train-images",
                 "train_labels": data_dir / "train-labels", "test": data_dir / "test-images",
                 "test_labels": data_dir / "test-labels"},
        "experiment": {"classes": "0", "methods": "ours, cae", "seeds": "0, 1",
                       "n_train": 40},
        "train": {"batch_size": 16, "stage1_epochs": 3, "stage3_epochs": 2, "latent_dim": 4,
                  "filters": "2, 4, 4"},
        "output": {"directory": path.parent / "out"},
    }
    for sec, values in sections.items():
        body.setdefault(sec, {}).update(values)
    text = "".join(f"[{sec}]\n" + "".join(f"{k} = {v}\n" for k, v in kv.items()) + "\n"
                   for sec, kv in body.items())
    path.write_text(text)
    return path


def lines(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


class TestManifest:
    def test_defaults_match_reference_settings(self, tmp_path, data_dir):
        (tmp_path / "m.ini").write_text(f"[data]\ntrain = {data_dir / 'train-images'}\n")
        m = read_manifest(tmp_path / "m.ini")
        assert m.n_train == 4000 and m.seeds == (0, 1, 2, 3, 4) and m.classes == tuple(range(10))
        assert m.train.rho == 10 and m.train.batch_size == 64 and m.train.latent_dim == 64
        assert (m.ocsvm.nu, m.ocsvm.gamma) == (0.1, None)

    def test_unknown_key(self, tmp_path, data_dir):
        p = write_manifest(tmp_path / "m.ini", data_dir, train={"learning_rate": 0.1})
        with pytest.raises(ConfigError, match="learning_rate"):
            read_manifest(p)

    def test_unknown_section(self, tmp_path, data_dir):
        p = write_manifest(tmp_path / "m.ini", data_dir, model={"depth": 3})
        with pytest.raises(ConfigError, match="model"):
            read_manifest(p)

    def test_missing_file(self, tmp_path, data_dir):
        p = write_manifest(tmp_path / "m.ini", data_dir, data={"test": tmp_path / "nope"})
        with pytest.raises(ConfigError, match="not found"):
            read_manifest(p)

    @pytest.mark.parametrize("section,key,value", [
        ("train", "rho", "150"), ("train", "batch_size", "x"), ("ocsvm", "nu", "0"),
        ("experiment", "methods", "ours, vgg"), ("experiment", "methods", "external"),
        ("ocsvm", "threshold", "median"), ("data", "format", "png")])
    def test_bad_values(self, tmp_path, data_dir, section, key, value):
        p = write_manifest(tmp_path / "m.ini", data_dir, **{section: {key: value}})
        with pytest.raises(ConfigError):
            read_manifest(p)

    def test_overrides_and_env_paths(self, tmp_path, data_dir, monkeypatch):
        monkeypatch.setenv("SHAPES_DIR", str(data_dir))
        p = write_manifest(tmp_path / "m.ini", data_dir,
                           data={"train": "$SHAPES_DIR/train-images"})
        m = read_manifest(p, ["train.rho=20", "experiment.seeds=4,5"])
        assert m.train.rho == 20 and m.seeds == (4, 5)
        assert m.data.train == (data_dir / "train-images",)
        with pytest.raises(ConfigError):
            read_manifest(p, ["rho=20"])

    def test_shipped_presets_parse(self, monkeypatch):
        from pathlib import Path
        root = Path(__file__).resolve().parent.parent / "manifests"
        monkeypatch.setenv("ICSPLIT_MNIST_DIR", "/nonexistent")
        presets = sorted(root.glob("*.ini"))
        assert len(presets) >= 6
        for path in presets:
            with pytest.raises(ConfigError, match="not found"):
                read_manifest(path)

    @pytest.mark.skipif(not mnist_available(), reason="MNIST IDX files not available")
    def test_mnist_test_count_readings(self, monkeypatch):
        from pathlib import Path
        root = Path(__file__).resolve().parent.parent / "manifests"
        monkeypatch.setenv("ICSPLIT_MNIST_DIR", str(MNIST_DIR))
        a = read_manifest(root / "full-mnist-a.ini")
        b = read_manifest(root / "full-mnist-b.ini")
        assert (a.n_test_normal, a.n_test_abnormal, len(a.data.test)) == (890, 9000, 1)
        assert (b.n_test_normal, b.n_test_abnormal, b.data.test) == (None, 1000, ())


class TestRun:
    def test_rows_aggregate_and_determinism(self, tmp_path, data_dir):
        p = write_manifest(tmp_path / "m.ini", data_dir)
        assert main(["run", str(p), "--out", str(tmp_path / "a")]) == EXIT_OK
        rows = read_results(tmp_path / "a" / "results.csv")
        assert [(r.method, r.seed) for r in rows] == [("ours", 0), ("ours", 1), ("cae", 0),
                                                      ("cae", 1)]
        assert all(r.ok and 0 <= r.bacc <= 1 for r in rows)
        agg = lines(tmp_path / "a" / "aggregate.csv")
        assert agg[0] == ["normal_class", "ours", "ours_std", "cae", "cae_std", "failures"]
        assert [r[0] for r in agg[1:]] == ["0", "average"]
        ours = [r.bacc for r in rows if r.method == "ours"]
        assert float(agg[2][1]) == pytest.approx(np.mean(ours), abs=1e-6)
        assert float(agg[2][2]) == pytest.approx(np.std(ours), abs=1e-6)

        assert main(["run", str(p), "--out", str(tmp_path / "b")]) == EXIT_OK
        for name in ("results.csv", "aggregate.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_worker_pool_matches_serial(self, tmp_path, data_dir):
        p = write_manifest(tmp_path / "m.ini", data_dir,
                           experiment={"methods": "ours, original, pca"})
        main(["run", str(p), "--out", str(tmp_path / "serial")])
        main(["run", str(p), "--workers", "2", "--out", str(tmp_path / "pool")])
        assert (tmp_path / "serial" / "results.csv").read_bytes() == \
            (tmp_path / "pool" / "results.csv").read_bytes()

    def test_failed_cells_are_isolated(self, tmp_path, data_dir):
        # drop ten class-2 images so only 40 remain for a 45-image training set
        imgs, labels = shapes(150, 0)
        keep = np.ones(150, bool)
        keep[np.flatnonzero(labels == 2)[:10]] = False
        datasets.write_idx(imgs[keep], labels[keep], tmp_path / "ti", tmp_path / "tl")
        p = write_manifest(tmp_path / "m.ini", data_dir,
                           experiment={"classes": "1, 2", "methods": "original",
                                       "n_train": 45, "seeds": "0, 1"},
                           data={"train": tmp_path / "ti", "train_labels": tmp_path / "tl"})
        assert main(["run", str(p), "--out", str(tmp_path / "o")]) == EXIT_PARTIAL
        rows = read_results(tmp_path / "o" / "results.csv")
        assert [r.ok for r in rows] == [True, True, False, False]
        assert rows[2].status.startswith("error: ValueError")
        agg = lines(tmp_path / "o" / "aggregate.csv")
        assert agg[2] == ["2", "", "", "2"]
        assert agg[3][3] == "2"
        assert float(agg[3][1]) == pytest.approx(float(agg[1][1]), abs=1e-12)

    def test_config_error_exit_code(self, tmp_path, data_dir, capsys):
        p = write_manifest(tmp_path / "m.ini", data_dir, train={"bogus": 1})
        assert main(["run", str(p)]) == EXIT_CONFIG
        assert "bogus" in capsys.readouterr().err

    def test_corrupt_data_exit_code(self, tmp_path, data_dir):
        (tmp_path / "bad").write_bytes(b"\x00\x00\x08\x03\x00")
        p = write_manifest(tmp_path / "m.ini", data_dir, data={"train": tmp_path / "bad"})
        assert main(["run", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestSweeps:
    def test_rho_sweep_consistency(self, tmp_path, data_dir):
        p = write_manifest(tmp_path / "m.ini", data_dir,
                           experiment={"methods": "ours, cls"})
        main(["run", str(p), "--out", str(tmp_path / "run")])
        code = main(["sweep-rho", str(p), "--values", "0,10", "--out", str(tmp_path / "s")])
        assert code == EXIT_OK
        curve = lines(tmp_path / "s" / "curve_rho.csv")
        assert curve[0] == ["rho", "mean_bacc", "std_bacc", "n_cells", "n_failed"]
        agg = lines(tmp_path / "run" / "aggregate.csv")[-1]
        assert curve[2][1:3] == agg[1:3]  # rho=10 is the default run
        assert curve[1][1:3] == agg[3:5]  # rho=0 is the CLS baseline

    def test_beta_sweep_default_point(self, tmp_path, data_dir):
        p = write_manifest(tmp_path / "m.ini", data_dir, experiment={"methods": "ours"})
        main(["run", str(p), "--out", str(tmp_path / "run")])
        main(["sweep-beta", str(p), "--values", "1e-5", "--out", str(tmp_path / "s")])
        assert lines(tmp_path / "s" / "curve_beta.csv")[1][1:3] == \
            lines(tmp_path / "run" / "aggregate.csv")[-1][1:3]

    def test_bad_values(self, tmp_path, data_dir):
        p = write_manifest(tmp_path / "m.ini", data_dir)
        assert main(["sweep-rho", str(p), "--values", "120"]) == EXIT_CONFIG
        assert main(["sweep-beta", str(p), "--values", "0"]) == EXIT_CONFIG
        with pytest.raises(SystemExit):
            main(["sweep-beta", str(p), "--values", "a,b"])


class TestPlot:
    def curve(self, path, rows):
        path.write_text("beta,mean_bacc,std_bacc,n_cells,n_failed\n" +
                        "".join(f"{a},{b},{c},3,0\n" for a, b, c in rows))
        return path

    def test_three_points(self, tmp_path):
        c = self.curve(tmp_path / "c.csv", [(1e-7, 0.9, 0.01), (1e-5, 0.91, 0.02),
                                            (1e-3, 0.88, 0.0)])
        assert main(["export-plot", str(c), str(tmp_path / "a.svg")]) == EXIT_OK
        svg = (tmp_path / "a.svg").read_text()
        assert svg.startswith("<svg") and svg.count('class="point"') == 3
        assert svg.count('class="errorbar"') == 2
        assert "1e-05" in svg  # decade ticks on the log axis
        main(["export-plot", str(c), str(tmp_path / "b.svg")])
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_empty_curve(self, tmp_path):
        c = self.curve(tmp_path / "c.csv", [])
        assert main(["export-plot", str(c), str(tmp_path / "x.svg")]) == EXIT_CONFIG
        assert not (tmp_path / "x.svg").exists()

    def test_malformed(self, tmp_path):
        (tmp_path / "c.csv").write_text("rho,mean\n1,2\n")
        assert main(["export-plot", str(tmp_path / "c.csv"), str(tmp_path / "x.svg")]) == EXIT_CONFIG
        (tmp_path / "d.csv").write_text("rho,mean_bacc,std_bacc,n_cells,n_failed\nten,1,1,1,0\n")
        with pytest.raises(ValueError, match="d.csv:2"):
            read_curve(tmp_path / "d.csv")

    def test_linear_axis_for_rho(self):
        svg = render_curve([0, 10, 50], [0.8, 0.85, 0.7], [0, 0, 0], "rho")
        assert '>50</text>' in svg and svg.count('class="point"') == 3


def test_split_report(tmp_path, data_dir, capsys):
    p = write_manifest(tmp_path / "m.ini", data_dir, train={"rho": 20})
    assert main(["split-report", str(p), "--normal-class", "1", "--seed", "0", "--top", "3",
                 "--out", str(tmp_path / "o")]) == EXIT_OK
    rows = lines(tmp_path / "o" / "split_class1_seed0.csv")
    assert rows[0] == ["index", "score", "flag"] and len(rows) == 41
    flagged = [float(r[1]) for r in rows[1:] if r[2] == "atypical"]
    others = [float(r[1]) for r in rows[1:] if r[2] == "typical"]
    assert len(flagged) == 8 and max(flagged) <= min(others)
    out = capsys.readouterr().out
    assert "lowest SSIM" in out and "highest SSIM" in out


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "icsplit", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "sweep-rho" in res.stdout
