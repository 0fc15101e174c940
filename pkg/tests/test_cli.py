import argparse
import os

import numpy as np
import pytest

from poisson_denoise import cli
from poisson_denoise.image_io import GrayImage, load_grayscale, save_grayscale

from conftest import synth_image


def make_corpus(tmp_path, n=3, size=32):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for k in range(n):
        img = GrayImage(synth_image(k, size=size) * 255.0, peak=255)
        save_grayscale(img, str(corpus / f"img{k}.pgm"))
    return str(corpus)


def run(argv):
    return cli.main(argv)


class TestConfigResolution:
    def make_args(self, **kw):
        ns = argparse.Namespace(config=None)
        for key in cli.DEFAULTS:
            setattr(ns, key, None)
        for key, val in kw.items():
            setattr(ns, key, val)
        return ns

    def test_defaults_apply(self):
        cfg = cli._resolve(self.make_args())
        assert cfg == cli.DEFAULTS

    def test_cli_beats_default(self):
        cfg = cli._resolve(self.make_args(peak=8.0))
        assert cfg["peak"] == 8.0

    def test_config_file_beats_env(self, tmp_path, monkeypatch):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nseed = 42\npeak=2.0\n")
        monkeypatch.setenv("PDN_SEED", "7")
        cfg = cli._resolve(self.make_args(config=str(path)))
        assert cfg["seed"] == 42
        assert cfg["peak"] == 2.0

    def test_cli_beats_config_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("peak=2.0\n")
        cfg = cli._resolve(self.make_args(config=str(path), peak=16.0))
        assert cfg["peak"] == 16.0

    def test_env_beats_default(self, monkeypatch):
        monkeypatch.setenv("PDN_SEED", "99")
        monkeypatch.setenv("PDN_THREADS", "2")
        cfg = cli._resolve(self.make_args())
        assert cfg["seed"] == 99
        assert cfg["threads"] == 2

    def test_bad_config_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("this is not a pair\n")
        with pytest.raises(cli.UsageError):
            cli._resolve(self.make_args(config=str(path)))


class TestCorrupt:
    def test_deterministic_output(self, tmp_path):
        src = tmp_path / "in.pgm"
        save_grayscale(GrayImage(synth_image(0, size=32) * 255, peak=255),
                       str(src))
        out1, out2 = str(tmp_path / "a.pgm"), str(tmp_path / "b.pgm")
        assert run(["corrupt", "--seed", "5", str(src), out1]) == 0
        assert run(["corrupt", "--seed", "5", str(src), out2]) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()

    def test_seed_changes_output(self, tmp_path):
        src = tmp_path / "in.pgm"
        save_grayscale(GrayImage(synth_image(0, size=32) * 255, peak=255),
                       str(src))
        out1, out2 = str(tmp_path / "a.pgm"), str(tmp_path / "b.pgm")
        run(["corrupt", "--seed", "5", str(src), out1])
        run(["corrupt", "--seed", "6", str(src), out2])
        assert open(out1, "rb").read() != open(out2, "rb").read()

    def test_missing_input_exit_2(self, tmp_path):
        assert run(["corrupt", str(tmp_path / "none.pgm"),
                    str(tmp_path / "o.pgm")]) == 2


class TestSelftest:
    def test_passes(self, capsys):
        assert run(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("pipe")
    corpus = make_corpus(tmp_path, n=3, size=32)
    weights = str(tmp_path / "net.pdnw")
    report = str(tmp_path / "train.csv")
    code = run(["train", "--corpus", corpus, "--weights", weights,
                "--report", report, "--patch-size", "8",
                "--patches-per-image", "16", "--epochs", "2",
                "--batch-size", "10", "--seed", "1"])
    assert code == 0
    return tmp_path, corpus, weights, report


class TestPipeline:
    def test_train_writes_weights_and_report(self, trained):
        _, _, weights, report = trained
        assert open(weights, "rb").read(4) == b"PDNW"
        lines = open(report).read().splitlines()
        assert any(l.startswith("# command=train") for l in lines)
        assert any(l.startswith("# seed=1") for l in lines)
        header = [l for l in lines if not l.startswith("#")][0]
        assert header == "epoch,train_mse,val_mse,seconds"

    def test_denoise_roundtrip(self, trained):
        tmp_path, _, weights, _ = trained
        src = str(tmp_path / "noisy.pgm")
        save_grayscale(GrayImage(synth_image(7, size=32) * 255, peak=255), src)
        out = str(tmp_path / "out.pgm")
        assert run(["denoise", "--weights", weights, "--stride", "4",
                    src, out]) == 0
        img = load_grayscale(out)
        assert img.pixels.shape == (32, 32)

    def test_evaluate_report(self, trained):
        tmp_path, corpus, weights, _ = trained
        report = str(tmp_path / "eval.csv")
        assert run(["evaluate", "--corpus", corpus, "--weights", weights,
                    "--report", report, "--stride", "4", "--seed", "1"]) == 0
        lines = open(report).read().splitlines()
        data = [l for l in lines if not l.startswith("#")]
        assert data[0] == "image_id,baseline_psnr_db,candidate_psnr_db,gain_db"
        assert len([l for l in data if l.startswith("img")]) == 3
        assert data[-1].startswith("win_rate,")

    def test_sweep_stride_report(self, trained):
        tmp_path, corpus, weights, _ = trained
        report = str(tmp_path / "sweep.csv")
        assert run(["sweep-stride", "--corpus", corpus, "--weights", weights,
                    "--report", report, "--seed", "1"]) == 0
        lines = [l for l in open(report).read().splitlines()
                 if not l.startswith("#")]
        assert lines[0].startswith("stride,time_per_image_s,mean_psnr_db")
        usable = [s for s in cli.SWEEP_STRIDES if s <= 8]  # net patch size 8
        assert len(lines) == 1 + len(usable)

    def test_missing_weights_exit_2(self, trained):
        tmp_path, corpus, _, _ = trained
        assert run(["evaluate", "--corpus", corpus,
                    "--weights", str(tmp_path / "nope.pdnw"),
                    "--report", str(tmp_path / "r.csv")]) == 2

    def test_empty_corpus_exit_1(self, trained, tmp_path):
        _, _, weights, _ = trained
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run(["evaluate", "--corpus", str(empty), "--weights", weights,
                    "--report", str(tmp_path / "r.csv")]) == 1


class TestSweepPeak:
    def test_trains_and_caches_per_peak(self, tmp_path):
        corpus = make_corpus(tmp_path, n=2, size=32)
        wdir = str(tmp_path / "weights")
        report = str(tmp_path / "peaks.csv")
        argv = ["sweep-peak", "--corpus", corpus, "--weights-dir", wdir,
                "--report", report, "--peaks", "2,4", "--patch-size", "8",
                "--patches-per-image", "8", "--epochs", "1",
                "--batch-size", "5", "--stride", "8", "--seed", "2"]
        assert run(argv) == 0
        assert sorted(os.listdir(wdir)) == ["peak-2.pdnw", "peak-4.pdnw"]
        lines = [l for l in open(report).read().splitlines()
                 if not l.startswith("#")]
        assert lines[0].startswith("peak,mean_psnr_db")
        assert len(lines) == 3
        # second run reuses the cached weights and must reproduce the report
        first = open(report).read()
        assert run(argv) == 0
        assert open(report).read() == first


def test_unknown_command_exit_1():
    assert run(["frobnicate"]) == 1
