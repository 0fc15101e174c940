"""Command-line front door: corruption, training, denoising, evaluation,
and the stride/peak sweep experiments.

Every run resolves a single RunConfig (CLI flags > config file > env >
defaults) and echoes it as ``# key=value`` comment lines into any report it
writes, so results are reproducible from their own header. All randomness
flows from the one ``--seed`` value.
"""

import argparse
import math
import os
import sys
import time

import numpy as np

from . import model, nn, noise, patches, stats
from .image_io import GrayImage, load_grayscale, save_grayscale, scale_to_peak

DEFAULTS = {
    "peak": 4.0,
    "seed": 0,
    "stride": 4,
    "patch_size": 64,
    "sigma": 1.0,
    "epochs": 10,
    "batch_size": 100,
    "learning_rate": 1e-3,
    "patches_per_image": 64,
    "threads": 1,
}

SWEEP_STRIDES = (1, 2, 4, 8, 16, 32)
SWEEP_PEAKS = (1.0, 2.0, 4.0, 8.0, 16.0)


class UsageError(Exception):
    pass


def _read_config_file(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {line!r}")
            key, val = line.split("=", 1)
            values[key.strip()] = val.strip()
    return values


def _resolve(args):
    """Apply precedence: CLI flag > config file > environment > default."""
    file_values = _read_config_file(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for key, default in DEFAULTS.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            resolved[key] = cli_val
        elif key in file_values:
            resolved[key] = type(default)(file_values[key])
        elif key == "seed" and "PDN_SEED" in os.environ:
            resolved[key] = int(os.environ["PDN_SEED"])
        elif key == "threads" and "PDN_THREADS" in os.environ:
            resolved[key] = int(os.environ["PDN_THREADS"])
        else:
            resolved[key] = default
    return resolved


def _config_lines(cmd, cfg, **extra):
    items = {"command": cmd, **cfg, **extra}
    return [f"{k}={v}" for k, v in items.items()]


def _load_corpus(directory):
    names = sorted(f for f in os.listdir(directory)
                   if f.lower().endswith((".pgm", ".png")))
    if not names:
        raise UsageError(f"no .pgm/.png images in {directory}")
    return [(name, load_grayscale(os.path.join(directory, name)))
            for name in names]


def _rescaled_suite(corpus, peak, seed):
    """Peak-scale each clean image and corrupt it with a per-image seed."""
    clean, noisy = [], []
    for k, (name, img) in enumerate(corpus):
        scaled = scale_to_peak(img, peak)
        clean.append((name, scaled))
        noisy.append(noise.corrupt_image(scaled, seed + 1000 * k))
    return clean, noisy


def _network_denoiser(net, stride, sigma=None):
    def run(img):
        return model.denoise_image(net, img, stride=stride, sigma=sigma)
    return run


def _vst_blur_denoiser(sigma):
    blur = noise.gaussian_blur_denoiser(sigma)

    def run(img):
        return noise.vst_denoise_pipeline(img, blur)
    return run


def cmd_corrupt(args):
    cfg = _resolve(args)
    img = scale_to_peak(load_grayscale(args.input), cfg["peak"])
    save_grayscale(noise.corrupt_image(img, cfg["seed"]), args.output)
    return 0


def _build_training_dataset(corpus, cfg):
    sources, noisy = _rescaled_suite(corpus, cfg["peak"], cfg["seed"])
    return patches.build_dataset(sources, noisy, cfg["patches_per_image"],
                                 cfg["patch_size"], cfg["peak"],
                                 split=0.8, seed=cfg["seed"])


def cmd_train(args):
    cfg = _resolve(args)
    corpus = _load_corpus(args.corpus)
    dataset = _build_training_dataset(corpus, cfg)
    config = model.NetworkConfig(patch_size=cfg["patch_size"], seed=cfg["seed"])
    net = model.build_network(config)
    report = model.train(net, dataset, epochs=cfg["epochs"],
                         batch_size=cfg["batch_size"],
                         learning_rate=cfg["learning_rate"], seed=cfg["seed"])
    model.save_network(net, args.weights)
    if args.report:
        rows = [(e + 1, report.train_mse[e], report.val_mse[e],
                 report.epoch_seconds[e])
                for e in range(report.epochs_completed)]
        stats.write_sweep_csv(rows, args.report,
                              ["epoch", "train_mse", "val_mse", "seconds"],
                              _config_lines("train", cfg,
                                            parameters=net.parameter_count))
    return 0


def cmd_denoise(args):
    cfg = _resolve(args)
    net = model.load_network(args.weights, expected_peak=cfg["peak"])
    img = load_grayscale(args.input)
    # stored bytes are in [0, 255]; map back to the working peak range
    img = GrayImage(img.pixels * (cfg["peak"] / 255.0), peak=cfg["peak"])
    out = model.denoise_image(net, img, stride=cfg["stride"])
    save_grayscale(out, args.output)
    return 0


def cmd_evaluate(args):
    cfg = _resolve(args)
    corpus = _load_corpus(args.corpus)
    net = model.load_network(args.weights, expected_peak=cfg["peak"])
    clean, noisy = _rescaled_suite(corpus, cfg["peak"], cfg["seed"])
    report = stats.evaluate_suite(
        clean, noisy,
        [("vst_blur", _vst_blur_denoiser(cfg["sigma"])),
         ("network", _network_denoiser(net, cfg["stride"]))],
        stride=cfg["stride"], peak=cfg["peak"])
    stats.write_eval_csv(report, args.report, _config_lines("evaluate", cfg))
    return 0


def cmd_sweep_stride(args):
    cfg = _resolve(args)
    corpus = _load_corpus(args.corpus)
    net = model.load_network(args.weights, expected_peak=cfg["peak"])
    clean, noisy = _rescaled_suite(corpus, cfg["peak"], cfg["seed"])
    baseline = ("vst_blur", _vst_blur_denoiser(cfg["sigma"]))
    rows = []
    # strides beyond the patch size would leave coverage gaps
    strides = [s for s in SWEEP_STRIDES if s <= net.config.patch_size]
    for stride in strides:
        t0 = time.perf_counter()
        report = stats.evaluate_suite(
            clean, noisy, [baseline, ("network", _network_denoiser(net, stride))],
            stride=stride, peak=cfg["peak"])
        elapsed = (time.perf_counter() - t0) / len(clean)
        finite = [c for _, _, c, _ in report.records if math.isfinite(c)]
        rows.append((stride, elapsed, float(np.mean(finite)),
                     report.mean_gain, report.t_stat, report.p_value))
    stats.write_sweep_csv(
        rows, args.report,
        ["stride", "time_per_image_s", "mean_psnr_db", "mean_gain_db",
         "t_stat", "p_value"],
        _config_lines("sweep-stride", cfg))
    return 0


def cmd_sweep_peak(args):
    cfg = _resolve(args)
    corpus = _load_corpus(args.corpus)
    peaks = ([float(p) for p in args.peaks.split(",")] if args.peaks
             else list(SWEEP_PEAKS))
    os.makedirs(args.weights_dir, exist_ok=True)
    rows = []
    for peak in peaks:
        cfg_peak = dict(cfg, peak=peak)
        weights_path = os.path.join(args.weights_dir, f"peak-{peak:g}.pdnw")
        if os.path.exists(weights_path):
            net = model.load_network(weights_path, expected_peak=peak)
        else:
            dataset = _build_training_dataset(corpus, cfg_peak)
            net = model.build_network(
                model.NetworkConfig(patch_size=cfg["patch_size"],
                                    seed=cfg["seed"]))
            model.train(net, dataset, epochs=cfg["epochs"],
                        batch_size=cfg["batch_size"],
                        learning_rate=cfg["learning_rate"], seed=cfg["seed"])
            model.save_network(net, weights_path)
        clean, noisy = _rescaled_suite(corpus, peak, cfg["seed"])
        report = stats.evaluate_suite(
            clean, noisy,
            [("vst_blur", _vst_blur_denoiser(cfg["sigma"])),
             ("network", _network_denoiser(net, cfg["stride"]))],
            stride=cfg["stride"], peak=peak)
        finite = [c for _, _, c, _ in report.records if math.isfinite(c)]
        rows.append((f"{peak:g}", float(np.mean(finite)), report.mean_gain,
                     report.t_stat, report.p_value, report.win_rate))
    stats.write_sweep_csv(
        rows, args.report,
        ["peak", "mean_psnr_db", "mean_gain_db", "t_stat", "p_value",
         "win_rate"],
        _config_lines("sweep-peak", cfg))
    return 0


def cmd_selftest(args):
    checks = []

    def check(name, fn):
        try:
            ok = bool(fn())
        except Exception as exc:  # a selftest must never crash the harness
            ok = False
            name = f"{name} ({exc})"
        checks.append(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name}")

    check("anscombe forward(0) = 1.22474487",
          lambda: abs(noise.anscombe_forward(0.0) - 1.22474487) < 1e-6)
    check("anscombe forward(1) = 2.34520788",
          lambda: abs(noise.anscombe_forward(1.0) - 2.34520788) < 1e-6)
    check("naive inverse(2) = 0.625",
          lambda: abs(noise.anscombe_inverse_naive(2.0) - 0.625) < 1e-6)
    check("unbiased inverse(2) = 0.78002630",
          lambda: abs(noise.anscombe_inverse_unbiased(2.0) - 0.78002630) < 1e-6)
    check("unbiased inverse(10) = 24.89263409",
          lambda: abs(noise.anscombe_inverse_unbiased(10.0) - 24.89263409) < 1e-6)

    def conv_gradients():
        rng = np.random.default_rng(11)
        layer = nn.ConvLayer(2, 3, 3, 2, rng=rng, dtype=np.float64)
        x = rng.standard_normal((1, 2, 8, 8))
        return nn.gradient_check(layer, x, seed=1) < 1e-6

    def deconv_gradients():
        rng = np.random.default_rng(12)
        layer = nn.ConvLayer(3, 2, 3, 2, transposed=True, rng=rng,
                             dtype=np.float64)
        x = rng.standard_normal((1, 3, 4, 4))
        return nn.gradient_check(layer, x, seed=1) < 1e-6

    def adjoint():
        rng = np.random.default_rng(13)
        conv = nn.ConvLayer(2, 3, 5, 2, rng=rng, dtype=np.float64)
        deconv = nn.ConvLayer(3, 2, 5, 2, transposed=True, dtype=np.float64)
        deconv.w = conv.w
        deconv.b = np.zeros(2)
        conv.b = np.zeros(3)
        x = rng.standard_normal((1, 2, 16, 16))
        y = rng.standard_normal((1, 3, 8, 8))
        lhs = float(np.sum(conv.forward(x) * y))
        rhs = float(np.sum(x * deconv.forward(y)))
        return abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)) < 1e-5

    check("conv2d gradients match finite differences", conv_gradients)
    check("deconv2d gradients match finite differences", deconv_gradients)
    check("conv/deconv adjoint identity", adjoint)

    def t_fixture():
        t, p = stats.paired_t_test(stats.BENCHMARK_GAINS_DB)
        return abs(t - 4.2418) < 0.05 and 0.0001 <= p <= 0.0007

    check("benchmark-gain t-test fixture", t_fixture)
    return 0 if all(checks) else 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="poisson-denoise",
        description="Poisson image denoising experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--peak", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--config", help="key=value config file")

    p = sub.add_parser("corrupt", help="apply seeded Poisson noise at a peak")
    common(p)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("train", help="train a denoiser on an image corpus")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--report")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--patches-per-image", dest="patches_per_image", type=int)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("denoise", help="denoise one image with trained weights")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--stride", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=cmd_denoise)

    p = sub.add_parser("evaluate",
                       help="score network vs VST+blur baseline on a corpus")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--stride", type=int)
    p.add_argument("--sigma", type=float)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sweep-stride",
                       help="evaluate at strides 1..32 with timing")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--sigma", type=float)
    p.set_defaults(fn=cmd_sweep_stride)

    p = sub.add_parser("sweep-peak",
                       help="evaluate per peak value with per-peak weights")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--weights-dir", dest="weights_dir", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--peaks", help="comma-separated peak values")
    p.add_argument("--stride", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--patches-per-image", dest="patches_per_image", type=int)
    p.set_defaults(fn=cmd_sweep_peak)

    p = sub.add_parser("selftest", help="run built-in numerical checks")
    common(p)
    p.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
