"""PSNR, the theoretical Poisson SNR, paired t-tests, and report assembly.

PSNR is always computed after rescaling both images to the 8-bit range by
255/peak, so numbers are comparable across peak values. The paired t-test
gets its two-tailed p-value from the regularized incomplete beta function.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

log = logging.getLogger(__name__)

# Per-image PSNR gains (dB) of the trained network over the classical
# VST-based benchmark on the 21-image standard test set at peak 4; used as
# a frozen fixture for the t-test machinery.
BENCHMARK_GAINS_DB = (
    0.49, 0.54, 0.96, 0.40, 0.33, 0.93, -0.14, 0.58, 0.30, 0.32, 0.34,
    -0.82, 0.32, -0.16, 0.53, 0.30, 0.68, 0.27, 0.21, 1.05, 0.50,
)


@dataclass
class EvalReport:
    records: list = field(default_factory=list)  # (image_id, base_db, cand_db, gain)
    mean_gain: float = math.nan
    t_stat: float = math.nan
    p_value: float = math.nan
    win_rate: float = math.nan
    stride: int = 1
    peak: float = math.nan


def psnr(reference, candidate, max_intensity=255.0):
    """10*log10(MAX^2 / MSE) in dB; +inf when the images are identical."""
    ref = np.asarray(reference, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    if ref.shape != cand.shape:
        raise ValueError(f"dimension mismatch {ref.shape} vs {cand.shape}")
    mse = float(np.mean((ref - cand) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_intensity * max_intensity / mse)


def psnr_images(reference, candidate):
    """PSNR between two GrayImages after rescaling both to [0, 255]."""
    scale = 255.0 / reference.peak
    return psnr(reference.pixels * scale, candidate.pixels * (255.0 / candidate.peak))


def snr_theoretical(mean_count):
    """Poisson SNR: mean/std = sqrt(mean)."""
    if mean_count < 0:
        raise ValueError("mean count must be >= 0")
    return math.sqrt(mean_count)


def student_t_p_value(t, df):
    """Two-tailed p from the regularized incomplete beta function."""
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_t_test(diffs):
    """One-sample t-test of the differences against mean 0.

    Returns (t, two-tailed p). Requires n >= 2 and nonzero variance.
    """
    d = np.asarray(diffs, dtype=np.float64)
    n = d.size
    if n < 2:
        raise ValueError("t-test needs at least 2 differences")
    s = d.std(ddof=1)
    if s == 0.0:
        raise ValueError("degenerate t-test: all differences identical")
    t = d.mean() / (s / math.sqrt(n))
    return float(t), student_t_p_value(t, n - 1)


def evaluate_suite(clean_images, corrupted_images, denoisers, stride=1,
                   peak=math.nan):
    """Score a (baseline, candidate) denoiser pair over an image suite.

    ``denoisers`` is [(name, fn), (name, fn)] with fn: GrayImage -> GrayImage
    applied to each corrupted image; gains are candidate minus baseline.
    Infinite PSNRs are excluded from the aggregate statistics.
    """
    if len(clean_images) != len(corrupted_images):
        raise ValueError("clean and corrupted image lists are misaligned")
    if len(denoisers) != 2:
        raise ValueError("evaluate_suite expects exactly (baseline, candidate)")
    if len(clean_images) < 2:
        raise ValueError("need at least 2 images for statistics")
    (_, baseline_fn), (_, candidate_fn) = denoisers
    report = EvalReport(stride=stride, peak=peak)
    for idx, ((image_id, clean), noisy) in enumerate(
            zip(clean_images, corrupted_images)):
        base_db = psnr_images(clean, baseline_fn(noisy))
        cand_db = psnr_images(clean, candidate_fn(noisy))
        report.records.append((image_id, base_db, cand_db, cand_db - base_db))
    finite = [(b, c, g) for _, b, c, g in report.records
              if math.isfinite(b) and math.isfinite(c)]
    if len(finite) < len(report.records):
        log.info("excluded %d record(s) with infinite PSNR from statistics",
                 len(report.records) - len(finite))
    gains = [g for _, _, g in finite]
    if gains:
        report.mean_gain = float(np.mean(gains))
        report.win_rate = float(np.mean([g > 0 for g in gains]))
        try:
            report.t_stat, report.p_value = paired_t_test(gains)
        except ValueError as exc:
            log.info("t-test degenerate: %s", exc)
    return report


def _fmt(value):
    if math.isinf(value):
        return "inf"
    return f"{value:.4f}"


def write_eval_csv(report, path, config_lines=()):
    """Fixed-layout CSV: per-image rows then mean/t/p/win-rate summaries."""
    with open(path, "w") as fh:
        for line in config_lines:
            fh.write(f"# {line}\n")
        fh.write("image_id,baseline_psnr_db,candidate_psnr_db,gain_db\n")
        for image_id, base_db, cand_db, gain in report.records:
            fh.write(f"{image_id},{_fmt(base_db)},{_fmt(cand_db)},{_fmt(gain)}\n")
        fh.write(f"mean_gain,{_fmt(report.mean_gain)}\n")
        fh.write(f"t_stat,{_fmt(report.t_stat)}\n")
        fh.write(f"p_value,{_fmt(report.p_value)}\n")
        fh.write(f"win_rate,{_fmt(report.win_rate)}\n")


def write_sweep_csv(rows, path, columns, config_lines=()):
    """Sweep table CSV with `#`-prefixed provenance header lines."""
    with open(path, "w") as fh:
        for line in config_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(
                str(v) if isinstance(v, (int, str)) else _fmt(v) for v in row
            ) + "\n")
