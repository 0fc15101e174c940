import math

import numpy as np
import pytest
from scipy import stats as sps

from poisson_denoise import stats as S
from poisson_denoise.image_io import GrayImage


class TestPsnr:
    def test_known_value(self):
        ref = np.zeros((2, 2))
        cand = np.full((2, 2), 10.0)  # mse 100 -> 10 log10(255^2/100)
        assert S.psnr(ref, cand) == pytest.approx(28.1308, abs=1e-3)

    def test_identical_images_infinite(self):
        assert math.isinf(S.psnr(np.ones((3, 3)), np.ones((3, 3))))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            S.psnr(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_images_rescaled_by_peak(self):
        # same relative error at different peaks gives the same PSNR
        a = GrayImage(np.array([[1.0, 2.0]]), peak=4)
        b = GrayImage(np.array([[1.1, 2.0]]), peak=4)
        hi_a = GrayImage(a.pixels * 4, peak=16)
        hi_b = GrayImage(b.pixels * 4, peak=16)
        assert S.psnr_images(a, b) == pytest.approx(S.psnr_images(hi_a, hi_b))

    def test_lower_noise_higher_psnr(self):
        ref = GrayImage(np.full((4, 4), 2.0), peak=4)
        near = GrayImage(ref.pixels + 0.01, peak=4)
        far = GrayImage(ref.pixels + 0.5, peak=4)
        assert S.psnr_images(ref, near) > S.psnr_images(ref, far)


class TestSnr:
    def test_sqrt_law(self):
        assert S.snr_theoretical(4.0) == 2.0
        assert S.snr_theoretical(255.0) == pytest.approx(math.sqrt(255.0))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            S.snr_theoretical(-1.0)


class TestTTest:
    def test_matches_scipy_one_sample(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            d = rng.standard_normal(15) + 0.3
            t, p = S.paired_t_test(d)
            ref = sps.ttest_1samp(d, 0.0)
            assert t == pytest.approx(ref.statistic, rel=1e-12)
            assert p == pytest.approx(ref.pvalue, rel=1e-10)

    def test_benchmark_fixture(self):
        # recomputed from the 2-decimal rounded gains, so the statistic
        # lands near (not exactly at) the published 4.2418 / 0.0004
        t, p = S.paired_t_test(S.BENCHMARK_GAINS_DB)
        assert 4.19 <= t <= 4.29
        assert 0.0001 <= p <= 0.0007
        assert 0.375 <= np.mean(S.BENCHMARK_GAINS_DB) <= 0.381

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            S.paired_t_test([1.0])

    def test_zero_variance(self):
        with pytest.raises(ValueError):
            S.paired_t_test([0.5, 0.5, 0.5])

    def test_symmetry(self):
        d = np.array([0.1, 0.4, -0.2, 0.3])
        t_pos, p_pos = S.paired_t_test(d)
        t_neg, p_neg = S.paired_t_test(-d)
        assert t_neg == pytest.approx(-t_pos)
        assert p_neg == pytest.approx(p_pos)


def noisy_copy(img, scale, seed):
    rng = np.random.default_rng(seed)
    px = np.clip(img.pixels + rng.normal(0, scale, img.pixels.shape), 0, img.peak)
    return GrayImage(px, peak=img.peak)


class TestEvaluateSuite:
    def make_suite(self, n=6):
        clean, noisy = [], []
        for k in range(n):
            base = GrayImage(np.random.default_rng(k).random((16, 16)) * 4, peak=4)
            clean.append((f"im{k}", base))
            noisy.append(noisy_copy(base, 0.8, 100 + k))
        return clean, noisy

    def test_candidate_beats_baseline(self):
        clean, noisy = self.make_suite()
        ident = ("noop", lambda im: im)
        # candidate cheats toward the truth via stronger smoothing proxy:
        # average the noisy image with itself shifted (reduces iid noise)
        def smooth(im):
            px = im.pixels
            sm = (px + np.roll(px, 1, 0) + np.roll(px, 1, 1) + px) / 4.0
            return GrayImage(sm, peak=im.peak)
        report = S.evaluate_suite(clean, noisy, [ident, ("sm", smooth)],
                                  stride=2, peak=4.0)
        assert len(report.records) == 6
        assert report.stride == 2 and report.peak == 4.0
        assert all(len(r) == 4 for r in report.records)

    def test_gain_sign_and_win_rate(self):
        clean, noisy = self.make_suite()
        ident = ("noop", lambda im: im)

        def toward_mean(im):
            return GrayImage(0.7 * im.pixels + 0.3 * im.pixels.mean(),
                             peak=im.peak)
        report = S.evaluate_suite(clean, noisy, [ident, ("tm", toward_mean)])
        assert report.win_rate == pytest.approx(
            np.mean([g > 0 for _, _, _, g in report.records]))

    def test_infinite_psnr_excluded(self):
        base = GrayImage(np.random.default_rng(1).random((8, 8)) * 4, peak=4)
        clean = [("a", base), ("b", base), ("c", base)]
        noisy = [noisy_copy(base, 0.5, s) for s in range(3)]
        exact = lambda im: base  # candidate returns the reference exactly
        blur = lambda im: GrayImage(im.pixels * 0.9 + 0.1, peak=im.peak)
        report = S.evaluate_suite(clean, noisy, [("b", blur), ("e", exact)])
        assert math.isnan(report.mean_gain) or math.isfinite(report.mean_gain)
        finite_gains = [g for _, b, c, g in report.records
                        if math.isfinite(b) and math.isfinite(c)]
        assert len(finite_gains) == 0  # all candidates infinite -> excluded

    def test_requires_two_denoisers(self):
        clean, noisy = self.make_suite(2)
        with pytest.raises(ValueError):
            S.evaluate_suite(clean, noisy, [("only", lambda im: im)])

    def test_misaligned_lists(self):
        clean, noisy = self.make_suite(3)
        with pytest.raises(ValueError):
            S.evaluate_suite(clean, noisy[:-1], [("a", lambda x: x),
                                                 ("b", lambda x: x)])


class TestCsv:
    def test_eval_csv_layout(self, tmp_path):
        report = S.EvalReport(records=[("img1", 20.0, 21.5, 1.5)],
                              mean_gain=1.5, t_stat=2.0, p_value=0.05,
                              win_rate=1.0)
        path = str(tmp_path / "out.csv")
        S.write_eval_csv(report, path, config_lines=["peak=4.0"])
        lines = open(path).read().splitlines()
        assert lines[0] == "# peak=4.0"
        assert lines[1] == "image_id,baseline_psnr_db,candidate_psnr_db,gain_db"
        assert lines[2] == "img1,20.0000,21.5000,1.5000"
        assert lines[3] == "mean_gain,1.5000"
        assert lines[-1] == "win_rate,1.0000"

    def test_eval_csv_infinite(self, tmp_path):
        report = S.EvalReport(records=[("x", math.inf, 30.0, -math.inf)],
                              mean_gain=math.nan, t_stat=math.nan,
                              p_value=math.nan, win_rate=math.nan)
        path = str(tmp_path / "inf.csv")
        S.write_eval_csv(report, path)
        assert "inf" in open(path).read()

    def test_sweep_csv(self, tmp_path):
        path = str(tmp_path / "sweep.csv")
        S.write_sweep_csv([(1, 20.123456, 0.5), (4, 21.0, 0.1)], path,
                          ["stride", "psnr_db", "time_per_image_s"],
                          config_lines=["seed=0"])
        lines = open(path).read().splitlines()
        assert lines[0] == "# seed=0"
        assert lines[1] == "stride,psnr_db,time_per_image_s"
        assert lines[2] == "1,20.1235,0.5000"
