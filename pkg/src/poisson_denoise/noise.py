"""Poisson corruption and the Anscombe variance-stabilizing transform.

Corruption is seed-deterministic and pixel-order independent: each pixel
gets one uniform variate from a stateless counter-based hash of
(seed, pixel index), which is then inverted through the Poisson CDF.
"""

import numpy as np

from .image_io import GrayImage

# splitmix64 constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Beyond this rate the CDF walk gets long; switch to the normal quantile.
_INVERSION_LAMBDA_MAX = 500.0


def counter_uniforms(seed, indices):
    """Uniform [0, 1) variates from a splitmix64 hash of (seed, index).

    Stateless, so any subset of indices can be evaluated in any order and
    by any number of workers with bit-identical results.
    """
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (np.uint64(seed) + (idx + np.uint64(1)) * _GOLDEN).astype(np.uint64)
        x ^= x >> np.uint64(30)
        x *= _MIX1
        x ^= x >> np.uint64(27)
        x *= _MIX2
        x ^= x >> np.uint64(31)
    return (x >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _poisson_from_uniform(lam, u):
    """Invert the Poisson CDF: smallest k with CDF(k) >= u. Vectorized."""
    lam = np.asarray(lam, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    k = np.zeros(np.broadcast(lam, u).shape, dtype=np.int64)
    p = np.exp(-lam) * np.ones_like(k, dtype=np.float64)
    cdf = p.copy()
    unfinished = u > cdf
    lam_b = np.broadcast_to(lam, k.shape)
    j = 0
    # cap guards against the CDF saturating just below u in floating point
    cap = int(np.ceil(lam.max() + 20.0 * np.sqrt(lam.max() + 1.0) + 50.0)) if k.size else 0
    while unfinished.any() and j < cap:
        j += 1
        p = p * lam_b / j
        cdf = cdf + p
        k[unfinished] = j
        unfinished &= u > cdf
    return k


def poisson_sample(lam, rng):
    """One Poisson(lam) draw using a uniform from ``rng`` (CDF inversion).

    Returns exactly 0 for lam = 0. For very large rates the draw falls back
    to the rounded normal quantile approximation.
    """
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"lambda must be finite and >= 0, got {lam}")
    u = rng.random()
    if lam > _INVERSION_LAMBDA_MAX:
        from scipy.special import ndtri

        return int(max(0, round(lam + np.sqrt(lam) * ndtri(u))))
    return int(_poisson_from_uniform(lam, u))


def poisson_field(lams, seed):
    """Seeded, order-independent Poisson draws for an array of rates."""
    lams = np.asarray(lams, dtype=np.float64)
    if not np.all(np.isfinite(lams)) or np.any(lams < 0):
        raise ValueError("all rates must be finite and >= 0")
    u = counter_uniforms(seed, np.arange(lams.size, dtype=np.uint64)).reshape(lams.shape)
    out = np.zeros(lams.shape, dtype=np.int64)
    small = lams <= _INVERSION_LAMBDA_MAX
    if small.any():
        out[small] = _poisson_from_uniform(lams[small], u[small])
    if (~small).any():
        from scipy.special import ndtri

        big = ~small
        approx = lams[big] + np.sqrt(lams[big]) * ndtri(u[big])
        out[big] = np.maximum(0, np.rint(approx)).astype(np.int64)
    return out


def corrupt_image(img, seed):
    """Replace every pixel with a Poisson draw at rate = that pixel's value.

    Deterministic in (seed, image); the peak field is carried over.
    """
    counts = poisson_field(img.pixels, seed)
    return GrayImage(counts.astype(np.float64), peak=img.peak)


def anscombe_forward(x):
    """Variance-stabilizing transform 2*sqrt(x + 3/8)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("anscombe_forward requires x >= 0")
    out = 2.0 * np.sqrt(x + 0.375)
    return float(out) if out.ndim == 0 else out


def anscombe_inverse_naive(y):
    """Algebraic inverse (y/2)^2 - 3/8 of the forward transform."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ValueError("anscombe_inverse_naive requires y > 0")
    out = (y / 2.0) ** 2 - 0.375
    return float(out) if out.ndim == 0 else out


def anscombe_inverse_unbiased(y):
    """Closed-form unbiased inverse of the Anscombe transform.

    (1/4)y^2 - 1/8 + (1/4)sqrt(3/2) y^-1 - (11/8) y^-2 + (5/8)sqrt(3/2) y^-3
    """
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ValueError("anscombe_inverse_unbiased requires y > 0")
    s = np.sqrt(1.5)
    out = 0.25 * y**2 - 0.125 + 0.25 * s / y - 1.375 / y**2 + 0.625 * s / y**3
    return float(out) if out.ndim == 0 else out


def gaussian_blur_denoiser(sigma=1.0):
    """Placeholder Gaussian-domain denoiser: a separable Gaussian blur.

    This is NOT BM3D; it only exercises the VST pipeline plumbing and serves
    as a weak baseline.
    """
    from scipy.ndimage import gaussian_filter

    def denoise(img):
        return GrayImage(gaussian_filter(img.pixels, sigma=sigma, mode="nearest"),
                         peak=img.peak)

    return denoise


def vst_denoise_pipeline(img, denoiser):
    """Anscombe forward, plug-in Gaussian denoiser, unbiased inverse.

    Negatives from the inverse are clamped to 0 (intensities are counts).
    """
    stabilized = GrayImage(anscombe_forward(img.pixels), peak=img.peak)
    denoised = denoiser(stabilized)
    if denoised.pixels.shape != img.pixels.shape:
        raise ValueError(
            f"denoiser changed shape {img.pixels.shape} -> {denoised.pixels.shape}"
        )
    restored = anscombe_inverse_unbiased(np.maximum(denoised.pixels, 1e-12))
    return GrayImage(np.maximum(restored, 0.0), peak=img.peak)
