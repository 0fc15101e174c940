"""Shared synthetic test image for the demo scripts.

Real photographs are not bundled with the repository, so the demos work on
a piecewise-smooth synthetic scene: a gentle illumination gradient with
random disks and rectangles, the kind of structure (flat regions + sharp
edges) that makes denoising quality easy to judge by PSNR.
"""

import numpy as np

from poisson_denoise import GrayImage


def synth_image(seed, size=128, peak=None):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = 0.3 + 0.4 * rng.random() * xx + 0.3 * rng.random() * yy
    for _ in range(6):
        r0, c0 = rng.integers(0, size, 2)
        rad = rng.integers(8, 40)
        val = rng.random()
        mask = (yy * size - r0) ** 2 + (xx * size - c0) ** 2 < rad ** 2
        img = np.where(mask, 0.2 + 0.8 * val, img)
    for _ in range(4):
        r0, c0 = rng.integers(0, size - 20, 2)
        h, w = rng.integers(10, 50, 2)
        img[r0:r0 + h, c0:c0 + w] = 0.1 + 0.9 * rng.random()
    img = np.clip(img, 0.02, 1.0)
    if peak is None:
        return img
    return GrayImage(img * peak, peak=peak)
