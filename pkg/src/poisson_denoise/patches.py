"""Patch extraction, dataset assembly, and Gaussian-weighted reconstruction.

Overlapping square patches are taken on a stride grid (with a final anchor
clamped to the border when the stride does not divide), and stitched back
with a 2D Gaussian weight per patch so overlaps blend smoothly.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .image_io import GrayImage

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    stride: int
    anchors: np.ndarray  # (N, 2) int array of (row, col) top-left corners
    source_shape: tuple  # (height, width)


@dataclass
class PatchDataset:
    """Noisy/clean patch pairs, normalized to ~[0, 1] by the peak value."""

    inputs: np.ndarray   # (N, P, P) float32, noisy, normalized
    targets: np.ndarray  # (N, P, P) float32, clean, normalized
    peak: float
    split: float                      # training fraction
    records: list = field(default_factory=list)  # (source_id, row, col, tag)

    @property
    def train_indices(self):
        return [i for i, r in enumerate(self.records) if r[3] == "train"]

    @property
    def val_indices(self):
        return [i for i, r in enumerate(self.records) if r[3] == "val"]


def _axis_anchors(extent, patch_size, stride):
    anchors = list(range(0, extent - patch_size + 1, stride))
    if anchors[-1] != extent - patch_size:
        anchors.append(extent - patch_size)  # clamp last anchor for full coverage
    return anchors


def extract_grid(img, patch_size, stride):
    """All patches on the stride grid. Returns (PatchGrid, (N, P, P) array)."""
    px = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    h, w = px.shape
    if patch_size > min(h, w):
        raise ValueError(f"patch size {patch_size} exceeds image {h}x{w}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if stride > patch_size:
        raise ValueError(
            f"stride {stride} > patch size {patch_size} leaves coverage gaps"
        )
    rows = _axis_anchors(h, patch_size, stride)
    cols = _axis_anchors(w, patch_size, stride)
    anchors = np.array([(r, c) for r in rows for c in cols], dtype=np.int64)
    patches = np.stack([px[r:r + patch_size, c:c + patch_size].copy()
                        for r, c in anchors])
    grid = PatchGrid(patch_size, stride, anchors, (h, w))
    return grid, patches


def grid_patch_count(extent, patch_size, stride):
    """Anchor count along one axis, including the clamped border anchor."""
    return len(_axis_anchors(extent, patch_size, stride))


def sample_random_patches(img, n, patch_size, seed):
    """n uniformly random patches; seed-deterministic, copies not views."""
    px = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    h, w = px.shape
    if patch_size > min(h, w):
        raise ValueError(f"patch size {patch_size} exceeds image {h}x{w}")
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, h - patch_size + 1, size=n)
    cols = rng.integers(0, w - patch_size + 1, size=n)
    anchors = np.stack([rows, cols], axis=1).astype(np.int64)
    patches = np.stack([px[r:r + patch_size, c:c + patch_size].copy()
                        for r, c in anchors])
    return anchors, patches


def gaussian_weight_map(patch_size, sigma):
    """Weights exp(-((i-c)^2 + (j-c)^2) / (2 sigma^2)), c = (P-1)/2."""
    if not (sigma > 0):
        raise ValueError("sigma must be positive")
    c = (patch_size - 1) / 2.0
    ax = np.arange(patch_size, dtype=np.float64) - c
    sq = ax[:, None] ** 2 + ax[None, :] ** 2
    return np.exp(-sq / (2.0 * sigma * sigma))


def default_sigma(patch_size):
    return patch_size / 4.0


def reconstruct_from_patches(patches, grid, sigma=None):
    """Stitch patches back with Gaussian-weighted overlap averaging.

    Every pixel is covered by at least one patch (PatchGrid invariant) and
    all weights are strictly positive, so normalization is well defined.
    """
    patches = np.asarray(patches, dtype=np.float64)
    if len(patches) != len(grid.anchors):
        raise ValueError(
            f"got {len(patches)} patches for {len(grid.anchors)} anchors"
        )
    p = grid.patch_size
    if sigma is None:
        sigma = default_sigma(p)
    w = gaussian_weight_map(p, sigma)
    num = np.zeros(grid.source_shape, dtype=np.float64)
    den = np.zeros(grid.source_shape, dtype=np.float64)
    for (r, c), patch in zip(grid.anchors, patches):
        num[r:r + p, c:c + p] += w * patch
        den[r:r + p, c:c + p] += w
    assert den.min() > 0.0, "patch grid left uncovered pixels"
    return num / den


def split_counts(n_total, split=0.8):
    """Exact (train, val) sizes: train = floor(n * split)."""
    train = int(n_total * split + 1e-9)
    return train, n_total - train


def assign_split(n_total, split, seed):
    """Deterministic shuffled split tags, 'train'/'val', exact floor counts."""
    n_train, _ = split_counts(n_total, split)
    order = np.random.default_rng(seed).permutation(n_total)
    tags = np.empty(n_total, dtype=object)
    tags[order[:n_train]] = "train"
    tags[order[n_train:]] = "val"
    return tags.tolist()


def build_dataset(sources, noisy_images, patches_per_image, patch_size, peak,
                  split=0.8, seed=0):
    """Assemble a PatchDataset from aligned (id, clean, noisy) images.

    ``sources`` is a list of (source_id, GrayImage) clean pairs and
    ``noisy_images`` the corresponding corrupted images. Patch anchors are
    sampled on the clean image and reused on the noisy one so every
    input/target pair shares coordinates. Undersized images are skipped
    with a warning.
    """
    inputs, targets, records = [], [], []
    for k, ((source_id, clean), noisy) in enumerate(zip(sources, noisy_images)):
        if min(clean.height, clean.width) < patch_size:
            log.warning("skipping undersized source %s (%dx%d)",
                        source_id, clean.height, clean.width)
            continue
        anchors, clean_patches = sample_random_patches(
            clean, patches_per_image, patch_size, seed=(seed, k))
        for (r, c), cp in zip(anchors, clean_patches):
            npatch = noisy.pixels[r:r + patch_size, c:c + patch_size]
            inputs.append((npatch / peak).astype(np.float32))
            targets.append((cp / peak).astype(np.float32))
            records.append([source_id, int(r), int(c), None])
    tags = assign_split(len(records), split, seed)
    for rec, tag in zip(records, tags):
        rec[3] = tag
    return PatchDataset(np.stack(inputs), np.stack(targets), float(peak), split,
                        [tuple(r) for r in records])


def save_dataset(ds, basepath):
    """Persist as a plain-text manifest plus a raw little-endian f32 blob.

    Manifest lines: ``source_id<TAB>row<TAB>col<TAB>split``. The blob holds
    all inputs then all targets in manifest order.
    """
    with open(basepath + ".manifest.txt", "w") as fh:
        fh.write(f"# patch_size={ds.inputs.shape[1]} peak={ds.peak!r} "
                 f"split={ds.split!r} count={len(ds.records)}\n")
        for source_id, r, c, tag in ds.records:
            fh.write(f"{source_id}\t{r}\t{c}\t{tag}\n")
    blob = np.concatenate([ds.inputs.ravel(), ds.targets.ravel()])
    blob.astype("<f4").tofile(basepath + ".blob")


def load_dataset(basepath):
    with open(basepath + ".manifest.txt") as fh:
        header = fh.readline()
        meta = dict(kv.split("=") for kv in header[1:].split())
        records = []
        for line in fh:
            source_id, r, c, tag = line.rstrip("\n").split("\t")
            records.append((source_id, int(r), int(c), tag))
    p = int(meta["patch_size"])
    n = int(meta["count"])
    blob = np.fromfile(basepath + ".blob", dtype="<f4")
    if blob.size != 2 * n * p * p:
        raise ValueError("dataset blob size does not match manifest")
    inputs = blob[: n * p * p].reshape(n, p, p)
    targets = blob[n * p * p:].reshape(n, p, p)
    return PatchDataset(inputs, targets, float(meta["peak"]),
                        float(meta["split"]), records)
