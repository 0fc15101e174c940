"""Two-branch symmetric-skip convolutional autoencoder for patch denoising.

Each branch is a chain of strided conv layers (the compressor) mirrored by
transposed-conv layers (the decompressor). A conv layer's post-activation
output is added to the matching-shape decompressor output; the two branch
outputs are combined by elementwise mean. One network is trained per noise
level (peak value), and the peak travels with the weights file.
"""

import logging
import struct
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .image_io import GrayImage
from .patches import default_sigma, extract_grid, reconstruct_from_patches

log = logging.getLogger(__name__)

DEFAULT_BRANCHES = (
    ((32, 5, 2), (16, 5, 2)),          # shallow: keeps detail
    ((32, 5, 2), (16, 5, 2), (8, 5, 2)),  # deep: smooths harder
)

WEIGHTS_MAGIC = b"PDNW"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    patch_size: int = 64
    branches: tuple = DEFAULT_BRANCHES  # per branch: ((out_ch, kernel, stride), ...)
    skip: bool = True
    merge: str = "mean"
    seed: int = 0

    def __post_init__(self):
        if self.merge != "mean":
            raise ValueError(f"unsupported merge rule {self.merge!r}")
        for spec in self.branches:
            extent = self.patch_size
            for _, kernel, stride in spec:
                extent = nn.conv_out_extent(extent, stride)
                if extent < 1:
                    raise ValueError("branch compresses below 1x1")
            for _, kernel, stride in reversed(spec):
                extent *= stride
            if extent != self.patch_size:
                raise ValueError(
                    f"branch {spec} does not restore patch size {self.patch_size}"
                )
        object.__setattr__(self, "branches",
                           tuple(tuple(tuple(l) for l in b) for b in self.branches))


@dataclass
class TrainReport:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    @property
    def epochs_completed(self):
        return len(self.train_mse)


class _Branch:
    """One compressor/decompressor chain with symmetric additive skips."""

    def __init__(self, spec, patch_size, skip, rng, dtype):
        self.skip = skip
        self.convs = []
        in_ch = 1
        for out_ch, kernel, stride in spec:
            self.convs.append(nn.ConvLayer(in_ch, out_ch, kernel, stride,
                                           rng=rng, dtype=dtype))
            in_ch = out_ch
        self.deconvs = []
        channels = [1] + [c for c, _, _ in spec]
        for i in range(len(spec) - 1, -1, -1):
            _, kernel, stride = spec[i]
            self.deconvs.append(nn.ConvLayer(channels[i + 1], channels[i], kernel,
                                             stride, transposed=True,
                                             rng=rng, dtype=dtype))

    def layers(self):
        return self.convs + self.deconvs

    def forward(self, x):
        depth = len(self.convs)
        self._conv_z = []
        acts = []
        h = x
        for conv in self.convs:
            z = conv.forward(h)
            self._conv_z.append(z)
            h = nn.relu(z)
            acts.append(h)
        self._deconv_z = []
        for j, deconv in enumerate(self.deconvs):
            z = deconv.forward(h)
            self._deconv_z.append(z)
            if j < depth - 1:
                h = nn.relu(z)
                if self.skip:
                    h = h + acts[depth - 2 - j]
            else:
                h = z  # final layer stays linear
        return h

    def backward(self, g):
        depth = len(self.convs)
        skip_grads = [None] * depth
        for j in range(depth - 1, -1, -1):
            if j < depth - 1:
                if self.skip:
                    m = depth - 2 - j
                    skip_grads[m] = g if skip_grads[m] is None else skip_grads[m] + g
                g = nn.relu_backward(g, self._deconv_z[j])
            g = self.deconvs[j].backward(g)
        for i in range(depth - 1, -1, -1):
            if skip_grads[i] is not None:
                g = g + skip_grads[i]
            g = nn.relu_backward(g, self._conv_z[i])
            g = self.convs[i].backward(g)
        return g

    def preactivation_margin(self):
        """Smallest |pre-activation| from the last forward (kink distance)."""
        zs = self._conv_z + self._deconv_z[:-1]
        return min(float(np.min(np.abs(z))) for z in zs) if zs else np.inf


class Network:
    """The assembled multi-branch denoiser, trainable via RMSProp."""

    def __init__(self, config, dtype=np.float32):
        self.config = config
        self.peak = None  # set by train(); recorded in the weights file
        rng = np.random.default_rng(config.seed)
        self.branches = [_Branch(spec, config.patch_size, config.skip, rng, dtype)
                         for spec in config.branches]

    def layers(self):
        return [layer for br in self.branches for layer in br.layers()]

    @property
    def parameter_count(self):
        return sum(layer.parameter_count for layer in self.layers())

    def params(self):
        return {f"L{i}.{name}": arr
                for i, layer in enumerate(self.layers())
                for name, arr in layer.params().items()}

    def grads(self):
        return {f"L{i}.{name}": arr
                for i, layer in enumerate(self.layers())
                for name, arr in layer.grads().items()}

    def astype(self, dtype):
        for layer in self.layers():
            layer.astype(dtype)
        return self

    def forward(self, x):
        outs = [br.forward(x) for br in self.branches]
        return sum(outs) / len(outs)

    def backward(self, g):
        g = g / len(self.branches)
        gx = None
        for br in self.branches:
            gb = br.backward(g)
            gx = gb if gx is None else gx + gb
        return gx

    def preactivation_margin(self):
        return min(br.preactivation_margin() for br in self.branches)


def build_network(config):
    return Network(config)


def forward_full(net, patch):
    """Denoise one normalized patch; output clamped to >= 0 for inference."""
    p = net.config.patch_size
    patch = np.asarray(patch)
    if patch.shape != (p, p):
        raise ValueError(f"expected {p}x{p} patch, got {patch.shape}")
    x = patch.astype(np.float32).reshape(1, 1, p, p)
    return np.maximum(net.forward(x), 0.0).reshape(p, p)


def _forward_batch(net, batch):
    """Inference on (N, P, P) normalized patches, clamped to >= 0."""
    n, p, _ = batch.shape
    x = batch.astype(np.float32).reshape(n, 1, p, p)
    return np.maximum(net.forward(x), 0.0).reshape(n, p, p)


def train(net, dataset, epochs, batch_size=100, learning_rate=1e-3,
          rho=0.9, eps=1e-8, seed=0):
    """RMSProp training on the dataset's train split, MSE loss.

    Batches are drawn in a freshly seeded shuffle each epoch; validation
    MSE is computed per epoch without touching the weights.
    """
    train_idx = np.array(dataset.train_indices, dtype=np.int64)
    val_idx = np.array(dataset.val_indices, dtype=np.int64)
    if train_idx.size == 0:
        raise ValueError("dataset has no training items")
    if batch_size > train_idx.size:
        raise ValueError("batch size exceeds training set size")
    net.peak = dataset.peak
    state = nn.RmsPropState(rho=rho, eps=eps, lr=learning_rate)
    rng = np.random.default_rng(seed)
    report = TrainReport()
    p = net.config.patch_size
    for epoch in range(epochs):
        t0 = time.perf_counter()
        order = rng.permutation(train_idx)
        losses = []
        n_batches = train_idx.size // batch_size
        for b in range(n_batches):
            sel = order[b * batch_size:(b + 1) * batch_size]
            x = dataset.inputs[sel].reshape(-1, 1, p, p)
            t = dataset.targets[sel].reshape(-1, 1, p, p)
            y = net.forward(x)
            loss = nn.mse_loss(y, t)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"NaN loss at epoch {epoch} batch {b}"
                )
            net.backward(nn.mse_loss_backward(y, t))
            state.step(net.params(), net.grads())
            losses.append(loss)
        report.train_mse.append(float(np.mean(losses)))
        report.val_mse.append(validate(net, dataset, val_idx, batch_size))
        report.epoch_seconds.append(time.perf_counter() - t0)
    return report


def validate(net, dataset, val_idx=None, batch_size=100):
    """Mean MSE over the validation split; no weight updates."""
    if val_idx is None:
        val_idx = np.array(dataset.val_indices, dtype=np.int64)
    if len(val_idx) == 0:
        return float("nan")
    p = net.config.patch_size
    total, count = 0.0, 0
    for b in range(0, len(val_idx), batch_size):
        sel = val_idx[b:b + batch_size]
        x = dataset.inputs[sel].reshape(-1, 1, p, p)
        t = dataset.targets[sel].reshape(-1, 1, p, p)
        total += nn.mse_loss(net.forward(x), t) * len(sel)
        count += len(sel)
    return total / count


def _config_text(config, peak):
    branches = "|".join(",".join(f"{c}:{k}:{s}" for c, k, s in spec)
                        for spec in config.branches)
    return (f"patch_size={config.patch_size}\n"
            f"branches={branches}\n"
            f"skip={int(config.skip)}\n"
            f"merge={config.merge}\n"
            f"seed={config.seed}\n"
            f"peak={'' if peak is None else repr(float(peak))}\n")


def _parse_config_text(text):
    kv = dict(line.split("=", 1) for line in text.strip().splitlines())
    branches = tuple(
        tuple(tuple(int(v) for v in layer.split(":")) for layer in spec.split(","))
        for spec in kv["branches"].split("|"))
    config = NetworkConfig(patch_size=int(kv["patch_size"]), branches=branches,
                           skip=bool(int(kv["skip"])), merge=kv["merge"],
                           seed=int(kv["seed"]))
    peak = float(kv["peak"]) if kv["peak"] else None
    return config, peak


def save_network(net, path):
    """Weights file: PDNW magic, version, config text, CRC32, f32 blob."""
    blob = b"".join(
        arr.astype("<f4").tobytes()
        for layer in net.layers()
        for arr in (layer.w, layer.b))
    cfg = _config_text(net.config, net.peak).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", WEIGHTS_VERSION))
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", zlib.crc32(blob)))
        fh.write(blob)


def load_network(path, expected_peak=None):
    """Rebuild a network from a weights file; verifies version and checksum.

    If ``expected_peak`` is given and differs from the file's training peak,
    a warning is logged (models are per noise level).
    """
    with open(path, "rb") as fh:
        if fh.read(4) != WEIGHTS_MAGIC:
            raise ValueError(f"{path}: not a network weights file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != WEIGHTS_VERSION:
            raise ValueError(f"{path}: unsupported weights version {version}")
        (cfg_len,) = struct.unpack("<I", fh.read(4))
        config, peak = _parse_config_text(fh.read(cfg_len).decode("utf-8"))
        (checksum,) = struct.unpack("<I", fh.read(4))
        blob = fh.read()
    if zlib.crc32(blob) != checksum:
        raise ValueError(f"{path}: weights checksum mismatch (truncated file?)")
    net = Network(config)
    flat = np.frombuffer(blob, dtype="<f4")
    offset = 0
    for layer in net.layers():
        for name in ("w", "b"):
            arr = getattr(layer, name)
            setattr(layer, name,
                    flat[offset:offset + arr.size].reshape(arr.shape).copy())
            offset += arr.size
    if offset != flat.size:
        raise ValueError(f"{path}: parameter blob length mismatch")
    net.peak = peak
    if expected_peak is not None and peak is not None and expected_peak != peak:
        log.warning("weights were trained at peak %s but requested peak is %s",
                    peak, expected_peak)
    return net


def denoise_image(net, img, stride=4, sigma=None, batch_size=256):
    """Denoise a full image: extract, normalize, forward, reconstruct.

    The image's peak is used for normalization; a mismatch with the
    network's training peak is warned about. Output is clamped to
    [0, peak].
    """
    p = net.config.patch_size
    if min(img.height, img.width) < p:
        raise ValueError(f"image {img.height}x{img.width} smaller than patch {p}")
    if net.peak is not None and img.peak != net.peak:
        log.warning("image peak %s differs from network training peak %s",
                    img.peak, net.peak)
    grid, patches = extract_grid(img, p, stride)
    norm = (patches / img.peak).astype(np.float32)
    out = np.empty_like(norm)
    for b in range(0, len(norm), batch_size):
        out[b:b + batch_size] = _forward_batch(net, norm[b:b + batch_size])
    restored = reconstruct_from_patches(
        out.astype(np.float64) * img.peak, grid,
        sigma if sigma is not None else default_sigma(p))
    return GrayImage(np.clip(restored, 0.0, img.peak), peak=img.peak)
