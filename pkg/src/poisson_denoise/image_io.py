"""Grayscale image loading, saving, and peak scaling.

Supported formats: binary PGM (P5, maxval 255) and 8-bit PNG (grayscale or
RGB, the latter converted to luma with BT.601 weights). Pixels are kept as
float64 throughout; quantization to bytes happens only on save.
"""

import io
import os
from dataclasses import dataclass

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R BT.601


class ImageFormatError(ValueError):
    """File exists but is not a supported 8-bit grayscale/RGB image."""


class TruncatedDataError(ImageFormatError):
    """Header promised more pixel data than the file contains."""


@dataclass(frozen=True)
class GrayImage:
    """A grayscale image: 2D non-negative intensities plus peak metadata.

    ``peak`` records the maximum intensity the clean source was scaled to;
    it controls noise strength downstream and the rescale factor on save.
    """

    pixels: np.ndarray  # 2D float64, values >= 0
    peak: float = 255.0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError("pixels must be a 2D array")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixels must be finite")
        if np.any(px < 0):
            raise ValueError("pixels must be non-negative")
        if not (self.peak > 0):
            raise ValueError("peak must be positive")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "peak", float(self.peak))

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


def _read_pgm(data, path):
    # P5 header: magic, width, height, maxval; '#' comments allowed between tokens
    stream = io.BytesIO(data)
    if stream.read(2) != b"P5":
        raise ImageFormatError(f"{path}: not a binary (P5) PGM")

    def next_token():
        tok = b""
        while True:
            ch = stream.read(1)
            if ch == b"":
                raise TruncatedDataError(f"{path}: PGM header ended early")
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = stream.read(1)
                continue
            if ch.isspace():
                if tok:
                    return tok
                continue
            tok += ch

    try:
        width, height, maxval = (int(next_token()) for _ in range(3))
    except ValueError as exc:
        raise ImageFormatError(f"{path}: malformed PGM header") from exc
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PGM supported (maxval={maxval})")
    if width <= 0 or height <= 0:
        raise ImageFormatError(f"{path}: bad PGM dimensions {width}x{height}")
    raw = stream.read(width * height)
    if len(raw) < width * height:
        raise TruncatedDataError(
            f"{path}: expected {width * height} pixel bytes, got {len(raw)}"
        )
    px = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    return GrayImage(px.astype(np.float64), peak=255.0)


def _read_png(path):
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        mode = im.mode
        if mode == "L":
            px = np.asarray(im, dtype=np.float64)
        elif mode == "RGB":
            rgb = np.asarray(im, dtype=np.float64)
            r, g, b = LUMA_WEIGHTS
            px = r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]
        else:
            raise ImageFormatError(
                f"{path}: unsupported PNG mode {mode!r} (8-bit grayscale or RGB only)"
            )
    return GrayImage(px, peak=255.0)


def load_grayscale(path):
    """Load an 8-bit PGM (P5) or PNG as a GrayImage with peak 255."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(b"P5"):
        with open(path, "rb") as fh:
            return _read_pgm(fh.read(), path)
    if head.startswith(b"\x89PNG\r\n\x1a\n"):
        return _read_png(path)
    raise ImageFormatError(f"{path}: unrecognized format (want PGM P5 or PNG)")


def quantize_to_bytes(img):
    """Rescale by 255/peak, clamp to [0, 255], round half up to uint8."""
    scaled = img.pixels * (255.0 / img.peak)
    clamped = np.clip(scaled, 0.0, 255.0)
    return np.floor(clamped + 0.5).astype(np.uint8)  # round half up


def save_grayscale(img, path):
    """Write a GrayImage as PGM (``.pgm``) or 8-bit grayscale PNG.

    Pixels are rescaled to [0, 255] by 255/peak, clamped and rounded, so
    ``load(save(img))`` reproduces the quantized image exactly.
    """
    data = quantize_to_bytes(img)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii")
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(data.tobytes())
    elif ext == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(data, mode="L").save(path)
    else:
        raise ValueError(f"unsupported output extension {ext!r} (use .pgm or .png)")


def scale_to_peak(img, peak):
    """Linearly rescale so the maximum pixel equals ``peak``."""
    if not (peak > 0):
        raise ValueError("peak must be positive")
    top = float(img.pixels.max())
    if top <= 0.0:
        raise ValueError("cannot scale an all-zero image to a peak")
    return GrayImage(img.pixels * (peak / top), peak=float(peak))
