"""Image loading and the per-modality preprocessing chain.

Raw samples arrive as binary PGM (P5) or PPM (P6) files and are pushed
through: grayscale conversion, bilinear resize to the canonical size and,
for palm images only, histogram equalization followed by per-image
standardization. Every stage emits intensities in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ImageLoadError
from .modality import Modality

#: Default canonical size (rows, cols) images are resized to.
DEFAULT_SIZE = (32, 32)

# ITU-R 601 luminance weights as exact integer ratios of 1000.
_LUMA = np.array([299.0, 587.0, 114.0])

_HIST_BINS = 256


@dataclass(frozen=True)
class RawImage:
    """Decoded 8-bit image, grayscale (h, w) or RGB (h, w, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim == 2:
            pass
        elif px.ndim == 3 and px.shape[2] == 3:
            pass
        else:
            raise ImageLoadError(f"unsupported pixel array shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ImageLoadError(f"image has empty dimensions {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3


class _Cursor:
    """Byte cursor over a PNM buffer that remembers where it is."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_space(self):
        # Whitespace and '#' comments (to end of line) separate header tokens.
        while self.pos < len(self.data):
            b = self.data[self.pos]
            if b in b" \t\r\n":
                self.pos += 1
            elif b == ord("#"):
                while self.pos < len(self.data) and self.data[self.pos] not in b"\r\n":
                    self.pos += 1
            else:
                return

    def token(self, what: str) -> bytes:
        self.skip_space()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos] not in b" \t\r\n":
            self.pos += 1
        if self.pos == start:
            raise ImageLoadError(f"missing {what}", offset=start)
        return self.data[start : self.pos]

    def integer(self, what: str) -> int:
        start = self.pos
        tok = self.token(what)
        try:
            return int(tok)
        except ValueError:
            raise ImageLoadError(f"bad {what} {tok!r}", offset=start) from None


def load_image(path) -> RawImage:
    """Load a binary PGM (P5) or PPM (P6) file with maxval 255.

    Malformed headers and short rasters raise ImageLoadError carrying the
    byte offset where parsing stopped.
    """
    data = Path(path).read_bytes()
    cur = _Cursor(data)
    magic = cur.token("magic number")
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ImageLoadError(f"unsupported magic {magic!r}, expected P5 or P6", offset=0)
    width = cur.integer("width")
    height = cur.integer("height")
    if width < 1 or height < 1:
        raise ImageLoadError(f"bad dimensions {width}x{height}", offset=cur.pos)
    maxval = cur.integer("maxval")
    if maxval != 255:
        raise ImageLoadError(f"unsupported maxval {maxval}, only 255 is handled", offset=cur.pos)
    # Exactly one whitespace byte separates the header from the raster.
    if cur.pos >= len(data) or data[cur.pos] not in b" \t\r\n":
        raise ImageLoadError("missing whitespace before raster", offset=cur.pos)
    cur.pos += 1
    need = width * height * channels
    raster = data[cur.pos : cur.pos + need]
    if len(raster) < need:
        raise ImageLoadError(
            f"raster truncated: need {need} bytes, file has {len(raster)}",
            offset=cur.pos + len(raster),
        )
    px = np.frombuffer(raster, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return RawImage(px.reshape(shape))


def write_pgm(path, img: np.ndarray):
    """Write a [0, 1] float matrix as a binary PGM (P5), quantized to 8 bits."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {img.shape}")
    quant = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + quant.tobytes())


def to_grayscale(img: RawImage) -> np.ndarray:
    """Convert to a [0, 1] intensity matrix.

    RGB inputs use ITU-R 601 luminance (0.299 R + 0.587 G + 0.114 B);
    grayscale inputs are just rescaled.
    """
    if img.channels == 1:
        return img.pixels.astype(float) / 255.0
    weighted = img.pixels.astype(float) @ _LUMA
    return np.clip(weighted / 255000.0, 0.0, 1.0)


def resize(img: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Bilinear resize; endpoint-aligned sampling grid.

    Identity (the same array, copied) when the size already matches.
    Interpolation is written in lerp form so constant images are preserved
    bit-exactly, and output is clipped to [0, 1].
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {img.shape}")
    if out_rows < 1 or out_cols < 1:
        raise ValueError(f"target size {out_rows}x{out_cols} must be positive")
    rows, cols = img.shape
    if (rows, cols) == (out_rows, out_cols):
        return img.copy()

    src_y = _sample_grid(rows, out_rows)
    src_x = _sample_grid(cols, out_cols)
    y0 = np.minimum(np.floor(src_y).astype(int), rows - 2) if rows > 1 else np.zeros(out_rows, int)
    x0 = np.minimum(np.floor(src_x).astype(int), cols - 2) if cols > 1 else np.zeros(out_cols, int)
    y1 = np.minimum(y0 + 1, rows - 1)
    x1 = np.minimum(x0 + 1, cols - 1)
    fy = (src_y - y0)[:, None]
    fx = (src_x - x0)[None, :]

    a = img[np.ix_(y0, x0)]
    b = img[np.ix_(y0, x1)]
    c = img[np.ix_(y1, x0)]
    d = img[np.ix_(y1, x1)]
    top = a + fx * (b - a)
    bottom = c + fx * (d - c)
    return np.clip(top + fy * (bottom - top), 0.0, 1.0)


def _sample_grid(n_in: int, n_out: int) -> np.ndarray:
    """Source coordinates for resampling n_in points onto n_out points."""
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def equalize(img: np.ndarray) -> np.ndarray:
    """Histogram-equalize a [0, 1] matrix over 256 intensity bins.

    A constant image (single occupied bin) comes back unchanged.
    """
    img = np.asarray(img, dtype=float)
    levels = np.rint(np.clip(img, 0.0, 1.0) * (_HIST_BINS - 1)).astype(int)
    hist = np.bincount(levels.ravel(), minlength=_HIST_BINS)
    cdf = np.cumsum(hist)
    cdf_min = cdf[np.nonzero(hist)[0][0]]
    total = levels.size
    if total == cdf_min:
        return img.copy()
    lut = (cdf - cdf_min) / float(total - cdf_min)
    return lut[levels]


def standardize(img: np.ndarray) -> np.ndarray:
    """Zero-mean/unit-variance then min-max rescale back to [0, 1]."""
    img = np.asarray(img, dtype=float)
    std = float(img.std())
    if std == 0.0:
        return img.copy()
    z = (img - img.mean()) / std
    return (z - z.min()) / float(z.max() - z.min())


def preprocess(img: RawImage, modality: Modality, size: tuple[int, int] = DEFAULT_SIZE) -> np.ndarray:
    """Full chain for a raw sample: grayscale, resize, palm-only contrast steps."""
    return preprocess_matrix(to_grayscale(img), modality, size)


def preprocess_matrix(
    img: np.ndarray, modality: Modality, size: tuple[int, int] = DEFAULT_SIZE
) -> np.ndarray:
    """Preprocess an already-grayscale [0, 1] matrix.

    Palm images additionally get histogram equalization and per-image
    standardization; a zero-variance (constant) palm skips standardization
    and is returned straight after equalization.
    """
    out = resize(img, size[0], size[1])
    if modality is Modality.PALM:
        out = equalize(out)
        if float(out.std()) > 0.0:
            out = standardize(out)
    return out


def flatten(img: np.ndarray) -> np.ndarray:
    """Row-major flatten to a vector of length rows * cols."""
    return np.asarray(img, dtype=float).reshape(-1).copy()


def unflatten(vec: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`flatten`."""
    vec = np.asarray(vec, dtype=float)
    if vec.size != rows * cols:
        raise ValueError(f"vector of length {vec.size} does not reshape to {rows}x{cols}")
    return vec.reshape(rows, cols).copy()
