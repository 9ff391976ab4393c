"""Grayscale images: PGM I/O, box-filter downsampling, geometric warps,
seeded pixel corruption, and block extraction.

Images are stored as float64 arrays with intensities in [0, 1], row-major.
All operations are pure and return new images.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np


class PgmError(ValueError):
    """Base class for portable graymap parsing failures."""


class PgmMagicError(PgmError):
    """File does not start with a supported magic number (P2 or P5)."""


class PgmHeaderError(PgmError):
    """Header is syntactically invalid: bad dimensions, maxval, or layout."""


class PgmPayloadError(PgmError):
    """Pixel payload is shorter than the header promises, or unreadable."""


@dataclass
class GrayImage:
    """Row-major grayscale raster with intensities clamped to [0, 1]."""

    pixels: np.ndarray  # shape (height, width)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("pixels must be a non-empty 2-D array")
        self.pixels = np.clip(px, 0.0, 1.0)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def vector(self):
        """Full image as a raster-order (row-major) vector."""
        return self.pixels.reshape(-1).copy()


@dataclass(frozen=True)
class BlockSpec:
    """A rows x cols block whose top-left pixel sits at (row, col)."""

    row: int
    col: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("block must span at least one pixel per axis")

    def fits(self, height, width):
        return (
            0 <= self.row
            and 0 <= self.col
            and self.row + self.rows <= height
            and self.col + self.cols <= width
        )


def _scan_header(data):
    """Collect the four header tokens, skipping whitespace and # comments.

    Returns (tokens, offset) where offset points just past the single
    whitespace byte that terminates the maxval token.
    """
    tokens = []
    i, n = 0, len(data)
    while len(tokens) < 4:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i] not in (0x0A, 0x0D):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        if i == start:
            raise PgmHeaderError("incomplete header: expected 4 tokens")
        tokens.append(data[start:i])
    if i >= n or not data[i : i + 1].isspace():
        raise PgmHeaderError("missing whitespace after maxval")
    return tokens, i + 1


def _parse_dims(tokens):
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise PgmHeaderError(f"non-integer header field: {exc}") from None
    if width < 1 or height < 1:
        raise PgmHeaderError(f"bad dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise PgmHeaderError(f"maxval {maxval} outside [1, 65535]")
    return width, height, maxval


def load_pgm(path):
    """Load a binary (P5) or ASCII (P2) portable graymap.

    Intensities are scaled by 1/maxval into [0, 1].
    """
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, payload_off = _scan_header(data)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise PgmMagicError(f"unsupported magic number {magic!r}")
    width, height, maxval = _parse_dims(tokens)
    count = width * height

    if magic == b"P5":
        itemsize = 1 if maxval < 256 else 2
        payload = data[payload_off : payload_off + count * itemsize]
        if len(payload) < count * itemsize:
            raise PgmPayloadError(
                f"payload holds {len(payload)} bytes, header promises {count * itemsize}"
            )
        dtype = np.uint8 if itemsize == 1 else np.dtype(">u2")
        raw = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    else:
        body = re.sub(rb"#[^\n\r]*", b"", data[payload_off:])
        fields = body.split()
        if len(fields) < count:
            raise PgmPayloadError(f"payload holds {len(fields)} values, header promises {count}")
        try:
            raw = np.array([int(f) for f in fields[:count]], dtype=np.float64)
        except ValueError as exc:
            raise PgmPayloadError(f"non-integer pixel value: {exc}") from None
    return GrayImage(raw.reshape(height, width) / maxval)


def save_pgm(img, path):
    """Write a binary (P5) graymap with maxval 255."""
    quant = np.rint(img.pixels * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.width, img.height))
        fh.write(quant.tobytes())


def _box_weights(n_in, n_out):
    """Row-stochastic matrix averaging n_in samples into n_out equal cells."""
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for o in range(n_out):
        lo, hi = o * scale, (o + 1) * scale
        i0, i1 = int(np.floor(lo)), min(int(np.ceil(hi)), n_in)
        for i in range(i0, i1):
            w[o, i] = min(hi, i + 1) - max(lo, i)
    return w / scale


def downsample(img, out_w, out_h):
    """Area-average (box filter) resample to exactly (out_w, out_h)."""
    if out_w < 1 or out_h < 1 or out_w > img.width or out_h > img.height:
        raise ValueError(
            f"target {out_w}x{out_h} must lie in [1, {img.width}] x [1, {img.height}]"
        )
    if out_w == img.width and out_h == img.height:
        return GrayImage(img.pixels.copy())
    wr = _box_weights(img.height, out_h)
    wc = _box_weights(img.width, out_w)
    return GrayImage(wr @ img.pixels @ wc.T)


def warp(img, angle_deg, sx, sy, tx, ty, fill=0.0):
    """Rotate about the image center, scale, then translate.

    Implemented by inverse mapping with bilinear interpolation; samples
    falling outside the source use `fill`. The output canvas keeps the
    source dimensions.
    """
    if sx <= 0 or sy <= 0:
        raise ValueError("scale factors must be positive")
    if not 0.0 <= fill <= 1.0:
        raise ValueError("fill must lie in [0, 1]")
    h, w = img.height, img.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    yo, xo = np.mgrid[0:h, 0:w].astype(np.float64)
    u = (xo - cx - tx) / sx
    v = (yo - cy - ty) / sy
    xs = cos_t * u + sin_t * v + cx
    ys = -sin_t * u + cos_t * v + cy

    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    def gather(yy, xx):
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out = np.full(yy.shape, fill, dtype=np.float64)
        out[inside] = img.pixels[yy[inside], xx[inside]]
        return out

    out = (
        (1.0 - fy) * (1.0 - fx) * gather(y0, x0)
        + (1.0 - fy) * fx * gather(y0, x0 + 1)
        + fy * (1.0 - fx) * gather(y0 + 1, x0)
        + fy * fx * gather(y0 + 1, x0 + 1)
    )
    return GrayImage(out)


def corrupt_pixels(img, fraction, seed):
    """Replace round(fraction * npixels) distinct pixels with uniform noise.

    Positions and replacement values both come from one generator seeded
    with `seed`, so identical arguments give identical outputs.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    n = img.width * img.height
    k = int(round(fraction * n))
    flat = img.pixels.reshape(-1).copy()
    if k > 0:
        rng = np.random.default_rng(seed)
        positions = rng.choice(n, size=k, replace=False)
        flat[positions] = rng.uniform(size=k)
    return GrayImage(flat.reshape(img.height, img.width))


def extract_block(img, spec):
    """Vectorize the block in raster order (row-major within the block)."""
    if not spec.fits(img.height, img.width):
        raise ValueError(
            f"block at ({spec.row},{spec.col}) size {spec.rows}x{spec.cols} "
            f"exceeds image {img.height}x{img.width}"
        )
    patch = img.pixels[spec.row : spec.row + spec.rows, spec.col : spec.col + spec.cols]
    return patch.reshape(-1).copy()
