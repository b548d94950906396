"""Image representation, file I/O, color conversion, geometry and quality metrics.

All pixel data lives in [0, 1] as float64. Integer files are mapped on load
(8-bit: v/255, 16-bit: v/65535) and quantized on save (round(v*255)). Any
operation that could push samples outside [0, 1] clamps explicitly and says so
in its docstring; nothing overflows silently.
"""

import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy.ndimage import correlate1d

from .errors import DimensionError, DomainError, FormatError

DEFAULT_RESOLUTION = 128

_RANGE_EPS = 1e-9

# Rec. 601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class Image:
    """A float64 raster of shape (h, w, c) with c in {1, 3} and samples in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.dtype != np.float64:
            raise DimensionError("image data must be a float64 ndarray")
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise DimensionError(f"image data must be (h, w, c) with c in {{1, 3}}, got {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise DimensionError("image must have at least one pixel")
        if not np.isfinite(d).all():
            raise DomainError("image contains non-finite samples")
        lo, hi = float(d.min()), float(d.max())
        if lo < -_RANGE_EPS or hi > 1.0 + _RANGE_EPS:
            raise DomainError(f"image samples outside [0, 1]: min={lo:.6g} max={hi:.6g}")
        d.flags.writeable = False

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def plane(self, i: int = 0) -> np.ndarray:
        """One channel as a read-only (h, w) view."""
        return self.data[:, :, i]


def from_array(arr: np.ndarray, clamp: bool = False) -> Image:
    """Build an Image from an array shaped (h, w), (h, w, 1) or (h, w, 3).

    With clamp=True values are clipped into [0, 1]; otherwise out-of-range
    input raises. Tiny float overshoot (<= 1e-9) is always tolerated and
    snapped back.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, np.newaxis]
    a = np.array(a, copy=True)
    if clamp:
        a = np.clip(a, 0.0, 1.0)
    elif a.size and np.isfinite(a).all() and -_RANGE_EPS <= a.min() and a.max() <= 1.0 + _RANGE_EPS:
        # snap fp dust so exact-boundary arithmetic does not trip validation
        np.clip(a, 0.0, 1.0, out=a)
    return Image(a)


def load_image(path: str) -> Image:
    """Read a PNG, PPM or JPEG file into the [0, 1] float domain.

    8-bit samples map as v/255, 16-bit as v/65535. Palette images are expanded
    to RGB. Alpha channels are not supported and raise a format error.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        pil = PILImage.open(path)
        pil.load()
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"cannot decode image file {path!r}: {exc}") from exc
    fmt = (pil.format or "").upper()
    if fmt not in ("PNG", "PPM", "JPEG", "PGM", "PBM"):
        raise FormatError(f"unsupported image format {fmt or 'unknown'!r} for {path!r}")
    if pil.mode == "P":
        pil = pil.convert("RGB")
    if pil.mode in ("L", "RGB"):
        arr = np.asarray(pil, dtype=np.float64) / 255.0
    elif pil.mode in ("I;16", "I;16B", "I;16L"):
        arr = np.asarray(pil, dtype=np.float64) / 65535.0
    elif pil.mode == "I":
        raw = np.asarray(pil, dtype=np.float64)
        if raw.max() > 65535:
            raise FormatError(f"unsupported sample depth in {path!r}")
        arr = raw / 65535.0
    else:
        raise FormatError(f"unsupported image mode {pil.mode!r} for {path!r}")
    return from_array(arr)


def save_image(img: Image, path: str, fmt: str | None = None) -> None:
    """Write an image as PNG or PPM with 8-bit quantization round(v*255).

    The format comes from fmt or the file extension. PPM output is binary,
    P6 for RGB and P5 for grayscale, maxval 255. Writes are atomic: a temp
    file in the target directory is renamed over the destination.
    """
    kind = (fmt or os.path.splitext(path)[1].lstrip(".")).lower()
    if kind not in ("png", "ppm", "pgm"):
        raise FormatError(f"unsupported save format {kind!r} (png or ppm)")
    q = np.rint(img.data * 255.0).astype(np.uint8)
    tmp = path + ".tmp"
    if kind == "png":
        if img.channels == 1:
            pil = PILImage.fromarray(q[:, :, 0], mode="L")
        else:
            pil = PILImage.fromarray(q, mode="RGB")
        pil.save(tmp, format="PNG")
    else:
        with open(tmp, "wb") as fh:
            if img.channels == 1:
                fh.write(b"P5\n%d %d\n255\n" % (img.width, img.height))
                fh.write(q[:, :, 0].tobytes())
            else:
                fh.write(b"P6\n%d %d\n255\n" % (img.width, img.height))
                fh.write(q.tobytes())
    os.replace(tmp, path)


def grayscale(img: Image) -> Image:
    """Rec. 601 luma: y = 0.299 R + 0.587 G + 0.114 B. Grayscale input passes through."""
    if img.channels == 1:
        return img
    y = img.data @ _LUMA
    # weights sum to 1 so y stays in [0, 1] up to rounding
    return from_array(y, clamp=True)


def luma_plane(img: Image) -> np.ndarray:
    """The Rec. 601 luma as a bare (h, w) float array."""
    return grayscale(img).plane(0)


def rotate90(img: Image, turns: int) -> Image:
    """Rotate counter-clockwise by turns*90 degrees (turns taken mod 4)."""
    return Image(np.ascontiguousarray(np.rot90(img.data, k=turns % 4, axes=(0, 1))))


def flip_horizontal(img: Image) -> Image:
    """Mirror left-right."""
    return Image(np.ascontiguousarray(img.data[:, ::-1, :]))


def flip_vertical(img: Image) -> Image:
    """Mirror top-bottom."""
    return Image(np.ascontiguousarray(img.data[::-1, :, :]))


def transpose(img: Image) -> Image:
    """Swap rows and columns (main-diagonal reflection)."""
    return Image(np.ascontiguousarray(np.transpose(img.data, (1, 0, 2))))


def center_crop(img: Image, ratio: float) -> Image:
    """Keep the central floor(ratio*h) x floor(ratio*w) window, 0 < ratio <= 1."""
    if not 0.0 < ratio <= 1.0:
        raise DomainError(f"crop ratio must be in (0, 1], got {ratio}")
    ch = max(1, int(ratio * img.height))
    cw = max(1, int(ratio * img.width))
    top = (img.height - ch) // 2
    left = (img.width - cw) // 2
    return Image(np.ascontiguousarray(img.data[top:top + ch, left:left + cw, :]))


def _bilinear_axis(arr: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = arr.shape[axis]
    if n_out == n_in:
        return arr
    # pixel-center mapping; edges clamp (replicate)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    a0 = np.take(arr, i0, axis=axis)
    a1 = np.take(arr, i1, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = n_out
    f = frac.reshape(shape)
    return a0 * (1.0 - f) + a1 * f


def resize_bilinear(img: Image, height: int, width: int) -> Image:
    """Separable bilinear resample with pixel-center alignment.

    Resizing to the same dimensions is the identity. Output is clamped to
    [0, 1] to absorb rounding.
    """
    if height < 1 or width < 1:
        raise DimensionError("target dimensions must be positive")
    out = _bilinear_axis(img.data, height, axis=0)
    out = _bilinear_axis(out, width, axis=1)
    return from_array(out, clamp=True)


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix of exact interval-overlap weights."""
    step = n_in / n_out
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = i * step
        hi = (i + 1) * step
        j0 = int(math.floor(lo))
        j1 = min(int(math.ceil(hi)), n_in)
        for j in range(j0, j1):
            w[i, j] = min(hi, j + 1.0) - max(lo, float(j))
        w[i] /= step
    return w


def resize_area(img: Image, height: int, width: int) -> Image:
    """Exact area-average downsample (each output pixel is the mean over its footprint).

    Intended for height <= img.height and width <= img.width; for integer
    factors this is the plain block mean.
    """
    if height < 1 or width < 1:
        raise DimensionError("target dimensions must be positive")
    if height > img.height or width > img.width:
        raise DimensionError("area resize only shrinks; use resize_bilinear to enlarge")
    wr = _area_weights(img.height, height)
    wc = _area_weights(img.width, width)
    out = np.einsum("ij,jkc,lk->ilc", wr, img.data, wc, optimize=True)
    return from_array(out, clamp=True)


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB at data range 1.0: 10*log10(1/MSE).

    Identical inputs have zero MSE; the sentinel value math.inf is returned
    for that case.
    """
    if a.shape != b.shape:
        raise DimensionError(f"psnr needs matching shapes, got {a.shape} vs {b.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2
_SSIM_WIN = 11
_SSIM_SIGMA = 1.5


def _ssim_kernel() -> np.ndarray:
    r = _SSIM_WIN // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * _SSIM_SIGMA ** 2))
    return k / k.sum()


def _ssim_filter(plane: np.ndarray) -> np.ndarray:
    k = _ssim_kernel()
    out = correlate1d(plane, k, axis=0, mode="reflect")
    return correlate1d(out, k, axis=1, mode="reflect")


def ssim(a: Image, b: Image) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Stabilizers C1 = (0.01)^2 and C2 = (0.03)^2 at data range 1.0, reflect
    padding at the borders, averaged over all pixels and channels.
    """
    if a.shape != b.shape:
        raise DimensionError(f"ssim needs matching shapes, got {a.shape} vs {b.shape}")
    vals = []
    for c in range(a.channels):
        x = a.plane(c)
        y = b.plane(c)
        mx = _ssim_filter(x)
        my = _ssim_filter(y)
        sxx = _ssim_filter(x * x) - mx * mx
        syy = _ssim_filter(y * y) - my * my
        sxy = _ssim_filter(x * y) - mx * my
        num = (2.0 * mx * my + _SSIM_C1) * (2.0 * sxy + _SSIM_C2)
        den = (mx * mx + my * my + _SSIM_C1) * (sxx + syy + _SSIM_C2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))
