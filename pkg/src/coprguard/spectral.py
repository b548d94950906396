"""Frequency-domain statistics: DFT magnitude, DCT, single-level Haar DWT,
radially averaged power spectral density, corpus means and their comparison.

Conventions, fixed once for the whole toolkit:
  * dft_magnitude: |FFT2(x)| / (h*w), zero frequency shifted to the center
    (h//2, w//2). With this scaling Parseval reads sum(|F|^2) * (h*w) = sum(x^2).
  * dct2: orthonormal type-II 2-D DCT (energy preserving, DC = mean * sqrt(h*w)).
  * dwt_haar: orthonormal 2-tap Haar analysis on even-dimensioned planes.
  * rapsd: power |FFT2/(h*w)|^2 averaged over integer annuli
    k = floor(sqrt(du^2+dv^2) + 0.5) around the centered DC, k < min(h,w)//2.

All operate on single planes (grayscale); callers convert color via Rec. 601
luma first.
"""

import os
import struct
import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.fft import dctn, idctn

from .errors import DimensionError, DomainError, FormatError

SUBBANDS = ("cA", "cH", "cV", "cD")

# kind tags for corpus containers, id fixed by the file format
KINDS = ("dft", "dct", "cA", "cH", "cV", "cD", "rapsd")
_KIND_IDS = {k: i for i, k in enumerate(KINDS)}


def _as_plane(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim != 2:
        raise DimensionError(f"expected a single 2-D plane, got shape {a.shape}")
    return a


def dft_magnitude(plane) -> np.ndarray:
    """Centered magnitude spectrum |FFT2(x)|/(h*w)."""
    a = _as_plane(plane)
    f = np.fft.fft2(a) / (a.shape[0] * a.shape[1])
    return np.abs(np.fft.fftshift(f))


def dct2(plane) -> np.ndarray:
    """Orthonormal type-II 2-D DCT."""
    return dctn(_as_plane(plane), type=2, norm="ortho")


def idct2(coeffs) -> np.ndarray:
    """Inverse of dct2."""
    return idctn(_as_plane(coeffs), type=2, norm="ortho")


def dwt_haar(plane) -> dict[str, np.ndarray]:
    """Single-level orthonormal Haar analysis.

    For each 2x2 block (p00 p01 / p10 p11):
        cA = (p00 + p01 + p10 + p11) / 2
        cH = (p00 + p01 - p10 - p11) / 2
        cV = (p00 - p01 + p10 - p11) / 2
        cD = (p00 - p01 - p10 + p11) / 2
    Requires even dimensions.
    """
    a = _as_plane(plane)
    h, w = a.shape
    if h % 2 or w % 2:
        raise DimensionError(f"haar analysis needs even dimensions, got {h}x{w}")
    p00 = a[0::2, 0::2]
    p01 = a[0::2, 1::2]
    p10 = a[1::2, 0::2]
    p11 = a[1::2, 1::2]
    return {
        "cA": (p00 + p01 + p10 + p11) / 2.0,
        "cH": (p00 + p01 - p10 - p11) / 2.0,
        "cV": (p00 - p01 + p10 - p11) / 2.0,
        "cD": (p00 - p01 - p10 + p11) / 2.0,
    }


def idwt_haar(bands: dict[str, np.ndarray]) -> np.ndarray:
    """Exact inverse of dwt_haar."""
    try:
        ca, ch, cv, cd = (np.asarray(bands[k], dtype=np.float64) for k in SUBBANDS)
    except KeyError as exc:
        raise DomainError(f"missing sub-band {exc.args[0]!r}") from exc
    if not (ca.shape == ch.shape == cv.shape == cd.shape):
        raise DimensionError("sub-band shapes disagree")
    h, w = ca.shape
    out = np.empty((2 * h, 2 * w))
    out[0::2, 0::2] = (ca + ch + cv + cd) / 2.0
    out[0::2, 1::2] = (ca + ch - cv - cd) / 2.0
    out[1::2, 0::2] = (ca - ch + cv - cd) / 2.0
    out[1::2, 1::2] = (ca - ch - cv + cd) / 2.0
    return out


def _radial_bin_index(h: int, w: int) -> tuple[np.ndarray, int]:
    du = np.arange(h) - h // 2
    dv = np.arange(w) - w // 2
    r = np.sqrt(du[:, None] ** 2 + dv[None, :] ** 2)
    k = np.floor(r + 0.5).astype(np.intp)
    return k, min(h, w) // 2


def rapsd(plane) -> np.ndarray:
    """Radially averaged power spectral density.

    Bin k holds the mean of |FFT2(x)/(h*w)|^2 over the annulus of nearest
    integer radius k around the centered DC; bins run 0 .. min(h,w)//2 - 1
    (larger radii, the shifted-spectrum corners, are ignored).
    """
    a = _as_plane(plane)
    h, w = a.shape
    power = np.abs(np.fft.fftshift(np.fft.fft2(a) / (h * w))) ** 2
    k, n_bins = _radial_bin_index(h, w)
    if n_bins < 1:
        raise DimensionError("image too small for radial binning")
    flat_k = k.ravel()
    flat_p = power.ravel()
    keep = flat_k < n_bins
    sums = np.bincount(flat_k[keep], weights=flat_p[keep], minlength=n_bins)
    counts = np.bincount(flat_k[keep], minlength=n_bins)
    return sums / counts


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two flattened arrays.

    If both inputs are identically zero the similarity is defined as 0 and a
    warning is emitted (the value is meaningless in that case).
    """
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"cosine inputs must match, got {x.shape} vs {y.shape}")
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx == 0.0 and ny == 0.0:
        warnings.warn("cosine similarity of two zero vectors, defining it as 0")
        return 0.0
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.dot(x, y) / (nx * ny))


@dataclass(frozen=True)
class CorpusSpectrum:
    """Mean spectral statistic over a corpus. kind is one of KINDS; rapsd means
    are stored as a 1 x n_bins row."""

    kind: str
    mean: np.ndarray
    count: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown spectrum kind {self.kind!r}")
        if self.mean.ndim != 2:
            raise DimensionError("corpus mean must be 2-D")
        if self.count < 1:
            raise DomainError("corpus mean needs at least one image")


def _single_spectrum(plane: np.ndarray, kind: str) -> np.ndarray:
    if kind == "dft":
        return dft_magnitude(plane)
    if kind == "dct":
        return dct2(plane)
    if kind in SUBBANDS:
        return dwt_haar(plane)[kind]
    if kind == "rapsd":
        return rapsd(plane)[np.newaxis, :]
    raise DomainError(f"unknown spectrum kind {kind!r}")


def corpus_mean(planes: Iterable[np.ndarray], kind: str) -> CorpusSpectrum:
    """Streaming mean of a per-image spectral statistic over a corpus.

    All images must share dimensions. The reduction is a plain running sum in
    input order, so a given corpus always produces bit-identical output.
    """
    if kind not in KINDS:
        raise DomainError(f"unknown spectrum kind {kind!r}")
    total: np.ndarray | None = None
    n = 0
    for plane in planes:
        spec = _single_spectrum(plane, kind)
        if total is None:
            total = np.zeros_like(spec)
        elif spec.shape != total.shape:
            raise DimensionError(
                f"corpus images disagree in size: {spec.shape} vs {total.shape}")
        total += spec
        n += 1
    if total is None:
        raise DomainError("corpus is empty")
    return CorpusSpectrum(kind=kind, mean=total / n, count=n)


def merge_corpus_means(parts: Iterable[CorpusSpectrum]) -> CorpusSpectrum:
    """Combine shard means (count-weighted); all shards must agree in kind and shape."""
    parts = list(parts)
    if not parts:
        raise DomainError("nothing to merge")
    kind = parts[0].kind
    shape = parts[0].mean.shape
    total = np.zeros(shape)
    n = 0
    for p in parts:
        if p.kind != kind:
            raise DomainError(f"cannot merge {p.kind!r} into {kind!r} shards")
        if p.mean.shape != shape:
            raise DimensionError("corpus shards disagree in shape")
        total += p.mean * p.count
        n += p.count
    return CorpusSpectrum(kind=kind, mean=total / n, count=n)


# --- CGSP container ---------------------------------------------------------
#
# Layout, all little-endian:
#   magic "CGSP" | u32 version=1 | u8 kind | u32 h | u32 w | u64 count
#   then h*w float64 values, row-major.

_CGSP_MAGIC = b"CGSP"
_CGSP_VERSION = 1
_CGSP_HEADER = struct.Struct("<4sIBIIQ")


def write_corpus_spectrum(spec: CorpusSpectrum, path: str) -> None:
    h, w = spec.mean.shape
    payload = _CGSP_HEADER.pack(_CGSP_MAGIC, _CGSP_VERSION, _KIND_IDS[spec.kind],
                                h, w, spec.count)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
        fh.write(np.ascontiguousarray(spec.mean, dtype="<f8").tobytes())
    os.replace(tmp, path)


def read_corpus_spectrum(path: str) -> CorpusSpectrum:
    with open(path, "rb") as fh:
        header = fh.read(_CGSP_HEADER.size)
        if len(header) != _CGSP_HEADER.size:
            raise FormatError(f"{path!r}: truncated container header")
        magic, version, kind_id, h, w, count = _CGSP_HEADER.unpack(header)
        if magic != _CGSP_MAGIC:
            raise FormatError(f"{path!r}: bad magic {magic!r}")
        if version != _CGSP_VERSION:
            raise FormatError(f"{path!r}: unsupported container version {version}")
        if kind_id >= len(KINDS):
            raise FormatError(f"{path!r}: unknown kind id {kind_id}")
        body = fh.read(8 * h * w)
        if len(body) != 8 * h * w:
            raise FormatError(f"{path!r}: truncated container body")
        mean = np.frombuffer(body, dtype="<f8").reshape(h, w).copy()
    return CorpusSpectrum(kind=KINDS[kind_id], mean=mean, count=count)


COMPARE_KINDS = ("dft", "dct", "cA", "cH", "cV", "cD", "rapsd")


def compare_corpora(a: dict[str, CorpusSpectrum], b: dict[str, CorpusSpectrum]) -> dict[str, float]:
    """COS between two corpora's mean spectra, per transform kind.

    Takes dicts keyed by kind; every kind present in both sides is compared.
    When all four Haar sub-bands are present, dwt_avg (their plain mean, a
    toolkit convention rather than a separate statistic) is added.
    """
    out: dict[str, float] = {}
    for kind in COMPARE_KINDS:
        if kind in a and kind in b:
            sa, sb = a[kind], b[kind]
            if sa.mean.shape != sb.mean.shape:
                raise DimensionError(f"{kind}: corpus shapes disagree "
                                     f"{sa.mean.shape} vs {sb.mean.shape}")
            out[kind] = cosine_similarity(sa.mean, sb.mean)
    if all(k in out for k in SUBBANDS):
        out["dwt_avg"] = float(np.mean([out[k] for k in SUBBANDS]))
    if not out:
        raise DomainError("no common spectrum kinds to compare")
    return out
