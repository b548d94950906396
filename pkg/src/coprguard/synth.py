"""Synthetic corpus generation.

Experiments here need image sets with natural-image statistics (power-law
spectra, smooth large-scale structure, mid-frequency texture in every
neighborhood, little energy near Nyquist) but with exact reproducibility, so
the generator is a seeded spectral-shaping pipeline rather than a photo
collection. White-noise corpora act as the spectral control group.
"""

import os

import numpy as np

from .image import DEFAULT_RESOLUTION, Image, from_array, save_image
from .manifest import DatasetManifest, ManifestEntry
from .seeds import derive_seed, rng_from

# spectral shape of the image fields; frequencies in cycles per pixel.
# The corpus is deliberately smooth: watermark extraction correlates against
# the host's own top-octave detail coefficients, so host energy near Nyquist
# is straight interference. Gentle large-scale gradients keep that octave
# quiet while still giving every image its own structure.
LUMA_CUTOFF = 0.0085   # Gaussian rolloff of the luminance amplitude spectrum
LUMA_SIGMA = 0.03      # std of the luminance field
CHROMA_CUTOFF = 0.007  # chroma is smoother still
CHROMA_SIGMA = 0.02    # std of each chroma field
MEAN_RANGE = (0.42, 0.58)  # per-image mean luminance

# the textured kind instead follows the classic power-law amplitude model,
# carrying energy at every radius. Use it for experiments about spectral
# SHAPE (for example, diffusion flattening a profile); the smooth kind above
# stays the host corpus for watermark work, where that energy is noise.
TEXTURE_EXPONENT = 1.4   # amplitude falls as (f + knee)^-exponent
TEXTURE_KNEE = 0.004     # keeps the amplitude finite at the lowest frequencies
TEXTURE_LUMA_SIGMA = 0.2
TEXTURE_CHROMA_SIGMA = 0.05


def _shaped_field(rng: np.random.Generator, h: int, w: int, cutoff: float) -> np.ndarray:
    """White Gaussian noise filtered to a Gaussian-taper amplitude spectrum,
    returned as a zero-mean unit-std real field."""
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    f2 = fy * fy + fx * fx
    amp = np.exp(-f2 / (cutoff * cutoff))
    amp[0, 0] = 0.0
    spec = np.fft.fft2(rng.standard_normal((h, w))) * amp
    field = np.fft.ifft2(spec).real
    sd = field.std()
    return field / sd if sd > 0 else field


def _powerlaw_field(rng: np.random.Generator, h: int, w: int,
                    exponent: float, knee: float) -> np.ndarray:
    """White Gaussian noise filtered to a power-law amplitude spectrum,
    returned as a zero-mean unit-std real field."""
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    f = np.sqrt(fy * fy + fx * fx)
    amp = (f + knee) ** -exponent
    amp[0, 0] = 0.0
    spec = np.fft.fft2(rng.standard_normal((h, w))) * amp
    field = np.fft.ifft2(spec).real
    sd = field.std()
    return field / sd if sd > 0 else field


def natural_image(seed: int, height: int = DEFAULT_RESOLUTION,
                  width: int | None = None, channels: int = 3) -> Image:
    """One synthetic natural-statistics image, fully determined by the seed."""
    if width is None:
        width = height
    rng = rng_from("synth-natural", seed, height, width, channels)
    mu = rng.uniform(*MEAN_RANGE)
    luma = mu + LUMA_SIGMA * _shaped_field(rng, height, width, LUMA_CUTOFF)
    if channels == 1:
        return from_array(luma[:, :, None], clamp=True)
    ca = CHROMA_SIGMA * _shaped_field(rng, height, width, CHROMA_CUTOFF)
    cb = CHROMA_SIGMA * _shaped_field(rng, height, width, CHROMA_CUTOFF)
    # fixed opponent axes, roughly red-green and blue-yellow
    out = np.empty((height, width, 3))
    out[:, :, 0] = luma + ca
    out[:, :, 1] = luma - 0.5 * ca + 0.3 * cb
    out[:, :, 2] = luma - cb
    return from_array(out, clamp=True)


def textured_image(seed: int, height: int = DEFAULT_RESOLUTION,
                   width: int | None = None, channels: int = 3) -> Image:
    """One synthetic textured image with a power-law spectrum."""
    if width is None:
        width = height
    rng = rng_from("synth-textured", seed, height, width, channels)
    mu = rng.uniform(*MEAN_RANGE)

    def field() -> np.ndarray:
        return _powerlaw_field(rng, height, width, TEXTURE_EXPONENT, TEXTURE_KNEE)

    luma = mu + TEXTURE_LUMA_SIGMA * field()
    if channels == 1:
        return from_array(luma[:, :, None], clamp=True)
    ca = TEXTURE_CHROMA_SIGMA * field()
    cb = TEXTURE_CHROMA_SIGMA * field()
    out = np.empty((height, width, 3))
    out[:, :, 0] = luma + ca
    out[:, :, 1] = luma - 0.5 * ca + 0.3 * cb
    out[:, :, 2] = luma - cb
    return from_array(out, clamp=True)


def noise_image(seed: int, height: int = DEFAULT_RESOLUTION,
                width: int | None = None, channels: int = 3) -> Image:
    """Pixelwise uniform white noise, the flat-spectrum control corpus."""
    if width is None:
        width = height
    rng = rng_from("synth-noise", seed, height, width, channels)
    return from_array(rng.random((height, width, channels)))


def watermark_pattern(seed: int, size: int = 64) -> Image:
    """A random binary pattern suitable as the watermark image of a key."""
    rng = rng_from("synth-watermark", seed, size)
    bits = rng.integers(0, 2, size=(size, size)).astype(np.float64)
    return from_array(bits[:, :, None])


def build_corpus(out_dir: str, count: int, seed: int, kind: str = "natural",
                 height: int = DEFAULT_RESOLUTION, width: int | None = None,
                 channels: int = 3, label: str | None = None) -> DatasetManifest:
    """Write a corpus of PNGs plus entries for a manifest; returns the manifest.

    Image i is generated from a seed derived from (seed, i), so two corpora
    built from the same seed and size share images index by index, and
    different seeds give disjoint corpora.
    """
    makers = {"natural": natural_image, "textured": textured_image,
              "noise": noise_image}
    if kind not in makers:
        raise ValueError(f"corpus kind must be one of {sorted(makers)}, got {kind!r}")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(count):
        img = makers[kind](derive_seed("corpus", seed, i), height, width, channels)
        name = f"{kind}_{i:05d}.png"
        save_image(img, os.path.join(out_dir, name))
        entries.append(ManifestEntry(id=f"{kind}_{i:05d}", path=name, label=label))
    return DatasetManifest(entries=entries, root=None,
                           base_dir=os.path.abspath(out_dir),
                           extra={"generator": kind, "seed": seed, "count": count})
