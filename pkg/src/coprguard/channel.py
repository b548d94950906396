"""Degradation channels, the channel spec grammar, DDPM-style forward
diffusion, and the mixed (partially watermarked) dataset builder.

Channels model what happens to images between embedding and audit: geometric
transforms, lossy compression, noise, blur, crop-and-rescale, and a cheap
stand-in for an autoencoder round trip. Every stochastic channel draws from a
counter-based stream keyed on an explicit seed, so results never depend on
evaluation order.
"""

import os
from dataclasses import dataclass
from typing import Union

import numpy as np
from PIL import Image as PILImage
from scipy.ndimage import correlate1d

from . import image as img_mod
from .errors import DomainError, SpecError
from .image import Image, from_array
from .manifest import DatasetManifest, ManifestEntry
from .seeds import derive_seed, rng_from
from .watermark import WatermarkKey, embed


@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class Rotate:
    degrees: int  # 90, 180 or 270, counter-clockwise

    def __post_init__(self):
        if self.degrees not in (90, 180, 270):
            raise DomainError(f"rotation must be 90, 180 or 270, got {self.degrees}")


@dataclass(frozen=True)
class Flip:
    axis: str  # "h" mirrors left-right, "v" top-bottom

    def __post_init__(self):
        if self.axis not in ("h", "v"):
            raise DomainError(f"flip axis must be 'h' or 'v', got {self.axis!r}")


@dataclass(frozen=True)
class Jpeg:
    quality: int  # libjpeg quality scale, chroma subsampled 4:2:0

    def __post_init__(self):
        if not 1 <= self.quality <= 100:
            raise DomainError(f"jpeg quality must be in [1, 100], got {self.quality}")


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float
    rng_seed: int | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError(f"noise sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class GaussianBlur:
    kernel: int
    sigma: float

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise DomainError(f"blur kernel must be odd and >= 1, got {self.kernel}")
        if self.sigma <= 0:
            raise DomainError(f"blur sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class CropScale:
    ratio: float  # center-crop to this fraction, then rescale back up

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise DomainError(f"crop ratio must be in (0, 1], got {self.ratio}")


@dataclass(frozen=True)
class AutoencoderSurrogate:
    """Area-average downsample by factor, bilinear upsample back, plus optional
    Gaussian noise: a stand-in for the information loss of an autoencoder
    round trip with factor-fold spatial compression."""

    factor: int = 8
    noise_sigma: float = 0.0
    rng_seed: int | None = None

    def __post_init__(self):
        if self.factor < 2:
            raise DomainError(f"surrogate factor must be >= 2, got {self.factor}")
        if self.noise_sigma < 0:
            raise DomainError(f"surrogate noise sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class Compose:
    stages: tuple

    def __post_init__(self):
        if not self.stages:
            raise DomainError("composition needs at least one stage")


ChannelVariant = Union[Identity, Rotate, Flip, Jpeg, GaussianNoise, GaussianBlur,
                       CropScale, AutoencoderSurrogate, Compose]


def _is_stochastic(spec: ChannelVariant) -> bool:
    if isinstance(spec, GaussianNoise):
        return spec.sigma > 0
    if isinstance(spec, AutoencoderSurrogate):
        return spec.noise_sigma > 0
    if isinstance(spec, Compose):
        return any(_is_stochastic(s) for s in spec.stages)
    return False


def _jpeg_roundtrip(img: Image, quality: int) -> Image:
    q = np.rint(img.data * 255.0).astype(np.uint8)
    if img.channels == 1:
        pil = PILImage.fromarray(q[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(q, mode="RGB")
    import io
    buf = io.BytesIO()
    # subsampling=2 selects 4:2:0; ignored for grayscale
    pil.save(buf, format="JPEG", quality=quality, subsampling=2)
    buf.seek(0)
    back = PILImage.open(buf)
    back.load()
    arr = np.asarray(back, dtype=np.float64) / 255.0
    return from_array(arr)


def _gaussian_kernel(kernel: int, sigma: float) -> np.ndarray:
    r = kernel // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _blur(img: Image, kernel: int, sigma: float) -> Image:
    k = _gaussian_kernel(kernel, sigma)
    out = np.empty_like(img.data)
    for c in range(img.channels):
        tmp = correlate1d(img.data[:, :, c], k, axis=0, mode="reflect")
        out[:, :, c] = correlate1d(tmp, k, axis=1, mode="reflect")
    return from_array(out, clamp=True)


def apply_channel(img: Image, spec: ChannelVariant, seed: int | None = None) -> Image:
    """Run one image through a degradation channel.

    Stochastic variants take their stream from spec.rng_seed when set,
    otherwise from the seed argument; with neither they refuse to run.
    Stages of a composition derive independent per-stage streams.
    """
    if isinstance(spec, Identity):
        return img
    if isinstance(spec, Rotate):
        return img_mod.rotate90(img, spec.degrees // 90)
    if isinstance(spec, Flip):
        return img_mod.flip_horizontal(img) if spec.axis == "h" else img_mod.flip_vertical(img)
    if isinstance(spec, Jpeg):
        return _jpeg_roundtrip(img, spec.quality)
    if isinstance(spec, GaussianNoise):
        if spec.sigma == 0:
            return img
        eff = spec.rng_seed if spec.rng_seed is not None else seed
        if eff is None:
            raise DomainError("gaussian noise channel needs a seed")
        rng = rng_from("channel-noise", eff)
        out = img.data + rng.normal(0.0, spec.sigma, size=img.shape)
        return from_array(out, clamp=True)
    if isinstance(spec, GaussianBlur):
        return _blur(img, spec.kernel, spec.sigma)
    if isinstance(spec, CropScale):
        if spec.ratio == 1.0:
            return img
        h, w = img.height, img.width
        return img_mod.resize_bilinear(img_mod.center_crop(img, spec.ratio), h, w)
    if isinstance(spec, AutoencoderSurrogate):
        h, w = img.height, img.width
        th = max(1, round(h / spec.factor))
        tw = max(1, round(w / spec.factor))
        small = img_mod.resize_area(img, th, tw)
        out = img_mod.resize_bilinear(small, h, w)
        if spec.noise_sigma > 0:
            eff = spec.rng_seed if spec.rng_seed is not None else seed
            if eff is None:
                raise DomainError("autoencoder surrogate noise needs a seed")
            rng = rng_from("channel-ae-noise", eff)
            return from_array(out.data + rng.normal(0.0, spec.noise_sigma, size=out.shape),
                              clamp=True)
        return out
    if isinstance(spec, Compose):
        cur = img
        for i, stage in enumerate(spec.stages):
            stage_seed = None if seed is None else derive_seed(seed, "stage", i)
            cur = apply_channel(cur, stage, seed=stage_seed)
        return cur
    raise DomainError(f"unknown channel variant {type(spec).__name__}")


# --- spec grammar -----------------------------------------------------------
#
#   identity | rot:90|180|270 | flip:h|v | jpeg:Q | noise:SIGMA
#   | blur:K:SIGMA | crop:RATIO | ae:FACTOR[:SIGMA] | then(a,b,...)

def _split_top_level(body: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise SpecError("unbalanced ')' in channel spec", token=body)
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise SpecError("unbalanced '(' in channel spec", token=body)
    parts.append("".join(cur))
    return parts


def _num(token: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise SpecError(f"bad number {text!r} in channel spec", token=token) from None


def _int(token: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise SpecError(f"bad integer {text!r} in channel spec", token=token) from None


def parse_channel(text: str) -> ChannelVariant:
    """Parse a channel spec string. Raises SpecError naming the bad token."""
    tok = text.strip()
    if not tok:
        raise SpecError("empty channel spec", token=text)
    if tok.startswith("then(") and tok.endswith(")"):
        stages = tuple(parse_channel(p) for p in _split_top_level(tok[5:-1]))
        return Compose(stages=stages)
    head, _, rest = tok.partition(":")
    try:
        if head == "identity":
            if rest:
                raise SpecError("identity takes no parameters", token=tok)
            return Identity()
        if head == "rot":
            return Rotate(degrees=_int(tok, rest))
        if head == "flip":
            return Flip(axis=rest)
        if head == "jpeg":
            return Jpeg(quality=_int(tok, rest))
        if head == "noise":
            return GaussianNoise(sigma=_num(tok, rest))
        if head == "blur":
            k, _, s = rest.partition(":")
            if not s:
                raise SpecError("blur needs kernel and sigma: blur:K:SIGMA", token=tok)
            return GaussianBlur(kernel=_int(tok, k), sigma=_num(tok, s))
        if head == "crop":
            return CropScale(ratio=_num(tok, rest))
        if head == "ae":
            f, _, s = rest.partition(":")
            if s:
                return AutoencoderSurrogate(factor=_int(tok, f), noise_sigma=_num(tok, s))
            return AutoencoderSurrogate(factor=_int(tok, f))
    except DomainError as exc:
        raise SpecError(f"invalid channel parameter: {exc}", token=tok) from exc
    raise SpecError(f"unknown channel {head!r}", token=tok)


def format_channel(spec: ChannelVariant) -> str:
    """Inverse of parse_channel for the variants the grammar can express."""
    if isinstance(spec, Identity):
        return "identity"
    if isinstance(spec, Rotate):
        return f"rot:{spec.degrees}"
    if isinstance(spec, Flip):
        return f"flip:{spec.axis}"
    if isinstance(spec, Jpeg):
        return f"jpeg:{spec.quality}"
    if isinstance(spec, GaussianNoise):
        return f"noise:{spec.sigma:g}"
    if isinstance(spec, GaussianBlur):
        return f"blur:{spec.kernel}:{spec.sigma:g}"
    if isinstance(spec, CropScale):
        return f"crop:{spec.ratio:g}"
    if isinstance(spec, AutoencoderSurrogate):
        if spec.noise_sigma:
            return f"ae:{spec.factor}:{spec.noise_sigma:g}"
        return f"ae:{spec.factor}"
    if isinstance(spec, Compose):
        return "then(" + ",".join(format_channel(s) for s in spec.stages) + ")"
    raise DomainError(f"unknown channel variant {type(spec).__name__}")


# --- forward diffusion ------------------------------------------------------

@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule of a DDPM forward process.

    alpha_bar[t] = prod_{s<=t} (1 - beta_s) with the convention alpha_bar[0]=1,
    so t ranges over 0..T inclusive and t=0 reproduces the input exactly.
    """

    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise DomainError("schedule needs a 1-D beta array")
        if (b <= 0).any() or (b >= 1).any():
            raise DomainError("betas must lie strictly inside (0, 1)")
        object.__setattr__(self, "betas", b)

    @property
    def t_max(self) -> int:
        return self.betas.size

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t <= self.t_max:
            raise DomainError(f"t must be in [0, {self.t_max}], got {t}")
        if t == 0:
            return 1.0
        return float(np.prod(1.0 - self.betas[:t]))


def linear_schedule(beta_start: float = 1e-4, beta_end: float = 0.02,
                    steps: int = 1000) -> NoiseSchedule:
    if steps < 1:
        raise DomainError("schedule needs at least one step")
    return NoiseSchedule(betas=np.linspace(beta_start, beta_end, steps))


def parse_schedule(text: str) -> NoiseSchedule:
    """Schedule grammar: linear:BETA_START:BETA_END:STEPS (default linear:0.0001:0.02:1000)."""
    tok = text.strip()
    parts = tok.split(":")
    if parts[0] != "linear" or len(parts) != 4:
        raise SpecError("schedule spec must look like linear:BETA_START:BETA_END:STEPS",
                        token=tok)
    try:
        return linear_schedule(float(parts[1]), float(parts[2]), int(parts[3]))
    except ValueError as exc:
        raise SpecError(f"bad schedule number: {exc}", token=tok) from None
    except DomainError as exc:
        raise SpecError(f"invalid schedule: {exc}", token=tok) from exc


def forward_diffuse_model(x0: np.ndarray, t: int, schedule: NoiseSchedule,
                          rng: np.random.Generator) -> np.ndarray:
    """One q(x_t | x_0) sample in the model's [-1, 1] domain, unclamped:
    x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps."""
    ab = schedule.alpha_bar(t)
    if t == 0:
        return np.array(x0, dtype=np.float64)
    eps = rng.standard_normal(size=np.shape(x0))
    return np.sqrt(ab) * np.asarray(x0, dtype=np.float64) + np.sqrt(1.0 - ab) * eps


def forward_diffuse(img: Image, t: int, schedule: NoiseSchedule, seed: int) -> Image:
    """Diffuse an image to step t and return it in storage range.

    The pixel data is mapped to [-1, 1], noised, then mapped back to [0, 1]
    and clamped (samples beyond the displayable range are clipped, which is a
    storage decision, not part of the forward process itself).
    """
    schedule.alpha_bar(t)  # range check before touching any rng state
    if t == 0:
        return img
    rng = rng_from("diffuse", seed, t)
    xt = forward_diffuse_model(img.data * 2.0 - 1.0, t, schedule, rng)
    return from_array((xt + 1.0) / 2.0, clamp=True)


# --- mixed dataset builder --------------------------------------------------

@dataclass(frozen=True)
class MixPlan:
    """Recipe for a suspect dataset: n images sampled from a clean pool, each
    watermarked independently with probability ratio, then degraded."""

    ratio: float
    count: int
    channel: ChannelVariant = Identity()
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise DomainError(f"mix ratio must be in [0, 1], got {self.ratio}")
        if self.count < 1:
            raise DomainError(f"mix count must be >= 1, got {self.count}")


def build_mixed_set(clean: DatasetManifest, key: WatermarkKey, plan: MixPlan,
                    out_dir: str, progress=None) -> DatasetManifest:
    """Materialize a mixed dataset on disk and return its manifest.

    Each output item draws its source image uniformly from the clean manifest
    and its watermark coin with P(heads) = plan.ratio, from a per-item stream
    seeded by (plan.seed, index). The manifest labels every item with its
    ground truth and records the plan plus the realized watermarked count.
    """
    if not clean.entries:
        raise DomainError("clean manifest is empty")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    realized = 0
    for i in range(plan.count):
        rng = rng_from("mix", plan.seed, i)
        src = clean.entries[int(rng.integers(0, len(clean.entries)))]
        marked = bool(rng.random() < plan.ratio)
        img = img_mod.load_image(clean.resolve(src))
        if marked:
            img = embed(img, key)
            realized += 1
        img = apply_channel(img, plan.channel, seed=derive_seed(plan.seed, "mix-chan", i))
        name = f"{i:06d}.png"
        img_mod.save_image(img, os.path.join(out_dir, name))
        entries.append(ManifestEntry(id=f"{i:06d}", path=name,
                                     label="watermarked" if marked else "clean"))
        if progress is not None:
            progress(i)
    extra = {
        "plan": {
            "ratio": plan.ratio,
            "count": plan.count,
            "channel": format_channel(plan.channel),
            "seed": plan.seed,
        },
        "realized_watermarked": realized,
    }
    return DatasetManifest(entries=entries, root=None,
                           base_dir=os.path.abspath(out_dir), extra=extra)
