"""Forensic image watermarking: embed spread-spectrum watermarks in training
images, characterize corpora by their frequency-domain statistics, and audit
suspect image sets for evidence that watermarked data was used."""

__version__ = "0.1.0"

from .channel import (AutoencoderSurrogate, Compose, CropScale, Flip,
                      GaussianBlur, GaussianNoise, Identity, Jpeg, MixPlan,
                      NoiseSchedule, Rotate, apply_channel, build_mixed_set,
                      format_channel, forward_diffuse, forward_diffuse_model,
                      linear_schedule, parse_channel, parse_schedule)
from .detect import (CalibrationRecord, DetectionReport, TestConfig,
                     TestOutcome, audit, calibrate, decide_image,
                     detection_ratio, hypothesis_test, injection_ratio)
from .errors import (CoprGuardError, DimensionError, DomainError, FormatError,
                     KeyMismatchError, SingularFitError, SizeError, SpecError)
from .image import (Image, from_array, grayscale, load_image, psnr,
                    save_image, ssim)
from .manifest import DatasetManifest, ManifestEntry, load_manifest, save_manifest
from .spectral import (CorpusSpectrum, compare_corpora, corpus_mean,
                       cosine_similarity, dct2, dft_magnitude, dwt_haar,
                       idct2, idwt_haar, rapsd, read_corpus_spectrum,
                       write_corpus_spectrum)
from .synth import build_corpus, natural_image, noise_image, watermark_pattern
from .tdist import t_cdf, t_quantile
from .watermark import (EnhancementFilter, ExtractedWatermark, WatermarkKey,
                        embed, extract, fit_enhancement, key_fingerprint,
                        load_enhancement, load_key, save_enhancement, save_key)

__all__ = [
    "__version__",
    "AutoencoderSurrogate", "Compose", "CropScale", "Flip", "GaussianBlur",
    "GaussianNoise", "Identity", "Jpeg", "MixPlan", "NoiseSchedule", "Rotate",
    "apply_channel", "build_mixed_set", "format_channel", "forward_diffuse",
    "forward_diffuse_model", "linear_schedule", "parse_channel", "parse_schedule",
    "CalibrationRecord", "DetectionReport", "TestConfig", "TestOutcome",
    "audit", "calibrate", "decide_image", "detection_ratio", "hypothesis_test",
    "injection_ratio",
    "CoprGuardError", "DimensionError", "DomainError", "FormatError",
    "KeyMismatchError", "SingularFitError", "SizeError", "SpecError",
    "Image", "from_array", "grayscale", "load_image", "psnr", "save_image", "ssim",
    "DatasetManifest", "ManifestEntry", "load_manifest", "save_manifest",
    "CorpusSpectrum", "compare_corpora", "corpus_mean", "cosine_similarity",
    "dct2", "dft_magnitude", "dwt_haar", "idct2", "idwt_haar", "rapsd",
    "read_corpus_spectrum", "write_corpus_spectrum",
    "build_corpus", "natural_image", "noise_image", "watermark_pattern",
    "t_cdf", "t_quantile",
    "EnhancementFilter", "ExtractedWatermark", "WatermarkKey", "embed",
    "extract", "fit_enhancement", "key_fingerprint", "load_enhancement",
    "load_key", "save_enhancement", "save_key",
]
