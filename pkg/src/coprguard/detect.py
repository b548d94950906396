"""Threshold calibration and the dataset-level infringement test.

The per-image detector is a cosine score against a calibrated threshold. The
dataset-level decision is a one-sided t-test on the fraction of flagged
images: with N audited images of which a fraction P_u scored above threshold,
the verdict is "infringing" when

    sqrt(N - 1) * (P_u - P_c - kappa) - t_{1-lambda, N-1} * sqrt(P_u - P_u^2) > 0

where P_c is the expected clean flag rate, kappa a tolerance on the excess,
and lambda the significance level.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

from .errors import DomainError, KeyMismatchError
from .image import load_image
from .manifest import DatasetManifest
from .tdist import t_quantile
from .watermark import EnhancementFilter, WatermarkKey, extract, key_fingerprint

DEFAULT_MARGIN = 0.005


@dataclass(frozen=True)
class TestConfig:
    """Parameters of the dataset-level hypothesis test."""

    kappa: float = 0.05
    lambda_: float = 0.05
    p_c: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise DomainError(f"kappa must be in (0, 1), got {self.kappa}")
        if not 0.0 < self.lambda_ < 1.0:
            raise DomainError(f"lambda must be in (0, 1), got {self.lambda_}")
        if not 0.0 <= self.p_c < 1.0:
            raise DomainError(f"p_c must be in [0, 1), got {self.p_c}")

    def to_doc(self) -> dict:
        return {"kappa": self.kappa, "lambda_": self.lambda_, "p_c": self.p_c}

    @staticmethod
    def from_doc(doc: dict) -> "TestConfig":
        return TestConfig(kappa=float(doc.get("kappa", 0.05)),
                          lambda_=float(doc.get("lambda_", 0.05)),
                          p_c=float(doc.get("p_c", 0.0)))


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    reject_h0: bool


def hypothesis_test(p_u: float, n: int, cfg: TestConfig) -> TestOutcome:
    """One-sided excess-fraction test; reject_h0 means the set is infringing."""
    if n < 2:
        raise DomainError(f"hypothesis test needs n >= 2, got {n}")
    if not 0.0 <= p_u <= 1.0:
        raise DomainError(f"p_u must be in [0, 1], got {p_u}")
    crit = t_quantile(1.0 - cfg.lambda_, n - 1)
    # p_u in {0, 1} zeroes the spread term exactly
    spread = p_u - p_u * p_u
    stat = math.sqrt(n - 1) * (p_u - cfg.p_c - cfg.kappa) - crit * math.sqrt(max(spread, 0.0))
    return TestOutcome(statistic=stat, reject_h0=stat > 0)


def decide_image(cos: float, tau: float) -> bool:
    """Per-image rule: flagged iff the score strictly exceeds the threshold."""
    return cos > tau


def detection_ratio(flags: list[bool]) -> float:
    """Fraction of flagged images among those audited."""
    if not flags:
        raise DomainError("detection ratio of an empty flag list is undefined")
    return sum(bool(f) for f in flags) / len(flags)


def injection_ratio(manifest: DatasetManifest) -> float:
    """Fraction of entries labeled watermarked; every entry must be labeled."""
    if not manifest.entries:
        raise DomainError("injection ratio of an empty manifest is undefined")
    marked = 0
    for e in manifest.entries:
        if e.label == "watermarked":
            marked += 1
        elif e.label != "clean":
            raise DomainError(f"entry {e.id!r} has no clean/watermarked label")
    return marked / len(manifest.entries)


@dataclass(frozen=True)
class CalibrationRecord:
    """Result of calibrating the per-image threshold on a clean corpus."""

    gamma: float           # max clean score observed
    tau: float             # decision threshold, gamma + margin
    margin: float
    n_ref: int
    ref_corpus: str = ""
    cos_quantiles: dict = field(default_factory=dict)  # p50/p90/p99/max
    key_fingerprint: str = ""
    orientation_search: bool = False

    def to_doc(self) -> dict:
        return {
            "gamma": self.gamma,
            "tau": self.tau,
            "margin": self.margin,
            "n_ref": self.n_ref,
            "ref_corpus": self.ref_corpus,
            "cos_quantiles": dict(self.cos_quantiles),
            "key_fingerprint": self.key_fingerprint,
            "orientation_search": self.orientation_search,
        }

    @staticmethod
    def from_doc(doc: dict) -> "CalibrationRecord":
        return CalibrationRecord(
            gamma=float(doc["gamma"]),
            tau=float(doc["tau"]),
            margin=float(doc["margin"]),
            n_ref=int(doc["n_ref"]),
            ref_corpus=str(doc.get("ref_corpus", "")),
            cos_quantiles={k: float(v) for k, v in doc.get("cos_quantiles", {}).items()},
            key_fingerprint=str(doc.get("key_fingerprint", "")),
            orientation_search=bool(doc.get("orientation_search", False)),
        )


def _quantile(sorted_vals: list[float], q: float) -> float:
    # linear interpolation between order statistics, same rule numpy uses
    n = len(sorted_vals)
    if n == 1:
        return sorted_vals[0]
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return sorted_vals[lo] * (1.0 - frac) + sorted_vals[hi] * frac


def calibrate(clean: DatasetManifest, key: WatermarkKey,
              margin: float = DEFAULT_MARGIN,
              enh: EnhancementFilter | None = None,
              orientation_search: bool = False,
              ref_corpus: str = "",
              mapper: Callable | None = None,
              warn: Callable[[str], None] | None = None) -> CalibrationRecord:
    """Set the per-image threshold from scores on known-clean images.

    gamma is the maximum clean score and tau = gamma + margin, so tau sits
    strictly above every clean score seen and the calibration set itself has
    zero false positives by construction. Needs at least 100 images; below
    1000 it still runs but warns, since the max of a small sample understates
    the clean tail.
    """
    n = len(clean.entries)
    if n < 100:
        raise DomainError(f"calibration needs at least 100 clean images, got {n}")
    if margin <= 0:
        raise DomainError(f"margin must be > 0, got {margin}")
    if n < 1000 and warn is not None:
        warn(f"calibrating on {n} images; 1000+ recommended for a stable threshold")

    def score(entry) -> float:
        img = load_image(clean.resolve(entry))
        return extract(img, key, enh=enh, orientation_search=orientation_search).cos

    if mapper is None:
        scores = [score(e) for e in clean.entries]
    else:
        scores = list(mapper(score, clean.entries))
    svals = sorted(float(s) for s in scores)
    gamma = svals[-1]
    qs = {
        "p50": _quantile(svals, 0.50),
        "p90": _quantile(svals, 0.90),
        "p99": _quantile(svals, 0.99),
        "max": gamma,
    }
    return CalibrationRecord(gamma=gamma, tau=gamma + margin, margin=margin,
                             n_ref=n, ref_corpus=ref_corpus, cos_quantiles=qs,
                             key_fingerprint=key_fingerprint(key),
                             orientation_search=orientation_search)


@dataclass(frozen=True)
class DetectionReport:
    """Outcome of auditing one suspect dataset against a calibrated key."""

    decision: str          # "infringing" | "not_infringing"
    statistic: float
    n: int
    p_u: float
    tau_used: float
    config: TestConfig
    key_fingerprint: str = ""
    per_image: list = field(default_factory=list)  # {id, cos, flagged}

    @property
    def flagged(self) -> int:
        return sum(1 for r in self.per_image if r["flagged"])

    def to_doc(self) -> dict:
        return {
            "decision": self.decision,
            "statistic": self.statistic,
            "n": self.n,
            "p_u": self.p_u,
            "tau_used": self.tau_used,
            "config": self.config.to_doc(),
            "key_fingerprint": self.key_fingerprint,
            "per_image": list(self.per_image),
        }


def audit(suspect: DatasetManifest, key: WatermarkKey,
          calib: CalibrationRecord,
          cfg: TestConfig | None = None,
          enh: EnhancementFilter | None = None,
          orientation_search: bool = False,
          mapper: Callable | None = None) -> DetectionReport:
    """Score every suspect image against the calibrated threshold and decide.

    Refuses to run when the calibration record was produced with a different
    key, since the threshold would be meaningless. The report's per_image
    rows are sorted by id, so the result is independent of manifest order.
    """
    if cfg is None:
        cfg = TestConfig()
    fp = key_fingerprint(key)
    if calib.key_fingerprint and calib.key_fingerprint != fp:
        raise KeyMismatchError(
            "calibration record was produced with a different watermark key")
    n = len(suspect.entries)
    if n < 2:
        raise DomainError(f"audit needs at least 2 images, got {n}")

    def score(entry):
        img = load_image(suspect.resolve(entry))
        ext = extract(img, key, enh=enh, orientation_search=orientation_search)
        return entry.id, ext.cos, ext.pose, ext.undo_ratio

    if mapper is None:
        rows = [score(e) for e in suspect.entries]
    else:
        rows = list(mapper(score, suspect.entries))

    per_image = []
    flagged = 0
    for eid, cos, pose, ratio in sorted(rows, key=lambda r: r[0]):
        hit = decide_image(cos, calib.tau)
        flagged += int(hit)
        row = {"id": eid, "cos": float(cos), "flagged": hit}
        if orientation_search:
            row["pose"] = pose
            row["undo_ratio"] = float(ratio)
        per_image.append(row)
    outcome = hypothesis_test(flagged / n, n, cfg)
    return DetectionReport(
        decision="infringing" if outcome.reject_h0 else "not_infringing",
        statistic=outcome.statistic, n=n, p_u=flagged / n,
        tau_used=calib.tau, config=cfg, key_fingerprint=fp,
        per_image=per_image)
