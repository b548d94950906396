"""Command-line surface.

Every command reads images or containers, writes files, and exits with a
stable code: 0 success, 10 infringing audit verdict, 64 usage error, 65 bad
data or format, 66 missing input, 70 internal error. JSON artifacts carry the
tool version, format version, and master seed, plus a canonical content hash
that ignores timestamps, so identical runs are byte-comparable. No artifact
embeds filesystem paths; moving a working tree does not change any hash.
"""

import math
import os
import sys

import click

from . import __version__
from .artifacts import envelope, read_artifact, timestamps, write_artifact
from .channel import (MixPlan, apply_channel, build_mixed_set, format_channel,
                      forward_diffuse, parse_channel, parse_schedule)
from .detect import CalibrationRecord, TestConfig
from .detect import audit as audit_op
from .detect import calibrate as calibrate_op
from .errors import CoprGuardError, FormatError, SpecError
from .image import load_image, luma_plane, psnr, save_image, ssim
from .manifest import DatasetManifest, ManifestEntry, load_manifest, save_manifest
from .parallel import make_mapper
from .seeds import derive_seed
from .spectral import (KINDS, CorpusSpectrum, compare_corpora, corpus_mean,
                       read_corpus_spectrum, write_corpus_spectrum)
from .watermark import embed as embed_op
from .watermark import extract as extract_op
from .watermark import key_fingerprint, load_enhancement, load_key

EXIT_OK = 0
EXIT_INFRINGING = 10
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NO_INPUT = 66
EXIT_INTERNAL = 70

_CHUNK = 128  # images per worker batch; bounds memory, never changes results


def _log(obj, msg: str) -> None:
    if obj.get("verbose"):
        click.echo(msg, err=True)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="coprguard")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True,
              help="Master seed; every stochastic step derives from it.")
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Worker threads; the COPRGUARD_THREADS environment "
                   "variable overrides this flag. Defaults to the CPU count.")
@click.option("--verbose", "-v", is_flag=True, help="Progress logging on stderr.")
@click.pass_context
def cli(ctx, seed, threads, verbose):
    """Watermark training images and audit suspect sets for their reuse."""
    ctx.obj = {"seed": seed, "threads": threads, "verbose": verbose,
               "mapper": make_mapper(threads)}


def _chunks(seq, size):
    for i in range(0, len(seq), size):
        yield seq[i:i + size]


def _mean_spectrum(man: DatasetManifest, kind: str, mapper) -> CorpusSpectrum:
    # chunked so worker batches bound memory; the sum itself stays in
    # manifest order, so thread count cannot change the result
    total = None
    n = 0
    for chunk in _chunks(man.entries, _CHUNK):
        parts = mapper(
            lambda e: corpus_mean([luma_plane(load_image(man.resolve(e)))], kind),
            chunk)
        for p in parts:
            total = p.mean.copy() if total is None else total + p.mean
            n += 1
    return CorpusSpectrum(kind=kind, mean=total / n, count=n)


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--transform", "-t", type=click.Choice(KINDS), required=True,
              help="Which spectral statistic to average.")
@click.option("--out", "-o", required=True, type=click.Path(),
              help="Output container file.")
@click.pass_obj
def spectrum(obj, manifest, transform, out):
    """Average one spectral statistic over a corpus into a container."""
    man = load_manifest(manifest)
    spec = _mean_spectrum(man, transform, obj["mapper"])
    write_corpus_spectrum(spec, out)
    _log(obj, f"{out}: kind={transform} images={spec.count}")
    return EXIT_OK


def _read_spectra(path: str) -> dict[str, CorpusSpectrum]:
    if os.path.isdir(path):
        out: dict[str, CorpusSpectrum] = {}
        names = sorted(n for n in os.listdir(path) if n.endswith(".cgsp"))
        if not names:
            raise FileNotFoundError(f"no .cgsp containers in {path!r}")
        for name in names:
            spec = read_corpus_spectrum(os.path.join(path, name))
            if spec.kind in out:
                raise FormatError(f"{path!r} holds two containers of kind {spec.kind}")
            out[spec.kind] = spec
        return out
    spec = read_corpus_spectrum(path)
    return {spec.kind: spec}


@cli.command()
@click.option("--a", "a_path", required=True, type=click.Path(),
              help="First container file, or directory of containers.")
@click.option("--b", "b_path", required=True, type=click.Path(),
              help="Second container file or directory.")
@click.option("--out", "-o", required=True, type=click.Path(),
              help="Comparison report (JSON).")
@click.pass_obj
def compare(obj, a_path, b_path, out):
    """Cosine similarity between two corpora's mean spectra."""
    if not os.path.exists(a_path):
        raise FileNotFoundError(a_path)
    if not os.path.exists(b_path):
        raise FileNotFoundError(b_path)
    sa = _read_spectra(a_path)
    sb = _read_spectra(b_path)
    cos = compare_corpora(sa, sb)
    doc = {
        **envelope(obj["seed"]),
        "command": "compare",
        "cos": cos,
        "counts": {
            "a": {k: sa[k].count for k in sorted(sa)},
            "b": {k: sb[k].count for k in sorted(sb)},
        },
        "timestamps": timestamps(),
    }
    digest = write_artifact(out, doc)
    _log(obj, f"{out}: {digest}")
    for k in sorted(cos):
        click.echo(f"{k}\t{cos[k]:.6f}")
    return EXIT_OK


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--key", "key_path", required=True, type=click.Path(),
              help="Watermark key file.")
@click.option("--outdir", required=True, type=click.Path(),
              help="Directory for the watermarked images.")
@click.option("--manifest-out", type=click.Path(), default=None,
              help="Where to write the output manifest.  [default: OUTDIR/manifest.json]")
@click.option("--strength", type=float, default=None,
              help="Override the key's embedding strength for this run.")
@click.pass_obj
def embed(obj, manifest, key_path, outdir, manifest_out, strength):
    """Embed the key's watermark into every image of a corpus."""
    man = load_manifest(manifest)
    key = load_key(key_path)
    os.makedirs(outdir, exist_ok=True)

    def work(entry):
        img = load_image(man.resolve(entry))
        marked = embed_op(img, key, strength=strength)
        name = f"{entry.id}.png"
        save_image(marked, os.path.join(outdir, name))
        return (ManifestEntry(id=entry.id, path=name, label="watermarked"),
                psnr(img, marked), ssim(img, marked))

    rows = []
    for chunk in _chunks(man.entries, _CHUNK):
        rows.extend(obj["mapper"](work, chunk))
    entries = [r[0] for r in rows]
    finite = [r[1] for r in rows if math.isfinite(r[1])]
    mean_psnr = sum(finite) / len(finite) if finite else None
    mean_ssim = sum(r[2] for r in rows) / len(rows)
    for e, p, s in rows:
        _log(obj, f"{e.id}: psnr={p:.2f} ssim={s:.4f}")
    extra = {
        "strength": strength if strength is not None else key.strength,
        "key_fingerprint": key_fingerprint(key),
        "quality": {"mean_psnr": mean_psnr, "mean_ssim": mean_ssim},
    }
    out_man = DatasetManifest(entries=entries, root=None,
                              base_dir=os.path.abspath(outdir), extra=extra)
    save_manifest(out_man, manifest_out or os.path.join(outdir, "manifest.json"))
    click.echo(f"embedded {len(entries)} images"
               + (f", mean psnr {mean_psnr:.2f} dB" if mean_psnr else "")
               + f", mean ssim {mean_ssim:.4f}")
    return EXIT_OK


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--key", "key_path", required=True, type=click.Path(),
              help="Watermark key file.")
@click.option("--enh", "enh_path", type=click.Path(), default=None,
              help="Enhancement filter to apply before demodulation.")
@click.option("--orientation-search", is_flag=True,
              help="Search flips, rotations and inverse crops, keep the best score.")
@click.option("--out", "-o", required=True, type=click.Path(),
              help="Extraction report (JSON).")
@click.pass_obj
def extract(obj, manifest, key_path, enh_path, orientation_search, out):
    """Blind-extract the watermark score from every image of a corpus."""
    man = load_manifest(manifest)
    key = load_key(key_path)
    enh = load_enhancement(enh_path) if enh_path else None

    def work(entry):
        ext = extract_op(load_image(man.resolve(entry)), key, enh=enh,
                         orientation_search=orientation_search)
        return entry.id, ext

    rows = []
    for chunk in _chunks(man.entries, _CHUNK):
        rows.extend(obj["mapper"](work, chunk))
    per_image = []
    for eid, ext in sorted(rows, key=lambda r: r[0]):
        row = {"id": eid, "cos": float(ext.cos)}
        if orientation_search:
            row["pose"] = ext.pose
            row["undo_ratio"] = float(ext.undo_ratio)
        per_image.append(row)
    mean_cos = sum(r["cos"] for r in per_image) / len(per_image)
    doc = {
        **envelope(obj["seed"]),
        "command": "extract",
        "n": len(per_image),
        "mean_cos": mean_cos,
        "orientation_search": orientation_search,
        "key_fingerprint": key_fingerprint(key),
        "per_image": per_image,
        "timestamps": timestamps(),
    }
    digest = write_artifact(out, doc)
    _log(obj, f"{out}: {digest}")
    click.echo(f"extracted {len(per_image)} images, mean cos {mean_cos:.4f}")
    return EXIT_OK


@cli.command("channel")
@click.argument("manifest", type=click.Path())
@click.option("--spec", "spec_text", required=True,
              help="Channel spec, e.g. jpeg:70 or then(jpeg:70,noise:0.05).")
@click.option("--outdir", required=True, type=click.Path(),
              help="Directory for the degraded images.")
@click.option("--manifest-out", type=click.Path(), default=None,
              help="Where to write the output manifest.  [default: OUTDIR/manifest.json]")
@click.pass_obj
def channel_cmd(obj, manifest, spec_text, outdir, manifest_out):
    """Push every image of a corpus through a degradation channel."""
    variant = parse_channel(spec_text)
    man = load_manifest(manifest)
    os.makedirs(outdir, exist_ok=True)
    seed = obj["seed"]

    def work(pair):
        i, entry = pair
        img = load_image(man.resolve(entry))
        degraded = apply_channel(img, variant, seed=derive_seed("channel-cmd", seed, i))
        name = f"{entry.id}.png"
        save_image(degraded, os.path.join(outdir, name))
        return ManifestEntry(id=entry.id, path=name, label=entry.label)

    entries = []
    indexed = list(enumerate(man.entries))
    for chunk in _chunks(indexed, _CHUNK):
        entries.extend(obj["mapper"](work, chunk))
    extra = {"channel": format_channel(variant), "seed": seed}
    out_man = DatasetManifest(entries=entries, root=None,
                              base_dir=os.path.abspath(outdir), extra=extra)
    save_manifest(out_man, manifest_out or os.path.join(outdir, "manifest.json"))
    _log(obj, f"{outdir}: {len(entries)} images through {extra['channel']}")
    return EXIT_OK


@cli.command()
@click.option("--image", "image_path", required=True, type=click.Path(),
              help="Input image.")
@click.option("--t", "t_step", type=click.IntRange(min=0), required=True,
              help="Forward diffusion step; 0 reproduces the input.")
@click.option("--schedule", default="linear:0.0001:0.02:1000", show_default=True,
              help="Variance schedule spec.")
@click.option("--out", "-o", required=True, type=click.Path(),
              help="Output image.")
@click.pass_obj
def diffuse(obj, image_path, t_step, schedule, out):
    """Sample the DDPM forward process q(x_t | x_0) for one image."""
    sched = parse_schedule(schedule)
    img = load_image(image_path)
    save_image(forward_diffuse(img, t_step, sched, obj["seed"]), out)
    _log(obj, f"{out}: t={t_step}")
    return EXIT_OK


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--key", "key_path", required=True, type=click.Path(),
              help="Watermark key file.")
@click.option("--margin", type=float, default=0.005, show_default=True,
              help="Threshold margin above the maximum clean score.")
@click.option("--enh", "enh_path", type=click.Path(), default=None,
              help="Enhancement filter to apply before demodulation.")
@click.option("--orientation-search", is_flag=True,
              help="Score clean images with the orientation search enabled.")
@click.option("--out", "-o", required=True, type=click.Path(),
              help="Calibration record (JSON).")
@click.pass_obj
def calibrate(obj, manifest, key_path, margin, enh_path, orientation_search, out):
    """Calibrate the per-image decision threshold on a known-clean corpus."""
    man = load_manifest(manifest)
    key = load_key(key_path)
    enh = load_enhancement(enh_path) if enh_path else None
    rec = calibrate_op(man, key, margin=margin, enh=enh,
                       orientation_search=orientation_search,
                       ref_corpus=os.path.basename(manifest),
                       mapper=obj["mapper"],
                       warn=lambda m: click.echo(f"warning: {m}", err=True))
    doc = {**envelope(obj["seed"]), "command": "calibrate", **rec.to_doc(),
           "timestamps": timestamps()}
    digest = write_artifact(out, doc)
    _log(obj, f"{out}: {digest}")
    click.echo(f"gamma {rec.gamma:.6f}, tau {rec.tau:.6f} over {rec.n_ref} images")
    return EXIT_OK


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--key", "key_path", required=True, type=click.Path(),
              help="Watermark key file.")
@click.option("--calib", "calib_path", required=True, type=click.Path(),
              help="Calibration record from the calibrate command.")
@click.option("--pc", type=click.FloatRange(0.0, 1.0, max_open=True), default=0.0,
              show_default=True, help="Expected clean flag rate P_c.")
@click.option("--kappa", type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True),
              default=0.05, show_default=True, help="Excess-fraction tolerance.")
@click.option("--lambda", "lambda_", type=click.FloatRange(0.0, 1.0, min_open=True,
              max_open=True), default=0.05, show_default=True,
              help="Significance level of the one-sided test.")
@click.option("--enh", "enh_path", type=click.Path(), default=None,
              help="Enhancement filter to apply before demodulation.")
@click.option("--orientation-search", is_flag=True,
              help="Search flips, rotations and inverse crops per image.")
@click.option("--out", "-o", required=True, type=click.Path(),
              help="Audit report (JSON).")
@click.pass_obj
def audit(obj, manifest, key_path, calib_path, pc, kappa, lambda_, enh_path,
          orientation_search, out):
    """Audit a suspect corpus; exits 10 when the verdict is infringing."""
    man = load_manifest(manifest)
    key = load_key(key_path)
    enh = load_enhancement(enh_path) if enh_path else None
    calib_doc = read_artifact(calib_path)
    try:
        rec = CalibrationRecord.from_doc(calib_doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{calib_path!r} is not a calibration record: {exc}") from exc
    cfg = TestConfig(kappa=kappa, lambda_=lambda_, p_c=pc)
    report = audit_op(man, key, rec, cfg, enh=enh,
                      orientation_search=orientation_search,
                      mapper=obj["mapper"])
    doc = {**envelope(obj["seed"]), "command": "audit", **report.to_doc(),
           "timestamps": timestamps()}
    digest = write_artifact(out, doc)
    _log(obj, f"{out}: {digest}")
    click.echo(f"{report.decision}: p_u {report.p_u:.4f} "
               f"({report.flagged}/{report.n}), statistic {report.statistic:.4f}")
    return EXIT_INFRINGING if report.decision == "infringing" else EXIT_OK


@cli.command()
@click.option("--clean", "clean_path", required=True, type=click.Path(),
              help="Manifest of the clean source pool.")
@click.option("--key", "key_path", required=True, type=click.Path(),
              help="Watermark key file.")
@click.option("--r", "ratio", type=click.FloatRange(0.0, 1.0), required=True,
              help="Probability that an output image is watermarked.")
@click.option("--n", "count", type=click.IntRange(min=1), required=True,
              help="Number of output images.")
@click.option("--spec", "spec_text", default="identity", show_default=True,
              help="Channel applied after the optional embedding.")
@click.option("--outdir", required=True, type=click.Path(),
              help="Directory for the mixed set.")
@click.option("--manifest-out", type=click.Path(), default=None,
              help="Where to write the output manifest.  [default: OUTDIR/manifest.json]")
@click.pass_obj
def mix(obj, clean_path, key_path, ratio, count, spec_text, outdir, manifest_out):
    """Build a partially watermarked, degraded dataset with ground truth."""
    plan = MixPlan(ratio=ratio, count=count, channel=parse_channel(spec_text),
                   seed=obj["seed"])
    man = build_mixed_set(load_manifest(clean_path), load_key(key_path), plan, outdir,
                          progress=(lambda i: _log(obj, f"mixed {i + 1}/{count}"))
                          if obj["verbose"] else None)
    save_manifest(man, manifest_out or os.path.join(outdir, "manifest.json"))
    click.echo(f"mixed {count} images, {man.extra['realized_watermarked']} watermarked")
    return EXIT_OK


def main(argv=None) -> int:
    """Entry point mapping exceptions to the documented exit codes."""
    try:
        rv = cli.main(args=argv, standalone_mode=False)
        return rv if isinstance(rv, int) else EXIT_OK
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 130
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.FileError as exc:
        exc.show()
        return EXIT_NO_INPUT
    except click.ClickException as exc:
        exc.show()
        return EXIT_INTERNAL
    except SpecError as exc:
        tok = f" (at {exc.token!r})" if getattr(exc, "token", None) else ""
        click.echo(f"error: {exc}{tok}", err=True)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        click.echo(f"error: missing input: {exc}", err=True)
        return EXIT_NO_INPUT
    except CoprGuardError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - safety net
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
