"""Command-line surface: flows, artifacts and exit codes."""

import json
import os

import numpy as np
import pytest

from coprguard.artifacts import canonical_hash, read_artifact
from coprguard.cli import main
from coprguard.image import load_image
from coprguard.manifest import load_manifest, save_manifest
from coprguard.synth import build_corpus, watermark_pattern
from coprguard.watermark import WatermarkKey, save_key


@pytest.fixture(scope="module")
def ctx(tmp_path_factory):
    """One small world: a clean corpus, a calibration corpus and a key file."""
    base = tmp_path_factory.mktemp("cli")
    small = build_corpus(str(base / "small"), 10, seed=7100, label="clean")
    save_manifest(small, str(base / "small" / "manifest.json"))
    cal = build_corpus(str(base / "cal"), 100, seed=7200, label="clean")
    save_manifest(cal, str(base / "cal" / "manifest.json"))
    key = WatermarkKey(watermark=watermark_pattern(7), seed=42)
    save_key(key, str(base / "key.json"))
    return {
        "base": base,
        "small_man": str(base / "small" / "manifest.json"),
        "cal_man": str(base / "cal" / "manifest.json"),
        "key": str(base / "key.json"),
    }


def run(*argv):
    return main([str(a) for a in argv])


def test_embed_extract_flow(ctx):
    base = ctx["base"]
    emb_man = str(base / "emb" / "manifest.json")
    assert run("embed", ctx["small_man"], "--key", ctx["key"],
               "--outdir", base / "emb", "--manifest-out", emb_man) == 0
    man = load_manifest(emb_man)
    assert len(man.entries) == 10
    assert all(e.label == "watermarked" for e in man.entries)
    assert man.extra["quality"]["mean_psnr"] > 34.0
    assert man.extra["quality"]["mean_ssim"] > 0.95

    out = str(base / "extract.json")
    assert run("extract", emb_man, "--key", ctx["key"], "--out", out) == 0
    rep = read_artifact(out)
    assert rep["mean_cos"] >= 0.99
    ids = [r["id"] for r in rep["per_image"]]
    assert ids == sorted(ids)


def test_extract_artifact_is_relocatable(ctx):
    """Same inputs, different output locations: identical canonical hashes."""
    base = ctx["base"]
    outs = []
    for name in ("r1", "r2"):
        out = str(base / f"extract-{name}.json")
        assert run("extract", ctx["small_man"], "--key", ctx["key"],
                   "--out", out) == 0
        outs.append(read_artifact(out))
    assert outs[0]["canonical_sha256"] == outs[1]["canonical_sha256"]
    assert canonical_hash(outs[0]) == outs[0]["canonical_sha256"]


def test_threads_do_not_change_results(ctx, monkeypatch):
    base = ctx["base"]
    monkeypatch.delenv("COPRGUARD_THREADS", raising=False)
    a = str(base / "t1.json")
    assert run("--threads", 1, "extract", ctx["small_man"],
               "--key", ctx["key"], "--out", a) == 0
    monkeypatch.setenv("COPRGUARD_THREADS", "3")
    b = str(base / "t3.json")
    assert run("--threads", 1, "extract", ctx["small_man"],
               "--key", ctx["key"], "--out", b) == 0
    assert read_artifact(a)["canonical_sha256"] == read_artifact(b)["canonical_sha256"]


def test_channel_identity_copies_bytes(ctx):
    base = ctx["base"]
    out_man = str(base / "chan" / "manifest.json")
    assert run("channel", ctx["small_man"], "--spec", "identity",
               "--outdir", base / "chan", "--manifest-out", out_man) == 0
    src = load_manifest(ctx["small_man"])
    dst = load_manifest(out_man)
    assert dst.extra["channel"] == "identity"
    for es, ed in zip(src.entries, dst.entries):
        assert es.id == ed.id
        a = np.asarray(load_image(src.resolve(es)).data)
        b = np.asarray(load_image(dst.resolve(ed)).data)
        assert np.array_equal(a, b)


def test_spectrum_and_compare_self(ctx):
    base = ctx["base"]
    s1 = str(base / "s1.cgsp")
    s2 = str(base / "s2.cgsp")
    assert run("spectrum", ctx["small_man"], "--transform", "dft", "--out", s1) == 0
    assert run("spectrum", ctx["small_man"], "--transform", "dft", "--out", s2) == 0
    out = str(base / "cmp.json")
    assert run("compare", "--a", s1, "--b", s2, "--out", out) == 0
    doc = read_artifact(out)
    assert abs(doc["cos"]["dft"] - 1.0) < 1e-12
    assert doc["counts"]["a"]["dft"] == 10


def test_compare_directory_mode(ctx, tmp_path):
    da = tmp_path / "a"
    db = tmp_path / "b"
    da.mkdir(), db.mkdir()
    for d in (da, db):
        for kind in ("dft", "cA"):
            assert run("spectrum", ctx["small_man"], "--transform", kind,
                       "--out", d / f"{kind}.cgsp") == 0
    out = str(tmp_path / "cmp.json")
    assert run("compare", "--a", da, "--b", db, "--out", out) == 0
    doc = read_artifact(out)
    assert set(doc["cos"]) == {"dft", "cA"}


def test_compare_rejects_duplicate_kinds(ctx, tmp_path):
    d = tmp_path / "dup"
    d.mkdir()
    for name in ("one.cgsp", "two.cgsp"):
        assert run("spectrum", ctx["small_man"], "--transform", "dct",
                   "--out", d / name) == 0
    assert run("compare", "--a", d, "--b", d,
               "--out", tmp_path / "x.json") == 65


def test_calibrate_then_audits(ctx, capfd):
    base = ctx["base"]
    calib = str(base / "calib.json")
    assert run("calibrate", ctx["cal_man"], "--key", ctx["key"],
               "--out", calib) == 0
    err = capfd.readouterr().err
    assert "1000" in err, "small calibration should warn on stderr"
    doc = read_artifact(calib)
    assert doc["tau"] == doc["gamma"] + doc["margin"]
    assert doc["n_ref"] == 100

    # clean images against their own threshold: nothing flags
    rep_out = str(base / "audit-clean.json")
    assert run("audit", ctx["small_man"], "--key", ctx["key"],
               "--calib", calib, "--out", rep_out) == 0
    rep = read_artifact(rep_out)
    assert rep["decision"] == "not_infringing"

    # fully watermarked mix trips the verdict and the exit code
    mix_man = str(base / "mix" / "manifest.json")
    assert run("mix", "--clean", ctx["small_man"], "--key", ctx["key"],
               "--r", 1.0, "--n", 20, "--outdir", base / "mix",
               "--manifest-out", mix_man) == 0
    rep_out2 = str(base / "audit-mix.json")
    assert run("audit", mix_man, "--key", ctx["key"],
               "--calib", calib, "--out", rep_out2) == 10
    rep2 = read_artifact(rep_out2)
    assert rep2["decision"] == "infringing"
    assert rep2["p_u"] == 1.0
    assert rep2["statistic"] > 0


def test_audit_rejects_wrong_key(ctx):
    base = ctx["base"]
    calib = str(base / "calib.json")
    other = str(base / "other-key.json")
    save_key(WatermarkKey(watermark=watermark_pattern(9), seed=77), other)
    assert run("audit", ctx["small_man"], "--key", other,
               "--calib", calib, "--out", base / "bad.json") == 65


def test_diffuse_t0_returns_input_content(ctx):
    base = ctx["base"]
    src_man = load_manifest(ctx["small_man"])
    src = src_man.resolve(src_man.entries[0])
    out = str(base / "t0.png")
    assert run("diffuse", "--image", src, "--t", 0, "--out", out) == 0
    assert np.array_equal(load_image(out).data, load_image(src).data)


def test_exit_code_missing_input(ctx, tmp_path):
    assert run("extract", tmp_path / "absent.json",
               "--key", ctx["key"], "--out", tmp_path / "o.json") == 66


def test_exit_code_bad_channel_spec(ctx, tmp_path, capfd):
    code = run("channel", ctx["small_man"], "--spec", "warp:9",
               "--outdir", tmp_path / "w")
    assert code == 64
    assert "warp" in capfd.readouterr().err


def test_exit_code_corrupt_key(ctx, tmp_path):
    bad = tmp_path / "bad-key.json"
    bad.write_text("{not json")
    assert run("extract", ctx["small_man"], "--key", bad,
               "--out", tmp_path / "o.json") == 65


def test_exit_code_usage_error():
    assert run("no-such-command") == 64


def test_exit_code_bad_flag_value(ctx, tmp_path):
    assert run("mix", "--clean", ctx["small_man"], "--key", ctx["key"],
               "--r", 1.7, "--n", 5, "--outdir", tmp_path / "m") == 64
