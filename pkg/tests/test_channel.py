"""Degradation channels, the spec-string grammar, diffusion and mixed-set builds."""

import os

import numpy as np
import pytest

from coprguard.channel import (AutoencoderSurrogate, Compose, CropScale, Flip,
                               GaussianBlur, GaussianNoise, Identity, Jpeg,
                               MixPlan, NoiseSchedule, Rotate, apply_channel,
                               build_mixed_set, format_channel,
                               forward_diffuse, forward_diffuse_model,
                               linear_schedule, parse_channel, parse_schedule)
from coprguard.errors import DomainError, SpecError
from coprguard.image import from_array, load_image, rotate90
from coprguard.manifest import load_manifest
from coprguard.spectral import dwt_haar
from coprguard.synth import natural_image
from coprguard.watermark import WatermarkKey, extract
from coprguard.synth import watermark_pattern


def noisy_img(seed, h=64, w=64):
    rng = np.random.default_rng(seed)
    return from_array(rng.uniform(0.2, 0.8, (h, w, 3)))


ROUNDTRIP_SPECS = [
    "identity", "rot:90", "rot:180", "rot:270", "flip:h", "flip:v",
    "jpeg:70", "noise:0.05", "blur:7:0.5", "crop:0.8", "ae:8", "ae:4:0.01",
    "then(rot:90,jpeg:80)", "then(flip:h,then(noise:0.01,blur:3:1),crop:0.9)",
]


@pytest.mark.parametrize("text", ROUNDTRIP_SPECS)
def test_grammar_roundtrip(text):
    spec = parse_channel(text)
    assert format_channel(spec) == text
    assert parse_channel(format_channel(spec)) == spec


def test_grammar_tolerates_whitespace():
    assert parse_channel(" then( rot:90 , flip:h ) ") == Compose(
        stages=(Rotate(90), Flip("h")))


BAD_SPECS = [
    "", "warp:3", "rot:45", "rot:ninety", "flip:x", "jpeg:0", "jpeg:101",
    "noise:-0.1", "blur:4:0.5", "blur:7", "crop:0", "crop:1.2", "ae:1",
    "identity:5", "then(rot:90", "then(rot:90,flip:q)",
]


@pytest.mark.parametrize("text", BAD_SPECS)
def test_grammar_rejects_bad_specs(text):
    with pytest.raises(SpecError) as err:
        parse_channel(text)
    # empty input has no token to point at; everything else must name one
    assert err.value.token or text == ""


def test_identity_is_exact():
    img = noisy_img(0)
    assert np.array_equal(apply_channel(img, Identity()).data, img.data)


def test_rotate_matches_image_op():
    img = noisy_img(1)
    assert np.array_equal(apply_channel(img, Rotate(90)).data, rotate90(img, 1).data)
    assert np.array_equal(apply_channel(img, Rotate(180)).data, rotate90(img, 2).data)
    back = apply_channel(apply_channel(img, Rotate(90)), Rotate(270))
    assert np.array_equal(back.data, img.data)


def test_flip_matches_numpy():
    img = noisy_img(2)
    assert np.array_equal(apply_channel(img, Flip("h")).data, img.data[:, ::-1, :])
    assert np.array_equal(apply_channel(img, Flip("v")).data, img.data[::-1, :, :])


def test_jpeg_quality_orders_distortion():
    img = noisy_img(3, 64, 64)
    mse = {}
    for q in (30, 90):
        out = apply_channel(img, Jpeg(q))
        assert out.shape == img.shape
        mse[q] = float(((out.data - img.data) ** 2).mean())
    assert mse[90] < mse[30]


def test_jpeg_is_deterministic():
    img = noisy_img(4)
    a = apply_channel(img, Jpeg(70))
    b = apply_channel(img, Jpeg(70))
    assert np.array_equal(a.data, b.data)


def test_noise_requires_a_seed():
    img = noisy_img(5)
    with pytest.raises(DomainError):
        apply_channel(img, GaussianNoise(0.05))


def test_noise_moments_and_determinism():
    img = from_array(np.full((128, 128, 3), 0.5))
    a = apply_channel(img, GaussianNoise(0.05), seed=11)
    b = apply_channel(img, GaussianNoise(0.05), seed=11)
    c = apply_channel(img, GaussianNoise(0.05, rng_seed=12))
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    resid = a.data - img.data
    assert abs(resid.mean()) < 0.005
    assert abs(resid.std() - 0.05) < 0.005


def test_blur_keeps_constants_and_smooths_noise():
    flat = from_array(np.full((32, 32, 1), 0.37))
    out = apply_channel(flat, GaussianBlur(7, 1.5))
    assert np.abs(out.data - 0.37).max() < 1e-12
    img = noisy_img(6)
    blurred = apply_channel(img, GaussianBlur(7, 1.5))
    assert blurred.data.std() < img.data.std()


def test_blur_kernel_one_is_identity():
    img = noisy_img(7)
    assert np.allclose(apply_channel(img, GaussianBlur(1, 0.5)).data, img.data,
                       atol=1e-12)


def test_crop_scale_preserves_shape_and_recenters():
    img = noisy_img(8, 40, 40)
    out = apply_channel(img, CropScale(0.5))
    assert out.shape == img.shape
    assert np.array_equal(apply_channel(img, CropScale(1.0)).data, img.data)


def test_autoencoder_surrogate_kills_detail_bands():
    marked = natural_image(900)
    spec = AutoencoderSurrogate(factor=8)
    out = apply_channel(marked, spec)
    assert out.shape == marked.shape
    hf_before = dwt_haar(marked.data[:, :, 0])["cD"].std()
    hf_after = dwt_haar(out.data[:, :, 0])["cD"].std()
    assert hf_after < hf_before or hf_after < 1e-6


def test_compose_applies_stages_in_order():
    img = noisy_img(9)
    spec = Compose(stages=(Rotate(90), Flip("h")))
    want = apply_channel(apply_channel(img, Rotate(90)), Flip("h"))
    assert np.array_equal(apply_channel(img, spec, seed=1).data, want.data)


def test_compose_with_stochastic_stage_is_seed_deterministic():
    img = noisy_img(10)
    spec = parse_channel("then(noise:0.03,blur:3:0.8)")
    a = apply_channel(img, spec, seed=21)
    b = apply_channel(img, spec, seed=21)
    c = apply_channel(img, spec, seed=22)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_schedule_basics():
    sched = linear_schedule()
    assert sched.alpha_bar(0) == 1.0
    bars = [sched.alpha_bar(t) for t in (0, 100, 500, 1000)]
    assert all(b > a for a, b in zip(bars[1:], bars))
    assert bars[-1] < 1e-4
    with pytest.raises(DomainError):
        sched.alpha_bar(1001)
    with pytest.raises(DomainError):
        sched.alpha_bar(-1)


def test_schedule_validation():
    with pytest.raises(DomainError):
        NoiseSchedule(betas=(0.0, 0.1))
    with pytest.raises(DomainError):
        NoiseSchedule(betas=())


def test_parse_schedule():
    sched = parse_schedule("linear:0.0001:0.02:1000")
    assert len(sched.betas) == 1000
    assert abs(sched.betas[0] - 1e-4) < 1e-12
    assert abs(sched.betas[-1] - 0.02) < 1e-12
    with pytest.raises(SpecError):
        parse_schedule("cosine:0:1:10")
    with pytest.raises(SpecError):
        parse_schedule("linear:0.1:0.2")


def test_forward_diffuse_model_moments():
    sched = linear_schedule()
    rng = np.random.default_rng(0)
    x0 = np.full((400, 400), -0.4)
    t = 500
    xt = forward_diffuse_model(x0, t, sched, rng)
    ab = sched.alpha_bar(t)
    assert abs(xt.mean() - np.sqrt(ab) * -0.4) < 0.01
    assert abs(xt.var() - (1.0 - ab)) < 0.02


def test_forward_diffuse_t0_is_identity():
    img = natural_image(901)
    out = forward_diffuse(img, 0, linear_schedule(), seed=5)
    assert np.array_equal(out.data, img.data)


def test_forward_diffuse_seeded_and_noise_grows():
    img = natural_image(902)
    sched = linear_schedule()
    a = forward_diffuse(img, 300, sched, seed=9)
    b = forward_diffuse(img, 300, sched, seed=9)
    assert np.array_equal(a.data, b.data)
    d300 = float(((a.data - img.data) ** 2).mean())
    d900 = float(((forward_diffuse(img, 900, sched, seed=9).data - img.data) ** 2).mean())
    assert d900 > d300 > 0.0


def test_build_mixed_set_labels_match_content(tmp_path, tiny_corpus):
    key = WatermarkKey(watermark=watermark_pattern(7), seed=42)
    out = str(tmp_path / "mix")
    plan = MixPlan(ratio=0.5, count=30, channel=Identity(), seed=3)
    man = build_mixed_set(tiny_corpus, key, plan, out)
    assert len(man.entries) == 30
    marked = [e for e in man.entries if e.label == "watermarked"]
    assert man.extra["realized_watermarked"] == len(marked)
    assert 0 < len(marked) < 30
    for e in man.entries[:12]:
        cos = extract(load_image(man.resolve(e)), key).cos
        if e.label == "watermarked":
            assert cos > 0.5
        else:
            assert abs(cos) < 0.1


def test_build_mixed_set_extreme_ratios(tmp_path, tiny_corpus):
    key = WatermarkKey(watermark=watermark_pattern(7), seed=42)
    all_clean = build_mixed_set(tiny_corpus, key,
                                MixPlan(ratio=0.0, count=10, seed=4),
                                str(tmp_path / "r0"))
    assert all(e.label == "clean" for e in all_clean.entries)
    all_marked = build_mixed_set(tiny_corpus, key,
                                 MixPlan(ratio=1.0, count=10, seed=4),
                                 str(tmp_path / "r1"))
    assert all(e.label == "watermarked" for e in all_marked.entries)


def test_build_mixed_set_is_reproducible(tmp_path, tiny_corpus):
    key = WatermarkKey(watermark=watermark_pattern(7), seed=42)
    plan = MixPlan(ratio=0.4, count=12, channel=Identity(), seed=5)
    a = build_mixed_set(tiny_corpus, key, plan, str(tmp_path / "a"))
    b = build_mixed_set(tiny_corpus, key, plan, str(tmp_path / "b"))
    assert [e.label for e in a.entries] == [e.label for e in b.entries]
    for ea, eb in zip(a.entries, b.entries):
        pa = (tmp_path / "a" / ea.path).read_bytes()
        pb = (tmp_path / "b" / eb.path).read_bytes()
        assert pa == pb


def test_build_mixed_set_writes_loadable_manifest(tmp_path, tiny_corpus):
    key = WatermarkKey(watermark=watermark_pattern(7), seed=42)
    out = str(tmp_path / "mix2")
    man = build_mixed_set(tiny_corpus, key, MixPlan(ratio=0.5, count=8, seed=6), out)
    from coprguard.manifest import save_manifest
    mpath = os.path.join(out, "manifest.json")
    save_manifest(man, mpath)
    back = load_manifest(mpath)
    assert len(back.entries) == 8
    assert back.extra["plan"]["ratio"] == 0.5
