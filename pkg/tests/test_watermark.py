"""Embedding, blind extraction, keys and the enhancement filter."""

import json

import numpy as np
import pytest

from coprguard.errors import (DimensionError, DomainError, SingularFitError,
                              SizeError)
from coprguard.image import flip_horizontal, from_array, rotate90
from coprguard.synth import natural_image, watermark_pattern
from coprguard.watermark import (POSES, WatermarkKey, carrier, embed, extract,
                                 fit_enhancement, key_fingerprint,
                                 load_enhancement, load_key, save_enhancement,
                                 save_key)


def gray_host(h=128, w=128, value=0.5):
    return from_array(np.full((h, w, 3), value))


@pytest.fixture(scope="module")
def key():
    return WatermarkKey(watermark=watermark_pattern(7), seed=42)


def test_carrier_is_deterministic_and_binary():
    a = carrier(5, "cH", (0, 0), (64, 64))
    b = carrier(5, "cH", (0, 0), (64, 64))
    assert np.array_equal(a, b)
    assert set(np.unique(a)) == {-1.0, 1.0}


def test_carrier_balance_across_seeds():
    # sd of the mean of 1024 fair signs is 1/32, so allow ~4.8 sigma per
    # carrier and pin the pooled average much tighter
    means = []
    for seed in range(50):
        for band in ("cH", "cV", "cD"):
            c = carrier(seed, band, (0, 0), (32, 32))
            assert abs(c.mean()) <= 0.15, (seed, band)
            means.append(c.mean())
    assert abs(np.mean(means)) <= 0.01


def test_carriers_differ_by_seed_band_and_tile():
    base = carrier(1, "cH", (0, 0), (32, 32))
    assert not np.array_equal(base, carrier(2, "cH", (0, 0), (32, 32)))
    assert not np.array_equal(base, carrier(1, "cV", (0, 0), (32, 32)))
    assert not np.array_equal(base, carrier(1, "cH", (0, 1), (32, 32)))


def test_carrier_returns_a_private_copy():
    a = carrier(9, "cD", (0, 0), (16, 16))
    a[0, 0] = 0.0
    assert carrier(9, "cD", (0, 0), (16, 16))[0, 0] in (-1.0, 1.0)


def test_carrier_rejects_unknown_band():
    with pytest.raises(DomainError):
        carrier(1, "cA", (0, 0), (8, 8))


def test_key_normalizes_pattern(key):
    assert abs(key.pattern.mean()) < 1e-12
    assert abs(key.pattern.std() - 1.0) < 1e-12


def test_key_validation():
    wm = watermark_pattern(7)
    with pytest.raises(DomainError):
        WatermarkKey(watermark=wm, seed=-1)
    with pytest.raises(DomainError):
        WatermarkKey(watermark=wm, seed=1, strength=0.0)
    with pytest.raises(DomainError):
        WatermarkKey(watermark=wm, seed=1, strength=0.5)
    with pytest.raises(DomainError):
        WatermarkKey(watermark=wm, seed=1, subbands=("cA",))
    with pytest.raises(DomainError):
        WatermarkKey(watermark=from_array(np.full((64, 64), 0.5)), seed=1)


def test_key_file_roundtrip(tmp_path, key):
    p = str(tmp_path / "k.json")
    save_key(key, p)
    doc = json.loads((tmp_path / "k.json").read_text())
    assert doc["version"] == 1
    assert doc["seed"] == "42"
    assert doc["subbands"] == ["cH", "cV", "cD"]
    assert (tmp_path / doc["watermark_path"]).exists()
    back = load_key(p)
    assert key_fingerprint(back) == key_fingerprint(key)
    assert back.strength == key.strength


def test_fingerprint_sensitivity(key):
    other = WatermarkKey(watermark=key.watermark, seed=43)
    assert key_fingerprint(other) != key_fingerprint(key)
    stronger = WatermarkKey(watermark=key.watermark, seed=42, strength=0.01)
    assert key_fingerprint(stronger) != key_fingerprint(key)


def test_embed_is_deterministic(key):
    host = natural_image(77)
    assert np.array_equal(embed(host, key).data, embed(host, key).data)


def test_embed_rejects_bad_geometry(key):
    with pytest.raises(DimensionError):
        embed(from_array(np.full((127, 128, 3), 0.5)), key)
    with pytest.raises(SizeError):
        embed(gray_host(64, 64), key)


def test_embed_rejects_bad_strength_override(key):
    with pytest.raises(DomainError):
        embed(gray_host(), key, strength=0.9)


def test_embed_is_linear_in_strength_before_clamp(key):
    host = gray_host()
    d1 = embed(host, key, strength=0.003).data - host.data
    d2 = embed(host, key, strength=0.005).data - host.data
    d12 = embed(host, key, strength=0.008).data - host.data
    assert np.abs(d1 + d2 - d12).max() < 1e-12


def test_per_pixel_change_bounded(key):
    host = natural_image(78)
    delta = np.abs(embed(host, key, strength=0.02).data - host.data)
    assert delta.max() <= 0.08


def test_roundtrip_on_quiet_host(key):
    got = extract(embed(gray_host(), key), key)
    assert got.cos >= 0.999
    assert got.pose == "identity" and got.undo_ratio == 1.0
    # the estimate itself points at the pattern
    assert got.estimate.shape == key.pattern.shape


def test_extract_without_mark_is_near_zero(key):
    assert abs(extract(gray_host(value=0.42), key).cos) < 0.07


def test_key_separation_over_100_pairs():
    host = gray_host()
    wm = watermark_pattern(7)
    worst = 0.0
    for i in range(100):
        a = WatermarkKey(watermark=wm, seed=1000 + i)
        b = WatermarkKey(watermark=wm, seed=5000 + i)
        got = extract(embed(host, a), b)
        worst = max(worst, abs(got.cos))
    assert worst < 0.0655


def test_more_tiles_do_not_hurt(key):
    small = [extract(embed(natural_image(200 + i, 128), key), key).cos
             for i in range(20)]
    big = [extract(embed(natural_image(200 + i, 256), key), key).cos
           for i in range(20)]
    assert np.mean(big) >= np.mean(small) - 1e-3


def test_orientation_search_undoes_dihedral_poses(key):
    marked = embed(natural_image(79), key)
    base = extract(marked, key).cos
    for view in (rotate90(marked, 1), rotate90(marked, 2), flip_horizontal(marked)):
        got = extract(view, key, orientation_search=True)
        assert abs(got.cos - base) <= 0.02
        assert got.pose in POSES
        assert got.undo_ratio == 1.0


def test_orientation_search_not_worse_on_upright_input(key):
    marked = embed(natural_image(80), key)
    plain = extract(marked, key).cos
    searched = extract(marked, key, orientation_search=True)
    assert searched.cos >= plain - 1e-12


def test_fit_enhancement_identity_pairs(key):
    pairs = [(natural_image(300 + i), natural_image(300 + i)) for i in range(8)]
    enh = fit_enhancement(pairs, key)
    for band in key.subbands:
        assert abs(enh.gains[band] - 1.0) < 1e-9
        assert abs(enh.biases[band]) < 1e-9
    assert enh.residual < 1e-18
    assert enh.key_fingerprint == key_fingerprint(key)


def test_fit_enhancement_recovers_known_gain(key):
    pairs = []
    for i in range(8):
        pristine = natural_image(400 + i)
        degraded = from_array(pristine.data * 0.5)
        pairs.append((degraded, pristine))
    enh = fit_enhancement(pairs, key)
    for band in key.subbands:
        assert abs(enh.gains[band] - 2.0) < 1e-6
        assert abs(enh.biases[band]) < 1e-9


def test_fit_enhancement_needs_eight_pairs(key):
    img = natural_image(500)
    with pytest.raises(DomainError):
        fit_enhancement([(img, img)] * 7, key)


def test_fit_enhancement_singular_on_flat_input(key):
    pairs = [(gray_host(), gray_host())] * 8
    with pytest.raises(SingularFitError):
        fit_enhancement(pairs, key)


def test_enhancement_file_roundtrip(tmp_path, key):
    pairs = [(natural_image(600 + i), natural_image(600 + i)) for i in range(8)]
    enh = fit_enhancement(pairs, key, fitted_on="identity-pairs")
    p = str(tmp_path / "enh.json")
    save_enhancement(enh, p)
    back = load_enhancement(p)
    assert back.gains == enh.gains
    assert back.biases == enh.biases
    assert back.fitted_on == "identity-pairs"
    assert back.key_fingerprint == enh.key_fingerprint


def test_uniform_gain_leaves_cos_unchanged(key):
    pairs = []
    for i in range(8):
        pristine = natural_image(700 + i)
        degraded = from_array(pristine.data * 0.5)
        pairs.append((degraded, pristine))
    enh = fit_enhancement(pairs, key)
    marked = embed(natural_image(710), key)
    plain = extract(marked, key).cos
    boosted = extract(marked, key, enh=enh).cos
    # equal gains on every band rescale the estimate without rotating it
    assert abs(boosted - plain) < 1e-9
