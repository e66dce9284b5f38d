"""Smoke tests for the python surface: each core operation is exercised once
with a small sharp check; the heavy property sweeps live in the C++ suite."""

import numpy as np
import pytest

import swin_core as sc


def test_window_roundtrip():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((8, 12, 5))
    tiles = sc.window_partition(x, 4)
    assert tiles.shape == (6, 16, 5)
    back = sc.window_reverse(tiles, 4, 8, 12)
    np.testing.assert_array_equal(back, x)


def test_window_counts():
    assert sc.window_counts(8, 8, 4) == (4, 9)


def test_shift_mask_geometry():
    mask = sc.shift_mask(8, 8, 4, 2)
    assert mask["grid"] == (2, 2)
    assert mask["allow"].shape == (4, 16, 16)
    # Top-left window is untouched by the shift: fully allowed.
    assert mask["allow"][0].all()
    # The bottom-right window mixes four regions; every row keeps itself.
    assert not mask["allow"][3].all()
    assert np.diagonal(mask["allow"][3]).all()
    ids = mask["region_ids"]
    assert ids.shape == (8, 8)
    assert ids[0, 0] == 0 and ids[7, 7] == 8


def test_relative_position_index():
    idx = sc.relative_position_index(3)
    center = (3 - 1) * 5 + (3 - 1)
    assert (np.diagonal(idx) == center).all()
    assert (idx + idx.T == 2 * center).all()


def test_strategy_equivalence():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((9, 10, 8))  # pads to 12x12 under M=4
    params = sc.random_attention_params(dim=8, heads=2, window=4, seed=5)
    a = sc.shifted_attention_cyclic(x, params, shift=2)
    b = sc.shifted_attention_padded(x, params, shift=2)
    c = sc.shifted_attention_brute(x, params, shift=2)
    assert a.shape == x.shape
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)
    np.testing.assert_allclose(a, c, rtol=0, atol=1e-10)


def test_bias_interpolation():
    table = np.full((2, 9), 0.625)
    grown = sc.interpolate_bias_table(table, 2, 5)
    assert grown.shape == (2, 81)
    np.testing.assert_allclose(grown, 0.625, rtol=0, atol=1e-12)
    same = sc.interpolate_bias_table(table, 2, 2)
    np.testing.assert_array_equal(same, table)


def test_params_audit():
    report = sc.params_report("T")
    assert report["total"] == 28288354
    assert abs(report["total"] - 29e6) / 29e6 < 0.03


def test_flops_audit():
    report = sc.flops_report("T")
    total = report["closed_form_macs"]["total"]
    assert total == 4490566656
    assert report["closed_form_flops_2x"] == 2 * total


def test_describe():
    text = sc.describe("T")
    assert "56x56" in text and "96" in text


def test_model_forward_deterministic():
    model = sc.toy_model(seed=3)
    rng = np.random.default_rng(4)
    image = rng.standard_normal((32, 32, 3))
    a = model.forward(image)
    b = model.forward(image)
    assert a.shape == (1, 2)  # [batch of one, classes]
    np.testing.assert_array_equal(a, b)


def test_checkpoint_roundtrip(tmp_path):
    path = str(tmp_path / "toy.ckpt")
    model = sc.toy_model(seed=5)
    rng = np.random.default_rng(6)
    image = rng.standard_normal((32, 32, 3))
    before = model.forward(image)
    model.save(path)

    other = sc.toy_model(seed=99)
    assert not np.array_equal(other.forward(image), before)
    other.load(path)
    np.testing.assert_array_equal(other.forward(image), before)


def test_shape_errors_surface_as_exceptions():
    with pytest.raises(Exception, match="window_partition"):
        sc.window_partition(np.zeros((7, 7, 3)), 4)
    with pytest.raises(Exception, match="pos"):
        sc.random_attention_params(8, 2, 4, pos="bogus")
