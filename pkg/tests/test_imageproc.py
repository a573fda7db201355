import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groupaffect.imageproc import (
    AugmentParams,
    apply_augment,
    apply_geometric,
    resize,
    sample_augment,
)

from oracles import bilinear_scalar


def test_resize_same_size_identity():
    t = np.random.default_rng(0).uniform(size=(5, 7, 3))
    np.testing.assert_array_equal(resize(t, 5, 7), t)


@pytest.mark.parametrize("out", [(1, 1), (3, 9), (17, 4)])
def test_resize_constant(out):
    t = np.full((2, 2, 3), 0.37)
    np.testing.assert_allclose(resize(t, *out), 0.37, atol=1e-15)


@pytest.mark.parametrize("out", [(8, 8), (3, 5), (2, 2), (6, 3)])
def test_resize_ramp_matches_bilinear_oracle(out):
    ramp = np.arange(16, dtype=float).reshape(4, 4)
    t = np.stack([ramp, ramp.T, ramp * 0.5], axis=-1)
    assert np.max(np.abs(resize(t, *out) - bilinear_scalar(t, *out))) <= 1e-6


def test_resize_rejects_zero_target():
    with pytest.raises(ValueError):
        resize(np.ones((2, 2, 3)), 0, 3)


def test_sample_augment_reproducible():
    a = sample_augment(np.random.default_rng(42))
    b = sample_augment(np.random.default_rng(42))
    assert a == b


def test_sample_augment_ranges_and_flip_rate():
    rng = np.random.default_rng(0)
    ps = [sample_augment(rng) for _ in range(10_000)]
    assert all(-40 <= p.rotation_deg <= 40 for p in ps)
    assert all(-0.2 <= p.shift_x_frac <= 0.2 and -0.2 <= p.shift_y_frac <= 0.2 for p in ps)
    assert all(-0.2 <= p.shear <= 0.2 and 0.8 <= p.zoom <= 1.2 for p in ps)
    assert all(p.rescale == 0.01 for p in ps)
    assert 0.45 <= np.mean([p.hflip for p in ps]) <= 0.55


def test_identity_params_only_rescale():
    t = np.random.default_rng(1).uniform(0, 255, size=(6, 9, 3))
    np.testing.assert_array_equal(apply_augment(t, AugmentParams.identity()), t * 0.01)


def test_hflip_involution():
    t = np.random.default_rng(2).uniform(size=(5, 6, 3))
    flip = AugmentParams(hflip=True)
    np.testing.assert_array_equal(apply_geometric(apply_geometric(t, flip), flip), t)


def test_rotate_90_single_pixel():
    t = np.zeros((5, 5, 1))
    t[0, 2, 0] = 1.0  # top centre
    out = apply_geometric(t, AugmentParams(rotation_deg=90))
    # counter-clockwise quarter turn about (2, 2): top centre -> left centre
    assert out[2, 0, 0] == 1.0
    assert out.sum() == 1.0


def test_rotate_90_off_axis_pixel():
    t = np.zeros((7, 7, 1))
    t[1, 4, 0] = 1.0  # offset (+1, -2) from centre (3, 3)
    out = apply_geometric(t, AugmentParams(rotation_deg=90))
    # (dx, dy) = (1, -2) -> (dy, -dx) = (-2, -1) -> column 1, row 2
    assert out[2, 1, 0] == 1.0 and out.sum() == 1.0


def test_shift_uses_nearest_fill():
    t = np.arange(10, dtype=float).reshape(1, 10, 1).repeat(3, axis=0)
    out = apply_geometric(t, AugmentParams(shift_x_frac=0.2))
    # content moves right by 2 px; the vacated columns repeat the edge value
    np.testing.assert_array_equal(out[0, :, 0], [0, 0, 0, 1, 2, 3, 4, 5, 6, 7])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(2, 12))
def test_augment_shape_zero_and_rescale(seed, h, w):
    rng = np.random.default_rng(seed)
    p = sample_augment(rng)
    t = rng.uniform(size=(h, w, 3))
    out = apply_augment(t, p)
    assert out.shape == t.shape
    np.testing.assert_array_equal(out, apply_geometric(t, p) * 0.01)
    assert not apply_augment(np.zeros((h, w, 3)), p).any()
