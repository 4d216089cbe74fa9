import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from driftcurate.core_io import Image
from driftcurate.distort import degrade, max_levels, pyr_down, pyr_up
from driftcurate.errors import DegenerateDims, TooManyLevels


def test_pyr_down_examples():
    assert pyr_down(np.full((4, 6), 7.0)).tolist() == np.full((2, 3), 7.0).tolist()
    assert pyr_down(np.array([[0.0, 2], [4, 6]])).tolist() == [[3.0]]
    a = np.array([[0.0, 2, 100], [4, 6, 100], [100, 100, 100]])
    assert pyr_down(a).tolist() == [[3.0]]


def test_pyr_down_too_small():
    with pytest.raises(DegenerateDims):
        pyr_down(np.zeros((1, 5)))


def test_pyr_up_examples():
    assert pyr_up(np.array([[5.0]]), 2, 2).tolist() == [[5.0, 5.0], [5.0, 5.0]]
    assert pyr_up(np.array([[1.0, 9.0]]), 2, 4).tolist() == [[1, 1, 9, 9], [1, 1, 9, 9]]
    assert pyr_up(np.full((2, 2), 3.0), 5, 5).tolist() == np.full((5, 5), 3.0).tolist()


def test_pyr_up_clamps_odd_targets():
    out = pyr_up(np.array([[1.0, 2.0]]), 3, 5)
    assert out.tolist() == [[1, 1, 2, 2, 2]] * 3


def test_levels_zero_is_identity():
    img = Image(np.arange(16.0).reshape(4, 4))
    assert degrade(img, 0) is img


def test_one_level_on_ramp():
    ramp = np.arange(16.0).reshape(4, 4)
    out = degrade(Image(ramp), 1).channel(0)
    for i in (0, 2):
        for j in (0, 2):
            block = out[i : i + 2, j : j + 2]
            assert np.all(block == ramp[i : i + 2, j : j + 2].mean())


def test_composition_on_power_of_two(rng):
    img = Image(rng.integers(0, 256, (16, 16, 3)).astype(float))
    assert degrade(degrade(img, 1), 1) == degrade(img, 2)


def test_shape_restored_on_odd_dims(rng):
    img = Image(rng.integers(0, 256, (9, 7, 1)).astype(float))
    assert degrade(img, 1).pixels.shape == (9, 7, 1)


def test_too_many_levels():
    assert max_levels(8, 16) == 2
    assert max_levels(7, 7) == 1
    degrade(Image(np.zeros((8, 8))), 2)
    with pytest.raises(TooManyLevels):
        degrade(Image(np.zeros((8, 8))), 3)


planes = arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(2, 12)),
                elements=st.floats(0, 255))


@settings(max_examples=60, deadline=None)
@given(planes, st.integers(1, 2))
def test_range_preserved(plane, levels):
    img = Image(plane)
    levels = min(levels, max_levels(img.height, img.width))
    if levels == 0:
        return
    out = degrade(img, levels).pixels
    assert out.min() >= plane.min() - 1e-9
    assert out.max() <= plane.max() + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.randoms(use_true_random=False))
def test_mean_preserved_on_even_dims(hh, ww, r):
    plane = np.array([r.uniform(0, 255) for _ in range(4 * hh * ww)]).reshape(2 * hh, 2 * ww)
    assert pyr_down(plane).mean() == pytest.approx(plane.mean(), abs=1e-9)


@pytest.mark.parametrize("value", [0.0, 17.0, 255.0])
def test_constant_fixed_point(value):
    img = Image(np.full((16, 12, 3), value))
    for levels in range(max_levels(16, 12) + 1):
        assert degrade(img, levels) == img
