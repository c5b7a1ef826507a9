import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qspc.images import (DMD_PITCH_UM, BeamImage, as_mask, checkerboard, cross, gaussian_beam,
                         happy_face, letter_e, line_mask, threshold_mask)


def test_beam_image_fields():
    img = BeamImage(np.ones((3, 5)), 2.0, total_power=1.2)
    assert (img.height, img.width, img.shape, img.size) == (3, 5, (3, 5), 15)
    assert img.flux() == 15.0
    assert img.flat().shape == (15,)
    assert img.scaled(2.0).flux() == 30.0


@pytest.mark.parametrize("bad", [np.ones(4), np.ones((0, 3)), -np.ones((2, 2)), np.full((2, 2), np.nan)])
def test_beam_image_rejects(bad):
    with pytest.raises(ValueError):
        BeamImage(bad)


def test_beam_image_rejects_pitch():
    with pytest.raises(ValueError):
        BeamImage(np.ones((2, 2)), 0.0)


def test_as_mask_validation():
    assert as_mask([[0, 1], [1, 0]]).dtype == float
    with pytest.raises(ValueError):
        as_mask([[0, 2]])
    with pytest.raises(ValueError):
        as_mask(np.ones((2, 2)), (3, 3))


def test_gaussian_waist():
    g = gaussian_beam((257, 257), waist_um=450.0, pitch=DMD_PITCH_UM)
    c = 128
    r = 450.0 / DMD_PITCH_UM
    prof = g.intensity[c, :]
    x = np.arange(257) - c
    assert np.isclose(np.interp(r, x, prof) / prof[c], np.exp(-2), rtol=1e-3)
    assert np.isclose(g.flux(), 1.0)


def test_checkerboard_period():
    cb = checkerboard((4, 4))
    assert cb.sum() == 8
    assert np.all(cb[:, 1:] != cb[:, :-1])
    assert np.all(cb[1:, :] != cb[:-1, :])


def test_letter_e_shape():
    e = letter_e()
    assert e.shape == (32, 32)
    assert set(np.unique(e)) == {0.0, 1.0}
    # three bars on the right side, one spine on the left
    assert e[:, 8].sum() == 20
    assert e[:, 20].sum() == 12
    assert e[:, 22].sum() == 8


def test_happy_face_has_features():
    f = happy_face((64, 64))
    assert 0 < f.mean() < 1
    assert f[32, 32] == 1.0


def test_cross_rotation_symmetry():
    a = cross((65, 65), 0.0)
    b = cross((65, 65), 90.0)
    assert np.array_equal(a, b)
    assert np.array_equal(a, a.T)
    assert cross((65, 65), 45.0).sum() > 0


def test_line_mask_bounds():
    m = line_mask((10, 10), 0.0, 2.0)
    assert m.sum() == 20
    with pytest.raises(ValueError):
        line_mask((10, 10), 5.0, 2.0)
    with pytest.raises(ValueError):
        line_mask((10, 10), 0.0, 2.0, "diagonal")


def test_threshold_mask_level():
    g = gaussian_beam((64, 64), pitch=4 * DMD_PITCH_UM)
    m = threshold_mask(g)
    assert m.max() == 1.0
    assert np.all(g.intensity[m == 1] >= np.exp(-2) * g.intensity.max())


@settings(max_examples=40, deadline=None)
@given(arrays(float, (6, 7), elements=st.floats(0, 1e3)), st.floats(0.01, 100))
def test_scaled_flux_linear(arr, k):
    img = BeamImage(arr, 1.0)
    assert np.isclose(img.scaled(k).flux(), k * img.flux(), rtol=1e-12, atol=1e-9)
