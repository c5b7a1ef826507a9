import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qspc.images import BeamImage
from qspc.pgm import PGMError, format_pgm, parse_pgm, quantize, read_pgm, write_pgm

P2_3x2 = b"P2\n3 2\n255\n0 128 255\n7 8 9\n"


def test_p2_roundtrip_bytes(tmp_path):
    src = tmp_path / "a.pgm"
    src.write_bytes(P2_3x2)
    img = read_pgm(src)
    assert img.shape == (2, 3)
    assert img.intensity.tolist() == [[0, 128, 255], [7, 8, 9]]
    out = tmp_path / "b.pgm"
    write_pgm(img, out)
    assert out.read_bytes() == P2_3x2


def test_p5_16bit_max_value(tmp_path):
    raw = np.array([[0, 65535], [1, 300]], dtype=">u2").tobytes()
    data = b"P5\n2 2\n65535\n" + raw
    src = tmp_path / "a.pgm"
    src.write_bytes(data)
    img = read_pgm(src)
    assert img.intensity.tolist() == [[0, 65535], [1, 300]]
    assert img.intensity.max() == 65535
    out = tmp_path / "b.pgm"
    write_pgm(img, out)
    assert out.read_bytes() == data


def test_p5_8bit_roundtrip():
    data = b"P5\n4 1\n200\n" + bytes([0, 50, 100, 200])
    img = parse_pgm(data)
    assert img.meta == {"format": "P5", "maxval": 200}
    assert format_pgm(img) == data


def test_comments_and_whitespace():
    img = parse_pgm(b"P2 # plain\n# size\n3   2\n9\n1 2 3\n\t4 5 6")
    assert img.intensity.tolist() == [[1, 2, 3], [4, 5, 6]]


def test_pitch_passed_through():
    assert parse_pgm(P2_3x2, pitch=20.0).pitch == 20.0


def test_truncated_payload():
    data = b"P5\n4 4\n255\n" + bytes(10)
    with pytest.raises(PGMError, match="expected 16 bytes, got 10") as err:
        parse_pgm(data)
    assert err.value.offset == len(b"P5\n4 4\n255\n")


def test_truncated_16bit_payload():
    with pytest.raises(PGMError, match="expected 8 bytes, got 7"):
        parse_pgm(b"P5\n2 2\n1000\n" + bytes(7))


@pytest.mark.parametrize("data,msg,offset", [
    (b"P6\n1 1\n255\n\x00", "bad magic", 0),
    (b"P2\nx 1\n255\n0", "expected width", 3),
    (b"P2\n1\n", "expected height, found end of file", 5),
    (b"P2\n1 1\n70000\n0", "outside 1..65535", 7),
    (b"P2\n0 1\n255\n", "must be positive", 3),
    (b"P2\n2 1\n255\n1", "expected pixel 1 of 2", 12),
    (b"P2\n1 1\n255\n1 2", "unexpected data after raster", 13),
    (b"P5\n1 1\n255\n\x00\x00", "unexpected bytes after raster", 12),
])
def test_parse_errors_with_offset(data, msg, offset):
    with pytest.raises(PGMError, match=msg) as err:
        parse_pgm(data, path="img.pgm")
    assert err.value.offset == offset
    assert str(err.value).startswith("img.pgm: ")
    assert str(err.value).endswith(f"at byte {offset}")


def test_pixel_exceeds_maxval():
    with pytest.raises(PGMError, match="exceeds maxval"):
        parse_pgm(b"P2\n1 1\n10\n11\n")


def test_read_missing_file(tmp_path):
    with pytest.raises(OSError):
        read_pgm(tmp_path / "nope.pgm")


def test_quantize_keeps_integral():
    v = np.array([[0.0, 3.0], [255.0, 17.0]])
    assert quantize(v, 255).tolist() == [[0, 3], [255, 17]]


def test_quantize_rescales_peak():
    v = np.array([0.0, 0.25, 0.5])
    assert quantize(v, 100).tolist() == [0, 50, 100]
    assert quantize(np.array([-1.0, 2.5]), 10).tolist() == [0, 10]
    assert quantize(np.zeros(3), 9).tolist() == [0, 0, 0]


def test_write_defaults_to_p5_16bit():
    data = format_pgm(BeamImage(np.array([[0.0, 0.5], [1.0, 0.25]])))
    assert data.startswith(b"P5\n2 2\n65535\n")
    assert parse_pgm(data).intensity.tolist() == [[0, 32768], [65535, 16384]]


def test_format_rejects():
    img = BeamImage(np.ones((2, 2)))
    with pytest.raises(ValueError):
        format_pgm(img, "P6")
    with pytest.raises(ValueError):
        format_pgm(img, "P2", 70000)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["P2", "P5"]), st.sampled_from([1, 255, 256, 4095, 65535]),
       st.integers(1, 7), st.integers(1, 7), st.integers(0, 10 ** 6))
def test_roundtrip_property(fmt, maxval, h, w, seed):
    levels = np.random.default_rng(seed).integers(0, maxval + 1, size=(h, w))
    data = format_pgm(BeamImage(levels.astype(float)), fmt, maxval)
    img = parse_pgm(data)
    assert np.array_equal(img.intensity, levels)
    assert format_pgm(img) == data
