import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fvkit.augment import AugmentSpec, augment_dataset, read_manifest, write_augmented
from fvkit.errors import ParameterError
from fvkit.preprocess import (denormalize, hflip, normalize, preprocess_image, resize_image,
                              resize_mask, rotate, to_grayscale, vflip)

u8_images = arrays(np.uint8, st.tuples(st.integers(2, 12), st.integers(2, 12)))


@pytest.mark.parametrize("rgb,expected", [((255, 255, 255), 255), ((0, 0, 0), 0),
                                          ((255, 0, 0), 76)])
def test_grayscale_examples(rgb, expected):
    assert to_grayscale(np.array([[rgb]], np.uint8))[0, 0] == expected


def test_grayscale_rejects_gray():
    with pytest.raises(ParameterError):
        to_grayscale(np.zeros((2, 2), np.uint8))


def test_green_channel_option():
    assert to_grayscale(np.array([[[1, 2, 3]]], np.uint8), "green")[0, 0] == 2


def test_normalize_values():
    np.testing.assert_allclose(normalize(np.array([255, 0, 128], np.uint8)),
                               [1.0, 0.0, 128 / 255], rtol=1e-7)


@given(u8_images)
def test_normalize_denormalize_identity(img):
    np.testing.assert_array_equal(denormalize(normalize(img)), img)


def test_resize_hand_values():
    out = resize_image(np.array([[0.0, 1.0]]), 4, 1)
    np.testing.assert_allclose(out, [[0.0, 0.25, 0.75, 1.0]], atol=1e-7)


@given(u8_images, st.integers(1, 20), st.integers(1, 20))
def test_resize_constant_and_range(img, w, h):
    const = np.full(img.shape, 0.3, np.float32)
    np.testing.assert_allclose(resize_image(const, w, h), 0.3, atol=1e-6)
    out = resize_image(normalize(img), w, h)
    assert out.shape == (h, w) and out.min() >= 0 and out.max() <= 1


@given(u8_images)
def test_resize_identity(img):
    np.testing.assert_array_equal(resize_image(normalize(img), img.shape[1], img.shape[0]),
                                  normalize(img))


def test_resize_mask_checkerboard():
    board = np.array([[1, 0], [0, 1]], np.uint8)
    expected = np.kron(board, np.ones((2, 2), np.uint8))
    np.testing.assert_array_equal(resize_mask(board, 4, 4), expected)
    assert resize_mask(np.ones((3, 5), np.uint8), 7, 2).all()


def test_flips():
    row = np.array([[1, 2, 3]])
    np.testing.assert_array_equal(hflip(row), [[3, 2, 1]])


@given(u8_images)
def test_flips_are_involutions(img):
    np.testing.assert_array_equal(hflip(hflip(img)), img)
    np.testing.assert_array_equal(vflip(vflip(img)), img)


def test_rotate_zero_identity(rng):
    img, mask = rng.random((8, 8)).astype(np.float32), (rng.random((8, 8)) < 0.5).astype(np.uint8)
    r_img, r_mask = rotate(img, mask, 0.0)
    np.testing.assert_array_equal(r_img, img)
    np.testing.assert_array_equal(r_mask, mask)


@pytest.mark.parametrize("size", [6, 7])
def test_rotate_180_is_double_flip(rng, size):
    img = rng.random((size, size)).astype(np.float32)
    mask = (rng.random((size, size)) < 0.5).astype(np.uint8)
    r_img, r_mask = rotate(img, mask, 180.0)
    np.testing.assert_allclose(r_img, hflip(vflip(img)), atol=1e-6)
    np.testing.assert_array_equal(r_mask, hflip(vflip(mask)))


def test_rotate_90_constant_square():
    r_img, _ = rotate(np.full((6, 6), 0.4, np.float32), np.ones((6, 6), np.uint8), 90.0)
    np.testing.assert_allclose(r_img, 0.4, atol=1e-6)


def test_rotate_range_checked():
    with pytest.raises(ParameterError):
        rotate(np.zeros((4, 4), np.float32), np.zeros((4, 4), np.uint8), 181.0)


@given(angle=st.floats(-180, 180), seed=st.integers(0, 1000))
def test_rotated_mask_stays_binary(angle, seed):
    mask = (np.random.default_rng(seed).random((9, 9)) < 0.5).astype(np.uint8)
    _, r = rotate(np.zeros((9, 9), np.float32), mask, angle)
    assert set(np.unique(r)) <= {0, 1}


@pytest.mark.parametrize("op", ["hflip", "vflip", "rotate90", "rotate180"])
def test_registration_with_coordinate_image(op):
    """Image pixels encode their own coordinates; the mask marks one pixel.
    After the op the marked mask pixel must still sit on the image pixel that
    carries the marked coordinate."""
    h = w = 8
    coords = (np.arange(h * w).reshape(h, w) + 1).astype(np.float32) / (h * w + 1)
    y0, x0 = 2, 5
    mask = np.zeros((h, w), np.uint8)
    mask[y0, x0] = 1
    if op == "hflip":
        img2, mask2 = hflip(coords), hflip(mask)
    elif op == "vflip":
        img2, mask2 = vflip(coords), vflip(mask)
    else:
        img2, mask2 = rotate(coords, mask, 90.0 if op == "rotate90" else 180.0)
    (yy,), (xx,) = np.nonzero(mask2)
    assert img2[yy, xx] == pytest.approx(coords[y0, x0], abs=1e-6)


def test_preprocess_image_pipeline(rng):
    img = rng.integers(0, 256, (30, 20, 3), dtype=np.uint8)
    out = preprocess_image(img, 16)
    assert out.shape == (16, 16) and out.dtype == np.float32
    assert 0 <= out.min() and out.max() <= 1


# -- augmentation ---------------------------------------------------------------------------

def _pairs(n, rng):
    return [(rng.random((8, 8)).astype(np.float32), (rng.random((8, 8)) < 0.3).astype(np.uint8))
            for _ in range(n)]


def test_thirty_become_one_twenty(rng):
    out = augment_dataset(_pairs(30, rng))
    assert len(out) == 120
    assert [s.op for s in out[:4]] == ["identity", "hflip", "vflip", "rotate"]
    assert all(abs(s.angle_millidegrees) <= 30_000 for s in out)


def test_one_becomes_four(rng):
    assert len(augment_dataset(_pairs(1, rng))) == 4


def test_empty_rejected():
    with pytest.raises(ParameterError):
        augment_dataset([])


def test_augment_files_deterministic(tmp_path, rng):
    pairs = _pairs(3, rng)
    a = write_augmented(augment_dataset(pairs, AugmentSpec(seed=5), [11, 12, 13]), tmp_path / "a")
    b = write_augmented(augment_dataset(pairs, AugmentSpec(seed=5), [11, 12, 13]), tmp_path / "b")
    assert open(a, "rb").read() == open(b, "rb").read()
    for name in ("0004.pgm", "0012.pgm"):
        assert (tmp_path / "a" / "images" / name).read_bytes() == \
            (tmp_path / "b" / "images" / name).read_bytes()
    rows = read_manifest(a)
    assert len(rows) == 12 and rows[0]["source_id"] == 11
    assert rows[3]["op"] == "rotate" and rows[3]["output_file"] == "images/0004.pgm"


def test_angle_independent_of_processing_order(rng):
    pairs = _pairs(3, rng)
    full = augment_dataset(pairs, AugmentSpec(seed=2))
    assert full[7].angle_millidegrees == augment_dataset(pairs[:2], AugmentSpec(seed=2))[7].angle_millidegrees
