import numpy as np
import pytest
from PIL import Image as PILImage

from winnet.data import (Image, ImageError, augment, extract_patches, load_dataset, load_image,
                         make_batches, patch_count, patches_from_images, save_image)
from winnet.noise import NoiseConfig


def write_pgm(path, w, h, data: bytes, maxval=255):
    path.write_bytes(b"P5\n%d %d\n%d\n" % (w, h, maxval) + data)


def test_load_pgm_scaling(tmp_path):
    write_pgm(tmp_path / "a.pgm", 2, 2, bytes([0, 128, 255, 64]))
    img = load_image(tmp_path / "a.pgm")
    np.testing.assert_allclose(img.pixels.ravel(), [0, 0.50196, 1.0, 0.25098], atol=1e-5)
    assert img.pixels.ravel().tolist() == [0, 128 / 255, 1.0, 64 / 255]


def test_pgm_header_comments(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n3 1\n255\n" + bytes([1, 2, 3]))
    assert load_image(tmp_path / "c.pgm").pixels.shape == (1, 3)


def test_png_and_pgm_agree(tmp_path):
    data = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    write_pgm(tmp_path / "a.pgm", 4, 3, data.tobytes())
    PILImage.fromarray(data).save(tmp_path / "a.png")
    assert np.array_equal(load_image(tmp_path / "a.pgm").pixels, load_image(tmp_path / "a.png").pixels)


def test_color_png_uses_luma(tmp_path):
    rgb = np.zeros((1, 2, 3), dtype=np.uint8)
    rgb[0, 0] = [255, 0, 0]
    rgb[0, 1] = [10, 200, 30]
    PILImage.fromarray(rgb).save(tmp_path / "c.png")
    px = load_image(tmp_path / "c.png").pixels.ravel()
    np.testing.assert_allclose(px, [0.299, (0.299 * 10 + 0.587 * 200 + 0.114 * 30) / 255], rtol=1e-12)


def test_bad_files(tmp_path):
    write_pgm(tmp_path / "t.pgm", 4, 4, bytes(10))
    with pytest.raises(ImageError):
        load_image(tmp_path / "t.pgm")
    write_pgm(tmp_path / "d.pgm", 1, 1, bytes(2), maxval=65535)
    with pytest.raises(ImageError):
        load_image(tmp_path / "d.pgm")
    (tmp_path / "x.pgm").write_bytes(b"garbage")
    with pytest.raises(ImageError):
        load_image(tmp_path / "x.pgm")
    with pytest.raises(ImageError):
        load_image(tmp_path / "missing.pgm")
    PILImage.fromarray(np.zeros((2, 2), dtype=np.uint16)).save(tmp_path / "w.png")
    with pytest.raises(ImageError):
        load_image(tmp_path / "w.png")


def test_pgm_round_trip_bit_identical(tmp_path, fixture_dir):
    img = load_image(fixture_dir / "scene_a.pgm")
    save_image(img, tmp_path / "copy.pgm")
    assert (tmp_path / "copy.pgm").read_bytes() == (fixture_dir / "scene_a.pgm").read_bytes()
    assert load_image(tmp_path / "copy.pgm").pixels.tobytes() == img.pixels.tobytes()


def test_dataset_order(tmp_path):
    for name in ["b.pgm", "a.pgm", "c.txt"]:
        write_pgm(tmp_path / name, 1, 1, b"\x00")
    assert [p.source_path.rsplit("/", 1)[-1] for p in load_dataset(tmp_path)] == ["a.pgm", "b.pgm"]


def test_patch_counts():
    assert patch_count(481, 321, 41, 14) == 672
    big = Image(np.zeros((481, 321)))
    assert len(extract_patches(big, 41, 14)) == 672
    assert len(extract_patches(Image(np.zeros((7, 7))), 7, 3)) == 1
    img = np.random.default_rng(0).random((3, 3))
    ps = extract_patches(Image(img), 3, 1)
    assert len(ps) == 1 and np.array_equal(ps.patches[0, 0], img)
    with pytest.raises(ValueError):
        extract_patches(Image(np.zeros((5, 5))), 6, 1)


@pytest.mark.parametrize("h,w,p,s", [(64, 64, 17, 8), (20, 33, 5, 3), (41, 41, 41, 14), (50, 9, 9, 2)])
def test_patches_are_bitwise_crops(h, w, p, s):
    img = np.random.default_rng(h * w).random((h, w))
    ps = extract_patches(Image(img), p, s)
    assert len(ps) == patch_count(h, w, p, s)
    for patch, (_, r, c) in zip(ps.patches, ps.offsets):
        assert r + p <= h and c + p <= w and r % s == 0 and c % s == 0
        assert patch[0].tobytes() == img[r:r + p, c:c + p].tobytes()


def test_augment():
    const = Image(np.full((3, 3), 0.4))
    assert all(np.array_equal(a.pixels, const.pixels) for a in augment(const))
    img = Image(np.arange(6, dtype=float).reshape(2, 3) / 10)
    out = augment(img)
    assert len(out) == 8
    assert [a.pixels.shape for a in out[::2]] == [(2, 3), (3, 2), (2, 3), (3, 2)]
    rot180 = out[4].pixels
    assert np.array_equal(np.rot90(rot180, 2), img.pixels)
    assert np.array_equal(out[1].pixels, img.pixels[:, ::-1])


def test_make_batches():
    patches = np.random.default_rng(0).random((130, 1, 5, 5))
    batches = list(make_batches(patches, NoiseConfig(sigma=0), 64, shuffle_seed=3))
    assert [len(b[1]) for b in batches] == [64, 64, 2]
    for y, x, s in batches:
        assert np.array_equal(y, x) and not s.any()
    again = list(make_batches(patches, NoiseConfig(sigma=0), 64, shuffle_seed=3))
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(batches, again))
    seen = np.concatenate([b[1] for b in batches])
    assert sorted(map(bytes, seen)) == sorted(map(bytes, patches))
    with pytest.raises(ValueError):
        next(make_batches(patches[:0], NoiseConfig(), 4, 0))


def test_make_batches_deterministic_noise():
    patches = np.random.default_rng(0).random((10, 1, 4, 4))
    a = [y for y, _, _ in make_batches(patches, NoiseConfig(sigma=30, seed=1), 4, 7)]
    b = [y for y, _, _ in make_batches(patches, NoiseConfig(sigma=30, seed=1), 4, 7)]
    assert all(u.tobytes() == v.tobytes() for u, v in zip(a, b))


def test_patches_from_images_with_augmentation():
    imgs = [Image(np.random.default_rng(0).random((20, 12)))]
    assert len(patches_from_images(imgs, 8, 4)) == patch_count(20, 12, 8, 4)
    aug = patches_from_images(imgs, 8, 4, augment_images=True)
    assert len(aug) == 4 * patch_count(20, 12, 8, 4) + 4 * patch_count(12, 20, 8, 4)
