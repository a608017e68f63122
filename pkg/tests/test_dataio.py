"""Portable-anymap round trips, header edge cases, and the synthetic
shape corpus generator."""

import os

import numpy as np
import pytest

from sodkit import dataio


def test_pgm_round_trip(tmp_path, rng):
    arr = rng.uniform(size=(5, 7))
    path = str(tmp_path / "m.pgm")
    dataio.save_pnm(arr, path)
    back = dataio.load_pnm(path)
    assert back.shape == (5, 7)
    assert np.array_equal(back, np.rint(arr * 255.0) / 255.0)
    # a second save of the loaded values is byte-identical (idempotent)
    path2 = str(tmp_path / "m2.pgm")
    dataio.save_pnm(back, path2)
    assert open(path, "rb").read() == open(path2, "rb").read()


def test_ppm_round_trip(tmp_path, rng):
    arr = rng.uniform(size=(4, 6, 3))
    path = str(tmp_path / "c.ppm")
    dataio.save_pnm(arr, path)
    back = dataio.load_pnm(path)
    assert back.shape == (4, 6, 3)
    assert np.array_equal(back, np.rint(arr * 255.0) / 255.0)


def test_save_clips_out_of_range(tmp_path):
    arr = np.array([[-0.5, 0.0], [1.0, 2.0]])
    path = str(tmp_path / "x.pgm")
    dataio.save_pnm(arr, path)
    back = dataio.load_pnm(path)
    assert np.array_equal(back, [[0.0, 0.0], [1.0, 1.0]])


def test_header_comments_and_whitespace(tmp_path):
    raw = b"P5\n# a comment line\n  3\t2 # trailing comment\n255\n" + bytes(6)
    path = str(tmp_path / "h.pgm")
    open(path, "wb").write(raw)
    arr = dataio.load_pnm(path)
    assert arr.shape == (2, 3)
    assert np.array_equal(arr, np.zeros((2, 3)))


def test_payload_may_start_with_whitespace_byte(tmp_path):
    # exactly one separator byte after the maxval token; a pixel valued
    # 0x20 (space) must not be eaten by the tokenizer
    raw = b"P5\n2 1\n255\n" + bytes([0x20, 0x41])
    path = str(tmp_path / "w.pgm")
    open(path, "wb").write(raw)
    arr = dataio.load_pnm(path)
    assert np.array_equal(np.rint(arr * 255.0), [[0x20, 0x41]])


def test_error_classes(tmp_path):
    cases = [
        (b"P4\n2 2\n255\n" + bytes(4), dataio.PnmHeaderError),
        (b"P5\n2 2\n65535\n" + bytes(8), dataio.PnmMaxvalError),
        (b"P5\n2 2\n255\n" + bytes(3), dataio.PnmPayloadError),
        (b"P5\n2\n255\n" + bytes(4), dataio.PnmHeaderError),
        (b"P5\n-2 2\n255\n" + bytes(4), dataio.PnmHeaderError),
    ]
    for i, (raw, err) in enumerate(cases):
        path = str(tmp_path / f"bad{i}.pnm")
        open(path, "wb").write(raw)
        with pytest.raises(err):
            dataio.load_pnm(path)
        assert issubclass(err, dataio.PnmError)


def test_load_mask_binarizes_at_half(tmp_path):
    raw = b"P5\n4 1\n255\n" + bytes([0, 127, 128, 255])
    path = str(tmp_path / "m.pgm")
    open(path, "wb").write(raw)
    mask = dataio.load_mask(path)
    assert mask.dtype == np.uint8
    assert np.array_equal(mask, [[0, 0, 1, 1]])


def test_load_mask_rejects_color(tmp_path):
    path = str(tmp_path / "c.ppm")
    dataio.save_pnm(np.zeros((2, 2, 3)), path)
    with pytest.raises(dataio.PnmError):
        dataio.load_mask(path)


def test_hflip_involution(rng):
    s = dataio.Sample(image=rng.uniform(size=(4, 5, 3)),
                      mask=(rng.uniform(size=(4, 5)) < 0.5).astype(np.uint8),
                      id="t")
    f = dataio.hflip(s)
    assert np.array_equal(f.image[:, 0], s.image[:, -1])
    ff = dataio.hflip(f)
    assert np.array_equal(ff.image, s.image)
    assert np.array_equal(ff.mask, s.mask)


def test_resize_identity_returns_copy(rng):
    arr = rng.uniform(size=(6, 6))
    out = dataio.resize_map(arr, 6, 6)
    assert np.array_equal(out, arr)
    out[0, 0] = -1.0
    assert arr[0, 0] != -1.0


def test_resize_bilinear_rethresholds_mask(rng):
    s = dataio.Sample(image=rng.uniform(size=(8, 8, 3)),
                      mask=(rng.uniform(size=(8, 8)) < 0.5).astype(np.uint8),
                      id="t")
    r = dataio.resize_bilinear(s, 16)
    assert r.image.shape == (16, 16, 3)
    assert r.mask.shape == (16, 16)
    assert set(np.unique(r.mask)) <= {0, 1}


def test_synthetic_determinism_and_index_stability():
    spec = dataio.SyntheticSpec(count=6, size=32, seed=42)
    a = dataio.generate_synthetic(spec)
    b = dataio.generate_synthetic(spec)
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.image, sb.image)
        assert np.array_equal(sa.mask, sb.mask)
    # sample i depends only on (seed, i), not on how many are generated
    c = dataio.generate_synthetic(dataio.SyntheticSpec(count=3, size=32, seed=42))
    for sa, sc in zip(a[:3], c):
        assert np.array_equal(sa.image, sc.image)
        assert np.array_equal(sa.mask, sc.mask)


def test_synthetic_mask_fraction_bounds():
    spec = dataio.SyntheticSpec(count=60, size=32, seed=7)
    for s in dataio.generate_synthetic(spec):
        frac = s.mask.mean()
        assert 0.05 <= frac <= 0.6, frac
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0
        assert s.mask.any()


def test_synthetic_ids_and_validate():
    samples = dataio.generate_synthetic(dataio.SyntheticSpec(count=3, size=16, seed=0))
    assert [s.id for s in samples] == ["00000", "00001", "00002"]
    for s in samples:
        s.validate()


def test_spec_validation():
    with pytest.raises(ValueError):
        dataio.SyntheticSpec(count=0).validate()
    with pytest.raises(ValueError):
        dataio.SyntheticSpec(size=3).validate()
    with pytest.raises(ValueError):
        dataio.SyntheticSpec(hole_fraction=1.5).validate()
    with pytest.raises(ValueError):
        dataio.SyntheticSpec(shape_kinds=("triangle",)).validate()


def test_dataset_save_load_round_trip(tmp_path):
    samples = dataio.generate_synthetic(dataio.SyntheticSpec(count=4, size=16, seed=5))
    root = str(tmp_path / "ds")
    dataio.save_dataset(samples, root)
    assert os.path.exists(os.path.join(root, "list.txt"))
    back = dataio.load_dataset(root)
    assert [s.id for s in back] == [s.id for s in samples]
    for orig, got in zip(samples, back):
        assert np.array_equal(got.mask, orig.mask)
        assert np.array_equal(got.image, np.rint(orig.image * 255.0) / 255.0)
