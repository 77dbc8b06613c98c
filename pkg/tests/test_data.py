"""Data-module tests: PGM round-trips, label CSVs, splits, synthesis."""

import numpy as np
import pytest

from morphal.data import (
    Dataset,
    ImageRecord,
    LabelRecord,
    binarize_label,
    generate_synthetic,
    load_dataset,
    load_labels_csv,
    load_pgm,
    make_splits,
    write_labels_csv,
    write_pgm,
)
from morphal.errors import DataFormatError, InputError


class TestPgm:
    def test_direct_normalization(self, tmp_path):
        f = tmp_path / "img.pgm"
        f.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        rec = load_pgm(f)
        assert rec.id == "img"
        assert (rec.width, rec.height) == (2, 2)
        np.testing.assert_array_equal(rec.pixels,
                                      [0.0, 1.0, 128 / 255, 64 / 255])

    def test_comment_in_header(self, tmp_path):
        f = tmp_path / "c.pgm"
        f.write_bytes(b"P5\n# made by hand\n2 1\n255\n" + bytes([7, 9]))
        rec = load_pgm(f)
        np.testing.assert_array_equal(rec.pixels, [7 / 255, 9 / 255])

    def test_bad_magic(self, tmp_path):
        f = tmp_path / "x.pgm"
        f.write_bytes(b"P6\n2 2\n255\n" + bytes(4))
        with pytest.raises(DataFormatError, match="magic"):
            load_pgm(f)

    def test_wrong_maxval(self, tmp_path):
        f = tmp_path / "x.pgm"
        f.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(DataFormatError, match="maxval"):
            load_pgm(f)

    def test_truncated_payload(self, tmp_path):
        f = tmp_path / "x.pgm"
        f.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
        with pytest.raises(DataFormatError, match="truncated"):
            load_pgm(f)

    @pytest.mark.parametrize("seed", range(5))
    def test_write_load_round_trip_identity(self, tmp_path, seed):
        rng = np.random.default_rng(seed)
        raw = rng.integers(0, 256, size=12, dtype=np.uint8)
        rec = ImageRecord("r", 4, 3, raw / 255.0)
        f1 = tmp_path / "a.pgm"
        write_pgm(rec, f1)
        loaded = load_pgm(f1)
        np.testing.assert_array_equal(loaded.pixels, rec.pixels)
        f2 = tmp_path / "b.pgm"
        write_pgm(loaded, f2)
        assert f1.read_bytes() == f2.read_bytes()

    def test_pixels_validated(self):
        with pytest.raises(InputError):
            ImageRecord("bad", 2, 2, np.array([0.0, 0.5, 1.0, 1.5]))
        with pytest.raises(InputError):
            ImageRecord("bad", 2, 2, np.zeros(3))


class TestLabelsCsv:
    def test_basic_row(self, tmp_path):
        f = tmp_path / "labels.csv"
        f.write_text("id,p_positive\ng001,0.80\n")
        recs = load_labels_csv(f)
        assert recs == [LabelRecord("g001", 0.80)]

    def test_out_of_range_names_row(self, tmp_path):
        f = tmp_path / "labels.csv"
        f.write_text("id,p_positive\ng001,1.20\n")
        with pytest.raises(DataFormatError, match=":2"):
            load_labels_csv(f)

    def test_duplicate_id(self, tmp_path):
        f = tmp_path / "labels.csv"
        f.write_text("id,p_positive\na,0.2\na,0.3\n")
        with pytest.raises(DataFormatError, match="duplicate"):
            load_labels_csv(f)

    def test_missing_column(self, tmp_path):
        f = tmp_path / "labels.csv"
        f.write_text("id\na\n")
        with pytest.raises(DataFormatError, match="header"):
            load_labels_csv(f)

    def test_crlf_accepted(self, tmp_path):
        f = tmp_path / "labels.csv"
        f.write_bytes(b"id,p_positive\r\na,0.25\r\n")
        assert load_labels_csv(f) == [LabelRecord("a", 0.25)]

    def test_round_trip(self, tmp_path):
        recs = [LabelRecord("a", 0.123456789012345), LabelRecord("b", 1.0)]
        f = tmp_path / "labels.csv"
        write_labels_csv(recs, f)
        assert load_labels_csv(f) == recs

    def test_join_failure_names_missing_id(self, tmp_path):
        imgdir = tmp_path / "imgs"
        imgdir.mkdir()
        for name in ("a", "c"):
            write_pgm(ImageRecord(name, 2, 2, np.zeros(4)), imgdir / f"{name}.pgm")
        f = tmp_path / "labels.csv"
        f.write_text("id,p_positive\na,0.5\nb,0.5\n")
        with pytest.raises(InputError) as err:
            load_dataset(imgdir, f)
        assert "c" in str(err.value) and "b" in str(err.value)


class TestBinarize:
    @pytest.mark.parametrize("p,expected", [(0.80, 1), (0.49, 0), (0.50, 1),
                                            (0.0, 0), (1.0, 1)])
    def test_threshold(self, p, expected):
        assert binarize_label(p) == expected

    def test_rejects_out_of_range(self):
        with pytest.raises(InputError):
            binarize_label(1.5)


class TestSplits:
    def test_100_ids(self):
        ids = [f"g{i:03d}" for i in range(100)]
        split = make_splits(ids, seed=5)
        assert (len(split.train_ids), len(split.val_ids), len(split.test_ids)) == (80, 10, 10)
        all_ids = split.train_ids + split.val_ids + split.test_ids
        assert sorted(all_ids) == sorted(ids)
        assert len(set(all_ids)) == 100

    def test_deterministic(self):
        ids = [f"g{i}" for i in range(50)]
        a = make_splits(ids, seed=9)
        b = make_splits(ids, seed=9)
        assert a == b
        c = make_splits(ids, seed=10)
        assert a != c

    def test_13_ids_remainder_to_train(self):
        split = make_splits([f"i{k}" for k in range(13)], seed=0)
        assert (len(split.train_ids), len(split.val_ids), len(split.test_ids)) == (11, 1, 1)

    def test_too_few(self):
        with pytest.raises(InputError):
            make_splits(list("abcdefghi"), seed=0)

    def test_bad_fractions(self):
        with pytest.raises(InputError):
            make_splits([f"i{k}" for k in range(20)], fractions=(0.5, 0.2, 0.2), seed=0)


class TestSynthetic:
    def test_deterministic(self):
        a_imgs, a_labs = generate_synthetic(20, seed=3)
        b_imgs, b_labs = generate_synthetic(20, seed=3)
        for x, y in zip(a_imgs, b_imgs):
            assert (x.pixels == y.pixels).all()
        assert a_labs == b_labs

    def test_noiseless_class1_differs_exactly_on_bar_mask(self):
        # Matched pairs: identical seeds with forced labels share all
        # geometry draws, so the only difference is the bar.
        bar_imgs, _, masks = generate_synthetic(30, noise_sigma=0.0, seed=11,
                                                p_class1=1.0, with_masks=True)
        blob_imgs, _ = generate_synthetic(30, noise_sigma=0.0, seed=11,
                                          p_class1=0.0)
        for with_bar, blob_only, mask in zip(bar_imgs, blob_imgs, masks):
            assert ((with_bar.pixels != blob_only.pixels) == mask).all()

    def test_pixel_sum_probe_separates(self):
        imgs, labs = generate_synthetic(2000, side=16, noise_sigma=0.05, seed=7)
        sums = np.array([im.pixels.sum() for im in imgs])
        y = np.array([int(l.p_positive) for l in labs])
        order = np.argsort(sums)
        s_labels = y[order]
        n = len(s_labels)
        # brute-force sweep of every threshold position (either polarity)
        ones_left = np.concatenate([[0], np.cumsum(s_labels)])
        best = 0.0
        total_ones = s_labels.sum()
        for i in range(n + 1):
            zeros_left = i - ones_left[i]
            ones_right = total_ones - ones_left[i]
            acc = (zeros_left + ones_right) / n
            best = max(best, acc, 1.0 - acc)
        assert best >= 0.90

    def test_pixels_in_range_and_ids_unique(self):
        imgs, labs = generate_synthetic(50, noise_sigma=0.3, seed=1)
        ids = [im.id for im in imgs]
        assert len(set(ids)) == 50
        for im in imgs:
            assert ((im.pixels >= 0.0) & (im.pixels <= 1.0)).all()
        for lab in labs:
            assert lab.p_positive in (0.0, 1.0)

    def test_rejects_degenerate_requests(self):
        with pytest.raises(InputError):
            generate_synthetic(1)
        with pytest.raises(InputError):
            generate_synthetic(10, side=4)


class TestDataset:
    def test_matrix_and_labels(self):
        imgs, labs = generate_synthetic(12, seed=2)
        ds = Dataset({r.id: r for r in imgs}, {r.id: r for r in labs})
        ids = ds.ids[:5]
        mat = ds.pixel_matrix(ids)
        assert mat.shape == (5, 256)
        np.testing.assert_array_equal(mat[0], ds.images[ids[0]].pixels)
        yb = ds.binary_labels(ids)
        assert set(yb) <= {0, 1}

    def test_unknown_id_rejected(self):
        imgs, labs = generate_synthetic(5, seed=2)
        ds = Dataset({r.id: r for r in imgs}, {r.id: r for r in labs})
        with pytest.raises(InputError):
            ds.pixel_matrix(["nope"])

    def test_mixed_dimensions_rejected(self):
        a = ImageRecord("a", 2, 2, np.zeros(4))
        b = ImageRecord("b", 3, 2, np.zeros(6))
        with pytest.raises(InputError):
            Dataset({"a": a, "b": b})

    def test_load_dataset_round_trip(self, tmp_path):
        imgs, labs = generate_synthetic(8, seed=4)
        imgdir = tmp_path / "imgs"
        imgdir.mkdir()
        for rec in imgs:
            write_pgm(rec, imgdir / f"{rec.id}.pgm")
        write_labels_csv(labs, tmp_path / "labels.csv")
        ds = load_dataset(imgdir, tmp_path / "labels.csv")
        assert ds.ids == sorted(r.id for r in imgs)
        # quantization via write_pgm is exact for /255 pixel values
        for rec in imgs:
            np.testing.assert_array_equal(
                ds.images[rec.id].pixels,
                np.rint(rec.pixels * 255) / 255)
