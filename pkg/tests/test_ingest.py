import json

import numpy as np
import pytest
from PIL import Image

from geopretrain.data import (
    SplitSpec,
    annotation_class_stats,
    class_pixel_stats,
    deterministic_split,
    encode_mask,
    explicit_split,
    imbalance_flag,
    load_classification_folder,
    load_detection_annotations,
    load_segmentation_folder,
    resolution_profile,
    save_detection_predictions,
)
from geopretrain.data.detection import DetectionRecord
from geopretrain.errors import DatasetError


def _write_image(path, size=8, value=100):
    Image.fromarray(np.full((size, size, 3), value, dtype=np.uint8)).save(path)


class TestClassificationFolder:
    def test_counts_and_sorted_classes(self, tmp_path):
        for name, n in (("b_cls", 3), ("a_cls", 2), ("c_cls", 4)):
            d = tmp_path / name
            d.mkdir()
            for i in range(n):
                _write_image(d / f"{i}.png")
        ds = load_classification_folder(tmp_path)
        assert ds.class_names == ["a_cls", "b_cls", "c_cls"]
        assert len(ds) == 9
        # indices follow sorted folder order; file listing is deterministic
        expected = [(p, i) for i, name in enumerate(["a_cls", "b_cls", "c_cls"])
                    for p in sorted((tmp_path / name).iterdir())]
        assert ds.samples == expected

    def test_single_class_single_image(self, tmp_path):
        d = tmp_path / "only"
        d.mkdir()
        _write_image(d / "x.png")
        ds = load_classification_folder(tmp_path)
        assert len(ds) == 1 and ds.samples[0][1] == 0

    def test_missing_root_fatal(self, tmp_path):
        with pytest.raises(DatasetError, match="does not exist"):
            load_classification_folder(tmp_path / "nope")

    def test_empty_class_fatal_names_class(self, tmp_path):
        (tmp_path / "full").mkdir()
        _write_image(tmp_path / "full" / "a.png")
        (tmp_path / "hollow").mkdir()
        with pytest.raises(DatasetError, match="hollow"):
            load_classification_folder(tmp_path)

    def test_unreadable_image_rejected_not_fatal(self, tmp_path):
        d = tmp_path / "k"
        d.mkdir()
        _write_image(d / "good.png")
        (d / "bad.png").write_bytes(b"this is not a png")
        ds = load_classification_folder(tmp_path)
        assert len(ds) == 1
        assert len(ds.rejects) == 1
        assert ds.rejects[0][0].name == "bad.png"

    def test_rescan_is_stable(self, tmp_path):
        write_dirs = [("x", 2), ("y", 3)]
        for name, n in write_dirs:
            d = tmp_path / name
            d.mkdir()
            for i in range(n):
                _write_image(d / f"{i}.png")
        a = load_classification_folder(tmp_path)
        b = load_classification_folder(tmp_path)
        assert a.samples == b.samples


class TestSplits:
    def test_paper_counts(self):
        train, evals = deterministic_split(803, SplitSpec(0.8, seed=0))
        assert (len(train), len(evals)) == (642, 161)
        train, evals = deterministic_split(31500, SplitSpec(0.9, seed=0))
        assert (len(train), len(evals)) == (28350, 3150)

    def test_partition_and_stability(self):
        spec = SplitSpec(0.7, seed=42)
        a = deterministic_split(100, spec)
        b = deterministic_split(100, spec)
        assert a == b
        assert sorted(a[0] + a[1]) == list(range(100))

    def test_seed_changes_partition(self):
        a = deterministic_split(100, SplitSpec(0.7, seed=1))
        b = deterministic_split(100, SplitSpec(0.7, seed=2))
        assert a != b

    def test_empty_side_fatal(self):
        with pytest.raises(DatasetError):
            deterministic_split(3, SplitSpec(0.01, seed=0))

    def test_explicit_split_ost_counts(self):
        evals = list(range(1500, 1829))
        train, ev = explicit_split(1829, evals)
        assert (len(train), len(ev)) == (1500, 329)
        assert set(train) | set(ev) == set(range(1829))

    def test_explicit_split_rejects_bad_indices(self):
        with pytest.raises(DatasetError):
            explicit_split(10, [3, 11])


class TestSegmentationFolder:
    def _write_pair(self, root, name, mask):
        _write_image(root / f"{name}_sat.jpg", size=mask.shape[0])
        Image.fromarray(encode_mask(mask)).save(root / f"{name}_mask.png")

    def test_pairing_and_stats(self, tmp_path):
        m1 = np.full((4, 4), 1, dtype=np.int64)  # all Agriculture
        m2 = np.full((4, 4), 4, dtype=np.int64)  # all Water
        self._write_pair(tmp_path, "a", m1)
        self._write_pair(tmp_path, "b", m2)
        ds = load_segmentation_folder(tmp_path)
        assert ds.ids == ["a", "b"]
        counts, props = class_pixel_stats(ds, 7)
        assert counts[1] == 16 and counts[4] == 16
        assert props[1] == 0.5 and props[4] == 0.5
        assert abs(props.sum() - 1.0) < 1e-9

    def test_single_class_proportion_one(self, tmp_path):
        self._write_pair(tmp_path, "only", np.full((2, 2), 1, dtype=np.int64))
        ds = load_segmentation_folder(tmp_path)
        _, props = class_pixel_stats(ds, 7)
        assert props[1] == 1.0 and props[[0, 2, 3, 4, 5, 6]].sum() == 0.0

    def test_random_mask_matches_bruteforce(self, tmp_path):
        rng = np.random.default_rng(3)
        mask = rng.integers(0, 7, size=(16, 16))
        self._write_pair(tmp_path, "r", mask)
        ds = load_segmentation_folder(tmp_path)
        counts, props = class_pixel_stats(ds, 7)
        brute = [0] * 7
        for v in mask.ravel():
            brute[v] += 1
        assert counts.tolist() == brute
        assert abs(props.sum() - 1.0) < 1e-9

    def test_unpaired_files_fatal(self, tmp_path):
        _write_image(tmp_path / "lone_sat.jpg")
        with pytest.raises(DatasetError, match="no .* pairs|unpaired"):
            load_segmentation_folder(tmp_path)


class TestDetectionAnnotations:
    def _doc(self, with_scores=False):
        anns = [
            {"image_id": "im0", "bbox": [10, 10, 20, 10], "category_id": 0},
            {"image_id": "im0", "bbox": [40, 40, 10, 10], "category_id": 1},
            {"image_id": "im1", "bbox": [0, 0, 30, 30], "category_id": 2},
        ]
        if with_scores:
            for i, a in enumerate(anns):
                a["score"] = 0.9 - 0.1 * i
        return {
            "images": [
                {"id": "im0", "file_name": "im0.png", "width": 64, "height": 64},
                {"id": "im1", "file_name": "im1.png", "width": 64, "height": 64},
            ],
            "annotations": anns,
            "categories": [{"id": 0, "name": "tank"},
                           {"id": 1, "name": "tank_cluster"},
                           {"id": 2, "name": "floating_head_tank"}],
        }

    def test_load_corner_conversion(self, tmp_path):
        path = tmp_path / "ann.json"
        path.write_text(json.dumps(self._doc()))
        ds = load_detection_annotations(path)
        assert ds.class_names == ["tank", "tank_cluster", "floating_head_tank"]
        rec = ds.records[0]
        assert rec.image_id == "im0"
        assert np.allclose(rec.boxes[0], [10, 10, 30, 20])
        assert rec.scores is None

    def test_predictions_round_trip(self, tmp_path):
        path = tmp_path / "pred.json"
        path.write_text(json.dumps(self._doc(with_scores=True)))
        ds = load_detection_annotations(path)
        assert ds.records[0].is_prediction
        out = tmp_path / "resaved.json"
        save_detection_predictions(ds.records, ds.class_names, out)
        again = load_detection_annotations(out)
        for a, b in zip(ds.records, again.records):
            assert np.allclose(a.boxes, b.boxes)
            assert np.allclose(a.scores, b.scores)

    def test_boxes_clipped_to_bounds(self):
        rec = DetectionRecord(image_id="x", width=50, height=50,
                              boxes=np.array([[-5.0, -5.0, 60.0, 20.0]]),
                              labels=np.array([0]))
        assert rec.boxes[0].tolist() == [0.0, 0.0, 50.0, 20.0]

    def test_degenerate_after_clip_fatal(self):
        with pytest.raises(DatasetError, match="degenerate"):
            DetectionRecord(image_id="x", width=50, height=50,
                            boxes=np.array([[60.0, 10.0, 70.0, 20.0]]),
                            labels=np.array([0]))

    def test_class_stats_table_iii_shape(self):
        rng = np.random.default_rng(0)
        counts_per_class = [2446, 158, 4815]
        records = []
        remaining = list(counts_per_class)
        i = 0
        while any(remaining):
            n = min(50, sum(remaining))
            labels = []
            for k in range(3):
                take = min(remaining[k], n - len(labels))
                labels += [k] * take
                remaining[k] -= take
            records.append(DetectionRecord(
                image_id=f"im{i}", width=512, height=512,
                boxes=random_boxes_local(rng, len(labels)),
                labels=np.array(labels, dtype=np.int64)))
            i += 1
        counts, pct = annotation_class_stats(records, 3)
        assert counts.tolist() == counts_per_class
        assert counts.sum() == 7419
        expected = [100.0 * c / 7419 for c in counts_per_class]
        assert np.allclose(pct, expected, atol=1e-9)
        assert np.allclose(np.round(pct, 1), [33.0, 2.1, 64.9])
        assert abs(pct.sum() - 100.0) < 0.1

    def test_single_box_hundred_percent(self):
        rec = DetectionRecord(image_id="a", width=10, height=10,
                              boxes=np.array([[1.0, 1.0, 5.0, 5.0]]),
                              labels=np.array([2]))
        counts, pct = annotation_class_stats([rec], 3)
        assert pct[2] == 100.0 and counts.sum() == 1

    def test_random_set_matches_hand_tally(self):
        rng = np.random.default_rng(5)
        records = []
        tally = [0, 0, 0]
        for i in range(4):
            labels = rng.integers(0, 3, size=rng.integers(1, 6))
            for v in labels:
                tally[v] += 1
            records.append(DetectionRecord(
                image_id=f"i{i}", width=512, height=512,
                boxes=random_boxes_local(rng, len(labels)),
                labels=labels))
        counts, _ = annotation_class_stats(records, 3)
        assert counts.tolist() == tally


def random_boxes_local(rng, n):
    out = []
    for _ in range(n):
        x0, y0 = rng.uniform(0, 400, 2)
        w, h = rng.uniform(5, 80, 2)
        out.append([x0, y0, x0 + w, y0 + h])
    return np.array(out, dtype=np.float64).reshape(-1, 4)


class TestResolutionProfile:
    def test_paper_values(self):
        assert resolution_profile(0.2, 30) == 15.1
        assert resolution_profile(0.06, 4.96) == 2.51

    def test_degenerate_range(self):
        assert resolution_profile(1, 1) == 1

    def test_nonpositive_fatal(self):
        with pytest.raises(DatasetError):
            resolution_profile(0, 5)
        with pytest.raises(DatasetError):
            resolution_profile(-1, 5)

    def test_imbalance_flag(self):
        assert imbalance_flag([0.5676, 0.2, 0.2324])
        assert not imbalance_flag([0.4, 0.3, 0.3])
