import numpy as np
import pytest

from affectmirror.vision import (
    Cascade,
    CascadeError,
    CascadeStage,
    DetectionParams,
    FaceBox,
    HaarRect,
    WeakClassifier,
    bilinear_resize,
    detect_faces,
    group_boxes,
    import_cascade_xml,
    integral_image,
    largest_face,
    load_cascade,
    parse_cascade,
    preprocess_face,
    read_pgm,
    rect_sum,
    rgb_to_gray,
    save_cascade,
    scan_windows,
    write_pgm,
)

from helpers import always_pass_cascade, face_pattern_image, toy_face_cascade


def brute_rect_sum(img: np.ndarray, x: int, y: int, w: int, h: int) -> int:
    """Independent oracle: direct pixel summation."""
    return int(img[y : y + h, x : x + w].astype(np.int64).sum())


class TestIntegralImage:
    def test_two_by_two_matches_brute_force(self):
        img = np.array([[1, 2], [3, 4]], dtype=np.uint8)
        ii = integral_image(img)
        assert ii.sums[1:, 1:].tolist() == [[1, 3], [4, 10]]
        assert ii.squared_sums[1:, 1:].tolist() == [[1, 5], [10, 30]]

    def test_all_zero(self):
        ii = integral_image(np.zeros((4, 5), dtype=np.uint8))
        assert ii.sums.sum() == 0 and ii.squared_sums.sum() == 0

    def test_single_pixel(self):
        ii = integral_image(np.array([[7]], dtype=np.uint8))
        assert ii.sums[1, 1] == 7
        assert ii.squared_sums[1, 1] == 49

    def test_rect_sum_whole_image(self):
        img = np.array([[1, 2], [3, 4]], dtype=np.uint8)
        assert rect_sum(integral_image(img), 0, 0, 2, 2) == 10

    def test_rect_sum_empty_rect(self):
        img = np.array([[1, 2], [3, 4]], dtype=np.uint8)
        assert rect_sum(integral_image(img), 1, 1, 0, 1) == 0

    def test_rect_sum_single_cell(self):
        img = np.array([[1, 2], [3, 4]], dtype=np.uint8)
        assert rect_sum(integral_image(img), 1, 1, 1, 1) == 4

    def test_rect_sum_out_of_bounds(self):
        ii = integral_image(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            rect_sum(ii, 2, 2, 3, 3)

    def test_exact_against_brute_force_on_random_images(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            h, w = rng.integers(1, 20, 2)
            img = rng.integers(0, 256, (h, w), dtype=np.uint8)
            ii = integral_image(img)
            for _ in range(20):
                x = int(rng.integers(0, w))
                y = int(rng.integers(0, h))
                rw = int(rng.integers(0, w - x + 1))
                rh = int(rng.integers(0, h - y + 1))
                assert rect_sum(ii, x, y, rw, rh) == brute_rect_sum(img, x, y, rw, rh)


class TestDetection:
    def test_always_pass_cascade_tiles_scan_grid(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, (64, 80), dtype=np.uint8)
        params = DetectionParams(scale_factor=10.0, min_neighbors=0, min_size=24)
        hits = scan_windows(img, always_pass_cascade(24), params)
        # single scale (next scale 240 exceeds image): full grid, step 1
        expected = (64 - 24 + 1) * (80 - 24 + 1)
        assert len(hits) == expected
        assert {(b.w, b.h) for b in hits} == {(24, 24)}

    def test_multi_scale_grid_counts(self):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 256, (60, 60), dtype=np.uint8)
        params = DetectionParams(scale_factor=2.0, min_neighbors=0, min_size=24)
        hits = scan_windows(img, always_pass_cascade(24), params)
        # scale 1: 24x24 step 1 -> 37*37; scale 2: 48x48 step 2 -> 7*7
        expected = 37 * 37 + ((60 - 48) // 2 + 1) ** 2
        assert len(hits) == expected

    def test_blank_image_has_no_hits(self):
        img = np.full((100, 100), 128, dtype=np.uint8)
        params = DetectionParams(scale_factor=1.1, min_neighbors=0, min_size=24)
        assert scan_windows(img, always_pass_cascade(24), params) == []
        assert detect_faces(img, toy_face_cascade(), params) == []

    def test_detection_is_deterministic(self):
        img = face_pattern_image()
        params = DetectionParams(scale_factor=1.1, min_neighbors=3, min_size=24)
        first = detect_faces(img, toy_face_cascade(), params)
        second = detect_faces(img, toy_face_cascade(), params)
        assert first == second
        assert first, "the pattern should be detected"

    def test_detected_box_covers_the_pattern(self):
        img = face_pattern_image()
        params = DetectionParams(scale_factor=1.1, min_neighbors=3, min_size=24)
        box = largest_face(detect_faces(img, toy_face_cascade(), params))
        assert box is not None
        # pattern block is at (36, 36) size 48
        assert abs(box.x + box.w / 2 - 60) < 8
        assert abs(box.y + box.h / 2 - 60) < 8

    def test_grouping_invariant_under_input_order(self):
        img = face_pattern_image()
        params = DetectionParams(scale_factor=1.1, min_neighbors=3, min_size=24)
        raw = scan_windows(img, toy_face_cascade(), params)
        grouped = group_boxes(raw, params.min_neighbors)
        rng = np.random.default_rng(5)
        for _ in range(5):
            shuffled = list(raw)
            rng.shuffle(shuffled)
            assert set(group_boxes(shuffled, params.min_neighbors)) == set(grouped)

    def test_min_neighbors_discards_thin_groups(self):
        boxes = [FaceBox(0, 0, 20, 20), FaceBox(100, 100, 20, 20), FaceBox(101, 100, 20, 20)]
        merged = group_boxes(boxes, min_neighbors=2)
        assert merged == [FaceBox(100, 100, 20, 20)] or merged == [FaceBox(101, 100, 20, 20)] or merged == [
            FaceBox(round((100 + 101) / 2), 100, 20, 20)
        ]

    def test_scale_factor_must_exceed_one(self):
        with pytest.raises(ValueError):
            DetectionParams(scale_factor=1.0).validate()


class TestLargestFace:
    def test_empty(self):
        assert largest_face([]) is None

    def test_picks_bigger(self):
        small = FaceBox(0, 0, 10, 10)
        big = FaceBox(5, 5, 20, 20)
        assert largest_face([small, big]) == big

    def test_equal_area_ties_by_position(self):
        a = FaceBox(3, 9, 10, 10)
        b = FaceBox(1, 2, 10, 10)
        assert largest_face([a, b]) == b
        c = FaceBox(0, 2, 10, 10)
        assert largest_face([a, b, c]) == c


class TestPreprocess:
    def test_constant_255_maps_to_one(self):
        img = np.full((48, 48), 255, dtype=np.uint8)
        out = preprocess_face(img, FaceBox(0, 0, 48, 48))
        assert out.shape == (1, 48, 48)
        assert np.allclose(out, 1.0)

    def test_constant_0_maps_to_minus_one(self):
        img = np.zeros((48, 48), dtype=np.uint8)
        out = preprocess_face(img, FaceBox(0, 0, 48, 48))
        assert np.allclose(out, -1.0)

    def test_constant_128_downscale(self):
        img = np.full((96, 96), 128, dtype=np.uint8)
        out = preprocess_face(img, FaceBox(0, 0, 96, 96))
        assert out.shape == (1, 48, 48)
        assert np.allclose(out, (128 / 255 - 0.5) * 2, atol=1e-6)

    def test_output_range(self):
        rng = np.random.default_rng(9)
        img = rng.integers(0, 256, (70, 90), dtype=np.uint8)
        out = preprocess_face(img, FaceBox(5, 3, 60, 61))
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_degenerate_box_raises(self):
        img = np.zeros((48, 48), dtype=np.uint8)
        with pytest.raises(ValueError):
            preprocess_face(img, FaceBox(0, 0, 0, 10))
        with pytest.raises(ValueError):
            preprocess_face(img, FaceBox(40, 40, 20, 20))

    def test_resize_identity_when_same_size(self):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, (48, 48)).astype(np.float64)
        assert np.allclose(bilinear_resize(img, 48, 48), img)


class TestCascadeFormats:
    def test_hcas_round_trip(self, tmp_path):
        cascade = toy_face_cascade()
        path = tmp_path / "toy.hcas"
        save_cascade(cascade, path)
        loaded = load_cascade(path)
        assert loaded == cascade

    def test_bad_magic(self):
        with pytest.raises(CascadeError, match="magic"):
            parse_cascade(b"NOPE" + b"\x00" * 20)

    def test_truncated(self, tmp_path):
        cascade = toy_face_cascade()
        path = tmp_path / "toy.hcas"
        save_cascade(cascade, path)
        data = path.read_bytes()
        with pytest.raises(CascadeError, match="end of stream"):
            parse_cascade(data[:-4])

    def test_trailing_garbage(self, tmp_path):
        cascade = toy_face_cascade()
        path = tmp_path / "toy.hcas"
        save_cascade(cascade, path)
        with pytest.raises(CascadeError, match="trailing"):
            parse_cascade(path.read_bytes() + b"xx")

    def test_rect_outside_base_window_rejected_at_load(self):
        weak = WeakClassifier(
            rects=(HaarRect(0, 0, 30, 30, 1.0), HaarRect(0, 0, 5, 5, -1.0)),
            threshold=0.0,
            left_value=0.0,
            right_value=1.0,
        )
        with pytest.raises(CascadeError, match="outside base window"):
            Cascade(24, 24, (CascadeStage(0.0, (weak,)),)).validate()

    def test_xml_import(self, tmp_path):
        xml = """<?xml version="1.0"?>
<opencv_storage>
<cascade>
  <stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>24</height>
  <width>24</width>
  <stages>
    <_>
      <maxWeakCount>1</maxWeakCount>
      <stageThreshold>0.5</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 0 5.0e-01</internalNodes>
          <leafValues>0. 1.</leafValues>
        </_>
      </weakClassifiers>
    </_>
  </stages>
  <features>
    <_>
      <rects>
        <_>0 0 24 12 1.</_>
        <_>0 12 24 12 -1.</_>
      </rects>
      <tilted>0</tilted>
    </_>
  </features>
</cascade>
</opencv_storage>"""
        path = tmp_path / "toy.xml"
        path.write_text(xml)
        cascade = import_cascade_xml(path)
        expected = Cascade(
            24,
            24,
            (
                CascadeStage(
                    0.5,
                    (
                        WeakClassifier(
                            rects=(
                                HaarRect(0, 0, 24, 12, 1.0),
                                HaarRect(0, 12, 24, 12, -1.0),
                            ),
                            threshold=0.5,
                            left_value=0.0,
                            right_value=1.0,
                        ),
                    ),
                ),
            ),
        )
        assert cascade == expected

    def test_xml_rejects_tilted(self, tmp_path):
        xml = """<opencv_storage><cascade>
  <featureType>HAAR</featureType><height>24</height><width>24</width>
  <stages><_><stageThreshold>0.5</stageThreshold>
    <weakClassifiers><_>
      <internalNodes>0 -1 0 0.5</internalNodes><leafValues>0. 1.</leafValues>
    </_></weakClassifiers></_></stages>
  <features><_><rects><_>0 0 24 12 1.</_><_>0 12 24 12 -1.</_></rects>
    <tilted>1</tilted></_></features>
</cascade></opencv_storage>"""
        path = tmp_path / "tilted.xml"
        path.write_text(xml)
        with pytest.raises(CascadeError, match="tilted"):
            import_cascade_xml(path)

    def test_xml_rejects_tree_classifiers(self, tmp_path):
        xml = """<opencv_storage><cascade>
  <featureType>HAAR</featureType><height>24</height><width>24</width>
  <stages><_><stageThreshold>0.5</stageThreshold>
    <weakClassifiers><_>
      <internalNodes>1 2 0 0.5 0 -1 1 0.2</internalNodes>
      <leafValues>0. 1. 0.5</leafValues>
    </_></weakClassifiers></_></stages>
  <features><_><rects><_>0 0 24 12 1.</_><_>0 12 24 12 -1.</_></rects></_></features>
</cascade></opencv_storage>"""
        path = tmp_path / "tree.xml"
        path.write_text(xml)
        with pytest.raises(CascadeError, match="stump"):
            import_cascade_xml(path)


class TestPgmAndGray:
    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        img = rng.integers(0, 256, (33, 47), dtype=np.uint8)
        path = tmp_path / "frame.pgm"
        write_pgm(path, img)
        assert np.array_equal(read_pgm(path), img)

    def test_pgm_rejects_other_formats(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
        with pytest.raises(ValueError):
            read_pgm(path)

    def test_rgb_to_gray_weights(self):
        rgb = np.zeros((1, 3, 3), dtype=np.uint8)
        rgb[0, 0] = [255, 0, 0]
        rgb[0, 1] = [0, 255, 0]
        rgb[0, 2] = [0, 0, 255]
        gray = rgb_to_gray(rgb)
        assert gray[0].tolist() == [round(255 * 0.299), round(255 * 0.587), round(255 * 0.114)]
