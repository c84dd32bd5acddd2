import os
import random
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowpose import ingest
from flowpose.data import BBox, Detection, FlowField, Frame, Keypoints, PartLabelMap
from flowpose.errors import DuplicateError, FormatError, ParseError, ValidationError


def write_pgm(path, pixels, header=None):
    pixels = np.asarray(pixels, dtype=np.uint8)
    head = header or b"P5\n%d %d\n255\n" % (pixels.shape[1], pixels.shape[0])
    path.write_bytes(head + pixels.tobytes())


class TestFrames:
    def test_empty_directory(self, tmp_path):
        assert ingest.load_frame_sequence(tmp_path) == []

    def test_sorted_by_parsed_index(self, tmp_path):
        write_pgm(tmp_path / "frame_000002.pgm", np.full((2, 3), 20))
        write_pgm(tmp_path / "frame_000000.pgm", np.full((2, 3), 10))
        (tmp_path / "notes.txt").write_text("ignored")
        frames = ingest.load_frame_sequence(tmp_path)
        assert [f.index for f in frames] == [0, 2]
        assert frames[0].luma[0, 0] == pytest.approx(10 / 255)

    def test_maxval_pixel_is_one(self, tmp_path):
        px = np.zeros((2, 3), dtype=np.uint8)
        px[1, 2] = 255
        write_pgm(tmp_path / "frame_000000.pgm", px)
        (frame,) = ingest.load_frame_sequence(tmp_path)
        assert (frame.width, frame.height) == (3, 2)
        assert frame.luma[1, 2] == 1.0
        assert frame.luma.sum() == 1.0

    def test_header_comments(self, tmp_path):
        path = tmp_path / "frame_000001.pgm"
        write_pgm(path, [[1, 2]], header=b"P5\n# made by hand\n2 1\n# max\n255\n")
        frame = ingest.read_frame(path)
        assert frame.index == 1
        np.testing.assert_array_equal(ingest.frame_to_bytes(frame), [[1, 2]])

    @pytest.mark.parametrize("blob", [b"P6\n1 1\n255\n\x00", b"P5\n1\n255\n\x00", b"P5\n2 2\n255\n\x00", b"P5 1 1 65535 \x00\x00"])
    def test_malformed_names_file(self, tmp_path, blob):
        path = tmp_path / "frame_000003.pgm"
        path.write_bytes(blob)
        with pytest.raises(FormatError, match="frame_000003.pgm"):
            ingest.load_frame_sequence(tmp_path)

    def test_duplicate_index(self, tmp_path):
        write_pgm(tmp_path / "frame_000004.pgm", [[0]])
        write_pgm(tmp_path / "frame_0000004.pgm", [[0]])
        with pytest.raises(DuplicateError):
            ingest.load_frame_sequence(tmp_path)

    def test_listing_order_does_not_matter(self, tmp_path, monkeypatch):
        for i in (5, 1, 3, 0):
            write_pgm(tmp_path / f"frame_{i:06d}.pgm", np.full((2, 2), i))
        baseline = [f.index for f in ingest.load_frame_sequence(tmp_path)]
        real = os.listdir
        for seed in range(5):
            names = real(tmp_path)
            random.Random(seed).shuffle(names)
            monkeypatch.setattr(ingest.os, "listdir", lambda _p, names=names: list(names))
            assert [f.index for f in ingest.load_frame_sequence(tmp_path)] == baseline

    def test_frame_roundtrip_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        px = rng.integers(0, 256, size=(7, 5), dtype=np.uint8)
        path = tmp_path / "frame_000000.pgm"
        write_pgm(path, px)
        frame = ingest.read_frame(path)
        out = tmp_path / "copy.pgm"
        ingest.write_frame(frame, out)
        assert out.read_bytes() == path.read_bytes()


class TestFlowFile:
    def test_single_pixel_layout(self, tmp_path):
        path = tmp_path / "a.flo"
        ingest.write_flow(FlowField.zeros(1, 1), path)
        data = path.read_bytes()
        assert len(data) == 12 + 8
        assert data[:4] == b"PIEH"
        assert struct.unpack("<ii", data[4:12]) == (1, 1)
        back = ingest.read_flow(path)
        np.testing.assert_array_equal(back.vectors, np.zeros((1, 1, 2)))

    def test_two_pixels(self, tmp_path):
        field = FlowField(np.array([[[1.5, -2.0], [0.0, 0.0]]]))
        path = tmp_path / "b.flo"
        ingest.write_flow(field, path)
        back = ingest.read_flow(path)
        assert (back.width, back.height) == (2, 1)
        np.testing.assert_array_equal(back.vectors, field.vectors)

    def test_middlebury_magic_is_the_float_tag(self):
        # the Middlebury readers check the first float32 against 202021.25
        assert struct.unpack("<f", ingest.FLOW_MAGIC)[0] == 202021.25

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "c.flo"
        path.write_bytes(b"XXXX" + struct.pack("<ii", 1, 1) + b"\x00" * 8)
        with pytest.raises(FormatError):
            ingest.read_flow(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "d.flo"
        path.write_bytes(b"PIEH" + struct.pack("<ii", 2, 2) + b"\x00" * 8)
        with pytest.raises(FormatError):
            ingest.read_flow(path)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.data())
    def test_roundtrip_float32(self, tmp_path_factory, w, h, data):
        values = data.draw(st.lists(st.floats(width=32, allow_nan=False, allow_infinity=False),
                                    min_size=w * h * 2, max_size=w * h * 2))
        field = FlowField(np.array(values, dtype=np.float32).reshape(h, w, 2))
        back = ingest.decode_flow(ingest.encode_flow(field))
        np.testing.assert_array_equal(back.vectors, field.vectors)


class TestLabelMaps:
    def test_all_zero(self, tmp_path):
        path = tmp_path / "label_000000.pgm"
        ingest.write_label_map(PartLabelMap(np.zeros((4, 4)), k=5), path)
        data = path.read_bytes()
        assert data.endswith(b"\x00" * 16)
        assert data[:-16] == b"P5\n4 4\n255\n"
        back = ingest.read_label_map(path, k=5)
        np.testing.assert_array_equal(back.labels, 0)

    def test_value_stored_verbatim(self, tmp_path):
        labels = np.zeros((3, 4), dtype=np.uint8)
        labels[1, 2] = 5
        path = tmp_path / "label_000009.pgm"
        ingest.write_label_map(PartLabelMap(labels, k=5), path)
        payload = path.read_bytes()[len(b"P5\n4 3\n255\n"):]
        assert payload[1 * 4 + 2] == 5
        back = ingest.read_label_map(path, k=5)
        assert back.frame_index == 9
        np.testing.assert_array_equal(back.labels, labels)

    def test_value_above_k_rejected(self, tmp_path):
        path = tmp_path / "label_000000.pgm"
        write_pgm(path, [[0, 7]])
        with pytest.raises(ValidationError):
            ingest.read_label_map(path, k=5)
        assert ingest.read_label_map(path).labels.max() == 7


class TestDetections:
    def test_parse_line(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("4 10 20 110 220 1.5\n")
        (det,) = ingest.load_detections(path)
        assert det == Detection(4, BBox(10, 20, 110, 220), 1.5)

    def test_zero_width_rejected_with_line(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("# header\n4 10 20 10 220 1.0\n")
        with pytest.raises(ValidationError, match=":2"):
            ingest.load_detections(path)

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("1 2 3 4 5 0.1\n4 a 20 30 220 1.0\n")
        with pytest.raises(ParseError, match=":2"):
            ingest.load_detections(path)

    def test_empty(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("")
        assert ingest.load_detections(path) == []

    def test_sorted_stable(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("3 0 0 5 5 0.1\n1 0 0 5 5 0.9\n3 1 1 6 6 0.2\n1 2 2 7 7 0.3\n")
        dets = ingest.load_detections(path)
        assert [(d.frame_index, d.score) for d in dets] == [(1, 0.9), (1, 0.3), (3, 0.1), (3, 0.2)]

    def test_clamped_to_frame(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("0 -5 -5 300 40 2.0\n")
        (det,) = ingest.load_detections(path, frame_size=(64, 48))
        assert det.bbox == BBox(0, 0, 64, 40)
        path.write_text("0 70 0 90 10 2.0\n")
        with pytest.raises(ValidationError):
            ingest.load_detections(path, frame_size=(64, 48))

    def test_negative_score_allowed(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("0 0 0 2 2 -0.75\n")
        assert ingest.load_detections(path)[0].score == -0.75


class TestKeypoints:
    def test_roundtrip(self, tmp_path):
        kps = [Keypoints(2, {"face": (1.5, 2.0), "ankle_mid": (3.0, 9.25)}), Keypoints(0, {"belly": (0.0, 0.0)})]
        path = tmp_path / "k.txt"
        ingest.write_keypoints(kps, path)
        back = ingest.load_keypoints(path)
        assert [k.frame_index for k in back] == [0, 2]
        assert back[1].joints == kps[0].joints

    def test_unknown_joint(self, tmp_path):
        path = tmp_path / "k.txt"
        path.write_text("0 elbow 1 2\n")
        with pytest.raises(ValidationError):
            ingest.load_keypoints(path)

    def test_repeated_joint(self, tmp_path):
        path = tmp_path / "k.txt"
        path.write_text("0 face 1 2\n0 face 3 4\n")
        with pytest.raises(DuplicateError):
            ingest.load_keypoints(path)


def test_frame_invariants():
    with pytest.raises(ValidationError):
        Frame(np.full((2, 2), 1.5))
    with pytest.raises(ValidationError):
        Frame(np.zeros((0, 3)))


def test_atomic_write_leaves_no_temp(tmp_path):
    ingest.atomic_write(tmp_path / "x.bin", b"abc")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["x.bin"]
