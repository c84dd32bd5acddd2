import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowpose import ingest
from flowpose.errors import ContractError
from flowpose.synth import SynthConfig, format_synth_config, load_synth_config, render_sequence, write_scene


def small_rect(**kw):
    base = dict(width=64, height=64, figure_x=10, figure_y=10, figure_w=20, figure_h=40, velocity_u=2, frames=2)
    base.update(kw)
    return SynthConfig(**base)


class TestRectangle:
    def test_shifted_by_velocity(self):
        scene = render_sequence(small_rect())
        assert scene.bboxes[0].as_tuple() == (10, 10, 30, 50)
        assert scene.bboxes[1].as_tuple() == (12, 10, 32, 50)
        assert scene.masks[1].sum() == 800

    def test_gt_flow_on_figure_only(self):
        scene = render_sequence(small_rect())
        (flow,) = scene.flows
        moving = np.abs(flow.vectors).sum(axis=-1) > 0
        assert moving.sum() == 800
        np.testing.assert_array_equal(moving, scene.masks[0])
        np.testing.assert_array_equal(flow.vectors[moving], np.tile([2.0, 0.0], (800, 1)))

    def test_figure_texture_moves_with_it(self):
        scene = render_sequence(small_rect())
        a = scene.frames[0].luma[10:50, 10:30]
        b = scene.frames[1].luma[10:50, 12:32]
        np.testing.assert_array_equal(a, b)

    def test_contrast(self):
        scene = render_sequence(small_rect())
        luma, mask = scene.frames[0].luma, scene.masks[0]
        assert luma[mask].min() - luma[~mask].max() >= 0.3

    def test_zero_velocity_identical_frames(self):
        scene = render_sequence(small_rect(velocity_u=0, frames=3))
        assert scene.frames[0].luma.tobytes() == scene.frames[2].luma.tobytes()

    def test_deterministic(self):
        a, b = render_sequence(small_rect()), render_sequence(small_rect())
        assert all(x.luma.tobytes() == y.luma.tobytes() for x, y in zip(a.frames, b.frames))

    def test_seed_changes_texture(self):
        a = render_sequence(small_rect(texture_seed=1)).frames[0].luma
        b = render_sequence(small_rect(texture_seed=2)).frames[0].luma
        assert not np.array_equal(a, b)


@pytest.mark.parametrize("figure", ["rectangle", "stick"])
def test_parts_partition_figure_and_hold_keypoints(figure):
    scene = render_sequence(SynthConfig(figure=figure, frames=3))
    names = ["face", "shoulder_mid", "belly", "hip_mid", "knee_mid"]
    for mask, parts, kps in zip(scene.masks, scene.part_masks, scene.keypoints):
        np.testing.assert_array_equal(parts.labels > 0, mask)
        for i, name in enumerate(names, start=1):
            x, y = kps.joints[name]
            assert parts.labels[int(np.floor(y + 0.5)), int(np.floor(x + 0.5))] == i
        ax, ay = kps.joints["ankle_mid"]
        assert parts.labels[int(ay), int(ax)] == 5
        assert ay == max(np.nonzero(mask)[0])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 30), st.integers(1, 20), st.integers(4, 30), st.integers(5, 40), st.integers(0, 2 ** 20))
def test_part_masks_cover_figure(x, y, w, h, seed):
    cfg = SynthConfig(width=64, height=64, figure_x=x, figure_y=y, figure_w=w, figure_h=h, velocity_u=0,
                      frames=1, texture_seed=seed)
    scene = render_sequence(cfg)
    labels = scene.part_masks[0].labels
    assert set(np.unique(labels[scene.masks[0]])) == {1, 2, 3, 4, 5}
    assert not labels[~scene.masks[0]].any()


class TestValidation:
    def test_figure_leaves_frame(self):
        with pytest.raises(ContractError):
            small_rect(frames=30)

    def test_low_contrast_background(self):
        with pytest.raises(ContractError):
            SynthConfig(background=0.5)

    def test_unknown_figure(self):
        with pytest.raises(ContractError):
            SynthConfig(figure="circle")


def test_decoy_detections():
    scene = render_sequence(SynthConfig(frames=2, extra_detections=2))
    assert [d.frame_index for d in scene.detections] == [0, 0, 0, 1, 1, 1]


def test_write_scene_tree(tmp_path):
    scene = render_sequence(small_rect(frames=3))
    write_scene(scene, tmp_path)
    assert len(ingest.load_frame_sequence(tmp_path / "frames")) == 3
    assert sorted(p.name for p in (tmp_path / "gt_flow").iterdir()) == ["flow_000000.flo", "flow_000001.flo"]
    back = ingest.read_flow(tmp_path / "gt_flow" / "flow_000000.flo")
    np.testing.assert_array_equal(back.vectors, scene.flows[0].vectors)
    assert load_synth_config(tmp_path / "scene.cfg") == scene.config
    assert format_synth_config(scene.config) == (tmp_path / "scene.cfg").read_text()
    assert len(ingest.load_keypoints(tmp_path / "keypoints.txt")) == 3
