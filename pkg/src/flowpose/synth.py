"""Deterministic synthetic scenes with known flow, boxes, parts and joints.

A textured figure slides over a static background at a fixed velocity. The
background is either constant or carries a faint static texture
(``background_texture`` sets its peak-to-peak amplitude); without it the
box-window pooling of the flow drags figure motion far into the flat
surround.

The texture is two octaves of value noise defined on the whole plane in
figure-local coordinates, so a translated figure is an exact resampling of
the same pattern. Lattice values come from a splitmix64-style integer hash
of ``(ix, iy, seed)``; no global RNG state is involved.

Figures
-------
``rectangle``  the full ``figure_w`` x ``figure_h`` box.
``stick``      five segments inside that box: head, torso, arm bar, two legs.
``plane``      texture over the whole frame (global translation, no border).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import ingest
from .config import parse_kv_file, coerce_fields
from .data import JOINT_NAMES, BBox, Detection, FlowField, Frame, Keypoints, PartLabelMap
from .errors import ContractError
from .supervise import partition_bands

FIGURES = ("rectangle", "stick", "plane")
PART_JOINTS = JOINT_NAMES[:5]

_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xC2B2AE3D27D4EB4F)
_M3 = np.uint64(0x165667B19E3779F9)
_M4 = np.uint64(0xBF58476D1CE4E5B9)
_M5 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class SynthConfig:
    width: int = 96
    height: int = 96
    figure: str = "rectangle"
    figure_x: float = 10.0
    figure_y: float = 14.0
    figure_w: int = 32
    figure_h: int = 64
    velocity_u: float = 2.0
    velocity_v: float = 0.0
    frames: int = 6
    texture_seed: int = 7
    texture_cell: float = 4.0
    background: float = 0.15
    background_texture: float = 0.2
    extra_detections: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ContractError("scene dimensions must be positive")
        if self.figure not in FIGURES:
            raise ContractError(f"figure must be one of {FIGURES}, got {self.figure!r}")
        if self.frames < 1:
            raise ContractError("frames must be >= 1")
        if self.figure_w <= 0 or self.figure_h < 5:
            raise ContractError("figure needs positive width and height >= 5")
        if self.background_texture < 0:
            raise ContractError("background_texture must be >= 0")
        lo = self.background - self.background_texture / 2.0
        hi = self.background + self.background_texture / 2.0
        if not (0.0 <= lo and hi <= 0.25 or 0.75 <= lo and hi <= 1.0):
            raise ContractError("background range must stay within [0, 0.25] or [0.75, 1] to keep 0.3 contrast")
        if self.texture_cell <= 0:
            raise ContractError("texture_cell must be positive")
        if self.extra_detections < 0:
            raise ContractError("extra_detections must be >= 0")
        if self.figure != "plane":
            for t in range(self.frames):
                x, y = self.position(t)
                if x < 0 or y < 0 or x + self.figure_w > self.width or y + self.figure_h > self.height:
                    raise ContractError(f"figure leaves the frame at t={t}")

    @property
    def velocity(self) -> tuple[float, float]:
        return (self.velocity_u, self.velocity_v)

    def position(self, t: int) -> tuple[float, float]:
        return (self.figure_x + t * self.velocity_u, self.figure_y + t * self.velocity_v)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthScene:
    config: SynthConfig
    frames: list[Frame]
    flows: list[FlowField]
    masks: list[np.ndarray]
    bboxes: list[BBox]
    part_masks: list[PartLabelMap]
    keypoints: list[Keypoints]
    detections: list[Detection]


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    z = ix.astype(np.int64).astype(np.uint64) * _M1
    z ^= iy.astype(np.int64).astype(np.uint64) * _M2
    z ^= np.full(z.shape, seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64) * _M3
    z += _M1
    z = (z ^ (z >> np.uint64(30))) * _M4
    z = (z ^ (z >> np.uint64(27))) * _M5
    z ^= z >> np.uint64(31)
    return (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def value_noise(x: np.ndarray, y: np.ndarray, seed: int, cell: float) -> np.ndarray:
    """Smooth noise in [0, 1] at real coordinates, lattice spacing ``cell``."""
    gx = np.asarray(x, dtype=np.float64) / cell
    gy = np.asarray(y, dtype=np.float64) / cell
    ix = np.floor(gx)
    iy = np.floor(gy)
    fx = gx - ix
    fy = gy - iy
    fx = fx * fx * (3.0 - 2.0 * fx)
    fy = fy * fy * (3.0 - 2.0 * fy)
    ix = ix.astype(np.int64)
    iy = iy.astype(np.int64)
    v00 = _hash01(ix, iy, seed)
    v10 = _hash01(ix + 1, iy, seed)
    v01 = _hash01(ix, iy + 1, seed)
    v11 = _hash01(ix + 1, iy + 1, seed)
    top = v00 + (v10 - v00) * fx
    bottom = v01 + (v11 - v01) * fx
    return top + (bottom - top) * fy


def texture(x: np.ndarray, y: np.ndarray, seed: int, cell: float = 4.0) -> np.ndarray:
    coarse = value_noise(x, y, seed, cell)
    fine = value_noise(x, y, seed + 1, cell / 2.0)
    return (2.0 * coarse + fine) / 3.0


def _figure_mask(cfg: SynthConfig, t: int) -> np.ndarray:
    rows, cols = np.mgrid[0:cfg.height, 0:cfg.width].astype(np.float64)
    if cfg.figure == "plane":
        return np.ones((cfg.height, cfg.width), dtype=bool)
    px, py = cfg.position(t)
    lx = cols - px
    ly = rows - py
    w, h = cfg.figure_w, cfg.figure_h

    def seg(x0, x1, y0, y1):
        return (lx >= x0 * w) & (lx < x1 * w) & (ly >= y0 * h) & (ly < y1 * h)

    if cfg.figure == "rectangle":
        return seg(0.0, 1.0, 0.0, 1.0)
    return (
        seg(0.35, 0.65, 0.0, 0.2)      # head
        | seg(0.3, 0.7, 0.2, 0.6)      # torso
        | seg(0.0, 1.0, 0.25, 0.35)    # arms
        | seg(0.3, 0.47, 0.6, 1.0)     # left leg
        | seg(0.53, 0.7, 0.6, 1.0)     # right leg
    )


def _render_frame(cfg: SynthConfig, t: int, mask: np.ndarray) -> np.ndarray:
    rows, cols = np.mgrid[0:cfg.height, 0:cfg.width].astype(np.float64)
    px, py = cfg.position(t) if cfg.figure != "plane" else (t * cfg.velocity_u, t * cfg.velocity_v)
    tex = texture(cols - px, rows - py, cfg.texture_seed, cfg.texture_cell)
    low = 0.55 if cfg.background <= 0.25 else 0.05
    if cfg.background_texture > 0:
        # static pattern, seeded apart from the figure's
        still = texture(cols, rows, cfg.texture_seed + 101, cfg.texture_cell)
        luma = cfg.background + cfg.background_texture * (still - 0.5)
    else:
        luma = np.full((cfg.height, cfg.width), cfg.background)
    luma[mask] = (low + 0.4 * tex)[mask]
    return luma


def _tight_box(mask: np.ndarray) -> BBox:
    ys, xs = np.nonzero(mask)
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def _snap(mask: np.ndarray, x: float, y: float) -> tuple[float, float]:
    """Keep ``(x, y)`` if its nearest pixel is in ``mask``, else move to the closest mask pixel."""
    h, w = mask.shape
    rx, ry = int(np.floor(x + 0.5)), int(np.floor(y + 0.5))
    if 0 <= rx < w and 0 <= ry < h and mask[ry, rx]:
        return (float(x), float(y))
    ys, xs = np.nonzero(mask)
    best = np.argmin((xs - x) ** 2 + (ys - y) ** 2)
    return (float(xs[best]), float(ys[best]))


def _parts_and_joints(mask: np.ndarray, box: BBox, t: int) -> tuple[np.ndarray, dict]:
    parts = np.zeros(mask.shape, dtype=np.uint8)
    joints = {}
    bands = partition_bands(box, 5)
    for i, band in enumerate(bands, start=1):
        band_mask = np.zeros_like(mask)
        band_mask[band.y0:band.y1, band.x0:band.x1] = True
        part = mask & band_mask
        parts[part] = i
        ys, xs = np.nonzero(part)
        if xs.size == 0:
            continue
        joints[PART_JOINTS[i - 1]] = _snap(part, xs.mean(), ys.mean())
        if i == 5:
            bottom = part.copy()
            bottom[: ys.max()] = False
            joints["ankle_mid"] = _snap(bottom, xs.mean(), float(ys.max()))
    return parts, joints


def _decoy_boxes(cfg: SynthConfig, count: int) -> list[BBox]:
    w = max(2, cfg.width // 8)
    h = max(2, cfg.height // 4)
    boxes = []
    for j in range(count):
        x0 = min(j * w, cfg.width - w)
        boxes.append(BBox(x0, cfg.height - h, x0 + w, cfg.height))
    return boxes


def render_sequence(cfg: SynthConfig | None = None) -> SynthScene:
    cfg = cfg or SynthConfig()
    frames, masks, boxes, part_maps, keypoints, detections = [], [], [], [], [], []
    for t in range(cfg.frames):
        mask = _figure_mask(cfg, t)
        if not mask.any():
            raise ContractError("figure covers no pixel")
        luma = _render_frame(cfg, t, mask)
        box = _tight_box(mask)
        parts, joints = _parts_and_joints(mask, box, t)
        frames.append(Frame(luma, index=t))
        masks.append(mask)
        boxes.append(box)
        part_maps.append(PartLabelMap(parts, k=5, frame_index=t))
        keypoints.append(Keypoints(t, joints))
        detections.append(Detection(t, box, 1.0))
        detections.extend(Detection(t, b, 0.5) for b in _decoy_boxes(cfg, cfg.extra_detections))
    flows = []
    for t in range(cfg.frames - 1):
        vec = np.zeros((cfg.height, cfg.width, 2))
        vec[masks[t]] = cfg.velocity
        flows.append(FlowField(vec))
    return SynthScene(cfg, frames, flows, masks, boxes, part_maps, keypoints, detections)


def load_synth_config(path) -> SynthConfig:
    values = parse_kv_file(path)
    return SynthConfig(**coerce_fields(SynthConfig, values, str(path)))


def format_synth_config(cfg: SynthConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(cfg))


def write_scene(scene: SynthScene, out_dir) -> None:
    """Emit frames, gt flow, part masks, detections and keypoints."""
    out = Path(out_dir)
    for frame in scene.frames:
        ingest.write_frame(frame, out / "frames" / f"frame_{frame.index:06d}.pgm")
    for t, field in enumerate(scene.flows):
        ingest.write_flow(field, out / "gt_flow" / f"flow_{t:06d}.flo")
    for parts in scene.part_masks:
        ingest.write_label_map(parts, out / "parts" / f"part_{parts.frame_index:06d}.pgm")
    ingest.write_detections(scene.detections, out / "detections.txt")
    ingest.write_keypoints(scene.keypoints, out / "keypoints.txt")
    ingest.atomic_write(out / "scene.cfg", format_synth_config(scene.config).encode("utf-8"))
