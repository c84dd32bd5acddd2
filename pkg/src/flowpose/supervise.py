"""Turn gated motion blobs and person boxes into dense part label maps.

Manifest format, one line per frame pair (``-`` marks an absent field)::

    frame_index image_path label_path x0 y0 x1 y1 status moving_fraction blob_count

``status`` is ``ok`` or a rejection reason. ``label_path`` is relative to the
manifest's directory. ``blob_count`` counts the person blobs that survived
pruning (0 when the pair was rejected before grouping).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ingest
from .config import PipelineConfig
from .data import BBox, Detection, Frame, PartLabelMap
from .errors import ContractError, FormatError
from .flow import farneback_flow, motion_fraction
from .grouping import Blob, extract_blobs, mean_shift_modes, moving_mask

OK = "ok"
GATE_LOW = "gate_low"
GATE_HIGH = "gate_high"
NO_PERSON = "no_person"
MULTI_PERSON = "multi_person"
NO_BLOBS = "no_blobs"
REASONS = (GATE_LOW, GATE_HIGH, NO_PERSON, MULTI_PERSON, NO_BLOBS)


@dataclass
class SampleRecord:
    frame_index: int
    image_path: Path
    label_path: Path
    detection: Detection
    moving_fraction: float
    blob_count: int
    error_score: float | None = None


@dataclass
class SampleOutcome:
    """Result of one frame pair: a record when ``status == "ok"``, else a reason."""

    frame_index: int
    status: str
    moving_fraction: float
    blob_count: int = 0
    detection: Detection | None = None
    record: SampleRecord | None = None
    label_map: PartLabelMap | None = None
    image_path: Path | None = None


def single_person_filter(dets: list[Detection]) -> Detection | None:
    if len({d.frame_index for d in dets}) > 1:
        raise ContractError("detections span more than one frame")
    return dets[0] if len(dets) == 1 else None


def filter_person_blobs(blobs: list[Blob], box: BBox, min_overlap: float = 0.5) -> list[Blob]:
    """Keep blobs with at least ``min_overlap`` of their pixels in ``box``, cropped to it."""
    if not 0.0 < min_overlap <= 1.0:
        raise ContractError("min_overlap must lie in (0, 1]")
    kept = []
    for blob in blobs:
        if blob.size == 0:
            continue
        inside = box.contains(blob.xs, blob.ys)
        if inside.sum() / blob.size >= min_overlap:
            kept.append(Blob(blob.id, blob.pixels[inside], blob.mode))
    return kept


def partition_bands(box: BBox, k: int = 5) -> list[BBox]:
    """Split ``box`` into ``k`` horizontal bands, taller ones on top."""
    if k < 1:
        raise ContractError("band count must be >= 1")
    if box.height < k:
        raise ContractError(f"box height {box.height} is smaller than band count {k}")
    base, extra = divmod(box.height, k)
    bands = []
    y = box.y0
    for i in range(k):
        h = base + (1 if i < extra else 0)
        bands.append(BBox(box.x0, y, box.x1, y + h))
        y += h
    return bands


def render_label_map(blobs: list[Blob], bands: list[BBox], height: int, width: int,
                     frame_index: int = 0) -> PartLabelMap:
    support = np.zeros((height, width), dtype=bool)
    for blob in blobs:
        support[blob.ys, blob.xs] = True
    labels = np.zeros((height, width), dtype=np.uint8)
    for part, band in enumerate(bands, start=1):
        window = (slice(max(band.y0, 0), min(band.y1, height)), slice(max(band.x0, 0), min(band.x1, width)))
        labels[window][support[window]] = part
    return PartLabelMap(labels, k=len(bands), frame_index=frame_index)


def label_path_for(out_dir, frame_index: int) -> Path:
    return Path(out_dir) / f"label_{frame_index:06d}.pgm"


def generate_sample(prev: Frame, next: Frame, dets: list[Detection], cfg: PipelineConfig | None = None,
                    out_dir=None, image_path=None) -> SampleOutcome:
    """Run the supervision pipeline on one consecutive frame pair.

    ``dets`` may hold detections of any frame; only those of ``prev`` count.
    When ``out_dir`` is given an accepted label map is written there.
    """
    cfg = cfg or PipelineConfig()
    index = prev.index
    field = farneback_flow(prev, next, cfg.flow)
    fraction = motion_fraction(field, cfg.eps)

    def reject(reason, detection=None, blob_count=0):
        return SampleOutcome(index, reason, fraction, blob_count, detection, image_path=image_path)

    if fraction <= cfg.gate_low:
        return reject(GATE_LOW)
    if fraction >= cfg.gate_high:
        return reject(GATE_HIGH)

    own = [d for d in dets if d.frame_index == index]
    person = single_person_filter(own)
    if person is None:
        return reject(MULTI_PERSON if own else NO_PERSON)
    box = person.bbox.clamp(prev.width, prev.height)
    if box.height < cfg.k:
        return reject(NO_BLOBS, person)

    mask = moving_mask(field, cfg.eps)
    blobs = extract_blobs(mean_shift_modes(field, mask, cfg.shift), cfg.shift)
    kept = filter_person_blobs(blobs, box, cfg.min_overlap)
    kept = [b for b in kept if b.size > 0]
    if not kept:
        return reject(NO_BLOBS, person)

    label_map = render_label_map(kept, partition_bands(box, cfg.k), prev.height, prev.width, index)
    label_path = None
    if out_dir is not None:
        label_path = label_path_for(out_dir, index)
        ingest.write_label_map(label_map, label_path)
    record = SampleRecord(index, image_path, label_path, person, fraction, len(kept))
    return SampleOutcome(index, OK, fraction, len(kept), person, record, label_map, image_path)


# --------------------------------------------------------------------------
# manifest


@dataclass
class ManifestRow:
    frame_index: int
    image_path: str
    label_path: str | None
    bbox: BBox | None
    status: str
    moving_fraction: float
    blob_count: int


def manifest_row(outcome: SampleOutcome) -> ManifestRow:
    label = None
    if outcome.record is not None and outcome.record.label_path is not None:
        label = Path(outcome.record.label_path).name
    bbox = outcome.detection.bbox if outcome.detection is not None else None
    image = str(outcome.image_path) if outcome.image_path is not None else "-"
    return ManifestRow(outcome.frame_index, image, label, bbox, outcome.status,
                       outcome.moving_fraction, outcome.blob_count)


def format_manifest(rows: list[ManifestRow]) -> str:
    lines = ["# frame_index image_path label_path x0 y0 x1 y1 status moving_fraction blob_count\n"]
    for r in rows:
        box = " ".join(str(v) for v in r.bbox.as_tuple()) if r.bbox else "- - - -"
        lines.append(f"{r.frame_index} {r.image_path} {r.label_path or '-'} {box} "
                     f"{r.status} {r.moving_fraction:.6f} {r.blob_count}\n")
    return "".join(lines)


def write_manifest(rows: list[ManifestRow], path) -> None:
    ingest.atomic_write(path, format_manifest(rows).encode("utf-8"))


def read_manifest(path) -> list[ManifestRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            if len(tokens) != 10:
                raise FormatError(f"{path}:{lineno}: expected 10 fields, found {len(tokens)}")
            try:
                bbox = None if tokens[3] == "-" else BBox(*(int(t) for t in tokens[3:7]))
                rows.append(ManifestRow(
                    frame_index=int(tokens[0]),
                    image_path=tokens[1],
                    label_path=None if tokens[2] == "-" else tokens[2],
                    bbox=bbox,
                    status=tokens[7],
                    moving_fraction=float(tokens[8]),
                    blob_count=int(tokens[9]),
                ))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if rows[-1].status not in (OK,) + REASONS:
                raise FormatError(f"{path}:{lineno}: unknown status {rows[-1].status!r}")
    return rows
