"""Centroid evaluation of part label maps against ground-truth joints.

Each part's location is the mean of its pixel coordinates, with pixel
``(col, row)`` contributing the integer point ``(col, row)``. Both knees and
ankles are scored against the last part's single centroid.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .data import JOINT_NAMES, Keypoints, PartLabelMap
from .errors import ContractError, ParseError
from .ingest import atomic_write

DEFAULT_MAPPING = {
    1: ("face",),
    2: ("shoulder_mid",),
    3: ("belly",),
    4: ("hip_mid",),
    5: ("knee_mid", "ankle_mid"),
}


@dataclass(frozen=True)
class PartJointMapping:
    entries: dict = field(default_factory=lambda: dict(DEFAULT_MAPPING))

    def __post_init__(self):
        seen = set()
        for part, joints in self.entries.items():
            if part < 1:
                raise ContractError(f"part ids start at 1, got {part}")
            for joint in joints:
                if joint not in JOINT_NAMES:
                    raise ContractError(f"unknown joint name {joint!r}")
                if joint in seen:
                    raise ContractError(f"joint {joint!r} mapped to more than one part")
                seen.add(joint)

    def pairs(self) -> list[tuple[int, str]]:
        return [(part, joint) for part in sorted(self.entries) for joint in self.entries[part]]

    @classmethod
    def parse(cls, text: str) -> "PartJointMapping":
        """Read ``"1:face,2:shoulder_mid,5:knee_mid+ankle_mid"``."""
        entries = {}
        for item in filter(None, (t.strip() for t in text.split(","))):
            part, sep, joints = item.partition(":")
            if not sep:
                raise ParseError(f"mapping entry {item!r} lacks ':'")
            try:
                entries[int(part)] = tuple(j for j in joints.split("+") if j)
            except ValueError:
                raise ParseError(f"mapping entry {item!r} has a non-integer part") from None
        return cls(entries)


@dataclass
class EvalRecord:
    frame_index: int
    distances: dict[tuple[int, str], float | None]


@dataclass(frozen=True)
class ReportRow:
    part: int
    joint: str
    mean_distance: float | None
    count: int


def part_centroid(label_map: PartLabelMap, part: int) -> tuple[float, float] | None:
    if not 1 <= part <= label_map.k:
        raise ContractError(f"part {part} outside 1..{label_map.k}")
    ys, xs = np.nonzero(label_map.labels == part)
    if xs.size == 0:
        return None
    return (float(xs.mean()), float(ys.mean()))


def centroid_distance(c: tuple[float, float], joint: tuple[float, float]) -> float:
    return math.hypot(c[0] - joint[0], c[1] - joint[1])


def evaluate_map(label_map: PartLabelMap, keypoints: Keypoints,
                 mapping: PartJointMapping | None = None) -> EvalRecord:
    mapping = mapping or PartJointMapping()
    distances = {}
    for part, joint in mapping.pairs():
        c = part_centroid(label_map, part) if part <= label_map.k else None
        j = keypoints.joints.get(joint)
        distances[(part, joint)] = None if c is None or j is None else centroid_distance(c, j)
    return EvalRecord(label_map.frame_index, distances)


def aggregate_report(records: list[EvalRecord], mapping: PartJointMapping | None = None) -> list[ReportRow]:
    """Mean distance per (part, joint) over records where both ends exist."""
    mapping = mapping or PartJointMapping()
    ordered = sorted(records, key=lambda r: r.frame_index)
    rows = []
    for pair in mapping.pairs():
        values = [r.distances.get(pair) for r in ordered]
        values = [v for v in values if v is not None]
        mean = math.fsum(values) / len(values) if values else None
        rows.append(ReportRow(pair[0], pair[1], mean, len(values)))
    return rows


def format_report(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["part", "joint", "mean_distance_px", "count"])
    for r in rows:
        mean = "NA" if r.mean_distance is None else f"{r.mean_distance:.6f}"
        writer.writerow([r.part, r.joint, mean, r.count])
    return buf.getvalue()


def parse_report(text: str) -> list[ReportRow]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        ReportRow(int(r["part"]), r["joint"],
                  None if r["mean_distance_px"] == "NA" else float(r["mean_distance_px"]), int(r["count"]))
        for r in reader
    ]


def write_report(rows: list[ReportRow], path) -> None:
    atomic_write(path, format_report(rows).encode("utf-8"))
