"""Hard-example selection for a second training round.

A consumer model's predicted label map is compared with the weak label map
the pipeline produced; the samples it disagrees with most are selected.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .data import PartLabelMap
from .errors import ContractError
from .ingest import atomic_write
from .supervise import SampleRecord


@dataclass
class MiningPool:
    records: list[SampleRecord] = field(default_factory=list)

    def __post_init__(self):
        for r in self.records:
            if r.error_score is None or not math.isfinite(r.error_score) or r.error_score < 0:
                raise ContractError(f"record {r.frame_index} needs a finite error_score >= 0")

    @property
    def pool_size(self) -> int:
        return len(self.records)


def score_samples(predicted: PartLabelMap, weak: PartLabelMap) -> float:
    """Disagreement rate over the union of the two maps' non-zero supports."""
    if predicted.labels.shape != weak.labels.shape:
        raise ContractError(f"label map shapes differ: {predicted.labels.shape} vs {weak.labels.shape}")
    if predicted.k != weak.k:
        raise ContractError(f"part counts differ: {predicted.k} vs {weak.k}")
    p, w = predicted.labels, weak.labels
    support = (p != 0) | (w != 0)
    n = int(support.sum())
    if n == 0:
        return 0.0
    return int(np.count_nonzero((p != w) & support)) / n


def _rank_key(record: SampleRecord):
    return (-record.error_score, record.frame_index, str(record.label_path))


def select_hard(pool: MiningPool, k: int) -> list[SampleRecord]:
    """Top-``k`` records by error score, ties to lower frame index then label path."""
    if k < 0:
        raise ContractError("k must be >= 0")
    return sorted(pool.records, key=_rank_key)[:k]


def format_mining_report(records: list[SampleRecord], selected: list[SampleRecord],
                         errors: dict[int, str] | None = None) -> str:
    """CSV ``frame_index,error_score,selected``; rows in frame order.

    Samples that could not be scored get an empty score and
    ``error:<reason>`` in the ``selected`` column.
    """
    chosen = {id(r) for r in selected}
    rows = [(r.frame_index, f"{r.error_score:.6f}", "1" if id(r) in chosen else "0") for r in records]
    rows += [(idx, "", f"error:{reason}") for idx, reason in (errors or {}).items()]
    rows.sort(key=lambda row: row[0])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame_index", "error_score", "selected"])
    writer.writerows(rows)
    return buf.getvalue()


def write_mining_report(records, selected, path, errors=None) -> None:
    atomic_write(path, format_mining_report(records, selected, errors).encode("utf-8"))
