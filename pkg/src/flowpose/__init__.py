"""Weak dense part supervision for human pose, mined from video motion.

Pipeline: dense optical flow between consecutive frames, a motion gate on
the fraction of moving pixels, mean-shift grouping of moving pixels into
blobs, pruning by a single person box, and horizontal part bands rendered
into a label map.
"""
from .config import GATE_HIGH, GATE_LOW, PART_COUNT, PipelineConfig
from .data import BBox, Detection, FlowField, Frame, Keypoints, PartLabelMap
from .flow import FlowParams, farneback_flow, flow_magnitude, motion_fraction, motion_gate
from .grouping import Blob, MeanShiftParams, extract_blobs, mean_shift_modes
from .supervise import generate_sample, partition_bands

__version__ = "0.1.0"

__all__ = [
    "BBox", "Blob", "Detection", "FlowField", "FlowParams", "Frame", "GATE_HIGH", "GATE_LOW",
    "Keypoints", "MeanShiftParams", "PART_COUNT", "PartLabelMap", "PipelineConfig",
    "extract_blobs", "farneback_flow", "flow_magnitude", "generate_sample", "mean_shift_modes",
    "motion_fraction", "motion_gate", "partition_bands",
]
