"""Parcel scan-and-sort simulation, label codec, metrics and tracking."""

from .codec import crc8, decode, encode
from .core import (
    CLASSES,
    EventKind,
    Fragility,
    Nature,
    ObjectClass,
    ParcelInstance,
    ParcelLabel,
    ScanOutcome,
    SimEvent,
    Station,
    Verdict,
    validate_label,
    validate_log,
)
from .detectors import DetectorConfig, XrayChannelModel, default_channel, ir_scan, measure_weight, metal_scan, xray_classify
from .engine import Scenario, ScheduledParcel, SimReport, load_scenario, run
from .metrics import ClassReport, ConfusionMatrix, classification_report, from_pairs, reconstruct_matrix, render_report
from .rng import SplitMix64, prng_stream
from .sorter import BinConfig, SortBasis, assign_bin, drum_plan
from .tracking import Checkpoint, TrackingStore, TrackState, TrackStatus, replay

__version__ = "0.1.0"
