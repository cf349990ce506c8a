"""Threshold balancing: per-layer thresholds from ANN activations, weight copy, bias shift."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ann import AnnModel, forward_batch
from .dataset import Dataset, require_nonempty
from .errors import ConfigurationError
from .layers import Dropout, is_weighted
from .parallel import map_chunks
from .snn import READOUTS, SnnModel

log = logging.getLogger(__name__)

SHIFT_MODES = ("none", "half_vth_over_T", "custom")
THRESHOLD_MODES = ("max", "percentile")
HIST_BINS = 64


@dataclass
class ConversionConfig:
    T: int
    shift_mode: str = "half_vth_over_T"
    shift_scale: float | None = None  # only for shift_mode="custom": bias += scale * v_th
    shift_output_layer: bool = False
    threshold_mode: str = "max"
    percentile: float | None = None
    readout: str = "accumulate_potential"

    def __post_init__(self):
        if isinstance(self.T, bool) or int(self.T) != self.T or self.T < 1:
            raise ConfigurationError(f"conversion needs T >= 1, got T={self.T}")
        self.T = int(self.T)
        if self.shift_mode not in SHIFT_MODES:
            raise ConfigurationError(f"shift_mode must be one of {SHIFT_MODES}, got {self.shift_mode!r}")
        if self.shift_mode == "custom":
            if self.shift_scale is None or not math.isfinite(self.shift_scale):
                raise ConfigurationError("custom shift needs a finite shift_scale")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigurationError(
                f"threshold_mode must be one of {THRESHOLD_MODES}, got {self.threshold_mode!r}"
            )
        if self.threshold_mode == "percentile":
            _check_percentile(self.percentile)
        if self.readout not in READOUTS:
            raise ConfigurationError(f"readout must be one of {READOUTS}, got {self.readout!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_percentile(p):
    if p is None or not 0 < p <= 1:
        raise ConfigurationError(f"percentile p must lie in (0, 1], got {p}")


@dataclass
class CalibrationResult:
    v_th_per_layer: list[float]
    sample_count: int
    histograms: list[np.ndarray]  # HIST_BINS counts per layer over [0, v_th]
    threshold_mode: str = "max"
    percentile: float | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.v_th_per_layer = [float(v) for v in self.v_th_per_layer]
        if any(not v > 0 for v in self.v_th_per_layer):
            raise ConfigurationError(f"calibrated thresholds must be > 0, got {self.v_th_per_layer}")

    def to_dict(self) -> dict:
        return {
            "v_th_per_layer": self.v_th_per_layer,
            "sample_count": self.sample_count,
            "threshold_mode": self.threshold_mode,
            "percentile": self.percentile,
            "histogram_bins": HIST_BINS,
            "histograms": [h.astype(int).tolist() for h in self.histograms],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        return cls(
            v_th_per_layer=d["v_th_per_layer"],
            sample_count=int(d["sample_count"]),
            histograms=[np.asarray(h, dtype=np.int64) for h in d.get("histograms", [])],
            threshold_mode=d.get("threshold_mode", "max"),
            percentile=d.get("percentile"),
            warnings=list(d.get("warnings", [])),
        )


def calibrate(model: AnnModel, calibration_set: Dataset, threshold_mode: str = "max",
              percentile: float | None = None, threads: int | None = None) -> CalibrationResult:
    """Per-layer threshold voltages from the recorded ANN activations.

    ``max`` takes the largest activation of each weighted layer over all
    samples and neurons.  ``percentile`` pools the same values and takes the
    ceil(p N)-th smallest.  A layer whose threshold comes out <= 0 never
    activated; it falls back to 1.0 and a warning is recorded.
    """
    require_nonempty(calibration_set)
    if threshold_mode not in THRESHOLD_MODES:
        raise ConfigurationError(f"threshold_mode must be one of {THRESHOLD_MODES}, got {threshold_mode!r}")
    if threshold_mode == "percentile":
        _check_percentile(percentile)
    X = calibration_set.inputs
    L = model.num_weighted

    def record(s):
        return forward_batch(model, X[s], record=True)[1]

    chunks = map_chunks(record, len(X), threads)
    if threshold_mode == "max":
        thresholds = [max(float(c[l].max()) for c in chunks) for l in range(L)]
    else:
        thresholds = []
        for l in range(L):
            pooled = np.concatenate([c[l].ravel() for c in chunks])
            k = math.ceil(percentile * pooled.size)
            thresholds.append(float(np.partition(pooled, k - 1)[k - 1]))

    notes = []
    for l, v in enumerate(thresholds):
        if not v > 0:
            msg = f"layer {l} never activated on the calibration set (threshold {v}); using v_th = 1.0"
            log.warning(msg)
            notes.append(msg)
            thresholds[l] = 1.0

    hists = []
    for l in range(L):
        h = np.zeros(HIST_BINS, dtype=np.int64)
        for c in chunks:
            h += np.histogram(c[l], bins=HIST_BINS, range=(0.0, thresholds[l]))[0]
        hists.append(h)
    return CalibrationResult(thresholds, len(X), hists, threshold_mode,
                             percentile if threshold_mode == "percentile" else None, notes)


def shift_amounts(v_th: list[float], cfg: ConversionConfig) -> list[float]:
    """Bias offset added to each weighted layer under ``cfg``."""
    out = []
    for l, v in enumerate(v_th):
        if l == len(v_th) - 1 and not cfg.shift_output_layer:
            out.append(0.0)
        elif cfg.shift_mode == "half_vth_over_T":
            out.append(v / (2 * cfg.T))
        elif cfg.shift_mode == "custom":
            out.append(cfg.shift_scale * v)
        else:
            out.append(0.0)
    return out


def convert(model: AnnModel, calib: CalibrationResult, cfg: ConversionConfig) -> SnnModel:
    """Copy weights, attach calibrated thresholds and fold the shift into the biases.

    The output layer is not shifted unless ``cfg.shift_output_layer``;
    dropout layers are dropped.
    """
    if len(calib.v_th_per_layer) != model.num_weighted:
        raise ConfigurationError(
            f"calibration has {len(calib.v_th_per_layer)} thresholds but the model "
            f"has {model.num_weighted} weighted layers"
        )
    shifts = iter(shift_amounts(calib.v_th_per_layer, cfg))
    thresholds = iter(calib.v_th_per_layer)
    layers = []
    for layer in model.layers:
        if isinstance(layer, Dropout):
            continue
        if is_weighted(layer):
            new = copy.deepcopy(layer)
            new.bias = layer.bias + next(shifts)
            new.v_th = next(thresholds)
            layers.append(new)
        else:
            layers.append(copy.copy(layer))
    return SnnModel(layers, model.input_shape, cfg.readout)
