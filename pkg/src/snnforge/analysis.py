"""Measured conversion error: accuracy gap, layer-wise discrepancies, shift sweeps, T scaling.

For weighted layer l with SNN average output a'_l and ANN activation a_l:

* activation mismatch  Δa'_l = a'_l - h_l(W_l a'_{l-1} + b_l)
  (ANN activation and unshifted bias applied to the SNN's own input)
* output error         Δa_l  = a'_l - a_l

Both are reported as means over samples of squared Euclidean norms.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .ann import AnnModel, evaluate_accuracy, forward_batch, passive_forward, weighted_preactivation
from .convert import CalibrationResult, ConversionConfig, convert
from .dataset import Dataset, require_nonempty
from .errors import ConfigurationError
from .layers import activate, is_weighted
from .parallel import map_chunks
from .snn import SnnModel, simulate_batch

FORMAT_VERSION = 1


@dataclass
class LayerError:
    layer: int
    activation_mismatch: float  # mean ||Δa'_l||^2
    output_error: float  # mean ||Δa_l||^2


@dataclass
class SweepPoint:
    delta: float
    objective: float
    snn_accuracy: float


@dataclass
class ScalingRow:
    T: int
    output_error: float
    estimate: float


@dataclass
class ScalingResult:
    rows: list[ScalingRow]
    slope: float | None  # least-squares slope of log(error) against log(T)


def _check_pair(ann: AnnModel, snn: SnnModel) -> None:
    if ann.input_shape != snn.input_shape or ann.num_weighted != len(snn.weighted_indices):
        raise ConfigurationError("ANN and SNN topologies do not match")
    for i, j in zip(ann.weighted_indices, snn.weighted_indices):
        if ann.layers[i].weight.shape != snn.layers[j].weight.shape:
            raise ConfigurationError(f"weighted layer shapes differ: {ann.layers[i].weight.shape} "
                                     f"vs {snn.layers[j].weight.shape}")


def _chunk_stats(ann: AnnModel, snn: SnnModel, X: np.ndarray, labels: np.ndarray, T: int):
    n = len(X)
    logits, acts = forward_batch(ann, X, record=True)
    trace = simulate_batch(snn, X, T)
    snn_pred = np.argmax(trace.scores.reshape(n, -1), axis=1)
    mismatch, output = [], []
    h = X
    l = 0
    for layer in ann.layers:
        if not is_weighted(layer):
            h = passive_forward(layer, h)
            continue
        a_snn = trace.psp_mean[l]
        expected = activate(weighted_preactivation(layer, h), layer.activation, layer.y_th)
        mismatch.append(float(np.sum((a_snn - expected).reshape(n, -1) ** 2)))
        output.append(float(np.sum((a_snn - acts[l]).reshape(n, -1) ** 2)))
        h = a_snn
        l += 1
    return {
        "ann_correct": int(np.sum(np.argmax(logits, axis=1) == labels)),
        "snn_correct": int(np.sum(snn_pred == labels)),
        "mismatch": mismatch,
        "output": output,
    }


def measure(ann: AnnModel, snn: SnnModel, dataset: Dataset, T: int, threads: int | None = None) -> dict:
    """One simulation pass: both accuracies and the per-layer error table."""
    require_nonempty(dataset)
    _check_pair(ann, snn)
    X, y = dataset.inputs, dataset.labels
    parts = map_chunks(lambda s: _chunk_stats(ann, snn, X[s], y[s], T), len(X), threads)
    n = len(X)
    L = ann.num_weighted
    mismatch = [sum(p["mismatch"][l] for p in parts) / n for l in range(L)]
    output = [sum(p["output"][l] for p in parts) / n for l in range(L)]
    return {
        "ann_accuracy": sum(p["ann_correct"] for p in parts) / n,
        "snn_accuracy": sum(p["snn_correct"] for p in parts) / n,
        "layers": [LayerError(l, mismatch[l], output[l]) for l in range(L)],
    }


def conversion_loss(ann: AnnModel, snn: SnnModel, dataset: Dataset, T: int,
                    threads: int | None = None) -> float:
    """ANN accuracy minus SNN accuracy at simulation length T."""
    m = measure(ann, snn, dataset, T, threads)
    return m["ann_accuracy"] - m["snn_accuracy"]


def layerwise_error(ann: AnnModel, snn: SnnModel, dataset: Dataset, T: int,
                    threads: int | None = None) -> list[LayerError]:
    return measure(ann, snn, dataset, T, threads)["layers"]


def with_absolute_shift(snn: SnnModel, delta: float, shift_output_layer: bool = False) -> SnnModel:
    out = snn.copy()
    windex = out.weighted_indices
    for i in windex:
        if i == windex[-1] and not shift_output_layer:
            continue
        out.layers[i].bias = out.layers[i].bias + delta
    return out


def shift_sweep(ann: AnnModel, calib: CalibrationResult, dataset: Dataset, T: int, grid,
                threads: int | None = None) -> list[SweepPoint]:
    """Objective and SNN accuracy for each absolute bias shift ``delta`` in ``grid``.

    The objective is the mean over weighted layers of the mean squared
    activation mismatch.  The output layer is never shifted.
    """
    grid = [float(d) for d in grid]
    if not grid:
        raise ConfigurationError("shift grid is empty")
    if any(not d >= 0 for d in grid):
        raise ConfigurationError("shift grid values must be >= 0")
    base = convert(ann, calib, ConversionConfig(T, shift_mode="none"))
    points = []
    for delta in grid:
        m = measure(ann, with_absolute_shift(base, delta), dataset, T, threads)
        objective = float(np.mean([e.activation_mismatch for e in m["layers"]]))
        points.append(SweepPoint(delta, objective, m["snn_accuracy"]))
    return points


def shift_grid(v_th: float, T: int, points: int = 33) -> list[float]:
    """``points`` evenly spaced shifts covering [0, v_th / T]."""
    return [float(d) for d in np.linspace(0.0, v_th / T, points)]


def error_estimate(L: int, v_th: float, T: int) -> float:
    """Approximate total conversion error L * v_th^2 / (4 T)."""
    if L < 1 or not v_th > 0 or T < 1:
        raise ConfigurationError(f"error_estimate needs positive arguments, got L={L}, v_th={v_th}, T={T}")
    return L * v_th ** 2 / (4 * T)


def network_estimate(snn: SnnModel, T: int) -> float:
    """Sum of the per-layer estimate over the layers that fire."""
    spiking = snn.v_th if snn.readout == "spike_count" else snn.v_th[:-1]
    return float(sum(error_estimate(1, v, T) for v in spiking))


def loglog_slope(T_list, values) -> float | None:
    pts = [(math.log(t), math.log(v)) for t, v in zip(T_list, values) if v > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def scaling_experiment(ann: AnnModel, calib: CalibrationResult, dataset: Dataset, T_list,
                       shift_mode: str = "half_vth_over_T", threads: int | None = None) -> ScalingResult:
    """Final-layer mean squared output error and the closed-form estimate for each T."""
    T_list = [int(t) for t in T_list]
    if not T_list or any(t < 1 for t in T_list):
        raise ConfigurationError(f"T_list must be non-empty with every T >= 1, got {T_list}")
    rows = []
    for T in T_list:
        snn = convert(ann, calib, ConversionConfig(T, shift_mode=shift_mode))
        layers = layerwise_error(ann, snn, dataset, T, threads)
        rows.append(ScalingRow(T, layers[-1].output_error, network_estimate(snn, T)))
    return ScalingResult(rows, loglog_slope(T_list, [r.output_error for r in rows]))


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

@dataclass
class ConversionReport:
    ann_accuracy: float
    snn_accuracy_by_T: dict[int, float]
    conversion_loss_by_T: dict[int, float]
    per_layer_error: dict[tuple[int, int], LayerError]
    estimate_by_T: dict[int, float]
    shift_sweep: list[SweepPoint] = field(default_factory=list)
    seed: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "seed": self.seed,
            "config": self.config,
            "ann_accuracy": self.ann_accuracy,
            "snn_accuracy_by_T": {str(t): v for t, v in self.snn_accuracy_by_T.items()},
            "conversion_loss_by_T": {str(t): v for t, v in self.conversion_loss_by_T.items()},
            "estimate_by_T": {str(t): v for t, v in self.estimate_by_T.items()},
            "per_layer_error": [
                {"T": t, "layer": l, "mean_sq_activation_mismatch": e.activation_mismatch,
                 "mean_sq_output_error": e.output_error}
                for (t, l), e in self.per_layer_error.items()
            ],
            "shift_sweep": [
                {"delta": p.delta, "objective": p.objective, "snn_accuracy": p.snn_accuracy}
                for p in self.shift_sweep
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_csv(self, layer_path, sweep_path=None) -> None:
        with open(layer_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T", "layer", "mean_sq_activation_mismatch", "mean_sq_output_error",
                        "snn_accuracy", "conversion_loss", "estimate"])
            for (t, l), e in self.per_layer_error.items():
                w.writerow([t, l, repr(e.activation_mismatch), repr(e.output_error),
                            repr(self.snn_accuracy_by_T[t]), repr(self.conversion_loss_by_T[t]),
                            repr(self.estimate_by_T[t])])
        if sweep_path is not None:
            write_sweep_csv(self.shift_sweep, sweep_path)


def write_sweep_csv(points: list[SweepPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "objective", "snn_accuracy"])
        for p in points:
            w.writerow([repr(p.delta), repr(p.objective), repr(p.snn_accuracy)])


def build_report(ann: AnnModel, snn: SnnModel, dataset: Dataset, T_list, seed: int = 0,
                 config: dict | None = None, sweep: list[SweepPoint] | None = None,
                 threads: int | None = None) -> ConversionReport:
    T_list = [int(t) for t in T_list]
    if not T_list or any(t < 1 for t in T_list):
        raise ConfigurationError(f"T list must be non-empty with every T >= 1, got {T_list}")
    ann_acc = evaluate_accuracy(ann, dataset, threads)
    snn_acc, loss, per_layer, est = {}, {}, {}, {}
    for T in T_list:
        m = measure(ann, snn, dataset, T, threads)
        snn_acc[T] = m["snn_accuracy"]
        loss[T] = ann_acc - snn_acc[T]
        for e in m["layers"]:
            per_layer[(T, e.layer)] = e
        est[T] = network_estimate(snn, T)
    return ConversionReport(ann_acc, snn_acc, loss, per_layer, est, list(sweep or []), seed, dict(config or {}))
