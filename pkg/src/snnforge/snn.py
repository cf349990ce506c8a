"""Integrate-and-fire simulation with soft reset.

Every weighted layer but the last is a population of IF neurons.  At each
timestep a neuron adds its drive (kernel applied to the incoming spikes,
plus the bias) to its membrane potential; once the potential reaches
``v_th`` it emits a spike of height ``v_th`` and subtracts ``v_th``.  The
raw input is injected as a constant current into the first weighted layer.
The last weighted layer either integrates without firing
(``accumulate_potential``) or fires like the others (``spike_count``).
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .ann import passive_forward, weighted_preactivation
from .dataset import require_nonempty
from .errors import ConfigurationError, DimensionError
from .layers import infer_shapes, is_weighted
from .parallel import map_chunks

READOUTS = ("accumulate_potential", "spike_count")

# Relative firing tolerance: a potential within FIRE_TOL * v_th below the
# threshold fires.  Mirrors SNAP_TOL in the closed form so grid-aligned drive
# is not lost to accumulated rounding.
FIRE_TOL = 1e-9
SNAP_TOL = 1e-9


@dataclass
class SnnModel:
    layers: list
    input_shape: tuple[int, ...]
    readout: str = "accumulate_potential"

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if self.readout not in READOUTS:
            raise ConfigurationError(f"readout must be one of {READOUTS}, got {self.readout!r}")
        self.shapes = infer_shapes(self.layers, self.input_shape)
        weighted = [layer for layer in self.layers if is_weighted(layer)]
        if not weighted:
            raise ConfigurationError("an SNN needs at least one weighted layer")
        for layer in weighted:
            if layer.v_th is None or not (layer.v_th > 0 and math.isfinite(layer.v_th)):
                raise ConfigurationError(f"every weighted SNN layer needs v_th > 0, got {layer.v_th}")

    @property
    def weighted_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if is_weighted(layer)]

    @property
    def v_th(self) -> list[float]:
        return [self.layers[i].v_th for i in self.weighted_indices]

    def copy(self) -> "SnnModel":
        return copy.deepcopy(self)


@dataclass
class SimulationTrace:
    """Per-weighted-layer record of one simulation (leading sample axis when batched).

    ``spikes[l]`` has shape (T, ...) with entries exactly 0 or ``v_th[l]``
    (``None`` unless spikes were recorded).  ``psp_mean[l]`` is the
    time-averaged output of layer ``l``; for an accumulating output layer it
    is the accumulated potential divided by T.
    """

    T: int
    readout: str
    v_th: list
    spike_counts: list
    v_final: list
    drive_sum: list
    psp_mean: list
    spikes: list | None = None

    @property
    def scores(self) -> np.ndarray:
        return self.psp_mean[-1]


def _fires(temp, v_th):
    return temp >= v_th - FIRE_TOL * v_th


def _rate(count, v_th, T):
    return count * v_th / T


def if_step(v: float, drive: float, v_th: float) -> tuple[float, float]:
    """One soft-reset integrate-and-fire update: returns ``(v_next, spike)``."""
    temp = v + drive
    if _fires(temp, v_th):
        return temp - v_th, float(v_th)
    return temp, 0.0


def closed_form_activation(z, v_th: float, T: int):
    """Average output of an IF neuron held at constant drive ``z`` for T steps.

    ``(v_th / T) * clip(floor(z T / v_th), 0, T)``, where ``z T / v_th`` is
    first snapped to the nearest integer when within 1e-9 of it.  Accepts
    scalars or arrays.
    """
    q = np.asarray(z, dtype=np.float64) * T / v_th
    r = np.round(q)
    q = np.where(np.abs(q - r) <= SNAP_TOL, r, q)
    n = np.clip(np.floor(q), 0, T)
    out = _rate(n, v_th, T)
    return float(out) if out.ndim == 0 else out


def _check_T(T) -> int:
    if int(T) != T or T < 1:
        raise ConfigurationError(f"simulation length must satisfy T >= 1, got {T}")
    return int(T)


def simulate_batch(model: SnnModel, X, T: int, record_spikes: bool = False) -> SimulationTrace:
    """Simulate every row of ``X`` for T steps from zero membrane potential."""
    T = _check_T(T)
    X = nx.as_tensor(X)
    if tuple(X.shape[1:]) != model.input_shape:
        raise DimensionError(f"input shape {tuple(X.shape[1:])} does not match model input {model.input_shape}")
    n = len(X)
    windex = model.weighted_indices
    last = windex[-1]
    accumulate = model.readout == "accumulate_potential"

    state = {i: np.zeros((n,) + model.shapes[i]) for i in windex}
    drive_sum = {i: np.zeros((n,) + model.shapes[i]) for i in windex}
    counts = {i: np.zeros((n,) + model.shapes[i], dtype=np.int64) for i in windex}
    history = {i: np.zeros((T, n) + model.shapes[i]) for i in windex} if record_spikes else None

    # The raw input is a constant current, so everything up to and including
    # the first weighted layer's drive is the same at every step.
    first = windex[0]
    h = X
    for layer in model.layers[:first]:
        h = passive_forward(layer, h)
    first_drive = weighted_preactivation(model.layers[first], h)

    for t in range(T):
        h = None
        for i, layer in enumerate(model.layers):
            if i < first:
                continue
            if not is_weighted(layer):
                h = passive_forward(layer, h)
                continue
            drive = first_drive if i == first else weighted_preactivation(layer, h)
            drive_sum[i] += drive
            temp = state[i] + drive
            if i == last and accumulate:
                state[i] = temp
                continue
            fired = _fires(temp, layer.v_th)
            theta = np.where(fired, layer.v_th, 0.0)
            state[i] = temp - theta
            counts[i] += fired
            if record_spikes:
                history[i][t] = theta
            h = theta

    psp = []
    for i in windex:
        if i == last and accumulate:
            psp.append(state[i] / T)
        else:
            psp.append(_rate(counts[i], model.layers[i].v_th, T))
    return SimulationTrace(
        T=T,
        readout=model.readout,
        v_th=model.v_th,
        spike_counts=[counts[i] for i in windex],
        v_final=[state[i] for i in windex],
        drive_sum=[drive_sum[i] for i in windex],
        psp_mean=psp,
        spikes=[np.moveaxis(history[i], 0, 1) for i in windex] if record_spikes else None,
    )


def simulate(model: SnnModel, x, T: int) -> SimulationTrace:
    """Simulate a single input, recording every spike."""
    tr = simulate_batch(model, nx.as_tensor(x)[None], T, record_spikes=True)
    return SimulationTrace(
        tr.T, tr.readout, tr.v_th,
        *([a[0] for a in arrs] for arrs in (tr.spike_counts, tr.v_final, tr.drive_sum, tr.psp_mean, tr.spikes)),
    )


def snn_readout(trace: SimulationTrace, mode: str | None = None):
    """Class scores and predicted class of a single-input trace.

    ``accumulate_potential`` scores are the final-layer potential over T;
    ``spike_count`` scores are the final-layer average PSP.  Ties go to the
    lowest class index.
    """
    mode = mode or trace.readout
    if mode not in READOUTS:
        raise ConfigurationError(f"readout must be one of {READOUTS}, got {mode!r}")
    if mode == "accumulate_potential":
        scores = np.ravel(trace.v_final[-1]) / trace.T
    else:
        scores = np.ravel(trace.psp_mean[-1])
    return scores, int(np.argmax(scores))


def snn_scores(model: SnnModel, X, T: int, threads: int | None = None) -> np.ndarray:
    X = nx.as_tensor(X)
    parts = map_chunks(lambda s: simulate_batch(model, X[s], T).scores.reshape(s.stop - s.start, -1),
                       len(X), threads)
    return np.concatenate(parts)


def snn_predict(model: SnnModel, X, T: int, threads: int | None = None) -> np.ndarray:
    return np.argmax(snn_scores(model, X, T, threads), axis=1)


def snn_accuracy(model: SnnModel, dataset, T: int, threads: int | None = None) -> float:
    require_nonempty(dataset)
    return int(np.sum(snn_predict(model, dataset.inputs, T, threads) == dataset.labels)) / len(dataset)
