"""Threshold-ReLU ANN training, ANN-to-SNN conversion and conversion-error analysis."""

from .ann import AnnModel, TrainConfig, ann_forward, build_ann, evaluate_accuracy, loss_and_grads, sgd_train
from .analysis import (
    ConversionReport, conversion_loss, error_estimate, layerwise_error, scaling_experiment, shift_sweep,
)
from .convert import CalibrationResult, ConversionConfig, calibrate, convert
from .dataset import Dataset
from .layers import AvgPool, Conv2d, Dense, Dropout, threshold_relu
from .snn import SimulationTrace, SnnModel, closed_form_activation, if_step, simulate, snn_readout

__version__ = "0.1.0"
