"""Dataset ingestion, model files, synthetic benchmarks and the command line."""

from .idx import load_idx
from .modelio import load_model, save_model
from .synth import exact_grid_fixture, synth_glyphs, synth_uniform_benchmark

__all__ = ["load_idx", "load_model", "save_model", "exact_grid_fixture", "synth_glyphs",
           "synth_uniform_benchmark"]
