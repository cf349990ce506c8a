"""Labelled sample collections and their ``.npz`` serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError


@dataclass
class Dataset:
    inputs: np.ndarray  # (N, *sample_shape), float64
    labels: np.ndarray  # (N,), int64
    num_classes: int
    name: str = "unnamed"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or len(self.inputs) != len(self.labels):
            raise DataError(
                f"dataset {self.name!r}: {len(self.inputs)} inputs but {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(
                f"dataset {self.name!r}: labels must lie in [0, {self.num_classes}), "
                f"found range [{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return tuple(self.inputs.shape[1:])

    def subset(self, index) -> "Dataset":
        return Dataset(self.inputs[index], self.labels[index], self.num_classes,
                       self.name, dict(self.provenance))

    def subsample(self, n: int, seed: int) -> "Dataset":
        """Seeded draw of ``n`` samples without replacement (order preserved)."""
        if n >= len(self):
            return self
        idx = np.sort(np.random.default_rng(seed).choice(len(self), size=n, replace=False))
        out = self.subset(idx)
        out.provenance = {**self.provenance, "subsample": {"n": n, "seed": seed}}
        return out


def require_nonempty(dataset: Dataset) -> None:
    if len(dataset) == 0:
        raise DataError(f"dataset {dataset.name!r} is empty")


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "wb") as fh:
        np.savez(
            fh,
            inputs=dataset.inputs,
            labels=dataset.labels,
            num_classes=np.int64(dataset.num_classes),
            meta=np.array(json.dumps({"name": dataset.name, "provenance": dataset.provenance},
                                     sort_keys=True)),
        )


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"])) if "meta" in z else {}
            return Dataset(z["inputs"], z["labels"], int(z["num_classes"]),
                           meta.get("name", path.stem), meta.get("provenance", {}))
    except (KeyError, ValueError, OSError) as exc:
        if isinstance(exc, DataError):
            raise
        raise FormatError(f"{path}: not a readable dataset archive ({exc})") from exc
