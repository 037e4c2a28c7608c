"""Dataset containers, matrix-file loading, and seeded synthetic generators."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .qnn import MiniBatch


@dataclass(frozen=True)
class Dataset:
    """A device shard: input rows plus labels (class ids or regression targets)."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        labels = np.asarray(self.labels)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        if inputs.shape[0] != labels.shape[0]:
            raise ValueError("inputs and labels disagree in length")

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


def sample_batch(dataset: Dataset, batch_size: int, rng: np.random.Generator) -> MiniBatch:
    """Uniform sampling with replacement, the usual SGD mini-batch model."""
    if dataset.size < 1:
        raise ValueError("cannot sample from an empty dataset")
    if batch_size < 1:
        raise ValueError("batch size must be positive")
    idx = rng.integers(0, dataset.size, size=batch_size)
    return MiniBatch(inputs=dataset.inputs[idx], labels=dataset.labels[idx])


def union(shards) -> Dataset:
    """Concatenate shards into one dataset (used for global loss evaluation)."""
    return Dataset(inputs=np.concatenate([s.inputs for s in shards]),
                   labels=np.concatenate([s.labels for s in shards]))


def save_dataset(dataset: Dataset, path) -> None:
    """Write a shard to .npz (binary) or .csv (labels in the last column)."""
    path = Path(path)
    if path.suffix == ".npz":
        np.savez(path, inputs=dataset.inputs, labels=dataset.labels)
    elif path.suffix == ".csv":
        matrix = np.column_stack([dataset.inputs, np.asarray(dataset.labels, dtype=float)])
        np.savetxt(path, matrix, delimiter=",")
    else:
        raise ValueError(f"unsupported dataset format {path.suffix!r}")


def load_dataset(path) -> Dataset:
    path = Path(path)
    if path.suffix == ".npz":
        blob = np.load(path)
        return Dataset(inputs=blob["inputs"], labels=blob["labels"])
    if path.suffix == ".csv":
        matrix = np.atleast_2d(np.loadtxt(path, delimiter=","))
        return Dataset(inputs=matrix[:, :-1], labels=matrix[:, -1])
    raise ValueError(f"unsupported dataset format {path.suffix!r}")


def synthetic_classification(num_devices: int, per_device: int, dim: int,
                             num_classes: int, rng: np.random.Generator,
                             spread: float = 0.25) -> list[Dataset]:
    """Gaussian-blob classification shards with inputs clipped into [-1, 1]."""
    centers = rng.uniform(-0.6, 0.6, size=(num_classes, dim))
    shards = []
    for _ in range(num_devices):
        labels = rng.integers(0, num_classes, size=per_device)
        inputs = centers[labels] + rng.normal(0.0, spread, size=(per_device, dim))
        shards.append(Dataset(inputs=np.clip(inputs, -1.0, 1.0), labels=labels))
    return shards


def synthetic_regression(num_devices: int, per_device: int, dim: int,
                         rng: np.random.Generator, weight_scale: float = 0.4,
                         input_scale: float = 1.0, noise_std: float = 0.05):
    """Linear-regression shards y = x @ w_true + noise with x in [-1, 1].

    The ground-truth weights stay well inside the unit box so that the
    projected optimum coincides with the unconstrained one. Returns
    (shards, w_true).
    """
    if input_scale <= 0 or input_scale > 1:
        raise ValueError("input_scale must lie in (0, 1]")
    w_true = rng.uniform(-weight_scale, weight_scale, size=dim)
    shards = []
    for _ in range(num_devices):
        x = rng.uniform(-input_scale, input_scale, size=(per_device, dim))
        y = x @ w_true + rng.normal(0.0, noise_std, size=per_device)
        shards.append(Dataset(inputs=x, labels=y))
    return shards, w_true
