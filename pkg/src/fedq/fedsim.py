"""Executable federated averaging with quantized updates and an energy ledger.

Each global round samples a cohort of devices, hands them the current global
model, lets each run a fixed number of local SGD steps at the configured
precision, and averages their quantized model updates into the next global
model. Uplink energy is metered per upload from that round's channel draw;
compute energy is metered per participating device from the chip model.
Unscheduled devices neither train nor spend energy.

Every random draw comes from a stream keyed by (seed, role, round, device),
so a run is reproducible bit for bit no matter how device training is
scheduled across threads.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import qnn
from .analysis import Scenario
from .chipenergy import iteration_energy
from .data import Dataset, union
from .quantizer import clip_unit, quantize_array
from .radio import Topology, achievable_rate, channel_gain, uplink_energy

# Stream roles for keyed random generators.
INIT_STREAM = 0
SAMPLE_STREAM = 1
RESYNC_STREAM = 2
TRAIN_STREAM = 3
TX_STREAM = 4
CHANNEL_STREAM = 5


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator keyed by (seed, *path); order-insensitive to use."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def sample_devices(num_devices: int, cohort_size: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of device ids without replacement, sorted for stable iteration."""
    if not 1 <= cohort_size <= num_devices:
        raise ValueError(f"cohort size {cohort_size} outside [1, {num_devices}]")
    return np.sort(rng.choice(num_devices, size=cohort_size, replace=False))


def learning_rate(t: int, beta: float, gamma: float) -> float:
    """Diminishing step size beta / (t + gamma) for global round t >= 0."""
    if beta <= 0 or gamma <= 0 or t < 0:
        raise ValueError("learning_rate needs beta > 0, gamma > 0, t >= 0")
    return beta / (t + gamma)


@dataclass
class DeviceContext:
    """One device: its shard, its position in the cell, and its model buffer."""

    device_id: int
    shard: Dataset
    position: np.ndarray
    model: qnn.ModelState | None = None

    @property
    def shard_size(self) -> int:
        return self.shard.size


def build_devices(shards, topology: Topology) -> list[DeviceContext]:
    if len(shards) != topology.device_positions.shape[0]:
        raise ValueError("one position per shard required")
    return [DeviceContext(device_id=i, shard=shard,
                          position=topology.device_positions[i])
            for i, shard in enumerate(shards)]


@dataclass(frozen=True)
class StopRule:
    """Stop after max_rounds, on reaching loss_target, or whichever comes first."""

    max_rounds: int | None = None
    loss_target: float | None = None

    def __post_init__(self):
        if self.max_rounds is None and self.loss_target is None:
            raise ValueError("stop rule needs max_rounds or loss_target")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    device_ids: tuple[int, ...]
    global_loss: float
    uplink_j: float
    compute_j: float


@dataclass
class RunRecord:
    """Per-round log plus totals of a federated run."""

    rounds: list[RoundRecord] = field(default_factory=list)
    seed: int = 0
    config_echo: dict = field(default_factory=dict)

    @property
    def final_round(self) -> int:
        return self.rounds[-1].round_index if self.rounds else -1

    @property
    def total_uplink_j(self) -> float:
        return sum(r.uplink_j for r in self.rounds)

    @property
    def total_compute_j(self) -> float:
        return sum(r.compute_j for r in self.rounds)

    @property
    def total_j(self) -> float:
        return self.total_uplink_j + self.total_compute_j

    @property
    def final_loss(self) -> float:
        return self.rounds[-1].global_loss if self.rounds else float("nan")

    def losses(self) -> np.ndarray:
        return np.array([r.global_loss for r in self.rounds])

    def to_csv(self, path) -> None:
        """One row per round; device ids joined with ';'."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["round", "device_ids", "global_loss",
                             "uplink_j", "compute_j"])
            for r in self.rounds:
                writer.writerow([r.round_index,
                                 ";".join(str(i) for i in r.device_ids),
                                 repr(r.global_loss), repr(r.uplink_j),
                                 repr(r.compute_j)])

    def summary(self) -> dict:
        return {"seed": self.seed, "rounds_run": len(self.rounds),
                "final_round": self.final_round, "final_loss": self.final_loss,
                "total_uplink_j": self.total_uplink_j,
                "total_compute_j": self.total_compute_j,
                "total_j": self.total_j, "config": self.config_echo}

    def to_json(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.summary(), handle, indent=2, sort_keys=True)


class DivergenceError(RuntimeError):
    """Global loss became non-finite; carries the partial run record."""

    def __init__(self, message: str, record: RunRecord):
        super().__init__(message)
        self.record = record


@dataclass
class FederatedConfig:
    """Simulation settings on top of an analytic scenario.

    delta_mode decides how a raw update in [-2, 2] is squeezed into the
    quantizer domain: "clip" projects it onto [-1, 1]; "scale" transmits the
    quantized half-update and doubles it at the server (unbiased, twice the
    step noise). gain_sampler, when given, replaces the fading model with
    (round, device_id, distance, rng) -> gain; workers > 1 trains scheduled
    devices in a thread pool without changing any result.
    """

    scenario: Scenario
    layers: tuple[qnn.LayerSpec, ...]
    loss_kind: str = "cross_entropy"
    batch_size: int = 10
    delta_mode: str = "clip"
    lr_override: float | None = None
    weight_scale: float = 0.5
    workers: int = 1
    gain_sampler: Callable | None = None

    def __post_init__(self):
        if self.delta_mode not in ("clip", "scale"):
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


def run_federated(config: FederatedConfig, devices: list[DeviceContext],
                  n_bits: int, stop: StopRule, seed: int) -> RunRecord:
    """Run federated averaging and meter its energy.

    Returns the per-round record; raises DivergenceError (carrying the
    partial record) if the global loss stops being finite.
    """
    scen = config.scenario
    learn = scen.learning
    n_dev, cohort, steps = learn.num_devices, learn.cohort_size, learn.local_steps
    if len(devices) != n_dev:
        raise ValueError(f"{len(devices)} devices supplied, scenario expects {n_dev}")
    if any(dev.shard.size < 1 for dev in devices):
        raise ValueError("every device needs a non-empty shard")

    global_model = qnn.init_model(config.layers, n_bits,
                                  substream(seed, INIT_STREAM),
                                  loss=config.loss_kind,
                                  weight_scale=config.weight_scale,
                                  n_max=scen.chip.n_max)
    w_global = qnn.flatten_parameters(global_model)
    dim = w_global.size
    if scen.arch.dim != dim:
        raise ValueError(f"scenario arch.dim {scen.arch.dim} does not match the "
                         f"model dimension {dim}")
    for dev in devices:
        dev.model = qnn.init_model(config.layers, n_bits,
                                   substream(seed, INIT_STREAM, dev.device_id),
                                   loss=config.loss_kind, n_max=scen.chip.n_max)

    eval_set = union([dev.shard for dev in devices])
    eval_batch = qnn.MiniBatch(inputs=eval_set.inputs, labels=eval_set.labels)
    compute_per_device = steps * iteration_energy(n_bits, scen.arch, scen.chip).total
    distances = np.array([np.hypot(*(dev.position - np.array([scen.radio.area_side / 2.0,
                                                              scen.radio.area_side / 2.0])))
                          for dev in devices])

    def train_one(t: int, device_id: int, w_start: np.ndarray):
        dev = devices[device_id]
        qnn.assign_parameters(dev.model, w_start,
                              substream(seed, RESYNC_STREAM, t, device_id))
        eta = (config.lr_override if config.lr_override is not None
               else learning_rate(t, learn.lr_beta, learn.lr_gamma))
        _, delta = qnn.local_round(dev.model, dev.shard, steps, eta,
                                   substream(seed, TRAIN_STREAM, t, device_id),
                                   batch_size=config.batch_size)
        tx_rng = substream(seed, TX_STREAM, t, device_id)
        if config.delta_mode == "clip":
            payload = quantize_array(clip_unit(delta), n_bits,
                                     tx_rng, scen.chip.n_max)
        else:
            payload = 2.0 * quantize_array(delta / 2.0, n_bits,
                                           tx_rng, scen.chip.n_max)
        chan_rng = substream(seed, CHANNEL_STREAM, t, device_id)
        if config.gain_sampler is not None:
            gain = config.gain_sampler(t, device_id, distances[device_id], chan_rng)
        else:
            gain = channel_gain(distances[device_id], scen.radio, chan_rng)
        rate = achievable_rate(gain, scen.radio)
        _, energy = uplink_energy(dim, n_bits, rate, scen.radio, scen.chip.n_max)
        return payload, energy

    record = RunRecord(seed=seed, config_echo={
        "n_bits": n_bits, "num_devices": n_dev, "cohort_size": cohort,
        "local_steps": steps, "batch_size": config.batch_size,
        "delta_mode": config.delta_mode, "loss": config.loss_kind,
        "workers": config.workers,
    })

    t = 0
    while True:
        if stop.max_rounds is not None and t >= stop.max_rounds:
            break
        ids = sample_devices(n_dev, cohort, substream(seed, SAMPLE_STREAM, t))
        w_start = w_global.copy()
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(lambda k: train_one(t, int(k), w_start), ids))
        else:
            results = [train_one(t, int(k), w_start) for k in ids]

        mean_delta = np.mean([payload for payload, _ in results], axis=0)
        # The average of per-device end states is a convex combination inside
        # [-1, 1]; quantization noise can push it out by at most one step.
        w_global = np.clip(w_global + mean_delta, -1.0, 1.0)

        qnn.assign_parameters(global_model, w_global)
        _, global_loss = qnn.forward(global_model, eval_batch, quantized=False)
        uplink_round = float(sum(energy for _, energy in results))
        compute_round = cohort * compute_per_device
        record.rounds.append(RoundRecord(
            round_index=t, device_ids=tuple(int(k) for k in ids),
            global_loss=global_loss, uplink_j=uplink_round,
            compute_j=compute_round))
        if not np.isfinite(global_loss):
            raise DivergenceError(f"global loss diverged at round {t}", record)
        t += 1
        if stop.loss_target is not None and global_loss <= stop.loss_target:
            break
    return record
