"""Per-iteration training energy of a fixed-point neural-network accelerator.

The chip is a two-dimensional array of MAC units fed by a main buffer and a
local buffer. A MAC at b bits of precision costs a * (b / n_max)**alpha
joules with alpha in (1, 2); one local-buffer access costs one MAC, one
main-buffer access costs two. Narrower words let the array share more
fetched operands, which shrinks local-buffer traffic by sqrt(b / (p * n_max))
for an array of p units. The per-output bookkeeping (batch norm, activation,
gradient, weight update) always runs at full precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

PICOJOULE = 1e-12


@dataclass(frozen=True)
class ChipProfile:
    """Energy constants of the processing chip. Energies in joules."""

    mac_energy_full: float
    exponent: float = 1.25
    array_size: int = 64
    n_max: int = 32

    def __post_init__(self):
        if self.mac_energy_full <= 0:
            raise ValueError("mac_energy_full must be positive")
        if not 1.0 < self.exponent < 2.0:
            raise ValueError("exponent must lie in (1, 2)")
        root = math.isqrt(int(self.array_size))
        if self.array_size < 1 or root * root != self.array_size:
            raise ValueError("array_size must be a positive perfect square")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")

    @classmethod
    def from_picojoules(cls, mac_energy_pj: float = 3.7, **kwargs) -> "ChipProfile":
        """Build a profile from a picojoule MAC cost (the usual datasheet unit)."""
        return cls(mac_energy_full=mac_energy_pj * PICOJOULE, **kwargs)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Joules spent in one local training iteration, split by cause."""

    e_compute: float
    e_weights: float
    e_activations: float

    @property
    def total(self) -> float:
        return self.e_compute + self.e_weights + self.e_activations

    def scaled(self, factor: float) -> "EnergyBreakdown":
        return EnergyBreakdown(self.e_compute * factor, self.e_weights * factor,
                               self.e_activations * factor)


def _check_precision(n, n_max) -> None:
    if not 1 <= n <= n_max:
        raise ValueError(f"precision {n} outside [1, {n_max}]")


def mac_energy(n, chip: ChipProfile) -> float:
    """Energy of one MAC at n bits. n may be fractional during line search."""
    _check_precision(n, chip.n_max)
    return chip.mac_energy_full * (n / chip.n_max) ** chip.exponent


def iteration_energy(n, arch, chip: ChipProfile) -> EnergyBreakdown:
    """Energy of one local training iteration at precision n.

    arch supplies the operation counts: n_mac MACs, n_weights stored weights
    and n_outputs intermediate outputs.
    """
    e_mac = mac_energy(n, chip)
    e_full = chip.mac_energy_full  # per-output ops stay at n_max
    e_main = 2.0 * e_mac
    sharing = math.sqrt(n / (chip.array_size * chip.n_max))
    local_fetch = e_mac * arch.n_mac * sharing

    e_compute = e_mac * arch.n_mac + 4.0 * arch.n_outputs * e_full
    e_weights = e_main * arch.n_weights + local_fetch
    e_activations = 2.0 * e_main * arch.n_outputs + local_fetch
    return EnergyBreakdown(e_compute, e_weights, e_activations)
