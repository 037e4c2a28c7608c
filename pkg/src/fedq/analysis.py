"""Convergence-rate bound, expected-energy objective, and the precision optimizer.

For an L-smooth, strongly convex loss trained with the diminishing step size
beta / (t + gamma), the expected optimality gap after T global rounds is
bounded by (L/2) * v / (T + gamma), where v aggregates gradient noise,
quantization error, local-step drift, and partial-participation variance.
Setting the bound equal to the target accuracy gives the round budget
T = L*v / (2*eps) - gamma, and the expected total energy at precision n is
that budget times the expected per-round uplink-plus-compute cost. The
optimizer minimizes this over the integer precision range, using a
golden-section line search on the continuous relaxation first and an
exhaustive integer scan (with common random numbers across n) as the
authoritative answer.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .chipenergy import ChipProfile, iteration_energy
from .qnn import NetworkArch
from .radio import RadioParams, achievable_rate, channel_gain, place_devices

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


class FeasibilityError(ValueError):
    """Learning parameters violate a constraint the round bound relies on."""


class ScheduleConditionWarning(UserWarning):
    """The smoothness/step-size premise fails; the bound is used heuristically."""


@dataclass(frozen=True)
class LearningParams:
    """Constants of the convergence bound and the training schedule.

    noise_std holds the per-device gradient-noise bounds (standard
    deviations); its squares enter the variance aggregate. The step size at
    global round t is lr_beta / (t + lr_gamma).
    """

    smoothness: float
    strong_convexity: float
    grad_bound: float
    noise_std: np.ndarray
    lr_beta: float
    lr_gamma: float
    accuracy_target: float
    local_steps: int
    cohort_size: int
    num_devices: int

    def __post_init__(self):
        noise = np.asarray(self.noise_std, dtype=float)
        if noise.ndim == 0:
            noise = np.full(self.num_devices, float(noise))
        object.__setattr__(self, "noise_std", noise)
        if noise.shape != (self.num_devices,):
            raise ValueError("noise_std must give one bound per device")

    def step_size(self, t: int) -> float:
        return self.lr_beta / (t + self.lr_gamma)


def feasibility_violations(params: LearningParams) -> list[str]:
    """Hard constraint violations, each as a readable inequality."""
    bad = []
    if params.smoothness <= 0:
        bad.append(f"smoothness > 0 (got {params.smoothness})")
    if params.strong_convexity <= 0:
        bad.append(f"strong_convexity > 0 (got {params.strong_convexity})")
    if params.lr_gamma <= 0:
        bad.append(f"lr_gamma > 0 (got {params.lr_gamma})")
    if params.strong_convexity > 0 and params.lr_beta * params.strong_convexity <= 1:
        bad.append(f"lr_beta > 1/strong_convexity "
                   f"({params.lr_beta} <= {1 / params.strong_convexity:g})")
    if params.accuracy_target <= 0:
        bad.append(f"accuracy_target > 0 (got {params.accuracy_target})")
    if params.local_steps < 1:
        bad.append(f"local_steps >= 1 (got {params.local_steps})")
    if not 1 <= params.cohort_size <= params.num_devices:
        bad.append(f"1 <= cohort_size <= num_devices "
                   f"(got {params.cohort_size} of {params.num_devices})")
    if params.grad_bound < 0:
        bad.append(f"grad_bound >= 0 (got {params.grad_bound})")
    if np.any(params.noise_std < 0):
        bad.append("noise_std >= 0")
    return bad


def schedule_condition_holds(params: LearningParams) -> bool:
    """Whether smoothness < 2*eta0 / (2*eta0**2 + 1) at the initial step size.

    The right-hand side never exceeds sqrt(2)/2, so the premise is
    unsatisfiable for smoothness >= 0.707 no matter the schedule.
    """
    eta0 = params.lr_beta / params.lr_gamma
    return params.smoothness < 2.0 * eta0 / (2.0 * eta0 ** 2 + 1.0)


def check_feasibility(params: LearningParams, strict_schedule: bool = False) -> None:
    """Raise FeasibilityError on hard violations; warn (or raise when strict)
    if the step-size premise of the bound fails at t = 0."""
    bad = feasibility_violations(params)
    if bad:
        raise FeasibilityError("infeasible learning parameters: " + "; ".join(bad))
    if not schedule_condition_holds(params):
        eta0 = params.lr_beta / params.lr_gamma
        message = (f"smoothness < 2*eta0/(2*eta0**2+1) fails at t=0 "
                   f"({params.smoothness} >= {2 * eta0 / (2 * eta0 ** 2 + 1):.4g}); "
                   f"the round bound is applied heuristically")
        if strict_schedule:
            raise FeasibilityError(message)
        warnings.warn(message, ScheduleConditionWarning, stacklevel=3)


def variance_term(params: LearningParams, n, dim: int) -> float:
    """Variance aggregate v at precision n for a dim-dimensional model.

    v = sum_k sigma_k^2 / N^2
      + (dim / 2**(2n)) * (1 + 2*I*G^2/K)
      + 4*(I-1)^2 * G^2
      + 4*(N-K) / (K*(N-1)) * I^2 * G^2

    Strictly decreasing in n and strictly increasing in dim. The last term
    is a structural zero under full participation (K == N).
    """
    n_dev, k, steps = params.num_devices, params.cohort_size, params.local_steps
    if n_dev < 2:
        raise ValueError("variance aggregate needs at least two devices")
    g2 = params.grad_bound ** 2
    noise = float(np.sum(np.square(params.noise_std))) / n_dev ** 2
    quant = dim * 4.0 ** (-n) * (1.0 + 2.0 * steps * g2 / k)
    drift = 4.0 * (steps - 1) ** 2 * g2
    sampling = 4.0 * (n_dev - k) / (k * (n_dev - 1)) * steps ** 2 * g2
    return noise + quant + drift + sampling


def rounds_to_accuracy(params: LearningParams, v: float,
                       strict_schedule: bool = False) -> float:
    """Global rounds needed for the gap bound to reach the accuracy target.

    Solves (L/2) * v / (T + gamma) = eps for T and floors the result at one
    round; T is returned as a real number because it only scales the energy
    objective.
    """
    check_feasibility(params, strict_schedule=strict_schedule)
    t = params.smoothness * v / (2.0 * params.accuracy_target) - params.lr_gamma
    return max(t, 1.0)


@dataclass(frozen=True)
class Scenario:
    """Everything the energy objective needs, bundled."""

    learning: LearningParams
    arch: NetworkArch
    chip: ChipProfile
    radio: RadioParams
    channel_samples: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.channel_samples < 1:
            raise ValueError("channel_samples must be at least 1")


@dataclass(frozen=True)
class ChannelProfile:
    """Monte-Carlo channel draws shared across precision levels.

    gains[s, k] is the power gain of device k in independent run s (fresh
    topology and fading per run). mean_inv_rate_sum caches
    sum_k mean_s 1/r(gains[s, k]), the only channel statistic the expected
    uplink energy needs.
    """

    gains: np.ndarray
    mean_inv_rate_sum: float


def sample_channel_profile(scenario: Scenario,
                           rng: np.random.Generator | None = None) -> ChannelProfile:
    """Draw channel_samples independent (topology, fading) realizations."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, 0xC5]))
    n_dev = scenario.learning.num_devices
    gains = np.empty((scenario.channel_samples, n_dev))
    for s in range(scenario.channel_samples):
        topology = place_devices(n_dev, scenario.radio, rng)
        gains[s] = channel_gain(topology.distances(), scenario.radio, rng)
    inv_rates = 1.0 / achievable_rate(gains, scenario.radio)
    return ChannelProfile(gains=gains,
                          mean_inv_rate_sum=float(inv_rates.mean(axis=0).sum()))


def per_round_energy(n, scenario: Scenario, profile: ChannelProfile) -> float:
    """Expected energy of one global round at precision n, in joules.

    Each of the K scheduled devices uploads arch.dim * n payload bits and
    runs local_steps training iterations; with uniform scheduling this
    averages to (K/N) * sum over devices of their per-round cost.
    """
    learn = scenario.learning
    uplink_sum = (scenario.radio.tx_power * scenario.arch.dim * n
                  * profile.mean_inv_rate_sum)
    compute_sum = (learn.num_devices * learn.local_steps
                   * iteration_energy(n, scenario.arch, scenario.chip).total)
    return learn.cohort_size / learn.num_devices * (uplink_sum + compute_sum)


def expected_total_energy(n, scenario: Scenario,
                          rng: np.random.Generator | None = None,
                          profile: ChannelProfile | None = None) -> float:
    """Expected energy to reach the accuracy target at precision n.

    n may be fractional (continuous relaxation used by the line search).
    Passing a profile pins the channel draws, which makes comparisons across
    n deterministic (common random numbers).
    """
    if not 1 <= n <= scenario.chip.n_max:
        raise ValueError(f"precision {n} outside [1, {scenario.chip.n_max}]")
    if profile is None:
        profile = sample_channel_profile(scenario, rng)
    v = variance_term(scenario.learning, n, scenario.arch.dim)
    rounds = rounds_to_accuracy(scenario.learning, v)
    return rounds * per_round_energy(n, scenario, profile)


def golden_section(f, lo: float, hi: float, tol: float = 1e-4,
                   max_iter: int = 200) -> float:
    """Minimizer of a unimodal function on [lo, hi] by golden-section search."""
    a, b = float(lo), float(hi)
    c = b - (b - a) / GOLDEN_RATIO
    d = a + (b - a) / GOLDEN_RATIO
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - (b - a) / GOLDEN_RATIO
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) / GOLDEN_RATIO
            fd = f(d)
    return (a + b) / 2.0


@dataclass(frozen=True)
class PrecisionSearch:
    """Result of the precision optimization.

    n_star comes from the exhaustive integer scan, which is always run and
    always authoritative; relaxed_n and rounded_n document what the
    golden-section path proposed.
    """

    n_star: int
    curve: tuple[tuple[int, float], ...]
    relaxed_n: float
    rounded_n: int

    @property
    def minimum(self) -> float:
        return dict(self.curve)[self.n_star]


def optimize_precision(scenario: Scenario,
                       rng: np.random.Generator | None = None,
                       profile: ChannelProfile | None = None) -> PrecisionSearch:
    """Find the integer precision minimizing the expected total energy.

    Primary path: golden-section search on the continuous relaxation over
    [1, n_max], rounded and compared against both integer neighbors. The
    objective is only observed to be single-dipped, not proven, so an
    exhaustive scan of all integer precisions (sharing the same channel
    draws) decides the final answer.
    """
    if profile is None:
        profile = sample_channel_profile(scenario, rng)
    n_max = scenario.chip.n_max

    def objective(x):
        return expected_total_energy(x, scenario, profile=profile)

    relaxed = golden_section(objective, 1.0, float(n_max))
    candidates = sorted({min(max(int(round(relaxed)) + shift, 1), n_max)
                         for shift in (-1, 0, 1)})
    rounded = min(candidates, key=objective)

    curve = tuple((k, objective(k)) for k in range(1, n_max + 1))
    n_star = min(curve, key=lambda item: item[1])[0]
    return PrecisionSearch(n_star=n_star, curve=curve, relaxed_n=relaxed,
                           rounded_n=rounded)


def with_accuracy(scenario: Scenario, accuracy_target: float) -> Scenario:
    """Scenario copy with a different accuracy target."""
    return replace(scenario, learning=replace(scenario.learning,
                                              accuracy_target=accuracy_target))


def with_local_steps(scenario: Scenario, local_steps: int) -> Scenario:
    """Scenario copy with a different number of local steps."""
    return replace(scenario, learning=replace(scenario.learning,
                                              local_steps=local_steps))
