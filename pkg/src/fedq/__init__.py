"""Energy-aware quantized federated learning.

Trains small quantized networks under federated averaging with quantized
uplink updates, meters computation and transmission energy, and finds the
precision level that minimizes expected total energy under a convergence
target.
"""

from .analysis import (ChannelProfile, FeasibilityError, LearningParams,
                       PrecisionSearch, Scenario, ScheduleConditionWarning,
                       expected_total_energy, optimize_precision,
                       per_round_energy, rounds_to_accuracy,
                       sample_channel_profile, variance_term)
from .chipenergy import ChipProfile, EnergyBreakdown, iteration_energy, mac_energy
from .data import Dataset, load_dataset, sample_batch, save_dataset, \
    synthetic_classification, synthetic_regression, union
from .fedsim import (DeviceContext, DivergenceError, FederatedConfig, RoundRecord,
                     RunRecord, StopRule, build_devices, learning_rate,
                     run_federated, sample_devices, substream)
from .presets import (ConfigError, ExperimentConfig, MODEL_PRESETS, ModelPreset,
                      PRESET_NAMES, REFERENCE_ARCH, Sweep, preset, run_sweep,
                      scaled_arch, standard_learning, standard_scenario)
from .qnn import (LayerSpec, MiniBatch, ModelState, NetworkArch, count_arch,
                  flatten_parameters, forward, init_model, local_round,
                  local_sgd_step)
from .quantizer import (PrecisionLevel, QuantizedVector, clip_unit, moment_bounds,
                        quantize_array, quantize_scalar, quantize_vector, step_size)
from .radio import (ChannelDraw, RadioParams, Topology, achievable_rate,
                    channel_gain, draw_gains, place_devices, uplink_energy)

__version__ = "0.1.0"
