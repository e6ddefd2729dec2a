"""Secure networked-control toolkit: watermark key-sync encryption, false
data injection, statistical detection, compensation, and closed-form
cross-validation of the detection statistics."""

from .analysis import (build_closed_loop, complexity_ratio, dwell_ratio_bound,
                       dwell_time_certificate, limitation1_expectations,
                       limitation3_delta_j, monte_carlo_test_means,
                       normal_residual_trace, theorem2_expectations,
                       watermark_cost_delta)
from .attack import FdiaSpec, attack_channel, burst_preset_fig6, persistent_preset
from .detect import CompensationBuffer, DetectorConfig, TestWindowState, compensate, decide
from .model import (EstimatorState, LoopGains, PlantModel, control_law,
                    derive_gains, estimator_predict, estimator_update,
                    pendulum_preset, plant_output, plant_step)
from .sim import (CONVENTIONAL, NEW_DW, NO_WATERMARK, SafetyLimits,
                  ScenarioConfig, SimTrace, estimation_error_power, lqg_cost,
                  run_closed_loop, twin_run_distortion_power)
from .watermark import (WatermarkChannel, decrypt_exact, decrypt_output,
                        encrypt_exact, encrypt_output, inject_control_watermark)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
