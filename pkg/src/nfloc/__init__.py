"""Near-field localization and bi-static sensing simulator for large arrays."""

from .scenario import (ArrayLayout, ConfigError, PathSet, ScenarioConfig,
                       build_array, default_config, default_paths,
                       field_boundaries, load_scenario, noise_variance)
from .channel import (ChannelTensor, Mask, aoa_from, delay_component,
                      ff_channel, ff_steering, nf_channel, nf_element_terms,
                      path_gain)
from .signals import (CombinerSchedule, ObservationTensor, PilotSchedule,
                      constant_pilots, make_combiners, synthesize)
from .templates import (ModelContext, StateVector, concentrated_fit,
                        observation_mean, true_state)
from .estimator import (CRBReport, EstimationReport, GridWindow, SAEstimate,
                        coarse_clock, coarse_sa_estimate, compute_crb,
                        estimate_sp, estimate_subarrays, full_mle, los_mle,
                        remove_los, run_estimation_chain, triangulate_ue)
from .mismatch import (BiasMapNode, MismatchReport, bias_map, los_only_state,
                       mismatch_lower_bound, pseudotrue_state)
from .blockage import (BlockageCostEvaluator, DetectionResult,
                       detection_accuracy, detect_exhaustive_oracle,
                       detect_heuristic, detect_thresholding,
                       hypothesis_vector, scan_cost_trace)
from .harness import (ExperimentPlan, ResultTable, plan_for, preset_fig2,
                      preset_fig3, preset_fig4, preset_fig5, run_monte_carlo)

__all__ = [name for name in dir() if not name.startswith("_")]
