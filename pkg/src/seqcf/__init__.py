"""Counterfactual means in sequential experiments via thresholded nearest neighbors."""
from .errors import (CalibrationError, ConfigError, DegenerateEstimateWarning, EstimationError,
                     IntervalUnavailable, SeqcfError)
from .model import (ActionSet, ExperimentLog, LatentState, MeanTensor, build_mean_tensor,
                    realized_pmin, register_mean_fn)
from .rng import Streams
from .simulate import LatentSpec, NoiseSpec, PolicySpec, policy_step, run_experiment, sample_latent
from .estimator import (DistanceMatrix, Estimate, EstimateTable, EstimatorSettings, estimate_all,
                        neighbor_set, nn_estimate, pairwise_distance)
from .inference import IntervalEstimate, population_estimate, prediction_interval, subsample_ci
from .calibrate import (TuningResult, estimate_sigma, eta_grid_from_percentiles, iterate_sigma_eta,
                        split_halves, tune_eta)
from .theory import (TheoryParams, err_term_chi, eta_schedule, oracle_rho_star, phi_continuous_mc,
                     phi_discrete, scheduled_eta, thm1_bound)

__version__ = "0.1.0"
