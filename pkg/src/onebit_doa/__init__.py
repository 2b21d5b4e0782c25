"""Pessimistic Cramer-Rao bounds and conservative ML estimation for 1-bit DOA estimation."""

from .array_model import (CovariancePair, SteeringPair, UlaSource, fisher_unquantized,
                          receive_covariance, snr_db_to_gamma, steering)
from .bounds import (BoundReport, bound_report, fisher_exact_small, fisher_lower_bound, pcrlb,
                     quantization_loss)
from .errors import (DegenerateModel, DimensionTooLarge, DomainError, InvalidCorrelation,
                     MaxDepthExceeded, NoSignChange, NormalizationFailure, NotPositiveDefinite,
                     OneBitDoaError)
from .estimator import (BitSnapshots, EstimateResult, EstimatorOptions, cmle, gaussian_mle,
                        sample_statistics)
from .montecarlo import (ExperimentConfig, RmseReport, quantize, run_rmse_experiment,
                         sample_receive)
from .quantized_moments import (PairIndex, QuantizedCovariance, StatisticMoments, arcsine_map,
                                model_moments, orthant2, orthant4, pair_index, quartic_moment,
                                statistic_moments)

__version__ = "0.1.0"
