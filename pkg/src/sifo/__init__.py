"""Site-adaptive downlink subspace acquisition from RSRP fingerprints.

A served UE reports per-beam received power over a short probing codebook.
The base station maps that fingerprint to a rank-Q precoding subspace by
blending a pretrained beam scorer with a target-site memory of
(fingerprint, unit channel direction) pairs.
"""
from .baselines import BaselineConfig, dft_select, omp, omp_subspace, run_baseline
from .calibration import (CalibrationMemory, FusionConfig, build_memory, confidence, fuse, multiscale_average,
                          optimal_alpha, retrieve_neighbors, sifo_acquire)
from .channel import (SiteParams, SitePropagationModel, UeChannel, UeGeometry, sample_site, sample_ue_channel,
                      sample_ue_geometry, sample_ue_pool, steering_vector, ue_normalized_covariance)
from .errors import (CodebookMismatchError, ConfigError, ConvergenceError, DegenerateCaptureError, NumericalError,
                     RankDeficientError, SifoError)
from .numerics import HermitianEig, hermitian_eig, jacobi_eigh, orthonormalize, power_iteration_topq, projector_from_basis
from .parametric import (BeamScorerModel, CodebookConfig, TrainConfig, TrainingSet, fine_tune, learn_probing_codebook,
                         predict_subspace, train_parametric)
from .probing import (Codebook, RsrpFingerprint, dft_codebook, dft_dictionary, dft_subset, gram_offdiag_energy,
                      make_key, max_coherence, measure_rsrp, random_codebook, worst_case_sensing_energy)
from .subspace import (SubspaceDecision, capture_efficiency, effective_rate, kyfan_loss_and_bound,
                       mrt_within_subspace, rank_q_extract)

__version__ = "0.1.0"
