"""Randomized agglomerative clustering with selective p-values for each merge."""
from .data import (DataMatrix, GroundTruth, generate_circular, generate_three_cluster,
                   generate_two_cluster, load_csv)
from .engine import (MergeRecord, MergeTrace, RandomizationConfig, merge_probabilities,
                     run_clustering, sample_merge)
from .errors import (DegenerateDataError, InvalidArgument, InvalidState, NumericalFailure,
                     SchemaError)
from .inference import (QuadratureConfig, TestResult, auxiliary_stats, conditional_cdf_f,
                        contrast_vector, f_statistic, p_value_chi, p_value_f, reconstruct_f,
                        sequence_log_weight)
from .linkage import LINKAGES, LinkageTracker, candidate_merges, pairwise_dissimilarity
from .metrics import ari, cooccurrence, gap_statistic, wcss_tss
from .selection import AlphaSchedule, KEstimate, alpha_sequence, estimate_k

__version__ = "0.1.0"
