"""Bell diagonal states, trace-norm separability criteria and entanglement witnesses."""

from .bds import (
    FourierMatrix,
    ProbabilityMatrix,
    bds_from_fourier,
    bds_from_probabilities,
    fourier_from_probabilities,
    probabilities_from_fourier,
    twirl_channel,
    werner,
)
from .criteria import CorrelationMatrix, ccnr, correlation_matrix, de_vicente, ppt_check, ssc_value
from .qlinalg import BipartiteDims
from .search import SupportSet, dichotomous_state, exhaustive_dichotomous_search
from .witness import measurement_filtration, optimal_witness, scan_noise_threshold, sparse_witness

__all__ = [
    "BipartiteDims",
    "CorrelationMatrix",
    "FourierMatrix",
    "ProbabilityMatrix",
    "SupportSet",
    "bds_from_fourier",
    "bds_from_probabilities",
    "ccnr",
    "correlation_matrix",
    "de_vicente",
    "dichotomous_state",
    "exhaustive_dichotomous_search",
    "fourier_from_probabilities",
    "measurement_filtration",
    "optimal_witness",
    "ppt_check",
    "probabilities_from_fourier",
    "scan_noise_threshold",
    "sparse_witness",
    "ssc_value",
    "twirl_channel",
    "werner",
]
