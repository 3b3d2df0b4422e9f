"""Detection of the onset of careless responding in long rating-scale surveys.

Per respondent, item-level reconstruction errors of an autoencoder
(inconsistency) and LongStringPattern values (invariability) form a series
that is tested for a single mean change with a self-normalized CUSUM test.
"""

__version__ = "0.1.0"

from .autoencoder import AutoencoderConfig, pseudo_huber, reconstruction_errors, train  # noqa: E402
from .changepoint import SnTestConfig, critical_value, detect_changepoint, inject_jitter, sn_trace  # noqa: E402
from .data import ResponseMatrix, SurveyDesign, load_responses, validate_design  # noqa: E402
from .lsp import l_pattern, lsp_matrix, lsp_sequence  # noqa: E402
from .pipeline import CodersConfig, evaluate, run_coders, run_study  # noqa: E402
from .screeners import longstring_index, personal_reliability, psychometric_antonym  # noqa: E402
from .simulator import SimulationSpec, simulate  # noqa: E402

__all__ = [
    "AutoencoderConfig",
    "CodersConfig",
    "ResponseMatrix",
    "SimulationSpec",
    "SnTestConfig",
    "SurveyDesign",
    "critical_value",
    "detect_changepoint",
    "evaluate",
    "inject_jitter",
    "l_pattern",
    "load_responses",
    "longstring_index",
    "lsp_matrix",
    "lsp_sequence",
    "personal_reliability",
    "pseudo_huber",
    "psychometric_antonym",
    "reconstruction_errors",
    "run_coders",
    "run_study",
    "simulate",
    "sn_trace",
    "train",
    "validate_design",
]
