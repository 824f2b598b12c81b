# Selection package initialization
from .model_selection import (
    CandidateModel,
    SelectionRow,
    linear_gaussian_candidates,
    load_candidates,
    log_evidence,
    masked_candidate,
    model_posterior,
    sample_linear_gaussian,
    selection_table,
)

__all__ = [
    'CandidateModel', 'SelectionRow', 'linear_gaussian_candidates', 'load_candidates', 'log_evidence',
    'masked_candidate', 'model_posterior', 'sample_linear_gaussian', 'selection_table',
]
