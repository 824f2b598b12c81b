# BIC-style model evidence and posteriors over candidate models
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import ConfigError, DomainError, PreconditionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateModel:
    label: str
    loglik: float       # maximum log-likelihood at the fitted parameters
    n_params: int       # free parameters K

    def __post_init__(self):
        if self.n_params < 0:
            raise DomainError(f"Candidate '{self.label}' has negative parameter count {self.n_params}")
        if not math.isfinite(self.loglik):
            raise DomainError(f"Candidate '{self.label}' has non-finite log-likelihood")


@dataclass
class SelectionRow:
    label: str
    n_params: int
    evidence: float
    posterior: float
    selected: bool = False


def log_evidence(loglik: float, n_params: int, n_samples: int) -> float:
    """loglik − (K/2)·ln N; the O(1) term is dropped"""
    if n_samples < 1:
        raise PreconditionError(f"Evidence needs N >= 1, got {n_samples}")
    return float(loglik) - 0.5 * n_params * math.log(n_samples)


def model_posterior(evidences: Sequence[float]) -> np.ndarray:
    """Softmax over log-evidences under a uniform model prior"""
    evidences = np.asarray(evidences, dtype=np.float64)
    if evidences.size == 0:
        raise PreconditionError("Posterior needs at least one candidate")
    if not np.all(np.isfinite(evidences)):
        raise DomainError("Evidences must be finite")
    weights = np.exp(evidences - evidences.max())
    return weights / weights.sum()


def masked_candidate(label: str, loglik: float, probs, owners, threshold: float = 0.5) -> CandidateModel:
    """Candidate whose K counts the parameters owned by units above the activation threshold"""
    probs = np.asarray(probs, dtype=np.float64).ravel()
    owners = np.asarray(owners, dtype=np.int64).ravel()
    owned = owners >= 0
    n_params = int(np.sum(probs[owners[owned]] > threshold))
    return CandidateModel(label, float(loglik), n_params)


def gaussian_loglik(residuals: np.ndarray) -> float:
    """Maximized Gaussian log-likelihood with the MLE noise variance RSS/N"""
    residuals = np.asarray(residuals, dtype=np.float64).ravel()
    n = residuals.size
    variance = max(float(np.dot(residuals, residuals)) / n, np.finfo(np.float64).tiny)
    return -0.5 * n * (math.log(2.0 * math.pi * variance) + 1.0)


def linear_gaussian_candidates(inputs: np.ndarray, targets: np.ndarray, sizes: Sequence[int]) -> List[CandidateModel]:
    """Least-squares fits on the first k input columns for each k in sizes"""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if inputs.ndim != 2 or inputs.shape[0] != targets.size:
        raise PreconditionError(f"Inputs {inputs.shape} do not match {targets.size} targets")

    candidates = []
    for size in sizes:
        if not 0 <= size <= inputs.shape[1]:
            raise PreconditionError(f"Candidate size {size} outside 0..{inputs.shape[1]}")
        if size == 0:
            residuals = targets
        else:
            design = inputs[:, :size]
            coefficients, *_ = np.linalg.lstsq(design, targets, rcond=None)
            residuals = targets - design @ coefficients
        candidates.append(CandidateModel(f"k={size}", gaussian_loglik(residuals), size))
    return candidates


def sample_linear_gaussian(n_samples: int, rng: np.random.Generator, coefficients: Sequence[float] = (2.0, -1.5),
                           dim: int = 8, noise_sigma: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Synthetic data whose true support is the first len(coefficients) columns"""
    inputs = rng.standard_normal((n_samples, dim))
    weights = np.zeros(dim)
    weights[:len(coefficients)] = coefficients
    targets = inputs @ weights + noise_sigma * rng.standard_normal(n_samples)
    return inputs, targets


def selection_table(candidates: Sequence[CandidateModel], n_samples: int) -> List[SelectionRow]:
    if len(candidates) < 2:
        raise PreconditionError(f"Model selection needs at least 2 candidates, got {len(candidates)}")
    evidences = [log_evidence(c.loglik, c.n_params, n_samples) for c in candidates]
    posterior = model_posterior(evidences)
    rows = [SelectionRow(c.label, c.n_params, e, float(p)) for c, e, p in zip(candidates, evidences, posterior)]
    rows[int(np.argmax(posterior))].selected = True
    return rows


def rows_document(rows: Sequence[SelectionRow], n_samples: int) -> Dict:
    return {'n_samples': n_samples, 'rows': [asdict(row) for row in rows]}


def load_candidates(path) -> Tuple[List[CandidateModel], Optional[int]]:
    """
    Read a candidates file:
        {"n_samples": 100, "candidates": [{"label": "...", "loglik": -12.5, "n_params": 4}, ...]}
    A bare list of candidates is accepted too; n_samples is then None.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Candidates file not found: {path}")
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Candidates file {path} is not valid JSON: {e}") from e

    n_samples = None
    entries = document
    if isinstance(document, dict):
        entries = document.get('candidates')
        n_samples = document.get('n_samples')
    if not isinstance(entries, list):
        raise ConfigError(f"Candidates file {path} must hold a 'candidates' list")

    candidates = []
    for index, entry in enumerate(entries):
        try:
            candidates.append(CandidateModel(str(entry['label']), float(entry['loglik']), int(entry['n_params'])))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Candidate {index} in {path} is malformed: {e}") from e
    logger.info(f"Loaded {len(candidates)} candidates from {path}")
    return candidates, n_samples
