import json
import math

import numpy as np
import pytest

from selection.model_selection import (
    CandidateModel,
    linear_gaussian_candidates,
    load_candidates,
    log_evidence,
    masked_candidate,
    model_posterior,
    rows_document,
    sample_linear_gaussian,
    selection_table,
)
from utils.errors import ConfigError, DomainError, PreconditionError


class TestEvidence:
    def test_no_free_parameters(self):
        assert log_evidence(-12.5, 0, 40) == -12.5

    def test_hand_computed_penalty(self):
        assert log_evidence(0.0, 2, math.e ** 2) == pytest.approx(-2.0)

    def test_gap_between_model_sizes(self):
        gap = log_evidence(-120.0, 2, 100) - log_evidence(-120.0, 4, 100)
        assert gap == pytest.approx(4.6052, abs=1e-4)

    def test_sample_count_precondition(self):
        with pytest.raises(PreconditionError):
            log_evidence(0.0, 1, 0)


class TestPosterior:
    def test_equal_evidences(self):
        np.testing.assert_allclose(model_posterior([-3.0, -3.0, -3.0, -3.0]), 0.25)

    def test_hand_computed_pair(self):
        np.testing.assert_allclose(model_posterior([0.0, -math.log(3.0)]), [0.75, 0.25])

    def test_large_magnitudes_are_stable(self):
        posterior = model_posterior([-1e6, -1e6 - 1.0])
        assert np.all(np.isfinite(posterior))
        assert posterior.sum() == pytest.approx(1.0, abs=1e-12)

    def test_monotone_in_evidence(self, rng):
        evidences = rng.normal(0.0, 5.0, size=6)
        posterior = model_posterior(evidences)
        assert list(np.argsort(posterior)) == list(np.argsort(evidences))

    def test_empty(self):
        with pytest.raises(PreconditionError):
            model_posterior([])

    def test_non_finite(self):
        with pytest.raises(DomainError):
            model_posterior([0.0, math.inf])


class TestSelection:
    def test_smaller_model_wins_on_equal_fit(self):
        rows = selection_table([CandidateModel('sparse', -120.0, 2), CandidateModel('dense', -120.0, 4)], 100)
        assert rows[0].selected and not rows[1].selected
        assert rows[0].posterior == pytest.approx(100.0 / 101.0)
        assert sum(row.posterior for row in rows) == pytest.approx(1.0, abs=1e-12)

    def test_single_candidate_is_rejected(self):
        with pytest.raises(PreconditionError):
            selection_table([CandidateModel('only', -1.0, 1)], 10)

    def test_candidate_validation(self):
        with pytest.raises(DomainError):
            CandidateModel('bad', -1.0, -1)
        with pytest.raises(DomainError):
            CandidateModel('bad', math.nan, 1)

    def test_document(self):
        rows = selection_table([CandidateModel('a', -5.0, 1), CandidateModel('b', -4.0, 3)], 50)
        document = rows_document(rows, 50)
        assert document['n_samples'] == 50
        assert [row['label'] for row in document['rows']] == ['a', 'b']

    def test_masked_candidate_counts_active_parameters(self):
        candidate = masked_candidate('mask', -7.0, [0.9, 0.1], [0, 0, 1, -1])
        assert candidate.n_params == 2


def _selects_true_support(seed: int, n_samples: int) -> bool:
    rng = np.random.default_rng([seed, n_samples])
    inputs, targets = sample_linear_gaussian(n_samples, rng)
    rows = selection_table(linear_gaussian_candidates(inputs, targets, [1, 2, 4, 8]), n_samples)
    return next(row for row in rows if row.selected).label == 'k=2'


def _true_posterior(seed: int, n_samples: int) -> float:
    rng = np.random.default_rng([seed, n_samples])
    inputs, targets = sample_linear_gaussian(n_samples, rng)
    rows = selection_table(linear_gaussian_candidates(inputs, targets, [1, 2, 4, 8]), n_samples)
    return next(row for row in rows if row.label == 'k=2').posterior


class TestConsistency:
    def test_selection_rate_grows_with_samples(self):
        rates = [np.mean([_selects_true_support(seed, n) for seed in range(200)]) for n in (20, 200, 5000)]
        assert rates[0] <= rates[1] <= rates[2]

    def test_large_samples_pick_the_true_support(self):
        assert np.mean([_selects_true_support(seed, 5000) for seed in range(20)]) >= 0.9

    def test_posterior_mass_concentrates_on_the_true_support(self):
        mass = [np.mean([_true_posterior(seed, n) for seed in range(20)]) for n in (50, 500, 5000)]
        assert mass[0] <= mass[1] <= mass[2]
        assert mass[2] >= 0.9

    def test_candidate_sizes_are_validated(self, rng):
        inputs, targets = sample_linear_gaussian(10, rng, dim=3)
        with pytest.raises(PreconditionError):
            linear_gaussian_candidates(inputs, targets, [4])


class TestCandidatesFile:
    def test_document_with_sample_count(self, tmp_path):
        path = tmp_path / 'candidates.json'
        path.write_text(json.dumps({'n_samples': 100, 'candidates': [
            {'label': 'a', 'loglik': -1.0, 'n_params': 2},
            {'label': 'b', 'loglik': -2.0, 'n_params': 4},
        ]}), encoding='utf-8')
        candidates, n_samples = load_candidates(path)
        assert n_samples == 100
        assert candidates[1] == CandidateModel('b', -2.0, 4)

    def test_bare_list(self, tmp_path):
        path = tmp_path / 'candidates.json'
        path.write_text(json.dumps([{'label': 'a', 'loglik': -1.0, 'n_params': 2}]), encoding='utf-8')
        candidates, n_samples = load_candidates(path)
        assert n_samples is None and len(candidates) == 1

    @pytest.mark.parametrize('text', ['{"candidates": [{"label": "a"}]}', '{"rows": []}', 'oops'])
    def test_malformed(self, tmp_path, text):
        path = tmp_path / 'candidates.json'
        path.write_text(text, encoding='utf-8')
        with pytest.raises(ConfigError):
            load_candidates(path)

    def test_missing(self, tmp_path):
        with pytest.raises(ConfigError):
            load_candidates(tmp_path / 'absent.json')
