from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coders.data import ResponseMatrix, SurveyDesign
from coders.lsp import l_pattern_values
from coders.screeners import (
    ScreenerUnavailable,
    antonym_pairs,
    longstring_index,
    personal_reliability,
    psychometric_antonym,
    screen_all,
)
from coders.simulator import BlockStructure, SimulationSpec, simulate

SMALL = BlockStructure(traits=2, facets_per_trait=3, items_per_facet=10)


def _with_random_rows(n: int, share: float, seed: int):
    """Attentive simulees with a block of fully random rows at the front."""
    data = simulate(SimulationSpec(n=n, structure=SMALL, seed=seed))
    x = data.matrix.responses.copy()
    k = int(share * n)
    x[:k] = np.random.default_rng(seed).integers(1, 6, size=(k, x.shape[1]))
    return ResponseMatrix(x, data.matrix.categories), data.design, k


class TestLongstring:
    def test_examples(self) -> None:
        m = ResponseMatrix(np.array([[3, 2, 3, 3, 1, 4, 1, 1, 1], [2] * 9, [1, 2, 3, 4, 5, 1, 2, 3, 4]]), 5)
        res = longstring_index(m)
        assert res.scores.tolist() == [3, 9, 1]
        assert res.flags.tolist() == [False, True, False]

    def test_cutoff_is_strict(self) -> None:
        m = ResponseMatrix(np.array([[1] * 6 + [2, 3], [1] * 7 + [2]]), 5)
        assert longstring_index(m).flags.tolist() == [False, True]

    @settings(max_examples=50)
    @given(st.lists(st.integers(1, 5), min_size=2, max_size=50))
    def test_equals_period_one_maximum(self, x: list[int]) -> None:
        m = ResponseMatrix(np.array([x]), 5)
        assert longstring_index(m).scores[0] == l_pattern_values(x, 1).max()


class TestReliability:
    def test_identical_halves(self) -> None:
        # four constructs, two items each, both halves equal per construct
        x = np.array([[1, 1, 2, 2, 4, 4, 5, 5]])
        res = personal_reliability(ResponseMatrix(x, 5), SurveyDesign(np.repeat(np.arange(4), 2)))
        assert res.scores[0] == pytest.approx(1.0)

    def test_constant_respondent_undefined(self) -> None:
        d = SurveyDesign(np.repeat(np.arange(4), 2))
        res = personal_reliability(ResponseMatrix(np.full((1, 8), 3), 5), d)
        assert np.isnan(res.scores[0]) and not res.flags[0]
        assert res.diagnostics

    def test_negative_keying_reversed(self) -> None:
        x = np.array([[1, 5, 2, 4, 4, 2, 5, 1]])
        d = SurveyDesign(np.repeat(np.arange(4), 2), keying=[1, -1] * 4)
        assert personal_reliability(ResponseMatrix(x, 5), d).scores[0] == pytest.approx(1.0)

    def test_attentive_simulees_mostly_pass(self) -> None:
        data = simulate(SimulationSpec(n=200, seed=5))
        res = personal_reliability(data.matrix, data.design)
        assert np.mean(res.scores > 0.3) > 0.95
        assert np.nanmin(res.scores) >= -1.0

    def test_single_item_construct(self) -> None:
        with pytest.raises(ValueError, match="fewer than 2"):
            personal_reliability(ResponseMatrix(np.ones((1, 3), dtype=int), 5), SurveyDesign(np.array([0, 0, 1])))


class TestAntonym:
    def test_unavailable_without_negative_pairs(self) -> None:
        rng = np.random.default_rng(0)
        base = rng.integers(1, 6, size=(50, 1))
        x = np.clip(base + rng.integers(-1, 2, size=(50, 6)), 1, 5)
        with pytest.raises(ScreenerUnavailable):
            psychometric_antonym(ResponseMatrix(x, 5))

    def test_perfect_opposites_score_high(self) -> None:
        # items 2j and 2j+1 are exact opposites for everyone
        first = np.random.default_rng(3).integers(1, 6, size=(60, 4))
        x = np.empty((60, 8), dtype=int)
        x[:, 0::2], x[:, 1::2] = first, 6 - first
        m = ResponseMatrix(x, 5)
        assert antonym_pairs(m, -0.6).tolist() == [[0, 1], [2, 3], [4, 5], [6, 7]]
        res = psychometric_antonym(m, pair_threshold=-0.6)
        varied = np.ptp(first, axis=1) > 0
        assert np.allclose(res.scores[varied], 1.0) and not res.flags[varied].any()

    def test_random_rows_score_below_attentive(self) -> None:
        m, _, k = _with_random_rows(400, 0.1, seed=2)
        res = psychometric_antonym(m, pair_threshold=-0.3)
        rand, att = res.scores[:k], res.scores[k:]
        assert abs(np.nanmedian(rand)) < 0.2
        assert np.nanmedian(rand) < np.nanmedian(att)

    def test_sample_dependence(self) -> None:
        m, _, _ = _with_random_rows(200, 0.1, seed=4)
        kept = np.arange(60, m.n)
        fewer = m.subset(rows=kept)
        # dropping the random rows changes the pair set and therefore the scores
        assert len(antonym_pairs(fewer, -0.3)) != len(antonym_pairs(m, -0.3))
        full = psychometric_antonym(m, pair_threshold=-0.3).scores[kept]
        assert not np.allclose(psychometric_antonym(fewer, pair_threshold=-0.3).scores, full, equal_nan=True)
        # longstring never depends on other rows
        assert np.array_equal(longstring_index(fewer).scores, longstring_index(m).scores[kept])


class TestScreenAll:
    def test_default_runs_everything_available(self) -> None:
        m, d, _ = _with_random_rows(200, 0.1, seed=1)
        out = screen_all(m, d, pair_threshold=-0.3)
        assert set(out) == {"longstring", "reliability", "antonym"}
        assert all(v is not None for v in out.values())

    def test_unavailable_maps_to_none(self) -> None:
        out = screen_all(ResponseMatrix(np.ones((12, 4), dtype=int), 5))
        assert out["antonym"] is None and out["reliability"] is None

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10**6))
    def test_permutation_equivariance(self, seed: int) -> None:
        m, d, _ = _with_random_rows(60, 0.2, seed=seed % 1000)
        perm = np.random.default_rng(seed).permutation(m.n)
        a = screen_all(m, d, pair_threshold=-0.3)
        b = screen_all(m.subset(rows=perm), d, pair_threshold=-0.3)
        for name in a:
            if a[name] is None:
                assert b[name] is None
                continue
            assert np.allclose(a[name].scores[perm], b[name].scores, equal_nan=True)
