from __future__ import annotations

import dataclasses

import numpy as np
import pytest

import coders.pipeline as pipeline
from coders.changepoint import ChangepointResult, UnsupportedConfiguration
from coders.data import ResponseMatrix
from coders.pipeline import CodersConfig, evaluate, run_coders, run_study, write_results, write_series
from coders.simulator import BlockStructure, GroundTruth, SimulationSpec, careless_responses, simulate

SMALL = BlockStructure(traits=2, facets_per_trait=3, items_per_facet=10)
FAST = CodersConfig(epochs=5)


def _truth(types, onset) -> GroundTruth:
    return GroundTruth(np.array(types, dtype=object), np.array(onset), np.zeros(len(types), dtype=int))


class TestConfig:
    def test_dims_to_d(self) -> None:
        assert [CodersConfig(dims=d).d for d in ("both", "re-only", "lsp-only")] == [2, 1, 1]

    def test_invalid(self) -> None:
        with pytest.raises(ValueError):
            CodersConfig(dims="re")
        with pytest.raises(UnsupportedConfiguration):
            CodersConfig(alpha=0.05)


class TestEvaluate:
    def test_no_flags(self) -> None:
        truth = _truth(["attentive", "random", "pattern"], [0, 50, 60])
        rep = evaluate(np.zeros(3, bool), np.zeros(3, int), truth)
        assert rep.fpr == 0 and rep.fnr == 1 and rep.mae is None

    def test_mae(self) -> None:
        truth = _truth(["random", "pattern", "attentive"], [100, 200, 0])
        rep = evaluate([True, True, False], [102, 195, 0], truth)
        assert rep.mae == pytest.approx(3.5)
        assert rep.by_type["random"] == {"fnr": 0.0, "mae": 2.0}

    def test_all_attentive(self) -> None:
        rep = evaluate(np.zeros(4, bool), np.zeros(4, int), _truth(["attentive"] * 4, [0] * 4))
        assert rep.fpr == 0 and rep.fnr is None and rep.by_type == {}

    def test_from_results(self) -> None:
        res = [ChangepointResult(i, f, o, 0.0, 1.0, 0.01, np.empty(0)) for i, (f, o) in enumerate([(True, 10), (True, 5)])]
        rep = evaluate(res, _truth(["attentive", "straightlining"], [0, 7]))
        assert rep.fpr == 1.0 and rep.mae == 2.0 and rep.counts["true_positives"] == 1

    def test_index_mismatch(self) -> None:
        with pytest.raises(ValueError, match="respondents"):
            evaluate([True], [3], _truth(["attentive"] * 2, [0, 0]))


class TestRunCoders:
    def test_lsp_only_never_trains(self, small_sim, monkeypatch) -> None:
        def boom(*a, **k):
            raise AssertionError("training must not happen for lsp-only")

        monkeypatch.setattr(pipeline, "train", boom)
        res = run_coders(small_sim.matrix, None, CodersConfig(dims="lsp-only"))
        assert res.training is None and res.re is None
        assert res.series.shape == (small_sim.matrix.n, small_sim.matrix.p, 1)
        assert {r.critical for r in res.results} == {121.9}

    def test_re_only_ignores_l_max(self, small_sim) -> None:
        a = run_coders(small_sim.matrix, small_sim.design, dataclasses.replace(FAST, dims="re-only", l_max=2))
        b = run_coders(small_sim.matrix, small_sim.design, dataclasses.replace(FAST, dims="re-only", l_max=5))
        assert np.array_equal(a.flagged, b.flagged) and np.array_equal(a.series, b.series)
        assert a.lsp is None

    def test_both_uses_d2_and_is_deterministic(self, small_sim) -> None:
        a = run_coders(small_sim.matrix, small_sim.design, FAST)
        b = run_coders(small_sim.matrix, small_sim.design, FAST, training=a.training)
        assert a.series.shape[2] == 2 and a.results[0].critical == 192.5
        assert np.array_equal(a.series, b.series)
        assert [r.statistic for r in a.results] == [r.statistic for r in b.results]

    def test_flag_coherence(self, small_sim) -> None:
        res = run_coders(small_sim.matrix, small_sim.design, dataclasses.replace(FAST, alpha=0.01))
        p = small_sim.matrix.p
        for r in res.results:
            if r.flagged:
                assert 2 <= r.onset <= p and r.statistic > r.critical
            else:
                assert r.onset is None

    def test_jitter_keeps_lsp_near_integers(self, small_sim) -> None:
        res = run_coders(small_sim.matrix, None, CodersConfig(dims="lsp-only"))
        assert res.series.min() >= 1 - 5 * 0.01
        assert np.abs(res.series[..., 0] - res.lsp).max() < 0.06

    def test_needs_design_for_re(self, small_sim) -> None:
        with pytest.raises(ValueError, match="design"):
            run_coders(small_sim.matrix, None, FAST)

    def test_parallel_matches_serial(self, small_sim) -> None:
        cfg = CodersConfig(dims="lsp-only")
        a = run_coders(small_sim.matrix, None, cfg)
        b = run_coders(small_sim.matrix, None, cfg, jobs=2)
        assert [r.statistic for r in a.results] == [r.statistic for r in b.results]

    def test_exports(self, small_sim, tmp_path) -> None:
        res = run_coders(small_sim.matrix, None, CodersConfig(dims="lsp-only"))
        write_results(res, tmp_path / "r.csv")
        write_series(res, tmp_path / "s.csv")
        rows = (tmp_path / "r.csv").read_text().splitlines()
        assert rows[0] == "respondent,flagged,onset,statistic,alpha,critical" and len(rows) == small_sim.matrix.n + 1
        series = (tmp_path / "s.csv").read_text().splitlines()
        assert series[0] == "respondent,item,lsp,T" and len(series) == small_sim.matrix.n * small_sim.matrix.p + 1


@pytest.fixture(scope="module")
def injected_onsets():
    """Full-size survey with injected random (onset 172) and pattern (onset 260) respondents."""
    data = simulate(SimulationSpec(n=200, gamma=0.2, seed=1))
    x = data.matrix.responses.copy()
    rng = np.random.default_rng(1)
    att = np.flatnonzero(~data.truth.careless)
    rand, patt, rest = att[:20], att[20:40], att[40:]
    for i in rand:
        x[i, 171:] = careless_responses("random", 129, 5, rng)
    for i in patt:
        x[i, 259:] = careless_responses("pattern", 41, 5, rng)
    res = run_coders(ResponseMatrix(x, data.matrix.categories), data.design, CodersConfig(seed=1))
    return res, rand, patt, rest


class TestInjectedOnsets:
    def test_inconsistent_respondent(self, injected_onsets) -> None:
        res, rand, _, _ = injected_onsets
        errors = np.abs(res.onsets[rand][res.flagged[rand]] - 172)
        assert (errors <= 5).any()

    def test_pattern_respondents(self, injected_onsets) -> None:
        res, _, patt, _ = injected_onsets
        assert res.flagged[patt].all()
        assert np.abs(res.onsets[patt] - 260).max() <= 3

    def test_attentive_flag_rate(self, injected_onsets) -> None:
        res, _, _, rest = injected_onsets
        assert res.flagged[rest].mean() <= 0.01


class TestStudy:
    spec = SimulationSpec(n=40, structure=SMALL, gamma=0.2)
    cfg = CodersConfig(epochs=3)

    def test_gamma_zero_reports_fpr_only(self) -> None:
        rep = run_study(dataclasses.replace(self.spec, gamma=0.0), ("lsp-only",), (0.01,), 1, cfg=self.cfg)
        assert {r["metric"] for r in rep.rows} == {"fpr"}

    def test_grid_and_breakdowns(self) -> None:
        rep = run_study(self.spec, ("both", "lsp-only"), (0.01, 0.001), 2, cfg=self.cfg,
                        prevalences=(0.2, 0.4), regimes=("baseline", "early", "late"))
        cells = {(r["variant"], r["alpha"], r["prevalence"], r["regime"]) for r in rep.rows if r["metric"] == "fpr"}
        assert len(cells) == 2 * 2 * 2 * 3
        types = {r["type"] for r in rep.rows if r["metric"] == "fnr"}
        assert types == {"all", "random", "extreme", "straightlining", "pattern"}
        for r in rep.rows:
            assert r["value"] >= 0 and (r["metric"] == "mae" or r["value"] <= 1)

    def test_prevalence_grid_accepted(self) -> None:
        grid = (0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0)
        rep = run_study(dataclasses.replace(self.spec, n=60), ("lsp-only",), (0.01,), 1, cfg=self.cfg, prevalences=grid)
        assert {r["prevalence"] for r in rep.rows} == set(grid)

    def test_deterministic(self, tmp_path) -> None:
        a = run_study(self.spec, ("both",), (0.01,), 2, master_seed=5, cfg=self.cfg)
        b = run_study(self.spec, ("both",), (0.01,), 2, master_seed=5, cfg=self.cfg)
        a.write_csv(tmp_path / "a.csv")
        b.write_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert a.manifest["replicate_seeds"] == b.manifest["replicate_seeds"]

    def test_failure_reports_seed(self) -> None:
        bad = dataclasses.replace(self.spec, n=10)  # too few respondents for four types
        with pytest.raises(pipeline.ReplicateFailure) as info:
            run_study(bad, ("lsp-only",), (0.01,), 1, cfg=self.cfg)
        assert str(info.value.seed) in str(info.value)

    def test_replicates_must_be_positive(self) -> None:
        with pytest.raises(ValueError):
            run_study(self.spec, replicates=0)
