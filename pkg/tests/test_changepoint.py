from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coders.changepoint import (
    ChangepointResult,
    SnTestConfig,
    UnsupportedConfiguration,
    critical_value,
    detect_changepoint,
    inject_jitter,
    segment_mean,
    sn_statistic,
    sn_trace,
    write_trace,
)
from oracles import sn_trace_oracle


def _close(a: np.ndarray, b: np.ndarray, rel: float) -> bool:
    ok = np.isfinite(a) & np.isfinite(b)
    return bool(np.all(np.abs(a[ok] - b[ok]) <= rel * np.abs(b[ok])))


class TestSegmentMean:
    def test_arithmetic(self) -> None:
        assert segment_mean([1, 2, 3, 4], 1, 4) == pytest.approx([2.5])

    def test_singleton(self) -> None:
        assert segment_mean([[1, 5], [2, 6], [3, 7]], 2, 2).tolist() == [2, 6]

    def test_constant(self) -> None:
        assert segment_mean(np.full(9, 4.2), 3, 7) == pytest.approx([4.2])

    @pytest.mark.parametrize("a,b", [(3, 2), (0, 2), (1, 5)])
    def test_empty_or_out_of_range(self, a: int, b: int) -> None:
        with pytest.raises(ValueError):
            segment_mean([1, 2, 3, 4], a, b)


class TestCriticalValues:
    def test_table(self) -> None:
        assert [critical_value(a, 1) for a in (0.01, 0.005, 0.001)] == [68.6, 84.6, 121.9]
        assert [critical_value(a, 2) for a in (0.01, 0.005, 0.001)] == [117.7, 135.3, 192.5]

    @pytest.mark.parametrize("alpha,d", [(0.05, 2), (0.01, 3), (0.1, 1)])
    def test_untabulated(self, alpha: float, d: int) -> None:
        with pytest.raises(UnsupportedConfiguration):
            critical_value(alpha, d)

    def test_config_rejects_untabulated_alpha(self) -> None:
        with pytest.raises(UnsupportedConfiguration):
            SnTestConfig(alpha=0.05)


class TestOracleAgreement:
    @pytest.mark.parametrize("d", [1, 2])
    def test_random_series(self, d: int) -> None:
        rng = np.random.default_rng(100 + d)
        for _ in range(100):
            p = int(rng.integers(4, 51))
            Y = rng.normal(size=(p, d)) * rng.uniform(0.1, 10) + rng.normal(size=d) * 5
            got = sn_trace(Y).T
            want, _ = sn_trace_oracle(Y)
            assert np.array_equal(np.isnan(got), np.isnan(want))
            assert _close(got, want, 1e-10)

    def test_left_weighted_normalizer(self) -> None:
        rng = np.random.default_rng(3)
        Y = rng.normal(size=(30, 2))
        got = sn_trace(Y, SnTestConfig(normalizer="left-weighted")).T
        want, _ = sn_trace_oracle(Y, left_weighted=True)
        assert _close(got, want, 1e-10)

    def test_single_split_matches_trace(self) -> None:
        Y = np.random.default_rng(1).normal(size=(20, 2))
        assert sn_statistic(Y, 7) == pytest.approx(sn_trace(Y).T[5], rel=1e-14)


class TestInvariance:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.floats(1e-3, 1e3), st.floats(-100, 100))
    def test_scale_and_shift(self, seed: int, c: float, shift: float) -> None:
        Y = np.random.default_rng(seed).normal(size=40)
        base = sn_trace(Y).T
        moved = sn_trace(c * Y + shift).T
        assert _close(moved, base, 1e-8)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_statistic_non_negative_and_argmax(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        tr = sn_trace(rng.normal(size=(int(rng.integers(4, 60)), int(rng.integers(1, 3)))))
        assert np.nanmin(tr.T) >= 0
        assert tr.T[tr.argmax - 2] == tr.sn


class TestSingular:
    def test_constant_series_is_undefined(self) -> None:
        res = detect_changepoint(np.full(20, 3.0))
        assert not res.flagged and np.isnan(res.statistic)
        assert "undefined" in res.diagnostic

    def test_noiseless_step_at_the_step(self) -> None:
        Y = np.r_[np.zeros(10), np.ones(10)]
        tr = sn_trace(Y)
        assert np.isnan(tr.T[11 - 2])

    def test_ridge_keeps_splits_defined(self) -> None:
        Y = np.r_[np.zeros(10), np.ones(10)]
        tr = sn_trace(Y, SnTestConfig(singular_policy="ridge"))
        assert np.isfinite(tr.T[11 - 2]) and tr.T[11 - 2] > 1e6

    def test_two_dim_collinear(self) -> None:
        y = np.random.default_rng(0).normal(size=30)
        tr = sn_trace(np.column_stack([y, 2 * y + 1]))
        assert np.isnan(tr.T).all()

    def test_short_series(self) -> None:
        with pytest.raises(ValueError, match="p=3"):
            detect_changepoint(np.arange(3.0))


class TestDetection:
    def test_mean_shift_location(self) -> None:
        rng = np.random.default_rng(42)
        Y = rng.normal(size=300)
        Y[149:] += 3
        res = detect_changepoint(Y, SnTestConfig(alpha=0.01))
        assert res.flagged and 148 <= res.onset <= 152
        assert res.critical == 68.6

    def test_jittered_constant_two_dim(self) -> None:
        Y = inject_jitter(np.full((300, 2), 2.0), 0.01, seed=5)
        res = detect_changepoint(Y, SnTestConfig(alpha=0.001))
        assert not res.flagged and res.statistic < 192.5 and res.onset is None

    def test_flag_coherence(self) -> None:
        rng = np.random.default_rng(9)
        for _ in range(20):
            Y = rng.normal(size=(60, 2))
            Y[30:, 0] += rng.uniform(0, 4)
            r = detect_changepoint(Y, SnTestConfig(alpha=0.01))
            if r.flagged:
                assert 2 <= r.onset <= 60 and r.statistic > r.critical

    def test_trace_export(self, tmp_path) -> None:
        r = detect_changepoint(np.r_[np.zeros(10), np.ones(10)] + np.arange(20) * 1e-3)
        write_trace(r, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "k,T" and len(lines) == 20
        assert isinstance(r, ChangepointResult)


class TestJitter:
    def test_zero_is_identity(self) -> None:
        x = np.arange(5.0)
        assert np.array_equal(inject_jitter(x, 0.0, seed=1), x)

    def test_reproducible(self) -> None:
        x = np.ones(50)
        assert np.array_equal(inject_jitter(x, 0.01, seed=4), inject_jitter(x, 0.01, seed=4))

    def test_spread(self) -> None:
        x = np.zeros(10_000)
        sd = np.std(inject_jitter(x, 0.01, seed=8) - x)
        assert abs(sd - 0.01) < 0.001

    def test_negative_sd(self) -> None:
        with pytest.raises(ValueError):
            inject_jitter(np.ones(3), -1.0)
