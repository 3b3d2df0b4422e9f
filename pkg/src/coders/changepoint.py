"""Self-normalized CUSUM test for a single mean change in a d-dimensional series.

For a candidate split ``k`` (first item of the second segment, 1-based) the
statistic contrasts the segment means and normalizes the contrast by a
matrix built from within-segment mean contrasts, so no long-run variance has
to be estimated. The test rejects when the maximum over ``k`` exceeds an
asymptotic critical value; the maximizing ``k`` estimates the onset.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Asymptotic critical values K_d of the self-normalized statistic.
CRITICAL_VALUES: dict[int, dict[float, float]] = {
    1: {0.01: 68.6, 0.005: 84.6, 0.001: 121.9},
    2: {0.01: 117.7, 0.005: 135.3, 0.001: 192.5},
}

COND_LIMIT = 1e12


class UnsupportedConfiguration(ValueError):
    """Raised when no critical value is tabulated for ``(alpha, d)``."""


@dataclass(frozen=True)
class SnTestConfig:
    """Settings of the self-normalized test.

    ``singular_policy`` is ``"exclude"`` (drop candidate splits with a
    numerically singular normalizer) or ``"ridge"`` (add ``ridge_eps`` to the
    diagonal of the standardized normalizer). ``normalizer="left-weighted"``
    switches the right-segment weights to the ``(k-1)^2`` denominator
    instead of the symmetric ``(p-k+1)^2`` one.
    """

    alpha: float = 0.001
    noise_sd: float = 0.01
    seed: int | None = None
    singular_policy: str = "exclude"
    ridge_eps: float = 1e-10
    normalizer: str = "symmetric"

    def __post_init__(self) -> None:
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if self.singular_policy not in ("exclude", "ridge"):
            raise ValueError(f"unknown singular_policy {self.singular_policy!r}")
        if self.normalizer not in ("symmetric", "left-weighted"):
            raise ValueError(f"unknown normalizer {self.normalizer!r}")
        if not any(self.alpha in table for table in CRITICAL_VALUES.values()):
            raise UnsupportedConfiguration(f"no critical value tabulated for alpha={self.alpha}")


@dataclass(frozen=True)
class StatisticTrace:
    """Statistic ``T_p(k)`` for ``k = 2..p``; ``NaN`` marks undefined splits."""

    T: np.ndarray
    sn: float
    argmax: int | None

    @property
    def k(self) -> np.ndarray:
        return np.arange(2, self.T.size + 2)


@dataclass
class ChangepointResult:
    respondent: int | None
    flagged: bool
    onset: int | None
    statistic: float
    critical: float
    alpha: float
    trace: np.ndarray = field(repr=False)
    diagnostic: str = ""


def critical_value(alpha: float, d: int) -> float:
    """Tabulated critical value for significance level ``alpha`` and dimension ``d``.

    >>> critical_value(0.001, 2)
    192.5
    """
    try:
        return CRITICAL_VALUES[int(d)][float(alpha)]
    except KeyError:
        raise UnsupportedConfiguration(
            f"no critical value tabulated for alpha={alpha}, d={d}; "
            f"supported: {sorted((a, dd) for dd, t in CRITICAL_VALUES.items() for a in t)}"
        ) from None


def _as_series(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2:
        raise ValueError(f"series must be (p,) or (p, d), got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("series contains non-finite values")
    return Y


def segment_mean(Y, a: int, b: int) -> np.ndarray:
    """Mean of items ``a..b`` (1-based, inclusive)."""
    Y = _as_series(Y)
    if not 1 <= a <= b <= Y.shape[0]:
        raise ValueError(f"empty or out-of-range segment a={a}, b={b}, p={Y.shape[0]}")
    return Y[a - 1 : b].mean(axis=0)


def _standardize(Y: np.ndarray) -> np.ndarray:
    # the statistic is invariant to per-column affine maps; this only aids numerics
    Z = Y - Y.mean(axis=0)
    sd = np.sqrt(np.mean(Z**2, axis=0))
    sd[sd == 0] = 1.0
    return Z / sd


def _prefix_normalizers(Z: np.ndarray) -> np.ndarray:
    """``W[m] = sum_{i<m} c_i c_i^T`` with ``c_i = S_i - (i/m) S_m``, for m = 0..p."""
    p, d = Z.shape
    S = np.vstack([np.zeros((1, d)), np.cumsum(Z, axis=0)])  # S[i] = sum of first i
    m = np.arange(1, p + 1)[:, None]
    i = np.arange(1, p + 1)[None, :]
    frac = np.where(i < m, i / m, 0.0)
    C = np.where((i < m)[..., None], S[1:][None, :, :], 0.0) - frac[..., None] * S[1:][:, None, :]
    W = np.zeros((p + 1, d, d))
    W[1:] = np.einsum("mia,mib->mab", C, C)
    return W


def _quadratic_forms(D: np.ndarray, V: np.ndarray, policy: str, eps: float) -> np.ndarray:
    """``D^T V^-1 D`` per row, NaN where ``V`` is numerically singular."""
    d = D.shape[1]
    if policy == "ridge":
        V = V + eps * np.eye(d)
    if d == 1:
        v = V[:, 0, 0]
        bad = ~(v > 1.0 / COND_LIMIT) if policy == "exclude" else v <= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            T = D[:, 0] ** 2 / v
    elif d == 2:
        a, b, c = V[:, 0, 0], V[:, 0, 1], V[:, 1, 1]
        det = a * c - b * b
        half_tr = 0.5 * (a + c)
        disc = np.sqrt(np.maximum(half_tr**2 - det, 0.0))
        lmax, lmin = half_tr + disc, half_tr - disc
        if policy == "exclude":
            bad = ~(lmax > 1.0 / COND_LIMIT) | ~(lmin > lmax / COND_LIMIT)
        else:
            bad = ~(det > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            T = (D[:, 0] ** 2 * c - 2 * D[:, 0] * D[:, 1] * b + D[:, 1] ** 2 * a) / det
    else:
        w = np.linalg.eigvalsh(V)
        bad = ~(w[:, -1] > 1.0 / COND_LIMIT) | ~(w[:, 0] > w[:, -1] / COND_LIMIT)
        T = np.full(D.shape[0], np.nan)
        ok = ~bad
        if ok.any():
            sol = np.linalg.solve(V[ok], D[ok][..., None])[..., 0]
            T[ok] = np.einsum("ka,ka->k", D[ok], sol)
    T = np.asarray(T, dtype=np.float64)
    T[bad] = np.nan
    return T


def sn_trace(Y, cfg: SnTestConfig | None = None) -> StatisticTrace:
    """Statistic ``T_p(k)`` for every split ``k = 2..p`` in O(p^2 d^2)."""
    cfg = cfg or SnTestConfig()
    Y = _as_series(Y)
    p = Y.shape[0]
    if p < 4:
        raise ValueError(f"series too short for the self-normalized test: p={p} < 4")
    Z = _standardize(Y)
    S = np.cumsum(Z, axis=0)
    k = np.arange(2, p + 1)
    D = (S[k - 2] - ((k - 1) / p)[:, None] * S[-1]) / math.sqrt(p)
    W_left = _prefix_normalizers(Z)
    W_right = _prefix_normalizers(Z[::-1])
    L = W_left[k - 1]
    R = W_right[p - k + 1]
    if cfg.normalizer == "left-weighted":
        R = R * (((p - k + 1) / (k - 1)) ** 2)[:, None, None]
    V = (L + R) / p**2
    T = _quadratic_forms(D, V, cfg.singular_policy, cfg.ridge_eps)
    if np.all(np.isnan(T)):
        return StatisticTrace(T, float("nan"), None)
    j = int(np.nanargmax(T))
    return StatisticTrace(T, float(T[j]), j + 2)


def sn_statistic(Y, k: int, cfg: SnTestConfig | None = None) -> float:
    """``T_p(k)`` for a single split; ``NaN`` when undefined."""
    Y = _as_series(Y)
    p = Y.shape[0]
    if not 2 <= k <= p:
        raise ValueError(f"k={k} out of range 2..{p}")
    return float(sn_trace(Y, cfg).T[k - 2])


def detect_changepoint(Y, cfg: SnTestConfig | None = None, respondent: int | None = None) -> ChangepointResult:
    """Test one series for a mean change and estimate its location.

    Jitter is not applied here; see :func:`inject_jitter`.
    """
    cfg = cfg or SnTestConfig()
    Y = _as_series(Y)
    K = critical_value(cfg.alpha, Y.shape[1])
    tr = sn_trace(Y, cfg)
    if tr.argmax is None:
        return ChangepointResult(
            respondent, False, None, float("nan"), K, cfg.alpha, tr.T,
            diagnostic="statistic undefined at every split",
        )
    flagged = tr.sn > K
    return ChangepointResult(
        respondent, bool(flagged), tr.argmax if flagged else None, tr.sn, K, cfg.alpha, tr.T
    )


def inject_jitter(values, noise_sd: float, seed=None) -> np.ndarray:
    """Add i.i.d. ``N(0, noise_sd^2)`` noise; ``seed`` may be an int or a Generator."""
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    values = np.asarray(values, dtype=np.float64)
    if noise_sd == 0:
        return values.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return values + rng.normal(0.0, noise_sd, size=values.shape)


def write_trace(result: ChangepointResult, path: str | os.PathLike) -> None:
    """Write ``(k, T_p(k))`` rows; undefined entries are left blank."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "T"])
        for k, t in enumerate(result.trace, start=2):
            w.writerow([k, "" if np.isnan(t) else repr(float(t))])
