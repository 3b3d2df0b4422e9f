"""Traditional per-respondent screeners: longstring, personal reliability, psychometric antonym.

Default cutoffs flag respondents with a longstring above 6, a personal
reliability below 0.3, or a (sign-reversed) psychometric antonym score
below -0.03.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import MISSING, ResponseMatrix, SurveyDesign
from .lsp import longstring

log = logging.getLogger(__name__)

LONGSTRING_CUTOFF = 6
RELIABILITY_CUTOFF = 0.3
ANTONYM_CUTOFF = -0.03
ANTONYM_PAIR_THRESHOLD = -0.60


class ScreenerUnavailable(RuntimeError):
    """The screener cannot be computed for this data (e.g. no antonym pairs)."""


@dataclass
class ScreenerResult:
    """Scores (``NaN`` = undefined) and flags for one screener."""

    name: str
    scores: np.ndarray
    flags: np.ndarray
    cutoff: float
    diagnostics: list[str] = field(default_factory=list)


def longstring_index(m: ResponseMatrix | np.ndarray, cutoff: int = LONGSTRING_CUTOFF) -> ScreenerResult:
    x = m.responses if isinstance(m, ResponseMatrix) else np.asarray(m)
    scores = np.array([longstring(row) for row in x], dtype=np.float64)
    return ScreenerResult("longstring", scores, scores > cutoff, cutoff)


def _rowwise_corr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pearson correlation of matching rows, ignoring NaN pairs; NaN if degenerate."""
    ok = ~(np.isnan(a) | np.isnan(b))
    cnt = ok.sum(axis=1)
    a = np.where(ok, a, 0.0)
    b = np.where(ok, b, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ma = a.sum(axis=1) / cnt
        mb = b.sum(axis=1) / cnt
        da = np.where(ok, a - ma[:, None], 0.0)
        db = np.where(ok, b - mb[:, None], 0.0)
        sab = (da * db).sum(axis=1)
        saa = (da * da).sum(axis=1)
        sbb = (db * db).sum(axis=1)
        r = sab / np.sqrt(saa * sbb)
    tiny = 1e-12
    r[(cnt < 2) | (saa <= tiny) | (sbb <= tiny)] = np.nan
    return np.clip(r, -1.0, 1.0)


def personal_reliability(
    m: ResponseMatrix,
    design: SurveyDesign,
    cutoff: float = RELIABILITY_CUTOFF,
) -> ScreenerResult:
    """Even-odd consistency across constructs with Spearman-Brown correction.

    Within each construct the items (in presented order) are split into odd
    and even positions; negatively keyed items are reverse-scored for this
    purpose only and missing responses are ignored. The two vectors of
    half-scale means are correlated per respondent and corrected by
    ``2r / (1 + r)``, floored at -1. Undefined scores are never flagged.
    """
    if design.p != m.p:
        raise ValueError(f"design covers {design.p} items but data has {m.p}")
    x = m.responses.astype(np.float64)
    x[m.responses == MISSING] = np.nan
    keyed = np.where(design.keying[None, :] < 0, m.categories[None, :] + 1 - x, x)
    odd = np.empty((m.n, design.s))
    even = np.empty((m.n, design.s))
    for c in range(design.s):
        items = design.items_of(c)
        if items.size < 2:
            raise ValueError(f"construct {c} has fewer than 2 items")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-missing half
            odd[:, c] = np.nanmean(keyed[:, items[0::2]], axis=1)
            even[:, c] = np.nanmean(keyed[:, items[1::2]], axis=1)
    r = _rowwise_corr(odd, even)
    with np.errstate(invalid="ignore", divide="ignore"):
        # the correction overshoots -1 for r < -1/3; keep scores on the correlation scale
        corrected = np.maximum(np.where(r <= -1.0, -1.0, 2 * r / (1 + r)), -1.0)
    undefined = int(np.isnan(corrected).sum())
    diags = [f"{undefined} respondents with undefined reliability (zero variance)"] if undefined else []
    flags = np.where(np.isnan(corrected), False, corrected < cutoff)
    return ScreenerResult("reliability", corrected, flags, cutoff, diags)


def antonym_pairs(m: ResponseMatrix, pair_threshold: float = ANTONYM_PAIR_THRESHOLD) -> np.ndarray:
    """Item pairs ``(j, k)``, ``j < k``, whose sample correlation is at most ``pair_threshold``."""
    x = m.responses.astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        R = np.corrcoef(x, rowvar=False)
    R = np.nan_to_num(R, nan=0.0)
    j, k = np.nonzero(np.triu(R <= pair_threshold, k=1))
    return np.column_stack([j, k])


def psychometric_antonym(
    m: ResponseMatrix,
    pair_threshold: float = ANTONYM_PAIR_THRESHOLD,
    cutoff: float = ANTONYM_CUTOFF,
) -> ScreenerResult:
    """Per-respondent correlation across strongly negatively correlated item pairs.

    The sign is reversed so that low scores indicate carelessness. Raises
    :class:`ScreenerUnavailable` when no pair reaches ``pair_threshold``.
    The score depends on the whole sample through the pair selection. A
    single pair is treated like none, since a per-respondent correlation
    needs at least two pairs.
    """
    if m.n < 10:
        log.warning("psychometric antonym with n=%d respondents is unstable", m.n)
    pairs = antonym_pairs(m, pair_threshold)
    if len(pairs) < 2:
        raise ScreenerUnavailable(f"{len(pairs)} item pairs with correlation <= {pair_threshold}; need at least 2")
    x = m.responses.astype(np.float64)
    x[m.responses == MISSING] = np.nan
    r = _rowwise_corr(x[:, pairs[:, 0]], x[:, pairs[:, 1]])
    score = -r
    diags = [f"{len(pairs)} antonym pairs"]
    undefined = int(np.isnan(score).sum())
    if undefined:
        diags.append(f"{undefined} respondents with undefined antonym score")
    flags = np.where(np.isnan(score), False, score < cutoff)
    return ScreenerResult("antonym", score, flags, cutoff, diags)


def screen_all(
    m: ResponseMatrix,
    design: SurveyDesign | None = None,
    *,
    longstring_cutoff: float = LONGSTRING_CUTOFF,
    reliability_cutoff: float = RELIABILITY_CUTOFF,
    antonym_cutoff: float = ANTONYM_CUTOFF,
    pair_threshold: float = ANTONYM_PAIR_THRESHOLD,
) -> dict[str, ScreenerResult | None]:
    """Run every screener that the inputs allow; unavailable ones map to ``None``."""
    out: dict[str, ScreenerResult | None] = {
        "longstring": longstring_index(m, longstring_cutoff),
        "reliability": None,
        "antonym": None,
    }
    if design is not None:
        out["reliability"] = personal_reliability(m, design, reliability_cutoff)
    try:
        out["antonym"] = psychometric_antonym(m, pair_threshold, antonym_cutoff)
    except ScreenerUnavailable as exc:
        log.info("antonym screener unavailable: %s", exc)
    return out
