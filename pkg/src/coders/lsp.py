"""LongStringPattern (LSP): item-level invariability measurements.

An l-pattern sequence assigns every response the length of the recurring
period-``l`` streak it belongs to (1 if none); the LSP sequence is the
item-wise maximum over pattern lengths ``1..l_max``. With ``l = 1`` the
maximum over items recovers the classical longstring index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ResponseMatrix


@dataclass(frozen=True)
class PatternSequence:
    l: int
    values: np.ndarray


@dataclass(frozen=True)
class LspSequence:
    values: np.ndarray
    l_max: int


def _check_length(x: np.ndarray, l: int, name: str = "l") -> None:
    p = x.shape[-1]
    if not 1 <= l <= p - 1:
        raise ValueError(f"{name}={l} out of range 1..{p - 1} for p={p}")


def l_pattern_values(x, l: int) -> np.ndarray:
    """Raw l-pattern values of a single response vector (1-d int array)."""
    x = np.asarray(x)
    _check_length(x, l)
    p = x.size
    xs = x.tolist()
    out = np.empty(p, dtype=np.int64)
    streak = 1
    start = 0
    # 0-based: positions k and k+l compared for k = 0..p-l-1
    for k in range(p - l):
        if xs[k] == xs[k + l]:
            streak += 1
        else:
            out[start : k + 1] = streak
            start = k + 1
            streak = 1
    if streak >= l:
        # ongoing streak seen completely at least once: extend to the end
        out[start:] = streak + l - 1
    elif streak > 1:
        out[start : p - l] = streak - 1
        out[p - l :] = 1
    else:
        out[p - l :] = 1
    return out


def l_pattern(x, l: int) -> PatternSequence:
    """l-pattern sequence of one respondent's responses.

    Examples
    --------
    >>> l_pattern([3, 2, 3, 3, 1, 4, 1, 1, 1], 1).values.tolist()
    [1, 1, 2, 2, 1, 1, 3, 3, 3]
    """
    return PatternSequence(l, l_pattern_values(x, l))


def default_l_max(categories) -> int:
    """Largest answer-category count, the default maximum pattern length."""
    return int(np.max(categories))


def lsp_sequence(x, l_max: int) -> LspSequence:
    """Item-wise maximum of the l-pattern sequences for ``l = 1..l_max``."""
    x = np.asarray(x)
    _check_length(x, l_max, "l_max")
    vals = l_pattern_values(x, 1)
    for l in range(2, l_max + 1):
        np.maximum(vals, l_pattern_values(x, l), out=vals)
    return LspSequence(vals, l_max)


def lsp_matrix(m: ResponseMatrix | np.ndarray, l_max: int | None = None) -> np.ndarray:
    """LSP sequences for every respondent, shape ``(n, p)``.

    Missing responses (code 0) are matched like any other category. When
    ``l_max`` is omitted it defaults to the largest category count, capped
    at ``p - 1``.
    """
    if isinstance(m, ResponseMatrix):
        x = m.responses
        if l_max is None:
            l_max = min(default_l_max(m.categories), m.p - 1)
    else:
        x = np.asarray(m)
        if l_max is None:
            raise ValueError("l_max is required for a bare array")
    return np.stack([lsp_sequence(row, l_max).values for row in x])


def longstring(x) -> int:
    """Longest run of identical consecutive values in ``x``."""
    x = np.asarray(x)
    if x.size == 0:
        return 0
    breaks = np.flatnonzero(x[1:] != x[:-1])
    edges = np.concatenate(([-1], breaks, [x.size - 1]))
    return int(np.diff(edges).max())
