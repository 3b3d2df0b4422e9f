"""Independent reference implementations used only by the tests.

They are deliberately slow and written from the definitions, not from the
production code paths.
"""

from __future__ import annotations

import itertools

import numpy as np


def _periodic(x, a: int, b: int, l: int) -> bool:
    """Is x[a..b] (1-based, inclusive) an exact repetition with period l?"""
    return all(x[i - 1] == x[i + l - 1] for i in range(a, b - l + 1))


def l_pattern_oracle(x, l: int) -> list[int]:
    """Enumerate maximal period-l windows left to right and assign their values.

    A window closed by a mismatch reports its length minus ``l - 1`` on its
    first positions up to the mismatching comparison. The window that runs
    into the end of the vector follows the three truncation cases: long
    enough windows report their full length, shorter ones report length
    minus ``l``, and the last ``l`` positions otherwise fall back to 1.
    """
    x = list(x)
    p = len(x)
    out = [0] * (p + 1)
    a = 1
    while True:
        b = max(bb for bb in range(a, p + 1) if _periodic(x, a, bb, l))
        width = b - a + 1
        if b < p:
            for j in range(a, b - l + 2):
                out[j] = width - l + 1
            a = b - l + 2
            continue
        if width >= 2 * l - 1:
            for j in range(a, p + 1):
                out[j] = width
        elif width > l:
            for j in range(a, p - l + 1):
                out[j] = width - l
            for j in range(p - l + 1, p + 1):
                out[j] = 1
        else:
            for j in range(p - l + 1, p + 1):
                out[j] = 1
        return out[1:]


def run_lengths_oracle(x) -> list[int]:
    """Length of the identical-value run each position belongs to."""
    out: list[int] = []
    for _, grp in itertools.groupby(x):
        n = len(list(grp))
        out += [n] * n
    return out


def longstring_oracle(x) -> int:
    return max(len(list(g)) for _, g in itertools.groupby(x))


def _mean(Y, a: int, b: int) -> np.ndarray:
    return Y[a - 1 : b].mean(axis=0)


def sn_trace_oracle(Y, left_weighted: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """T_p(k) for k = 2..p straight from the segment-mean formulas.

    Returns the statistic and the condition number of each normalizer, so
    callers can tell near-singular splits apart.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    p, d = Y.shape
    T = np.full(p - 1, np.nan)
    cond = np.full(p - 1, np.inf)
    for k in range(2, p + 1):
        D = (k - 1) * (p - k + 1) / p**1.5 * (_mean(Y, 1, k - 1) - _mean(Y, k, p))
        L = np.zeros((d, d))
        for i in range(1, k - 1):
            c = _mean(Y, 1, i) - _mean(Y, i + 1, k - 1)
            L += i**2 * (k - 1 - i) ** 2 / (p**2 * (k - 1) ** 2) * np.outer(c, c)
        R = np.zeros((d, d))
        right_den = (k - 1) ** 2 if left_weighted else (p - k + 1) ** 2
        for i in range(k + 1, p + 1):
            c = _mean(Y, i, p) - _mean(Y, k, i - 1)
            R += (p - i + 1) ** 2 * (i - k) ** 2 / (p**2 * right_den) * np.outer(c, c)
        V = L + R
        w = np.linalg.eigvalsh(V)
        cond[k - 2] = w[-1] / w[0] if w[0] > 0 else np.inf
        if w[0] > 0:
            T[k - 2] = float(D @ np.linalg.solve(V, D))
    return T, cond


def gradient_errors(params, x, cats, step: float = 1e-5, floor: float = 1e-6) -> np.ndarray:
    """Relative error of every analytic partial against central differences."""
    from coders.autoencoder import loss_and_gradients

    _, grads = loss_and_gradients(params, x, cats)
    errs = []
    for arrays, garrays in ((params.weights, grads.weights), (params.intercepts, grads.intercepts)):
        for arr, g in zip(arrays, garrays):
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + step
                up, _ = loss_and_gradients(params, x, cats)
                arr[idx] = orig - step
                down, _ = loss_and_gradients(params, x, cats)
                arr[idx] = orig
                fd = (up - down) / (2 * step)
                errs.append(abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), floor))
    return np.array(errs)
