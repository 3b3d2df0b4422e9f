"""Response matrices, survey designs and CSV ingestion.

Missing responses are coded as the literal category ``0`` and take part in
every downstream computation as an extra answer category; nothing is
imputed.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MISSING = 0


class DataError(ValueError):
    """Raised for malformed or out-of-range response data."""


class DesignError(ValueError):
    """Raised for survey designs that cannot be reconciled with the data."""


@dataclass(frozen=True)
class ResponseMatrix:
    """Dense ``n x p`` matrix of integer rating-scale codes.

    Parameters
    ----------
    responses : ndarray of int, shape (n, p)
        Codes ``1..L_j``; ``0`` marks a missing response.
    categories : ndarray of int, shape (p,)
        Number of answer categories ``L_j`` per item.
    item_order : ndarray of int, shape (p,), optional
        Maps presented position to construct-order index.
    item_names : tuple of str, optional
        Column labels (taken from the CSV header when present).
    """

    responses: np.ndarray
    categories: np.ndarray
    item_order: np.ndarray | None = None
    item_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        x = np.array(self.responses)
        if x.ndim != 2:
            raise DataError(f"responses must be 2-dimensional, got shape {x.shape}")
        if x.size and not np.issubdtype(x.dtype, np.integer):
            if not np.all(np.isfinite(x)) or not np.all(x == np.round(x)):
                raise DataError("responses must be integer codes")
        x = x.astype(np.int64)
        n, p = x.shape
        if n < 1:
            raise DataError("need at least one respondent")
        if p < 2:
            raise DataError("need at least two items")

        cats = np.broadcast_to(np.asarray(self.categories, dtype=np.int64), (p,)).copy()
        if np.any(cats < 2):
            bad = int(np.flatnonzero(cats < 2)[0])
            raise DataError(f"item {bad} has fewer than 2 categories")
        low = x < 0
        high = x > cats[None, :]
        if low.any() or high.any():
            i, j = np.argwhere(low | high)[0]
            raise DataError(
                f"code {x[i, j]} out of range 0..{cats[j]} at row {i}, column {j}"
            )
        if self.item_order is not None:
            order = np.asarray(self.item_order, dtype=np.int64)
            if order.shape != (p,) or set(order.tolist()) != set(range(p)):
                raise DataError("item_order must be a permutation of 0..p-1")
            order.flags.writeable = False
            object.__setattr__(self, "item_order", order)
        if self.item_names is not None:
            names = tuple(str(s) for s in self.item_names)
            if len(names) != p:
                raise DataError(f"expected {p} item names, got {len(names)}")
            object.__setattr__(self, "item_names", names)

        x.flags.writeable = False
        cats.flags.writeable = False
        object.__setattr__(self, "responses", x)
        object.__setattr__(self, "categories", cats)

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def p(self) -> int:
        return self.responses.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(np.any(self.responses == MISSING))

    def subset(self, rows=None, cols=None) -> "ResponseMatrix":
        """Return a new matrix restricted to the given rows and/or columns."""
        rows = slice(None) if rows is None else np.asarray(rows)
        cols_idx = np.arange(self.p) if cols is None else np.asarray(cols)
        names = None
        if self.item_names is not None:
            names = tuple(self.item_names[j] for j in cols_idx)
        return ResponseMatrix(
            self.responses[rows][:, cols_idx],
            self.categories[cols_idx],
            item_names=names,
        )


@dataclass(frozen=True)
class SurveyDesign:
    """Mapping of items to the constructs they measure.

    ``construct_of_item`` and ``keying`` are indexed by presented item
    position. ``keying`` holds ``+1`` for positively and ``-1`` for negatively
    keyed items. ``trait_of_construct`` optionally groups constructs into
    higher-order traits (e.g. facets into personality domains).
    """

    construct_of_item: np.ndarray
    keying: np.ndarray | None = None
    s: int | None = None
    trait_of_construct: np.ndarray | None = None

    def __post_init__(self) -> None:
        c = np.asarray(self.construct_of_item, dtype=np.int64)
        if c.ndim != 1 or c.size == 0:
            raise DesignError("construct_of_item must be a non-empty vector")
        if np.any(c < 0):
            raise DesignError(f"negative construct index at item {int(np.argmin(c))}")
        s = int(c.max()) + 1 if self.s is None else int(self.s)
        if s < 1:
            raise DesignError("need at least one construct")
        if np.any(c >= s):
            j = int(np.flatnonzero(c >= s)[0])
            raise DesignError(f"item {j} mapped to construct {c[j]} but s={s}")
        keying = np.ones_like(c) if self.keying is None else np.asarray(self.keying, dtype=np.int64)
        if keying.shape != c.shape or not np.all(np.isin(keying, (-1, 1))):
            raise DesignError("keying must hold +1/-1 per item")
        traits = None
        if self.trait_of_construct is not None:
            traits = np.asarray(self.trait_of_construct, dtype=np.int64)
            if traits.shape != (s,) or np.any(traits < 0):
                raise DesignError("trait_of_construct must give a trait index per construct")
            traits.flags.writeable = False
        for arr in (c, keying):
            arr.flags.writeable = False
        object.__setattr__(self, "construct_of_item", c)
        object.__setattr__(self, "keying", keying)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "trait_of_construct", traits)

    @property
    def p(self) -> int:
        return self.construct_of_item.size

    def items_of(self, construct: int) -> np.ndarray:
        """Presented positions of the items measuring ``construct``, in order."""
        return np.flatnonzero(self.construct_of_item == construct)

    @classmethod
    def uniform(cls, p: int, s: int) -> "SurveyDesign":
        """Design with ``s`` constructs of (nearly) equal size in consecutive blocks."""
        return cls(np.arange(p) * s // p, s=s)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_design`; warnings never block a run."""

    n: int
    p: int
    s: int
    ratio: float
    items_per_construct: np.ndarray
    negative_fraction: float
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.warnings


def validate_design(m: ResponseMatrix, design: SurveyDesign) -> ValidationReport:
    """Check a design against the data and the low-dimensionality premise.

    Raises
    ------
    DesignError
        If the design does not cover exactly the matrix columns or a
        construct index is out of range.
    """
    if design.p != m.p:
        raise DesignError(f"design covers {design.p} items but data has {m.p}")
    counts = np.bincount(design.construct_of_item, minlength=design.s)
    warnings = []
    if design.s >= m.p:
        warnings.append("no dimension reduction possible: s >= p")
    elif design.s > m.p / 2:
        warnings.append(f"s={design.s} is not much smaller than p={m.p}")
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        warnings.append(f"constructs without items: {empty.tolist()}")
    neg = float(np.mean(design.keying < 0))
    if neg == 0.0:
        warnings.append("no negatively keyed items; invariable responding may look attentive")
    return ValidationReport(
        n=m.n,
        p=m.p,
        s=design.s,
        ratio=design.s / m.p,
        items_per_construct=counts,
        negative_fraction=neg,
        warnings=warnings,
    )


def _parse_cell(token: str, missing: frozenset[str], row: int, col: int) -> int:
    tok = token.strip()
    if tok in missing:
        return MISSING
    try:
        return int(tok)
    except ValueError:
        try:
            val = float(tok)
        except ValueError:
            raise DataError(f"unparseable cell {token!r} at row {row}, column {col}") from None
        if not val.is_integer():
            raise DataError(f"non-integer cell {token!r} at row {row}, column {col}")
        return int(val)


def _looks_like_header(cells: Sequence[str], missing: frozenset[str]) -> bool:
    for c in cells:
        tok = c.strip()
        if tok in missing:
            continue
        try:
            float(tok)
        except ValueError:
            return True
    return False


def read_responses(
    text: str | io.TextIOBase,
    *,
    delimiter: str = ",",
    header: bool | None = None,
    missing_codes: Iterable[str] = ("", "NA"),
    categories: int | Sequence[int] | None = None,
) -> ResponseMatrix:
    """Parse responses from CSV text or an open text stream.

    ``header=None`` auto-detects a header row (any non-numeric, non-missing
    cell in the first row). ``categories`` overrides the per-item category
    count, which otherwise defaults to the largest observed code per column
    (but at least 2).
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    missing = frozenset(missing_codes)
    rows = [r for r in csv.reader(stream, delimiter=delimiter) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError("no data rows")
    names = None
    if header is None:
        header = _looks_like_header(rows[0], missing)
    if header:
        names = tuple(c.strip() for c in rows[0])
        rows = rows[1:]
        if not rows:
            raise DataError("header present but no data rows")
    width = len(rows[0]) if names is None else len(names)
    data = np.empty((len(rows), width), dtype=np.int64)
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"ragged row {i}: expected {width} cells, got {len(r)}")
        for j, tok in enumerate(r):
            data[i, j] = _parse_cell(tok, missing, i, j)
    if categories is None:
        cats = np.maximum(data.max(axis=0), 2)
    else:
        cats = np.broadcast_to(np.asarray(categories, dtype=np.int64), (width,))
    return ResponseMatrix(data, cats, item_names=names)


def load_responses(
    path: str | os.PathLike,
    *,
    delimiter: str = ",",
    header: bool | None = None,
    missing_codes: Iterable[str] = ("", "NA"),
    categories: int | Sequence[int] | None = None,
) -> ResponseMatrix:
    """Load a respondent-by-item CSV file; see :func:`read_responses`."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        return read_responses(
            fh,
            delimiter=delimiter,
            header=header,
            missing_codes=missing_codes,
            categories=categories,
        )


def write_responses(m: ResponseMatrix, path: str | os.PathLike, *, delimiter: str = ",") -> None:
    """Write ``m`` as CSV; a header row is written only if items are named."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if m.item_names is not None:
            w.writerow(m.item_names)
        w.writerows(m.responses.tolist())


def load_design(path: str | os.PathLike) -> SurveyDesign:
    """Read a design CSV with columns ``construct`` and optional ``keying``, ``trait``.

    One row per item in presented order. ``keying`` accepts ``+``/``-``,
    ``1``/``-1`` or ``pos``/``neg``. A ``trait`` column, when present, gives
    the trait of the item's construct and must be constant within a construct.
    """
    path = Path(path)
    if not path.is_file():
        raise DesignError(f"no such design file: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "construct" not in rows[0]:
        raise DesignError("design file needs a 'construct' column")
    key_map = {"+": 1, "1": 1, "pos": 1, "positive": 1, "-": -1, "-1": -1, "neg": -1, "negative": -1}
    constructs, keying, trait_pairs = [], [], {}
    for i, r in enumerate(rows):
        try:
            c = int(r["construct"])
        except ValueError:
            raise DesignError(f"bad construct index {r['construct']!r} at design row {i}") from None
        constructs.append(c)
        k = (r.get("keying") or "+").strip().lower()
        if k not in key_map:
            raise DesignError(f"bad keying {k!r} at design row {i}")
        keying.append(key_map[k])
        if r.get("trait") not in (None, ""):
            t = int(r["trait"])
            if trait_pairs.setdefault(c, t) != t:
                raise DesignError(f"construct {c} assigned to several traits")
    traits = None
    if trait_pairs:
        s = max(constructs) + 1
        traits = np.array([trait_pairs.get(c, 0) for c in range(s)])
    return SurveyDesign(np.array(constructs), np.array(keying), trait_of_construct=traits)


def write_design(design: SurveyDesign, path: str | os.PathLike) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["item", "construct", "keying"]
        if design.trait_of_construct is not None:
            cols.append("trait")
        w.writerow(cols)
        for j, (c, k) in enumerate(zip(design.construct_of_item, design.keying)):
            row = [j, int(c), "+" if k > 0 else "-"]
            if design.trait_of_construct is not None:
                row.append(int(design.trait_of_construct[c]))
            w.writerow(row)
