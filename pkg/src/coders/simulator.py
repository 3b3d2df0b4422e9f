"""Synthetic rating-scale surveys with injected partial carelessness.

Attentive responses come from a Gaussian copula: a latent multivariate
normal draw with a block (trait > facet > item) correlation structure is cut
at per-item thresholds implied by the item's marginal category
probabilities. Negatively keyed items have their latent sign flipped and
their marginal mirrored. Careless respondents are then overwritten from a
sampled onset item onward.
"""

from __future__ import annotations

import configparser
import csv
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .data import ResponseMatrix, SurveyDesign

CARELESS_TYPES = ("random", "extreme", "straightlining", "pattern", "middling")
DEFAULT_TYPES = ("random", "extreme", "straightlining", "pattern")
ATTENTIVE = "attentive"

# Onset item sets as fractions of p (inclusive bounds).
REGIMES = {
    "baseline": (0.1, 0.9),
    "early": (0.1, 0.5),
    "late": (0.5, 0.9),
}

# Marginal of a positively keyed item before the per-item shift.
DEFAULT_MARGINAL = (0.06, 0.16, 0.26, 0.34, 0.18)


class SpecError(ValueError):
    """Invalid simulation specification."""


@dataclass(frozen=True)
class BlockStructure:
    """Latent correlation by shared facet / shared trait / otherwise."""

    traits: int = 5
    facets_per_trait: int = 6
    items_per_facet: int = 10
    within_facet: float = 0.5
    within_trait: float = 0.25
    between_trait: float = 0.05

    @property
    def p(self) -> int:
        return self.traits * self.facets_per_trait * self.items_per_facet

    @property
    def s(self) -> int:
        return self.traits * self.facets_per_trait

    def facet_of_item(self) -> np.ndarray:
        return np.arange(self.p) // self.items_per_facet

    def trait_of_facet(self) -> np.ndarray:
        return np.arange(self.s) // self.facets_per_trait

    def correlation(self) -> np.ndarray:
        facet = self.facet_of_item()
        trait = self.trait_of_facet()[facet]
        R = np.full((self.p, self.p), self.between_trait)
        R[trait[:, None] == trait[None, :]] = self.within_trait
        R[facet[:, None] == facet[None, :]] = self.within_facet
        np.fill_diagonal(R, 1.0)
        return R


@dataclass(frozen=True)
class SimulationSpec:
    """Complete description of one synthetic experiment.

    Either ``structure`` or an explicit ``correlation`` (construct order)
    with ``marginals`` (``p x L`` category probabilities) and
    ``construct_of_item`` defines the attentive population. ``seed`` drives
    the respondents; ``instrument_seed`` fixes keying, marginals and item
    order, so replicates with different ``seed`` share one questionnaire.
    """

    n: int = 500
    L: int = 5
    structure: BlockStructure | None = field(default_factory=BlockStructure)
    correlation: np.ndarray | None = None
    marginals: np.ndarray | None = None
    construct_of_item: np.ndarray | None = None
    gamma: float = 0.0
    types: tuple[str, ...] = DEFAULT_TYPES
    onset_regime: str = "baseline"
    temporary: bool = False
    negative_fraction: float = 0.5
    marginal: tuple[float, ...] = DEFAULT_MARGINAL
    marginal_shift_sd: float = 0.5
    order: str = "random"
    seed: int = 0
    instrument_seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise SpecError("n must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise SpecError(f"gamma must lie in [0, 1], got {self.gamma}")
        unknown = set(self.types) - set(CARELESS_TYPES)
        if unknown or not self.types:
            raise SpecError(f"unknown careless types {sorted(unknown)}")
        if self.onset_regime not in REGIMES:
            raise SpecError(f"unknown onset regime {self.onset_regime!r}")
        if self.order not in ("random", "grouped", "none"):
            raise SpecError(f"unknown item order {self.order!r}")
        if self.correlation is None and self.structure is None:
            raise SpecError("need a block structure or an explicit correlation matrix")
        if self.correlation is not None and self.marginals is None:
            raise SpecError("an explicit correlation matrix needs explicit marginals")
        if len(self.marginal) != self.L:
            raise SpecError(f"default marginal has {len(self.marginal)} categories, L={self.L}")
        object.__setattr__(self, "types", tuple(self.types))

    @property
    def p(self) -> int:
        if self.correlation is not None:
            return int(np.asarray(self.correlation).shape[0])
        return self.structure.p

    def per_type(self) -> int:
        return math.floor(self.gamma * self.n / len(self.types))


@dataclass(frozen=True)
class Instrument:
    """A fixed questionnaire: latent correlation, thresholds and design, in presented order."""

    correlation: np.ndarray
    thresholds: np.ndarray
    design: SurveyDesign
    order: np.ndarray
    categories: np.ndarray

    @property
    def p(self) -> int:
        return self.correlation.shape[0]

    def marginals(self) -> np.ndarray:
        cdf = ndtr(self.thresholds)
        cdf = np.hstack([np.zeros((self.p, 1)), cdf, np.ones((self.p, 1))])
        return np.diff(cdf, axis=1)


@dataclass
class GroundTruth:
    types: np.ndarray
    onset: np.ndarray
    offset: np.ndarray

    @property
    def careless(self) -> np.ndarray:
        return self.types != ATTENTIVE

    @property
    def n(self) -> int:
        return self.types.size

    def subset(self, rows) -> "GroundTruth":
        return GroundTruth(self.types[rows], self.onset[rows], self.offset[rows])


@dataclass
class SimulatedData:
    matrix: ResponseMatrix
    truth: GroundTruth
    design: SurveyDesign
    attentive: ResponseMatrix
    instrument: Instrument


def regime_bounds(regime: str, p: int) -> tuple[int, int]:
    """Inclusive onset bounds for ``regime`` on a ``p``-item survey."""
    lo, hi = REGIMES[regime]
    return math.ceil(round(lo * p, 9)), math.floor(round(hi * p, 9))


def temporary_bounds(p: int) -> tuple[tuple[int, int], tuple[int, int]]:
    first = regime_bounds("early", p)
    return first, (first[1] + 1, math.floor(round(0.9 * p, 9)))


def nearest_correlation(R: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Clip negative eigenvalues and rescale to a unit diagonal."""
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or not np.all(np.isfinite(R)):
        raise SpecError("correlation must be a finite square matrix")
    R = 0.5 * (R + R.T)
    w, V = np.linalg.eigh(R)
    if w.min() >= floor:
        return R
    w = np.maximum(w, floor)
    R = (V * w) @ V.T
    d = np.sqrt(np.diag(R))
    if np.any(d <= 0):
        raise SpecError("correlation matrix cannot be repaired to positive semi-definite")
    R = R / d[:, None] / d[None, :]
    if np.linalg.eigvalsh(R).min() < -1e-8:
        raise SpecError("correlation matrix cannot be repaired to positive semi-definite")
    return R


def thresholds_from_marginals(probs: np.ndarray) -> np.ndarray:
    """Latent standard-normal cut points, shape ``(p, L-1)``."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise SpecError("marginal probabilities must be non-negative and sum to 1")
    cdf = np.cumsum(probs, axis=1)[:, :-1]
    return ndtri(np.clip(cdf, 0.0, 1.0))


def _presentation_order(spec: SimulationSpec, construct: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = construct.size
    if spec.order == "none":
        return np.arange(p)
    if spec.order == "random":
        return rng.permutation(p)
    # grouped: shuffle within constructs, then shuffle construct order
    blocks = [rng.permutation(np.flatnonzero(construct == c)) for c in np.unique(construct)]
    return np.concatenate([blocks[i] for i in rng.permutation(len(blocks))])


def build_instrument(spec: SimulationSpec) -> Instrument:
    """Questionnaire implied by ``spec`` (deterministic in ``spec.instrument_seed``)."""
    rng = np.random.default_rng(spec.instrument_seed)
    L = spec.L
    if spec.correlation is not None:
        R = nearest_correlation(spec.correlation)
        p = R.shape[0]
        probs = np.asarray(spec.marginals, dtype=np.float64)
        if probs.shape != (p, L):
            raise SpecError(f"marginals must have shape ({p}, {L})")
        tau = thresholds_from_marginals(probs)
        construct = (
            np.zeros(p, dtype=np.int64)
            if spec.construct_of_item is None
            else np.asarray(spec.construct_of_item, dtype=np.int64)
        )
        keying = np.ones(p, dtype=np.int64)
        traits = None
    else:
        st = spec.structure
        p = st.p
        construct = st.facet_of_item()
        traits = st.trait_of_facet()
        n_neg = int(round(spec.negative_fraction * p))
        keying = np.ones(p, dtype=np.int64)
        keying[rng.choice(p, size=n_neg, replace=False)] = -1
        R = st.correlation() * np.outer(keying, keying)
        base = thresholds_from_marginals(np.asarray(spec.marginal))[0]
        shift = rng.normal(0.0, spec.marginal_shift_sd, size=p)
        tau = base[None, :] + shift[:, None]
        # mirror negatively keyed items: categories reversed, latent sign flipped
        neg = keying < 0
        tau[neg] = -tau[neg][:, ::-1]
    order = _presentation_order(spec, construct, rng)
    design = SurveyDesign(
        construct[order],
        keying[order],
        s=int(construct.max()) + 1,
        trait_of_construct=traits,
    )
    return Instrument(
        correlation=R[np.ix_(order, order)],
        thresholds=tau[order],
        design=design,
        order=order,
        categories=np.full(p, L, dtype=np.int64),
    )


def _latent_factor(R: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(R)
    return V * np.sqrt(np.clip(w, 0.0, None))


def generate_attentive(spec: SimulationSpec, instrument: Instrument | None = None) -> ResponseMatrix:
    """Attentive ordinal responses by thresholding correlated latent normals."""
    inst = instrument or build_instrument(spec)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(2)[0])
    A = _latent_factor(inst.correlation)
    Z = rng.standard_normal((spec.n, inst.p)) @ A.T
    codes = 1 + (Z[:, :, None] > inst.thresholds[None, :, :]).sum(axis=2)
    return ResponseMatrix(codes, inst.categories, item_order=inst.order)


def careless_responses(kind: str, size: int, L: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` consecutive responses of a given careless type."""
    if kind == "random":
        return rng.integers(1, L + 1, size=size)
    if kind == "extreme":
        return rng.choice(np.array([1, L]), size=size)
    if kind == "straightlining":
        return np.full(size, rng.integers(1, L + 1))
    if kind == "pattern":
        length = int(rng.integers(2, 6))
        while True:
            pattern = rng.integers(1, L + 1, size=length)
            if np.any(pattern != pattern[0]):
                break
        return np.resize(pattern, size)
    if kind == "middling":
        if L < 3:
            raise SpecError("middling needs at least 3 categories")
        return rng.integers(2, L, size=size)
    raise SpecError(f"unknown careless type {kind!r}")


def inject_carelessness(m: ResponseMatrix, spec: SimulationSpec) -> tuple[ResponseMatrix, GroundTruth]:
    """Overwrite ``floor(gamma n / #types)`` respondents per type from their onset on."""
    n, p = m.n, m.p
    per_type = spec.per_type()
    types = np.full(n, ATTENTIVE, dtype=object)
    onset = np.zeros(n, dtype=np.int64)
    offset = np.zeros(n, dtype=np.int64)
    if per_type == 0:
        if spec.gamma > 0:
            raise SpecError(f"gamma={spec.gamma} with n={n} leaves no respondent for each of {len(spec.types)} types")
        return m, GroundTruth(types, onset, offset)
    if spec.temporary:
        (lo, hi), (lo2, hi2) = temporary_bounds(p)
        if lo2 > hi2:
            raise SpecError(f"temporary regime does not fit into p={p}")
    else:
        lo, hi = regime_bounds(spec.onset_regime, p)
    if not 2 <= lo <= hi <= p:
        raise SpecError(f"onset bounds [{lo}, {hi}] do not fit into p={p}")

    ss = np.random.SeedSequence(spec.seed).spawn(3)[2]
    rng = np.random.default_rng(ss)
    chosen = rng.permutation(n)[: per_type * len(spec.types)]
    x = m.responses.copy()
    L = int(m.categories.max())
    for t, kind in enumerate(spec.types):
        for i in chosen[t * per_type : (t + 1) * per_type]:
            k = int(rng.integers(lo, hi + 1))
            end = p if not spec.temporary else int(rng.integers(lo2, hi2 + 1)) - 1
            x[i, k - 1 : end] = careless_responses(kind, end - k + 1, L, rng)
            types[i] = kind
            onset[i] = k
            offset[i] = end if spec.temporary else 0
    out = ResponseMatrix(x, m.categories, item_order=m.item_order, item_names=m.item_names)
    return out, GroundTruth(types, onset, offset)


def simulate(spec: SimulationSpec) -> SimulatedData:
    inst = build_instrument(spec)
    clean = generate_attentive(spec, inst)
    dirty, truth = inject_carelessness(clean, spec)
    return SimulatedData(dirty, truth, inst.design, clean, inst)


def drop_traits(m: ResponseMatrix, design: SurveyDesign, keep: Sequence[int]) -> tuple[ResponseMatrix, SurveyDesign]:
    """Remove all items of traits not in ``keep``; constructs are reindexed."""
    keep = sorted(set(int(t) for t in keep))
    if not keep:
        raise SpecError("keep at least one trait")
    if design.trait_of_construct is None:
        raise SpecError("design has no trait grouping")
    trait_of_item = design.trait_of_construct[design.construct_of_item]
    cols = np.flatnonzero(np.isin(trait_of_item, keep))
    old = np.unique(design.construct_of_item[cols])
    remap = {int(c): i for i, c in enumerate(old)}
    new_design = SurveyDesign(
        np.array([remap[int(c)] for c in design.construct_of_item[cols]]),
        design.keying[cols],
        s=len(old),
        trait_of_construct=design.trait_of_construct[old],
    )
    return m.subset(cols=cols), new_design


def drop_random_traits(m, design, n_drop: int, seed=None):
    traits = np.unique(design.trait_of_construct)
    rng = np.random.default_rng(seed)
    dropped = rng.choice(traits, size=n_drop, replace=False)
    return drop_traits(m, design, [t for t in traits if t not in dropped])


def write_truth(truth: GroundTruth, path: str | os.PathLike) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["respondent", "type", "onset", "offset"])
        for i in range(truth.n):
            careless = truth.types[i] != ATTENTIVE
            w.writerow([
                i,
                truth.types[i],
                int(truth.onset[i]) if careless else "",
                int(truth.offset[i]) if careless and truth.offset[i] else "",
            ])


def read_truth(path: str | os.PathLike) -> GroundTruth:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    types = np.array([r["type"] for r in rows], dtype=object)
    onset = np.array([int(r["onset"] or 0) for r in rows])
    offset = np.array([int(r["offset"] or 0) for r in rows])
    return GroundTruth(types, onset, offset)


_INT_KEYS = {"n", "L", "seed", "instrument_seed", "traits", "facets_per_trait", "items_per_facet"}
_FLOAT_KEYS = {"gamma", "negative_fraction", "marginal_shift_sd", "within_facet", "within_trait", "between_trait"}


def spec_from_mapping(values: dict) -> SimulationSpec:
    """Build a spec from flat string key/value pairs (config-file form)."""
    block_fields = {"traits", "facets_per_trait", "items_per_facet", "within_facet", "within_trait", "between_trait"}
    spec_kw, block_kw = {}, {}
    known = _INT_KEYS | _FLOAT_KEYS | {"types", "marginal", "temporary", "onset_regime", "order"}
    for key, raw in values.items():
        if key not in known:
            raise SpecError(f"unknown simulation key {key!r}")
        raw = str(raw).strip()
        try:
            if key in _INT_KEYS:
                val = int(raw)
            elif key in _FLOAT_KEYS:
                val = float(raw)
            elif key in ("types", "marginal"):
                parts = [t.strip() for t in raw.split(",") if t.strip()]
                val = tuple(float(t) for t in parts) if key == "marginal" else tuple(parts)
            elif key == "temporary":
                val = raw.lower() in ("1", "true", "yes", "on")
            else:
                val = raw
        except ValueError as exc:
            raise SpecError(f"bad value for {key!r}: {raw!r}") from exc
        (block_kw if key in block_fields else spec_kw)[key] = val
    return SimulationSpec(structure=BlockStructure(**block_kw), **spec_kw)


def read_simulation_spec(path: str | os.PathLike, section: str = "simulation") -> SimulationSpec:
    """Read a spec from the ``[simulation]`` section of an INI-style file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise SpecError(f"cannot read spec file {path}")
    if not cp.has_section(section):
        raise SpecError(f"spec file lacks a [{section}] section")
    return spec_from_mapping(dict(cp.items(section)))


def with_gamma(spec: SimulationSpec, gamma: float, **changes) -> SimulationSpec:
    return replace(spec, gamma=gamma, **changes)
