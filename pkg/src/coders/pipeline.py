"""End-to-end detection (RE + LSP -> jitter -> changepoint test) and evaluation."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .autoencoder import AutoencoderConfig, TrainingResult, reconstruction_errors, train
from .changepoint import SnTestConfig, critical_value, detect_changepoint, sn_trace
from .data import ResponseMatrix, SurveyDesign
from .lsp import default_l_max, lsp_matrix
from .simulator import ATTENTIVE, GroundTruth, SimulationSpec, simulate

log = logging.getLogger(__name__)

DIMS = ("both", "re-only", "lsp-only")
METRICS = ("fpr", "fnr", "mae")


@dataclass(frozen=True)
class CodersConfig:
    """Detection settings.

    ``epochs`` etc. are forwarded to :class:`AutoencoderConfig`; ``seed``
    seeds both network initialisation/shuffling and the LSP jitter.
    """

    dims: str = "both"
    alpha: float = 0.001
    l_max: int | None = None
    noise_sd: float = 0.01
    seed: int = 0
    singular_policy: str = "exclude"
    normalizer: str = "symmetric"
    delta: float = 1.0
    batch_size: int = 10
    learning_rate: float = 1e-4
    epochs: int = 100
    clamp: bool = True

    def __post_init__(self) -> None:
        if self.dims not in DIMS:
            raise ValueError(f"dims must be one of {DIMS}, got {self.dims!r}")
        critical_value(self.alpha, self.d)

    @property
    def d(self) -> int:
        return 2 if self.dims == "both" else 1

    @property
    def uses_re(self) -> bool:
        return self.dims != "lsp-only"

    @property
    def uses_lsp(self) -> bool:
        return self.dims != "re-only"

    def test_config(self) -> SnTestConfig:
        return SnTestConfig(
            alpha=self.alpha,
            noise_sd=self.noise_sd,
            seed=self.seed,
            singular_policy=self.singular_policy,
            normalizer=self.normalizer,
        )

    def autoencoder_config(self, p: int, s: int) -> AutoencoderConfig:
        return AutoencoderConfig(
            p=p,
            bottleneck_size=s,
            delta=self.delta,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.seed,
            clamp=self.clamp,
        )


@dataclass
class CodersResult:
    results: list
    series: np.ndarray
    re: np.ndarray | None
    lsp: np.ndarray | None
    training: TrainingResult | None
    config: CodersConfig

    @property
    def flagged(self) -> np.ndarray:
        return np.array([r.flagged for r in self.results])

    @property
    def onsets(self) -> np.ndarray:
        return np.array([r.onset if r.onset is not None else 0 for r in self.results])


@dataclass
class Measurements:
    """Unjittered and jittered per-item measurements shared across variants."""

    re: np.ndarray | None
    lsp: np.ndarray | None
    lsp_jittered: np.ndarray | None
    training: TrainingResult | None


def _jitter_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))


def measure(
    m: ResponseMatrix,
    design: SurveyDesign | None,
    cfg: CodersConfig,
    *,
    need_re: bool | None = None,
    need_lsp: bool | None = None,
    training: TrainingResult | None = None,
) -> Measurements:
    need_re = cfg.uses_re if need_re is None else need_re
    need_lsp = cfg.uses_lsp if need_lsp is None else need_lsp
    re = lsp = jit = None
    if need_re:
        if training is None:
            if design is None:
                raise ValueError("the reconstruction-error dimension needs a survey design (s)")
            if design.s >= m.p:
                raise ValueError(f"need s < p for the autoencoder, got s={design.s}, p={m.p}")
            training = train(m, cfg.autoencoder_config(m.p, design.s), design)
        re = reconstruction_errors(training.params, m, clamp=cfg.clamp).values
    if need_lsp:
        l_max = cfg.l_max if cfg.l_max is not None else min(default_l_max(m.categories), m.p - 1)
        lsp = lsp_matrix(m, l_max).astype(np.float64)
        jit = lsp + _jitter_rng(cfg.seed).normal(0.0, cfg.noise_sd, size=lsp.shape) if cfg.noise_sd else lsp.copy()
    return Measurements(re, lsp, jit, training)


def _series(meas: Measurements, dims: str) -> np.ndarray:
    if dims == "both":
        return np.stack([meas.re, meas.lsp_jittered], axis=2)
    if dims == "re-only":
        return meas.re[:, :, None]
    return meas.lsp_jittered[:, :, None]


def detect_all(series: np.ndarray, test_cfg: SnTestConfig, jobs: int = 1) -> list:
    """Test every respondent; ``jobs > 1`` splits respondents over worker processes."""
    if jobs == 1 or series.shape[0] < 2:
        return [detect_changepoint(Y, test_cfg, respondent=i) for i, Y in enumerate(series)]
    from joblib import Parallel, delayed

    chunks = np.array_split(np.arange(series.shape[0]), min(jobs, series.shape[0]))
    parts = Parallel(n_jobs=jobs)(
        delayed(lambda idx: [detect_changepoint(series[i], test_cfg, respondent=int(i)) for i in idx])(c)
        for c in chunks
    )
    return [r for part in parts for r in part]


def run_coders(
    m: ResponseMatrix,
    design: SurveyDesign | None,
    cfg: CodersConfig | None = None,
    *,
    training: TrainingResult | None = None,
    jobs: int = 1,
) -> CodersResult:
    """Train (when needed), measure, and test every respondent for an onset.

    The autoencoder is fit once on the full, possibly contaminated, matrix.
    A pre-trained ``training`` result skips fitting.
    """
    cfg = cfg or CodersConfig()
    meas = measure(m, design, cfg, training=training)
    series = _series(meas, cfg.dims)
    try:
        results = detect_all(series, cfg.test_config(), jobs)
    except ValueError as exc:
        raise ValueError(f"changepoint test failed: {exc}") from exc
    return CodersResult(results, series, meas.re, meas.lsp, meas.training, cfg)


@dataclass
class EvaluationReport:
    """Rates are ``None`` when their denominator is empty."""

    fpr: float | None
    fnr: float | None
    mae: float | None
    by_type: dict[str, dict[str, float | None]]
    counts: dict[str, int]
    config: dict = field(default_factory=dict)


def _rate(num: int, den: int) -> float | None:
    return num / den if den else None


def evaluate(flagged: Sequence[bool] | list, onsets, truth: GroundTruth | None = None) -> EvaluationReport:
    """FPR over true attentive, FNR over true careless, MAE over flagged true careless.

    Accepts either ``(results, truth)`` with a list of changepoint results or
    ``(flagged, onsets, truth)`` arrays. For temporary carelessness the onset
    error is measured against the first changepoint.
    """
    if truth is None:
        results, truth = flagged, onsets
        flagged = np.array([r.flagged for r in results], dtype=bool)
        onsets = np.array([r.onset if r.onset is not None else 0 for r in results])
    flagged = np.asarray(flagged, dtype=bool)
    onsets = np.asarray(onsets)
    if flagged.size != truth.n or onsets.size != truth.n:
        raise ValueError(f"results cover {flagged.size} respondents, ground truth {truth.n}")
    careless = truth.careless
    att = ~careless
    err = np.abs(onsets - truth.onset).astype(np.float64)

    def group(mask):
        hits = mask & flagged
        return {
            "fnr": _rate(int((mask & ~flagged).sum()), int(mask.sum())),
            "mae": float(err[hits].mean()) if hits.any() else None,
            "n": int(mask.sum()),
            "flagged": int(hits.sum()),
        }

    overall = group(careless)
    by_type = {}
    for t in sorted(set(truth.types[careless].tolist())):
        g = group(truth.types == t)
        by_type[t] = {"fnr": g["fnr"], "mae": g["mae"]}
    counts = {
        "attentive": int(att.sum()),
        "careless": int(careless.sum()),
        "false_positives": int((att & flagged).sum()),
        "true_positives": int((careless & flagged).sum()),
    }
    for t in by_type:
        counts[f"n_{t}"] = int((truth.types == t).sum())
    return EvaluationReport(
        fpr=_rate(counts["false_positives"], counts["attentive"]),
        fnr=overall["fnr"],
        mae=overall["mae"],
        by_type=by_type,
        counts=counts,
    )


def _variant_flags(series: np.ndarray, alphas: Sequence[float], d: int, test_cfg: SnTestConfig):
    """Flags and onsets per alpha from one trace per respondent."""
    sn = np.empty(series.shape[0])
    argmax = np.zeros(series.shape[0], dtype=np.int64)
    for i, Y in enumerate(series):
        tr = sn_trace(Y, test_cfg)
        sn[i] = tr.sn
        argmax[i] = tr.argmax or 0
    out = {}
    for a in alphas:
        flag = np.nan_to_num(sn, nan=-np.inf) > critical_value(a, d)
        out[a] = (flag, np.where(flag, argmax, 0))
    return out


@dataclass
class StudyReport:
    """Long-format rows ``(metric, variant, alpha, regime, prevalence, type, value)``."""

    rows: list[dict]
    replicate_rows: list[dict]
    manifest: dict

    def value(self, metric: str, variant: str = "both", alpha: float | None = None,
              type: str = "all", regime: str | None = None, prevalence: float | None = None):
        hits = [
            r for r in self.rows
            if r["metric"] == metric and r["variant"] == variant and r["type"] == type
            and (alpha is None or r["alpha"] == alpha)
            and (regime is None or r["regime"] == regime)
            and (prevalence is None or r["prevalence"] == prevalence)
        ]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {metric}/{variant}/{alpha}/{type}/{regime}/{prevalence}")
        return hits[0]["value"]

    def write_csv(self, path: str | os.PathLike) -> None:
        write_long_csv(self.rows, path)


REPORT_COLUMNS = ("metric", "variant", "alpha", "regime", "prevalence", "type", "value", "replicates")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_long_csv(rows: Iterable[dict], path: str | os.PathLike, columns: Sequence[str] = REPORT_COLUMNS) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _spec_dict(spec: SimulationSpec) -> dict:
    d = asdict(spec)
    for k in ("correlation", "marginals", "construct_of_item"):
        if d.get(k) is not None:
            d[k] = config_hash(np.asarray(d[k]).tolist())
    return d


class ReplicateFailure(RuntimeError):
    def __init__(self, seed: int, reason: str):
        super().__init__(seed, reason)
        self.seed = seed
        self.reason = reason

    def __str__(self) -> str:
        return f"replicate with seed {self.seed} failed: {self.reason}"


def replicate_seeds(master_seed: int, replicates: int) -> list[int]:
    ss = np.random.SeedSequence(master_seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(replicates)]


def _run_replicate(spec: SimulationSpec, variants, alphas, cfg: CodersConfig, seed: int) -> list[dict]:
    spec = replace(spec, seed=seed)
    data = simulate(spec)
    cfg = replace(cfg, seed=seed)
    need_re = any(v != "lsp-only" for v in variants)
    need_lsp = any(v != "re-only" for v in variants)
    meas = measure(data.matrix, data.design, cfg, need_re=need_re, need_lsp=need_lsp)
    rows = []
    for variant in variants:
        series = _series(meas, variant)
        d = 2 if variant == "both" else 1
        for a, (flag, onset) in _variant_flags(series, alphas, d, cfg.test_config()).items():
            rep = evaluate(flag, onset, data.truth)
            base = dict(variant=variant, alpha=a, regime=spec.onset_regime, prevalence=spec.gamma, seed=seed)
            rows.append(dict(base, metric="fpr", type="all", value=rep.fpr))
            rows.append(dict(base, metric="fnr", type="all", value=rep.fnr))
            rows.append(dict(base, metric="mae", type="all", value=rep.mae))
            for t, g in rep.by_type.items():
                rows.append(dict(base, metric="fnr", type=t, value=g["fnr"]))
                rows.append(dict(base, metric="mae", type=t, value=g["mae"]))
    return rows


def _aggregate(rows: list[dict]) -> list[dict]:
    keys = ("metric", "variant", "alpha", "regime", "prevalence", "type")
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r["value"])
    out = []
    for key, vals in groups.items():
        defined = [v for v in vals if v is not None]
        if defined:  # metrics undefined in every replicate (e.g. FNR at gamma=0) are left out
            out.append(dict(zip(keys, key), value=float(np.mean(defined)), replicates=len(defined)))
    return out


def run_study(
    spec: SimulationSpec,
    variants: Sequence[str] = DIMS,
    alphas: Sequence[float] = (0.001, 0.005, 0.01),
    replicates: int = 100,
    *,
    master_seed: int = 0,
    prevalences: Sequence[float] | None = None,
    regimes: Sequence[str] | None = None,
    cfg: CodersConfig | None = None,
    jobs: int = 1,
    progress=None,
) -> StudyReport:
    """Simulate, detect and evaluate ``replicates`` times per design cell; average metrics.

    Replicate ``r`` of every cell uses the same derived seed, so cells differ
    only in the manipulated factor. Metrics with an empty denominator in a
    replicate are skipped when averaging.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    for v in variants:
        if v not in DIMS:
            raise ValueError(f"unknown variant {v!r}")
    cfg = cfg or CodersConfig()
    for v in variants:
        for a in alphas:
            critical_value(a, 2 if v == "both" else 1)
    prevalences = [spec.gamma] if prevalences is None else list(prevalences)
    regimes = [spec.onset_regime] if regimes is None else list(regimes)
    seeds = replicate_seeds(master_seed, replicates)
    cells = [(replace(spec, gamma=g, onset_regime=r), s) for r in regimes for g in prevalences for s in seeds]

    def one(cell):
        cspec, seed = cell
        try:
            return _run_replicate(cspec, list(variants), list(alphas), cfg, seed)
        except Exception as exc:  # noqa: BLE001 - reported with the replicate seed
            raise ReplicateFailure(seed, f"{type(exc).__name__}: {exc}") from exc

    if jobs == 1:
        per_cell = []
        for i, cell in enumerate(cells):
            per_cell.append(one(cell))
            if progress:
                progress(i + 1, len(cells), cell[1])
    else:
        from joblib import Parallel, delayed

        per_cell = Parallel(n_jobs=jobs)(delayed(one)(c) for c in cells)
    rep_rows = [r for rows in per_cell for r in rows]
    manifest = {
        "version": __version__,
        "master_seed": master_seed,
        "replicate_seeds": seeds,
        "replicates": replicates,
        "variants": list(variants),
        "alphas": list(alphas),
        "prevalences": prevalences,
        "regimes": regimes,
        "spec": _spec_dict(spec),
        "coders": asdict(cfg),
    }
    manifest["config_hash"] = config_hash({k: manifest[k] for k in ("spec", "coders", "variants", "alphas")})
    return StudyReport(_aggregate(rep_rows), rep_rows, manifest)


def write_results(res: CodersResult, path: str | os.PathLike) -> None:
    """One row per respondent: flag, onset, statistic, alpha, critical value."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["respondent", "flagged", "onset", "statistic", "alpha", "critical"])
        for r in res.results:
            w.writerow([
                r.respondent,
                int(r.flagged),
                r.onset if r.onset is not None else "",
                _fmt(float(r.statistic)),
                repr(r.alpha),
                repr(r.critical),
            ])


def write_series(res: CodersResult, path: str | os.PathLike) -> None:
    """Long format ``respondent, item, <dims...>, T`` for post-hoc inspection."""
    names = {"both": ["re", "lsp"], "re-only": ["re"], "lsp-only": ["lsp"]}[res.config.dims]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["respondent", "item", *names, "T"])
        for i, (Y, r) in enumerate(zip(res.series, res.results)):
            for j in range(Y.shape[0]):
                t = "" if j == 0 else _fmt(float(r.trace[j - 1]))
                w.writerow([i, j + 1, *(repr(float(v)) for v in Y[j]), t])
