"""Command-line entry point: ``coders {detect,simulate,screen,study,replay}``.

Every run writes a ``manifest.json`` next to its outputs. The manifest holds
the fully resolved configuration, so ``coders replay manifest.json`` rebuilds
the same output files byte for byte without consulting the original config
file.

Exit codes: 0 ok, 2 configuration error, 3 data error or unavailable
screener, 4 study replicate failure.
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import csv
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
import tempfile
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .autoencoder import DivergenceError, save_checkpoint
from .changepoint import UnsupportedConfiguration
from .data import DataError, DesignError, load_design, load_responses, write_design, write_responses
from .pipeline import CodersConfig, ReplicateFailure, run_coders, run_study, write_long_csv, write_results, write_series
from .screeners import (
    ANTONYM_CUTOFF,
    ANTONYM_PAIR_THRESHOLD,
    LONGSTRING_CUTOFF,
    RELIABILITY_CUTOFF,
    ScreenerUnavailable,
    longstring_index,
    personal_reliability,
    psychometric_antonym,
)
from .simulator import REGIMES, SpecError, simulate, spec_from_mapping, write_truth

log = logging.getLogger("coders")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_STUDY = 0, 2, 3, 4
ALPHAS = ("0.01", "0.005", "0.001")
DIM_ALIASES = {"both": "both", "re": "re-only", "lsp": "lsp-only", "re-only": "re-only", "lsp-only": "lsp-only"}


class ConfigError(ValueError):
    """Bad flags, config file entries or missing required inputs."""


# -- helpers ------------------------------------------------------------------


@contextlib.contextmanager
def atomic_output(path: Path):
    """Yield a temporary path in the target directory; rename over ``path`` on success."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _write(path: Path, writer: Callable[[Path], None]) -> str:
    with atomic_output(path) as tmp:
        writer(tmp)
    return str(path)


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _read_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if path is None:
        return cp
    if not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    return cp


def _section(cp: configparser.ConfigParser, name: str) -> dict[str, str]:
    return dict(cp.items(name)) if cp.has_section(name) else {}


def _coerce_field(cls, key: str, raw: str):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    if key not in types:
        raise ConfigError(f"unknown key {key!r} in [{cls.__name__}] settings")
    t = str(types[key])
    raw = raw.strip()
    try:
        if t.startswith("bool"):
            if raw.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError
            return raw.lower() in ("1", "true", "yes", "on")
        if t.startswith("int"):
            return None if raw.lower() in ("", "none") else int(raw)
        if t.startswith("float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def coders_config_from(values: dict[str, str], **overrides) -> CodersConfig:
    kw = {k: _coerce_field(CodersConfig, k, v) for k, v in values.items()}
    if "dims" in kw:
        kw["dims"] = _dims(kw["dims"])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return CodersConfig(**kw)
    except (UnsupportedConfiguration, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _dims(value: str) -> str:
    try:
        return DIM_ALIASES[value]
    except KeyError:
        raise ConfigError(f"dims must be one of {sorted(DIM_ALIASES)}, got {value!r}") from None


def _list(raw: str, conv=str) -> list:
    try:
        return [conv(t.strip()) for t in raw.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad list value {raw!r}") from None


def _manifest(command: str, resolved: dict, outputs: dict, timings: dict) -> dict:
    return {
        "subcommand": command,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "resolved": resolved,
        "outputs": outputs,
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }


def _write_manifest(out_dir: Path, manifest: dict) -> None:
    def w(p: Path) -> None:
        p.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")

    _write(out_dir / "manifest.json", w)


# -- detect -------------------------------------------------------------------


def resolve_detect(args) -> dict:
    cp = _read_config(args.config)
    cfg = coders_config_from(
        _section(cp, "coders"),
        dims=_dims(args.dims) if args.dims else None,
        alpha=float(args.alpha) if args.alpha else None,
        l_max=args.l_max,
        seed=args.seed,
    )
    if args.input is None:
        raise ConfigError("--input is required")
    if cfg.uses_re and args.design is None:
        raise ConfigError(f"--dims {cfg.dims} needs --design: the autoencoder bottleneck size is the number of constructs")
    if args.design is not None and not Path(args.design).is_file():
        raise ConfigError(f"design file not found: {args.design}")
    return {
        "input": str(Path(args.input).resolve()),
        "design": str(Path(args.design).resolve()) if args.design else None,
        "categories": args.categories,
        "coders": dataclasses.asdict(cfg),
        "emit_series": bool(args.emit_series),
        "jobs": args.jobs,
        "input_sha256": _sha256(args.input) if Path(args.input).is_file() else None,
    }


def run_detect(resolved: dict, out_dir: Path) -> dict:
    t0 = time.perf_counter()
    cfg = CodersConfig(**resolved["coders"])
    m = load_responses(resolved["input"], categories=resolved["categories"])
    design = load_design(resolved["design"]) if resolved["design"] else None
    if design is not None and design.p != m.p:
        raise DesignError(f"design lists {design.p} items but {resolved['input']} has {m.p} columns")
    timings = {"load": time.perf_counter() - t0}
    res = run_coders(m, design, cfg, jobs=resolved.get("jobs") or 1)
    timings["detect"] = time.perf_counter() - t0 - timings["load"]
    outputs = {"results": _write(out_dir / "results.csv", lambda p: write_results(res, p))}
    if resolved["emit_series"]:
        outputs["series"] = _write(out_dir / "series.csv", lambda p: write_series(res, p))
    if res.training is not None:
        outputs["checkpoint"] = _write(out_dir / "checkpoint.npz", lambda p: save_checkpoint(res.training, p))
    n_flag = int(res.flagged.sum())
    log.info("flagged %d of %d respondents (d=%d, alpha=%s)", n_flag, m.n, cfg.d, cfg.alpha)
    return {"outputs": outputs, "timings": timings}


# -- simulate -----------------------------------------------------------------


_SIM_OVERRIDES = ("n", "gamma", "onset_regime", "order")


def resolve_simulate(args) -> dict:
    if args.seed is None:
        raise ConfigError("simulate needs an explicit --seed")
    cp = _read_config(args.config)
    values = _section(cp, "simulation")
    for key in _SIM_OVERRIDES:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = str(v)
    if args.temporary:
        values["temporary"] = "true"
    values["seed"] = str(args.seed)
    try:
        spec_from_mapping(values)
    except (SpecError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid simulation spec: {exc}") from exc
    return {"simulation": values}


def _spec_from_resolved(values: dict):
    try:
        return spec_from_mapping(values)
    except (SpecError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid simulation spec: {exc}") from exc


def run_simulate(resolved: dict, out_dir: Path) -> dict:
    t0 = time.perf_counter()
    data = simulate(_spec_from_resolved(resolved["simulation"]))
    outputs = {
        "responses": _write(out_dir / "responses.csv", lambda p: write_responses(data.matrix, p)),
        "truth": _write(out_dir / "truth.csv", lambda p: write_truth(data.truth, p)),
        "design": _write(out_dir / "design.csv", lambda p: write_design(data.design, p)),
    }
    log.info("simulated %d respondents, %d careless", data.matrix.n, int(data.truth.careless.sum()))
    return {"outputs": outputs, "timings": {"simulate": time.perf_counter() - t0}}


# -- screen -------------------------------------------------------------------


def resolve_screen(args) -> dict:
    if args.input is None:
        raise ConfigError("--input is required")
    cp = _read_config(args.config)
    sec = _section(cp, "screen")
    requested = [name for name in ("longstring", "reliability", "antonym") if getattr(args, name)]
    if "reliability" in requested and args.design is None:
        raise ConfigError("--reliability needs --design")
    if args.design is not None and not Path(args.design).is_file():
        raise ConfigError(f"design file not found: {args.design}")

    def num(flag, key, default):
        if flag is not None:
            return float(flag)
        try:
            return float(sec.get(key, default))
        except ValueError:
            raise ConfigError(f"bad value for {key!r} in [screen]") from None

    return {
        "input": str(Path(args.input).resolve()),
        "design": str(Path(args.design).resolve()) if args.design else None,
        "categories": args.categories,
        "requested": requested,
        "longstring_cutoff": num(args.longstring_cutoff, "longstring_cutoff", LONGSTRING_CUTOFF),
        "reliability_cutoff": num(args.reliability_cutoff, "reliability_cutoff", RELIABILITY_CUTOFF),
        "antonym_cutoff": num(args.antonym_cutoff, "antonym_cutoff", ANTONYM_CUTOFF),
        "pair_threshold": num(args.pair_threshold, "pair_threshold", ANTONYM_PAIR_THRESHOLD),
        "input_sha256": _sha256(args.input) if Path(args.input).is_file() else None,
    }


def run_screen(resolved: dict, out_dir: Path) -> dict:
    t0 = time.perf_counter()
    m = load_responses(resolved["input"], categories=resolved["categories"])
    design = load_design(resolved["design"]) if resolved["design"] else None
    requested = resolved["requested"]
    wanted = requested or ["longstring", "reliability", "antonym"]
    results = {}
    if "longstring" in wanted:
        results["longstring"] = longstring_index(m, resolved["longstring_cutoff"])
    if "reliability" in wanted and design is not None:
        results["reliability"] = personal_reliability(m, design, resolved["reliability_cutoff"])
    if "antonym" in wanted:
        try:
            results["antonym"] = psychometric_antonym(m, resolved["pair_threshold"], resolved["antonym_cutoff"])
        except ScreenerUnavailable:
            if "antonym" in requested:
                raise
            log.info("antonym screener unavailable; column left blank")
    for r in results.values():
        for msg in r.diagnostics:
            log.info("%s: %s", r.name, msg)
    columns = [c for name in wanted for c in (name, f"{name}_flag")]

    def w(p: Path) -> None:
        with p.open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["respondent", *columns])
            for i in range(m.n):
                row = [i]
                for name in wanted:
                    r = results.get(name)
                    if r is None or np.isnan(r.scores[i]):
                        row += ["", "" if r is None else 0]
                    else:
                        row += [repr(float(r.scores[i])), int(r.flags[i])]
                out.writerow(row)

    outputs = {"scores": _write(out_dir / "scores.csv", w)}
    return {"outputs": outputs, "timings": {"screen": time.perf_counter() - t0}}


# -- study --------------------------------------------------------------------


def resolve_study(args) -> dict:
    if args.seed is None:
        raise ConfigError("study needs an explicit --seed")
    cp = _read_config(args.config)
    sim = _section(cp, "simulation")
    sim.setdefault("seed", "0")
    _spec_from_resolved(sim)
    sec = _section(cp, "study")
    variants = [_dims(v) for v in (args.dims or _list(sec.get("variants", "both,re-only,lsp-only")))]
    alphas = [float(a) for a in (args.alpha or _list(sec.get("alphas", "0.001,0.005,0.01")))]
    replicates = args.replicates if args.replicates is not None else int(sec.get("replicates", "100"))
    prevalences = args.prevalence
    if prevalences is None and "prevalences" in sec:
        prevalences = _list(sec["prevalences"], float)
    regimes = args.regime or (_list(sec["regimes"]) if "regimes" in sec else None)
    for r in regimes or []:
        if r not in REGIMES:
            raise ConfigError(f"unknown regime {r!r}; choose from {sorted(REGIMES)}")
    cfg = coders_config_from(_section(cp, "coders"), l_max=args.l_max)
    if replicates < 1:
        raise ConfigError("replicates must be at least 1")
    return {
        "simulation": sim,
        "coders": dataclasses.asdict(cfg),
        "variants": variants,
        "alphas": alphas,
        "replicates": replicates,
        "prevalences": prevalences,
        "regimes": regimes,
        "master_seed": args.seed,
        "jobs": args.jobs,
    }


def run_study_cmd(resolved: dict, out_dir: Path) -> dict:
    t0 = time.perf_counter()
    spec = _spec_from_resolved(resolved["simulation"])
    cfg = CodersConfig(**resolved["coders"])

    def progress(done, total, seed):
        log.info("replicate %d/%d done (seed %d)", done, total, seed)

    try:
        report = run_study(
            spec,
            variants=resolved["variants"],
            alphas=resolved["alphas"],
            replicates=resolved["replicates"],
            master_seed=resolved["master_seed"],
            prevalences=resolved["prevalences"],
            regimes=resolved["regimes"],
            cfg=cfg,
            jobs=resolved["jobs"] or 1,
            progress=progress,
        )
    except (UnsupportedConfiguration, ValueError) as exc:
        if isinstance(exc, ReplicateFailure):
            raise
        raise ConfigError(str(exc)) from exc
    outputs = {
        "report": _write(out_dir / "report.csv", report.write_csv),
        "replicates": _write(
            out_dir / "replicates.csv",
            lambda p: write_long_csv(
                report.replicate_rows, p,
                ("seed", "metric", "variant", "alpha", "regime", "prevalence", "type", "value"),
            ),
        ),
    }
    return {
        "outputs": outputs,
        "timings": {"study": time.perf_counter() - t0},
        "extra": {"replicate_seeds": report.manifest["replicate_seeds"], "config_hash": report.manifest["config_hash"]},
    }


# -- wiring -------------------------------------------------------------------


COMMANDS = {
    "detect": (resolve_detect, run_detect),
    "simulate": (resolve_simulate, run_simulate),
    "screen": (resolve_screen, run_screen),
    "study": (resolve_study, run_study_cmd),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coders", description="Careless-responding onset detection.")
    ap.add_argument("--version", action="version", version=f"coders {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, *, inputs=True):
        p.add_argument("--config", help="INI file with [coders]/[simulation]/[study]/[screen] sections")
        p.add_argument("--out-dir", default=".", help="output directory (default: current directory)")
        if inputs:
            p.add_argument("--input", help="respondent-by-item CSV (0 or blank = missing)")
            p.add_argument("--design", help="design CSV: one row per item with construct[,keying,trait]")
            p.add_argument("--categories", type=int, help="number of answer categories (default: max observed)")

    p = sub.add_parser("detect", help="flag careless respondents and their onset item")
    common(p)
    p.add_argument("--alpha", choices=ALPHAS)
    p.add_argument("--dims", choices=sorted(DIM_ALIASES))
    p.add_argument("--l-max", type=int, dest="l_max")
    p.add_argument("--seed", type=int, help="seed for network training and LSP jitter")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker cap for per-respondent tests")
    p.add_argument("--emit-series", action="store_true", help="also write per-item RE/LSP and statistic traces")

    p = sub.add_parser("simulate", help="generate a synthetic survey with ground truth")
    common(p, inputs=False)
    p.add_argument("--seed", type=int, help="respondent seed (required)")
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float, help="share of careless respondents")
    p.add_argument("--regime", dest="onset_regime", choices=sorted(REGIMES))
    p.add_argument("--order", choices=("random", "grouped", "none"))
    p.add_argument("--temporary", action="store_true", help="carelessness ends at a second changepoint")

    p = sub.add_parser("screen", help="traditional per-respondent screeners")
    common(p)
    for name in ("longstring", "reliability", "antonym"):
        p.add_argument(f"--{name}", action="store_true", help=f"request the {name} screener (failure is an error)")
    p.add_argument("--longstring-cutoff", type=float)
    p.add_argument("--reliability-cutoff", type=float)
    p.add_argument("--antonym-cutoff", type=float)
    p.add_argument("--pair-threshold", type=float, help="item-pair correlation for antonym pairs")

    p = sub.add_parser("study", help="simulation study over variants, alpha levels and design cells")
    common(p, inputs=False)
    p.add_argument("--seed", type=int, help="master seed (required)")
    p.add_argument("--alpha", choices=ALPHAS, nargs="+")
    p.add_argument("--dims", choices=sorted(DIM_ALIASES), nargs="+")
    p.add_argument("--l-max", type=int, dest="l_max")
    p.add_argument("--replicates", type=int)
    p.add_argument("--prevalence", type=float, nargs="+")
    p.add_argument("--regime", choices=sorted(REGIMES), nargs="+")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("replay", help="rerun a previous command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", help="output directory (default: the manifest's directory)")
    return ap


def _configure_logging() -> None:
    level = os.environ.get("CODERS_LOG", "info").upper()
    if level not in ("ERROR", "INFO", "DEBUG", "WARNING"):
        level = "INFO"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _execute(command: str, resolved: dict, out_dir: Path) -> None:
    _, runner = COMMANDS[command]
    for key in ("input", "design"):
        digest = resolved.get(f"{key}_sha256")
        if digest and Path(resolved[key]).is_file() and _sha256(resolved[key]) != digest:
            log.warning("%s %s changed since the manifest was written", key, resolved[key])
    t0 = time.perf_counter()
    info = runner(resolved, out_dir)
    info["timings"]["total"] = time.perf_counter() - t0
    manifest = _manifest(command, resolved, info["outputs"], info["timings"])
    manifest.update(info.get("extra", {}))
    _write_manifest(out_dir, manifest)


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            path = Path(args.manifest)
            try:
                manifest = json.loads(path.read_text())
                command, resolved = manifest["subcommand"], manifest["resolved"]
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
            if command not in COMMANDS:
                raise ConfigError(f"manifest names unknown subcommand {command!r}")
            out_dir = Path(args.out_dir) if args.out_dir else path.parent
        else:
            command = args.command
            resolved = COMMANDS[command][0](args)
            out_dir = Path(args.out_dir)
        _execute(command, resolved, out_dir)
        return EXIT_OK
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (UnsupportedConfiguration, SpecError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except ScreenerUnavailable as exc:
        log.error("screener unavailable: %s", exc)
        return EXIT_DATA
    except (DataError, DesignError, DivergenceError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except ReplicateFailure as exc:
        log.error("%s", exc)
        return EXIT_STUDY
    except ValueError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
