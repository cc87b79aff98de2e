"""Command-line front end.

Subcommands: ``pca`` (component spectrum of a data file), ``weights``
(bagged calibration weights), ``estimate`` (totals under the configured
estimators), ``simulate`` (Monte Carlo study) and ``sweep`` (study along a
grid of c or alpha).

Input CSV: header row, first column is the unit id, remaining columns are
``x_*`` auxiliary variables, ``y_*`` responses, and optionally ``pi``
(inclusion probability of a sampled unit).  Files without ``pi`` are treated
as complete populations (a census when weights are requested).  Missing or
non-numeric cells are hard errors.

All outputs are deterministic given the seed; every file records its
provenance, including defaulted parameters.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, _core
from .bagging import BaggingConfig, run_bagging, run_bagging_exact
from .calibration import (
    POLICY_ERROR,
    POLICY_PSEUDO_INVERSE,
    CalibrationSpec,
    chi2_calibrate,
)
from .errors import (
    BagcalibError,
    DuplicateUnitId,
    NonNumericCell,
    OutOfRange,
    ParseError,
)
from .linalg import standardize_columns
from .pca import component_totals, fit_pca, fit_pca_from_sample, identity_model
from .rng import SCHEME
from .sampling import REJECTIVE, SYSTEMATIC, ObservedDesign, SamplingDesign
from .simulation import (
    BAG,
    BAG_PCA,
    CAL,
    HT,
    KINDS,
    PCA,
    EstimatorConfig,
    SimulationReport,
    SweepResult,
    SyntheticSpec,
    generate_population,
    make_population,
    run_study,
    sweep,
)

_SAMPLERS = {"systematic": SYSTEMATIC, "rejective": REJECTIVE}
_POLICIES = {"error": POLICY_ERROR, "pseudo-inverse": POLICY_PSEUDO_INVERSE}

# Owning module of each error class, for machine-parsable error lines.
_ERROR_MODULES = {
    "ZeroVarianceColumn": "linalg", "DimensionMismatch": "linalg",
    "NotSymmetric": "linalg", "NoConvergence": "linalg",
    "DegenerateWeights": "linalg", "OutOfRange": "linalg",
    "InfeasibleSize": "sampling", "SingularSystem": "calibration",
    "ZeroMean": "calibration", "AllIterationsFailed": "bagging",
    "ZeroTotal": "simulation", "InsufficientRuns": "simulation",
    "InfeasibleSpec": "simulation", "ParseError": "cli",
    "NonNumericCell": "cli", "DuplicateUnitId": "cli",
}


def _fmt(x) -> str:
    """17 significant digits: floats survive a round trip through text."""
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass(frozen=True)
class IngestResult:
    unit_ids: tuple[str, ...]
    aux_names: tuple[str, ...]
    aux: np.ndarray
    responses: dict[str, np.ndarray]
    pi: np.ndarray | None
    diagnostics: dict


def ingest_csv(path) -> IngestResult:
    """Read a unit-level CSV; see the module docstring for the format."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, None, "empty file") from None
        if len(header) < 2:
            raise ParseError(1, None, "need a unit id column plus data columns")
        cols = [c.strip() for c in header]
        for name in cols[1:]:
            if not (name.startswith("x_") or name.startswith("y_") or name == "pi"):
                raise ParseError(
                    1, name,
                    "expected headers x_* (auxiliary), y_* (response) or pi",
                )
        if cols.count("pi") > 1:
            raise ParseError(1, "pi", "duplicate pi column")

        ids: list[str] = []
        seen: set[str] = set()
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(cols):
                raise ParseError(line_no, None,
                                 f"expected {len(cols)} cells, found {len(row)}")
            unit = row[0].strip()
            if unit in seen:
                raise DuplicateUnitId(unit)
            seen.add(unit)
            ids.append(unit)
            values = []
            for name, cell in zip(cols[1:], row[1:]):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise NonNumericCell(line_no, name,
                                         f"cannot parse {cell!r} as a number") from None
            rows.append(values)
    if not rows:
        raise ParseError(2, None, "no data rows")

    data = np.asarray(rows)
    aux_names = tuple(c for c in cols[1:] if c.startswith("x_"))
    aux = data[:, [cols[1:].index(c) for c in aux_names]]
    responses = {
        c: data[:, j] for j, c in enumerate(cols[1:]) if c.startswith("y_")
    }
    pi = data[:, cols[1:].index("pi")] if "pi" in cols[1:] else None
    if pi is not None and (np.any(pi <= 0) or np.any(pi > 1)):
        bad = int(np.flatnonzero((pi <= 0) | (pi > 1))[0])
        raise ParseError(bad + 2, "pi", "inclusion probability must be in (0, 1]")
    binary = [c for j, c in enumerate(aux_names)
              if np.isin(aux[:, j], (0.0, 1.0)).all()]
    diagnostics = {
        "rows": len(ids),
        "aux_columns": len(aux_names),
        "response_columns": len(responses),
        "binary_columns": binary,
        "has_pi": pi is not None,
    }
    return IngestResult(tuple(ids), aux_names, aux, responses, pi, diagnostics)


def _read_totals(path, aux_names) -> np.ndarray:
    """Single-row CSV of population totals for the x_* columns."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
            row = next(reader)
        except StopIteration:
            raise ParseError(1, None, "totals file needs a header and one row") from None
    totals = {}
    for name, cell in zip(header, row):
        try:
            totals[name] = float(cell)
        except ValueError:
            raise NonNumericCell(2, name, f"cannot parse {cell!r} as a number") from None
    missing = [c for c in aux_names if c not in totals]
    if missing:
        raise ParseError(1, missing[0], "total missing for this auxiliary variable")
    return np.array([totals[c] for c in aux_names])


# ---------------------------------------------------------------------------
# Configuration handling


def _load_config_file(path) -> dict:
    with Path(path).open() as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, None, f"invalid config JSON: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ParseError(1, None, "config file must hold a JSON object")
    return cfg


# Knobs that cannot change results; they are not part of run provenance.
_EXECUTION_ONLY = ("threads", "out_dir", "config")


def _merge(args: argparse.Namespace, defaults: dict) -> tuple[dict, list[str]]:
    """Merge flag values, config-file values and defaults (that order)."""
    file_cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = [k for k in file_cfg if k not in defaults]
    if unknown:
        raise ParseError(1, unknown[0], "unknown config key")
    merged = {}
    defaulted = []
    for key, fallback in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
        elif key in file_cfg:
            merged[key] = file_cfg[key]
        else:
            merged[key] = fallback
            if key not in _EXECUTION_ONLY:
                defaulted.append(key)
    return merged, defaulted


def _out_dir(cfg) -> Path:
    out = cfg.get("out_dir") or os.environ.get("BAGCALIB_OUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_estimators(text: str) -> tuple[EstimatorConfig, ...]:
    aliases = {k.upper(): k for k in KINDS}
    aliases["BAGPCA"] = BAG_PCA
    aliases["BAG_PCA"] = BAG_PCA
    configs = []
    for item in text.split(","):
        key = item.strip().upper()
        if key not in aliases:
            raise OutOfRange(f"unknown estimator {item.strip()!r}; choose from {KINDS}")
        configs.append(EstimatorConfig(aliases[key]))
    if not configs:
        raise OutOfRange("estimator list is empty")
    return tuple(configs)


def _resolve_exact_vars(text: str, aux_names) -> tuple[int, ...]:
    indices = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if item in aux_names:
            indices.append(aux_names.index(item))
        elif item.isdigit():
            indices.append(int(item))
        else:
            raise OutOfRange(f"unknown auxiliary variable {item!r}")
    return tuple(indices)


# ---------------------------------------------------------------------------
# Output writers


def _metadata_lines(pairs) -> list[str]:
    return [f"# {key} {value}" for key, value in pairs]


def _write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n")


def _provenance_sidecar(path: Path, payload: dict) -> None:
    sidecar = path.with_name(path.name + ".provenance.json")
    sidecar.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _report_lines(report: SimulationReport, command: str, extra_meta) -> list[str]:
    meta = report.meta
    pairs = [("command", command), ("version", __version__),
             ("backend", _core.BACKEND), ("rng_scheme", SCHEME)]
    pairs += list(extra_meta)
    for key in ("runs", "n", "N", "q", "seed", "B", "c", "alpha", "sampler",
                "singularity_policy"):
        pairs.append((key, meta[key]))
    lines = _metadata_lines(pairs)
    lines.append("[metrics]")
    lines.append("estimator\tresponse\trb\trsd\trrmse\tvarrht")
    for label, per_resp in report.metrics.items():
        for resp, row in per_resp.items():
            lines.append("\t".join([label, resp, _fmt(row.rb), _fmt(row.rsd),
                                    _fmt(row.rrmse), _fmt(row.varrht)]))
    lines.append("[cv]")
    lines.append("estimator\tmin\tq1\tmedian\tmean\tq3\tmax")
    for label, s in report.cv_summary.items():
        lines.append("\t".join([label, _fmt(s.min), _fmt(s.q1), _fmt(s.median),
                                _fmt(s.mean), _fmt(s.q3), _fmt(s.max)]))
    lines.append("[g_range]")
    lines.append("estimator\tmean_min\tmean_max\tmin\tmax\tmean_abs_dev")
    for label, s in report.g_range.items():
        lines.append("\t".join([label, _fmt(s.mean_min), _fmt(s.mean_max),
                                _fmt(s.min), _fmt(s.max), _fmt(s.mean_abs_dev)]))
    lines.append("[diagnostics]")
    lines.append("estimator\trank_deficient_runs\tsingular_iterations")
    for label, diag in meta["diagnostics"].items():
        lines.append("\t".join([label, str(diag["rank_deficient_runs"]),
                                str(diag["singular_iterations"])]))
    return lines


def _sweep_lines(result: SweepResult, extra_meta) -> list[str]:
    pairs = [("command", "sweep"), ("version", __version__),
             ("backend", _core.BACKEND), ("rng_scheme", SCHEME)]
    pairs += list(extra_meta)
    for key in ("axis", "response", "runs", "seed", "n", "B", "c", "alpha", "sampler"):
        pairs.append((key, result.meta[key]))
    lines = _metadata_lines(pairs)
    lines.append("value\trb\trsd\trrmse\tvarrht\tcv_mean\tmean_min_g\tmean_max_g"
                 "\tmin_g\tmax_g\tmean_abs_dev")
    for row in result.rows:
        lines.append("\t".join(_fmt(v) for v in (
            row.value, row.rb, row.rsd, row.rrmse, row.varrht, row.cv_mean,
            row.mean_min_g, row.mean_max_g, row.min_g, row.max_g, row.mean_abs_dev,
        )))
    return lines


# ---------------------------------------------------------------------------
# Workflow assembly shared by weights/estimate


@dataclass(frozen=True)
class _Workflow:
    """Everything needed to calibrate: model, design, scores and totals."""

    data: IngestResult
    design: SamplingDesign | ObservedDesign
    model: object
    std_values: np.ndarray | None  # standardized auxiliary rows of the sample
    std_totals: np.ndarray | None  # totals of the standardized auxiliaries
    comp_totals: np.ndarray | None  # totals of the component scores
    census: bool


def _build_workflow(data: IngestResult, cfg, need_calibration: bool = True) -> _Workflow:
    n_rows = data.aux.shape[0]
    if data.pi is None:
        # Census: every unit observed with probability one.
        design = SamplingDesign(n_rows, np.arange(n_rows), np.ones(n_rows),
                                np.ones(n_rows))
        std = standardize_columns(data.aux, data.aux_names)
        model = fit_pca(std)
        return _Workflow(data, design, model, std.values,
                         np.zeros(std.n_cols), np.zeros(std.n_cols), True)
    if not need_calibration:
        # Pure design weighting needs no totals; report the expansion
        # estimate of N when none is declared.
        declared = cfg.get("population_size")
        n_pop = int(declared) if declared is not None else round(float(np.sum(1.0 / data.pi)))
        design = ObservedDesign(max(n_pop, n_rows), data.pi)
        return _Workflow(data, design, None, None, None, None, False)
    if cfg.get("totals") is None or cfg.get("population_size") is None:
        raise OutOfRange(
            "sample-only input (pi column present) needs --totals and --population-size"
        )
    n_pop = int(cfg["population_size"])
    if n_pop < n_rows:
        raise OutOfRange("population size smaller than the sample")
    design = ObservedDesign(n_pop, data.pi)
    model = fit_pca_from_sample(data.aux, design.sample_design_weights)
    x_totals = _read_totals(cfg["totals"], data.aux_names)
    std_totals = (x_totals - n_pop * model.col_means) / model.col_sds
    comp_totals = component_totals(model, x_totals, n_pop)
    std_values = (data.aux - model.col_means) / model.col_sds
    return _Workflow(data, design, model, std_values, std_totals, comp_totals, False)


def _bagging_config(cfg, n: int, defaulted: list[str]) -> BaggingConfig:
    c = cfg["c"] if cfg["c"] is not None else max(1, round(np.sqrt(n)))
    if cfg["c"] is None and "c" not in defaulted:
        defaulted.append("c")
    return BaggingConfig(B=int(cfg["B"]), c=int(c), alpha=float(cfg["alpha"]),
                         seed=int(cfg["seed"]), sampler=_SAMPLERS[cfg["sampler"]])


# ---------------------------------------------------------------------------
# Commands


def cmd_pca(args) -> int:
    defaults = {"input": None, "out_dir": None, "config": None}
    cfg, _ = _merge(args, defaults)
    if not cfg["input"]:
        raise OutOfRange("--input is required")
    data = ingest_csv(cfg["input"])
    if data.pi is None:
        model = fit_pca(standardize_columns(data.aux, data.aux_names))
    else:
        model = fit_pca_from_sample(data.aux, 1.0 / data.pi)
    lam = model.eigenvalues
    total = lam.sum()
    lines = _metadata_lines([
        ("command", "pca"), ("version", __version__), ("input", cfg["input"]),
        ("rows", data.diagnostics["rows"]), ("columns", len(data.aux_names)),
        ("source", model.source),
    ])
    lines.append("component\teigenvalue\texplained\tcumulative")
    cum = 0.0
    for j, value in enumerate(lam, start=1):
        share = value / total
        cum += share
        lines.append(f"{j}\t{_fmt(value)}\t{_fmt(share)}\t{_fmt(cum)}")
    out = _out_dir(cfg) / "pca.tsv"
    _write_lines(out, lines)
    print(f"wrote {out}")
    return 0


_WEIGHT_DEFAULTS = {
    "input": None, "totals": None, "population_size": None, "B": 500, "c": None,
    "alpha": 0.5, "seed": 0, "exact_vars": None, "sampler": "systematic",
    "singularity": "pseudo-inverse", "out_dir": None, "config": None,
}


def cmd_weights(args) -> int:
    cfg, defaulted = _merge(args, _WEIGHT_DEFAULTS)
    if not cfg["input"]:
        raise OutOfRange("--input is required")
    data = ingest_csv(cfg["input"])
    flow = _build_workflow(data, cfg)
    spec = CalibrationSpec(singularity_policy=_POLICIES[cfg["singularity"]])
    bag_cfg = _bagging_config(cfg, flow.design.sample_size, defaulted)

    if cfg["exact_vars"]:
        if not flow.census:
            raise OutOfRange("--exact-vars needs full-population input")
        important = _resolve_exact_vars(cfg["exact_vars"], list(data.aux_names))
        std = standardize_columns(data.aux, data.aux_names)
        result = run_bagging_exact(std, important, flow.design, bag_cfg, spec)
    else:
        result = run_bagging(flow.model, data.aux, flow.design, bag_cfg, spec,
                             totals=flow.comp_totals)

    ws = result.weights
    out = _out_dir(cfg) / "weights.csv"
    lines = ["unit_id,d,g,w"]
    for unit, d_k, g_k, w_k in zip(data.unit_ids, ws.design_weights, ws.g, ws.w):
        lines.append(f"{unit},{_fmt(d_k)},{_fmt(g_k)},{_fmt(w_k)}")
    _write_lines(out, lines)
    _provenance_sidecar(out, {
        "command": "weights", "version": __version__, "input": str(cfg["input"]),
        "census": flow.census, "population_size": flow.design.population_size,
        "sample_size": flow.design.sample_size,
        "B": bag_cfg.B, "c": bag_cfg.c, "alpha": bag_cfg.alpha,
        "seed": bag_cfg.seed, "sampler": bag_cfg.sampler,
        "singularity_policy": spec.singularity_policy,
        "exact_vars": cfg["exact_vars"] or "",
        "defaulted": sorted(defaulted),
        "rng_scheme": SCHEME, "backend": _core.BACKEND,
        "estimator_kind": ws.provenance["estimator_kind"],
        "calibrated_exactly_on": ws.provenance["calibrated_exactly_on"],
        "B_effective": ws.provenance["B_effective"],
        "singular_iterations": ws.provenance["singular_iterations"],
    })
    print(f"wrote {out}")
    return 0


_ESTIMATE_DEFAULTS = dict(_WEIGHT_DEFAULTS, estimators="CAL,PCA,BAG,BAG+PCA,HT")
del _ESTIMATE_DEFAULTS["exact_vars"]


def cmd_estimate(args) -> int:
    cfg, defaulted = _merge(args, _ESTIMATE_DEFAULTS)
    if not cfg["input"]:
        raise OutOfRange("--input is required")
    data = ingest_csv(cfg["input"])
    if not data.responses:
        raise OutOfRange("input has no y_* response columns")
    estimators = _parse_estimators(cfg["estimators"])
    need_calibration = any(e.kind != HT for e in estimators)
    flow = _build_workflow(data, cfg, need_calibration)
    spec = CalibrationSpec(singularity_policy=_POLICIES[cfg["singularity"]])
    bag_cfg = _bagging_config(cfg, flow.design.sample_size, defaulted)
    design = flow.design
    d = design.sample_design_weights
    n_pop = design.population_size
    comp_scores = None
    if need_calibration:
        comp_scores = ((data.aux - flow.model.col_means) / flow.model.col_sds
                       ) @ flow.model.loadings

    rows = []
    for est in estimators:
        c = est.c if est.c is not None else bag_cfg.c
        if est.kind == HT:
            g = np.ones(design.sample_size)
        elif est.kind == CAL:
            ws = chi2_calibrate(flow.std_values, d, flow.std_totals,
                                CalibrationSpec(singularity_policy=POLICY_PSEUDO_INVERSE),
                                population_size=n_pop)
            g = ws.g
        elif est.kind == PCA:
            ws = chi2_calibrate(comp_scores[:, :c], d, flow.comp_totals[:c], spec,
                                population_size=n_pop)
            g = ws.g
        elif est.kind == BAG:
            model = identity_model(standardize_columns(data.aux, data.aux_names)) \
                if flow.census else _identity_from(flow.model)
            res = run_bagging(model, data.aux, design,
                              BaggingConfig(B=bag_cfg.B, c=c, alpha=0.0,
                                            seed=bag_cfg.seed, sampler=bag_cfg.sampler),
                              spec, totals=flow.std_totals)
            g = res.g
        else:
            res = run_bagging(flow.model, data.aux, design,
                              BaggingConfig(B=bag_cfg.B, c=c, alpha=bag_cfg.alpha,
                                            seed=bag_cfg.seed, sampler=bag_cfg.sampler),
                              spec, totals=flow.comp_totals)
            g = res.g
        w = d * g
        for resp, y in data.responses.items():
            rows.append((est.name, resp, float(w @ y)))

    lines = _metadata_lines([
        ("command", "estimate"), ("version", __version__), ("input", cfg["input"]),
        ("population_size", n_pop), ("sample_size", design.sample_size),
        ("B", bag_cfg.B), ("c", bag_cfg.c), ("alpha", bag_cfg.alpha),
        ("seed", bag_cfg.seed), ("defaulted", ",".join(sorted(defaulted))),
        ("rng_scheme", SCHEME), ("backend", _core.BACKEND),
    ])
    lines.append("estimator\tresponse\ttotal")
    for label, resp, total in rows:
        lines.append(f"{label}\t{resp}\t{_fmt(total)}")
    out = _out_dir(cfg) / "estimate.tsv"
    _write_lines(out, lines)
    print(f"wrote {out}")
    return 0


def _identity_from(model):
    """Identity-loading twin of a fitted model (raw-variable bagging)."""
    from .pca import PcaModel
    q = model.n_components
    return PcaModel(np.eye(q), np.ones(q), model.col_means, model.col_sds, model.source)


_SIMULATE_DEFAULTS = {
    "input": None, "pop_seed": 0, "n": None, "runs": 1000, "B": 100, "c": None,
    "alpha": 0.5, "seed": 0, "estimators": "CAL,PCA,BAG,BAG+PCA,HT",
    "sampler": "systematic", "singularity": "pseudo-inverse", "threads": 1,
    "out_dir": None, "config": None,
}


def _study_population(cfg):
    if cfg["input"]:
        data = ingest_csv(cfg["input"])
        if data.pi is not None:
            raise OutOfRange("simulation input must be a full population (no pi column)")
        if not data.responses:
            raise OutOfRange("simulation input needs y_* response columns")
        return make_population(data.aux, data.aux_names, data.responses), cfg["input"]
    pop = generate_population(SyntheticSpec(seed=int(cfg["pop_seed"])))
    return pop, f"synthetic(seed={cfg['pop_seed']})"


def cmd_simulate(args) -> int:
    cfg, defaulted = _merge(args, _SIMULATE_DEFAULTS)
    pop, source = _study_population(cfg)
    n = int(cfg["n"]) if cfg["n"] is not None else max(2, round(0.2 * pop.size))
    if cfg["n"] is None:
        defaulted.append("n")
    report = run_study(
        pop, n, _parse_estimators(cfg["estimators"]), runs=int(cfg["runs"]),
        seed=int(cfg["seed"]), B=int(cfg["B"]),
        c=int(cfg["c"]) if cfg["c"] is not None else None,
        alpha=float(cfg["alpha"]), singularity_policy=_POLICIES[cfg["singularity"]],
        sampler=_SAMPLERS[cfg["sampler"]], threads=int(cfg["threads"]),
    )
    lines = _report_lines(report, "simulate", [
        ("population", source), ("defaulted", ",".join(sorted(defaulted))),
    ])
    out = _out_dir(cfg) / "simulate_report.tsv"
    _write_lines(out, lines)
    print(f"wrote {out}")
    return 0


_SWEEP_DEFAULTS = dict(_SIMULATE_DEFAULTS, axis=None, grid=None, response=None)
del _SWEEP_DEFAULTS["estimators"]


def cmd_sweep(args) -> int:
    cfg, defaulted = _merge(args, _SWEEP_DEFAULTS)
    if cfg["axis"] not in ("c", "alpha"):
        raise OutOfRange("--axis must be c or alpha")
    if not cfg["grid"]:
        raise OutOfRange("--grid is required (comma-separated values)")
    grid = [float(v) for v in str(cfg["grid"]).split(",") if v.strip()]
    if cfg["axis"] == "c":
        grid = [int(v) for v in grid]
    pop, source = _study_population(cfg)
    n = int(cfg["n"]) if cfg["n"] is not None else max(2, round(0.2 * pop.size))
    if cfg["n"] is None:
        defaulted.append("n")
    result = sweep(
        pop, n, cfg["axis"], grid, runs=int(cfg["runs"]), seed=int(cfg["seed"]),
        B=int(cfg["B"]), c=int(cfg["c"]) if cfg["c"] is not None else None,
        alpha=float(cfg["alpha"]), response=cfg["response"],
        sampler=_SAMPLERS[cfg["sampler"]], threads=int(cfg["threads"]),
    )
    lines = _sweep_lines(result, [
        ("population", source), ("defaulted", ",".join(sorted(defaulted))),
    ])
    out = _out_dir(cfg) / "sweep_report.tsv"
    _write_lines(out, lines)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_common(p, *names):
    flags = {
        "input": lambda: p.add_argument("--input", help="unit-level CSV file"),
        "totals": lambda: p.add_argument("--totals", help="CSV of population x_* totals"),
        "population_size": lambda: p.add_argument("--population-size", type=int,
                                                  dest="population_size"),
        "B": lambda: p.add_argument("--B", type=int, dest="B",
                                    help="bag iterations"),
        "c": lambda: p.add_argument("--c", type=int, dest="c",
                                    help="variables per draw (default round(sqrt(n)))"),
        "alpha": lambda: p.add_argument("--alpha", type=float,
                                        help="eigenvalue exponent (default 0.5)"),
        "seed": lambda: p.add_argument("--seed", type=int, help="master RNG seed"),
        "n": lambda: p.add_argument("--n", type=int, help="sample size"),
        "runs": lambda: p.add_argument("--runs", type=int, help="simulation runs"),
        "estimators": lambda: p.add_argument("--estimators",
                                             help="comma list from " + ",".join(KINDS)),
        "exact_vars": lambda: p.add_argument("--exact-vars", dest="exact_vars",
                                             help="variables to calibrate exactly"),
        "sampler": lambda: p.add_argument("--sampler",
                                          choices=sorted(_SAMPLERS)),
        "singularity": lambda: p.add_argument("--singularity",
                                              choices=sorted(_POLICIES)),
        "threads": lambda: p.add_argument("--threads", type=int,
                                          help="worker threads (results unchanged)"),
        "out_dir": lambda: p.add_argument("--out-dir", dest="out_dir",
                                          help="output directory "
                                               "(default $BAGCALIB_OUT_DIR or .)"),
        "pop_seed": lambda: p.add_argument("--pop-seed", type=int, dest="pop_seed",
                                           help="seed of the synthetic population"),
        "axis": lambda: p.add_argument("--axis", choices=("c", "alpha")),
        "grid": lambda: p.add_argument("--grid", help="comma list of grid values"),
        "response": lambda: p.add_argument("--response", help="response to report"),
        "config": lambda: p.add_argument("--config",
                                         help="JSON config file; flags take precedence"),
    }
    for name in names:
        flags[name]()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bagcalib",
        description="Survey calibration weighting with bagged component subsets.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pca", help="eigenvalue spectrum of a data file")
    _add_common(p, "input", "out_dir", "config")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("weights", help="bagged calibration weights")
    _add_common(p, "input", "totals", "population_size", "B", "c", "alpha", "seed",
                "exact_vars", "sampler", "singularity", "out_dir", "config")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("estimate", help="estimated totals per estimator")
    _add_common(p, "input", "totals", "population_size", "B", "c", "alpha", "seed",
                "estimators", "sampler", "singularity", "out_dir", "config")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="Monte Carlo estimator comparison")
    _add_common(p, "input", "pop_seed", "n", "runs", "B", "c", "alpha", "seed",
                "estimators", "sampler", "singularity", "threads", "out_dir", "config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="study along a grid of c or alpha")
    _add_common(p, "input", "pop_seed", "n", "runs", "B", "c", "alpha", "seed",
                "axis", "grid", "response", "sampler", "singularity", "threads",
                "out_dir", "config")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BagcalibError as exc:
        name = type(exc).__name__
        module = _ERROR_MODULES.get(name, "bagcalib")
        message = " ".join(str(exc).split())
        print(f"error: {module}.{name}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
