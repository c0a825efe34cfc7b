"""Named experiments: config schema, runners, reports.

A run writes CSV data products, an optional ``verdict.json`` for experiments
with a built-in bound, and ``manifest.json`` listing every data file with its
sha256. Data files depend only on the config, so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .ensembles import EnsembleSpec
from .kernel import conditional_spec, expected_density, scaled_kernel_error
from .norms import growth_series
from .polytopes import LatticePolytope, PolytopeError, parse_polytope
from .statistics import (
    MomentGrid,
    RadialGrid,
    compare_curves,
    empirical_density,
    kappa_asymptote,
    kappa_kacrice,
    pair_correlation_empirical,
    poisson_selftest,
)
from .trials import SolverBudgetError, check_budget, map_zero_sets
from .zeros import count_in, torus

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_FAIL = 4


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: dict = field(default_factory=dict)
    master_seed: int = 0
    output_dir: str = "results"

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError(["config must be a mapping"])
        unknown = set(data) - {"experiment", "parameters", "master_seed", "output_dir"}
        if unknown:
            raise ConfigError([f"unknown top-level keys: {sorted(unknown)}"])
        if "experiment" not in data:
            raise ConfigError(["missing 'experiment'"])
        return cls(
            experiment=data["experiment"],
            parameters=dict(data.get("parameters") or {}),
            master_seed=data.get("master_seed", 0),
            output_dir=str(data.get("output_dir", "results")),
        )

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON, which is valid YAML) config file."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    return ExperimentConfig.from_mapping(data)


# parameter schemas ---------------------------------------------------------------


@dataclass(frozen=True)
class Param:
    kind: str  # int, float, str, int-list, float-list, polytope, p
    default: Any = None
    required: bool = False
    check: Callable[[Any], str | None] | None = None


def _positive(x):
    return None if x > 0 else "must be positive"


def _range(lo, hi, open_lo=False):
    def check(x):
        ok = (x > lo if open_lo else x >= lo) and x <= hi
        return None if ok else f"must lie in {'(' if open_lo else '['}{lo}, {hi}]"

    return check


def _all(check):
    def inner(xs):
        for x in xs:
            msg = check(x)
            if msg:
                return msg
        return None

    return inner


def _increasing(xs):
    return None if all(b > a for a, b in zip(xs, xs[1:])) else "must be strictly increasing"


SCHEMAS: dict[str, dict[str, Param]] = {
    "pair-corr": {
        "m": Param("int", 1, check=lambda m: None if m == 1 else "pair-corr samples m = 1 only"),
        "N": Param("int", 100, check=_range(2, 2000)),
        "trials": Param("int", 1000, check=_positive),
        "rmax": Param("float", 5.0, check=_range(0, 5, open_lo=True)),
        "bins": Param("int", 50, check=_positive),
        "batches": Param("int", 20, check=_range(2, 10**6)),
    },
    "kappa-analytic": {
        "m": Param("int", 1, check=_range(1, 3)),
        "r": Param("float-list", [0.05, 0.1, 0.5, 1.0, 2.0, 3.0, 4.0], check=_all(_range(1e-3, 50))),
        "mc_samples": Param("int", 10**6, check=_positive),
    },
    "density-map": {
        "m": Param("int", 1, check=lambda m: None if m == 1 else "density-map samples m = 1 only"),
        "N": Param("int", 60, check=_range(1, 2000)),
        "trials": Param("int", 1000, check=_positive),
        "mu_edges": Param("float-list", list(np.round(np.linspace(0.05, 0.95, 11), 10)), check=_increasing),
    },
    "polytope-density": {
        "polytope": Param("polytope", required=True),
        "dilation": Param("int", 50, check=_positive),
        "p": Param("int", None, check=_positive),
        "trials": Param("int", 1000, check=_positive),
        "mu_edges": Param("float-list", None, check=_increasing),
        "bins": Param("int", 20, check=_positive),
    },
    "bk-count": {
        "polytope": Param("polytope", required=True),
        "dilation": Param("int", 1, check=_positive),
        "trials": Param("int", 200, check=_positive),
        "threshold": Param("float", 0.95, check=_range(0, 1)),
    },
    "kernel-scaling": {
        "m": Param("int", 1, check=_range(1, 3)),
        "N": Param("int-list", [25, 50, 100, 200, 400], check=_increasing),
        "u": Param("complex-list", [0.5]),
        "v": Param("complex-list", [0.3j]),
    },
    "norms-growth": {
        "degrees": Param("int-list", [64, 256, 1024], check=lambda d: _increasing(d) or _all(_range(16, 1024))(d)),
        "trials": Param("int", 500, check=_positive),
        "p": Param("p", "inf"),
    },
    "poisson-selftest": {
        "intensity": Param("float", 100.0, check=_positive),
        "trials": Param("int", 2000, check=_positive),
        "rmax": Param("float", 5.0, check=_range(0, 5, open_lo=True)),
        "bins": Param("int", 25, check=_positive),
    },
}

# which zeros each experiment counts
COUNT_DOMAIN = {
    "pair-corr": "CP^1 (all zeros, including infinity)",
    "density-map": "(C^*)^m",
    "polytope-density": "(C^*)^m",
    "bk-count": "(C^*)^m",
}


def list_experiments() -> list[str]:
    return sorted(SCHEMAS)


def _coerce(name: str, spec: Param, raw) -> tuple[Any, str | None]:
    try:
        if spec.kind == "int":
            if isinstance(raw, bool) or not isinstance(raw, (int, np.integer)) or isinstance(raw, float):
                return None, f"{name}: expected an integer"
            return int(raw), None
        if spec.kind == "float":
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                return None, f"{name}: expected a number"
            if not math.isfinite(raw):
                return None, f"{name}: must be finite"
            return float(raw), None
        if spec.kind in ("int-list", "float-list", "complex-list"):
            if not isinstance(raw, (list, tuple)) or not raw:
                return None, f"{name}: expected a non-empty list"
            if spec.kind == "int-list":
                if not all(isinstance(x, int) and not isinstance(x, bool) for x in raw):
                    return None, f"{name}: expected integers"
                return [int(x) for x in raw], None
            if spec.kind == "float-list":
                return [float(x) for x in raw], None
            return [complex(str(x).replace(" ", "")) if isinstance(x, str) else complex(x) for x in raw], None
        if spec.kind == "polytope":
            return parse_polytope(raw), None
        if spec.kind == "p":
            if isinstance(raw, str) and raw.lower() in ("inf", "infinity"):
                return math.inf, None
            p = float(raw)
            return (p, None) if p >= 2 else (None, f"{name}: p must be >= 2 or 'inf'")
    except PolytopeError as exc:
        return None, f"{name}: {exc}"
    except (TypeError, ValueError) as exc:
        return None, f"{name}: {exc}"
    raise AssertionError(spec.kind)


def _resolve(config: ExperimentConfig) -> tuple[dict, list[str]]:
    out: list[str] = []
    if config.experiment not in SCHEMAS:
        return {}, [f"unknown experiment {config.experiment!r}; choose one of {list_experiments()}"]
    seed = config.master_seed
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        out.append("master_seed must be a 64-bit unsigned integer")
    schema = SCHEMAS[config.experiment]
    params = config.parameters
    if not isinstance(params, dict):
        return {}, out + ["parameters must be a mapping"]
    for key in sorted(set(params) - set(schema)):
        out.append(f"unknown parameter {key!r}")
    resolved = {}
    for name, spec in schema.items():
        if name not in params:
            if spec.required:
                out.append(f"{name}: required")
            resolved[name] = spec.default
            continue
        val, err = _coerce(name, spec, params[name])
        if err is None and spec.check is not None and val is not None:
            msg = spec.check(val)
            err = f"{name}: {msg}" if msg else None
        if err:
            out.append(err)
        resolved[name] = val
    if not out:
        out.extend(_cross_checks(config.experiment, resolved))
    return resolved, out


def _cross_checks(name: str, p: dict) -> list[str]:
    out = []
    if name in ("density-map", "polytope-density") and p.get("mu_edges") is not None:
        e = p["mu_edges"]
        if e[0] < 0 or e[-1] > 1:
            out.append("mu_edges must lie in [0, 1]")
    if name == "polytope-density":
        P = p["polytope"]
        deg = p["p"] if p["p"] is not None else P.max_degree()
        if P.max_degree() > deg:
            out.append("polytope does not fit in the degree-p simplex")
    if name == "bk-count" and p["polytope"].m != 2:
        out.append("bk-count needs a two-dimensional polytope")
    if name == "bk-count" and p["polytope"].volume() == 0:
        out.append("bk-count needs a polytope with positive area")
    if name == "kernel-scaling" and (len(p["u"]) != p["m"] or len(p["v"]) != p["m"]):
        out.append("u and v must have m coordinates")
    return out


def validate(config) -> list[str]:
    """Schema violations; empty iff ``run`` accepts the config."""
    try:
        cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_mapping(config)
    except ConfigError as exc:
        return exc.violations
    return _resolve(cfg)[1]


# runners ------------------------------------------------------------------------


@dataclass
class Report:
    files: dict[str, str] = field(default_factory=dict)  # name -> text
    checks: list[dict] = field(default_factory=list)
    failures: int = 0
    summary: dict = field(default_factory=dict)

    def check(self, name: str, value, bound: str, ok: bool):
        self.checks.append({"name": name, "value": _jsonable(value), "bound": bound, "pass": bool(ok)})


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, LatticePolytope):
        return x.to_literal()
    return x


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def effective_radius(edges) -> np.ndarray:
    """sqrt of the area-weighted mean of r^2 over each bin, the radius at which r^2 laws are read."""
    e = np.asarray(edges, dtype=float)
    return np.sqrt((e[1:] ** 2 + e[:-1] ** 2) / 2.0)


def loglog_slope(r, k) -> float:
    r, k = np.asarray(r), np.asarray(k)
    ok = k > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(r[ok]), np.log(k[ok]), 1)[0])


def repulsion_checks(curve, report: Report):
    """Small-r law, decorrelation and universality bounds for an m=1 pair-correlation curve."""
    e = curve.bin_edges
    reff = effective_radius(e)
    lo, hi = e[:-1], e[1:]
    band = (lo >= 0.1 - 1e-12) & (hi <= 0.4 + 1e-12)
    if band.sum() >= 2:
        s = loglog_slope(reff[band], curve.kappa_hat[band])
        report.check("repulsion_slope_r0.1_0.4", s, "2 +/- 0.15", abs(s - 2) <= 0.15)
    band = (lo >= 0.1 - 1e-12) & (hi <= 0.3 + 1e-12)
    if band.any():
        ratio = curve.kappa_hat[band] / reff[band] ** 2
        report.check("kappa_over_r2_r0.1_0.3", ratio, "in [0.4, 0.6]", bool(np.all((ratio >= 0.4) & (ratio <= 0.6))))
    band = (lo >= 2.5 - 1e-12) & (hi <= 3.5 + 1e-12)
    if band.any():
        w = np.diff(e ** 2 / (curve.normalization["N"] + e**2))[band]
        avg = float(np.sum(curve.kappa_hat[band] * w) / w.sum())
        report.check("decorrelation_r2.5_3.5", avg, "in [0.95, 1.05]", 0.95 <= avg <= 1.05)
    if e[-1] >= 3 - 1e-12 and e[0] <= 0.5 + 1e-12:
        cmp = compare_curves(curve, lambda r: kappa_kacrice(1, r), (0.5, 3.0))
        report.check("universality_max_rel_dev_r0.5_3", cmp.max_rel_deviation, "< 0.05", cmp.max_rel_deviation < 0.05)
        report.files["kacrice_comparison.csv"] = _csv(
            ["r_mid", "empirical", "kacrice", "rel_deviation", "z_score"],
            zip(cmp.r_mid, cmp.observed, cmp.reference, cmp.rel_deviation, cmp.z_scores),
        )


def _run_pair_corr(p, seed, workers) -> Report:
    rep = Report()
    spec = EnsembleSpec(1, p["N"])
    try:
        curve = pair_correlation_empirical(spec, p["trials"], rmax=p["rmax"], bins=p["bins"], master_seed=seed, batches=p["batches"], workers=workers)
    except SolverBudgetError as exc:
        rep.files["pair_correlation.csv"] = exc.partial.to_csv()
        raise _Partial(rep, exc) from exc
    rep.failures = int(curve.normalization.get("failures", 0))
    rep.files["pair_correlation.csv"] = curve.to_csv()
    repulsion_checks(curve, rep)
    return rep


def _run_kappa(p, seed, workers) -> Report:
    rep = Report()
    m = p["m"]
    rows = []
    for r in p["r"]:
        est = kappa_kacrice(m, r, mc_samples=p["mc_samples"], seed=seed)
        rows.append((repr(float(r)), est.value, est.stderr, est.samples, float(kappa_asymptote(m, r))))
        if m == 2 and r <= 0.05:
            rep.check(f"neutral_m2_r{r}", est.value, "0.75 +/- 0.05", abs(est.value - 0.75) <= 0.05)
        if m == 3 and r <= 0.1:
            rep.check(f"attraction_m3_r{r}", est.value, "> 10", est.value > 10)
        if m == 1 and r <= 0.1:
            ratio = est.value / float(kappa_asymptote(1, r))
            rep.check(f"repulsion_m1_r{r}", ratio, "kappa / (r^2/2) in [0.9, 1.1]", 0.9 <= ratio <= 1.1)
    rep.files["kappa.csv"] = _csv(["r", "kappa", "stderr", "samples", "asymptote"], rows)
    return rep


def band_kernel_prediction(spec: EnsembleSpec, mu_lo: float, mu_hi: float, nodes: int = 8) -> float:
    """Expected zeros in the annulus mu_lo < mu < mu_hi from the kernel density, divided by N."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    mu = 0.5 * (mu_hi - mu_lo) * x + 0.5 * (mu_hi + mu_lo)
    total = 0.0
    for mi, wi in zip(mu, w):
        r = math.sqrt(mi / (1 - mi))
        # dA = pi d(r^2) = pi dmu / (1 - mu)^2
        total += wi * expected_density(spec, complex(r)) * math.pi / (1 - mi) ** 2
    return 0.5 * (mu_hi - mu_lo) * total / spec.N


def _density_budget(exc: SolverBudgetError, rep: Report, name: str):
    rep.files[name] = exc.partial.to_csv()
    raise _Partial(rep, exc) from exc


def _run_density_map(p, seed, workers) -> Report:
    rep = Report()
    spec = EnsembleSpec(1, p["N"])
    edges = p["mu_edges"]
    grid = RadialGrid.from_moment(edges)
    try:
        dm = empirical_density(spec, p["trials"], grid, master_seed=seed, workers=workers)
    except SolverBudgetError as exc:
        _density_budget(exc, rep, "density.csv")
    rep.failures = dm.normalization["failures"]
    rep.files["density.csv"] = dm.to_csv()
    rows, worst_fs, worst_k = [], 0.0, 0.0
    for k in range(len(edges) - 1):
        mask = np.zeros(len(edges) - 1, dtype=bool)
        mask[k] = True
        emp = dm.mean_counts[k] / spec.N
        fs = edges[k + 1] - edges[k]
        ker = band_kernel_prediction(spec, edges[k], edges[k + 1])
        dev_fs, dev_k = emp / fs - 1, emp / ker - 1
        worst_fs, worst_k = max(worst_fs, abs(dev_fs)), max(worst_k, abs(dev_k))
        rows.append((edges[k], edges[k + 1], emp, fs, ker, dev_fs, dev_k))
    rep.files["bands.csv"] = _csv(["mu_lo", "mu_hi", "empirical", "fubini_study", "kernel", "rel_dev_fs", "rel_dev_kernel"], rows)
    rep.check("max_band_rel_dev_fs", worst_fs, "< 0.05", worst_fs < 0.05)
    rep.check("max_band_rel_dev_kernel", worst_k, "< 0.05", worst_k < 0.05)
    return rep


def default_polytope_edges(P: LatticePolytope, p: int, bins: int) -> list[float]:
    """mu-edges for m=1: the allowed interval split into ``bins`` bands, the two margin
    cells of a tenth of the allowed width, and the two forbidden ends."""
    a, b = P.vertices[0][0] / p, P.vertices[1][0] / p
    gap = 0.1 * (b - a)
    inner = list(np.linspace(a, b, bins + 1))
    edges = []
    if a - gap > 0:
        edges += [0.0, a - gap]
    edges += inner
    if b + gap < 1:
        edges += [b + gap, 1.0]
    return [float(np.round(x, 12)) for x in edges]


def grid_mu_edges(grid: RadialGrid) -> np.ndarray:
    e = np.asarray(grid.edges, dtype=float)
    with np.errstate(invalid="ignore"):
        return np.where(np.isinf(e), 1.0, e**2 / (1 + e**2))


def interval_labels(P: LatticePolytope, p: int, mu_edges, margin: float = 0.1) -> list[str]:
    """Whole-cell labels for m=1: a cell is forbidden only if all of it lies at least
    ``margin`` times the allowed width outside P/p; cells in between are "margin"."""
    a, b = P.vertices[0][0] / p, P.vertices[1][0] / p
    gap = margin * (b - a)
    out = []
    for lo, hi in zip(mu_edges[:-1], mu_edges[1:]):
        if lo >= a - 1e-12 and hi <= b + 1e-12:
            out.append("allowed")
        elif hi <= a - gap + 1e-12 or lo >= b + gap - 1e-12:
            out.append("forbidden")
        else:
            out.append("margin")
    return out


def _run_polytope_density(p, seed, workers) -> Report:
    rep = Report()
    P = p["polytope"]
    deg = p["p"] if p["p"] is not None else P.max_degree()
    n = p["dilation"]
    spec = conditional_spec(P, n, deg)
    if P.m == 1:
        edges = p["mu_edges"] or default_polytope_edges(P, deg, p["bins"])
        grid = RadialGrid.from_moment(edges)
    else:
        e = list(np.linspace(0, 1, p["bins"] + 1))
        grid = MomentGrid((tuple(e), tuple(e)))
    try:
        dm = empirical_density(spec, p["trials"], grid, master_seed=seed, workers=workers)
    except SolverBudgetError as exc:
        _density_budget(exc, rep, "density.csv")
    rep.failures = dm.normalization["failures"]
    labels = np.array(dm.normalization["labels"])
    if P.m == 1:
        labels = np.array(interval_labels(P, deg, grid_mu_edges(grid)))
    rep.files["density.csv"] = dm.to_csv(list(labels))
    mass = grid.fs_mass()
    allowed = (labels == "allowed") & (mass > 0)
    forbidden = (labels == "forbidden") & (mass > 0)
    rows = []
    for lab, mask in (("allowed", allowed), ("forbidden", forbidden)):
        if mask.any():
            rows.append((lab, int(mask.sum()), float(mass[mask].sum()), dm.normalized_fraction(mask)))
    rep.files["regions.csv"] = _csv(["region", "cells", "fs_mass", "normalized_level"], rows)
    if allowed.any():
        level_a = dm.normalized_fraction(allowed)
        rep.check("allowed_level_vs_fs", level_a, "within 5% of 1", abs(level_a - 1) < 0.05)
        if forbidden.any():
            level_f = dm.normalized_fraction(forbidden)
            rep.check("forbidden_over_allowed", level_f / level_a, "< 0.02", level_f / level_a < 0.02)
    rep.summary["degree"] = spec.N
    return rep


def _bk_reducer(rng_range, zsets):
    counts = []
    for zs in zsets:
        counts.append(-1 if isinstance(zs, Exception) else count_in(zs, torus))
    return counts


def bk_target(P: LatticePolytope, dilation: int = 1) -> int:
    return int(math.factorial(P.m) * P.dilate(dilation).volume())


def _run_bk(p, seed, workers) -> Report:
    rep = Report()
    P = p["polytope"].dilate(p["dilation"])
    spec = EnsembleSpec(2, P.max_degree(), P)
    counts = np.concatenate([np.asarray(c, dtype=int) for c in map_zero_sets(spec, p["trials"], seed, _bk_reducer, workers, chunk=25)])
    target = bk_target(P)
    failures = int((counts < 0).sum())
    rep.failures = failures
    rep.files["counts.csv"] = _csv(["trial", "torus_zeros"], ((t, "failed" if c < 0 else c) for t, c in enumerate(counts)))
    values, freq = np.unique(counts[counts >= 0], return_counts=True)
    rep.files["count_histogram.csv"] = _csv(["torus_zeros", "trials"], zip(values, freq))
    generic = counts >= 0
    frac = float((counts[generic] == target).mean()) if generic.any() else 0.0
    rep.summary.update(target=target, generic_trials=int(generic.sum()))
    rep.check("fraction_exact_count", frac, f">= {p['threshold']} with target {target}", frac >= p["threshold"])
    try:
        check_budget(failures, p["trials"])
    except SolverBudgetError as exc:
        raise _Partial(rep, exc) from exc
    return rep


def kernel_rate(Ns, errors) -> float:
    """Fitted exponent a in error ~ N^-a."""
    return float(-np.polyfit(np.log(Ns), np.log(errors), 1)[0])


def _run_kernel_scaling(p, seed, workers) -> Report:
    rep = Report()
    m, u, v = p["m"], np.array(p["u"]), np.array(p["v"])
    errs = [scaled_kernel_error(m, N, u, v) for N in p["N"]]
    rep.files["kernel_scaling.csv"] = _csv(["N", "error"], zip(p["N"], errs))
    table = dict(zip(p["N"], errs))
    if 100 in table and 400 in table:
        ratio = table[100] / table[400]
        rep.check("error_ratio_N100_N400", ratio, "in [1.6, 2.6]", 1.6 <= ratio <= 2.6)
    if len(errs) >= 2:
        rate = kernel_rate(p["N"], errs)
        rep.check("rate_exponent", rate, "in [0.4, 0.6]", 0.4 <= rate <= 0.6)
    return rep


def variation(values) -> float:
    """max / min - 1 of a positive sequence."""
    v = np.asarray(values, dtype=float)
    return float(v.max() / v.min() - 1.0)


def _run_norms(p, seed, workers) -> Report:
    rep = Report()
    series = growth_series(p["degrees"], p["trials"], p["p"], master_seed=seed, workers=workers)
    rep.files["norms.csv"] = series.to_csv()
    if math.isinf(p["p"]):
        scaled = series.means / np.sqrt(np.log(np.asarray(series.degrees, dtype=float)))
        var = variation(scaled)
        rep.check("sup_over_sqrt_logN_variation", var, "< 0.20", var < 0.20)
    elif p["p"] == 2:
        dev = float(np.max(np.abs(series.means - 1)))
        rep.check("l2_means_equal_one", dev, "< 1e-6", dev < 1e-6)
    else:
        var = variation(series.means)
        rep.check(f"l{p['p']:g}_variation", var, "< 0.10", var < 0.10)
    return rep


def _run_poisson(p, seed, workers) -> Report:
    rep = Report()
    curve = poisson_selftest(p["intensity"], p["trials"], rmax=p["rmax"], bins=p["bins"], master_seed=seed)
    rep.files["pair_correlation.csv"] = curve.to_csv()
    z = np.abs(curve.kappa_hat - 1) / curve.stderr
    rep.check("max_abs_z_score", float(np.max(z)), "<= 3 in every bin", bool(np.all(z <= 3)))
    return rep


RUNNERS = {
    "pair-corr": _run_pair_corr,
    "kappa-analytic": _run_kappa,
    "density-map": _run_density_map,
    "polytope-density": _run_polytope_density,
    "bk-count": _run_bk,
    "kernel-scaling": _run_kernel_scaling,
    "norms-growth": _run_norms,
    "poisson-selftest": _run_poisson,
}


class _Partial(Exception):
    def __init__(self, report: Report, cause: SolverBudgetError):
        super().__init__(str(cause))
        self.report = report
        self.cause = cause


# orchestration ---------------------------------------------------------------------


@dataclass
class RunResult:
    exit_code: int
    output_dir: Path | None
    verdict: str | None
    report: Report | None
    violations: list[str] = field(default_factory=list)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_outputs(out: Path, cfg: ExperimentConfig, params: dict, rep: Report, wall: float, status: str) -> str | None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(rep.files.items()):
        (out / name).write_text(text)
    verdict = None
    if rep.checks:
        verdict = "PASS" if all(c["pass"] for c in rep.checks) else "FAIL"
        (out / "verdict.json").write_text(json.dumps({"verdict": verdict, "checks": rep.checks}, indent=2, sort_keys=True) + "\n")
    data_files = sorted(rep.files) + (["verdict.json"] if verdict else [])
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "resolved_parameters": {k: _jsonable(v) for k, v in params.items()},
        "master_seed": cfg.master_seed,
        "software": {"zerostat": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "wall_time_s": wall,
        "status": status,
        "solver_failures": rep.failures,
        "count_domain": COUNT_DOMAIN.get(cfg.experiment, "n/a"),
        "summary": {k: _jsonable(v) for k, v in rep.summary.items()},
        "verdict": verdict,
        "files": {name: _sha256(out / name) for name in data_files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return verdict


def run(config, output_dir=None, workers: int = 1) -> RunResult:
    """Validate, execute and report. Exit codes: 0 PASS or no bound, 2 config, 3 budget, 4 FAIL."""
    try:
        cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_mapping(config)
    except ConfigError as exc:
        return RunResult(EXIT_CONFIG, None, None, None, exc.violations)
    params, violations = _resolve(cfg)
    if violations:
        return RunResult(EXIT_CONFIG, None, None, None, violations)
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    t0 = time.perf_counter()
    try:
        rep = RUNNERS[cfg.experiment](params, cfg.master_seed, workers)
    except _Partial as exc:
        exc.report.failures = exc.cause.failures
        _write_outputs(out, cfg, params, exc.report, time.perf_counter() - t0, "solver-failure-budget-exceeded")
        return RunResult(EXIT_BUDGET, out, None, exc.report)
    verdict = _write_outputs(out, cfg, params, rep, time.perf_counter() - t0, "complete")
    return RunResult(EXIT_FAIL if verdict == "FAIL" else EXIT_OK, out, verdict, rep)
