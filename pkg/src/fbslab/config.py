"""Experiment configuration: JSON schema, validation, builders and execution.

A config file is a single JSON document:

    {
      "config_version": 1,
      "seed": 20260810,
      "output_dir": "reports",
      "jobs": 1,
      "budget_mb": 4096,
      "emit_plot_data": false,
      "thresholds": { ... subset of verify.DEFAULT_THRESHOLDS ... },
      "checks": [ { "check": "clt", "name": "optional-label", ... }, ... ]
    }

Kernel specs are {"axes": [{"family": ..., "alpha": ..., "radius": ...}, ...]};
model specs are {"filter": {"offsets": [[0,0],[1,0]], "coeffs": [1.0, 0.5]},
"link": "linear", "noise": "gaussian"}.  Validation walks the whole document
before anything is sampled and every error message names the offending key.
The effective check config (after defaulting) is embedded in each report, so
re-running it reproduces the report bit for bit (timestamps aside).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import verify
from .errors import ConfigurationError
from .innovations import InnovationModel, filter_from_pairs, innovation_model
from .kernels import FAMILIES, FAMILY_WINDOWS, AxisKernel, ProductKernel, axis_kernel, product_kernel
from .lattice import Box, Field
from .rng import normalize_seed

CONFIG_VERSION = 1

CHECK_DESCRIPTIONS = {
    "clt": (
        "Normal limit of the normalized rectangle sums: the distribution of "
        "S_n / b_n is compared with N(0, sigma^2), sigma^2 = sum_k E[X_0 X_k], "
        "via the Kolmogorov-Smirnov distance and the first four moments."
    ),
    "fdd": (
        "Convergence of finite-dimensional distributions to the fractional "
        "Brownian sheet: checks the pairwise weight-covariance identity "
        "sum_j b_{n_r,j} b_{n_s,j} = prod_q (b_{n_r}^2(q) + b_{n_s}^2(q) - "
        "b_{|n_r-n_s|}^2(q))/2 exactly, then the empirical covariance of "
        "S_n(t)/b_n against sigma^2 times the sheet covariance "
        "prod_q (s_q^{2H} + t_q^{2H} - |s_q-t_q|^{2H})/2."
    ),
    "moment_inequality": (
        "Moment bound for weighted sums of dependent innovations: "
        "||sum_i a_i X_i||_p <= (2 p sum_i a_i^2)^(1/2) Delta_p, with Delta_p "
        "the physical dependence measure sum_i ||X_i - X*_i||_p."
    ),
    "moment_fuzz": (
        "The same moment bound, fuzzed over a randomized corpus of weight "
        "families (including partial-sum weight tables); requires zero "
        "violations beyond the bootstrap margin."
    ),
    "tightness": (
        "Tightness moment surrogate for the partial-sum process: "
        "||S_n(t)||_p^p <= C b_n^p prod_q t_q^beta with beta > 1, tracked as "
        "a sup over a t grid along the n ladder; requires p >= 2 and "
        "p > max_q 1/H_q."
    ),
    "scaling": (
        "Hurst scaling of the weight norms: b^2_{floor(s n)}(q) / b^2_n(q) "
        "converges to s^{2 H_q} for each axis family."
    ),
    "regularity": (
        "Coefficient regularity: the block-averaging statistics cs1, cs2, cs3 "
        "fall along the n ladder and l^d c_n^2 / b_n^2 approaches 1."
    ),
    "sigma_ml": (
        "Variance constant of the interior block sums: sigma_{m,l}^2 "
        "approaches sigma^2 as l grows (closed form for linear links), with "
        "the i.i.d. reference value (1 - (m+1)/l)^d reproduced exactly."
    ),
}


def list_kernels() -> str:
    lines = ["available kernel families:"]
    for fam in FAMILIES:
        lines.append(f"  {fam}: {FAMILY_WINDOWS[fam]}")
    return "\n".join(lines)


def describe_check(name: str) -> str:
    if name not in CHECK_DESCRIPTIONS:
        raise ConfigurationError(
            f"unknown check '{name}'; known: {', '.join(sorted(CHECK_DESCRIPTIONS))}"
        )
    return f"{name}: {CHECK_DESCRIPTIONS[name]}"


# ---------------------------------------------------------------------------
# Builders for config sub-objects (errors name the offending key)


def _require(cfg: dict, key: str, path: str) -> Any:
    if key not in cfg:
        raise ConfigurationError(f"{path}.{key}: missing required key")
    return cfg[key]


def _ctx(path: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def build_axis_kernel(spec: dict, path: str) -> AxisKernel:
    if not isinstance(spec, dict):
        raise ConfigurationError(f"{path}: axis kernel spec must be an object")
    fam = _require(spec, "family", path)
    kwargs = {}
    for key in ("alpha", "radius", "tail_tol", "taps", "lo", "log_exponent"):
        if key in spec:
            kwargs[key] = spec[key]
    return _ctx(path, axis_kernel, fam, **kwargs)


def build_kernel(spec: dict, path: str) -> ProductKernel:
    if not isinstance(spec, dict) or "axes" not in spec:
        raise ConfigurationError(f"{path}.axes: kernel spec needs an 'axes' list")
    axes = spec["axes"]
    if not isinstance(axes, list) or not axes:
        raise ConfigurationError(f"{path}.axes: must be a non-empty list")
    return product_kernel(
        [build_axis_kernel(ax, f"{path}.axes[{i}]") for i, ax in enumerate(axes)]
    )


def build_model(spec: dict, path: str) -> InnovationModel:
    if not isinstance(spec, dict):
        raise ConfigurationError(f"{path}: model spec must be an object")
    fspec = _require(spec, "filter", path)
    offsets = _require(fspec, "offsets", f"{path}.filter")
    coeffs = _require(fspec, "coeffs", f"{path}.filter")
    filt = _ctx(f"{path}.filter", filter_from_pairs, offsets, coeffs, fspec.get("dim"))
    return _ctx(path, innovation_model, filt, spec.get("link", "linear"), spec.get("noise", "gaussian"))


def _as_int(value, path: str, minimum: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _as_int_list(value, path: str, minimum: int = 1) -> list[int]:
    if not isinstance(value, list) or not value:
        raise ConfigurationError(f"{path}: expected a non-empty list of integers")
    return [_as_int(v, f"{path}[{i}]", minimum) for i, v in enumerate(value)]


# ---------------------------------------------------------------------------
# Per-check builders: validate + construct everything, defer sampling


@dataclass
class PreparedCheck:
    name: str
    label: str
    effective: dict
    runner: Callable  # (jobs, out_dir) -> report


def _estimate_bytes(kernel: ProductKernel, model: InnovationModel, n) -> int:
    cells = 1
    for ax, nq, flo, fhi in zip(
        kernel.axes, n, model.filter.lo, model.filter.hi
    ):
        extent = (nq - ax.lo) - (1 - ax.hi) + 1 + (fhi - flo)
        cells *= max(extent, 1)
    return 8 * 3 * cells  # noise + field + headroom


def _prepare_check(cfg: dict, idx: int, seed: int, thresholds: dict, budget_mb: int | None) -> PreparedCheck:
    path = f"checks[{idx}]"
    name = _require(cfg, "check", path)
    if name not in CHECK_DESCRIPTIONS:
        raise ConfigurationError(f"{path}.check: unknown check '{name}'")
    label = cfg.get("name", f"{idx:02d}_{name}")
    seed = normalize_seed(cfg.get("seed", seed))
    effective = dict(cfg)
    effective["seed"] = seed
    budget = None if budget_mb is None else budget_mb * (1 << 20)

    if name == "clt":
        kernel = build_kernel(_require(cfg, "kernel", path), f"{path}.kernel")
        model = build_model(_require(cfg, "model", path), f"{path}.model")
        n = _as_int_list(_require(cfg, "n", path), f"{path}.n")
        if len(n) != kernel.dim or model.dim != kernel.dim:
            raise ConfigurationError(f"{path}: kernel, model and n dimensions disagree")
        replicas = _as_int(_require(cfg, "replicas", path), f"{path}.replicas", 1)
        if budget is not None and _estimate_bytes(kernel, model, n) > budget:
            raise ConfigurationError(f"{path}: instance exceeds budget_mb={budget_mb}")
        runner = lambda jobs, out: verify.clt_check(kernel, model, n, replicas, seed, jobs, thresholds)

    elif name == "fdd":
        kernel = build_kernel(_require(cfg, "kernel", path), f"{path}.kernel")
        if not kernel.fbs_eligible:
            raise ConfigurationError(
                f"{path}.kernel: not sheet-eligible (Hurst must lie strictly in (0,1) per axis)"
            )
        model = build_model(_require(cfg, "model", path), f"{path}.model")
        n = _as_int_list(_require(cfg, "n", path), f"{path}.n")
        if "t_points" in cfg:
            t_points = [tuple(float(c) for c in t) for t in cfg["t_points"]]
        elif "t_axes" in cfg:
            import itertools as _it

            t_points = list(_it.product(*[[float(c) for c in ax] for ax in cfg["t_axes"]]))
        else:
            raise ConfigurationError(f"{path}: needs t_points or t_axes")
        for t in t_points:
            if len(t) != kernel.dim or any(c <= 0.0 or c > 1.0 for c in t):
                raise ConfigurationError(f"{path}.t_points: point {t} outside (0,1]^d")
        replicas = _as_int(_require(cfg, "replicas", path), f"{path}.replicas", 1)
        if budget is not None and _estimate_bytes(kernel, model, n) > budget:
            raise ConfigurationError(f"{path}: instance exceeds budget_mb={budget_mb}")
        effective["t_points"] = [list(t) for t in t_points]
        effective.pop("t_axes", None)
        dump_name = cfg.get("replica_dump")
        runner = lambda jobs, out: verify.fdd_check(
            kernel, model, n, t_points, replicas, seed, jobs, thresholds,
            replica_dump_path=None if (dump_name is None or out is None) else out / str(dump_name),
        )

    elif name == "moment_inequality":
        model = build_model(_require(cfg, "model", path), f"{path}.model")
        wspec = _require(cfg, "weights", path)
        lo = tuple(_as_int(v, f"{path}.weights.lo[{i}]") for i, v in enumerate(_require(wspec, "lo", f"{path}.weights")))
        values = np.asarray(_require(wspec, "values", f"{path}.weights"), dtype=np.float64)
        if values.ndim != model.dim:
            raise ConfigurationError(f"{path}.weights.values: dimension does not match the model")
        box = Box(lo, tuple(l + s - 1 for l, s in zip(lo, values.shape)))
        weights = Field(box, values)
        p = float(_require(cfg, "p", path))
        if p < 2.0:
            raise ConfigurationError(f"{path}.p: must be >= 2, got {p}")
        replicas = _as_int(_require(cfg, "replicas", path), f"{path}.replicas", 1)
        runner = lambda jobs, out: verify.moment_inequality_check(
            weights, model, p, replicas, seed, jobs, thresholds
        )

    elif name == "moment_fuzz":
        mspecs = _require(cfg, "models", path)
        if not isinstance(mspecs, list) or not mspecs:
            raise ConfigurationError(f"{path}.models: must be a non-empty list")
        models = [build_model(ms, f"{path}.models[{i}]") for i, ms in enumerate(mspecs)]
        dims = {m.dim for m in models}
        if len(dims) != 1:
            raise ConfigurationError(f"{path}.models: all models must share one dimension")
        dim = dims.pop()
        ps = [float(p) for p in _require(cfg, "ps", path)]
        if any(p < 2.0 for p in ps):
            raise ConfigurationError(f"{path}.ps: every p must be >= 2")
        n_families = _as_int(_require(cfg, "families", path), f"{path}.families", 1)
        replicas = _as_int(_require(cfg, "replicas", path), f"{path}.replicas", 1)
        max_side = _as_int(cfg.get("max_side", 6), f"{path}.max_side", 1)
        table_families = []
        for j, tspec in enumerate(cfg.get("weight_table_families", [])):
            tk = build_kernel(_require(tspec, "kernel", f"{path}.weight_table_families[{j}]"),
                              f"{path}.weight_table_families[{j}].kernel")
            tn = _as_int_list(_require(tspec, "n", f"{path}.weight_table_families[{j}]"),
                              f"{path}.weight_table_families[{j}].n")
            if tk.dim != dim or len(tn) != dim:
                raise ConfigurationError(
                    f"{path}.weight_table_families[{j}]: dimension does not match the models"
                )
            table_families.append(verify.weight_table_family(tk, tn))
        runner = lambda jobs, out: verify.moment_fuzz_check(
            models, ps, n_families, replicas, seed, thresholds, dim, max_side, table_families
        )

    elif name == "tightness":
        kernel = build_kernel(_require(cfg, "kernel", path), f"{path}.kernel")
        model = build_model(_require(cfg, "model", path), f"{path}.model")
        ladder_raw = _require(cfg, "n_ladder", path)
        if not isinstance(ladder_raw, list) or not ladder_raw:
            raise ConfigurationError(f"{path}.n_ladder: must be a non-empty list")
        ladder = [
            _as_int_list(n, f"{path}.n_ladder[{i}]") for i, n in enumerate(ladder_raw)
        ]
        p = float(_require(cfg, "p", path))
        H = kernel.hurst
        if p < 2.0 or p <= max(1.0 / h for h in H):
            raise ConfigurationError(
                f"{path}.p: needs p >= 2 and p > max(1/H_q) = {max(1.0 / h for h in H):.4f}, got {p}"
            )
        t_axes = _require(cfg, "t_axes", path)
        replicas = _as_int(_require(cfg, "replicas", path), f"{path}.replicas", 1)
        beta_fraction = float(cfg.get("beta_fraction", 0.5))
        kept = ladder
        if budget is not None:
            kept = [n for n in ladder if _estimate_bytes(kernel, model, n) <= budget]
            if not kept:
                raise ConfigurationError(f"{path}: every ladder rung exceeds budget_mb={budget_mb}")
        effective["n_ladder"] = [list(n) for n in kept]
        if len(kept) != len(ladder):
            effective["n_ladder_dropped_by_budget"] = [list(n) for n in ladder if n not in kept]
        kept_final = kept
        runner = lambda jobs, out: verify.tightness_check(
            kernel, model, kept_final, t_axes, p, replicas, seed, jobs, thresholds, beta_fraction
        )

    elif name == "scaling":
        kspecs = _require(cfg, "kernels", path)
        if not isinstance(kspecs, list) or not kspecs:
            raise ConfigurationError(f"{path}.kernels: must be a non-empty list")
        kernels = [build_axis_kernel(ks, f"{path}.kernels[{i}]") for i, ks in enumerate(kspecs)]
        n = _as_int(_require(cfg, "n", path), f"{path}.n", 1)
        s_values = [float(s) for s in _require(cfg, "s_values", path)]
        for s in s_values:
            if not 0.0 < s <= 1.0 or int(s * n) < 1:
                raise ConfigurationError(f"{path}.s_values: s={s} invalid for n={n}")
        runner = lambda jobs, out: verify.scaling_check(kernels, n, s_values, seed, thresholds)

    elif name == "regularity":
        kspecs = _require(cfg, "kernels", path)
        kernels = []
        for i, ks in enumerate(kspecs):
            if "axes" in ks:
                kernels.append(build_kernel(ks, f"{path}.kernels[{i}]"))
            else:
                kernels.append(build_axis_kernel(ks, f"{path}.kernels[{i}]"))
        n_ladder = _as_int_list(_require(cfg, "n_ladder", path), f"{path}.n_ladder")
        l = _as_int(_require(cfg, "l", path), f"{path}.l", 1)
        runner = lambda jobs, out: verify.regularity_check(kernels, n_ladder, l, seed, thresholds)

    elif name == "sigma_ml":
        model = build_model(_require(cfg, "model", path), f"{path}.model")
        if not model.is_linear:
            raise ConfigurationError(f"{path}.model: sigma_ml needs the linear link")
        m = _as_int(_require(cfg, "m", path), f"{path}.m", 0)
        l = _as_int(_require(cfg, "l", path), f"{path}.l", 1)
        if l <= m + 1:
            raise ConfigurationError(f"{path}: invalid blocking, need l > m+1 (l={l}, m={m})")
        runner = lambda jobs, out: verify.sigma_ml_check(model, m, l, seed, thresholds)

    else:  # pragma: no cover - guarded above
        raise ConfigurationError(f"{path}.check: unknown check '{name}'")

    return PreparedCheck(name, str(label), effective, runner)


# ---------------------------------------------------------------------------
# Top-level execution


@dataclass
class RunResult:
    reports: list
    labels: list[str]
    all_passed: bool


def load_config(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config root must be a JSON object")
    return cfg


def prepare_all(cfg: dict, seed_override: int | None = None, budget_override: int | None = None):
    version = cfg.get("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigurationError(
            f"config_version: expected {CONFIG_VERSION}, got {version}"
        )
    seed = normalize_seed(
        seed_override if seed_override is not None else _require(cfg, "seed", "config")
    )
    thresholds = cfg.get("thresholds", {})
    if not isinstance(thresholds, dict):
        raise ConfigurationError("thresholds: must be an object")
    unknown = set(thresholds) - set(verify.DEFAULT_THRESHOLDS)
    if unknown:
        raise ConfigurationError(f"thresholds: unknown keys {sorted(unknown)}")
    budget_mb = budget_override if budget_override is not None else cfg.get("budget_mb")
    if budget_mb is not None:
        budget_mb = _as_int(budget_mb, "budget_mb", 1)
    checks = _require(cfg, "checks", "config")
    if not isinstance(checks, list) or not checks:
        raise ConfigurationError("checks: must be a non-empty list")
    # validate and build everything before any sampling
    return [
        _prepare_check(c, i, seed, dict(thresholds), budget_mb) for i, c in enumerate(checks)
    ]


def run_config(
    cfg: dict,
    out_dir: str | Path | None = None,
    seed_override: int | None = None,
    jobs_override: int | None = None,
    budget_override: int | None = None,
) -> RunResult:
    prepared = prepare_all(cfg, seed_override, budget_override)
    jobs = jobs_override if jobs_override is not None else cfg.get("jobs", 1)
    jobs = _as_int(jobs, "jobs", 1)
    out = Path(out_dir) if out_dir is not None else Path(cfg.get("output_dir", "reports"))
    out.mkdir(parents=True, exist_ok=True)

    reports, labels = [], []
    for i, pc in enumerate(prepared):
        report = pc.runner(jobs, out).with_parameters(pc.effective)
        reports.append(report)
        labels.append(pc.label)
        (out / f"{pc.label}.json").write_text(report.to_json() + "\n")
        if cfg.get("emit_plot_data"):
            _emit_plot_data(out, pc.label, report)
    _write_summary(out / "summary.csv", labels, reports)
    return RunResult(reports, labels, all(r.passed for r in reports))


def _write_summary(path: Path, labels, reports) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "check", "passed", "verdicts_failed", "seed", "config_hash"])
        for label, rep in zip(labels, reports):
            failed = [k for k, v in rep.verdicts.items() if not v]
            writer.writerow(
                [label, rep.check, rep.passed, ";".join(failed), rep.seed,
                 rep.provenance["config_hash"]]
            )


def _emit_plot_data(out: Path, label: str, report) -> None:
    """Two-column CSVs (parameter vs statistic) for ladder-style checks."""

    def dump(name: str, xs, ys) -> None:
        with (out / f"{label}_{name}.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["parameter", "statistic"])
            for x, y in zip(xs, ys):
                writer.writerow([x, repr(float(y))])

    st = report.statistics
    if report.check == "scaling":
        rows = st["rows"]
        dump("rel_err", [r["s"] for r in rows], [r["rel_err"] for r in rows])
    elif report.check == "regularity":
        for i, curve in enumerate(st["curves"]):
            for stat in ("cs1", "cs2", "cs3"):
                dump(f"k{i}_{stat}", curve["n_ladder"], curve[stat])
    elif report.check == "tightness":
        dump("max_ratio", list(range(len(st["rung_max_ratio"]))), st["rung_max_ratio"])
    elif report.check == "moment_fuzz":
        rows = st["rows"]
        dump("margin", list(range(len(rows))), [r["margin"] for r in rows])
