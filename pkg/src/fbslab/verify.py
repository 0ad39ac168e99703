"""Statistical checks that turn the limit theorems into falsifiable runs.

Each check produces an :class:`ExperimentReport` carrying its parameters,
statistics, per-subcheck verdicts, seed and provenance, serializable as JSON
with stable key order.  Deterministic sub-checks (weight-covariance identity,
regularity statistics, block-sum variance, scaling ratios) never depend on
the Monte-Carlo replicas.  Replicated runs draw replica ``r`` from a stream
keyed by (seed, domain, r), so results are bit-identical for any number of
worker processes.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Sequence

import numpy as np
import scipy
from scipy import stats

from ._version import __version__
from .errors import ConfigurationError, DegenerateModelError
from .fbs_oracle import fbs_covariance
from .innovations import (
    InnovationModel,
    dependence_measure,
    innovation_model,
    delta_filter,
    long_run_variance,
    noise_box,
    realize,
)
from .kernels import (
    AxisKernel,
    ProductKernel,
    axis_norm_sq,
    axis_weight_table,
    product_kernel,
    regularity_stats,
    scaling_ratio,
    weight_table,
)
from .lattice import Box, Field
from .rng import DOMAIN_BOOTSTRAP, DOMAIN_CORPUS, DOMAIN_FIELD, spawn
from .sums import axis_matrix, contract, sigma_ml, write_replica_csv

DEFAULT_THRESHOLDS: dict[str, float] = {
    "ks_pvalue_min": 0.01,
    "moment_sigmas": 4.0,
    "fdd_rel_tol": 0.10,
    "fdd_sigmas": 4.0,
    "identity_rel_tol": 1e-10,
    "bound_sigmas": 3.0,
    "scaling_rel_tol": 0.02,
    "regularity_top_tol": 0.05,
    "sigma_ml_rel_tol": 0.05,
    "sigma_ml_iid_tol": 1e-12,
    "tightness_stability": 0.25,
    "degenerate_variance_floor": 1e-12,
}


def _merged(thresholds: dict | None) -> dict:
    out = dict(DEFAULT_THRESHOLDS)
    if thresholds:
        unknown = set(thresholds) - set(out)
        if unknown:
            raise ConfigurationError(f"unknown threshold keys: {sorted(unknown)}")
        out.update({k: float(v) for k, v in thresholds.items()})
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass
class ExperimentReport:
    """Result of one check; verdicts are recomputable from the statistics."""

    check: str
    parameters: dict
    statistics: dict
    verdicts: dict
    passed: bool
    seed: int
    thresholds: dict
    provenance: dict
    created_at: str

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "check": self.check,
                "parameters": self.parameters,
                "statistics": self.statistics,
                "verdicts": self.verdicts,
                "passed": self.passed,
                "seed": self.seed,
                "thresholds": self.thresholds,
                "provenance": self.provenance,
                "created_at": self.created_at,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def with_parameters(self, parameters: dict) -> "ExperimentReport":
        """Replace the embedded parameters (e.g. by an effective config) and rehash."""
        prov = dict(self.provenance)
        prov["config_hash"] = _config_hash(self.check, parameters, self.thresholds)
        return replace(self, parameters=_jsonable(parameters), provenance=prov)


def _config_hash(check: str, parameters: dict, thresholds: dict) -> str:
    blob = json.dumps(
        _jsonable({"check": check, "parameters": parameters, "thresholds": thresholds}),
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()


def _make_report(check, parameters, statistics, verdicts, seed, thresholds) -> ExperimentReport:
    parameters = _jsonable(parameters)
    provenance = {
        "config_hash": _config_hash(check, parameters, thresholds),
        "package": f"fbslab {__version__}",
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    return ExperimentReport(
        check=check,
        parameters=parameters,
        statistics=_jsonable(statistics),
        verdicts=_jsonable(verdicts),
        passed=bool(all(verdicts.values())),
        seed=int(seed),
        thresholds=_jsonable(thresholds),
        provenance=provenance,
        created_at=datetime.now(timezone.utc).isoformat(),
    )


# ---------------------------------------------------------------------------
# Replica engine


@dataclass(frozen=True)
class _GridSumTask:
    """Per-replica: sample noise, realize X, contract with per-axis weights."""

    model: InnovationModel
    xbox: Box
    matrices: tuple
    norm: float
    seed: int
    stream: int = 0

    def replica(self, r: int) -> np.ndarray:
        rng = spawn(self.seed, DOMAIN_FIELD, self.stream, r)
        eps = self.model.noise.sample(rng, noise_box(self.model, self.xbox).shape)
        x = realize(self.model, eps)
        return (contract(x, self.matrices) / self.norm).reshape(-1)


@dataclass(frozen=True)
class _WeightedSumTask:
    """Per-replica: single weighted sum with an arbitrary finite weight array."""

    model: InnovationModel
    xbox: Box
    weights: np.ndarray
    seed: int
    stream: int = 0

    def replica(self, r: int) -> np.ndarray:
        rng = spawn(self.seed, DOMAIN_FIELD, self.stream, r)
        eps = self.model.noise.sample(rng, noise_box(self.model, self.xbox).shape)
        x = realize(self.model, eps)
        return np.array([float((x * self.weights).sum())])


def _chunk_rows(args):
    task, start, stop = args
    return np.vstack([task.replica(r) for r in range(start, stop)])


def run_replicas(task, count: int, jobs: int = 1) -> np.ndarray:
    """Replica matrix (count, k); row r depends only on (seed, r)."""
    if count < 1:
        raise ConfigurationError(f"replicas must be >= 1, got {count}")
    if jobs <= 1:
        return _chunk_rows((task, 0, count))
    jobs = min(int(jobs), count)
    bounds = np.linspace(0, count, 4 * jobs + 1).astype(int)
    chunks = [(task, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_chunk_rows, chunks))
    return np.vstack(parts)


def _support_box(table) -> Box:
    return Box(tuple(ax.j_lo for ax in table.axes), tuple(ax.j_hi for ax in table.axes))


# ---------------------------------------------------------------------------
# Checks


def clt_check(
    kernel: ProductKernel,
    model: InnovationModel,
    n: Sequence[int],
    replicas: int,
    seed: int,
    jobs: int = 1,
    thresholds: dict | None = None,
) -> ExperimentReport:
    """Distribution of S_n / b_n against the normal limit N(0, sigma^2).

    Reports the Kolmogorov-Smirnov distance/p-value and the first four
    moments with Monte-Carlo error bars.
    """
    thr = _merged(thresholds)
    lrv = long_run_variance(model)
    if lrv.value <= thr["degenerate_variance_floor"]:
        raise DegenerateModelError(
            f"long-run variance {lrv.value} is (numerically) zero; the filter sums to zero"
        )
    table = weight_table(kernel, n)
    xbox = _support_box(table)
    mats = tuple(axis_matrix(xbox, q, [aw]) for q, aw in enumerate(table.axes))
    task = _GridSumTask(model, xbox, mats, table.norm, seed)
    vals = run_replicas(task, replicas, jobs).reshape(-1)

    sigma = math.sqrt(lrv.value)
    ks_stat, ks_pvalue = stats.kstest(vals, "norm", args=(0.0, sigma))
    r = len(vals)
    powers = [vals, vals**2, vals**3, vals**4]
    targets = [0.0, lrv.value, 0.0, 3.0 * lrv.value**2]
    moments, errors = [], []
    for pw in powers:
        moments.append(float(pw.mean()))
        errors.append(float(pw.std(ddof=1) / math.sqrt(r)))
    verdicts = {"ks": bool(ks_pvalue > thr["ks_pvalue_min"])}
    for k in range(4):
        verdicts[f"moment_{k + 1}"] = bool(
            abs(moments[k] - targets[k]) <= thr["moment_sigmas"] * errors[k]
        )
    stats_out = {
        "ks_stat": float(ks_stat),
        "ks_pvalue": float(ks_pvalue),
        "sigma_sq": lrv.value,
        "sigma_sq_exact": lrv.is_exact,
        "moments": moments,
        "moment_targets": targets,
        "moment_stderrs": errors,
        "variance_ratio": moments[1] / lrv.value,
        "b_n": table.norm,
    }
    params = {
        "kernel": kernel.describe(),
        "model": model.describe(),
        "n": list(int(x) for x in n),
        "replicas": int(replicas),
        "seed": int(seed),
    }
    return _make_report("clt", params, stats_out, verdicts, seed, thr)


def _point_floors(n: Sequence[int], t: Sequence[float]) -> tuple[int, ...]:
    return tuple(int(math.floor(nq * tq)) for nq, tq in zip(n, t))


def weight_covariance_identity(
    kernel: ProductKernel, n_r: Sequence[int], n_s: Sequence[int]
) -> tuple[float, float]:
    """Both sides of the pairwise weight-covariance identity.

    lhs: per-axis inner products of the two weight tables, multiplied over
    axes.  rhs: per-axis (b^2_{n_r} + b^2_{n_s} - b^2_{|n_r - n_s|}) / 2,
    multiplied over axes.  Equal up to roundoff for any truncated kernel.
    """
    lhs, rhs = 1.0, 1.0
    for ax, mr, ms in zip(kernel.axes, n_r, n_s):
        if mr == 0 or ms == 0:
            return 0.0, 0.0
        wr = axis_weight_table(ax, mr)
        ws = axis_weight_table(ax, ms)
        # identical j_lo by construction; overlap ends at the shorter table
        k = min(len(wr.values), len(ws.values))
        lhs *= float(wr.values[:k] @ ws.values[:k])
        rhs *= 0.5 * (wr.norm_sq + ws.norm_sq - axis_norm_sq(ax, abs(mr - ms)))
    return lhs, rhs


def fdd_check(
    kernel: ProductKernel,
    model: InnovationModel,
    n: Sequence[int],
    t_points: Sequence[Sequence[float]],
    replicas: int,
    seed: int,
    jobs: int = 1,
    thresholds: dict | None = None,
    replica_dump_path=None,
) -> ExperimentReport:
    """Finite-dimensional distributions against the fractional Brownian sheet.

    Deterministic part: the pairwise weight-covariance identity, checked
    exactly from the weight tables (replica-independent).  Stochastic part:
    the empirical covariance of the normalized partial-sum vectors against
    sigma^2 times the sheet covariance, entry by entry.
    """
    thr = _merged(thresholds)
    if not kernel.fbs_eligible:
        raise ConfigurationError(
            "kernel is not sheet-eligible: all Hurst indices must lie strictly in (0,1)"
        )
    n = tuple(int(x) for x in n)
    pts = [tuple(float(c) for c in t) for t in t_points]
    for t in pts:
        if len(t) != kernel.dim or any(c <= 0.0 or c > 1.0 for c in t):
            raise ConfigurationError(f"t point {t} must lie in (0,1]^{kernel.dim}")
    lrv = long_run_variance(model)
    if lrv.value <= thr["degenerate_variance_floor"]:
        raise DegenerateModelError("long-run variance is zero")

    # deterministic identity over all point pairs
    floors = [_point_floors(n, t) for t in pts]
    ident_err = 0.0
    for fr, fs in itertools.combinations_with_replacement(floors, 2):
        lhs, rhs = weight_covariance_identity(kernel, fr, fs)
        scale = max(abs(lhs), abs(rhs), 1e-300)
        ident_err = max(ident_err, abs(lhs - rhs) / scale)

    # replica engine over the tensor closure of the points
    table = weight_table(kernel, n)
    xbox = _support_box(table)
    axis_values = [sorted({f[q] for f in floors}) for q in range(kernel.dim)]
    axis_tabs = [[axis_weight_table(ax, m) for m in vals] for ax, vals in zip(kernel.axes, axis_values)]
    mats = tuple(axis_matrix(xbox, q, tabs) for q, tabs in enumerate(axis_tabs))
    task = _GridSumTask(model, xbox, mats, table.norm, seed)
    rows = run_replicas(task, replicas, jobs)
    # select the requested points out of the tensor combos (C order)
    col_of = {combo: idx for idx, combo in enumerate(itertools.product(*axis_values))}
    cols = [col_of[f] for f in floors]
    rows = rows.reshape(len(rows), -1)[:, cols]
    if replica_dump_path is not None:
        write_replica_csv(replica_dump_path, pts, rows)

    emp = np.cov(rows, rowvar=False).reshape(len(pts), len(pts))
    target = np.array(
        [[lrv.value * fbs_covariance(kernel.hurst, a, b) for b in pts] for a in pts]
    )
    scale = np.sqrt(np.outer(np.diag(target), np.diag(target)))
    mc_sigma = np.sqrt(
        (np.outer(np.diag(emp), np.diag(emp)) + emp**2) / rows.shape[0]
    )
    tol = np.maximum(thr["fdd_rel_tol"] * scale, thr["fdd_sigmas"] * mc_sigma)
    dev = np.abs(emp - target)
    worst = np.unravel_index(np.argmax(dev / np.maximum(scale, 1e-300)), dev.shape)
    verdicts = {
        "weight_covariance_identity": bool(ident_err <= thr["identity_rel_tol"]),
        "covariance_entries": bool(np.all(dev <= tol)),
    }
    stats_out = {
        "identity_max_rel_err": ident_err,
        "sigma_sq": lrv.value,
        "empirical_covariance": emp,
        "target_covariance": target,
        "max_dev_over_scale": float((dev / np.maximum(scale, 1e-300)).max()),
        "worst_entry": [int(worst[0]), int(worst[1])],
        "n_violations": int((dev > tol).sum()),
        "b_n": table.norm,
    }
    params = {
        "kernel": kernel.describe(),
        "model": model.describe(),
        "n": list(n),
        "t_points": [list(t) for t in pts],
        "replicas": int(replicas),
        "seed": int(seed),
    }
    return _make_report("fdd", params, stats_out, verdicts, seed, thr)


def moment_inequality_check(
    weights: Field,
    model: InnovationModel,
    p: float,
    replicas: int,
    seed: int,
    jobs: int = 1,
    thresholds: dict | None = None,
) -> ExperimentReport:
    """p-norm of a weighted innovation sum against (2p sum a^2)^(1/2) Delta_p."""
    thr = _merged(thresholds)
    p = float(p)
    if p < 2.0:
        raise ConfigurationError(f"moment inequality requires p >= 2, got {p}")
    dep = dependence_measure(model, p, seed=seed)
    sum_sq = float((weights.values**2).sum())
    bound = math.sqrt(2.0 * p * sum_sq) * dep.delta_p

    task = _WeightedSumTask(model, weights.box, weights.values, seed)
    vals = run_replicas(task, replicas, jobs).reshape(-1)
    pw = np.abs(vals) ** p
    est = float(pw.mean() ** (1.0 / p))
    boot_rng = spawn(seed, DOMAIN_BOOTSTRAP)
    boots = np.empty(200)
    for b in range(200):
        idx = boot_rng.integers(0, len(pw), size=len(pw))
        boots[b] = pw[idx].mean() ** (1.0 / p)
    se = float(boots.std(ddof=1))

    verdicts = {"bound": bool(est <= bound + thr["bound_sigmas"] * se)}
    stats_out = {
        "p": p,
        "pnorm_estimate": est,
        "bootstrap_stderr": se,
        "bound": bound,
        "slack": bound - est,
        "delta_p": dep.delta_p,
        "delta_p_exact": dep.is_exact,
        "delta_p_stderr": dep.stderr,
        "sum_sq_weights": sum_sq,
    }
    params = {
        "weights_box_lo": list(weights.box.lo),
        "weights_box_hi": list(weights.box.hi),
        "weights": weights.values,
        "model": model.describe(),
        "p": p,
        "replicas": int(replicas),
        "seed": int(seed),
    }
    return _make_report("moment_inequality", params, stats_out, verdicts, seed, thr)


def tightness_check(
    kernel: ProductKernel,
    model: InnovationModel,
    n_ladder: Sequence[Sequence[int]],
    t_axes: Sequence[Sequence[float]],
    p: float,
    replicas: int,
    seed: int,
    jobs: int = 1,
    thresholds: dict | None = None,
    beta_fraction: float = 0.5,
) -> ExperimentReport:
    """Moment-ratio surrogate for tightness of the normalized process.

    Tracks sup over the t grid of ||S_n(t)||_p^p / (b_n^p prod t_q^beta) with
    beta = min_q p (H_q - gamma_q) > 1 along the n ladder; passes when the
    last rung sits within the stability margin of the ladder maximum.
    """
    thr = _merged(thresholds)
    p = float(p)
    H = kernel.hurst
    if p < 2.0 or p <= max(1.0 / h for h in H):
        raise ConfigurationError(
            f"tightness requires p >= 2 and p > max(1/H_q) = {max(1.0 / h for h in H):.3f}, got p={p}"
        )
    if not 0.0 < beta_fraction < 1.0:
        raise ConfigurationError("beta_fraction must lie in (0,1)")
    beta = 1.0 + beta_fraction * (p * min(H) - 1.0)
    gammas = [h - beta / p for h in H]
    t_axes = [sorted(float(c) for c in ax) for ax in t_axes]
    for ax in t_axes:
        if any(c <= 0.0 or c > 1.0 for c in ax):
            raise ConfigurationError("tightness t grid must lie in (0,1]^d")
    pts = list(itertools.product(*t_axes))
    denom_t = np.array([math.prod(c**beta for c in t) for t in pts])

    rung_stats = []
    per_rung_ratios = []
    for n in n_ladder:
        n = tuple(int(x) for x in n)
        table = weight_table(kernel, n)
        xbox = _support_box(table)
        floors_ax = [sorted({int(math.floor(nq * c)) for c in ax}) for nq, ax in zip(n, t_axes)]
        if any(f[0] < 1 for f in floors_ax):
            raise ConfigurationError(f"t grid too fine for n={n}: floor(n t) hits zero")
        tabs = [[axis_weight_table(ax, m) for m in fl] for ax, fl in zip(kernel.axes, floors_ax)]
        mats = tuple(axis_matrix(xbox, q, tb) for q, tb in enumerate(tabs))
        task = _GridSumTask(model, xbox, mats, table.norm, seed)
        rows = run_replicas(task, replicas, jobs).reshape(replicas, -1)
        # tensor combos are exactly the grid points when floors are distinct;
        # map each t to its combo column
        col_of = {c: i for i, c in enumerate(itertools.product(*floors_ax))}
        cols = [col_of[tuple(int(math.floor(nq * c)) for nq, c in zip(n, t))] for t in pts]
        pmean = (np.abs(rows[:, cols]) ** p).mean(axis=0)
        ratios = pmean / denom_t
        per_rung_ratios.append(ratios)
        rung_stats.append(float(ratios.max()))

    last, peak = rung_stats[-1], max(rung_stats)
    verdicts = {"stabilized": bool(abs(last - peak) <= thr["tightness_stability"] * peak)}
    stats_out = {
        "beta": beta,
        "gammas": gammas,
        "rung_max_ratio": rung_stats,
        "ratios_per_rung": np.array(per_rung_ratios),
        "t_points": [list(t) for t in pts],
    }
    params = {
        "kernel": kernel.describe(),
        "model": model.describe(),
        "n_ladder": [list(int(x) for x in n) for n in n_ladder],
        "t_axes": [list(ax) for ax in t_axes],
        "p": p,
        "beta_fraction": beta_fraction,
        "replicas": int(replicas),
        "seed": int(seed),
    }
    return _make_report("tightness", params, stats_out, verdicts, seed, thr)


def scaling_check(
    kernels: Sequence[AxisKernel],
    n: int,
    s_values: Sequence[float],
    seed: int = 0,
    thresholds: dict | None = None,
) -> ExperimentReport:
    """Deterministic Hurst-scaling ratios b^2_{floor(s n)} / b^2_n vs s^{2H}."""
    thr = _merged(thresholds)
    rows = []
    verdicts = {}
    for k, ax in enumerate(kernels):
        worst = 0.0
        for s in s_values:
            ratio = scaling_ratio(ax, n, float(s))
            target = float(s) ** (2.0 * ax.declared_hurst)
            rel = abs(ratio - target) / target
            worst = max(worst, rel)
            rows.append(
                {
                    "kernel": ax.describe(),
                    "s": float(s),
                    "ratio": ratio,
                    "target": target,
                    "rel_err": rel,
                }
            )
        verdicts[f"kernel_{k}"] = bool(worst <= thr["scaling_rel_tol"])
    stats_out = {"rows": rows, "n": int(n)}
    params = {
        "kernels": [ax.describe() for ax in kernels],
        "n": int(n),
        "s_values": [float(s) for s in s_values],
        "seed": int(seed),
    }
    return _make_report("scaling", params, stats_out, verdicts, seed, thr)


def regularity_check(
    kernels: Sequence[AxisKernel | ProductKernel],
    n_ladder: Sequence[int],
    l: int,
    seed: int = 0,
    thresholds: dict | None = None,
) -> ExperimentReport:
    """Regularity statistics must fall along the ladder; block-average norm
    ratio l^d c_n^2 / b_n^2 must land near 1 at the top rung."""
    thr = _merged(thresholds)
    verdicts = {}
    curves = []
    for k, kern in enumerate(kernels):
        pk = kern if isinstance(kern, ProductKernel) else product_kernel([kern])
        seq = []
        for n in n_ladder:
            table = weight_table(pk, (int(n),) * pk.dim)
            st = regularity_stats(table, l)
            seq.append((st.cs1, st.cs2, st.cs3, st.averaging_ratio))
        arr = np.array(seq)
        strictly_down = bool(np.all(np.diff(arr[:, :3], axis=0) < 0.0))
        top_ok = bool(abs(arr[-1, 3] - 1.0) <= thr["regularity_top_tol"])
        verdicts[f"kernel_{k}_decline"] = strictly_down
        verdicts[f"kernel_{k}_top_ratio"] = top_ok
        curves.append(
            {
                "kernel": pk.describe(),
                "n_ladder": [int(n) for n in n_ladder],
                "cs1": arr[:, 0],
                "cs2": arr[:, 1],
                "cs3": arr[:, 2],
                "averaging_ratio": arr[:, 3],
            }
        )
    stats_out = {"curves": curves, "l": int(l)}
    params = {
        "kernels": [k.describe() for k in kernels],
        "n_ladder": [int(n) for n in n_ladder],
        "l": int(l),
        "seed": int(seed),
    }
    return _make_report("regularity", params, stats_out, verdicts, seed, thr)


def sigma_ml_check(
    model: InnovationModel,
    m: int,
    l: int,
    seed: int = 0,
    thresholds: dict | None = None,
) -> ExperimentReport:
    """Block-sum variance constant against the long-run variance (closed form).

    Also reproduces the i.i.d. reference value (1 - (m+1)/l)^d exactly.
    """
    thr = _merged(thresholds)
    value = sigma_ml(model, m, l)
    lrv = long_run_variance(model)
    if lrv.value <= thr["degenerate_variance_floor"]:
        raise DegenerateModelError("long-run variance is zero")
    rel = abs(value - lrv.value) / lrv.value
    iid = innovation_model(delta_filter(model.dim), "linear", model.noise.name)
    iid_value = sigma_ml(iid, m, l)
    iid_target = (1.0 - (m + 1) / l) ** model.dim
    verdicts = {
        "limit": bool(rel <= thr["sigma_ml_rel_tol"]),
        "iid_reference": bool(abs(iid_value - iid_target) <= thr["sigma_ml_iid_tol"]),
    }
    stats_out = {
        "sigma_ml": value,
        "sigma_sq": lrv.value,
        "rel_dev": rel,
        "iid_value": iid_value,
        "iid_target": iid_target,
    }
    params = {"model": model.describe(), "m": int(m), "l": int(l), "seed": int(seed)}
    return _make_report("sigma_ml", params, stats_out, verdicts, seed, thr)


# ---------------------------------------------------------------------------
# Corpus helpers and the inequality fuzz


def random_weight_family(rng: np.random.Generator, dim: int, max_side: int = 6) -> Field:
    """Random finite weight family on a small box (for the inequality fuzz)."""
    sides = rng.integers(1, max_side + 1, size=dim)
    lo = rng.integers(-3, 4, size=dim)
    vals = rng.standard_normal(tuple(sides))
    if rng.random() < 0.3:
        vals *= rng.random(tuple(sides)) < 0.7  # sprinkle structural zeros
    if rng.random() < 0.2:
        vals = np.round(vals)  # integer-ish families, possibly all zero
    box = Box(tuple(int(x) for x in lo), tuple(int(a + s - 1) for a, s in zip(lo, sides)))
    return Field(box, vals)


def weight_table_family(kernel: ProductKernel, n: Sequence[int]) -> Field:
    """The dense product weight table b_{n,.} as a weight family (small n only)."""
    table = weight_table(kernel, n)
    vals = np.array(1.0)
    for aw in table.axes:
        vals = np.multiply.outer(vals, aw.values)
    return Field(_support_box(table), vals)


def moment_fuzz_check(
    models: Sequence[InnovationModel],
    ps: Sequence[float],
    n_families: int,
    replicas: int,
    seed: int,
    thresholds: dict | None = None,
    dim: int = 2,
    max_side: int = 6,
    table_families: Sequence[Field] = (),
) -> ExperimentReport:
    """Inequality fuzz over a randomized corpus of weight families.

    For every family x model x p combination, the Monte-Carlo p-norm of
    sum_i a_i X_i must not exceed (2p sum a_i^2)^(1/2) Delta_p by more than
    the bootstrap margin.  The verdict requires zero violations.
    """
    thr = _merged(thresholds)
    corpus_rng = spawn(seed, DOMAIN_CORPUS)
    families = [random_weight_family(corpus_rng, dim, max_side) for _ in range(int(n_families))]
    families.extend(table_families)

    deltas = {}
    for mi, model in enumerate(models):
        for p in ps:
            deltas[(mi, float(p))] = dependence_measure(model, float(p), seed=seed)

    rows = []
    violations = 0
    worst_margin = math.inf
    boot_rng = spawn(seed, DOMAIN_BOOTSTRAP)
    stream = 0
    for fi, fam in enumerate(families):
        sum_sq = float((fam.values**2).sum())
        for mi, model in enumerate(models):
            task = _WeightedSumTask(model, fam.box, fam.values, seed, stream)
            stream += 1
            vals = run_replicas(task, replicas, jobs=1).reshape(-1)
            for p in ps:
                p = float(p)
                dep = deltas[(mi, p)]
                bound = math.sqrt(2.0 * p * sum_sq) * dep.delta_p
                pw = np.abs(vals) ** p
                est = float(pw.mean() ** (1.0 / p))
                idx = boot_rng.integers(0, len(pw), size=(200, len(pw)))
                boots = pw[idx].mean(axis=1) ** (1.0 / p)
                se = float(boots.std(ddof=1))
                margin = bound + thr["bound_sigmas"] * se - est
                worst_margin = min(worst_margin, margin)
                ok = margin >= 0.0
                violations += 0 if ok else 1
                rows.append(
                    {
                        "family": fi,
                        "model": mi,
                        "p": p,
                        "estimate": est,
                        "bound": bound,
                        "stderr": se,
                        "margin": margin,
                    }
                )
    verdicts = {"zero_violations": bool(violations == 0)}
    stats_out = {
        "combos": len(rows),
        "violations": violations,
        "worst_margin": worst_margin,
        "rows": rows,
    }
    params = {
        "models": [m.describe() for m in models],
        "ps": [float(p) for p in ps],
        "n_families": int(n_families),
        "n_table_families": len(table_families),
        "dim": int(dim),
        "max_side": int(max_side),
        "replicas": int(replicas),
        "seed": int(seed),
    }
    return _make_report("moment_fuzz", params, stats_out, verdicts, seed, thr)
