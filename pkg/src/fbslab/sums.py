"""Moving-average fields, rectangle partial sums and blocking diagnostics.

``linear_field`` realizes xi_j = sum_i a_{j-i} X_i on the rectangle
{1..n_1} x ... x {1..n_d} from innovations sampled on the inflated region,
one axis convolution at a time (valid because the kernel is a product).
``partial_sum_process`` turns one xi realization into S_n(t) for a whole
grid of t values by d-dimensional prefix sums.  ``tensor_grid_sums`` is the
dual route: it contracts the innovation field directly with per-axis weight
vectors, S_n(t) = sum_j b_{nt,j} X_j, and the two routes must agree.

``blocking_decomposition`` estimates the three approximation errors of the
proof chain behind the normal limit (m-truncation of the innovations, block
averaging of the weights, shrinking blocks to independent interior sums) and
``sigma_ml`` evaluates the variance constant of the interior block sums,

    sigma_{m,l}^2 = sum_{|i_r| <= l-m-1} E[Xbar_0 Xbar_i]
                    prod_r (1 - (m+1+|i_r|)/l),

in closed form for the linear link.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal

from .convolve import conv_axis_valid, conv_valid
from .errors import ConfigurationError, DimensionMismatchError, NumericError
from .innovations import InnovationModel, m_truncate, noise_box, realize
from .kernels import AxisWeights, ProductKernel, WeightTable, block_averages, weight_table
from .lattice import Box, Field, unit_box
from .rng import DOMAIN_FIELD, replica_rng


def inflated_box(kernel: ProductKernel, n: Sequence[int]) -> Box:
    """Innovation region needed to realize xi on {1..n}: [1-hi_a, n-lo_a] per axis."""
    n = tuple(int(x) for x in n)
    if len(n) != kernel.dim:
        raise ConfigurationError(f"n has {len(n)} axes, kernel has {kernel.dim}")
    return Box(
        tuple(1 - ax.hi for ax in kernel.axes),
        tuple(nq - ax.lo for nq, ax in zip(n, kernel.axes)),
    )


def linear_field(kernel: ProductKernel, x: Field, method: str = "auto") -> Field:
    """Convolve innovations with the product kernel; output lives on {1..n}."""
    if x.box.dim != kernel.dim:
        raise DimensionMismatchError(
            f"innovation field is {x.box.dim}-dimensional, kernel is {kernel.dim}-dimensional"
        )
    n = tuple(h + ax.lo for h, ax in zip(x.box.hi, kernel.axes))
    expected = inflated_box(kernel, n) if all(nq >= 1 for nq in n) else None
    if expected is None or x.box != expected:
        raise DimensionMismatchError(
            f"innovation region {x.box.lo}..{x.box.hi} does not match the kernel support "
            f"inflation of any rectangle"
        )
    values = x.values
    # shrink the most inflated axes first to cut the cost of later passes
    order = sorted(range(kernel.dim), key=lambda q: len(kernel.axes[q].coeffs), reverse=True)
    for q in order:
        values = conv_axis_valid(values, kernel.axes[q].coeffs, q, method=method)
    return Field(unit_box(n), values)


@dataclass
class PartialSumProcess:
    """S_n(t) on a finite grid of t in [0,1]^d, computed from one xi field."""

    n: tuple[int, ...]
    t_points: tuple[tuple[float, ...], ...]
    values: dict[tuple[float, ...], float]
    normalizer: float | None = None

    def normalized(self, t: tuple[float, ...]) -> float:
        if self.normalizer is None:
            raise ConfigurationError("no normalizer attached to this process")
        return self.values[t] / self.normalizer


def partial_sum_process(
    xi: Field,
    t_points: Sequence[Sequence[float]],
    normalizer: float | None = None,
) -> PartialSumProcess:
    """Evaluate S_n(t) for every t in one pass of d-dimensional prefix sums."""
    if xi.box.lo != (1,) * xi.box.dim:
        raise ConfigurationError("partial sums need a field on the rectangle {1..n}")
    n = xi.box.hi
    pts = [tuple(float(c) for c in t) for t in t_points]
    for t in pts:
        if len(t) != xi.box.dim:
            raise ConfigurationError(f"t point {t} has wrong dimension")
        if any(c < 0.0 or c > 1.0 for c in t):
            raise ConfigurationError(f"t point {t} outside [0,1]^d")
    prefix = xi.values
    for q in range(xi.box.dim):
        prefix = np.cumsum(prefix, axis=q)
    values: dict[tuple[float, ...], float] = {}
    for t in pts:
        m = tuple(int(math.floor(nq * tq)) for nq, tq in zip(n, t))
        if any(mq == 0 for mq in m):
            values[t] = 0.0
        else:
            values[t] = float(prefix[tuple(mq - 1 for mq in m)])
    return PartialSumProcess(n, tuple(pts), values, normalizer)


# ---------------------------------------------------------------------------
# Direct weighted sums (the dual route)


def axis_matrix(box: Box, axis: int, tables: Sequence[AxisWeights]) -> np.ndarray:
    """Stack axis weight vectors into a (extent, len(tables)) matrix aligned to box."""
    extent = box.shape[axis]
    lo = box.lo[axis]
    out = np.zeros((extent, len(tables)))
    for col, aw in enumerate(tables):
        start = aw.j_lo - lo
        if start < 0 or start + len(aw.values) > extent:
            raise DimensionMismatchError(
                f"axis-{axis} weights on [{aw.j_lo},{aw.j_hi}] do not fit the field box"
            )
        out[start : start + len(aw.values), col] = aw.values
    return out


def contract(values: np.ndarray, matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Successive per-axis contractions; returns array of shape (g_1,...,g_d)."""
    arr = values
    for mat in matrices:
        arr = np.moveaxis(np.tensordot(mat, arr, axes=(0, 0)), 0, -1)
    return arr


def tensor_grid_sums(x: Field, axis_tables: Sequence[Sequence[AxisWeights]]) -> np.ndarray:
    """S values for the tensor grid of per-axis weight tables: sum_j b_j X_j."""
    if len(axis_tables) != x.box.dim:
        raise DimensionMismatchError("one weight-table list per axis is required")
    mats = [axis_matrix(x.box, q, tabs) for q, tabs in enumerate(axis_tables)]
    return contract(x.values, mats)


def weighted_sum(x: Field, table: WeightTable) -> float:
    """S_n = sum_j b_{n,j} X_j for one weight table."""
    return float(tensor_grid_sums(x, [[ax] for ax in table.axes]).reshape(()))


# ---------------------------------------------------------------------------
# Blocking decomposition


@dataclass(frozen=True)
class BlockingDiagnostics:
    """Monte-Carlo sizes of the proof-chain approximation errors, each / b_n."""

    m: int
    l: int
    replicas: int
    error_ma: float
    error_ma_stderr: float
    error_avg: float
    error_avg_stderr: float
    error_blk: float
    error_blk_stderr: float
    sigma_ml: float
    blocking_bound: float
    delta_bar_2: float


def _interior_mask(aw: AxisWeights, l: int, m: int) -> np.ndarray:
    # interior of block I_k keeps positions l k + 1 .. l k + l - (m+1)
    j = np.arange(aw.j_lo, aw.j_hi + 1, dtype=np.int64)
    pos = j - 1 - ((j - 1) // l) * l  # 0-based position within the block
    return pos < (l - (m + 1))


def _padded_window_taps(model: InnovationModel, m: int) -> np.ndarray:
    """m-window filter taps embedded in the full filter's dense box."""
    filt = model.filter
    w = m // 2
    taps = np.zeros_like(filt.taps)
    sl = []
    for lo, hi in zip(filt.lo, filt.hi):
        a, b = max(lo, -w), min(hi, w)
        if a > b:
            return taps
        sl.append(slice(a - lo, b - lo + 1))
    taps[tuple(sl)] = filt.taps[tuple(sl)]
    return taps


def blocking_decomposition(
    kernel: ProductKernel,
    model: InnovationModel,
    n: Sequence[int],
    m: int,
    l: int,
    replicas: int,
    seed: int,
) -> BlockingDiagnostics:
    """Estimate the three approximation errors of the blocking proof chain.

    Requires the linear link (m-truncation is only exact there) and l > m+1.
    Per replica, one noise tape drives both the field X and its m-window
    truncation Xbar, and the four weighted sums S(X,b), S(Xbar,b),
    S(Xbar,bbar), S(Y,c) are per-axis contractions of the same arrays.
    """
    if l <= m + 1:
        raise ConfigurationError(f"invalid blocking: need l > m+1, got l={l}, m={m}")
    if not model.is_linear:
        m_truncate(model, m)  # raises UnsupportedLinkError with the explanation
    table = block_averages(weight_table(kernel, n), l)
    b_n = table.norm
    if b_n <= 0:
        raise ConfigurationError("weight table has zero norm")

    # per-axis vectors on the weight support grid
    b_vecs, bbar_vecs, ytil_vecs = [], [], []
    for aw, bl in zip(table.axes, table.blocks):
        j = np.arange(aw.j_lo, aw.j_hi + 1, dtype=np.int64)
        c_per_j = bl.values[(j - 1) // l - bl.k_lo]
        b_vecs.append(AxisWeights(aw.n, aw.j_lo, aw.values))
        bbar_vecs.append(AxisWeights(aw.n, aw.j_lo, c_per_j))
        ytil_vecs.append(AxisWeights(aw.n, aw.j_lo, c_per_j * _interior_mask(aw, l, m)))

    xbox = Box(
        tuple(aw.j_lo for aw in table.axes),
        tuple(aw.j_hi for aw in table.axes),
    )
    mats_b = [axis_matrix(xbox, q, [v]) for q, v in enumerate(b_vecs)]
    mats_bbar = [axis_matrix(xbox, q, [v]) for q, v in enumerate(bbar_vecs)]
    mats_ytil = [axis_matrix(xbox, q, [v]) for q, v in enumerate(ytil_vecs)]

    taps_bar = _padded_window_taps(model, m)
    ebox = noise_box(model, xbox)

    sq = np.empty((replicas, 3))
    for r in range(replicas):
        rng = replica_rng(seed, DOMAIN_FIELD, r)
        eps = model.noise.sample(rng, ebox.shape)
        x = realize(model, eps)
        xbar = conv_valid(eps, taps_bar)
        s_xb = float(contract(x, mats_b).reshape(()))
        s_xbar_b = float(contract(xbar, mats_b).reshape(()))
        s_xbar_bbar = float(contract(xbar, mats_bbar).reshape(()))
        s_yc = float(contract(xbar, mats_ytil).reshape(()))
        sq[r] = [(s_xb - s_xbar_b) ** 2, (s_xbar_b - s_xbar_bbar) ** 2, (s_xbar_bbar - s_yc) ** 2]

    means = sq.mean(axis=0)
    stds = sq.std(axis=0, ddof=1) / math.sqrt(replicas)
    errors = np.sqrt(means) / b_n
    # delta-method standard error of sqrt(mean)/b_n
    stderrs = np.where(means > 0, stds / (2.0 * np.sqrt(np.maximum(means, 1e-300))), 0.0) / b_n

    model_bar = m_truncate(model, m)
    delta_bar_2 = model_bar.filter.l1 * model_bar.noise.diff_p_norm(2.0)
    d = kernel.dim
    c_norm_sq = math.prod(bl.norm_sq for bl in table.blocks)
    shrink = 1.0 - ((l - (m + 1)) / l) ** d
    bound = math.sqrt(4.0 * shrink * (l ** d) * c_norm_sq) * delta_bar_2 / b_n

    s_ml = sigma_ml(model, m, l)
    return BlockingDiagnostics(
        m, l, replicas,
        float(errors[0]), float(stderrs[0]),
        float(errors[1]), float(stderrs[1]),
        float(errors[2]), float(stderrs[2]),
        s_ml, bound, delta_bar_2,
    )


def sigma_ml(model: InnovationModel, m: int, l: int) -> float:
    """Variance constant of the normalized interior block sums (linear link).

    The product over axes uses the per-axis lag |i_r|; negative weight factors
    cannot occur because the lag set is capped at l-m-1 where the factor hits
    zero.
    """
    if l <= m + 1:
        raise ConfigurationError(f"invalid blocking: need l > m+1, got l={l}, m={m}")
    if not model.is_linear:
        m_truncate(model, m)  # raises with explanation
    taps_bar = m_truncate(model, m).filter.taps
    # E[Xbar_0 Xbar_i] = autocorrelation of the truncated filter (unit-variance noise)
    gamma = signal.correlate(taps_bar, taps_bar, mode="full", method="direct")
    out = np.asarray(gamma, dtype=np.float64)
    for axis, extent in enumerate(gamma.shape):
        half = (extent - 1) // 2
        lags = np.abs(np.arange(-half, half + 1, dtype=np.float64))
        w = np.maximum(1.0 - (m + 1 + lags) / l, 0.0)
        shape = [1] * gamma.ndim
        shape[axis] = extent
        out = out * w.reshape(shape)
    value = float(out.sum())
    if value < -1e-12:
        raise NumericError(f"sigma_{{m,l}}^2 = {value} is negative beyond roundoff")
    return max(value, 0.0)


def write_replica_csv(path: str | Path, t_points: Sequence[Sequence[float]], rows: np.ndarray) -> None:
    """One row per replica, one column per grid point, t-coordinates in the header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t=" + ",".join(f"{c:.6g}" for c in t) for t in t_points])
        for row in np.atleast_2d(rows):
            writer.writerow([repr(float(v)) for v in row])
