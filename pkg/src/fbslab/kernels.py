"""Coefficient families, partial-sum weights and regularity diagnostics.

An axis kernel is a square-summable real sequence ``a_i`` on the integers,
truncated to a finite window.  A product kernel combines one axis kernel per
lattice dimension, ``a_i = prod_q a_{i_q}(q)``.  Rectangle partial sums of the
induced moving average are weighted sums of the innovations with weights

    b_{n,j}(q) = sum_{i=1..n_q} a_{i-j}(q),    b_n(q) = (sum_j b_{n,j}(q)^2)^{1/2},

and the full-lattice weights factor over axes.  This module builds those
tables by prefix sums, forms block averages over index blocks of side ``l``,
and computes the three regularity statistics that govern the normal limit of
the weighted sums, plus the Hurst scaling ratio b^2_{floor(s n)} / b^2_n.

Built-in families (alpha windows enforced at construction):

* ``fractional_gamma(alpha)``, alpha in (0, 1/2): a_0 = 1 and the gamma-ratio
  recurrence a_i = a_{i-1} (i - 1 + alpha) / i.  Hurst index alpha + 1/2.
  This is the one-axis fractional-integration filter.
* ``differenced_power(alpha)``, alpha in (0, 1/2): a_0 = 1,
  a_i = (i+1)^-alpha - i^-alpha.  Partial sums telescope, Hurst 1/2 - alpha.
* ``regularly_varying(alpha)``, alpha in (1/2, 1): by default the smoothed
  power a_i = ((i+1)^(1-alpha) - i^(1-alpha)) / (1-alpha), i >= 0, which is
  asymptotically i^-alpha and has exactly power-law partial sums.  (The naive
  a_i = i^-alpha carries an additive constant in its partial sums that keeps
  the scaling ratio a few percent off target at any desk-scale n.)  Optional
  slowly-varying correction (log(i+e))^gamma via ``log_exponent``.  Hurst
  3/2 - alpha.
* ``log_corrected(alpha)``, alpha > 1/2: a_0 = 1, a_i = i^-1/2 (log(i+1))^-alpha.
  Boundary case with Hurst 1; flagged ineligible for sheet-limit checks
  (those need Hurst strictly inside (0,1)).
* ``identity``: a_0 = 1 only.
* ``finite_support(taps, lo)``: arbitrary finite coefficients, two-sided.

Infinite families are truncated at a radius chosen explicitly or solved from
a tolerance on the discarded squared tail mass; the achieved tail fraction is
recorded on the kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DegenerateWeightsError

FAMILIES = (
    "fractional_gamma",
    "differenced_power",
    "regularly_varying",
    "log_corrected",
    "identity",
    "finite_support",
)

# Parameter windows, for validation and self-documentation.
FAMILY_WINDOWS = {
    "fractional_gamma": "alpha in (0, 1/2); Hurst = alpha + 1/2",
    "differenced_power": "alpha in (0, 1/2); Hurst = 1/2 - alpha",
    "regularly_varying": "alpha in (1/2, 1); Hurst = 3/2 - alpha",
    "log_corrected": "alpha > 1/2; Hurst = 1 (not sheet-eligible)",
    "identity": "no parameters; Hurst = 1/2",
    "finite_support": "taps: finite list of reals; Hurst = 1/2 (if taps sum != 0)",
}

_MAX_RADIUS = 1 << 26


@dataclass(frozen=True)
class AxisKernel:
    """One truncated coefficient sequence with its declared Hurst index.

    ``coeffs[k]`` is the coefficient at lattice index ``lo + k``.  Immutable
    after construction; safe to share across workers.
    """

    family: str
    alpha: float | None
    lo: int
    coeffs: np.ndarray
    declared_hurst: float
    fbs_eligible: bool
    tail_fraction: float
    log_exponent: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.ascontiguousarray(self.coeffs, dtype=np.float64))
        self.coeffs.setflags(write=False)

    @property
    def hi(self) -> int:
        return self.lo + len(self.coeffs) - 1

    @property
    def truncation_radius(self) -> int:
        return max(abs(self.lo), abs(self.hi))

    @property
    def sum_sq(self) -> float:
        return float(self.coeffs @ self.coeffs)

    @property
    def total(self) -> float:
        return float(self.coeffs.sum())

    def describe(self) -> dict:
        d = {"family": self.family, "radius": int(self.truncation_radius)}
        if self.alpha is not None:
            d["alpha"] = float(self.alpha)
        if self.log_exponent is not None:
            d["log_exponent"] = float(self.log_exponent)
        if self.family == "finite_support":
            d["taps"] = [float(t) for t in self.coeffs]
            d["lo"] = int(self.lo)
        d["declared_hurst"] = float(self.declared_hurst)
        return d


def coeff(kernel: AxisKernel, i: int) -> float:
    """Coefficient a_i; exactly zero outside the truncation window."""
    if i < kernel.lo or i > kernel.hi:
        return 0.0
    return float(kernel.coeffs[i - kernel.lo])


def _fractional_gamma_coeffs(alpha: float, radius: int) -> np.ndarray:
    # Stable recurrence a_0 = 1, a_i = a_{i-1} (i-1+alpha)/i; direct gamma
    # quotients overflow near i ~ 170.
    i = np.arange(1, radius + 1, dtype=np.float64)
    return np.concatenate([[1.0], np.cumprod((i - 1.0 + alpha) / i)])


def _differenced_power_coeffs(alpha: float, radius: int) -> np.ndarray:
    i = np.arange(1, radius + 1, dtype=np.float64)
    return np.concatenate([[1.0], (i + 1.0) ** (-alpha) - i ** (-alpha)])


def _regularly_varying_coeffs(alpha: float, radius: int, log_exponent: float | None) -> np.ndarray:
    if log_exponent is None:
        i = np.arange(0, radius + 1, dtype=np.float64)
        return ((i + 1.0) ** (1.0 - alpha) - i ** (1.0 - alpha)) / (1.0 - alpha)
    i = np.arange(1, radius + 1, dtype=np.float64)
    body = i ** (-alpha) * np.log(i + math.e) ** log_exponent
    return np.concatenate([[1.0], body])


def _log_corrected_coeffs(alpha: float, radius: int) -> np.ndarray:
    i = np.arange(1, radius + 1, dtype=np.float64)
    return np.concatenate([[1.0], i ** (-0.5) * np.log(i + 1.0) ** (-alpha)])


def _tail_sq_estimate(family: str, alpha: float, radius: int, log_exponent: float | None) -> float:
    """Asymptotic integral estimate of sum_{i > radius} a_i^2."""
    r = float(radius)
    if family == "fractional_gamma":
        # a_i ~ i^(alpha-1) / Gamma(alpha)
        g = math.gamma(alpha)
        return r ** (2 * alpha - 1) / ((1 - 2 * alpha) * g * g)
    if family == "differenced_power":
        # a_i ~ -alpha i^(-alpha-1)
        return alpha * alpha * r ** (-2 * alpha - 1) / (2 * alpha + 1)
    if family == "regularly_varying":
        le = 0.0 if log_exponent is None else log_exponent
        return r ** (1 - 2 * alpha) * math.log(r + math.e) ** (2 * le) / (2 * alpha - 1)
    if family == "log_corrected":
        # a_i^2 ~ i^-1 (log i)^(-2 alpha)
        return math.log(r + 1.0) ** (1 - 2 * alpha) / (2 * alpha - 1)
    return 0.0


def _radius_for_tail_tol(family: str, alpha: float, tail_tol: float, log_exponent: float | None) -> int:
    """Smallest radius with estimated relative squared tail below tail_tol."""
    lo, hi = 1, 2
    probe = _materialized_total(family, alpha, 1 << 12, log_exponent)
    while hi <= _MAX_RADIUS:
        if _tail_sq_estimate(family, alpha, hi, log_exponent) <= tail_tol * probe:
            break
        hi *= 2
    else:
        raise ConfigurationError(
            f"tail_tol={tail_tol} for family '{family}' (alpha={alpha}) needs a truncation "
            f"radius beyond {_MAX_RADIUS}; pass an explicit radius instead"
        )
    while lo < hi:
        mid = (lo + hi) // 2
        if _tail_sq_estimate(family, alpha, mid, log_exponent) <= tail_tol * probe:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _materialized_total(family: str, alpha: float, radius: int, log_exponent: float | None) -> float:
    if family == "fractional_gamma":
        c = _fractional_gamma_coeffs(alpha, radius)
    elif family == "differenced_power":
        c = _differenced_power_coeffs(alpha, radius)
    elif family == "regularly_varying":
        c = _regularly_varying_coeffs(alpha, radius, log_exponent)
    else:
        c = _log_corrected_coeffs(alpha, radius)
    return float(c @ c) + _tail_sq_estimate(family, alpha, radius, log_exponent)


def axis_kernel(
    family: str,
    alpha: float | None = None,
    *,
    radius: int | None = None,
    tail_tol: float | None = None,
    taps: Sequence[float] | None = None,
    lo: int = 0,
    log_exponent: float | None = None,
) -> AxisKernel:
    """Construct an axis kernel, validating the family's parameter window.

    Infinite families need ``radius`` or ``tail_tol`` (radius solved from the
    tail estimate).  When both are given the achieved tail fraction is checked
    against ``tail_tol``.
    """
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown kernel family '{family}'; known: {FAMILIES}")

    if family == "identity":
        return AxisKernel("identity", None, 0, np.array([1.0]), 0.5, True, 0.0)

    if family == "finite_support":
        if taps is None or len(taps) == 0:
            raise ConfigurationError("finite_support kernel needs a non-empty taps list")
        arr = np.asarray(taps, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("finite_support taps must be finite reals")
        return AxisKernel("finite_support", None, int(lo), arr, 0.5, True, 0.0)

    if alpha is None:
        raise ConfigurationError(f"family '{family}' requires alpha ({FAMILY_WINDOWS[family]})")
    alpha = float(alpha)
    if family in ("fractional_gamma", "differenced_power") and not 0.0 < alpha < 0.5:
        raise ConfigurationError(
            f"family '{family}' requires alpha in (0, 0.5), got {alpha}"
        )
    if family == "regularly_varying" and not 0.5 < alpha < 1.0:
        raise ConfigurationError(
            f"family 'regularly_varying' requires alpha in (0.5, 1), got {alpha}"
        )
    if family == "log_corrected" and not alpha > 0.5:
        raise ConfigurationError(f"family 'log_corrected' requires alpha > 0.5, got {alpha}")

    if radius is None:
        if tail_tol is None:
            raise ConfigurationError(
                f"family '{family}' has infinite support; pass radius or tail_tol"
            )
        radius = _radius_for_tail_tol(family, alpha, float(tail_tol), log_exponent)
    radius = int(radius)
    if radius < 1:
        raise ConfigurationError(f"truncation radius must be >= 1, got {radius}")
    if radius > _MAX_RADIUS:
        raise ConfigurationError(f"truncation radius {radius} exceeds cap {_MAX_RADIUS}")

    if family == "fractional_gamma":
        coeffs = _fractional_gamma_coeffs(alpha, radius)
        hurst, eligible = alpha + 0.5, True
    elif family == "differenced_power":
        coeffs = _differenced_power_coeffs(alpha, radius)
        hurst, eligible = 0.5 - alpha, True
    elif family == "regularly_varying":
        coeffs = _regularly_varying_coeffs(alpha, radius, log_exponent)
        hurst, eligible = 1.5 - alpha, True
    else:
        coeffs = _log_corrected_coeffs(alpha, radius)
        hurst, eligible = 1.0, False

    tail_sq = _tail_sq_estimate(family, alpha, radius, log_exponent)
    tail_fraction = tail_sq / (float(coeffs @ coeffs) + tail_sq)
    if tail_tol is not None and tail_fraction > float(tail_tol):
        raise ConfigurationError(
            f"radius {radius} leaves relative squared tail {tail_fraction:.3e} "
            f"> tail_tol {tail_tol} for family '{family}'"
        )
    return AxisKernel(family, alpha, 0, coeffs, hurst, eligible, tail_fraction, log_exponent)


@dataclass(frozen=True)
class ProductKernel:
    """Product-form coefficients a_i = prod_q a_{i_q}(q)."""

    axes: tuple[AxisKernel, ...]

    def __post_init__(self):
        if len(self.axes) == 0:
            raise ConfigurationError("product kernel needs at least one axis")
        object.__setattr__(self, "axes", tuple(self.axes))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def hurst(self) -> tuple[float, ...]:
        return tuple(ax.declared_hurst for ax in self.axes)

    @property
    def fbs_eligible(self) -> bool:
        return all(ax.fbs_eligible and 0.0 < ax.declared_hurst < 1.0 for ax in self.axes)

    def coefficient_box(self) -> np.ndarray:
        """Dense d-dim coefficient array over the truncation box (small kernels)."""
        size = int(np.prod([len(ax.coeffs) for ax in self.axes], dtype=np.int64))
        if size > (1 << 24):
            raise ConfigurationError(f"coefficient box with {size} cells is too large to materialize")
        out = np.array(1.0)
        for ax in self.axes:
            out = np.multiply.outer(out, ax.coeffs)
        return out.reshape([len(ax.coeffs) for ax in self.axes])

    def describe(self) -> dict:
        return {"axes": [ax.describe() for ax in self.axes]}


def product_kernel(axes: Sequence[AxisKernel]) -> ProductKernel:
    return ProductKernel(tuple(axes))


# ---------------------------------------------------------------------------
# Weight tables


@dataclass(frozen=True)
class AxisWeights:
    """Partial-sum weights b_{n,j} along one axis, stored with j offset."""

    n: int
    j_lo: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        self.values.setflags(write=False)

    @property
    def j_hi(self) -> int:
        return self.j_lo + len(self.values) - 1

    @property
    def norm_sq(self) -> float:
        return float(self.values @ self.values)

    @property
    def norm(self) -> float:
        return math.sqrt(self.norm_sq)


@dataclass(frozen=True)
class AxisBlocks:
    """Block averages c_{n,k} = (1/l) sum_{j in I_k} b_{n,j} along one axis.

    Blocks are I_k = {l k + 1, ..., l k + l}; entry ``values[k - k_lo]``.
    """

    l: int
    k_lo: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        self.values.setflags(write=False)

    @property
    def norm_sq(self) -> float:
        return float(self.values @ self.values)

    @property
    def norm(self) -> float:
        return math.sqrt(self.norm_sq)


@dataclass(frozen=True)
class WeightTable:
    """Per-axis weights for the rectangle {1..n_1} x ... x {1..n_d}.

    The d-dimensional weight at j is the product of the axis entries; the
    norms multiply accordingly (b_n = prod_q b_n(q)).  Block data is attached
    by :func:`block_averages`.
    """

    kernel: ProductKernel
    n: tuple[int, ...]
    axes: tuple[AxisWeights, ...]
    block_len: int | None = None
    blocks: tuple[AxisBlocks, ...] | None = None

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def norm(self) -> float:
        return math.prod(ax.norm for ax in self.axes)

    @property
    def norm_sq(self) -> float:
        return math.prod(ax.norm_sq for ax in self.axes)

    @property
    def block_norm(self) -> float:
        if self.blocks is None:
            raise ConfigurationError("weight table has no block averages attached")
        return math.prod(bl.norm for bl in self.blocks)

    def weight_at(self, j: tuple[int, ...]) -> float:
        out = 1.0
        for ax, jq in zip(self.axes, j):
            if jq < ax.j_lo or jq > ax.j_hi:
                return 0.0
            out *= float(ax.values[jq - ax.j_lo])
        return out


def axis_weight_table(kernel: AxisKernel, n_q: int) -> AxisWeights:
    """Weights b_{n,j} = sum_{i=1..n_q} a_{i-j} by one pass of prefix sums.

    Support is j in [1 - hi_a, n_q - lo_a] for coefficient support [lo_a, hi_a].
    """
    n_q = int(n_q)
    if n_q < 1:
        raise ConfigurationError(f"axis length must be >= 1, got {n_q}")
    a = kernel.coeffs
    # prefix[k] = sum of coefficients with lattice index < lo + k
    prefix = np.concatenate([[0.0], np.cumsum(a)])
    j_lo = 1 - kernel.hi
    j = np.arange(j_lo, n_q - kernel.lo + 1, dtype=np.int64)
    # b_{n,j} = P(n-j) - P(-j) with P(M) = sum_{i <= M} a_i
    hi_idx = np.clip(n_q - j - kernel.lo + 1, 0, len(a))
    lo_idx = np.clip(-j - kernel.lo + 1, 0, len(a))
    values = prefix[hi_idx] - prefix[lo_idx]
    return AxisWeights(n_q, int(j_lo), values)


def axis_norm_sq(kernel: AxisKernel, n_q: int) -> float:
    """b_n(q)^2, with the empty-window convention b_0(q) = 0."""
    if int(n_q) == 0:
        return 0.0
    return axis_weight_table(kernel, n_q).norm_sq


def weight_table(kernel: ProductKernel, n: Sequence[int]) -> WeightTable:
    n = tuple(int(x) for x in n)
    if len(n) != kernel.dim:
        raise ConfigurationError(f"n has {len(n)} axes but kernel has {kernel.dim}")
    axes = tuple(axis_weight_table(ax, nq) for ax, nq in zip(kernel.axes, n))
    return WeightTable(kernel, n, axes)


def _axis_blocks(aw: AxisWeights, l: int) -> AxisBlocks:
    # I_k covers j in [l k + 1, l k + l]  <=>  k = floor((j - 1) / l)
    j = np.arange(aw.j_lo, aw.j_hi + 1, dtype=np.int64)
    k = (j - 1) // l
    k_lo = int(k[0])
    sums = np.bincount((k - k_lo).astype(np.int64), weights=aw.values, minlength=int(k[-1]) - k_lo + 1)
    return AxisBlocks(l, k_lo, sums / l)


def block_averages(table: WeightTable, l: int) -> WeightTable:
    """Attach per-axis block averages over index blocks of side ``l``."""
    l = int(l)
    if l < 1:
        raise ConfigurationError(f"block length must be >= 1, got {l}")
    blocks = tuple(_axis_blocks(ax, l) for ax in table.axes)
    return WeightTable(table.kernel, table.n, table.axes, l, blocks)


@dataclass(frozen=True)
class RegularityStats:
    """The three regularity statistics of a blocked weight table.

    cs1 = sum_k sum_{j in I_k} (b_{n,j} - c_{n,k})^2 / b_n^2
    cs2 = sum_k sum_{j in I_k} |b_{n,j}^2 - c_{n,k}^2| / b_n^2
    cs3 = sup_j |c_{n,j}| / c_n

    ``averaging_ratio`` is l^d c_n^2 / b_n^2 (tends to 1; equals 1 - cs1).
    """

    l: int
    cs1: float
    cs2: float
    cs3: float
    averaging_ratio: float


_CS2_CELL_BUDGET = 1 << 26


def _block_padded_axis(aw: AxisWeights, bl: AxisBlocks) -> tuple[np.ndarray, np.ndarray]:
    """Weights and per-cell block averages on the block-aligned grid.

    Boundary blocks straddle the support edge; their cells outside the
    support carry b = 0 but a nonzero block average, and they count in the
    regularity sums (the block sums run over all of I_k).
    """
    l = bl.l
    j = np.arange(l * bl.k_lo + 1, l * (bl.k_lo + len(bl.values)) + 1, dtype=np.int64)
    b = np.zeros(len(j))
    start = aw.j_lo - int(j[0])
    b[start : start + len(aw.values)] = aw.values
    c = np.repeat(bl.values, l)
    return b, c


def _cs2_exact(table: WeightTable) -> float:
    """sum_k sum_{j in I_k} |b^2 - c^2|, chunked along the first axis."""
    axes, blocks = table.axes, table.blocks
    padded = [_block_padded_axis(aw, bl) for aw, bl in zip(axes, blocks)]
    if table.dim == 1:
        b, c = padded[0]
        return float(np.abs(b * b - c * c).sum())
    cells = int(np.prod([len(b) for b, _ in padded], dtype=np.int64))
    if cells > _CS2_CELL_BUDGET:
        raise ConfigurationError(
            f"exact cs2 needs {cells} cells (> {_CS2_CELL_BUDGET}); use a smaller instance"
        )
    # dense tails over axes 2..d, chunk along axis 1
    b_tail = np.array(1.0)
    c_tail = np.array(1.0)
    for b, c in padded[1:]:
        b_tail = np.multiply.outer(b_tail, b)
        c_tail = np.multiply.outer(c_tail, c)
    b_tail2 = b_tail**2
    c_tail2 = c_tail**2
    total = 0.0
    for b0v, c0v in zip(*padded[0]):
        total += float(np.abs((b0v * b0v) * b_tail2 - (c0v * c0v) * c_tail2).sum())
    return total


def regularity_stats(table: WeightTable, l: int | None = None) -> RegularityStats:
    """Regularity statistics; requires positive norms (else degenerate)."""
    if l is not None and (table.blocks is None or table.block_len != int(l)):
        table = block_averages(table, int(l))
    if table.blocks is None:
        raise ConfigurationError("regularity_stats needs a block length")
    b2 = table.norm_sq
    if b2 <= 0.0:
        raise DegenerateWeightsError("weight table has zero norm; statistics undefined")
    c2 = math.prod(bl.norm_sq for bl in table.blocks)
    if c2 <= 0.0:
        raise DegenerateWeightsError("block averages have zero norm; cs3 undefined")
    ld = table.block_len ** table.dim
    ratio = ld * c2 / b2
    # within each block, sum_j (b - c_k)^2 = sum_j b^2 - l^d c_k^2 exactly
    cs1 = 1.0 - ratio
    cs2 = _cs2_exact(table) / b2
    cs3 = math.prod(float(np.abs(bl.values).max()) / bl.norm for bl in table.blocks)
    return RegularityStats(table.block_len, cs1, cs2, cs3, ratio)


def scaling_ratio(kernel: AxisKernel, n_q: int, s: float) -> float:
    """b^2_{floor(s n)} / b^2_n along one axis; compare to s^(2H)."""
    n_q = int(n_q)
    if not 0.0 < s <= 1.0:
        raise ConfigurationError(f"scaling fraction s must be in (0, 1], got {s}")
    m = int(math.floor(s * n_q))
    if m < 1:
        raise ConfigurationError(f"floor(s * n) = {m} < 1 for s={s}, n={n_q}")
    if m == n_q:
        return 1.0
    return axis_norm_sq(kernel, m) / axis_norm_sq(kernel, n_q)
