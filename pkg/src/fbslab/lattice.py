"""Rectangular lattice boxes and scalar fields on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of lattice sites, bounds inclusive."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ConfigurationError("box bounds have mismatched dimensions")
        if any(h < l for l, h in zip(self.lo, self.hi)):
            raise ConfigurationError(f"empty box: lo={self.lo}, hi={self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def contains(self, site: tuple[int, ...]) -> bool:
        return all(l <= s <= h for l, s, h in zip(self.lo, site, self.hi))

    def index(self, site: tuple[int, ...]) -> tuple[int, ...]:
        """Array index of a lattice site."""
        if not self.contains(site):
            raise ConfigurationError(f"site {site} outside box {self.lo}..{self.hi}")
        return tuple(s - l for s, l in zip(site, self.lo))

    def inflate(self, lo_margin: tuple[int, ...], hi_margin: tuple[int, ...]) -> "Box":
        """Grow the box by per-axis margins (both non-negative)."""
        return Box(
            tuple(l - m for l, m in zip(self.lo, lo_margin)),
            tuple(h + m for h, m in zip(self.hi, hi_margin)),
        )


def unit_box(n: tuple[int, ...]) -> Box:
    """The rectangle {1..n_1} x ... x {1..n_d}."""
    if any(int(nq) < 1 for nq in n):
        raise ConfigurationError(f"box sides must be positive, got {tuple(n)}")
    return Box(tuple(1 for _ in n), tuple(int(nq) for nq in n))


@dataclass
class Field:
    """Real-valued field sampled on a box (values.shape == box.shape)."""

    box: Box
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.box.shape:
            raise ConfigurationError(
                f"field values shape {self.values.shape} != box shape {self.box.shape}"
            )

    def at(self, site: tuple[int, ...]) -> float:
        return float(self.values[self.box.index(site)])
