"""Datasets pairing spatial locations with compositions, and design matrices.

The stacked data vector orders component-major: all sites of transformed
component 1, then all sites of component 2, and so on. Component r is the
r-th non-denominator part in original column order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .simplex import alr_array, closure_array
from .spatial import SpatialLocations

__all__ = ["DesignMatrix", "GeoDataset", "default_denominator"]


@dataclass(frozen=True)
class DesignMatrix:
    """Per-component design blocks D_r and their block-diagonal assembly."""

    blocks: tuple[np.ndarray, ...]
    names: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        blocks = tuple(np.atleast_2d(np.asarray(b, dtype=float)) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise ValueError("need at least one design block")
        n = blocks[0].shape[0]
        for r, b in enumerate(blocks):
            if b.shape[0] != n:
                raise ValueError("design blocks must share the row count")
            if np.linalg.matrix_rank(b) < b.shape[1]:
                raise ValueError(f"design block {r} is rank deficient")
        if not self.names:
            names = []
            for b in blocks:
                names.append(tuple("intercept" if j == 0 and b.shape[1] == 1 else f"x{j}" for j in range(b.shape[1])))
            object.__setattr__(self, "names", tuple(names))

    @property
    def n(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def p_total(self) -> int:
        return sum(b.shape[1] for b in self.blocks)

    @property
    def assembled(self) -> np.ndarray:
        """Block-diagonal n(B-1) x P matrix matching the stacked data order."""
        return block_diag(*self.blocks)

    def coef_names(self) -> list[str]:
        out = []
        for r, cols in enumerate(self.names, start=1):
            if len(cols) == 1:
                out.append(f"beta_{r}")
            else:
                out.extend(f"beta_{r}[{c}]" for c in cols)
        return out


def default_denominator(parts: np.ndarray) -> int:
    """Index of the part with the largest geometric mean across the dataset.

    The most abundant part makes the log-ratios numerically tamest, so it is
    the default alr reference.
    """
    parts = np.atleast_2d(np.asarray(parts, dtype=float))
    return int(np.argmax(np.log(parts).mean(axis=0)))


@dataclass(frozen=True)
class GeoDataset:
    """n spatial locations with B-part compositions and an optional design.

    Parameters
    ----------
    locations : SpatialLocations
    parts : ndarray of shape (n, B)
        Strictly positive rows summing to 1; use
        :func:`geocomp.simplex.closure_array` on raw measurements first.
    part_names : tuple of str
    denominator : int, optional
        0-based alr reference column; defaults to the part with the largest
        geometric mean.
    design_blocks : tuple of ndarray, optional
        Per-component design matrices; intercept-only when omitted.
    """

    locations: SpatialLocations
    parts: np.ndarray
    part_names: tuple[str, ...] = ()
    denominator: int | None = None
    design_blocks: tuple[np.ndarray, ...] | None = None
    design_names: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        parts = np.atleast_2d(np.asarray(self.parts, dtype=float))
        object.__setattr__(self, "parts", parts)
        n, b = parts.shape
        if n != self.locations.n:
            raise ValueError("row counts of locations and compositions differ")
        if b < 2:
            raise ValueError("compositions need at least 2 parts")
        bad = np.argwhere(~(parts > 0.0))
        if bad.size:
            i, j = bad[0]
            raise ValueError(f"composition column {j} has a nonpositive value in row {i}")
        if np.max(np.abs(parts.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("composition rows must sum to 1; apply closure first")
        if not self.part_names:
            object.__setattr__(self, "part_names", tuple(f"p{j + 1}" for j in range(b)))
        elif len(self.part_names) != b:
            raise ValueError("part_names length does not match the number of parts")
        if self.denominator is None:
            object.__setattr__(self, "denominator", default_denominator(parts))
        elif not 0 <= self.denominator < b:
            raise ValueError(f"denominator index {self.denominator} out of range")

    @classmethod
    def from_raw(cls, coords, raw_parts, **kwargs) -> "GeoDataset":
        """Build a dataset from raw positive measurements (applies closure)."""
        return cls(SpatialLocations(coords), closure_array(raw_parts), **kwargs)

    @property
    def n(self) -> int:
        return self.locations.n

    @property
    def n_parts(self) -> int:
        return self.parts.shape[1]

    @property
    def n_components(self) -> int:
        return self.n_parts - 1

    @property
    def component_parts(self) -> tuple[int, ...]:
        """Part column index feeding each transformed component."""
        return tuple(j for j in range(self.n_parts) if j != self.denominator)

    def alr_matrix(self) -> np.ndarray:
        """n x (B-1) matrix of alr-transformed compositions."""
        return alr_array(self.parts, self.denominator)

    def stacked_alr(self) -> np.ndarray:
        """Component-major stacked data vector of length n(B-1)."""
        return self.alr_matrix().T.reshape(-1)

    def design(self) -> DesignMatrix:
        if self.design_blocks is None:
            ones = np.ones((self.n, 1))
            return DesignMatrix(tuple(ones for _ in range(self.n_components)))
        return DesignMatrix(tuple(self.design_blocks), self.design_names)
