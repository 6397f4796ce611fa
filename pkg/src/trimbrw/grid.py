"""Lattice geometry for the epsilon-grid truncated to a box.

Sites are stored by a flat index that follows lexicographic order of their
integer coordinates (first coordinate most significant), so "smallest index"
and "first in the total order" coincide. Everything that needs a tie-break
(argmax*, the particle engines) relies on that.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Direction:
    """Unit lattice step ``k_i``; indices run ``0..2d-1`` (``+e_j`` then ``-e_j``)."""

    index: int
    dim: int

    @property
    def vector(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.int64)
        j = self.index % self.dim
        v[j] = 1 if self.index < self.dim else -1
        return v

    @property
    def reverse(self) -> "Direction":
        return Direction(reverse_direction(self.index, self.dim), self.dim)


def reverse_direction(i: int, dim: int) -> int:
    """The involution ``i -> i*`` with ``k_{i*} = -k_i``."""
    return i + dim if i < dim else i - dim


@dataclass(frozen=True)
class GridSpec:
    epsilon: float
    dim: int = 1
    half_width: float = 8.0
    boundary_mode: str = "reflect"
    _m: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise GridError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.dim < 1:
            raise GridError(f"dim must be a positive integer, got {self.dim}")
        if self.half_width <= 0:
            raise GridError(f"half_width must be positive, got {self.half_width}")
        if self.boundary_mode != "reflect":
            raise GridError(f"unsupported boundary_mode {self.boundary_mode!r}")
        ratio = self.half_width / self.epsilon
        m = int(round(ratio))
        if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
            raise GridError(
                f"half_width/epsilon must be an integer, got {self.half_width}/{self.epsilon}"
            )
        object.__setattr__(self, "_m", m)

    @property
    def m(self) -> int:
        """Number of lattice steps from the origin to a box face."""
        return self._m

    @property
    def side(self) -> int:
        return 2 * self._m + 1

    @property
    def n_sites(self) -> int:
        return self.side**self.dim

    @property
    def n_dirs(self) -> int:
        return 2 * self.dim

    @property
    def cell_volume(self) -> float:
        return self.epsilon**self.dim

    def directions(self) -> list[Direction]:
        return [Direction(i, self.dim) for i in range(self.n_dirs)]

    # index <-> coords -----------------------------------------------------
    def index(self, coords) -> int:
        c = np.asarray(coords, dtype=np.int64).reshape(-1)
        if c.size != self.dim:
            raise GridError(f"expected {self.dim} coordinates, got {c.size}")
        if np.any(np.abs(c) > self._m):
            raise GridError(f"site {tuple(c)} outside the box")
        idx = 0
        for cj in c:
            idx = idx * self.side + int(cj) + self._m
        return idx

    def coords(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.n_sites:
            raise GridError(f"site index {index} out of range")
        out = []
        for _ in range(self.dim):
            index, rem = divmod(index, self.side)
            out.append(rem - self._m)
        return tuple(reversed(out))

    @cached_property
    def coord_array(self) -> np.ndarray:
        """Integer coordinates of every site, shape ``(n_sites, dim)``."""
        axis = np.arange(-self._m, self._m + 1, dtype=np.int64)
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([g.reshape(-1) for g in mesh], axis=1)

    @cached_property
    def points(self) -> np.ndarray:
        """Physical positions ``epsilon * coords``, shape ``(n_sites, dim)``."""
        return self.epsilon * self.coord_array.astype(float)

    @cached_property
    def axis(self) -> np.ndarray:
        """1-d positions along one axis."""
        return self.epsilon * np.arange(-self._m, self._m + 1, dtype=float)

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        """``nbr[x, i]`` = index of ``x + eps k_i`` or ``-1`` when the step leaves the box."""
        c = self.coord_array
        nbr = np.full((self.n_sites, self.n_dirs), -1, dtype=np.int64)
        strides = self.side ** np.arange(self.dim - 1, -1, -1)
        for i in range(self.n_dirs):
            j = i % self.dim
            step = 1 if i < self.dim else -1
            ok = np.abs(c[:, j] + step) <= self._m
            nbr[ok, i] = np.nonzero(ok)[0] + step * strides[j]
        nbr.setflags(write=False)
        return nbr

    @cached_property
    def interior(self) -> np.ndarray:
        """Boolean mask of sites whose every neighbour is inside the box."""
        return np.all(self.neighbor_table >= 0, axis=1)

    def neighbor(self, coords, i: int | Direction):
        """Coordinates of ``x + k_i``, or ``None`` if reflection suppresses the move."""
        i = i.index if isinstance(i, Direction) else int(i)
        if not 0 <= i < self.n_dirs:
            raise GridError(f"direction {i} out of range for dim={self.dim}")
        j = self.neighbor_table[self.index(coords), i]
        return None if j < 0 else self.coords(int(j))

    def contains(self, coords) -> bool:
        c = np.asarray(coords).reshape(-1)
        return c.size == self.dim and bool(np.all(np.abs(c) <= self._m))

    def site_of_point(self, x) -> int:
        """Index of the site nearest to physical point ``x`` (clipped to the box)."""
        c = np.clip(np.rint(np.asarray(x, float).reshape(-1) / self.epsilon), -self._m, self._m)
        return self.index(c.astype(np.int64))

    def compatible(self, other: "GridSpec") -> bool:
        return (
            self.dim == other.dim
            and self._m == other._m
            and abs(self.epsilon - other.epsilon) <= 1e-15 * self.epsilon
        )


def total_order_cmp(a, b) -> int:
    """Lexicographic comparison of two sites: -1, 0 or 1."""
    a = tuple(int(v) for v in np.asarray(a).reshape(-1))
    b = tuple(int(v) for v in np.asarray(b).reshape(-1))
    if len(a) != len(b):
        raise GridError(f"dimension mismatch: {len(a)} vs {len(b)}")
    return (a > b) - (a < b)
