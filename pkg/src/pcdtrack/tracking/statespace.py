"""2D grid state space and the HMM parameter set defined on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import GridSpec


class DecodeError(RuntimeError):
    pass


class StateSpace:
    """8-connected 2D grid. Cells are addressed by flat index ``i * ny + j``."""

    def __init__(self, grid: GridSpec):
        if grid.ndim != 2:
            raise ValueError("state space needs a 2D grid")
        self.grid = grid
        self.nx, self.ny = grid.dims
        ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        self.ij = np.column_stack([ii.ravel(), jj.ravel()])
        self.centers = grid.cell_center(self.ij)

    @classmethod
    def from_bounds(cls, lo, hi, cell_size: float = 0.5) -> "StateSpace":
        return cls(GridSpec.from_bounds(lo, hi, cell_size))

    @property
    def n_states(self) -> int:
        return self.nx * self.ny

    def to_ij(self, cells) -> np.ndarray:
        return self.ij[np.asarray(cells, dtype=np.int64)]

    def contains(self, xy) -> bool:
        _, inside = self.grid.cell_index(np.asarray(xy, dtype=float).reshape(1, 2))
        return bool(inside[0])

    def nearest_cell(self, xy) -> int:
        """Cell containing ``xy``; raises DecodeError outside the grid."""
        idx, inside = self.grid.cell_index(np.asarray(xy, dtype=float).reshape(1, 2))
        if not inside[0]:
            raise DecodeError(f"observation {tuple(np.ravel(xy))} lies outside the state grid")
        return int(idx[0, 0] * self.ny + idx[0, 1])

    def neighbors(self, cell: int, hops: int) -> np.ndarray:
        """Cells within Chebyshev distance ``hops`` (including ``cell``)."""
        i, j = divmod(int(cell), self.ny)
        i0, i1 = max(0, i - hops), min(self.nx, i + hops + 1)
        j0, j1 = max(0, j - hops), min(self.ny, j + hops + 1)
        ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
        return (ii * self.ny + jj).ravel()

    def hop_distance(self, a, b) -> np.ndarray:
        """Chebyshev distance between every cell of ``a`` and every cell of ``b``."""
        pa = self.to_ij(np.atleast_1d(a))
        pb = self.to_ij(np.atleast_1d(b))
        return np.abs(pa[:, None, :] - pb[None, :, :]).max(axis=-1)


def active_states(prev_active, state_space: StateSpace, overlap: bool) -> np.ndarray:
    """``prev_active`` grown by its 1-hop (or 2-hop when overlapping) neighbourhood."""
    hops = 2 if overlap else 1
    cells = set()
    for c in np.atleast_1d(prev_active):
        cells.update(state_space.neighbors(int(c), hops).tolist())
    return np.array(sorted(cells), dtype=np.int64)


@dataclass(frozen=True)
class HmmModel:
    sigma: float = 0.5
    p_self: float = 0.5
    p_hop1: float = 0.4
    p_hop2: float = 0.1
    persistence: float = 3.0
    shared_sigma_scale: float = 2.0  # emission widening for merged-blob observations

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("emission sigma must be positive")
        if min(self.p_self, self.p_hop1, self.p_hop2) < 0:
            raise ValueError("transition shares must be non-negative")
        if self.persistence <= 0:
            raise ValueError("persistence factor must be positive")
        if self.shared_sigma_scale < 1:
            raise ValueError("shared_sigma_scale must be >= 1")

    def log_emission(self, obs, cells, state_space: StateSpace, scale: float = 1.0) -> np.ndarray:
        """Isotropic Gaussian log density of ``obs`` around each cell center,
        with standard deviation ``scale * sigma``.

        A missing observation (``None``) is uninformative: all zeros.
        """
        cells = np.asarray(cells, dtype=np.int64)
        if obs is None:
            return np.zeros(len(cells))
        d = state_space.centers[cells] - np.asarray(obs, dtype=float)
        s2 = (scale * self.sigma) ** 2
        return -np.sum(d * d, axis=1) / (2 * s2) - np.log(2 * np.pi * s2)

    def _hop_weights(self, from_cells, state_space: StateSpace) -> np.ndarray:
        """(n, 3) per-cell weight for one target at hop 0, 1, 2.

        Shares are split over the grid neighbourhood of the source cell, so a
        row summed over the full 2-hop neighbourhood is 1 and the values do
        not depend on which states happen to be active.
        """
        ij = state_space.to_ij(from_cells)
        counts = np.zeros((len(ij), 3))
        counts[:, 0] = 1
        for hops in (1, 2):
            lo = np.maximum(ij - hops, 0)
            hi = np.minimum(ij + hops, [state_space.nx - 1, state_space.ny - 1])
            counts[:, hops] = np.prod(hi - lo + 1, axis=1)
        counts[:, 2] -= counts[:, 1]
        counts[:, 1] -= 1
        share = np.array([self.p_self, self.p_hop1, self.p_hop2])
        present = counts > 0
        norm = (share * present).sum(axis=1, keepdims=True)
        return np.where(present, share / np.maximum(counts, 1), 0.0) / norm

    def transition_matrix(self, from_cells, to_cells, state_space: StateSpace) -> np.ndarray:
        """First-order transition probabilities, shape (n_from, n_to).

        Targets beyond 2 hops get probability 0. Rows sum to 1 when
        ``to_cells`` covers the 2-hop neighbourhood of the source.
        """
        from_cells = np.atleast_1d(np.asarray(from_cells, dtype=np.int64))
        hop = state_space.hop_distance(from_cells, to_cells)
        w = self._hop_weights(from_cells, state_space)
        out = np.zeros(hop.shape)
        for h in range(3):
            out += np.where(hop == h, w[:, h : h + 1], 0.0)
        return out

    def transition_tensor(self, prev2, prev1, to_cells, state_space: StateSpace) -> np.ndarray:
        """Second-order transitions P(to | prev2, prev1), shape (n2, n1, m).

        Moves that repeat the previous non-zero displacement direction have
        their first-order weight multiplied by ``persistence``; each
        (prev2, prev1) row is renormalized over the 2-hop grid neighbourhood.
        """
        prev2 = np.atleast_1d(np.asarray(prev2, dtype=np.int64))
        prev1 = np.atleast_1d(np.asarray(prev1, dtype=np.int64))
        base = self.transition_matrix(prev1, to_cells, state_space)
        p2 = state_space.to_ij(prev2)
        p1 = state_space.to_ij(prev1)
        pt = state_space.to_ij(to_cells)
        d_prev = np.sign(p1[None, :, :] - p2[:, None, :])  # (n2, n1, 2)
        moving = np.any(d_prev != 0, axis=-1)  # (n2, n1)
        d_next = np.sign(pt[None, :, :] - p1[:, None, :])  # (n1, m, 2)
        same = np.all(d_prev[:, :, None, :] == d_next[None, :, :, :], axis=-1)
        factor = np.where(same & moving[:, :, None], self.persistence, 1.0)

        # normaliser over the full neighbourhood of prev1
        off = np.array([(a, b) for a in range(-2, 3) for b in range(-2, 3)])
        hop = np.abs(off).max(axis=1)
        cand = p1[:, None, :] + off[None, :, :]  # (n1, 25, 2)
        valid = np.all((cand >= 0) & (cand < [state_space.nx, state_space.ny]), axis=-1)
        w = self._hop_weights(prev1, state_space)
        wt = np.where(valid, w[:, hop], 0.0)  # (n1, 25)
        boost = np.all(d_prev[:, :, None, :] == np.sign(off)[None, None, :, :], axis=-1) & moving[:, :, None]
        z = np.sum(wt[None, :, :] * np.where(boost, self.persistence, 1.0), axis=-1)  # (n2, n1)
        return base[None, :, :] * factor / z[:, :, None]
