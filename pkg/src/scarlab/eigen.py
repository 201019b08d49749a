"""Exact diagonalisation, bipartite entanglement and scar-band selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import ConstrainedBasis
from .lattice import SiteGraph

DENSE_CAP = 20000


class SpectrumError(RuntimeError):
    pass


@dataclass
class SpectrumResult:
    energies: np.ndarray
    eigenvectors: np.ndarray  # columns

    def __len__(self):
        return len(self.energies)


@dataclass(frozen=True)
class Bipartition:
    left_sites: FrozenSet[int]
    right_sites: FrozenSet[int]

    def __post_init__(self):
        if self.left_sites & self.right_sites:
            raise ValueError("bipartition halves overlap")

    @classmethod
    def from_left(cls, graph: SiteGraph, left) -> "Bipartition":
        left = frozenset(int(s) for s in left)
        return cls(left, frozenset(range(graph.n_sites)) - left)

    @property
    def left_mask(self) -> int:
        return sum(1 << s for s in self.left_sites)

    @property
    def right_mask(self) -> int:
        return sum(1 << s for s in self.right_sites)


def half_cut(graph: SiteGraph, axis: str = "x") -> Bipartition:
    """Split the lattice into two cylinders by cell row (``x``) or cell column (``y``)."""
    spec = graph.spec
    k, half = (0, spec.Lx // 2) if axis == "x" else (1, spec.Ly // 2)
    left = [r for r, pos in enumerate(graph.positions) if pos[k] < half]
    return Bipartition.from_left(graph, left)


def full_diagonalize(H, cap: int = DENSE_CAP) -> SpectrumResult:
    dim = H.shape[0]
    if dim > cap:
        raise SpectrumError(f"dimension {dim} exceeds dense cap {cap}")
    Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
    if np.isrealobj(Hd) or not np.any(Hd.imag):
        Hd = Hd.real
    energies, vecs = np.linalg.eigh(Hd)
    return SpectrumResult(energies, vecs)


def targeted_eigenpairs(H, energy: float, k: int = 6) -> SpectrumResult:
    """``k`` eigenpairs closest to ``energy`` by shift-invert Lanczos, for sizes beyond dense reach."""
    evals, evecs = spla.eigsh(sp.csc_matrix(H), k=k, sigma=energy, which="LM")
    order = np.argsort(evals)
    return SpectrumResult(evals[order], evecs[:, order])


def schmidt_matrix(psi, basis: ConstrainedBasis, cut: Bipartition) -> np.ndarray:
    """Amplitudes arranged by (left restriction, right restriction) of each configuration."""
    lmask, rmask = np.uint64(cut.left_mask), np.uint64(cut.right_mask)
    left = basis.configs & lmask
    right = basis.configs & rmask
    lvals, li = np.unique(left, return_inverse=True)
    rvals, ri = np.unique(right, return_inverse=True)
    M = np.zeros((len(lvals), len(rvals)), dtype=complex)
    M[li, ri] = psi
    return M


def entropy_from_matrix(M) -> float:
    s = np.linalg.svd(M, compute_uv=False)
    p = s**2
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))


def entanglement_entropy(psi, basis: ConstrainedBasis, cut: Bipartition) -> float:
    """Von Neumann entropy (nats) of the left half."""
    psi = np.asarray(psi)
    if abs(np.linalg.norm(psi) - 1) > 1e-8:
        raise ValueError("state is not normalised")
    return entropy_from_matrix(schmidt_matrix(psi, basis, cut))


def overlap_profile(spectrum: SpectrumResult, target) -> np.ndarray:
    target = np.asarray(target)
    if target.shape[0] != spectrum.eigenvectors.shape[0]:
        raise ValueError("target state and spectrum live on different bases")
    return np.abs(spectrum.eigenvectors.conj().T @ target) ** 2


def scar_band(spectrum: SpectrumResult, overlaps, n_windows: int = 20, floor: float = 1e-8, window: float | None = None, origin: float | None = None) -> np.ndarray:
    """Index of the largest-overlap eigenstate in each non-overlapping energy window.

    By default the spectrum is cut into ``n_windows`` equal windows. Given
    ``window`` (an energy width), windows of that width are centred on
    ``origin + k * window`` instead. Windows whose best overlap is below
    ``floor`` contribute nothing.
    """
    E = spectrum.energies
    if len(E) == 0:
        raise SpectrumError("empty spectrum")
    overlaps = np.asarray(overlaps)
    if window is None:
        edges = np.linspace(E.min(), E.max(), n_windows + 1)
        which = np.clip(np.searchsorted(edges, E, side="right") - 1, 0, n_windows - 1)
    else:
        if window <= 0:
            raise ValueError("window width must be positive")
        centre = E.min() if origin is None else origin
        which = np.floor((E - centre) / window + 0.5).astype(int)
    picks = []
    for w in np.unique(which):
        idx = np.flatnonzero(which == w)
        best = idx[np.argmax(overlaps[idx])]
        if overlaps[best] > floor:
            picks.append(best)
    return np.array(picks, dtype=int)
