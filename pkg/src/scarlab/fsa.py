"""Forward-scattering (FSA) subspace, leakage diagnostics and su(2) comparisons.

The FSA vectors are indexed by their Hamming distance ``n`` from ``|M_A>``:
the low-``n`` part is generated from ``|M_A>`` with ``H+``, the high-``n``
part from ``|M_B>`` with ``H-``, and a single stitched vector joins them.
Vectors at different Hamming distance have disjoint support, so the basis is
exactly orthogonal by construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from .basis import ConstrainedBasis, hamming_from, maximally_excited
from .evolve import TimeSeries, multi_observable_series
from .lattice import SiteGraph


class FsaError(RuntimeError):
    pass


@dataclass
class FsaBasis:
    """Orthonormal FSA vectors (rows of ``vectors``), ordered by Hamming distance from ``|M_A>``.

    ``prenorms_a[n] = ||(H+)^n |M_A>||`` and ``prenorms_b[n] = ||(H-)^n |M_B>||``.
    ``labels[n]`` is ``"A"``, ``"B"`` or ``"middle"``.
    """

    vectors: np.ndarray
    prenorms_a: np.ndarray
    prenorms_b: np.ndarray
    labels: List[str]
    middle: int

    def __len__(self):
        return self.vectors.shape[0]

    def gram(self) -> np.ndarray:
        return self.vectors.conj() @ self.vectors.T


def _chain(gen, vac, length):
    """Normalised vectors ``gen^n vac / ||gen^n vac||`` for ``n < length`` and raw norms."""
    vecs, norms = [], []
    raw = np.asarray(vac, dtype=complex)
    for n in range(length):
        norm = np.linalg.norm(raw)
        if norm < 1e-300:
            raise FsaError(f"FSA chain terminated: vanishing norm at n={n}")
        norms.append(norm)
        vecs.append(raw / norm)
        if n + 1 < length:
            raw = gen @ raw
    return vecs, np.array(norms)


def build_fsa(hp, hm, m_a, m_b, n_sites: int, a_length: int) -> FsaBasis:
    """Two-vacuum FSA basis with ``a_length`` vectors from ``|M_A>``.

    Vectors ``0 .. a_length-1`` come from ``|M_A>``, vectors ``a_length+1 .. N``
    from ``|M_B>``; vector ``a_length`` is ``H+|a_length-1> + H-|a_length+1>``
    normalised.
    """
    b_length = n_sites - a_length
    if a_length < 1 or b_length < 1:
        raise FsaError("both chains need at least one vector")
    a_vecs, a_norms = _chain(hp, m_a, a_length)
    b_vecs, b_norms = _chain(hm, m_b, b_length)
    mid = hp @ a_vecs[-1] + hm @ b_vecs[-1]
    mid_norm = np.linalg.norm(mid)
    if mid_norm < 1e-300:
        raise FsaError("stitched middle vector vanishes")
    vectors = np.array(a_vecs + [mid / mid_norm] + b_vecs[::-1])
    labels = ["A"] * a_length + ["middle"] + ["B"] * b_length
    return FsaBasis(vectors, a_norms, b_norms, labels, middle=a_length)


def _vacua(basis: ConstrainedBasis):
    g = basis.graph
    return basis.product_state(maximally_excited(g, "A")), basis.product_state(maximally_excited(g, "B"))


def build_fsa_symmetric(hp, hm, basis: ConstrainedBasis) -> FsaBasis:
    """Symmetric construction for lattices with equal sublattice sizes (square, honeycomb)."""
    g = basis.graph
    n_a = int(np.sum(g.sublattice == 0))
    if 2 * n_a != g.n_sites:
        raise FsaError("symmetric FSA needs equal sublattice sizes")
    m_a, m_b = _vacua(basis)
    return build_fsa(hp, hm, m_a, m_b, g.n_sites, g.n_sites // 2)


def build_fsa_decorated(hp, hm, basis: ConstrainedBasis) -> FsaBasis:
    """Decorated-lattice construction: ``3N/5`` vectors from ``|M_A>`` and ``2N/5`` from ``|M_B>``."""
    g = basis.graph
    if g.n_sites % 5:
        raise FsaError("decorated FSA needs N divisible by 5")
    m_a, m_b = _vacua(basis)
    return build_fsa(hp, hm, m_a, m_b, g.n_sites, 3 * g.n_sites // 5)


def projected_hamiltonian(H, fsa: FsaBasis) -> np.ndarray:
    return fsa.vectors.conj() @ (H @ fsa.vectors.T)


def subspace_variance(H, fsa: FsaBasis):
    """Return ``(leakage, literal)`` for the FSA subspace.

    ``leakage = sum_n ||(1 - Q) H |n>||^2`` vanishes exactly when the
    subspace is invariant. ``literal = Tr(Q H^2) - Tr(Q H)^2`` is reported
    alongside for comparison.
    """
    HV = (H @ fsa.vectors.T).T
    h2 = float(np.sum(np.abs(HV) ** 2))
    proj = fsa.vectors.conj() @ HV.T
    leakage = h2 - float(np.sum(np.abs(proj) ** 2))
    literal = h2 - float(np.trace(proj).real) ** 2
    return max(leakage, 0.0), literal


@dataclass
class SubspaceDiagnostics:
    variance: float
    projected_H: np.ndarray
    mode_energies: np.ndarray
    eigenmode_overlaps: np.ndarray | None = None
    literal: float | None = None


def projected_spectrum(H, fsa: FsaBasis, spectrum=None) -> SubspaceDiagnostics:
    """Eigenmodes of ``Q H Q`` and, given a full spectrum, their best overlap with exact eigenstates."""
    hproj = projected_hamiltonian(H, fsa)
    energies, modes = np.linalg.eigh(hproj)
    overlaps = None
    if spectrum is not None:
        embedded = modes.T @ fsa.vectors  # row i = |e_i> on the full basis
        ov = np.abs(embedded.conj() @ spectrum.eigenvectors) ** 2
        overlaps = ov.max(axis=1)
    leakage, literal = subspace_variance(H, fsa)
    return SubspaceDiagnostics(leakage, hproj, energies, overlaps, literal)


def frequency_criteria(graph: SiteGraph):
    """``(omega_s, omega_general)`` for a bipartite lattice with uniform sublattice connectivity.

    ``omega_s`` equates ``||H+|M_A>||`` and ``||H-|M_B>||`` with unit
    frequency on B; ``omega_general = sqrt(c_A / c_B)``.
    """
    deg = graph.degree
    deg_a, deg_b = deg[graph.sublattice == 0], deg[graph.sublattice == 1]
    if len(set(deg_a)) != 1 or len(set(deg_b)) != 1:
        raise FsaError("connectivity is not uniform within each sublattice")
    n_a, n_b = len(deg_a), len(deg_b)
    # ||H+|M_A>|| = omega sqrt(n_A), ||H-|M_B>|| = sqrt(n_B)
    omega_s = np.sqrt(n_b / n_a)
    omega_general = np.sqrt(deg_a[0] / deg_b[0])
    return float(omega_s), float(omega_general)


def _parabolic_vertex(x, y):
    (x0, x1, x2), (y0, y1, y2) = x, y
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a <= 0:
        return x1
    return -b / (2 * a)


@dataclass
class ScanResult:
    axes: List[np.ndarray]
    names: List[str]
    leakage: np.ndarray
    literal: np.ndarray
    argmin: Dict[str, float] = field(default_factory=dict)
    grid_argmin: Dict[str, float] = field(default_factory=dict)


def variance_scan(evaluate: Callable[..., tuple], axes: Dict[str, Sequence[float]]) -> ScanResult:
    """Evaluate ``evaluate(**point) -> (leakage, literal)`` on a rectangular grid.

    The grid minimum is refined per axis with a three-point parabola through
    its neighbours (skipped on the grid edge).
    """
    names = list(axes)
    grids = [np.asarray(axes[k], dtype=float) for k in names]
    shape = tuple(len(g) for g in grids)
    leak = np.zeros(shape)
    lit = np.zeros(shape)
    for idx in itertools.product(*(range(n) for n in shape)):
        point = {k: grids[d][i] for d, (k, i) in enumerate(zip(names, idx))}
        leak[idx], lit[idx] = evaluate(**point)
    best = np.unravel_index(np.argmin(leak), shape)
    grid_min = {k: float(grids[d][best[d]]) for d, k in enumerate(names)}
    refined = {}
    for d, k in enumerate(names):
        i = best[d]
        if 0 < i < shape[d] - 1:
            sl = list(best)
            ys = []
            for j in (i - 1, i, i + 1):
                sl[d] = j
                ys.append(leak[tuple(sl)])
            refined[k] = float(_parabolic_vertex(grids[d][i - 1 : i + 2], ys))
        else:
            refined[k] = grid_min[k]
    return ScanResult(grids, names, leak, lit, refined, grid_min)


def su2_reference_fidelity(n_sites: int, times) -> TimeSeries:
    """Return-probability of the highest-weight state of spin ``N/2`` under ``exp(-i S^x t)``."""
    if n_sites % 2:
        raise FsaError("spin N/2 reference needs even N")
    times = np.asarray(times, dtype=float)
    return TimeSeries(times, np.cos(times / 2) ** (2 * n_sites), label="su2")


def casimir_dynamics(H, C, psi0, t_max: float, dt: float = 0.01, method="auto") -> TimeSeries:
    series = multi_observable_series(H, psi0, {"casimir": C}, t_max, dt, method=method)
    return series["casimir"]


def hamming_levels(basis: ConstrainedBasis) -> np.ndarray:
    return hamming_from(basis, maximally_excited(basis.graph, "A"))
