"""Sparse Hamiltonians and observables on a :class:`ConstrainedBasis`.

All off-diagonal operators here are built from dressed single-site flips: site
``r`` may flip only when every neighbour of ``r`` is in the ground state.
Flips preserve legality, so every operator maps the constrained space into
itself. Operators are ``scipy.sparse.csr_matrix`` with column = input
configuration and row = output configuration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .basis import ConstrainedBasis
from .lattice import LatticeError, SiteGraph, neighbor_rotations


class OperatorError(ValueError):
    pass


@dataclass
class ModelSpec:
    """Per-site Rabi frequencies plus an optional ``(a, b)`` deformation.

    ``freq=None`` means uniform unit frequency. The meaning of ``deform``
    follows the lattice kind (square or honeycomb projector sums).
    """

    freq: Optional[np.ndarray] = None
    deform: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.freq is not None:
            self.freq = np.asarray(self.freq, dtype=float)
            if not np.all(np.isfinite(self.freq)):
                raise OperatorError("frequencies must be finite")
        if self.deform is not None:
            a, b = self.deform
            if not (np.isfinite(a) and np.isfinite(b)):
                raise OperatorError("deformation coefficients must be finite")
            self.deform = (float(a), float(b))

    def frequencies(self, n_sites: int) -> np.ndarray:
        if self.freq is None:
            return np.ones(n_sites)
        if len(self.freq) != n_sites:
            raise OperatorError(f"frequency array has length {len(self.freq)}, lattice has {n_sites} sites")
        return self.freq


def class_frequencies(graph: SiteGraph, corner=1.0, edge=1.0, bulk=1.0) -> np.ndarray:
    """Frequency array assigning one value per coordination class."""
    table = {"corner": corner, "edge": edge, "bulk": bulk}
    return np.array([table[c] for c in graph.site_class], dtype=float)


def sublattice_frequencies(graph: SiteGraph, omega_a: float, omega_b: float = 1.0) -> np.ndarray:
    return np.where(graph.sublattice == 0, omega_a, omega_b).astype(float)


def _ground(basis: ConstrainedBasis, s: int) -> np.ndarray:
    return 1.0 - basis.occupation(s)


def _flippable(basis: ConstrainedBasis, r: int) -> np.ndarray:
    mask = np.uint64(basis.graph.neighbor_mask(r))
    return np.flatnonzero((basis.configs & mask) == 0)


def _assemble(basis, rows, cols, vals, dtype=float) -> sp.csr_matrix:
    n = basis.dim
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0, dtype=dtype)
    keep = vals != 0
    op = sp.csr_matrix((vals[keep].astype(dtype), (rows[keep], cols[keep])), shape=(n, n))
    op.sum_duplicates()
    op.eliminate_zeros()
    return op


def _dressed_flips(basis, weights, direction=None, dtype=float, phase=None):
    """Sum over sites of ``weights[r](c) * |c ^ r><c|`` restricted to flippable ``c``.

    ``weights[r]`` is a scalar or an array over the basis. ``direction``
    selects raising (+1), lowering (-1) or both (None). ``phase(up)`` gives
    an extra factor depending on whether the flip raises the site.
    """
    rows, cols, vals = [], [], []
    for r, w in enumerate(weights):
        src = _flippable(basis, r)
        if src.size == 0:
            continue
        up = basis.occupation(r)[src] == 0
        if direction == 1:
            src, up = src[up], up[up]
        elif direction == -1:
            src, up = src[~up], up[~up]
        dst = basis.lookup(basis.configs[src] ^ np.uint64(1 << r))
        val = np.broadcast_to(np.asarray(w, dtype=dtype), (basis.dim,))[src].astype(dtype)
        if phase is not None:
            val = val * phase(up)
        rows.append(dst)
        cols.append(src)
        vals.append(val)
    return _assemble(basis, rows, cols, vals, dtype=dtype)


def build_pxp(basis: ConstrainedBasis, freq=None) -> sp.csr_matrix:
    """``sum_r freq[r] * sigma~x_r``."""
    freq = ModelSpec(freq=freq).frequencies(basis.n_sites)
    return _dressed_flips(basis, freq)


def square_dressing(basis: ConstrainedBasis, r: int, a: float, b: float) -> np.ndarray:
    """``v_r`` of the square-lattice deformation as a diagonal over the basis."""
    groups = neighbor_rotations(basis.graph, r)
    v = np.zeros(basis.dim)
    for (s,) in filter(None, groups.linear):
        v += a * _ground(basis, s)
    for (s,) in filter(None, groups.diagonal):
        v += 2 * a * _ground(basis, s)
    for trio in filter(None, groups.triple):
        v += b * np.prod([_ground(basis, s) for s in trio], axis=0)
    return v


def honeycomb_dressing(basis: ConstrainedBasis, r: int, a: float, b: float) -> np.ndarray:
    groups = neighbor_rotations(basis.graph, r)
    v = np.zeros(basis.dim)
    for s in groups.nnn:
        v += a * _ground(basis, s)
    for s, t in groups.pairs:
        v += b * _ground(basis, s) * _ground(basis, t)
    return v


def _dressing(basis, r, deform):
    if deform is None:
        return 0.0
    kind = basis.graph.spec.kind
    if kind == "square":
        return square_dressing(basis, r, *deform)
    if kind == "honeycomb":
        return honeycomb_dressing(basis, r, *deform)
    raise OperatorError(f"no deformation defined for lattice kind {kind!r}")


def site_weights(basis: ConstrainedBasis, model: ModelSpec) -> list:
    """``freq[r] * (1 + v_r)`` for each site, as scalars or basis arrays."""
    freq = model.frequencies(basis.n_sites)
    return [freq[r] * (1.0 + _dressing(basis, r, model.deform)) for r in range(basis.n_sites)]


def _check_kind(basis, kind):
    if basis.graph.spec.kind != kind:
        raise OperatorError(f"{kind} deformation requested on a {basis.graph.spec.kind} lattice")


def build_deformation_square(basis: ConstrainedBasis, a: float, b: float) -> sp.csr_matrix:
    """``V = sum_r sigma~x_r (a P^l_r + 2a P^d_r + b P^3_r)``.

    Projector terms touching a site missing under open boundaries are dropped.
    """
    _check_kind(basis, "square")
    return _dressed_flips(basis, [square_dressing(basis, r, a, b) for r in range(basis.n_sites)])


def build_deformation_honeycomb(basis: ConstrainedBasis, a: float, b: float) -> sp.csr_matrix:
    """``V = sum_r sigma~x_r (a P^l_r + b P^2_r)`` on the honeycomb lattice."""
    _check_kind(basis, "honeycomb")
    return _dressed_flips(basis, [honeycomb_dressing(basis, r, a, b) for r in range(basis.n_sites)])


def build_hamiltonian(basis: ConstrainedBasis, model: ModelSpec | None = None) -> sp.csr_matrix:
    """``sum_r freq[r] sigma~x_r (1 + v_r)`` for the given model."""
    return _dressed_flips(basis, site_weights(basis, model or ModelSpec()))


def _require_bipartite(graph: SiteGraph):
    for r, s in graph.edges:
        if graph.sublattice[r] == graph.sublattice[s]:
            raise OperatorError("H+/H- splitting needs a bipartite graph")


def split_pm(basis: ConstrainedBasis, model: ModelSpec | None = None):
    """Return ``(H+, H-)`` with ``H+`` moving away from ``|M_A>`` in Hamming distance.

    ``H+`` lowers A sites and raises B sites; ``H- = (H+)^dagger``.
    """
    graph = basis.graph
    _require_bipartite(graph)
    weights = site_weights(basis, model or ModelSpec())
    on_a = [w if graph.sublattice[r] == 0 else 0.0 for r, w in enumerate(weights)]
    on_b = [w if graph.sublattice[r] == 1 else 0.0 for r, w in enumerate(weights)]
    hp = (_dressed_flips(basis, on_a, direction=-1) + _dressed_flips(basis, on_b, direction=1)).tocsr()
    hm = hp.T.conj().tocsr()
    return hp, hm


def domain_wall_values(graph: SiteGraph, configs) -> np.ndarray:
    """Per-configuration domain-wall density, evaluated site by site."""
    out = np.zeros(len(configs))
    for k, c in enumerate(configs):
        c = int(c)
        total = 0
        for r in range(graph.n_sites):
            if not (c >> r) & 1:
                total += sum(1 for s in graph.adjacency[r] if not (c >> s) & 1)
        out[k] = total / graph.n_sites
    return out


def build_domain_wall(graph: SiteGraph, basis: ConstrainedBasis) -> sp.csr_matrix:
    """Diagonal ``G = (1/N) sum_r P_r sum_<r'r> P_r'``."""
    diag = np.zeros(basis.dim)
    for r in range(graph.n_sites):
        pr = _ground(basis, r)
        diag += pr * sum((_ground(basis, s) for s in graph.adjacency[r]), np.zeros(basis.dim))
    return sp.diags(diag / graph.n_sites, format="csr")


def build_local_observable(graph: SiteGraph, basis: ConstrainedBasis, r: int, kind: str) -> sp.csr_matrix:
    """Site density ``n_r`` or the dressed ``sigma~y_r``."""
    try:
        graph.check_site(r)
    except LatticeError as exc:
        raise OperatorError(str(exc)) from None
    if kind == "density":
        return sp.diags(basis.occupation(r).astype(float), format="csr")
    if kind == "sigma_y":
        weights = [0.0] * graph.n_sites
        weights[r] = 1.0
        # <up|sigma_y|down> = -i, <down|sigma_y|up> = +i
        return _dressed_flips(basis, weights, dtype=complex, phase=lambda up: np.where(up, -1j, 1j))
    raise OperatorError(f"unknown local observable kind {kind!r}")


def build_casimir(hp, hm, n_sites: int, period: float):
    """Rescaled ``H^z = [H+, H-]`` and the normalised Casimir operator.

    Generators are multiplied by ``period / (2 pi)`` so that a revival at
    ``period`` maps onto the 2 pi period of an exact spin-``N/2`` rotation.
    Returns ``(Hz, C)``; ``C`` is the identity on an exact irrep.
    """
    if period <= 0:
        raise OperatorError("revival period must be positive")
    hp, hm = sp.csr_matrix(hp), sp.csr_matrix(hm)
    rng = np.random.default_rng(0)
    x = rng.normal(size=hp.shape[0]) + 1j * rng.normal(size=hp.shape[0])
    y = rng.normal(size=hp.shape[0]) + 1j * rng.normal(size=hp.shape[0])
    lhs, rhs = np.vdot(y, hp @ x), np.vdot(hm @ y, x)
    if abs(lhs - rhs) > 1e-10 * max(1.0, abs(lhs)):
        raise OperatorError("H+ and H- are not an adjoint pair")
    scale = period / (2 * np.pi)
    hp, hm = hp * scale, hm * scale
    hz = (hp @ hm - hm @ hp).tocsr()
    spin = n_sites / 2
    casimir = (2 * (hp @ hm + hm @ hp) + 4 * (hz @ hz)) / (spin * (spin + 1))
    return hz, casimir.tocsr()


def spin_generators(n_sites: int):
    """Exact spin-``N/2`` ladder pair ``(S^-/2, S^+/2)`` in the ``|S, m>`` basis, m descending.

    The order mirrors ``(H+, H-)``: the first element moves away from the
    highest-weight state, and ``H+ + H-`` equals ``S^x``.
    """
    s = n_sites / 2
    m = s - np.arange(n_sites + 1)
    # S^- |s, m> = sqrt(s(s+1) - m(m-1)) |s, m-1>
    low = np.sqrt(s * (s + 1) - m[:-1] * (m[:-1] - 1))
    s_minus = sp.diags(low, -1, shape=(n_sites + 1, n_sites + 1), format="csr")
    return (s_minus / 2).tocsr(), (s_minus.T / 2).tocsr()


def is_hermitian(op, tol=0.0) -> bool:
    diff = op - op.T.conj()
    return diff.nnz == 0 or np.max(np.abs(diff.data)) <= tol
