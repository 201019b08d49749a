"""Blockade-constrained configuration space.

A configuration is a 64-bit occupation mask (bit ``r`` set means site ``r``
is excited). Legal configurations are the independent sets of the site graph.
"""

from __future__ import annotations

import csv
from functools import cached_property

import numpy as np

from .lattice import SiteGraph, _sublattice_code

DEFAULT_DIM_CAP = 4_000_000


class DimensionCapExceeded(RuntimeError):
    """Raised when the constrained space would exceed the configured cap."""


def is_legal(graph: SiteGraph, config: int) -> bool:
    config = int(config)
    for r, s in graph.edges:
        if (config >> r) & 1 and (config >> s) & 1:
            return False
    return True


class ConstrainedBasis:
    """Ascending list of legal configurations with fast reverse lookup."""

    def __init__(self, graph: SiteGraph, configs: np.ndarray):
        self.graph = graph
        self.configs = np.asarray(configs, dtype=np.uint64)
        self.configs.setflags(write=False)

    def __len__(self) -> int:
        return len(self.configs)

    @property
    def dim(self) -> int:
        return len(self.configs)

    @property
    def n_sites(self) -> int:
        return self.graph.n_sites

    @cached_property
    def index_of(self) -> dict:
        return {int(c): k for k, c in enumerate(self.configs)}

    def lookup(self, configs) -> np.ndarray:
        """Vectorised config -> ordinal; -1 where a configuration is not in the basis."""
        configs = np.asarray(configs, dtype=np.uint64)
        idx = np.searchsorted(self.configs, configs)
        idx = np.minimum(idx, self.dim - 1)
        found = self.configs[idx] == configs
        return np.where(found, idx, -1)

    def occupation(self, r: int) -> np.ndarray:
        """0/1 occupation of site ``r`` for every basis configuration."""
        return ((self.configs >> np.uint64(r)) & np.uint64(1)).astype(np.int8)

    def counts(self, mask: int) -> np.ndarray:
        """Number of excitations inside ``mask`` for every configuration."""
        return popcount(self.configs & np.uint64(mask))

    def product_state(self, config: int) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index_of[int(config)]] = 1.0
        return psi

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ordinal", "bitmask"])
            for k, c in enumerate(self.configs):
                writer.writerow([k, f"0x{int(c):x}"])


def popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(x).astype(np.int64)
    bytes_ = x.view(np.uint8).reshape(x.shape + (8,))
    return np.unpackbits(bytes_, axis=-1).sum(axis=-1).astype(np.int64)


def enumerate_basis(graph: SiteGraph, dim_cap: int = DEFAULT_DIM_CAP) -> ConstrainedBasis:
    """All legal configurations of ``graph`` in ascending bitmask order.

    Sites are added one at a time; at step ``r`` every partial configuration
    is kept with site ``r`` empty and, if none of its already-placed
    neighbours is excited, also with site ``r`` excited. Only legal prefixes
    are ever stored.
    """
    if graph.n_sites > 64:
        raise DimensionCapExceeded(f"{graph.n_sites} sites do not fit a 64-bit configuration")
    configs = np.zeros(1, dtype=np.uint64)
    for r in range(graph.n_sites):
        lower = 0
        for s in graph.adjacency[r]:
            if s < r:
                lower |= 1 << s
        free = configs[(configs & np.uint64(lower)) == 0]
        configs = np.concatenate([configs, free | np.uint64(1 << r)])
        if len(configs) > dim_cap:
            raise DimensionCapExceeded(
                f"constrained space exceeds cap {dim_cap} after placing {r + 1}/{graph.n_sites} sites"
            )
    configs.sort()
    return ConstrainedBasis(graph, configs)


def maximally_excited(graph: SiteGraph, sub) -> int:
    """Configuration with every site of sublattice ``sub`` excited."""
    code = _sublattice_code(sub)
    config = 0
    for r in np.flatnonzero(graph.sublattice == code):
        config |= 1 << int(r)
    return config


def hamming_from(basis: ConstrainedBasis, ref: int) -> np.ndarray:
    return popcount(basis.configs ^ np.uint64(int(ref)))
