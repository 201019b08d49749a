"""Site graphs for the square, honeycomb and decorated-honeycomb lattices.

Sites are ordered row-major over unit cells and then by basis index, so the
same :class:`LatticeSpec` always yields the same numbering.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

KINDS = ("square", "honeycomb", "decorated-honeycomb")
BOUNDARIES = ("periodic", "open")

SITES_PER_CELL = {"square": 1, "honeycomb": 2, "decorated-honeycomb": 5}
PERIODIC_MIN = {"square": 3, "honeycomb": 2, "decorated-honeycomb": 2}

# site_class labels by coordination number (open square lattice)
SITE_CLASSES = {2: "corner", 3: "edge", 4: "bulk"}


class LatticeError(ValueError):
    """Raised for invalid lattice specifications or site indices."""


@dataclass(frozen=True)
class LatticeSpec:
    kind: str = "square"
    Lx: int = 4
    Ly: int = 4
    boundary: str = "periodic"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LatticeError(f"unknown lattice kind {self.kind!r}; expected one of {KINDS}")
        if self.boundary not in BOUNDARIES:
            raise LatticeError(f"unknown boundary {self.boundary!r}; expected one of {BOUNDARIES}")
        if self.Lx < 1 or self.Ly < 1:
            raise LatticeError(f"extent must be >= 1, got {self.Lx}x{self.Ly}")
        if self.boundary == "periodic":
            lmin = PERIODIC_MIN[self.kind]
            if self.Lx < lmin or self.Ly < lmin:
                raise LatticeError(
                    f"periodic {self.kind} lattice needs Lx, Ly >= {lmin}, got {self.Lx}x{self.Ly}"
                )

    @property
    def n_sites(self) -> int:
        return SITES_PER_CELL[self.kind] * self.Lx * self.Ly

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "Lx": self.Lx, "Ly": self.Ly, "boundary": self.boundary}


@dataclass(frozen=True)
class SiteGraph:
    """Immutable site graph with bipartition labels.

    ``sublattice`` holds 0 for A and 1 for B. ``positions`` holds integer
    ``(i, j, b)`` triples: cell row, cell column, basis index.
    """

    spec: LatticeSpec
    adjacency: Tuple[Tuple[int, ...], ...]
    sublattice: np.ndarray
    positions: Tuple[Tuple[int, int, int], ...]
    _index: Dict[Tuple[int, int, int], int] = field(repr=False, compare=False, default=None)

    @property
    def n_sites(self) -> int:
        return len(self.adjacency)

    @property
    def degree(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=int)

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return [(r, s) for r, nbrs in enumerate(self.adjacency) for s in nbrs if r < s]

    @property
    def site_class(self) -> List[str]:
        """Coordination-based labels; only meaningful beyond 'bulk' for open square lattices."""
        if self.spec.kind != "square":
            return ["bulk"] * self.n_sites
        return [SITE_CLASSES[d] for d in self.degree]

    def sites_of(self, sub: str) -> np.ndarray:
        return np.flatnonzero(self.sublattice == _sublattice_code(sub))

    def neighbor_mask(self, r: int) -> int:
        mask = 0
        for s in self.adjacency[r]:
            mask |= 1 << s
        return mask

    def index(self, i: int, j: int, b: int = 0) -> int | None:
        """Site index at cell ``(i, j)`` and basis ``b``, wrapping under PBC; None if absent."""
        spec = self.spec
        if spec.periodic:
            i, j = i % spec.Lx, j % spec.Ly
        elif not (0 <= i < spec.Lx and 0 <= j < spec.Ly):
            return None
        return self._index.get((i, j, b))

    def check_site(self, r: int) -> None:
        if not (0 <= int(r) < self.n_sites):
            raise LatticeError(f"site index {r} out of range for {self.n_sites} sites")

    def to_json(self) -> str:
        return json.dumps(
            {
                "spec": self.spec.to_dict(),
                "sites": [
                    {
                        "index": r,
                        "position": list(self.positions[r]),
                        "sublattice": "AB"[self.sublattice[r]],
                        "class": self.site_class[r],
                    }
                    for r in range(self.n_sites)
                ],
                "edges": [list(e) for e in self.edges],
            },
            indent=2,
        )


def _sublattice_code(sub) -> int:
    if sub in ("A", "a", 0):
        return 0
    if sub in ("B", "b", 1):
        return 1
    raise LatticeError(f"invalid sublattice label {sub!r}")


def _cell_edges(kind: str, i: int, j: int):
    """Yield ``((i, j, b), (i', j', b'))`` bonds owned by cell ``(i, j)``."""
    if kind == "square":
        yield (i, j, 0), (i + 1, j, 0)
        yield (i, j, 0), (i, j + 1, 0)
    elif kind == "honeycomb":
        # brick-wall embedding: site 0 (A) bonds to site 1 (B) of its own cell
        # and of the cells at -x and -y
        yield (i, j, 0), (i, j, 1)
        yield (i, j, 0), (i - 1, j, 1)
        yield (i, j, 0), (i, j - 1, 1)
    else:
        # honeycomb vertices are basis 0 and 1 (sublattice B); the bond
        # midpoints 2, 3, 4 (sublattice A) sit on the three honeycomb bonds
        yield (i, j, 0), (i, j, 2)
        yield (i, j, 2), (i, j, 1)
        yield (i, j, 0), (i, j, 3)
        yield (i, j, 3), (i - 1, j, 1)
        yield (i, j, 0), (i, j, 4)
        yield (i, j, 4), (i, j - 1, 1)


def _sublattice_of(kind: str, i: int, j: int, b: int) -> int:
    if kind == "square":
        return (i + j) % 2
    if kind == "honeycomb":
        return b
    return 1 if b < 2 else 0


def build_lattice(spec: LatticeSpec) -> SiteGraph:
    """Build the site graph for ``spec``.

    Raises
    ------
    LatticeError
        For an unknown kind or an extent below the periodic minimum (checked
        when the spec is constructed).
    """
    if not isinstance(spec, LatticeSpec):
        spec = LatticeSpec(**spec)
    kind, Lx, Ly = spec.kind, spec.Lx, spec.Ly
    nb = SITES_PER_CELL[kind]
    positions = tuple((i, j, b) for i in range(Lx) for j in range(Ly) for b in range(nb))
    index = {p: k for k, p in enumerate(positions)}

    def resolve(p):
        i, j, b = p
        if spec.periodic:
            return index[(i % Lx, j % Ly, b)]
        return index.get((i, j, b))

    adj = [set() for _ in positions]
    for i in range(Lx):
        for j in range(Ly):
            for p, q in _cell_edges(kind, i, j):
                r, s = resolve(p), resolve(q)
                if r is None or s is None or r == s:
                    continue
                adj[r].add(s)
                adj[s].add(r)

    sub = np.array([_sublattice_of(kind, *p) for p in positions], dtype=np.int8)
    if kind == "square" and spec.periodic and (Lx % 2 or Ly % 2):
        raise LatticeError(f"periodic square lattice needs even extents to stay bipartite, got {Lx}x{Ly}")

    graph = SiteGraph(
        spec=spec,
        adjacency=tuple(tuple(sorted(a)) for a in adj),
        sublattice=sub,
        positions=positions,
        _index=index,
    )
    sub.setflags(write=False)
    return graph


def two_coloring(graph: SiteGraph) -> np.ndarray | None:
    """BFS 2-coloring anchored so that site 0 of each component takes its stored label."""
    color = -np.ones(graph.n_sites, dtype=int)
    for start in range(graph.n_sites):
        if color[start] >= 0:
            continue
        color[start] = graph.sublattice[start]
        queue = deque([start])
        while queue:
            r = queue.popleft()
            for s in graph.adjacency[r]:
                if color[s] < 0:
                    color[s] = 1 - color[r]
                    queue.append(s)
                elif color[s] == color[r]:
                    return None
    return color


# 90-degree rotation (di, dj) -> (-dj, di) applied to the reference offsets
_SQ_LINEAR = ((0, 2),)
_SQ_DIAGONAL = ((1, 1),)
_SQ_TRIPLE = ((-1, 1), (0, 2), (1, 1))


def _rotate(offset, k):
    di, dj = offset
    for _ in range(k):
        di, dj = -dj, di
    return di, dj


@dataclass(frozen=True)
class SquareRotations:
    """Next-nearest-neighbour targets of one square-lattice site.

    Each list has one entry per 90-degree rotation. An entry is a tuple of
    site indices, or None when a site is missing under open boundaries.
    """

    linear: Tuple[Tuple[int, ...] | None, ...]
    diagonal: Tuple[Tuple[int, ...] | None, ...]
    triple: Tuple[Tuple[int, ...] | None, ...]

    @property
    def incomplete(self) -> bool:
        return any(g is None for g in self.linear + self.diagonal + self.triple)


@dataclass(frozen=True)
class HoneycombNeighbors:
    """Next-nearest neighbours of a honeycomb site and the pairs sharing a common neighbour."""

    nnn: Tuple[int, ...]
    pairs: Tuple[Tuple[int, int], ...]
    incomplete: bool = False


def neighbor_rotations(graph: SiteGraph, r: int):
    """Groups of sites entering the deformation projectors around site ``r``.

    Square lattices return a :class:`SquareRotations`; the honeycomb returns
    a :class:`HoneycombNeighbors`. Under open boundaries, groups touching a
    missing site are reported as None (square) or dropped and flagged
    (honeycomb).
    """
    graph.check_site(r)
    kind = graph.spec.kind
    if kind == "square":
        i, j, _ = graph.positions[r]

        def groups(offsets):
            out = []
            for k in range(4):
                sites = tuple(graph.index(i + di, j + dj) for di, dj in (_rotate(o, k) for o in offsets))
                out.append(None if any(s is None for s in sites) else sites)
            return tuple(out)

        return SquareRotations(groups(_SQ_LINEAR), groups(_SQ_DIAGONAL), groups(_SQ_TRIPLE))
    if kind == "honeycomb":
        pairs, nnn = [], []
        incomplete = len(graph.adjacency[r]) < 3
        for n in graph.adjacency[r]:
            others = tuple(s for s in graph.adjacency[n] if s != r)
            nnn.extend(others)
            if len(others) == 2:
                pairs.append(others)
            else:
                incomplete = True
        nnn = tuple(nnn)
        return HoneycombNeighbors(nnn=nnn, pairs=tuple(pairs), incomplete=incomplete)
    raise LatticeError(f"no next-nearest-neighbour groups defined for {kind!r}")
