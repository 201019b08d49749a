import numpy as np
import pytest

from scarlab.basis import enumerate_basis, maximally_excited
from scarlab.lattice import LatticeSpec, SiteGraph, build_lattice

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def graph_from_edges(n, edges, sublattice=None):
    """Ad-hoc SiteGraph for oracle tests on graphs outside the three lattice families."""
    adj = [set() for _ in range(n)]
    for r, s in edges:
        adj[r].add(s)
        adj[s].add(r)
    sub = np.zeros(n, dtype=np.int8) if sublattice is None else np.asarray(sublattice, dtype=np.int8)
    return SiteGraph(
        spec=LatticeSpec("square", 1, n, "open"),
        adjacency=tuple(tuple(sorted(a)) for a in adj),
        sublattice=sub,
        positions=tuple((0, r, 0) for r in range(n)),
        _index={(0, r, 0): r for r in range(n)},
    )


class Instance:
    def __init__(self, spec):
        self.spec = spec
        self.graph = build_lattice(spec)
        self.basis = enumerate_basis(self.graph)
        self.m_a = maximally_excited(self.graph, "A")
        self.m_b = maximally_excited(self.graph, "B")

    @property
    def psi_a(self):
        return self.basis.product_state(self.m_a)

    @property
    def psi_b(self):
        return self.basis.product_state(self.m_b)


@pytest.fixture(scope="session")
def sq44():
    return Instance(LatticeSpec("square", 4, 4, "periodic"))


@pytest.fixture(scope="session")
def sq44_open():
    return Instance(LatticeSpec("square", 4, 4, "open"))


@pytest.fixture(scope="session")
def ring4():
    # the open 2x2 square is a 4-site ring
    return Instance(LatticeSpec("square", 2, 2, "open"))


@pytest.fixture(scope="session")
def honey33():
    return Instance(LatticeSpec("honeycomb", 3, 3, "periodic"))


@pytest.fixture(scope="session")
def honey22():
    return Instance(LatticeSpec("honeycomb", 2, 2, "periodic"))


@pytest.fixture(scope="session")
def decorated():
    return Instance(LatticeSpec("decorated-honeycomb", 2, 2, "periodic"))
