import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from scarlab.basis import enumerate_basis
from scarlab.lattice import LatticeSpec, build_lattice
from scarlab.operators import (
    ModelSpec,
    OperatorError,
    build_casimir,
    build_deformation_honeycomb,
    build_deformation_square,
    build_domain_wall,
    build_hamiltonian,
    build_local_observable,
    build_pxp,
    class_frequencies,
    domain_wall_values,
    is_hermitian,
    split_pm,
    spin_generators,
    sublattice_frequencies,
)
from tests.conftest import graph_from_edges

SX = np.array([[0, 1], [1, 0]], dtype=float)
P_DOWN = np.diag([1.0, 0.0])  # projector on the ground state (bit 0)


def site_op(op, r, n):
    """Embed a one-site operator at site r; bit r of the config index is site r."""
    out = np.ones((1, 1))
    for s in reversed(range(n)):
        out = np.kron(out, op if s == r else np.eye(2))
    return out


def dense_pxp(graph):
    n = graph.n_sites
    H = np.zeros((2**n, 2**n))
    for r in range(n):
        term = site_op(SX, r, n)
        for s in graph.adjacency[r]:
            term = term @ site_op(P_DOWN, s, n)
        H += term
    return H


def permutation_operator(basis, perm):
    cols = np.arange(basis.dim)
    images = np.zeros(basis.dim, dtype=np.uint64)
    for r, target in enumerate(perm):
        occ = (basis.configs >> np.uint64(r)) & np.uint64(1)
        images |= occ << np.uint64(target)
    rows = basis.lookup(images)
    assert np.all(rows >= 0)
    return sp.csr_matrix((np.ones(basis.dim), (rows, cols)), shape=(basis.dim,) * 2)


def square_weight_oracle(graph, config, r, a, b):
    """Deformation weight of flipping r in config, from lattice coordinates."""
    i, j, _ = graph.positions[r]
    ground = lambda di, dj: not (config >> graph.index(i + di, j + dj)) & 1
    total = 0.0
    for di, dj in [(0, 2), (2, 0), (0, -2), (-2, 0)]:
        total += a * ground(di, dj)
    for di, dj in [(1, 1), (1, -1), (-1, -1), (-1, 1)]:
        total += 2 * a * ground(di, dj)
    for trio in [((-1, 1), (0, 2), (1, 1)), ((1, 1), (2, 0), (1, -1)), ((1, -1), (0, -2), (-1, -1)), ((-1, -1), (-2, 0), (-1, 1))]:
        total += b * all(ground(*o) for o in trio)
    return total


class TestPxp:
    def test_single_site_is_sigma_x(self):
        g = build_lattice(LatticeSpec("square", 1, 1, "open"))
        H = build_pxp(enumerate_basis(g)).toarray()
        assert np.array_equal(H, SX)

    def test_ring_matches_dense_projector_algebra(self, ring4):
        dense = dense_pxp(ring4.graph)
        legal = ring4.basis.configs.astype(np.int64)
        restricted = dense[np.ix_(legal, legal)]
        assert np.array_equal(build_pxp(ring4.basis).toarray(), restricted)

    def test_dense_oracle_closes_on_legal_space(self, ring4):
        dense = dense_pxp(ring4.graph)
        legal = ring4.basis.configs.astype(np.int64)
        illegal = np.setdiff1d(np.arange(16), legal)
        assert np.all(dense[np.ix_(illegal, legal)] == 0)

    def test_ma_row_count(self, sq44):
        H = build_pxp(sq44.basis)
        k = sq44.basis.index_of[sq44.m_a]
        assert H[k].nnz == 8

    def test_hamming_distance_one(self, sq44):
        H = build_pxp(sq44.basis).tocoo()
        c = sq44.basis.configs
        assert np.all(np.bitwise_count(c[H.row] ^ c[H.col]) == 1)

    def test_frequency_length_mismatch(self, sq44):
        with pytest.raises(OperatorError):
            build_pxp(sq44.basis, np.ones(3))

    def test_exactly_hermitian(self, sq44, honey22, decorated):
        for inst, model in [(sq44, ModelSpec(deform=(0.03, 0.05))), (honey22, ModelSpec(deform=(0.03, 0.06))), (decorated, ModelSpec(freq=sublattice_frequencies(decorated.graph, 0.8)))]:
            assert is_hermitian(build_hamiltonian(inst.basis, model))

    def test_no_stored_zeros(self, sq44):
        H = build_hamiltonian(sq44.basis, ModelSpec(deform=(0.0, 0.0)))
        assert np.all(H.data != 0)


class TestDeformation:
    def test_zero_coefficients(self, sq44, honey22):
        assert build_deformation_square(sq44.basis, 0, 0).nnz == 0
        assert build_deformation_honeycomb(honey22.basis, 0, 0).nnz == 0

    def test_square_matrix_elements_oracle(self, sq44):
        a, b = 0.0244, 0.0506
        V = build_deformation_square(sq44.basis, a, b).tocoo()
        g, c = sq44.graph, sq44.basis.configs
        for row, col, val in zip(V.row, V.col, V.data):
            src = int(c[col])
            r = int(np.log2(src ^ int(c[row])))
            assert val == pytest.approx(square_weight_oracle(g, src, r, a, b), abs=1e-14)

    def test_hamiltonian_is_pxp_plus_v(self, sq44, honey22):
        H = build_hamiltonian(sq44.basis, ModelSpec(deform=(0.02, 0.05)))
        diff = H - build_pxp(sq44.basis) - build_deformation_square(sq44.basis, 0.02, 0.05)
        assert abs(diff).max() < 1e-15
        H = build_hamiltonian(honey22.basis, ModelSpec(deform=(0.03, 0.06)))
        diff = H - build_pxp(honey22.basis) - build_deformation_honeycomb(honey22.basis, 0.03, 0.06)
        assert abs(diff).max() < 1e-15

    def test_honeycomb_zero_recovers_pxp(self, honey22):
        H = build_hamiltonian(honey22.basis, ModelSpec(deform=(0.0, 0.0)))
        assert abs(H - build_pxp(honey22.basis)).max() == 0

    def test_wrong_kind(self, sq44, honey22):
        with pytest.raises(OperatorError):
            build_deformation_honeycomb(sq44.basis, 0.1, 0.1)
        with pytest.raises(OperatorError):
            build_deformation_square(honey22.basis, 0.1, 0.1)

    @pytest.mark.parametrize("shift", [(1, 0), (0, 1), (2, 3)])
    def test_translation_commutes(self, sq44, shift):
        g = sq44.graph
        perm = [g.index(i + shift[0], j + shift[1]) for (i, j, _) in g.positions]
        T = permutation_operator(sq44.basis, perm)
        V = build_deformation_square(sq44.basis, 0.03, 0.07)
        assert abs(T @ V - V @ T).max() < 1e-14

    def test_rotation_commutes(self, sq44):
        g = sq44.graph
        perm = [g.index(-j, i) for (i, j, _) in g.positions]
        T = permutation_operator(sq44.basis, perm)
        V = build_deformation_square(sq44.basis, 0.03, 0.07)
        assert abs(T @ V - V @ T).max() < 1e-14

    def test_open_boundary_drops_incomplete_terms(self, sq44_open):
        V = build_deformation_square(sq44_open.basis, 1.0, 0.0).tocoo()
        g, c = sq44_open.graph, sq44_open.basis.configs
        corner = g.index(0, 0)
        # vacuum -> single excitation at the corner: only (0,2), (2,0) and (1,1) exist
        vac, exc = sq44_open.basis.index_of[0], sq44_open.basis.index_of[1 << corner]
        val = V.tocsr()[exc, vac]
        assert val == pytest.approx(1 + 1 + 2)
        assert len(c) == 1234


class TestSplit:
    def test_sum_is_hamiltonian(self, sq44, honey22, decorated):
        cases = [
            (sq44, ModelSpec()),
            (sq44, ModelSpec(deform=(0.0244, 0.0506))),
            (honey22, ModelSpec(deform=(0.03, 0.06))),
            (decorated, ModelSpec(freq=sublattice_frequencies(decorated.graph, 0.84))),
        ]
        for inst, model in cases:
            hp, hm = split_pm(inst.basis, model)
            assert abs(hp + hm - build_hamiltonian(inst.basis, model)).max() < 1e-15
            assert abs(hm - hp.T.conj()).max() == 0

    def test_raises_hamming_distance(self, sq44):
        hp, hm = split_pm(sq44.basis, ModelSpec(deform=(0.02, 0.05)))
        d = np.bitwise_count(sq44.basis.configs ^ np.uint64(sq44.m_a))
        coo = hp.tocoo()
        assert np.all(d[coo.row] == d[coo.col] + 1)

    def test_action_on_ma(self, sq44):
        hp, hm = split_pm(sq44.basis)
        out = hp @ sq44.psi_a
        d = np.bitwise_count(sq44.basis.configs ^ np.uint64(sq44.m_a))
        assert set(d[np.abs(out) > 0]) == {1}
        assert np.linalg.norm(hm @ sq44.psi_a) == 0

    def test_decorated_norms(self, decorated):
        w, n = 0.77, 20
        hp, hm = split_pm(decorated.basis, ModelSpec(freq=sublattice_frequencies(decorated.graph, w)))
        assert np.linalg.norm(hp @ decorated.psi_a) == pytest.approx(w * np.sqrt(3 * n / 5), rel=1e-12)
        assert np.linalg.norm(hm @ decorated.psi_b) == pytest.approx(np.sqrt(2 * n / 5), rel=1e-12)

    def test_non_bipartite_rejected(self):
        g = graph_from_edges(3, [(0, 1), (1, 2), (0, 2)], sublattice=[0, 1, 0])
        with pytest.raises(OperatorError):
            split_pm(enumerate_basis(g))


class TestObservables:
    def test_domain_wall_examples(self, sq44):
        G = build_domain_wall(sq44.graph, sq44.basis).diagonal()
        assert G[sq44.basis.index_of[0]] == 4
        assert G[sq44.basis.index_of[sq44.m_a]] == 0

    def test_domain_wall_oracle(self, sq44_open, decorated):
        for inst in (sq44_open, decorated):
            G = build_domain_wall(inst.graph, inst.basis).diagonal()
            rng = np.random.default_rng(7)
            picks = rng.choice(inst.basis.dim, 200, replace=False)
            assert np.allclose(G[picks], domain_wall_values(inst.graph, inst.basis.configs[picks]), atol=1e-15)

    def test_density_on_ma(self, sq44):
        for r in range(16):
            n = build_local_observable(sq44.graph, sq44.basis, r, "density")
            expected = 1.0 if sq44.graph.sublattice[r] == 0 else 0.0
            assert np.vdot(sq44.psi_a, n @ sq44.psi_a).real == expected

    def test_sigma_y_matches_dense(self, ring4):
        # index 0 is ground, 1 excited, so <up|sigma_y|down> = -i sits at [1, 0]
        sy = np.array([[0, 1j], [-1j, 0]])
        for r in range(4):
            dense = site_op(sy, r, 4)
            for s in ring4.graph.adjacency[r]:
                dense = dense @ site_op(P_DOWN, s, 4)
            legal = ring4.basis.configs.astype(np.int64)
            built = build_local_observable(ring4.graph, ring4.basis, r, "sigma_y").toarray()
            assert np.allclose(built, dense[np.ix_(legal, legal)])
            assert is_hermitian(sp.csr_matrix(built))

    def test_sigma_y_zero_on_product(self, sq44):
        op = build_local_observable(sq44.graph, sq44.basis, 0, "sigma_y")
        assert np.vdot(sq44.psi_a, op @ sq44.psi_a) == 0

    def test_invalid(self, sq44):
        with pytest.raises(OperatorError):
            build_local_observable(sq44.graph, sq44.basis, 99, "density")
        with pytest.raises(OperatorError):
            build_local_observable(sq44.graph, sq44.basis, 0, "sigma_z")

    def test_class_frequencies(self, sq44_open):
        f = class_frequencies(sq44_open.graph, corner=0.88, edge=0.999)
        assert sorted(set(f)) == [0.88, 0.999, 1.0]
        assert np.sum(f == 0.88) == 4


class TestCasimir:
    @pytest.mark.parametrize("n", [2, 4, 8, 16])
    def test_exact_spin_is_identity(self, n):
        hp, hm = spin_generators(n)
        _, C = build_casimir(hp, hm, n, 2 * np.pi)
        assert abs(C - sp.identity(n + 1)).max() < 1e-12

    def test_expansion_identity(self, sq44):
        hp, hm = split_pm(sq44.basis, ModelSpec(deform=(0.0244, 0.0506)))
        T = 4.5
        hz, C = build_casimir(hp, hm, 16, T)
        s = T / (2 * np.pi)
        p, m = hp * s, hm * s
        psi = sq44.psi_a
        expanded = (2 * (p @ (m @ psi)) + 2 * (m @ (p @ psi)) + 4 * (hz @ (hz @ psi))) / (8 * 9)
        assert abs(np.vdot(psi, C @ psi) - np.vdot(psi, expanded)) < 1e-12

    def test_rejects_non_adjoint(self, sq44):
        hp, _ = split_pm(sq44.basis)
        with pytest.raises(OperatorError):
            build_casimir(hp, hp, 16, 5.0)

    def test_rejects_bad_period(self):
        hp, hm = spin_generators(4)
        with pytest.raises(OperatorError):
            build_casimir(hp, hm, 4, 0.0)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-0.2, 0.2), b=st.floats(-0.2, 0.2))
def test_deformed_square_hermitian_and_split(sq44, a, b):
    model = ModelSpec(deform=(a, b))
    H = build_hamiltonian(sq44.basis, model)
    assert is_hermitian(H)
    hp, hm = split_pm(sq44.basis, model)
    assert abs(hp + hm - H).max() < 1e-14


@settings(max_examples=20, deadline=None)
@given(freqs=st.lists(st.floats(0.1, 2.0), min_size=4, max_size=4))
def test_ring_frequencies_match_dense(ring4, freqs):
    n = 4
    dense = np.zeros((16, 16))
    for r in range(n):
        term = freqs[r] * site_op(SX, r, n)
        for s in ring4.graph.adjacency[r]:
            term = term @ site_op(P_DOWN, s, n)
        dense += term
    legal = ring4.basis.configs.astype(np.int64)
    assert np.allclose(build_pxp(ring4.basis, np.array(freqs)).toarray(), dense[np.ix_(legal, legal)])
