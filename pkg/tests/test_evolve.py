import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from scarlab.basis import enumerate_basis
from scarlab.evolve import (
    EvolutionError,
    TimeSeries,
    evolve,
    fidelity_series,
    multi_observable_series,
    observable_series,
    time_grid,
)
from scarlab.lattice import LatticeSpec, build_lattice
from scarlab.operators import ModelSpec, build_domain_wall, build_hamiltonian, build_pxp


@pytest.fixture(scope="module")
def single_site():
    basis = enumerate_basis(build_lattice(LatticeSpec("square", 1, 1, "open")))
    return build_pxp(basis), basis.product_state(1)


class TestTimeSeries:
    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            TimeSeries([0.0, 0.2, 0.1], [1, 2, 3])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            TimeSeries([0.0, 0.1], [1.0])

    def test_grid(self):
        t = time_grid(1.0, 0.1)
        assert len(t) == 11 and t[-1] == pytest.approx(1.0)


class TestTwoLevel:
    @pytest.mark.parametrize("method", ["dense", "krylov"])
    def test_rabi(self, single_site, method):
        H, psi = single_site
        series = fidelity_series(H, psi, 2 * np.pi, 0.01, method=method)
        assert np.allclose(series.values, np.cos(series.times) ** 2, atol=1e-10)

    @pytest.mark.parametrize("method", ["dense", "krylov"])
    def test_zero_hamiltonian(self, sq44, method):
        H = sp.csr_matrix((sq44.basis.dim, sq44.basis.dim))
        states = evolve(H, sq44.psi_a, [0.0, 1.0, 5.0], method=method)
        assert np.allclose(states, sq44.psi_a[None, :], atol=1e-14)


class TestKrylov:
    def test_matches_dense_at_t20(self, sq44):
        H = build_hamiltonian(sq44.basis)
        times = np.linspace(0, 20, 41)
        ref = evolve(H, sq44.psi_a, times, method="dense")
        kry = evolve(H, sq44.psi_a, times, method="krylov")
        assert np.max(np.linalg.norm(ref - kry, axis=1)) <= 1e-8

    def test_matches_expm(self, ring4):
        H = build_pxp(ring4.basis)
        psi = ring4.basis.product_state(0)
        out = evolve(H, psi, [3.7], method="krylov")[0]
        assert np.allclose(out, sla.expm(-3.7j * H.toarray()) @ psi, atol=1e-10)

    def test_time_reversal(self, sq44_open):
        H = build_hamiltonian(sq44_open.basis)
        psi_t = evolve(H, sq44_open.psi_a, [7.5], method="krylov")[0]
        back = evolve(H, psi_t, [-7.5], method="krylov")[0]
        assert np.linalg.norm(back - sq44_open.psi_a) <= 1e-8

    def test_energy_and_norm_conservation(self, sq44):
        H = build_hamiltonian(sq44.basis, ModelSpec(deform=(0.0244, 0.0506)))
        rng = np.random.default_rng(3)
        psi0 = rng.normal(size=sq44.basis.dim) + 1j * rng.normal(size=sq44.basis.dim)
        psi0 /= np.linalg.norm(psi0)
        states = evolve(H, psi0, np.linspace(0, 10, 11), method="krylov")
        energies = np.array([np.vdot(s, H @ s).real for s in states])
        assert np.max(np.abs(energies - energies[0])) <= 1e-8 * max(1.0, abs(energies[0]))
        assert np.allclose(np.linalg.norm(states, axis=1), 1.0, atol=1e-9)

    def test_fidelity_paths_agree(self, sq44):
        H = build_hamiltonian(sq44.basis)
        a = fidelity_series(H, sq44.psi_a, 6.0, 0.05, method="dense")
        b = fidelity_series(H, sq44.psi_a, 6.0, 0.05, method="krylov")
        assert np.max(np.abs(a.values - b.values)) < 1e-9

    def test_non_hermitian_rejected(self, sq44):
        H = build_hamiltonian(sq44.basis).tolil()
        H[0, 1] = 0.5
        with pytest.raises(EvolutionError):
            evolve(H.tocsr(), sq44.psi_a, [1.0])

    def test_unnormalised_rejected(self, sq44):
        with pytest.raises(ValueError):
            evolve(build_hamiltonian(sq44.basis), 2 * sq44.psi_a, [1.0])


class TestSeries:
    def test_fidelity_starts_at_one(self, sq44):
        f = fidelity_series(build_hamiltonian(sq44.basis), sq44.psi_a, 1.0)
        assert f.values[0] == pytest.approx(1.0, abs=1e-12)
        assert np.all((f.values >= -1e-9) & (f.values <= 1 + 1e-9))

    def test_domain_wall_starts_at_zero(self, sq44):
        G = build_domain_wall(sq44.graph, sq44.basis)
        series = observable_series(build_hamiltonian(sq44.basis), sq44.psi_a, G, 2.0)
        assert series.values[0] == pytest.approx(0.0, abs=1e-14)

    def test_multi_includes_fidelity(self, sq44):
        G = build_domain_wall(sq44.graph, sq44.basis)
        H = build_hamiltonian(sq44.basis)
        out = multi_observable_series(H, sq44.psi_a, {"G": G}, 3.0, 0.1, method="krylov")
        ref = fidelity_series(H, sq44.psi_a, 3.0, 0.1)
        assert np.allclose(out["fidelity"].values, ref.values, atol=1e-9)

    def test_shape_mismatch(self, sq44, sq44_open):
        with pytest.raises(ValueError):
            observable_series(build_hamiltonian(sq44.basis), sq44.psi_a, build_domain_wall(sq44_open.graph, sq44_open.basis), 1.0)


@settings(max_examples=12, deadline=None)
@given(
    spec=st.sampled_from(
        [
            LatticeSpec("square", 3, 3, "open"),
            LatticeSpec("square", 4, 4, "periodic"),
            LatticeSpec("honeycomb", 2, 2, "periodic"),
            LatticeSpec("honeycomb", 2, 3, "open"),
        ]
    ),
    seed=st.integers(0, 10_000),
    t=st.floats(0.1, 15.0),
)
def test_krylov_matches_dense_oracle(spec, seed, t):
    g = build_lattice(spec)
    basis = enumerate_basis(g)
    assert basis.dim <= 2000
    rng = np.random.default_rng(seed)
    H = build_hamiltonian(basis, ModelSpec(freq=rng.uniform(0.5, 1.5, g.n_sites)))
    psi0 = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    psi0 /= np.linalg.norm(psi0)
    a = evolve(H, psi0, [t], method="dense")[0]
    b = evolve(H, psi0, [t], method="krylov")[0]
    assert np.linalg.norm(a - b) <= 1e-8
