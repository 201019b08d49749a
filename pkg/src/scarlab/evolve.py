"""Real-time evolution ``psi(t) = exp(-iHt) psi0`` and derived time series."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

logger = logging.getLogger(__name__)

DENSE_DIM_MAX = 2048
KRYLOV_DIM = 30
KRYLOV_TOL = 1e-10


class EvolutionError(RuntimeError):
    """Krylov propagation could not reach the requested accuracy."""


@dataclass
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if self.times.ndim != 1 or len(self.times) != len(self.values):
            raise ValueError("times and values must be 1-D arrays of equal length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def time_grid(t_max: float, dt: float) -> np.ndarray:
    n = int(round(t_max / dt))
    return np.arange(n + 1) * dt


def _check_hermitian(H):
    diff = H - H.T.conj()
    if sp.issparse(diff):
        bad = diff.nnz and np.max(np.abs(diff.data)) > 1e-12
    else:
        bad = np.max(np.abs(diff)) > 1e-12
    if bad:
        raise EvolutionError("Hamiltonian is not hermitian")


def _lanczos(H, v, m):
    """Lanczos with full reorthogonalisation; returns (V, alpha, beta, beta_next)."""
    n = v.shape[0]
    m = min(m, n)
    V = np.zeros((m, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v
    for j in range(m):
        w = H @ V[j]
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j] - (beta[j - 1] * V[j - 1] if j > 0 else 0)
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        if j + 1 == m:
            return V, alpha, beta[: m - 1], b
        if b < 1e-13:
            return V[: j + 1], alpha[: j + 1], beta[:j], 0.0
        beta[j] = b
        V[j + 1] = w / b
    raise AssertionError("unreachable")


class _KrylovSpace:
    def __init__(self, H, psi, m):
        self.norm = np.linalg.norm(psi)
        self.V, alpha, beta, self.beta_next = _lanczos(H, psi / self.norm, m)
        self.evals, self.evecs = sla.eigh_tridiagonal(alpha, beta) if len(alpha) > 1 else (alpha, np.ones((1, 1)))

    def coeffs(self, tau):
        return self.evecs @ (np.exp(-1j * self.evals * tau) * self.evecs[0].conj())

    def error(self, tau):
        # standard a posteriori estimate: beta_m * |last coefficient|
        return self.beta_next * abs(self.coeffs(tau)[-1])

    def state(self, tau):
        return self.norm * (self.coeffs(tau) @ self.V)


def iter_krylov(H, psi0, times, m=KRYLOV_DIM, tol=KRYLOV_TOL):
    """Yield ``exp(-iHt) psi0`` for each of ``times`` without storing the trajectory."""
    psi = np.asarray(psi0, dtype=complex).copy()
    t_cur = 0.0
    space = _KrylovSpace(H, psi, m)
    for t in times:
        while True:
            tau = t - t_cur
            if space.error(tau) <= tol:
                break
            # advance as far as the current space allows, then rebuild
            lo, hi = 0.0, tau
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if space.error(mid) <= tol:
                    lo = mid
                else:
                    hi = mid
            if abs(lo) < 1e-12:
                raise EvolutionError(
                    f"Krylov step underflow at t={t_cur:.6g}; residual {space.error(hi):.3e} > {tol:.1e}"
                )
            psi = space.state(lo)
            t_cur += lo
            space = _KrylovSpace(H, psi, m)
        yield space.state(tau)


def _resolve(H, method):
    if method == "auto":
        return "dense" if H.shape[0] <= DENSE_DIM_MAX else "krylov"
    if method not in ("dense", "krylov"):
        raise ValueError(f"unknown method {method!r}")
    return method


def iter_states(H, psi0, times, method="auto", krylov_dim=KRYLOV_DIM, tol=KRYLOV_TOL):
    _check_hermitian(H)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ValueError("initial state must be normalised")
    if _resolve(H, method) == "dense":
        yield from _dense_evolve(H, psi0, times)
    else:
        yield from iter_krylov(H, psi0, times, krylov_dim, tol)


def _dense_evolve(H, psi0, times):
    Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
    evals, evecs = np.linalg.eigh(Hd)
    c = evecs.conj().T @ psi0
    phases = np.exp(-1j * np.outer(times, evals))
    return (phases * c) @ evecs.T


def evolve(H, psi0, times, method="auto", krylov_dim=KRYLOV_DIM, tol=KRYLOV_TOL) -> np.ndarray:
    """States ``exp(-iHt) psi0`` at each of ``times``, as rows of a 2-D array.

    ``method`` is ``"krylov"``, ``"dense"`` or ``"auto"`` (dense up to
    ``DENSE_DIM_MAX``). The Krylov path reuses each Lanczos space for as many
    requested times as its error estimate allows and rebuilds it otherwise,
    so ``times`` should be monotone (either direction) for efficiency.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    return np.array(list(iter_states(H, psi0, times, method, krylov_dim, tol)))


def fidelity_series(H, psi0, t_max: float, dt: float = 0.01, method="auto", **kw) -> TimeSeries:
    """Return probability ``|<psi0|psi(t)>|^2`` on a uniform grid."""
    times = time_grid(t_max, dt)
    psi0 = np.asarray(psi0, dtype=complex)
    if _resolve(H, method) == "dense":
        _check_hermitian(H)
        Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
        evals, evecs = np.linalg.eigh(Hd)
        w = np.abs(evecs.conj().T @ psi0) ** 2
        amp = np.exp(-1j * np.outer(times, evals)) @ w
    else:
        amp = np.array([np.vdot(psi0, psi) for psi in iter_states(H, psi0, times, "krylov", **kw)])
    return TimeSeries(times, np.abs(amp) ** 2, label="fidelity")


def expectation(psi, op) -> float:
    val = np.vdot(psi, op @ psi)
    if abs(val.imag) > 1e-8:
        logger.warning("observable expectation has imaginary part %.2e", abs(val.imag))
    return val.real


def observable_series(H, psi0, op, t_max: float, dt: float = 0.01, method="auto", **kw) -> TimeSeries:
    """Expectation ``<psi(t)|O|psi(t)>`` on a uniform grid (real part)."""
    return multi_observable_series(H, psi0, {"value": op}, t_max, dt, method, **kw)["value"]


def multi_observable_series(H, psi0, ops: dict, t_max: float, dt: float = 0.01, method="auto", **kw) -> dict:
    """Several expectation series plus ``"fidelity"`` from a single propagation."""
    for name, op in ops.items():
        if op.shape != H.shape:
            raise ValueError(f"observable {name!r} has shape {op.shape}, Hamiltonian {H.shape}")
    times = time_grid(t_max, dt)
    psi0 = np.asarray(psi0, dtype=complex)
    values = {name: np.zeros(len(times)) for name in ops}
    fid = np.zeros(len(times))
    for k, psi in enumerate(iter_states(H, psi0, times, method, **kw)):
        fid[k] = abs(np.vdot(psi0, psi)) ** 2
        for name, op in ops.items():
            values[name][k] = expectation(psi, op)
    out = {"fidelity": TimeSeries(times, fid, label="fidelity")}
    out.update({name: TimeSeries(times, v, label=name) for name, v in values.items()})
    return out
