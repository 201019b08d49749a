"""Two-angle variational dynamics for bipartite lattices with connectivities ``c_A``, ``c_B``.

The state manifold is parametrised by ``(theta_A, theta_B)`` with phases
fixed to zero. ``|M_A>`` sits at ``(pi/2, 0)`` and ``|M_B>`` at
``(0, pi/2)``, both modulo pi.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .basis import ConstrainedBasis
from .evolve import TimeSeries
from .operators import build_local_observable

logger = logging.getLogger(__name__)

HALF_PI = 0.5 * np.pi
LAUNCH_OFFSET = 1e-3


class TdvpError(RuntimeError):
    pass


@dataclass(frozen=True)
class TdvpParams:
    c_A: int = 2
    c_B: int = 3
    omega: float = 1.0
    epsilon: float = 4e-4

    def __post_init__(self):
        if self.c_A < 1 or self.c_B < 1:
            raise ValueError("connectivities must be >= 1")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")


def reg_tan(x, epsilon: float):
    """``tan x / (1 + eps tan^2 x)``: bounded by ``1/(2 sqrt(eps))`` and zero at the poles."""
    t = np.tan(x)
    if epsilon == 0:
        return t
    return t / (1.0 + epsilon * t * t)


def eom_rhs(theta_a: float, theta_b: float, params: TdvpParams) -> Tuple[float, float]:
    """Angular velocities ``(dtheta_A/dt, dtheta_B/dt)``."""
    ca, cb, w, eps = params.c_A, params.c_B, params.omega, params.epsilon
    if eps == 0 and (abs(np.cos(theta_a)) < 1e-15 or abs(np.cos(theta_b)) < 1e-15):
        raise TdvpError(f"unregularised equations diverge at ({theta_a}, {theta_b})")
    ta, tb = reg_tan(theta_a, eps), reg_tan(theta_b, eps)
    ca_, sa = np.cos(theta_a), np.sin(theta_a)
    cb_, sb = np.cos(theta_b), np.sin(theta_b)
    da = -w * cb_ ** (ca - 1) - ca_**cb * sa * tb
    db = -(ca_ ** (cb - 1)) - w * cb_**ca * sb * ta
    return da, db


def _wrap(x):
    """Map angle differences into ``[-pi/2, pi/2)``."""
    return (np.asarray(x) + HALF_PI) % np.pi - HALF_PI


def distance_to_ma(theta_a, theta_b):
    return np.hypot(_wrap(np.asarray(theta_a) - HALF_PI), _wrap(theta_b))


def distance_to_mb(theta_a, theta_b):
    return np.hypot(_wrap(theta_a), _wrap(np.asarray(theta_b) - HALF_PI))


def distance_to_singular(theta_a, theta_b):
    """Distance to ``(pi/2, pi/2)`` mod pi, where both sublattice weights hit their pole."""
    return np.hypot(_wrap(np.asarray(theta_a) - HALF_PI), _wrap(np.asarray(theta_b) - HALF_PI))


@dataclass
class TdvpEvent:
    kind: str  # "M_A", "M_B" or "singular"
    time: float
    distance: float
    theta: Tuple[float, float]


@dataclass
class TdvpTrajectory:
    times: np.ndarray
    theta_A: np.ndarray
    theta_B: np.ndarray
    params: TdvpParams
    events: List[TdvpEvent] = field(default_factory=list)


def _local_minima(d):
    return [k for k in range(1, len(d) - 1) if d[k] <= d[k - 1] and d[k] < d[k + 1]]


def annotate(traj: TdvpTrajectory, near: float = 0.05, near_singular: float = 0.3) -> List[TdvpEvent]:
    """Closest approaches to ``M_A``, ``M_B`` (within ``near``) and to the singular points (within ``near_singular``).

    Distances at local minima are refined by a parabola through the three
    samples around each minimum.
    """
    a, b, t = traj.theta_A, traj.theta_B, traj.times
    dists = {
        "M_A": (distance_to_ma(a, b), near),
        "M_B": (distance_to_mb(a, b), near),
        "singular": (distance_to_singular(a, b), near_singular),
    }
    events = []
    for kind, (d, limit) in dists.items():
        for k in _local_minima(d):
            if not d[k] < limit:
                continue
            y0, y1, y2 = d[k - 1], d[k], d[k + 1]
            denom = y0 - 2 * y1 + y2
            dmin = y1 - (y0 - y2) ** 2 / (8 * denom) if denom > 0 else y1
            events.append(TdvpEvent(kind, float(t[k]), float(max(dmin, 0.0)), (float(a[k]), float(b[k]))))
    events.sort(key=lambda e: e.time)
    return events


def integrate(params: TdvpParams, initial=None, t_max: float = 50.0, dt: float = 0.01, rtol: float = 1e-9) -> TdvpTrajectory:
    """Adaptive Runge-Kutta (DOP853) integration sampled every ``dt``.

    The default start is ``LAUNCH_OFFSET`` away from ``|M_A>``. Negative
    ``t_max`` integrates backwards in time.
    """
    if initial is None:
        initial = (HALF_PI - LAUNCH_OFFSET, 0.0)
    n = int(round(abs(t_max) / dt))
    t_eval = np.sign(t_max) * np.arange(n + 1) * dt if t_max else np.zeros(1)
    sol = solve_ivp(
        lambda t, y: eom_rhs(y[0], y[1], params),
        (0.0, float(t_eval[-1])),
        np.asarray(initial, dtype=float),
        method="DOP853",
        t_eval=t_eval,
        rtol=rtol,
        atol=rtol * 1e-2,
    )
    if sol.status != 0:
        raise TdvpError(f"integration failed: {sol.message}")
    traj = TdvpTrajectory(sol.t, sol.y[0], sol.y[1], params)
    traj.events = annotate(traj)
    return traj


def mb_section_miss(params: TdvpParams, delta: float = LAUNCH_OFFSET, t_max: float = 20.0, rtol: float = 1e-10) -> float:
    """Signed ``theta_A`` at the first downward crossing of ``theta_B = -pi/2``.

    Launching from ``(pi/2 - delta, 0)``, the orbit reaches ``|M_B>`` exactly
    when this value is zero; its sign tells on which side of ``|M_B>`` the
    orbit passes.
    """

    def section(t, y):
        return y[1] + HALF_PI

    section.terminal = True
    section.direction = -1
    sol = solve_ivp(
        lambda t, y: eom_rhs(y[0], y[1], params),
        (0.0, t_max),
        [HALF_PI - delta, 0.0],
        method="DOP853",
        rtol=rtol,
        atol=rtol * 1e-2,
        events=section,
    )
    if not sol.t_events[0].size:
        raise TdvpError(f"orbit never reaches the M_B section within t={t_max}")
    return float(sol.y_events[0][0][0])


def find_omega_c(c_A: int, c_B: int, epsilon: float = 4e-4, bracket=(0.7, 1.0), width: float = 1e-4, delta: float = LAUNCH_OFFSET) -> float:
    """Frequency at which the orbit from ``|M_A>`` passes through ``|M_B>``, by bisection."""
    lo, hi = map(float, bracket)
    miss = lambda w: mb_section_miss(TdvpParams(c_A, c_B, w, epsilon), delta)
    f_lo, f_hi = miss(lo), miss(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise TdvpError(f"no sign change of the M_B miss distance in bracket {bracket}")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        f_mid = miss(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TtsAmplitudes:
    theta_A: float
    theta_B: float
    phi_A: float = 0.0
    phi_B: float = 0.0

    def weights(self) -> Dict[str, complex]:
        """Single-site weights; the excited weight of each sublattice uses its own angle."""
        return {
            "down_A": np.cos(self.theta_A),
            "up_A": 1j * np.exp(-1j * self.phi_A) * np.tan(self.theta_A),
            "down_B": np.cos(self.theta_B),
            "up_B": 1j * np.exp(-1j * self.phi_B) * np.tan(self.theta_B),
        }


def tts_state(amps: TtsAmplitudes, basis: ConstrainedBasis) -> np.ndarray:
    """Normalised state whose amplitudes depend only on the sublattice excitation counts."""
    if abs(np.cos(amps.theta_A)) < 1e-12 or abs(np.cos(amps.theta_B)) < 1e-12:
        raise TdvpError("TTS weights diverge at a pole; offset the angles")
    g = basis.graph
    mask_a = sum(1 << int(r) for r in np.flatnonzero(g.sublattice == 0))
    mask_b = sum(1 << int(r) for r in np.flatnonzero(g.sublattice == 1))
    na_max, nb_max = bin(mask_a).count("1"), bin(mask_b).count("1")
    n_a, n_b = basis.counts(mask_a), basis.counts(mask_b)
    w = amps.weights()

    def term(weight, power):
        # log(weight) * power with 0 ** 0 = 1
        weight = complex(weight)
        if weight == 0:
            return np.where(power == 0, 0.0, -np.inf + 0j)
        return power * np.log(weight)

    log_amp = (
        term(w["down_A"], na_max - n_a)
        + term(w["up_A"], n_a)
        + term(w["down_B"], nb_max - n_b)
        + term(w["up_B"], n_b)
    )
    log_amp = log_amp - np.max(log_amp.real)
    psi = np.exp(log_amp)
    return psi / np.linalg.norm(psi)


def tdvp_observables(traj: TdvpTrajectory, basis: ConstrainedBasis, sites: Dict[str, int] | None = None) -> Dict[str, TimeSeries]:
    """Density and dressed ``sigma^y`` on one representative site per sublattice along the orbit."""
    g = basis.graph
    if sites is None:
        sites = {"A": int(np.flatnonzero(g.sublattice == 0)[0]), "B": int(np.flatnonzero(g.sublattice == 1)[0])}
    ops = {}
    for sub, r in sites.items():
        ops[f"n_{sub}"] = build_local_observable(g, basis, r, "density")
        ops[f"sy_{sub}"] = build_local_observable(g, basis, r, "sigma_y")
    values = {k: np.zeros(len(traj.times)) for k in ops}
    for k, (a, b) in enumerate(zip(traj.theta_A, traj.theta_B)):
        psi = tts_state(TtsAmplitudes(a, b), basis)
        for name, op in ops.items():
            values[name][k] = np.vdot(psi, op @ psi).real
    return {k: TimeSeries(traj.times, v, label=k) for k, v in values.items()}
