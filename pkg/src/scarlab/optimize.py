"""Revival detection and Nelder-Mead maximisation of the first-revival fidelity."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np
from scipy.signal import find_peaks

from .basis import enumerate_basis, maximally_excited
from .evolve import TimeSeries, fidelity_series
from .lattice import LatticeSpec, SiteGraph, build_lattice
from .operators import ModelSpec, build_hamiltonian, class_frequencies, sublattice_frequencies

logger = logging.getLogger(__name__)


class NoRevivalError(ValueError):
    """The series never decays below the threshold or has no later maximum."""


@dataclass
class RevivalReport:
    T: float
    F_T: float
    series: TimeSeries = field(repr=False)


def _parabola_peak(t, f, k):
    """Vertex of the parabola through grid points ``k-1, k, k+1``."""
    y0, y1, y2 = f[k - 1], f[k], f[k + 1]
    denom = y0 - 2 * y1 + y2
    if denom >= 0:
        return t[k], y1
    shift = 0.5 * (y0 - y2) / denom
    h = t[k + 1] - t[k]
    return t[k] + shift * h, y1 - 0.25 * (y0 - y2) * shift


def detect_first_revival(series: TimeSeries, threshold: float = 0.5, min_prominence: float = 0.05) -> RevivalReport:
    """First local maximum after the fidelity first drops below ``threshold``.

    Maxima with topographic prominence below ``min_prominence`` are ignored
    (they are wiggles of the decayed signal, not revivals). The peak is
    refined by a three-point parabola on the sampling grid.
    """
    t, f = series.times, np.asarray(series.values, dtype=float)
    if len(f) < 3:
        raise NoRevivalError("series too short to locate a revival")
    below = np.flatnonzero(f < threshold)
    if below.size == 0:
        raise NoRevivalError(f"no revival structure: fidelity never drops below {threshold}")
    peaks, _ = find_peaks(f, prominence=min_prominence)
    peaks = peaks[peaks > below[0]]
    if peaks.size == 0:
        raise NoRevivalError("no local maximum after the initial decay")
    T, F = _parabola_peak(t, f, int(peaks[0]))
    return RevivalReport(T=float(T), F_T=float(min(max(F, 0.0), 1.0)), series=series)


@dataclass
class OptResult:
    params: Dict[str, float]
    objective: float
    evals: int
    trace: List[float]
    converged: bool = True
    message: str = ""
    T: float | None = None


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0: Sequence[float],
    scale,
    max_evals: int = 400,
    xtol: float = 1e-4,
    names: Sequence[str] | None = None,
) -> OptResult:
    """Minimise ``objective`` with the standard Nelder-Mead simplex.

    Coefficients are reflection 1, expansion 2, contraction 0.5 and shrink
    0.5. Iteration stops once the simplex diameter falls below ``xtol`` or
    after ``max_evals`` evaluations; the best point found is returned either
    way. ``trace`` records the best value after each iteration.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (n,))
    names = list(names) if names is not None else [f"x{i}" for i in range(n)]
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        val = float(objective(x))
        if not np.isfinite(val):
            raise ValueError(f"objective is not finite at {x}")
        return val

    simplex = [x0] + [x0 + scale[i] * np.eye(n)[i] for i in range(n)]
    values = [f(x) for x in simplex]
    trace = [min(values)]
    converged = False
    while evals < max_evals:
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        diameter = max(np.max(np.abs(x - simplex[0])) for x in simplex[1:])
        if diameter < xtol:
            converged = True
            break
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < values[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (worst - centroid)
            fc = f(xc)
            if fc < min(fr, values[-1]):
                simplex[-1], values[-1] = xc, fc
            else:
                best = simplex[0]
                simplex = [best] + [best + 0.5 * (x - best) for x in simplex[1:]]
                values = [values[0]] + [f(x) for x in simplex[1:]]
        trace.append(min(values))
    k = int(np.argmin(values))
    message = "converged" if converged else f"max evaluations ({max_evals}) reached"
    if not converged:
        logger.warning("Nelder-Mead stopped: %s", message)
    return OptResult(
        params=dict(zip(names, map(float, simplex[k]))),
        objective=values[k],
        evals=evals,
        trace=trace,
        converged=converged,
        message=message,
    )


class RevivalObjective:
    """First-revival fidelity from ``|M_A>`` as a function of model parameters.

    ``make_model(x)`` maps a parameter vector to a :class:`ModelSpec`. The
    evolution horizon is fixed to ``horizon_factor`` times the revival time of
    ``make_model(x_ref)``, so the window is the same at every evaluation.
    """

    def __init__(self, graph: SiteGraph, make_model, x_ref, dt=0.01, horizon_factor=1.5, method="auto"):
        self.graph = graph
        self.basis = enumerate_basis(graph)
        self.psi0 = self.basis.product_state(maximally_excited(graph, "A"))
        self.make_model = make_model
        self.dt = dt
        self.method = method
        self.t_max = 10.0
        ref = self.revival(x_ref)
        self.t_max = horizon_factor * ref.T
        self.reference = ref

    def revival(self, x) -> RevivalReport:
        H = build_hamiltonian(self.basis, self.make_model(np.asarray(x, dtype=float)))
        series = fidelity_series(H, self.psi0, self.t_max, self.dt, method=self.method)
        return detect_first_revival(series)

    def __call__(self, x) -> float:
        try:
            return self.revival(x).F_T
        except NoRevivalError:
            # parameters far from the scar regime; score as the worst fidelity
            logger.debug("no revival at %s", x)
            return 0.0


def maximize_revival(objective: RevivalObjective, x0, scale, names, max_evals=400, xtol=1e-4) -> OptResult:
    res = nelder_mead(lambda x: -objective(x), x0, scale, max_evals=max_evals, xtol=xtol, names=names)
    res.objective = -res.objective
    res.trace = [-v for v in res.trace]
    res.T = objective.revival([res.params[k] for k in names]).T
    return res


def optimize_deformation(spec: LatticeSpec, x0=(0.0, 0.0), scale=0.02, max_evals=400, dt=0.01, method="auto"):
    """Maximise F(T) over the ``(a, b)`` deformation of a square or honeycomb lattice."""
    graph = build_lattice(spec)
    obj = RevivalObjective(graph, lambda x: ModelSpec(deform=(x[0], x[1])), x0, dt=dt, method=method)
    return maximize_revival(obj, x0, scale, ["a", "b"], max_evals=max_evals), obj


def optimize_boundary(spec: LatticeSpec, x0=(0.0, 0.0), scale=0.05, max_evals=400, dt=0.01, freeze_edge=False):
    """Maximise F(T) over corner/edge frequency reductions ``(g_C, g_E)`` on an open square lattice."""
    if spec.kind != "square" or spec.periodic:
        raise ValueError("boundary optimisation needs an open square lattice")
    graph = build_lattice(spec)
    if freeze_edge:
        make = lambda x: ModelSpec(freq=class_frequencies(graph, corner=1 - x[0]))
        obj = RevivalObjective(graph, make, x0[:1], dt=dt)
        return maximize_revival(obj, x0[:1], scale, ["g_C"], max_evals=max_evals), obj
    make = lambda x: ModelSpec(freq=class_frequencies(graph, corner=1 - x[0], edge=1 - x[1]))
    obj = RevivalObjective(graph, make, x0, dt=dt)
    return maximize_revival(obj, x0, scale, ["g_C", "g_E"], max_evals=max_evals), obj


def optimize_frequency(spec: LatticeSpec, x0=1.0, scale=0.05, max_evals=200, dt=0.01, curve=None):
    """Maximise F(T) over the sublattice-A frequency of a decorated lattice.

    ``curve`` is an optional grid of frequencies at which F(T) is also
    evaluated; it is returned as ``(omegas, F_T)`` alongside the result.
    """
    if spec.kind != "decorated-honeycomb":
        raise ValueError("frequency optimisation needs the decorated honeycomb lattice")
    graph = build_lattice(spec)
    make = lambda x: ModelSpec(freq=sublattice_frequencies(graph, x[0]))
    obj = RevivalObjective(graph, make, [x0], dt=dt)
    res = maximize_revival(obj, [x0], scale, ["omega"], max_evals=max_evals)
    values = None
    if curve is not None:
        curve = np.asarray(curve, dtype=float)
        values = np.array([obj([w]) for w in curve])
    return res, (curve, values)
