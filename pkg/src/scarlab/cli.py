"""Command-line front end: configs, presets, orchestration and CSV/JSON output.

Every run is described by a :class:`RunConfig` (YAML on disk, or an embedded
preset). Subcommand flags override individual fields before validation.
"""

from __future__ import annotations

import argparse
import copy
import difflib
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import scipy
import yaml

from . import __version__
from .basis import DimensionCapExceeded, enumerate_basis, maximally_excited
from .eigen import SpectrumError, entanglement_entropy, full_diagonalize, half_cut, overlap_profile, scar_band
from .evolve import EvolutionError, TimeSeries, fidelity_series, multi_observable_series
from .fsa import (
    FsaError,
    build_fsa_decorated,
    build_fsa_symmetric,
    frequency_criteria,
    projected_spectrum,
    su2_reference_fidelity,
    subspace_variance,
    variance_scan,
)
from .lattice import LatticeError, LatticeSpec, build_lattice
from .operators import (
    ModelSpec,
    OperatorError,
    build_casimir,
    build_domain_wall,
    build_hamiltonian,
    build_local_observable,
    class_frequencies,
    split_pm,
    sublattice_frequencies,
)
from .optimize import NoRevivalError, detect_first_revival, optimize_boundary, optimize_deformation, optimize_frequency
from .tdvp import TdvpError, TdvpParams, find_omega_c, integrate, tdvp_observables

logger = logging.getLogger("scarlab")

EXIT_OK, EXIT_VALIDATION, EXIT_CAP, EXIT_NUMERICAL = 0, 2, 3, 4
EXPERIMENTS = ("evolve", "spectrum", "fsa", "tdvp", "optimize")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

NUMERIC_KEYS = {"dt", "t_max", "method", "krylov_dim", "tol", "dim_cap"}
MODEL_KEYS = {"deform", "omega", "corner", "edge", "bulk", "g_C", "g_E"}
OUTPUT_KEYS = {"dir", "dumps"}
DUMPS = {"graph", "basis", "hamiltonian"}
OPTION_KEYS = {
    "evolve": {"observables", "variants"},
    "spectrum": {"cut", "emit", "n_windows"},
    "fsa": {"mode", "scan", "emit", "variants", "periods"},
    "tdvp": {"ca", "cb", "eps", "omega", "omegas", "find_omega_c", "bracket", "compare_exact"},
    "optimize": {"target", "max_evals", "x0", "scale", "curve", "freeze_edge"},
}
NUMERIC_DEFAULTS = {"dt": 0.01, "t_max": 20.0, "method": "auto", "krylov_dim": 30, "tol": 1e-10, "dim_cap": 4_000_000}


@dataclass
class RunConfig:
    experiment: str
    lattice: Dict[str, Any] | None = None
    model: Dict[str, Any] = field(default_factory=dict)
    numeric: Dict[str, Any] = field(default_factory=dict)
    options: Dict[str, Any] = field(default_factory=dict)
    output: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(data) - {"experiment", "lattice", "model", "numeric", "options", "output"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigError("config lacks 'experiment'")
        cfg = cls(
            experiment=data["experiment"],
            lattice=data.get("lattice"),
            model=dict(data.get("model") or {}),
            numeric=dict(data.get("numeric") or {}),
            options=dict(data.get("options") or {}),
            output=dict(data.get("output") or {}),
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def lattice_spec(self) -> LatticeSpec:
        if self.lattice is None:
            raise ConfigError(f"experiment {self.experiment!r} needs a lattice")
        return LatticeSpec(**self.lattice)

    def num(self, key):
        return self.numeric.get(key, NUMERIC_DEFAULTS[key])

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        _reject(self.numeric, NUMERIC_KEYS, "numeric")
        _reject(self.output, OUTPUT_KEYS, "output")
        _reject(self.options, OPTION_KEYS[self.experiment], f"options for {self.experiment}")
        _check_model(self.model, "model")
        for name, variant in (self.options.get("variants") or {}).items():
            _check_model(variant or {}, f"variant {name!r}")
        bad = set(self.output.get("dumps", [])) - DUMPS
        if bad:
            raise ConfigError(f"unknown dumps {sorted(bad)}; choose from {sorted(DUMPS)}")
        for key in ("dt", "t_max", "tol"):
            if key in self.numeric and not float(self.numeric[key]) > 0:
                raise ConfigError(f"numeric.{key} must be positive")
        if self.num("method") not in ("auto", "dense", "krylov"):
            raise ConfigError("numeric.method must be auto, dense or krylov")
        if self.lattice is not None:
            if not isinstance(self.lattice, dict):
                raise ConfigError("lattice must be a mapping")
            _reject(self.lattice, {"kind", "Lx", "Ly", "boundary"}, "lattice")
            try:
                LatticeSpec(**self.lattice)
            except TypeError as exc:
                raise ConfigError(f"lattice: {exc}") from exc
        elif self.experiment != "tdvp":
            raise ConfigError(f"experiment {self.experiment!r} needs a lattice")
        if self.experiment == "optimize" and self.options.get("target") not in ("deformation", "boundary", "frequency"):
            raise ConfigError("optimize needs options.target in deformation|boundary|frequency")
        if self.experiment == "fsa" and self.options.get("mode", "scan") not in ("scan", "su2", "modes"):
            raise ConfigError("fsa options.mode must be scan, su2 or modes")
        for key, spec in (self.options.get("scan") or {}).items():
            if key not in ("a", "b", "omega"):
                raise ConfigError(f"scan axis {key!r} not one of a, b, omega")
            parse_range(spec)


def _reject(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _check_model(model: dict, where: str) -> None:
    _reject(model, MODEL_KEYS, where)
    if "deform" in model and len(model["deform"]) != 2:
        raise ConfigError(f"{where}: deform must be [a, b]")


def parse_range(spec) -> np.ndarray:
    """``"lo:hi:step"`` (inclusive) or an explicit list."""
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=float)
    try:
        lo, hi, step = (float(x) for x in str(spec).split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad range {spec!r}; expected lo:hi:step") from exc
    if step <= 0 or hi < lo:
        raise ConfigError(f"bad range {spec!r}")
    n = int(np.floor((hi - lo) / step + 1e-9))
    return np.round(lo + step * np.arange(n + 1), 12)


def build_model(graph, model: dict) -> ModelSpec:
    freq = None
    if "omega" in model:
        freq = sublattice_frequencies(graph, float(model["omega"]))
    elif MODEL_KEYS & set(model) - {"deform"}:
        corner = model.get("corner", 1.0 - model.get("g_C", 0.0))
        edge = model.get("edge", 1.0 - model.get("g_E", 0.0))
        freq = class_frequencies(graph, corner=corner, edge=edge, bulk=model.get("bulk", 1.0))
    deform = tuple(model["deform"]) if "deform" in model else None
    return ModelSpec(freq=freq, deform=deform)


# ---------------------------------------------------------------- presets

_SQ44 = {"kind": "square", "Lx": 4, "Ly": 4, "boundary": "periodic"}
_SQ44_OPEN = {"kind": "square", "Lx": 4, "Ly": 4, "boundary": "open"}
_DEC = {"kind": "decorated-honeycomb", "Lx": 2, "Ly": 2, "boundary": "periodic"}

PRESETS: Dict[str, dict] = {
    "fig1b-4x4": {
        "description": "Fidelity on 4x4 PBC, undeformed vs optimal deformation (seconds)",
        "config": {
            "experiment": "evolve",
            "lattice": _SQ44,
            "numeric": {"t_max": 20.0, "dt": 0.01},
            "options": {"observables": ["fidelity"], "variants": {"undeformed": {}, "deformed": {"deform": [0.0244, 0.0506]}}},
        },
    },
    "fig2b": {
        "description": "TDVP trajectories for several omega at eps = 4e-4, plus omega_c (seconds)",
        "config": {
            "experiment": "tdvp",
            "numeric": {"t_max": 20.0, "dt": 0.01},
            "options": {"ca": 2, "cb": 3, "eps": 4e-4, "omegas": [0.7, 0.8, 0.841, 0.9, 1.0], "find_omega_c": True, "bracket": [0.7, 1.0]},
        },
    },
    "fig2c": {
        "description": "First-revival fidelity vs omega on the N=20 decorated lattice (minutes)",
        "config": {
            "experiment": "optimize",
            "lattice": _DEC,
            "numeric": {"dt": 0.01},
            "options": {"target": "frequency", "x0": [1.0], "scale": 0.05, "max_evals": 200, "curve": "0.7:1.0:0.02"},
        },
    },
    "fig3b-4x4": {
        "description": "Domain-wall density on 4x4 OBC with and without corner correction (seconds)",
        "config": {
            "experiment": "evolve",
            "lattice": _SQ44_OPEN,
            "numeric": {"t_max": 20.0, "dt": 0.01},
            "options": {"observables": ["fidelity", "domainwall"], "variants": {"uncorrected": {}, "corrected": {"g_C": 0.12, "g_E": 0.001}}},
        },
    },
    "figS1": {
        "description": "FSA leakage over the (a, b) plane on 4x4 PBC (seconds)",
        "config": {
            "experiment": "fsa",
            "lattice": _SQ44,
            "options": {"mode": "scan", "scan": {"a": "0:0.05:0.0025", "b": "0:0.1:0.0025"}, "emit": ["leakage", "literal"]},
        },
    },
    "figS2": {
        "description": "Overlaps of projected-Hamiltonian eigenmodes with exact eigenstates on 4x4 PBC (seconds)",
        "config": {
            "experiment": "fsa",
            "lattice": _SQ44,
            "options": {
                "mode": "modes",
                "variants": {"undeformed": {}, "fidelity_opt": {"deform": [0.0244, 0.0506]}, "variance_opt": {"deform": [0.0217, 0.0556]}},
            },
        },
    },
    "figS3": {
        "description": "Fidelity against the su(2) reference and Casimir dynamics on 4x4 PBC (seconds)",
        "config": {
            "experiment": "fsa",
            "lattice": _SQ44,
            "numeric": {"dt": 0.01},
            "options": {"mode": "su2", "periods": 3, "variants": {"undeformed": {}, "deformed": {"deform": [0.0244, 0.0506]}}},
        },
    },
    "figS5": {
        "description": "TDVP local observables vs exact evolution on the N=20 decorated lattice at omega_c (seconds)",
        "config": {
            "experiment": "tdvp",
            "lattice": _DEC,
            "numeric": {"t_max": 10.0, "dt": 0.05},
            "options": {"ca": 2, "cb": 3, "eps": 4e-4, "omega": 0.841, "compare_exact": True},
        },
    },
    "figS6": {
        "description": "Decorated-lattice FSA leakage vs omega and eigenmode overlaps (seconds)",
        "config": {
            "experiment": "fsa",
            "lattice": _DEC,
            "options": {"mode": "scan", "scan": {"omega": "0.7:1.0:0.01"}, "emit": ["leakage", "literal"]},
        },
    },
    "honeycomb18": {
        "description": "Deformation optimum on the N=18 honeycomb (minutes)",
        "config": {
            "experiment": "optimize",
            "lattice": {"kind": "honeycomb", "Lx": 3, "Ly": 3, "boundary": "periodic"},
            "numeric": {"dt": 0.01},
            "options": {"target": "deformation", "x0": [0.0, 0.0], "scale": 0.02, "max_evals": 400},
        },
    },
    "honeycomb32": {
        "description": "N=32 honeycomb spot check at a fixed deformation (minutes, Krylov)",
        "config": {
            "experiment": "evolve",
            "lattice": {"kind": "honeycomb", "Lx": 4, "Ly": 4, "boundary": "periodic"},
            "model": {"deform": [0.03037, 0.06203]},
            "numeric": {"t_max": 6.0, "dt": 0.02, "method": "krylov"},
            "options": {"observables": ["fidelity"]},
        },
    },
}


def list_presets() -> Dict[str, str]:
    return {name: p["description"] for name, p in PRESETS.items()}


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        close = difflib.get_close_matches(name, PRESETS, n=1)
        hint = f"; did you mean {close[0]!r}?" if close else ""
        raise ConfigError(f"unknown preset {name!r}{hint}")
    return RunConfig.from_dict(copy.deepcopy(PRESETS[name]["config"]))


def load_config(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------- output


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


class OutputWriter:
    """Writes CSV/JSON files into ``root``, each CSV headed by ``#`` metadata lines."""

    def __init__(self, root, config: RunConfig):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.started = time.perf_counter()
        self.written: List[Path] = []

    def metadata(self) -> List[str]:
        return [
            f"config_hash: {self.config.config_hash()}",
            f"experiment: {self.config.experiment}",
            f"versions: scarlab {__version__}; numpy {np.__version__}; scipy {scipy.__version__}",
        ]

    def csv(self, name: str, columns: List[str], rows, extra_meta: List[str] | None = None) -> Path:
        path = self.root / name
        lines = [f"# {m}" for m in self.metadata() + list(extra_meta or [])]
        lines.append(f"# wall_time_s: {time.perf_counter() - self.started:.3f}")
        lines.append(",".join(columns))
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        path.write_text("\n".join(lines) + "\n")
        self.written.append(path)
        return path

    def series(self, name: str, series: Dict[str, TimeSeries]) -> Path:
        keys = list(series)
        t = series[keys[0]].times
        cols = np.column_stack([t] + [series[k].values for k in keys])
        return self.csv(name, ["t"] + keys, cols)

    def json(self, name: str, payload: dict) -> Path:
        path = self.root / name
        body = {
            "metadata": {m.split(": ", 1)[0]: m.split(": ", 1)[1] for m in self.metadata()},
            "wall_time_s": round(time.perf_counter() - self.started, 3),
            "result": payload,
        }
        path.write_text(json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n")
        self.written.append(path)
        return path

    def text(self, name: str, content: str) -> Path:
        path = self.root / name
        path.write_text(content)
        self.written.append(path)
        return path


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x)}")


def write_sparse_csv(writer: OutputWriter, name: str, op) -> Path:
    coo = op.tocoo()
    order = np.lexsort((coo.col, coo.row))
    data = np.asarray(coo.data, dtype=complex)[order]
    rows = zip(coo.row[order], coo.col[order], data.real, data.imag)
    return writer.csv(name, ["row", "col", "re", "im"], ([int(r), int(c), re, im] for r, c, re, im in rows))


# ---------------------------------------------------------------- experiments


class Context:
    """Lazily built lattice, basis and base model shared by the experiment runners."""

    def __init__(self, config: RunConfig, writer: OutputWriter, dim_cap: int):
        self.config, self.writer = config, writer
        self.spec = config.lattice_spec() if config.lattice is not None else None
        self.graph = build_lattice(self.spec) if self.spec else None
        self.dim_cap = dim_cap
        self._basis = None

    @property
    def basis(self):
        if self._basis is None:
            self._basis = enumerate_basis(self.graph, dim_cap=self.dim_cap)
            logger.info("basis dimension %d", self._basis.dim)
        return self._basis

    def model(self, overrides: dict | None = None) -> ModelSpec:
        merged = dict(self.config.model)
        merged.update(overrides or {})
        return build_model(self.graph, merged)

    def hamiltonian(self, overrides=None):
        return build_hamiltonian(self.basis, self.model(overrides))

    def variants(self) -> Dict[str, dict]:
        return self.config.options.get("variants") or {"default": {}}

    def psi_a(self):
        return self.basis.product_state(maximally_excited(self.graph, "A"))


def _observable(ctx: Context, name: str):
    if name == "domainwall":
        return build_domain_wall(ctx.graph, ctx.basis)
    if name.startswith("site:"):
        try:
            _, idx, kind = name.split(":")
            return build_local_observable(ctx.graph, ctx.basis, int(idx), kind)
        except ValueError as exc:
            raise ConfigError(f"bad observable {name!r}; expected site:<idx>:<kind>") from exc
    raise ConfigError(f"unknown observable {name!r}")


def run_evolve(ctx: Context) -> dict:
    cfg = ctx.config
    names = cfg.options.get("observables", ["fidelity"])
    kw = dict(method=cfg.num("method"), krylov_dim=cfg.num("krylov_dim"), tol=cfg.num("tol"))
    columns: Dict[str, TimeSeries] = {}
    report = {}
    for vname, overrides in ctx.variants().items():
        H = ctx.hamiltonian(overrides)
        ops = {n: _observable(ctx, n) for n in names if n != "fidelity"}
        if ops:
            out = multi_observable_series(H, ctx.psi_a(), ops, cfg.num("t_max"), cfg.num("dt"), **kw)
        else:
            out = {"fidelity": fidelity_series(H, ctx.psi_a(), cfg.num("t_max"), cfg.num("dt"), **kw)}
        for n in names:
            columns[f"{vname}:{n}"] = out[n]
        try:
            rev = detect_first_revival(out["fidelity"])
            report[vname] = {"T": rev.T, "F_T": rev.F_T, "minus_log_F_over_N": -np.log(rev.F_T) / ctx.graph.n_sites}
        except NoRevivalError as exc:
            report[vname] = {"error": str(exc)}
    ctx.writer.series("evolve.csv", columns)
    ctx.writer.json("evolve.json", {"dimension": ctx.basis.dim, "revivals": report})
    return report


def run_spectrum(ctx: Context) -> dict:
    cfg = ctx.config
    emit = cfg.options.get("emit", ["energies", "entropy", "overlap"])
    axis = {"half-x": "x", "half-y": "y"}.get(cfg.options.get("cut", "half-x"))
    if axis is None:
        raise ConfigError("cut must be half-x or half-y")
    spec = full_diagonalize(ctx.hamiltonian())
    overlaps = overlap_profile(spec, ctx.psi_a())
    cols = {"E": spec.energies}
    if "entropy" in emit:
        cut = half_cut(ctx.graph, axis)
        cols["S"] = np.array([entanglement_entropy(spec.eigenvectors[:, k], ctx.basis, cut) for k in range(len(spec))])
    if "overlap" in emit:
        cols["overlap"] = overlaps
    keys = list(cols)
    ctx.writer.csv("spectrum.csv", keys, np.column_stack([cols[k] for k in keys]))
    band = scar_band(spec, overlaps, n_windows=int(cfg.options.get("n_windows", 20)))
    result = {"dimension": ctx.basis.dim, "scar_band_energies": spec.energies[band], "scar_band_overlaps": overlaps[band]}
    ctx.writer.json("spectrum.json", result)
    return result


def _fsa_for(ctx: Context, model: ModelSpec):
    hp, hm = split_pm(ctx.basis, model)
    if ctx.spec.kind == "decorated-honeycomb":
        return build_fsa_decorated(hp, hm, ctx.basis), hp, hm
    return build_fsa_symmetric(hp, hm, ctx.basis), hp, hm


def run_fsa(ctx: Context) -> dict:
    cfg = ctx.config
    mode = cfg.options.get("mode", "scan")
    if mode == "scan":
        axes = {k: parse_range(v) for k, v in (cfg.options.get("scan") or {}).items()}
        if not axes:
            raise ConfigError("fsa scan needs options.scan")

        def evaluate(**point):
            overrides = {}
            if "a" in point or "b" in point:
                overrides["deform"] = [point.get("a", 0.0), point.get("b", 0.0)]
            if "omega" in point:
                overrides["omega"] = point["omega"]
            model = ctx.model(overrides)
            fsa, _, _ = _fsa_for(ctx, model)
            return subspace_variance(build_hamiltonian(ctx.basis, model), fsa)

        scan = variance_scan(evaluate, axes)
        emit = cfg.options.get("emit", ["leakage", "literal"])
        grids = np.meshgrid(*scan.axes, indexing="ij")
        cols = [g.ravel() for g in grids]
        header = list(scan.names)
        for name in emit:
            if name not in ("leakage", "literal"):
                raise ConfigError(f"unknown fsa emit {name!r}")
            cols.append(getattr(scan, name).ravel())
            header.append(name)
        ctx.writer.csv("fsa_scan.csv", header, np.column_stack(cols))
        result = {"argmin": scan.argmin, "grid_argmin": scan.grid_argmin, "min_leakage": float(scan.leakage.min())}
        if ctx.spec.kind == "decorated-honeycomb":
            omega_s, omega_gen = frequency_criteria(ctx.graph)
            result.update(omega_s=omega_s, omega_general=omega_gen)
        ctx.writer.json("fsa_scan.json", result)
        return result
    if mode == "modes":
        result = {}
        for vname, overrides in ctx.variants().items():
            model = ctx.model(overrides)
            H = build_hamiltonian(ctx.basis, model)
            fsa, _, _ = _fsa_for(ctx, model)
            diag = projected_spectrum(H, fsa, full_diagonalize(H))
            ctx.writer.csv(
                f"fsa_modes_{vname}.csv", ["mode", "energy", "max_overlap"],
                [[k, e, o] for k, (e, o) in enumerate(zip(diag.mode_energies, diag.eigenmode_overlaps))],
            )
            result[vname] = {"leakage": diag.variance, "literal": diag.literal}
        ctx.writer.json("fsa_modes.json", result)
        return result
    # su(2) comparison: fidelity, reference and Casimir over several revival periods
    result = {}
    n = ctx.graph.n_sites
    dt = cfg.num("dt")
    for vname, overrides in ctx.variants().items():
        model = ctx.model(overrides)
        H = build_hamiltonian(ctx.basis, model)
        rev = detect_first_revival(fidelity_series(H, ctx.psi_a(), 1.5 * 2 * np.pi, dt))
        hp, hm = split_pm(ctx.basis, model)
        _, C = build_casimir(hp, hm, n, rev.T)
        t_max = float(cfg.options.get("periods", 3)) * rev.T
        out = multi_observable_series(H, ctx.psi_a(), {"casimir": C}, t_max, dt, method=cfg.num("method"))
        times = out["fidelity"].times
        ref = su2_reference_fidelity(n, 2 * np.pi * times / rev.T)
        ctx.writer.csv(
            f"su2_{vname}.csv", ["t", "F_exact", "F_su2", "C"],
            np.column_stack([times, out["fidelity"].values, ref.values, out["casimir"].values]),
        )
        c = out["casimir"].values
        result[vname] = {"T": rev.T, "F_T": rev.F_T, "casimir_drift": float(np.max(np.abs(c - c[0])))}
    ctx.writer.json("su2.json", result)
    return result


def run_tdvp(ctx: Context) -> dict:
    cfg, opts = ctx.config, ctx.config.options
    ca, cb, eps = int(opts.get("ca", 2)), int(opts.get("cb", 3)), float(opts.get("eps", 4e-4))
    t_max, dt = cfg.num("t_max"), cfg.num("dt")
    result: Dict[str, Any] = {"ca": ca, "cb": cb, "eps": eps}
    if opts.get("find_omega_c"):
        lo, hi = opts.get("bracket", [0.7, 1.0])
        result["omega_c"] = find_omega_c(ca, cb, eps, (float(lo), float(hi)))
    omegas = opts.get("omegas") or ([opts["omega"]] if "omega" in opts else [])
    if "omega_c" in result and not omegas:
        omegas = [result["omega_c"]]
    result["trajectories"] = {}
    for w in omegas:
        traj = integrate(TdvpParams(ca, cb, float(w), eps), t_max=t_max, dt=dt)
        ctx.writer.csv(
            f"tdvp_omega={float(w):g}.csv", ["t", "theta_A", "theta_B"],
            np.column_stack([traj.times, traj.theta_A, traj.theta_B]),
        )
        result["trajectories"][f"{float(w):g}"] = [asdict(e) for e in traj.events]
        if opts.get("compare_exact"):
            if ctx.graph is None:
                raise ConfigError("compare_exact needs a lattice")
            series = tdvp_observables(traj, ctx.basis)
            H = build_hamiltonian(ctx.basis, build_model(ctx.graph, {"omega": float(w)}))
            g = ctx.graph
            ra, rb = int(np.flatnonzero(g.sublattice == 0)[0]), int(np.flatnonzero(g.sublattice == 1)[0])
            ops = {
                "n_A": build_local_observable(g, ctx.basis, ra, "density"),
                "n_B": build_local_observable(g, ctx.basis, rb, "density"),
                "sy_A": build_local_observable(g, ctx.basis, ra, "sigma_y"),
                "sy_B": build_local_observable(g, ctx.basis, rb, "sigma_y"),
            }
            exact = multi_observable_series(H, ctx.psi_a(), ops, t_max, dt)
            cols = {f"tdvp:{k}": v for k, v in series.items()}
            cols.update({f"exact:{k}": exact[k] for k in ops})
            ctx.writer.series(f"tdvp_observables_omega={float(w):g}.csv", cols)
    ctx.writer.json("tdvp.json", result)
    return result


def run_optimize(ctx: Context) -> dict:
    cfg, opts = ctx.config, ctx.config.options
    target = opts["target"]
    max_evals, dt = int(opts.get("max_evals", 400)), cfg.num("dt")
    extra = {}
    if target == "deformation":
        x0 = opts.get("x0", [0.0, 0.0])
        res, _ = optimize_deformation(ctx.spec, x0=x0, scale=opts.get("scale", 0.02), max_evals=max_evals, dt=dt, method=cfg.num("method"))
    elif target == "boundary":
        x0 = opts.get("x0", [0.0, 0.0])
        res, _ = optimize_boundary(ctx.spec, x0=x0, scale=opts.get("scale", 0.05), max_evals=max_evals, dt=dt, freeze_edge=bool(opts.get("freeze_edge")))
    else:
        x0 = opts.get("x0", [1.0])
        curve = parse_range(opts["curve"]) if "curve" in opts else None
        res, (omegas, values) = optimize_frequency(ctx.spec, x0=x0[0], scale=opts.get("scale", 0.05), max_evals=max_evals, dt=dt, curve=curve)
        if omegas is not None:
            ctx.writer.csv("frequency_curve.csv", ["omega", "F_T"], np.column_stack([omegas, values]))
            extra["curve_argmax"] = float(omegas[np.argmax(values)])
    ctx.writer.csv("optimize_trace.csv", ["iteration", "best_F_T"], [[k, v] for k, v in enumerate(res.trace)])
    result = {
        "target": target, "params": res.params, "F_T": res.objective, "T": res.T, "evals": res.evals,
        "converged": res.converged, "message": res.message,
        "minus_log_F_over_N": -np.log(res.objective) / ctx.graph.n_sites, **extra,
    }
    ctx.writer.json("optimize.json", result)
    return result


RUNNERS = {"evolve": run_evolve, "spectrum": run_spectrum, "fsa": run_fsa, "tdvp": run_tdvp, "optimize": run_optimize}


def run(config: RunConfig, out_dir=".", threads: int | None = None, dim_cap: int | None = None) -> dict:
    """Run one experiment and write its outputs into ``out_dir``."""
    from threadpoolctl import threadpool_limits

    config.validate()
    writer = OutputWriter(out_dir if out_dir is not None else config.output.get("dir", "."), config)
    cap = dim_cap if dim_cap is not None else int(config.num("dim_cap"))
    with threadpool_limits(limits=threads):
        ctx = Context(config, writer, cap)
        for dump in config.output.get("dumps", []):
            if dump == "graph":
                writer.text("graph.json", ctx.graph.to_json())
            elif dump == "basis":
                ctx.basis.dump_csv(writer.root / "basis.csv")
            else:
                write_sparse_csv(writer, "hamiltonian.csv", ctx.hamiltonian())
        return RUNNERS[config.experiment](ctx)


# ---------------------------------------------------------------- argparse


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help="embedded configuration name (see `scarlab presets`)")
    p.add_argument("--config", "--model", dest="config", help="YAML run configuration")
    p.add_argument("--out", default=None, help="output directory (default: config output.dir or '.')")
    p.add_argument("--threads", type=int, default=None, help="cap on BLAS worker threads")
    p.add_argument("--dim-cap", type=int, default=None, help="refuse bases larger than this")
    p.add_argument("--t-max", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scarlab", description="Scar dynamics on constrained 2D Rydberg lattices.")
    parser.add_argument("--version", action="version", version=f"scarlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run whatever experiment the config names")
    _common(p)

    p = sub.add_parser("evolve", help="time evolution from |M_A>")
    _common(p)
    p.add_argument("--observables", help="comma list: fidelity,domainwall,site:<idx>:<kind>")

    p = sub.add_parser("spectrum", help="full spectrum, entanglement and overlaps")
    _common(p)
    p.add_argument("--cut", choices=["half-x", "half-y"])
    p.add_argument("--emit", help="comma list: energies,entropy,overlap")

    p = sub.add_parser("fsa", help="FSA leakage scans, eigenmodes and su(2) comparison")
    _common(p)
    p.add_argument("--scan", help="e.g. a=0:0.05:0.005,b=0:0.08:0.005")
    p.add_argument("--emit", help="comma list: leakage,literal")
    p.add_argument("--su2-compare", action="store_true")

    p = sub.add_parser("tdvp", help="two-angle variational dynamics")
    _common(p)
    p.add_argument("--ca", type=int)
    p.add_argument("--cb", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--find-omega-c", action="store_true")
    p.add_argument("--bracket", help="lo,hi")

    p = sub.add_parser("optimize", help="maximise the first-revival fidelity")
    _common(p)
    p.add_argument("--target", choices=["deformation", "boundary", "frequency"])
    p.add_argument("--max-evals", type=int)

    p = sub.add_parser("presets", help="list embedded presets")
    p.add_argument("--show", metavar="NAME", help="print one preset as YAML")
    return parser


def _config_from_args(args) -> RunConfig:
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config, not both")
    if args.preset:
        data = load_preset(args.preset).to_dict()
    elif args.config:
        data = load_config(args.config).to_dict()
    elif args.command == "tdvp":
        data = {"experiment": "tdvp"}
    else:
        raise ConfigError("no configuration: pass --preset or --config")
    cmd = args.command
    if cmd != "run":
        if data["experiment"] != cmd:
            raise ConfigError(f"config describes a {data['experiment']!r} run, not {cmd!r}")
    numeric, opts = data.setdefault("numeric", {}), data.setdefault("options", {})
    if args.t_max is not None:
        numeric["t_max"] = args.t_max
    if args.dt is not None:
        numeric["dt"] = args.dt
    if cmd == "evolve" and args.observables:
        opts["observables"] = args.observables.split(",")
    if cmd == "spectrum":
        if args.cut:
            opts["cut"] = args.cut
        if args.emit:
            opts["emit"] = args.emit.split(",")
    if cmd == "fsa":
        if args.su2_compare:
            opts["mode"] = "su2"
        if args.scan:
            opts["mode"] = "scan"
            try:
                opts["scan"] = dict(item.split("=", 1) for item in args.scan.split(","))
            except ValueError as exc:
                raise ConfigError(f"bad --scan {args.scan!r}") from exc
        if args.emit:
            opts["emit"] = args.emit.split(",")
    if cmd == "tdvp":
        for key in ("ca", "cb", "omega", "eps"):
            if getattr(args, key) is not None:
                opts[key] = getattr(args, key)
                if key == "omega":
                    opts.pop("omegas", None)
        if args.find_omega_c:
            opts["find_omega_c"] = True
        if args.bracket:
            try:
                opts["bracket"] = [float(x) for x in args.bracket.split(",")]
            except ValueError as exc:
                raise ConfigError(f"bad --bracket {args.bracket!r}") from exc
    if cmd == "optimize":
        if args.target:
            opts["target"] = args.target
        if args.max_evals is not None:
            opts["max_evals"] = args.max_evals
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "presets":
        if args.show:
            try:
                print(yaml.safe_dump(load_preset(args.show).to_dict(), sort_keys=False), end="")
            except ConfigError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_VALIDATION
        else:
            for name, desc in list_presets().items():
                print(f"{name:14s} {desc}")
        return EXIT_OK
    try:
        config = _config_from_args(args)
        out = args.out if args.out is not None else config.output.get("dir", ".")
        run(config, out, threads=args.threads, dim_cap=args.dim_cap)
    except DimensionCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ConfigError, LatticeError, OperatorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EvolutionError, SpectrumError, FsaError, TdvpError, NoRevivalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
