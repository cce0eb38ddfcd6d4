"""Reproducible study driver: scenario configs, the six study pipelines,
deterministic sweeps, and CSV/JSON/binary artifacts.

Config files are flat ``key = value`` text with JSON-typed values; every
run echoes the fully resolved config (defaults included) into its JSON
record so each number in an output table can be traced to the knobs that
produced it.  CSV bodies are deterministic byte-for-byte for a given
resolved config; wall-clock time lives only in the JSON metadata.
"""

from __future__ import annotations

import dataclasses
import json
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .dyson import (
    first_order_correction,
    oscillatory_integral,
    scaling_fit,
    second_order_correction,
)
from .errors import ThermolimError, ValidationError
from .evolver import (
    JointState,
    build_hamiltonian,
    evolve_exact,
    fidelity,
    project_chi,
)
from .fock import FieldState, ModelParams, cat_state, choose_cutoff
from .propagator import evolve_cat_leading, evolve_fock_leading, frame
from .spins import (
    BRUTE_FORCE_LIMIT,
    ProductSpinSpec,
    chi_prime_state,
    chi_state,
    ehrenfest_residual,
    random_spec,
    sigma_moments_bruteforce,
    sigma_moments_closed,
)
from .wigner import (
    count_time_zero_crossings,
    default_grid,
    fit_interference_offset,
    fringe_visibility,
    interference_phase_offset,
    save_csv,
    save_wgrd,
    time_average,
    w_int_closed,
    wigner_numeric,
)

__all__ = [
    "STUDY_NAMES",
    "SWEEP_AXES",
    "ScenarioConfig",
    "RunRecord",
    "parse_config",
    "load_config",
    "run_scenario",
    "run_sweep",
]

STUDY_NAMES = ("spin-classical", "cat", "fock", "wigner",
               "dyson-scaling", "convergence")

# numeric knobs a sweep may scan; everything else is fixed per sweep
SWEEP_AXES = ("n_atoms", "delta", "g", "alpha", "phi", "fock_k",
              "t_max", "seed")

_DEFAULTS: dict[str, Any] = {
    "study": None,
    "omega": 1.0,
    "delta": 0.0,
    "g": 0.25,
    "n_atoms": 4,
    "alpha": 2.0,
    "phi": math.pi / 2,
    "fock_k": 0,
    "initial_state": "vacuum",      # dyson-scaling: vacuum | cat | fock
    "spin_source": "seeded",        # spin-classical: seeded | explicit
    "spin_a": None,                 # explicit: list of [re, im] per site
    "spin_b": None,
    "t_max": 2 * math.pi,
    "n_steps": 16,
    "grid_spacing": 0.1,
    "grid_nsigma": 6.0,
    "avg_samples": 64,
    "seed": 0,
    "workers": 1,
    "out_dir": None,                # resolved to runs/<study>
    "emit_wigner_bin": False,
    "sweep_axis": None,
    "sweep_values": None,
    "sweep_limit": 64,
    "tol_tail": 1e-8,
}

_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*$")


def parse_config(text: str) -> dict[str, Any]:
    """Parse flat ``key = value`` lines; values are JSON literals.

    Blank lines and ``#`` comments are ignored.  Unknown keys, duplicate
    keys, and unparseable values raise a validation error naming the
    offender.
    """
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, rhs = line.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ValidationError(f"line {lineno}: bad key {key!r}")
        if key in out:
            raise ValidationError(f"line {lineno}: duplicate key {key!r}")
        try:
            out[key] = json.loads(rhs.strip())
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"line {lineno}: value for {key!r} is not a JSON literal: {exc}"
            ) from exc
    return out


def load_config(path) -> dict[str, Any]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _require(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ValidationError(f"{name}: {msg}")


def _as_int(value: Any, name: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool),
             name, f"must be an integer, got {value!r}")
    return value


def _as_number(value: Any, name: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             name, f"must be a number, got {value!r}")
    return float(value)


def _spin_array(value: Any, name: str, n_atoms: int) -> np.ndarray:
    _require(isinstance(value, list) and len(value) == n_atoms, name,
             f"must be a list of {n_atoms} [re, im] pairs")
    try:
        arr = np.array([complex(re_, im_) for re_, im_ in value])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: entries must be [re, im] pairs") from exc
    return arr


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully resolved, validated description of one study run."""

    study: str
    params: ModelParams
    alpha: float
    phi: float
    fock_k: int
    initial_state: str
    spin_source: str
    spin_a: np.ndarray | None
    spin_b: np.ndarray | None
    t_max: float
    n_steps: int
    grid_spacing: float
    grid_nsigma: float
    avg_samples: int
    seed: int
    workers: int
    out_dir: str
    emit_wigner_bin: bool
    sweep_axis: str | None
    sweep_values: tuple | None
    sweep_limit: int
    tolerances: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, raw: dict[str, Any], **overrides: Any) -> "ScenarioConfig":
        merged = dict(_DEFAULTS)
        for key, value in raw.items():
            if key not in _DEFAULTS and not key.startswith("tol_"):
                raise ValidationError(f"{key}: unknown config key")
            merged[key] = value
        for key, value in overrides.items():
            if value is not None:
                merged[key] = value

        study = merged["study"]
        _require(study in STUDY_NAMES, "study",
                 f"must be one of {list(STUDY_NAMES)}, got {study!r}")

        omega = _as_number(merged["omega"], "omega")
        _require(omega > 0, "omega", f"must be positive, got {omega}")
        delta = _as_number(merged["delta"], "delta")
        _require(delta >= 0, "delta", f"must be nonnegative, got {delta}")
        g = _as_number(merged["g"], "g")
        _require(g >= 0, "g", f"must be nonnegative, got {g}")
        n_atoms = _as_int(merged["n_atoms"], "n_atoms")
        _require(n_atoms >= 1, "n_atoms", f"must be >= 1, got {n_atoms}")
        params = ModelParams(omega=omega, delta=delta, g=g, n_atoms=n_atoms)

        alpha = _as_number(merged["alpha"], "alpha")
        _require(alpha >= 0, "alpha", f"must be >= 0, got {alpha}")
        phi = _as_number(merged["phi"], "phi")
        fock_k = _as_int(merged["fock_k"], "fock_k")
        _require(fock_k >= 0, "fock_k", f"must be >= 0, got {fock_k}")

        initial = merged["initial_state"]
        _require(initial in ("vacuum", "cat", "fock"), "initial_state",
                 f"must be vacuum, cat, or fock, got {initial!r}")
        if study in ("dyson-scaling", "convergence"):
            _require(delta > 0, "delta",
                     f"{study} measures detuning corrections; need delta > 0")

        source = merged["spin_source"]
        _require(source in ("seeded", "explicit"), "spin_source",
                 f"must be seeded or explicit, got {source!r}")
        spin_a = spin_b = None
        if source == "explicit":
            spin_a = _spin_array(merged["spin_a"], "spin_a", n_atoms)
            spin_b = _spin_array(merged["spin_b"], "spin_b", n_atoms)
            norms = np.abs(spin_a) ** 2 + np.abs(spin_b) ** 2
            _require(bool(np.all(np.abs(norms - 1.0) <= 1e-12)), "spin_b",
                     "per-site |a|^2 + |b|^2 must equal 1")
        else:
            _require(merged["spin_a"] is None and merged["spin_b"] is None,
                     "spin_a", "only allowed with spin_source = \"explicit\"")

        t_max = _as_number(merged["t_max"], "t_max")
        _require(t_max > 0, "t_max", f"must be positive, got {t_max}")
        n_steps = _as_int(merged["n_steps"], "n_steps")
        _require(n_steps >= 1, "n_steps", f"must be >= 1, got {n_steps}")

        spacing = _as_number(merged["grid_spacing"], "grid_spacing")
        _require(0 < spacing <= 0.25, "grid_spacing",
                 f"must lie in (0, 0.25], got {spacing}")
        nsigma = _as_number(merged["grid_nsigma"], "grid_nsigma")
        _require(nsigma > 0, "grid_nsigma", f"must be positive, got {nsigma}")
        avg_samples = _as_int(merged["avg_samples"], "avg_samples")
        _require(avg_samples >= 64, "avg_samples", f"must be >= 64, got {avg_samples}")

        seed = _as_int(merged["seed"], "seed")
        _require(0 <= seed < 2**64, "seed", f"must fit in u64, got {seed}")
        workers = _as_int(merged["workers"], "workers")
        _require(workers >= 1, "workers", f"must be >= 1, got {workers}")

        axis = merged["sweep_axis"]
        values = merged["sweep_values"]
        limit = _as_int(merged["sweep_limit"], "sweep_limit")
        _require(limit >= 1, "sweep_limit", f"must be >= 1, got {limit}")
        if axis is not None:
            _require(axis in SWEEP_AXES, "sweep_axis",
                     f"must be one of {list(SWEEP_AXES)}, got {axis!r}")
            _require(isinstance(values, list) and len(values) > 0,
                     "sweep_values", "must be a nonempty list when sweep_axis is set")
            _require(len(values) <= limit, "sweep_values",
                     f"{len(values)} points exceed sweep_limit = {limit}")
            _require(len(set(map(repr, values))) == len(values),
                     "sweep_values", "values must be distinct")
        else:
            _require(values is None, "sweep_values",
                     "set sweep_axis to use sweep_values")

        out_dir = merged["out_dir"] or f"runs/{study}"
        _require(isinstance(out_dir, str) and out_dir != "", "out_dir",
                 "must be a nonempty path string")
        _require(isinstance(merged["emit_wigner_bin"], bool), "emit_wigner_bin",
                 f"must be true or false, got {merged['emit_wigner_bin']!r}")

        tolerances = {k: _as_number(v, k) for k, v in merged.items()
                      if k.startswith("tol_")}

        return cls(
            study=study, params=params, alpha=alpha, phi=phi, fock_k=fock_k,
            initial_state=initial, spin_source=source, spin_a=spin_a,
            spin_b=spin_b, t_max=t_max, n_steps=n_steps, grid_spacing=spacing,
            grid_nsigma=nsigma, avg_samples=avg_samples, seed=seed,
            workers=workers, out_dir=out_dir,
            emit_wigner_bin=bool(merged["emit_wigner_bin"]),
            sweep_axis=axis, sweep_values=tuple(values) if values else None,
            sweep_limit=limit, tolerances=tolerances,
        )

    def resolved(self) -> dict[str, Any]:
        """Flat JSON-ready echo of every knob, defaults included."""

        def pairs(arr):
            return None if arr is None else [[z.real, z.imag] for z in arr]

        out = {
            "study": self.study,
            "omega": self.params.omega,
            "delta": self.params.delta,
            "g": self.params.g,
            "n_atoms": self.params.n_atoms,
            "alpha": self.alpha,
            "phi": self.phi,
            "fock_k": self.fock_k,
            "initial_state": self.initial_state,
            "spin_source": self.spin_source,
            "spin_a": pairs(self.spin_a),
            "spin_b": pairs(self.spin_b),
            "t_max": self.t_max,
            "n_steps": self.n_steps,
            "grid_spacing": self.grid_spacing,
            "grid_nsigma": self.grid_nsigma,
            "avg_samples": self.avg_samples,
            "seed": self.seed,
            "workers": self.workers,
            "out_dir": self.out_dir,
            "emit_wigner_bin": self.emit_wigner_bin,
            "sweep_axis": self.sweep_axis,
            "sweep_values": list(self.sweep_values) if self.sweep_values else None,
            "sweep_limit": self.sweep_limit,
        }
        out.update(self.tolerances)
        return out

    def point(self, value: Any, out_dir: str) -> "ScenarioConfig":
        """Single sweep point: axis value substituted, sweep fields cleared."""
        raw = self.resolved()
        raw[self.sweep_axis] = value
        raw["sweep_axis"] = None
        raw["sweep_values"] = None
        raw["out_dir"] = out_dir
        return ScenarioConfig.from_mapping(raw)


@dataclass(frozen=True)
class RunRecord:
    config: ScenarioConfig
    columns: tuple[str, ...]
    rows: list[tuple]
    summary: dict[str, Any]
    convergence_flags: tuple[str, ...]
    wall_time_s: float
    manifest: dict[str, int]
    out_dir: str


# ---------------------------------------------------------------- output

def _fmt_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        raise TypeError("no boolean CSV cells")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def _csv_bytes(columns, rows) -> bytes:
    lines = [",".join(columns)]
    lines.extend(",".join(_fmt_cell(v) for v in row) for row in rows)
    return ("\n".join(lines) + "\n").encode("utf-8")


def _jsonable(obj: Any) -> Any:
    """Strict-JSON form: numpy scalars unwrapped, non-finite floats null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _json_bytes(obj: Any) -> bytes:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2,
                      ensure_ascii=False, allow_nan=False)
    return (text + "\n").encode("utf-8")


def _time_grid(config: ScenarioConfig) -> np.ndarray:
    return np.linspace(0.0, config.t_max, config.n_steps + 1)


def _initial_field(config: ScenarioConfig, ncut: int) -> FieldState:
    """vacuum, the cat, or the model's (|0> + |k>)/sqrt2 superposition."""
    if config.initial_state == "cat":
        return cat_state(config.alpha, config.phi, ncut)[0]
    amps = np.zeros(ncut + 1, dtype=complex)
    k = config.fock_k if config.initial_state == "fock" else 0
    if k == 0:
        amps[0] = 1.0
    else:
        amps[0] = amps[k] = 1.0 / math.sqrt(2.0)
    return FieldState(amps)


@dataclass
class _StudyResult:
    columns: tuple[str, ...]
    rows: list[tuple]
    summary: dict[str, Any]
    artifacts: list[tuple[str, Callable[[Path], None]]]
    flags: list[str]


# ---------------------------------------------------------------- studies

def _study_spin_classical(config: ScenarioConfig) -> _StudyResult:
    # Seeded mode draws ONE site and tiles it: the declared N-sweep
    # aggregate measures the fluctuation-ratio slope at identical per-site
    # coefficients, which is where the -1/2 law is exact.
    p = config.params
    if config.spin_source == "explicit":
        spec = ProductSpinSpec(config.spin_a, config.spin_b)
    else:
        site = random_spec(1, np.random.default_rng(config.seed))
        spec = ProductSpinSpec(np.repeat(site.a, p.n_atoms),
                               np.repeat(site.b, p.n_atoms))
    brute_ok = p.n_atoms <= BRUTE_FORCE_LIMIT
    rows = []
    worst_dev = 0.0
    worst_ehr = 0.0
    for t in _time_grid(config):
        m = sigma_moments_closed(spec, p.delta, t)
        if brute_ok:
            b = sigma_moments_bruteforce(spec, p.delta, t)
            dev = max(abs(x - y) for x, y in zip(m, b))
            worst_dev = max(worst_dev, dev)
        else:
            dev = math.nan
        ratio = math.sqrt(m.var_x) / abs(m.mean_x) if m.mean_x != 0 else math.nan
        worst_ehr = max(worst_ehr, *ehrenfest_residual(spec, p.delta, t, h=1e-5))
        rows.append((t, m.mean_x, m.mean_y, m.mean_z,
                     m.var_x, m.var_y, m.var_z, ratio, dev))
    first = rows[0]
    summary = {
        "xi": spec.xi,
        "xi_prime": spec.xi_prime,
        "fluctuation_ratio_t0": first[7],
        "brute_max_deviation": worst_dev if brute_ok else None,
        "ehrenfest_max_residual": worst_ehr,
    }
    cols = ("t", "mean_x", "mean_y", "mean_z", "var_x", "var_y", "var_z",
            "fluctuation_ratio", "closed_vs_brute_max_dev")
    return _StudyResult(cols, rows, summary, [], [])


def _leading_vs_exact(config: ScenarioConfig, leading):
    """Shared cat/fock pipeline: exact joint evolution stepped along the
    grid against the closed leading-order field, fidelity per step."""
    p = config.params
    ncut = choose_cutoff(p, config.t_max, config.alpha, config.fock_k)
    spec = build_hamiltonian(p, ncut)
    state = JointState.from_product(_initial_field(config, ncut),
                                    chi_state(p.n_atoms), p)
    chi = chi_state(p.n_atoms)
    ts = _time_grid(config)
    dt = config.t_max / config.n_steps
    rows = []
    for i, t in enumerate(ts):
        if i:
            state = evolve_exact(state, dt, spec)
        proj = project_chi(state, chi)
        lead = leading(p, t, ncut)
        rows.append((t, fidelity(lead, proj),
                     float(np.linalg.norm(proj.amplitudes) ** 2),
                     abs(state.norm - 1.0)))
    tol_tail = config.tolerances.get("tol_tail", 1e-8)
    flags = []
    tail = state.tail_mass()
    if tail > tol_tail:
        flags.append(f"fock tail mass {tail:.3e} above {tol_tail:.1e} at t_max")
    fids = [r[1] for r in rows]
    summary = {
        "ncut": ncut,
        "min_fidelity": min(fids),
        "final_fidelity": fids[-1],
        "max_norm_drift": max(r[3] for r in rows),
        "final_tail_mass": tail,
    }
    cols = ("t", "fidelity_vs_exact", "chi_weight", "norm_drift")
    return _StudyResult(cols, rows, summary, [], flags)


def _study_cat(config: ScenarioConfig) -> _StudyResult:
    def leading(p, t, ncut):
        return evolve_cat_leading(p, config.alpha, config.phi, t, ncut)
    return _leading_vs_exact(dataclasses.replace(config, initial_state="cat"),
                             leading)


def _study_fock(config: ScenarioConfig) -> _StudyResult:
    def leading(p, t, ncut):
        return evolve_fock_leading(p, config.fock_k, t, ncut)
    cfg = dataclasses.replace(config, initial_state="fock", alpha=0.0)
    return _leading_vs_exact(cfg, leading)


def _study_wigner(config: ScenarioConfig) -> _StudyResult:
    p = config.params
    a, ph = config.alpha, config.phi
    # cover every branch center the window visits
    centers = []
    for t in np.linspace(0.0, config.t_max, 65):
        fr = frame(p, a, ph, t)
        rot = np.exp(-1j * p.omega * t)
        centers.append(fr.beta_prime + a * np.exp(1j * ph) * rot)
        centers.append(fr.beta_prime + a * np.exp(-1j * ph) * rot)
    grid = default_grid(centers, spacing=config.grid_spacing,
                        nsigma=config.grid_nsigma)

    rows = []
    for t in _time_grid(config):
        w = w_int_closed(p, a, ph, t, grid)
        rows.append((t, w.sup_norm(), interference_phase_offset(p, a, ph, t),
                     fit_interference_offset(w, p, a, ph, t)))

    averaged, report = time_average(
        lambda t: w_int_closed(p, a, ph, t, grid),
        (0.0, config.t_max), config.avg_samples)
    flags = []
    if not report.converged:
        flags.append(f"time average not converged: change {report.max_change:.3e} "
                     f"after {report.doublings} doublings")

    ncut = choose_cutoff(p, config.t_max, a, 0)
    cat0, norm0 = cat_state(a, ph, ncut)
    w_full = wigner_numeric(cat0, grid)
    X, P = grid.meshgrid()
    branches = np.zeros_like(X)
    for gamma in (a * np.exp(1j * ph), a * np.exp(-1j * ph)):
        xb, pb = math.sqrt(2) * gamma.real, math.sqrt(2) * gamma.imag
        branches += (1.0 / math.pi) * np.exp(-((X - xb) ** 2) - (P - pb) ** 2)
    vis = fringe_visibility(w_full, grid.with_values(norm0**2 * branches))

    summary = {
        "grid_nx": grid.nx,
        "grid_np": grid.np,
        "sup_averaged": averaged.sup_norm(),
        "average_report": dataclasses.asdict(report),
        "zero_crossings_per_period": count_time_zero_crossings(p, a, ph),
        "visibility_t0": vis,
        "ncut": ncut,
    }
    name = "wigner_avg.wgrd" if config.emit_wigner_bin else "wigner_avg.csv"
    writer = save_wgrd if config.emit_wigner_bin else save_csv
    artifacts = [(name, lambda path: writer(averaged, path))]
    cols = ("t", "sup_w_int", "offset_closed", "offset_fit")
    return _StudyResult(cols, rows, summary, artifacts, flags)


def _study_dyson_scaling(config: ScenarioConfig) -> _StudyResult:
    p = config.params
    ncut = choose_cutoff(p, config.t_max,
                         config.alpha if config.initial_state == "cat" else 0.0,
                         config.fock_k if config.initial_state == "fock" else 0)
    initial = _initial_field(config, ncut)
    flags = []
    rows = []
    first_at_tmax = math.nan
    for t in _time_grid(config):
        rec = first_order_correction(p, t, initial)
        if not rec.converged:
            flags.append(f"first-order quadrature not converged at t={t:.17g}")
        rows.append((1, p.n_atoms, t, rec.amplitude_norm,
                     rec.diagnostics["error_estimate"]))
        first_at_tmax = rec.amplitude_norm
    second = second_order_correction(p, config.t_max, initial)
    if not second.converged:
        flags.append(f"second-order quadrature not converged at t={config.t_max:.17g}")
    rows.append((2, p.n_atoms, config.t_max, second.amplitude_norm,
                 second.diagnostics["error_estimate"]))
    summary = {
        "ncut": ncut,
        "oscillatory_abs": abs(oscillatory_integral(p, config.t_max)),
        "first_amplitude": first_at_tmax,
        "second_amplitude": second.amplitude_norm,
        "ratio_second_first": (second.amplitude_norm / first_at_tmax
                               if first_at_tmax else math.nan),
    }
    cols = ("order", "N", "t", "amplitude_norm", "quadrature_error")
    return _StudyResult(cols, rows, summary, [], flags)


def _study_convergence(config: ScenarioConfig) -> _StudyResult:
    p = config.params
    ncut = choose_cutoff(p, config.t_max, config.alpha, 0)
    spec = build_hamiltonian(p, ncut)
    field0, _ = cat_state(config.alpha, config.phi, ncut)
    chi = chi_state(p.n_atoms)
    state = JointState.from_product(field0, chi, p)
    dt = config.t_max / config.n_steps
    rows = []
    for i, t in enumerate(_time_grid(config)):
        if i:
            state = evolve_exact(state, dt, spec)
        proj = project_chi(state, chi)
        lead = evolve_cat_leading(p, config.alpha, config.phi, t, ncut)
        weight = float(np.linalg.norm(proj.amplitudes) ** 2)
        residual = float(np.linalg.norm(proj.amplitudes - lead.amplitudes))
        infid = 1.0 - fidelity(lead, proj) if weight > 0 else math.nan
        rows.append((t, weight, 1.0 - weight, residual, infid))

    corr = first_order_correction(p, config.t_max, field0)
    flags = []
    if not corr.converged:
        flags.append(f"first-order quadrature not converged at t={config.t_max:.17g}")
    lead = evolve_cat_leading(p, config.alpha, config.phi, config.t_max, ncut)
    pred = np.outer(lead.amplitudes, chi.to_basis("X").amplitudes)
    r_lead = float(np.linalg.norm(state.amplitudes - pred))
    pred = pred + np.outer(corr.field_correction.amplitudes,
                           chi_prime_state(p.n_atoms).to_basis("X").amplitudes)
    r_corr = float(np.linalg.norm(state.amplitudes - pred))
    last = rows[-1]
    summary = {
        "ncut": ncut,
        "deficit": last[2],
        "residual_leading": r_lead,
        "residual_corrected": r_corr,
        "correction_gain": r_lead / r_corr if r_corr else math.inf,
        "infidelity": last[4],
    }
    cols = ("t", "chi_weight", "norm_deficit", "residual", "infidelity")
    return _StudyResult(cols, rows, summary, [], flags)


_STUDIES = {
    "spin-classical": _study_spin_classical,
    "cat": _study_cat,
    "fock": _study_fock,
    "wigner": _study_wigner,
    "dyson-scaling": _study_dyson_scaling,
    "convergence": _study_convergence,
}


# ---------------------------------------------------------------- drivers

def run_scenario(config: ScenarioConfig) -> RunRecord:
    """Execute one study, write its artifacts, return the run record.

    The CSV body depends only on the resolved config; wall time appears
    only in the JSON record.
    """
    start = time.perf_counter()
    result = _STUDIES[config.study](config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    manifest: dict[str, int] = {}
    csv_name = f"{config.study}.csv"
    body = _csv_bytes(result.columns, result.rows)
    (out / csv_name).write_bytes(body)
    manifest[csv_name] = len(body)
    for name, write in result.artifacts:
        write(out / name)
        manifest[name] = (out / name).stat().st_size

    wall = time.perf_counter() - start
    record = RunRecord(
        config=config, columns=result.columns, rows=result.rows,
        summary=result.summary, convergence_flags=tuple(result.flags),
        wall_time_s=wall, manifest=dict(manifest), out_dir=str(out),
    )
    (out / "record.json").write_bytes(_json_bytes({
        "config": config.resolved(),
        "summary": result.summary,
        "convergence_flags": list(record.convergence_flags),
        "manifest": manifest,
        "wall_time_s": wall,
    }))
    return record


def _point_dir_name(axis: str, value: Any) -> str:
    token = re.sub(r"[^0-9a-zA-Z]+",
                   lambda m: {"-": "m", ".": "p"}.get(m.group(0), "_"),
                   repr(value))
    return f"{axis}_{token}"


def _sweep_aggregates(study: str, axis: str, points) -> dict[str, Any]:
    """scaling_fit wherever the study declares a power law on this axis."""
    wanted = {
        ("spin-classical", "n_atoms"): [("fluctuation", "fluctuation_ratio_t0")],
        ("wigner", "n_atoms"): [("washout", "sup_averaged")],
        ("dyson-scaling", "n_atoms"): [("first_order", "first_amplitude"),
                                       ("second_order", "second_amplitude"),
                                       ("integral", "oscillatory_abs")],
        ("convergence", "delta"): [("deficit", "deficit"),
                                   ("residual", "residual_leading")],
    }.get((study, axis), [])
    out: dict[str, Any] = {}
    for name, key in wanted:
        try:
            fit = scaling_fit([(v, s[key]) for v, s in points])
        except ThermolimError as exc:
            out[f"fit_error_{name}"] = str(exc)
        else:
            out[f"exponent_{name}"] = fit["exponent"]
            out[f"r_squared_{name}"] = fit["r_squared"]
    return out


def run_sweep(config: ScenarioConfig) -> tuple[list[RunRecord | None], dict]:
    """Evaluate every sweep point (possibly concurrently) and write the
    aggregate JSON.

    Points are keyed and merged by axis value, so neither the worker
    count nor the order the values were written in the config can change
    any output byte.  A failed point is recorded and the aggregate is
    marked partial; the other points still run.
    """
    out = Path(config.out_dir)
    if config.sweep_axis is None:
        record = run_scenario(config)
        aggregate = {
            "study": config.study, "axis": None, "partial": False,
            "points": [{"value": None, "out_dir": record.out_dir,
                        "summary": record.summary,
                        "flags": list(record.convergence_flags)}],
            "aggregates": {},
        }
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.json").write_bytes(_json_bytes(aggregate))
        return [record], aggregate

    values = sorted(config.sweep_values)
    dirs = [str(out / _point_dir_name(config.sweep_axis, v)) for v in values]

    def attempt(point):
        value, pdir = point
        try:
            return run_scenario(config.point(value, pdir)), None
        except ThermolimError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        outcomes = list(pool.map(attempt, zip(values, dirs)))

    records = [rec for rec, _ in outcomes]
    entries = []
    fit_points = []
    partial = False
    for value, pdir, (rec, err) in zip(values, dirs, outcomes):
        entry: dict[str, Any] = {"value": value, "out_dir": pdir}
        if rec is None:
            entry["error"] = err
            partial = True
        else:
            entry["summary"] = rec.summary
            entry["flags"] = list(rec.convergence_flags)
            fit_points.append((value, rec.summary))
        entries.append(entry)

    aggregate = {
        "study": config.study,
        "axis": config.sweep_axis,
        "partial": partial,
        "points": entries,
        "aggregates": _sweep_aggregates(config.study, config.sweep_axis,
                                        fit_points),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_bytes(_json_bytes(aggregate))
    return records, aggregate
