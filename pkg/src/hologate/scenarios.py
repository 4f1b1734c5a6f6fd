"""Declarative scenario runner: one config in, one machine-readable table out.

Each scenario reproduces one study as a CSV table: benchmark fidelity curves
(full vs effective model), excitation-number populations, waveform-robustness
grids, parameter-error sweeps, interaction-jitter and thermal Monte Carlo
averages, the four-level pumping-chain check, the pulse-shape landscape and
open-system average gate fidelities.

Configs are JSON with sections ``system``, ``pulse``, ``noise``,
``integrator``, ``sweep`` plus a scenario name, a master seed and an output
path.  Unknown keys are rejected.  All frequencies in configs are ordinary
(non-angular) MHz unless the key says otherwise; lengths are um, times us.

Randomness is counter-based and splittable: the noise seed of sweep point p
is derived from (master seed, scenario id, p), and realization i within a
point is a pure function of that seed and i, so adding sweep points or
realizations never perturbs existing draws.  Rows are emitted in point order
regardless of worker scheduling, making output files byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import __version__
from .dynamics import (
    K_EFF_DEFAULT,
    RB87_MASS,
    IntegratorSettings,
    NoiseSpec,
    apply_noise,
    channels_for_model,
    evolve_lindblad,
    evolve_schrodinger,
    sample_noise,
)
from .hilbert import DensityMatrix, SiteDims, StateVector
from .metrics import (
    average_gate_fidelity,
    benchmark_initial_state,
    computational_indices,
    excitation_populations,
    level_population,
    overlap_fidelity,
    state_fidelity,
)
from .model import (
    GateSpec,
    LevelScheme,
    Placement,
    SystemModel,
    TwoPhotonParams,
    build_geometry,
    build_interactions,
    effective_hamiltonian_terms,
    full_hamiltonian_terms,
    ideal_gate_unitary,
    make_gate_model,
    two_photon_terms,
)
from .pulse import OhqcParams, PhaseSchedule, nhqc_waveform, ohqc_waveform, \
    pulse_area_product, scan_landscape

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Invalid scenario configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------------------
# configuration schema

_SYSTEM_DEFAULTS = {
    "n_controls": 1,
    "ring_radius_um": 3.8,
    "placement": "uniform_ring",
    "chord_um": 2.0,
    "c6_GHz_um6": 858.4,
    "control_amp_MHz": 40.0,
    "modulation_MHz": None,  # null -> match the control-target coupling
    "theta_over_pi": 0.5,
    "phi_over_pi": 0.0,
    "gamma_over_pi": 1.0,
}

_PULSE_DEFAULTS = {
    "kind": "nhqc",
    "rabi_MHz": 1.0,   # rectangular amplitude
    "peak_MHz": 1.0,   # shaped-pulse peak
    "a1": 0.28,
    "a2": -0.12,
}

_NOISE_DEFAULTS = {
    "delta_T_rel": 0.0,
    "delta_omega_t_rel": 0.0,
    "delta_omega_t_kHz": 0.0,
    "delta_omega0_MHz": 0.0,
    "delta_Delta_rel": 0.0,
    "delta_omega_mod_MHz": 0.0,
    "delta_V_rel": 0.0,
    "temperature_uK": 0.0,
    "k_eff_rad_per_um": K_EFF_DEFAULT,
    "atom_mass_kg": RB87_MASS,
    "tau_us": None,  # null -> no decay
    "gamma_phi_kHz": 0.0,
    "spin_echo": False,
    "realizations": 1,
}

_INTEGRATOR_DEFAULTS = {
    "rel_tol": 1e-7,
    "abs_tol": 1e-9,
    "max_step_us": None,
    "min_step_us": 1e-12,
    "initial_step_us": 1e-4,
}

_TWO_PHOTON_DEFAULTS = {
    "omega_cp_MHz": 400.0,
    "omega_cr_MHz": 400.0,
    "omega_0r_MHz": 60.0 / math.sqrt(2),
    "omega_1r_MHz": 60.0 / math.sqrt(2),
    "delta_c_GHz": 2.0,
    "delta_0_GHz": 1.8 / math.sqrt(2),
    "delta_1_GHz": 1.8 / math.sqrt(2),
    "stark_shifts_enabled": False,
}

_TOP_DEFAULTS = {
    "scenario": None,
    "system": _SYSTEM_DEFAULTS,
    "pulse": _PULSE_DEFAULTS,
    "noise": _NOISE_DEFAULTS,
    "integrator": _INTEGRATOR_DEFAULTS,
    "two_photon": _TWO_PHOTON_DEFAULTS,
    "sweep": {},
    "hamiltonian": None,  # null -> scenario default ('full' or 'effective')
    "curve_points": 201,
    "output": None,
    "seed": 12345,
    "threads": 1,
}

_NUMERIC = (int, float)


def _merge_section(name, defaults, raw, errors):
    out = dict(defaults)
    if raw is None:
        return out
    if not isinstance(raw, dict):
        errors.append(f"section {name!r} must be an object")
        return out
    for key, value in raw.items():
        if key not in defaults:
            errors.append(f"unknown key {name}.{key}")
            continue
        default = defaults[key]
        if isinstance(default, bool):
            if not isinstance(value, bool):
                errors.append(f"{name}.{key} must be a boolean")
                continue
        elif isinstance(default, str):
            if not isinstance(value, str):
                errors.append(f"{name}.{key} must be a string")
                continue
        else:  # numeric or nullable-numeric
            bad = isinstance(value, bool) or (
                value is not None and not isinstance(value, _NUMERIC))
            if bad:
                errors.append(f"{name}.{key} must be a number")
                continue
        out[key] = value
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated, fully defaulted configuration for one scenario run."""

    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def scenario(self) -> str:
        return self.data["scenario"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def hash(self) -> str:
        payload = {k: v for k, v in self.data.items() if k not in ("output", "threads")}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def validate_config(raw) -> tuple[ScenarioConfig, list[str]]:
    """Parse and validate a raw config (JSON text or dict).

    Returns (config, warnings); raises ConfigError listing every problem.
    Warnings flag violated scale hierarchies (modulation vs control dressing,
    control dressing vs target drive).
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config is not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])

    errors: list[str] = []
    merged = {}
    for key in raw:
        if key not in _TOP_DEFAULTS:
            errors.append(f"unknown key {key}")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        errors.append(
            f"scenario must be one of {sorted(SCENARIOS)}, got {scenario!r}")
    merged["scenario"] = scenario
    for section in ("system", "pulse", "noise", "integrator", "two_photon"):
        merged[section] = _merge_section(section, _TOP_DEFAULTS[section],
                                         raw.get(section), errors)
    for key in ("curve_points", "seed", "threads"):
        value = raw.get(key, _TOP_DEFAULTS[key])
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            errors.append(f"{key} must be a positive integer")
        merged[key] = value
    merged["output"] = raw.get("output")
    merged["hamiltonian"] = raw.get("hamiltonian")
    if merged["hamiltonian"] not in (None, "full", "effective"):
        errors.append("hamiltonian must be 'full' or 'effective'")
    sweep = raw.get("sweep", {})
    if not isinstance(sweep, dict):
        errors.append("sweep must be an object")
        sweep = {}
    merged["sweep"] = sweep

    if merged["pulse"].get("kind") not in ("nhqc", "ohqc"):
        errors.append("pulse.kind must be 'nhqc' or 'ohqc'")
    if merged["system"].get("placement") not in ("uniform_ring", "adjacent_chord"):
        errors.append("system.placement must be 'uniform_ring' or 'adjacent_chord'")
    if scenario in SCENARIOS and not errors:
        allowed = SCENARIOS[scenario].sweep_keys
        for key in sweep:
            if key not in allowed:
                errors.append(
                    f"unknown sweep key {key!r} for scenario {scenario} "
                    f"(allowed: {sorted(allowed)})")
    if errors:
        raise ConfigError(errors)

    cfg = ScenarioConfig(merged)
    return cfg, _hierarchy_warnings(cfg)


def _hierarchy_warnings(cfg: ScenarioConfig) -> list[str]:
    sys_c = cfg["system"]
    n = sys_c["n_controls"]
    control_amp = sys_c["control_amp_MHz"]
    modulation = sys_c["modulation_MHz"]
    if modulation is None:
        modulation = sys_c["c6_GHz_um6"] * 1e3 / sys_c["ring_radius_um"] ** 6
    pulse = cfg["pulse"]
    target_peak = pulse["rabi_MHz"] if pulse["kind"] == "nhqc" else pulse["peak_MHz"]
    out = []
    if modulation < math.sqrt(max(n, 1)) * control_amp:
        out.append(
            f"weak-hierarchy warning: modulation {modulation:.3g} MHz is not >> "
            f"sqrt(N)*control_amp/4 = {math.sqrt(n) * control_amp / 4:.3g} MHz")
    if control_amp / 2 < 4 * target_peak:
        out.append(
            f"weak-hierarchy warning: control_amp/2 = {control_amp / 2:.3g} MHz "
            f"is not >> target drive {target_peak:.3g} MHz")
    return out


def _sweep_values(spec, default):
    if spec is None:
        spec = default
    if isinstance(spec, dict):
        keys = set(spec)
        if keys != {"start", "stop", "points"}:
            raise ConfigError([f"sweep range needs start/stop/points, got {sorted(keys)}"])
        return [float(x) for x in np.linspace(spec["start"], spec["stop"], int(spec["points"]))]
    if isinstance(spec, (list, tuple)):
        return [float(x) for x in spec]
    if isinstance(spec, _NUMERIC):
        return [float(spec)]
    raise ConfigError([f"cannot interpret sweep values {spec!r}"])


# ---------------------------------------------------------------------------
# model assembly from configs


def _gate_from_config(cfg: ScenarioConfig, n_controls=None) -> GateSpec:
    s = cfg["system"]
    return GateSpec(
        int(s["n_controls"] if n_controls is None else n_controls),
        s["theta_over_pi"] * math.pi,
        s["phi_over_pi"] * math.pi,
        s["gamma_over_pi"] * math.pi,
    )


def _pulse_from_config(cfg: ScenarioConfig, gate: GateSpec, kind=None,
                       peak_MHz=None):
    p = cfg["pulse"]
    kind = kind or p["kind"]
    if kind == "nhqc":
        rabi = TWO_PI * p["rabi_MHz"]
        omega_fn, delta_fn, schedule = nhqc_waveform(rabi, gate.gamma, gate.phi)
        return omega_fn, delta_fn, schedule, rabi
    peak = TWO_PI * (p["peak_MHz"] if peak_MHz is None else peak_MHz)
    params = OhqcParams.from_peak(p["a1"], p["a2"], peak)
    omega_fn, delta_fn = ohqc_waveform(params)
    schedule = PhaseSchedule(params.gate_time, gate.gamma, gate.phi)
    return omega_fn, delta_fn, schedule, peak


def _model_from_config(cfg: ScenarioConfig, n_controls=None, scheme=None,
                       pulse_kind=None, peak_MHz=None,
                       control_amp_MHz=None) -> SystemModel:
    s = cfg["system"]
    gate = _gate_from_config(cfg, n_controls)
    omega_fn, delta_fn, schedule, peak = _pulse_from_config(
        cfg, gate, pulse_kind, peak_MHz)
    placement = Placement(s["placement"])
    chord = s["chord_um"] if placement is Placement.ADJACENT_CHORD else None
    modulation = None if s["modulation_MHz"] is None else TWO_PI * s["modulation_MHz"]
    return make_gate_model(
        gate,
        omega_fn,
        delta_fn,
        schedule,
        peak_amp=peak,
        control_amp=TWO_PI * (s["control_amp_MHz"] if control_amp_MHz is None
                              else control_amp_MHz),
        scheme=scheme,
        ring_radius=s["ring_radius_um"],
        placement=placement,
        chord_spacing=chord,
        c6=TWO_PI * 1e3 * s["c6_GHz_um6"],
        modulation=modulation,
    )


def _noise_from_config(cfg: ScenarioConfig, seed: int, **overrides) -> NoiseSpec:
    n = dict(cfg["noise"])
    n.update(overrides)
    tau = n["tau_us"]
    return NoiseSpec(
        delta_T_rel=n["delta_T_rel"],
        delta_omega_t_rel=n["delta_omega_t_rel"],
        delta_omega_t_abs=TWO_PI * 1e-3 * n["delta_omega_t_kHz"],
        delta_omega0_abs=TWO_PI * n["delta_omega0_MHz"],
        delta_Delta_rel=n["delta_Delta_rel"],
        delta_omega_mod=TWO_PI * n["delta_omega_mod_MHz"],
        delta_V_bound=n["delta_V_rel"],
        temperature=n["temperature_uK"],
        k_eff=n["k_eff_rad_per_um"],
        atom_mass=n["atom_mass_kg"],
        tau_rydberg=math.inf if tau is None else float(tau),
        gamma_phi=TWO_PI * 1e-3 * n["gamma_phi_kHz"],
        spin_echo=bool(n["spin_echo"]),
        realizations=int(n["realizations"]),
        seed=int(seed),
    )


def _integrator_from_config(cfg: ScenarioConfig) -> IntegratorSettings:
    i = cfg["integrator"]
    return IntegratorSettings(
        rel_tol=i["rel_tol"],
        abs_tol=i["abs_tol"],
        max_step=math.inf if i["max_step_us"] is None else i["max_step_us"],
        min_step=i["min_step_us"],
        initial_step=i["initial_step_us"],
    )


def _point_seed(master_seed: int, scenario: str, point_index: int) -> int:
    scn_idx = sorted(SCENARIOS).index(scenario)
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(scn_idx, int(point_index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def ideal_final_state(psi0: StateVector, gate: GateSpec,
                      scheme: LevelScheme) -> StateVector:
    """Image of a computational state under the ideal controlled rotation."""
    comp = computational_indices(psi0.dims, scheme)
    outside = np.delete(np.abs(psi0.amps), comp)
    if outside.size and outside.max() > 1e-12:
        raise ValueError("initial state has support outside the qubit subspace")
    amps = np.zeros_like(psi0.amps)
    amps[comp] = ideal_gate_unitary(gate) @ psi0.amps[comp]
    return StateVector(psi0.dims, amps)


# ---------------------------------------------------------------------------
# core simulations (module-level for picklability)


def _benchmark_fidelity(cfg_data: dict, *, n_controls=None, which=None,
                        pulse_kind=None, peak_MHz=None, control_amp_MHz=None,
                        noise_overrides=None, realization=0, point_index=0,
                        scheme_name="three_level", curve=False):
    """Final (or curve of) benchmark-state fidelity for one realization.

    Closed-system when the noise spec carries no decay/dephasing, otherwise a
    master-equation run with the standard decay branching plus dephasing.
    """
    cfg = ScenarioConfig(cfg_data)
    scheme = {"three_level": LevelScheme.three_level,
              "four_level_loss": LevelScheme.four_level_loss}[scheme_name]()
    model = _model_from_config(cfg, n_controls=n_controls, scheme=scheme,
                               pulse_kind=pulse_kind, peak_MHz=peak_MHz,
                               control_amp_MHz=control_amp_MHz)
    spec = _noise_from_config(cfg, _point_seed(cfg.seed, cfg.scenario, point_index),
                              **(noise_overrides or {}))
    model = apply_noise(model, sample_noise(spec, realization, model.n_atoms))
    which = which or cfg["hamiltonian"] or "full"
    terms = full_hamiltonian_terms(model) if which == "full" \
        else effective_hamiltonian_terms(model)
    settings = _integrator_from_config(cfg)
    psi0 = benchmark_initial_state(model.n_controls, scheme)
    psi_ideal = ideal_final_state(psi0, model.gate, scheme)
    t_end = model.total_time
    times = np.linspace(0.0, t_end, cfg["curve_points"]) if curve else None

    open_system = math.isfinite(spec.tau_rydberg) or spec.gamma_phi > 0
    if open_system:
        channels = channels_for_model(model, spec.tau_rydberg, spec.gamma_phi)
        traj = evolve_lindblad(terms, channels, DensityMatrix.from_state(psi0),
                               (0.0, t_end), settings, sample_times=times)
        fvals = [state_fidelity(psi_ideal, rho) for rho in traj.states]
    else:
        traj = evolve_schrodinger(terms, psi0, (0.0, t_end), settings,
                                  sample_times=times)
        fvals = [overlap_fidelity(psi_ideal, st) for st in traj.states]
    if curve:
        return np.asarray(traj.times), np.asarray(fvals)
    return float(fvals[-1])


def _mc_job(args):
    cfg_data, point_index, realization, kwargs = args
    value = _benchmark_fidelity(cfg_data, point_index=point_index,
                                realization=realization, **kwargs)
    return point_index, realization, value


def _mc_mean(cfg: ScenarioConfig, jobs: list, threads: int):
    """Run (point, realization) jobs and reduce to ordered per-point stats."""
    results: dict = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for p, r, v in pool.map(_mc_job, jobs, chunksize=1):
                results[(p, r)] = v
    else:
        for job in jobs:
            p, r, v = _mc_job(job)
            results[(p, r)] = v
    by_point: dict[int, list] = {}
    for (p, r), v in sorted(results.items()):
        by_point.setdefault(p, []).append(v)
    return by_point


# ---------------------------------------------------------------------------
# result table


@dataclass
class ResultTable:
    columns: list
    rows: list
    metadata: dict

    def to_csv_text(self) -> str:
        lines = [f"# {k}: {self.metadata[k]}" for k in sorted(self.metadata)]
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())

    def to_json_text(self) -> str:
        return json.dumps(
            {"metadata": self.metadata, "columns": self.columns,
             "rows": [list(r) for r in self.rows]},
            sort_keys=True, indent=1)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _table(cfg: ScenarioConfig, columns, rows, warnings=()) -> ResultTable:
    meta = {
        "scenario": cfg.scenario,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "version": __version__,
    }
    if warnings:
        meta["warnings"] = " | ".join(warnings)
    return ResultTable(list(columns), rows, meta)


# ---------------------------------------------------------------------------
# scenario implementations


def _run_full_vs_effective(cfg: ScenarioConfig, threads: int) -> ResultTable:
    times, f_full = _benchmark_fidelity(cfg.data, which="full", curve=True)
    _, f_eff = _benchmark_fidelity(cfg.data, which="effective", curve=True)
    rows = [(t, ff, fe) for t, ff, fe in zip(times, f_full, f_eff)]
    return _table(cfg, ["t_us", "fidelity_full", "fidelity_effective"], rows)


def _run_excitation_populations(cfg: ScenarioConfig, threads: int) -> ResultTable:
    scheme = LevelScheme.three_level()
    model = _model_from_config(cfg, scheme=scheme)
    terms = full_hamiltonian_terms(model)
    psi0 = benchmark_initial_state(model.n_controls, scheme)
    times = np.linspace(0.0, model.total_time, cfg["curve_points"])
    traj = evolve_schrodinger(terms, psi0, (0.0, model.total_time),
                              _integrator_from_config(cfg), sample_times=times)
    n_atoms = model.n_atoms
    rows = []
    for t, st in zip(traj.times, traj.states):
        pops = excitation_populations(st, scheme)
        target_r = level_population(st, scheme, n_atoms - 1)
        rows.append((t, *[float(p) for p in pops], target_r))
    cols = ["t_us"] + [f"p{k}" for k in range(n_atoms + 1)] + ["target_r"]
    return _table(cfg, cols, rows)


def _run_nhqc_vs_ohqc_grid(cfg: ScenarioConfig, threads: int) -> ResultTable:
    sweep = cfg["sweep"]
    d_t = _sweep_values(sweep.get("delta_T_rel"),
                        {"start": -0.1, "stop": 0.1, "points": 11})
    d_om = _sweep_values(sweep.get("delta_omega_rel"),
                         {"start": -0.1, "stop": 0.1, "points": 11})
    which = cfg["hamiltonian"] or "effective"
    jobs = []
    points = [(dt, dom) for dt in d_t for dom in d_om]
    for idx, (dt, dom) in enumerate(points):
        # realization slot doubles as the pulse-kind key within a point
        for k, kind in enumerate(("nhqc", "ohqc")):
            jobs.append((cfg.data, idx, k, {
                "which": which, "pulse_kind": kind,
                "noise_overrides": {"delta_T_rel": dt, "delta_omega_t_rel": dom},
            }))
    by_point = _mc_mean(cfg, jobs, threads)
    rows = []
    for idx, (dt, dom) in enumerate(points):
        f_nhqc, f_ohqc = by_point[idx]
        rows.append((dt, dom, f_nhqc, f_ohqc))
    return _table(cfg, ["delta_T_rel", "delta_omega_rel", "fidelity_nhqc",
                        "fidelity_ohqc"], rows)


def _run_lifetime_sweep(cfg: ScenarioConfig, threads: int) -> ResultTable:
    sweep = cfg["sweep"]
    taus = _sweep_values(sweep.get("tau_us"), [100.0, 200.0, 400.0, 800.0])
    d_om = _sweep_values(sweep.get("delta_omega_rel"),
                         {"start": -0.06, "stop": 0.06, "points": 7})
    which = cfg["hamiltonian"] or "effective"
    points = [(tau, dom) for tau in taus for dom in d_om]
    jobs = []
    for idx, (tau, dom) in enumerate(points):
        for k, kind in enumerate(("nhqc", "ohqc")):
            jobs.append((cfg.data, idx, k, {
                "which": which, "pulse_kind": kind,
                "scheme_name": "four_level_loss",
                "noise_overrides": {"tau_us": tau, "delta_omega_t_rel": dom},
            }))
    by_point = _mc_mean(cfg, jobs, threads)
    rows = []
    for idx, (tau, dom) in enumerate(points):
        f_nhqc, f_ohqc = by_point[idx]
        rows.append((tau, dom, f_nhqc, f_ohqc))
    return _table(cfg, ["tau_us", "delta_omega_rel", "fidelity_nhqc",
                        "fidelity_ohqc"], rows)


def _run_omega0_error(cfg: ScenarioConfig, threads: int) -> ResultTable:
    sweep = cfg["sweep"]
    ns = [int(n) for n in _sweep_values(sweep.get("n_controls"), [2.0, 3.0])]
    offsets = _sweep_values(sweep.get("delta_omega0_MHz"),
                            {"start": -0.1, "stop": 0.1, "points": 9})
    points = [(n, d) for n in ns for d in offsets]
    jobs = [(cfg.data, idx, 0, {
        "which": cfg["hamiltonian"] or "full", "pulse_kind": "ohqc",
        "n_controls": n, "noise_overrides": {"delta_omega0_MHz": d},
    }) for idx, (n, d) in enumerate(points)]
    by_point = _mc_mean(cfg, jobs, threads)
    rows = [(n, d, by_point[idx][0]) for idx, (n, d) in enumerate(points)]
    return _table(cfg, ["n_controls", "delta_omega0_MHz", "fidelity"], rows)


def _run_delta_error_echo(cfg: ScenarioConfig, threads: int) -> ResultTable:
    sweep = cfg["sweep"]
    ns = [int(n) for n in _sweep_values(sweep.get("n_controls"), [2.0])]
    offsets = _sweep_values(sweep.get("delta_Delta_rel"),
                            {"start": -0.1, "stop": 0.1, "points": 9})
    points = [(n, d) for n in ns for d in offsets]
    jobs = []
    for idx, (n, d) in enumerate(points):
        for k, echo in enumerate((False, True)):
            jobs.append((cfg.data, idx, k, {
                "which": cfg["hamiltonian"] or "full", "pulse_kind": "ohqc",
                "n_controls": n,
                "noise_overrides": {"delta_Delta_rel": d, "spin_echo": echo},
            }))
    by_point = _mc_mean(cfg, jobs, threads)
    rows = []
    for idx, (n, d) in enumerate(points):
        f_plain, f_echo = by_point[idx]
        rows.append((n, d, f_plain, f_echo))
    return _table(cfg, ["n_controls", "delta_Delta_rel", "fidelity_no_echo",
                        "fidelity_echo"], rows)


def _run_omega_mod_error(cfg: ScenarioConfig, threads: int) -> ResultTable:
    sweep = cfg["sweep"]
    ns = [int(n) for n in _sweep_values(sweep.get("n_controls"), [2.0, 3.0])]
    offsets = _sweep_values(sweep.get("delta_omega_mod_MHz"),
                            {"start": -5.0, "stop": 5.0, "points": 11})
    points = [(n, d) for n in ns for d in offsets]
    jobs = [(cfg.data, idx, 0, {
        "which": cfg["hamiltonian"] or "full", "pulse_kind": "ohqc",
        "n_controls": n, "noise_overrides": {"delta_omega_mod_MHz": d},
    }) for idx, (n, d) in enumerate(points)]
    by_point = _mc_mean(cfg, jobs, threads)
    rows = [(n, d, by_point[idx][0]) for idx, (n, d) in enumerate(points)]
    return _table(cfg, ["n_controls", "delta_omega_MHz", "fidelity"], rows)


def _run_n_scaling(cfg: ScenarioConfig, threads: int) -> ResultTable:
    sweep = cfg["sweep"]
    ns = [int(n) for n in _sweep_values(sweep.get("n_controls"),
                                        [1.0, 2.0, 3.0, 4.0, 5.0])]
    err = float(_sweep_values(sweep.get("error_rel"), 0.05)[0])
    points = list(ns)
    jobs = []
    for idx, n in enumerate(points):
        for k, dom in enumerate((0.0, err)):
            jobs.append((cfg.data, idx, k, {
                "which": cfg["hamiltonian"] or "full", "pulse_kind": "ohqc",
                "n_controls": n,
                "noise_overrides": {"delta_omega_t_rel": dom},
            }))
    by_point = _mc_mean(cfg, jobs, threads)
    rows = []
    for idx, n in enumerate(points):
        f0, f1 = by_point[idx]
        rows.append((n, f0, f1))
    return _table(cfg, ["n_controls", "fidelity_ideal", "fidelity_with_error"], rows)


def _run_rri_fluctuation(cfg: ScenarioConfig, threads: int) -> ResultTable:
    sweep = cfg["sweep"]
    amps = _sweep_values(sweep.get("control_amp_MHz"), [20.0, 40.0, 60.0])
    bounds = _sweep_values(sweep.get("delta_V_rel"),
                           {"start": 0.0, "stop": 0.2, "points": 6})
    n_real = int(cfg["noise"]["realizations"])
    points = [(a, b) for a in amps for b in bounds]
    jobs = []
    for idx, (amp, bound) in enumerate(points):
        for r in range(n_real):
            jobs.append((cfg.data, idx, r, {
                "which": cfg["hamiltonian"] or "full", "pulse_kind": "ohqc",
                "control_amp_MHz": amp,
                "noise_overrides": {"delta_V_rel": bound},
            }))
    by_point = _mc_mean(cfg, jobs, threads)
    rows = []
    for idx, (amp, bound) in enumerate(points):
        vals = np.array(by_point[idx])
        sem = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        rows.append((amp, bound, float(vals.mean()), sem))
    return _table(cfg, ["control_amp_MHz", "delta_V_rel", "mean_fidelity",
                        "sem_fidelity"], rows)


def _run_thermal(cfg: ScenarioConfig, threads: int) -> ResultTable:
    sweep = cfg["sweep"]
    peaks = _sweep_values(sweep.get("peak_MHz"), [1.0])
    temps = _sweep_values(sweep.get("temperature_uK"), [1.0, 5.0, 10.0, 20.0])
    n_real = int(cfg["noise"]["realizations"])
    points = [(p, T) for p in peaks for T in temps]
    jobs = []
    for idx, (peak, temp) in enumerate(points):
        for r in range(n_real):
            jobs.append((cfg.data, idx, r, {
                "which": cfg["hamiltonian"] or "full", "pulse_kind": "ohqc",
                "peak_MHz": peak,
                "noise_overrides": {"temperature_uK": temp},
            }))
    by_point = _mc_mean(cfg, jobs, threads)
    rows = []
    for idx, (peak, temp) in enumerate(points):
        vals = np.array(by_point[idx])
        sem = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        rows.append((peak, temp, float(vals.mean()), sem))
    return _table(cfg, ["peak_MHz", "temperature_uK", "mean_fidelity",
                        "sem_fidelity"], rows)


def _two_photon_model(cfg: ScenarioConfig) -> SystemModel:
    scheme = LevelScheme.four_level_pump()
    model = _model_from_config(cfg, scheme=scheme, pulse_kind="ohqc")
    tp = cfg["two_photon"]
    gate = model.gate
    omega_fn = model.drive.target_amp
    delta_0 = TWO_PI * 1e3 * tp["delta_0_GHz"]
    delta_1 = TWO_PI * 1e3 * tp["delta_1_GHz"]
    omega_0r = TWO_PI * tp["omega_0r_MHz"]
    omega_1r = TWO_PI * tp["omega_1r_MHz"]
    sin_half, cos_half = math.sin(gate.theta / 2), math.cos(gate.theta / 2)
    scale_0 = 2 * delta_0 * sin_half / omega_0r
    scale_1 = 2 * delta_1 * cos_half / omega_1r
    params = TwoPhotonParams(
        omega_cp=TWO_PI * tp["omega_cp_MHz"],
        omega_cr_bar=TWO_PI * tp["omega_cr_MHz"],
        omega_0p=lambda t: scale_0 * omega_fn(t),
        omega_1p=lambda t: scale_1 * omega_fn(t),
        omega_0r=omega_0r,
        omega_1r=omega_1r,
        delta_c=TWO_PI * 1e3 * tp["delta_c_GHz"],
        delta_0=delta_0,
        delta_1=delta_1,
        stark_shifts_enabled=bool(tp["stark_shifts_enabled"]),
        peak_0p=scale_0 * model.drive.peak_amp,
        peak_1p=scale_1 * model.drive.peak_amp,
    )
    return replace(model, two_photon=params)


def _run_two_photon(cfg: ScenarioConfig, threads: int) -> ResultTable:
    scheme = LevelScheme.four_level_pump()
    model = _two_photon_model(cfg)
    terms = two_photon_terms(model)
    psi0 = benchmark_initial_state(model.n_controls, scheme)
    psi_ideal = ideal_final_state(psi0, model.gate, scheme)
    times = np.linspace(0.0, model.total_time, cfg["curve_points"])
    traj = evolve_schrodinger(terms, psi0, (0.0, model.total_time),
                              _integrator_from_config(cfg), sample_times=times)
    rows = [(t, overlap_fidelity(psi_ideal, st))
            for t, st in zip(traj.times, traj.states)]
    return _table(cfg, ["t_us", "fidelity"], rows)


def _run_pulse_landscape(cfg: ScenarioConfig, threads: int) -> ResultTable:
    sweep = cfg["sweep"]
    a1 = sweep.get("a1", {"start": -0.5, "stop": 0.5, "points": 21})
    a2 = sweep.get("a2", {"start": -0.5, "stop": 0.5, "points": 21})
    a1v = _sweep_values(a1, None)
    a2v = _sweep_values(a2, None)
    rows = scan_landscape((a1v[0], a1v[-1]), (a2v[0], a2v[-1]),
                          (len(a1v), len(a2v)))
    return _table(cfg, ["a1", "a2", "sensitivity", "half_pulse_area",
                        "flag_low_sensitivity", "flag_short_gate"], rows)


def _avg_fidelity_one(args):
    cfg_data, point_index, n_controls, gamma_over_pi = args
    cfg = ScenarioConfig(cfg_data)
    scheme = LevelScheme.four_level_loss()
    sys_over = dict(cfg.data)
    system = dict(sys_over["system"])
    system["gamma_over_pi"] = gamma_over_pi
    sys_over["system"] = system
    cfg = ScenarioConfig(sys_over)
    model = _model_from_config(cfg, n_controls=n_controls, scheme=scheme,
                               pulse_kind="ohqc")
    spec = _noise_from_config(cfg, _point_seed(cfg.seed, cfg.scenario, point_index))
    which = cfg["hamiltonian"] or "effective"
    terms = full_hamiltonian_terms(model) if which == "full" \
        else effective_hamiltonian_terms(model)
    channels = channels_for_model(model, spec.tau_rydberg, spec.gamma_phi)
    settings = _integrator_from_config(cfg)
    t_end = model.total_time

    def channel(rho0):
        traj = evolve_lindblad(terms, channels, rho0, (0.0, t_end), settings)
        return traj.final

    value = average_gate_fidelity(channel, ideal_gate_unitary(model.gate),
                                  model.dims, scheme)
    return point_index, value


def _run_avg_fidelity(cfg: ScenarioConfig, threads: int) -> ResultTable:
    sweep = cfg["sweep"]
    ns = [int(n) for n in _sweep_values(sweep.get("n_controls"), [1.0])]
    gammas = _sweep_values(sweep.get("gamma_over_pi"), [1.0])
    noise = dict(cfg["noise"])
    if noise["tau_us"] is None:
        noise["tau_us"] = 400.0
        noise["gamma_phi_kHz"] = noise["gamma_phi_kHz"] or 1.0
    pulse = dict(cfg["pulse"])
    data = dict(cfg.data, noise=noise, pulse=pulse)
    cfg = ScenarioConfig(data)
    points = [(n, g) for n in ns for g in gammas]
    jobs = [(cfg.data, idx, n, g) for idx, (n, g) in enumerate(points)]
    results = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for idx, val in pool.map(_avg_fidelity_one, jobs, chunksize=1):
                results[idx] = val
    else:
        for job in jobs:
            idx, val = _avg_fidelity_one(job)
            results[idx] = val
    rows = [(n, g, results[idx]) for idx, (n, g) in enumerate(points)]
    return _table(cfg, ["n_controls", "gamma_over_pi", "avg_fidelity"], rows)


# ---------------------------------------------------------------------------
# registry and entry point


@dataclass(frozen=True)
class ScenarioSpec:
    runner: Callable
    description: str
    sweep_keys: frozenset


SCENARIOS = {
    "full_vs_effective": ScenarioSpec(
        _run_full_vs_effective,
        "benchmark-state fidelity curve, full vs effective Hamiltonian",
        frozenset()),
    "excitation_populations": ScenarioSpec(
        _run_excitation_populations,
        "population per auxiliary-excitation number during the gate",
        frozenset()),
    "nhqc_vs_ohqc_grid": ScenarioSpec(
        _run_nhqc_vs_ohqc_grid,
        "rectangular vs shaped pulse fidelity over timing/amplitude errors",
        frozenset({"delta_T_rel", "delta_omega_rel"})),
    "lifetime_sweep": ScenarioSpec(
        _run_lifetime_sweep,
        "open-system fidelity vs auxiliary-state lifetime and amplitude error",
        frozenset({"tau_us", "delta_omega_rel"})),
    "omega0_error": ScenarioSpec(
        _run_omega0_error,
        "fidelity vs static offset on the |0>-leg drive amplitude",
        frozenset({"n_controls", "delta_omega0_MHz"})),
    "delta_error_echo": ScenarioSpec(
        _run_delta_error_echo,
        "fidelity vs relative detuning-waveform error, with and without echo",
        frozenset({"n_controls", "delta_Delta_rel"})),
    "omega_mod_error": ScenarioSpec(
        _run_omega_mod_error,
        "fidelity vs modulation-frequency offset",
        frozenset({"n_controls", "delta_omega_mod_MHz"})),
    "n_scaling": ScenarioSpec(
        _run_n_scaling,
        "fidelity vs number of controls, with and without amplitude error",
        frozenset({"n_controls", "error_rel"})),
    "rri_fluctuation": ScenarioSpec(
        _run_rri_fluctuation,
        "seeded interaction-jitter averages vs control dressing strength",
        frozenset({"control_amp_MHz", "delta_V_rel"})),
    "thermal": ScenarioSpec(
        _run_thermal,
        "seeded thermal-detuning averages vs temperature (spin echo aware)",
        frozenset({"peak_MHz", "temperature_uK"})),
    "two_photon_cnot": ScenarioSpec(
        _run_two_photon,
        "four-level pumping-chain CNOT fidelity curve",
        frozenset()),
    "pulse_landscape": ScenarioSpec(
        _run_pulse_landscape,
        "sensitivity and pulse-area landscape over shape coefficients",
        frozenset({"a1", "a2"})),
    "avg_fidelity": ScenarioSpec(
        _run_avg_fidelity,
        "open-system Pauli-transfer average gate fidelity",
        frozenset({"n_controls", "gamma_over_pi"})),
}


def run_scenario(config: ScenarioConfig | dict | str,
                 threads: int | None = None) -> ResultTable:
    """Execute a validated scenario config; returns the result table.

    If an output path is configured the table is also written there.
    """
    if not isinstance(config, ScenarioConfig):
        config, warns = validate_config(config)
    else:
        warns = _hierarchy_warnings(config)
    threads = threads if threads is not None else int(config["threads"])
    table = SCENARIOS[config.scenario].runner(config, threads)
    if warns:
        table.metadata.setdefault("warnings", " | ".join(warns))
    out = config["output"]
    if out:
        table.to_csv(out)
    return table
