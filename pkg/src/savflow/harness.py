"""
Convergence studies and the standard experiment scenarios.

A scenario is a :class:`~savflow.config.RunConfig` whose defaults follow the
standard benchmark setups.  Runs that would take hours at full
resolution are scaled down in grid size or final time only:

============  =========================================================
``pfc_2d``    256^2 modes on the 800 x 800 box, T = 300 (orig. 1024^2, T = 2000)
``pfc_3d``    48^3 modes, T = 500 (orig. 64^3, T = 3000)
``ch_caseB``  256^2 modes, T = 10 (orig. 512^2)
============  =========================================================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audit import check_run, compare_runs
from .config import SCHEME_ALIASES, ConfigError, RunConfig, apply_overrides, config_from_dict, serialize_config
from .integrators import NumericalFailure, SchemeOptions, advance, init_state
from .io import emit_plot_script, write_energy_csv, write_snapshot, write_table_csv
from .models import ModelSpec, exact_solution, make_initial, make_model
from .spectral import build_grid, l2_norm

__all__ = [
    "ConvergenceStudy",
    "OrderEstimate",
    "RungFailure",
    "run_convergence",
    "RunResult",
    "SCENARIOS",
    "scenario_config",
    "build_run",
    "run_config",
    "run_scenario",
    "convergence_from_config",
    "compare_schemes",
]


# -- convergence -------------------------------------------------------------------

class RungFailure(NumericalFailure):
    def __init__(self, rung, dt, cause):
        self.rung = rung
        self.dt = dt
        super().__init__(f"rung {rung} (dt = {dt:g}) failed: {cause}")
        self.step = getattr(cause, "step", None)


@dataclass(frozen=True, eq=False)
class ConvergenceStudy:
    """Errors at ``T_final`` over a ladder of time steps.

    ``reference`` is ``"manufactured"`` (compare with ``model.manufactured``)
    or ``"fine_dt_self_reference"`` (compare with the same scheme at
    ``reference_dt``, by default a sixteenth of the finest rung).
    """

    model: ModelSpec
    scheme: str
    dt_ladder: tuple
    T_final: float
    k: int | None = None
    t0: float = 0.0
    reference: str = "manufactured"
    reference_dt: float | None = None
    startup: str | None = None
    options: SchemeOptions = field(default_factory=SchemeOptions)
    initial: np.ndarray | None = None

    def __post_init__(self):
        ladder = tuple(float(d) for d in self.dt_ladder)
        object.__setattr__(self, "dt_ladder", ladder)
        if len(ladder) < 2:
            raise ValueError("a convergence study needs at least two time steps")
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("dt_ladder must be strictly decreasing")
        span = self.T_final - self.t0
        for dt in ladder + ((self.reference_dt,) if self.reference_dt else ()):
            n = span / dt
            if n < 1 - 1e-12 or abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise ValueError(f"T_final - t0 = {span} is not a multiple of dt = {dt}")
        if self.reference not in ("manufactured", "fine_dt_self_reference"):
            raise ValueError(f"unknown reference {self.reference!r}")
        if self.reference == "manufactured" and self.model.manufactured is None:
            raise ValueError("manufactured reference needs a manufactured model")
        if self.initial is None and self.model.manufactured is None:
            raise ValueError("initial data required when the model has no manufactured solution")


@dataclass(frozen=True)
class OrderEstimate:
    dt: tuple
    errors: tuple
    slope: float
    pairwise: tuple

    @classmethod
    def from_errors(cls, dts, errors):
        dts = np.asarray(dts, dtype=float)
        errors = np.asarray(errors, dtype=float)
        if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
            raise ValueError(f"errors must be positive and finite: {errors}")
        slope = float(np.polyfit(np.log(dts), np.log(errors), 1)[0])
        pairwise = tuple(float(v) for v in np.log(errors[:-1] / errors[1:]) / np.log(dts[:-1] / dts[1:]))
        return cls(tuple(dts), tuple(errors), slope, pairwise)


def _initial_for(study):
    if study.initial is not None:
        return np.array(study.initial, dtype=float)
    return exact_solution(study.model, study.model.manufactured, study.t0)


def _solve(study, dt):
    startup = study.startup or ("exact_history" if study.model.manufactured else "cold_bdf1_substeps")
    state = init_state(study.model, study.scheme, _initial_for(study), dt, k=study.k,
                       t0=study.t0, options=study.options)
    n = round((study.T_final - study.t0) / dt)
    state, _ = advance(state, study.model, n, startup_method=startup)
    return state.phi


def run_convergence(study: ConvergenceStudy) -> OrderEstimate:
    """Discrete L2 error of each rung and the fitted order."""
    model = study.model
    if study.reference == "manufactured":
        ref = exact_solution(model, model.manufactured, study.T_final)
    else:
        ref_dt = study.reference_dt or study.dt_ladder[-1] / 16
        try:
            ref = _solve(study, ref_dt)
        except NumericalFailure as exc:
            raise RungFailure(-1, ref_dt, exc) from exc
    errors = []
    for i, dt in enumerate(study.dt_ladder):
        try:
            phi = _solve(study, dt)
        except NumericalFailure as exc:
            raise RungFailure(i, dt, exc) from exc
        errors.append(l2_norm(model.grid, phi - ref))
    return OrderEstimate.from_errors(study.dt_ladder, errors)


# -- scenarios ----------------------------------------------------------------------

SCENARIOS = {
    "ac_caseA": {
        "model": {"kind": "allen_cahn", "M": 1.0, "alpha0": 1e-4, "manufactured": "exp_sin"},
        "grid": {"dim": 2, "extents": (2.0, 2.0), "modes": (64, 64)},
        "scheme": {"name": "eop_sav", "dt": 0.01, "T": 0.5},
    },
    "ac_caseB": {
        "model": {"kind": "allen_cahn", "M": 1.0, "alpha0": 1e-4, "initial": "star", "alpha": 1e-4},
        "grid": {"dim": 2, "extents": (1.0, 1.0), "modes": (128, 128)},
        "scheme": {"name": "eop_gsav", "k": 2, "dt": 1e-3, "T": 200.0},
        "output": {"snapshot_times": (10.0, 50.0, 100.0, 200.0)},
    },
    "ch_caseA": {
        "model": {"kind": "cahn_hilliard", "M": 0.005, "alpha0": 0.04, "eps": 1.0, "manufactured": "exp_sin"},
        "grid": {"dim": 2, "extents": (2.0, 2.0), "modes": (64, 64)},
        "scheme": {"name": "eop_sav", "dt": 0.01, "T": 0.5},
    },
    "ch_caseB": {
        "model": {"kind": "cahn_hilliard", "M": 1e-6, "alpha0": 1.0, "eps": 0.01, "initial": "circle_array"},
        "grid": {"dim": 2, "extents": (2.0, 2.0), "modes": (256, 256)},
        "scheme": {"name": "eop_gsav", "k": 2, "dt": 1e-3, "T": 10.0},
        "output": {"snapshot_times": (1.0, 5.0, 10.0)},
    },
    "pfc_2d": {
        "model": {"kind": "pfc", "M": 1.0, "beta": 1.0, "eps": 0.25, "initial": "crystallites"},
        "grid": {"dim": 2, "extents": (800.0, 800.0), "modes": (256, 256)},
        "scheme": {"name": "eop_gsav", "k": 2, "dt": 0.02, "T": 300.0},
        "output": {"snapshot_times": (100.0, 200.0, 300.0)},
    },
    "pfc_3d": {
        "model": {"kind": "pfc", "M": 1.0, "beta": 1.0, "eps": 0.56, "delta": 0.02,
                  "initial": "uniform_random", "phibar": 0.2},
        "grid": {"dim": 3, "extents": (50.0, 50.0, 50.0), "modes": (48, 48, 48)},
        "scheme": {"name": "eop_gsav", "k": 2, "dt": 0.1, "T": 500.0},
        "output": {"snapshot_times": (500.0,), "seed": 1},
    },
    "ns_caseA": {
        "model": {"kind": "navier_stokes", "nu": 1.0, "manufactured": "ns_case_a"},
        "grid": {"dim": 2, "extents": (2.0, 2.0), "modes": (40, 40)},
        "scheme": {"name": "ns_eop_gsav", "k": 2, "dt": 0.01, "t0": 2.0, "T": 3.0},
    },
    "ns_shear": {
        "model": {"kind": "navier_stokes", "nu": 1e-4, "initial": "shear_layer", "rho": 30.0,
                  "perturbation": 0.05},
        "grid": {"dim": 2, "extents": (1.0, 1.0), "modes": (128, 128)},
        "scheme": {"name": "ns_eop_gsav", "k": 2, "dt": 6e-4, "T": 1.2},
        "output": {"snapshot_times": (0.8, 1.0, 1.2)},
    },
}


def scenario_config(name, overrides=()) -> RunConfig:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    sections = {sec: dict(vals) for sec, vals in SCENARIOS[name].items()}
    overrides = list(overrides)
    keys = [o.partition("=")[0].strip() for o in overrides]
    if "scheme.T" in keys and "output.snapshot_times" not in keys and "output" in sections:
        # shortened runs keep only the default snapshots they reach
        T = float(overrides[keys.index("scheme.T")].partition("=")[2])
        times = sections["output"].get("snapshot_times", ())
        sections["output"]["snapshot_times"] = tuple(t for t in times if t <= T)
    config = config_from_dict(sections)
    return apply_overrides(config, overrides) if overrides else config


def build_model(config: RunConfig) -> ModelSpec:
    grid = build_grid(config.grid["dim"], config.grid["extents"], config.grid["modes"])
    return make_model(
        config.model["kind"], grid,
        C=config.scheme.get("C"), C0=config.scheme.get("C0"),
        manufactured=config.model.get("manufactured"),
        dealias=config.scheme["dealias"],
        **config.model_params,
    )


def scheme_options(config: RunConfig) -> SchemeOptions:
    s = config.scheme
    return SchemeOptions(eta=s["eta"], exponent=s.get("exponent_override"),
                         cn_denominator=s["cn_denominator"], substeps_pow=s["substeps_pow"])


def initial_data(config: RunConfig, model: ModelSpec):
    tag = config.model["initial"]
    params = config.initial_params
    t0 = config.scheme["t0"]
    if tag == "manufactured":
        if model.manufactured is None:
            raise ValueError("initial = manufactured needs model.manufactured")
        return exact_solution(model, model.manufactured, t0)
    if tag == "circle_array":
        params.setdefault("eps", config.model["eps"])
    return make_initial(tag, model.grid, params, seed=config.output["seed"])


def build_run(config: RunConfig, scheme=None):
    """Model and initial scheme state described by ``config``."""
    model = build_model(config)
    phi0 = initial_data(config, model)
    state = init_state(model, scheme or config.scheme_kind, phi0, config.scheme["dt"],
                       k=config.scheme["k"], t0=config.scheme["t0"], options=scheme_options(config))
    return model, state


@dataclass(eq=False)
class RunResult:
    config: RunConfig
    model: ModelSpec
    state: object
    records: list
    snapshots: dict
    violations: list
    output_dir: Path | None = None


def _field_name(model):
    return "u" if model.is_navier_stokes else "phi"


def _n_steps(config):
    return round((config.scheme["T"] - config.scheme["t0"]) / config.scheme["dt"])


def run_config(config: RunConfig, output_dir=None, observers=()) -> RunResult:
    """Run a configuration, auditing every step.

    With ``output_dir`` the energy CSV, the snapshots and the effective
    configuration (``config.ini``) are written there.
    """
    model, state = build_run(config)
    dt, t0 = config.scheme["dt"], config.scheme["t0"]
    wanted = {round((t - t0) / dt): t for t in config.output["snapshot_times"]}
    snapshots = {}
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(serialize_config(config), encoding="utf-8")

    def snap(st, rec=None):
        # snapshot times between steps go to the nearest step
        t_req = wanted.get(st.step_index)
        if t_req is not None:
            snapshots[t_req] = st.phi.copy()
            if out is not None:
                write_snapshot(out / f"{_field_name(model)}_t{t_req:g}.savf", st.phi,
                               model.grid.extents, st.t, _field_name(model))

    snap(state)
    state, records = advance(state, model, _n_steps(config), observers=(snap, *observers),
                             startup_method=config.scheme["startup"])
    violations = check_run(records, state.scheme, forced=model.manufactured is not None)
    if out is not None:
        csv_path = out / config.output["csv"]
        write_energy_csv(records, csv_path)
        if config.output["plot_scripts"]:
            emit_plot_script([csv_path], "energy", out / "plot_energy.py")
            snaps = sorted(out.glob("*.savf"))
            if snaps:
                emit_plot_script(snaps, "field", out / "plot_fields.py")
    return RunResult(config, model, state, records, snapshots, violations, out)


def run_scenario(name, overrides=(), output_dir=None) -> RunResult:
    """Run a named scenario, optionally with ``section.key=value`` overrides."""
    return run_config(scenario_config(name, overrides), output_dir)


def convergence_from_config(config: RunConfig, dt_ladder, output_dir=None) -> OrderEstimate:
    """Convergence study for the config's model and scheme up to ``scheme.T``."""
    model = build_model(config)
    reference = "manufactured" if model.manufactured else "fine_dt_self_reference"
    study = ConvergenceStudy(
        model=model, scheme=config.scheme_kind.value, dt_ladder=tuple(dt_ladder),
        T_final=config.scheme["T"], k=config.scheme["k"], t0=config.scheme["t0"],
        reference=reference, startup=config.scheme["startup"], options=scheme_options(config),
        initial=None if model.manufactured else initial_data(config, model),
    )
    est = run_convergence(study)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(serialize_config(config), encoding="utf-8")
        name = f"convergence_{config.scheme_kind.value}_k{config.scheme['k']}.csv"
        write_table_csv(("dt", "error"), zip(est.dt, est.errors), out / name)
        if config.output["plot_scripts"]:
            emit_plot_script([out / name], "convergence", out / "plot_convergence.py")
    return est


def compare_schemes(config: RunConfig, schemes, output_dir=None):
    """Run ``config`` once per scheme name and compare the energy traces."""
    for name in schemes:
        if name not in SCHEME_ALIASES:
            raise ConfigError(f"unknown scheme {name!r}")
    runs = {}
    for name in schemes:
        overrides = [f"scheme.name={name}"]
        if config.scheme["k"] in SCHEME_ALIASES[name].orders:
            overrides.append(f"scheme.k={config.scheme['k']}")
        sub = apply_overrides(config, overrides)
        sub_dir = None if output_dir is None else Path(output_dir) / name
        runs[name] = run_config(sub, sub_dir).records
    table = compare_runs(*runs.values(), labels=list(runs))
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(serialize_config(config), encoding="utf-8")
        write_table_csv(table.columns, table.rows, out / "comparison.csv")
    return table

