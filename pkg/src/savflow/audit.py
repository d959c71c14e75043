"""
Per-step energy bookkeeping.

:func:`audit_step` turns a pair of consecutive states into an
:class:`EnergyRecord`; :func:`check_run` scans a run for violations of the
properties each scheme guarantees.  Records carry the scheme's own
diagnostic:

============================  ====================  ==========================
scheme                        tag                   value
============================  ====================  ==========================
``sav_bdf``                   ``xi_minus_1``        ``R / sqrt(E_1 + C) - 1``
``rsav_cn``                   ``lambda0``           relaxation parameter
``eop_sav_cn``                ``E1_minus_s``        ``sqrt(E_1 + C) - s``
``gsav_bdf``                  ``xi_minus_1``        ``R~ / (E(phi_bar) + C0) - 1``
``eop_gsav_bdf``, NS          ``E_minus_R``         ``E(phi) + C0 - R^n`` (*)
============================  ====================  ==========================

(*) with ``R^n + dt (f, mu)`` in place of ``R^n`` under forcing.  A positive
value selects the dissipation branch.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .integrators import Scheme, SchemeState, modified_energy
from .models import ModelSpec, quadratic_energy, total_energy

__all__ = [
    "EnergyRecord",
    "CSV_FIELDS",
    "audit_step",
    "check_run",
    "compare_runs",
    "ComparisonTable",
    "dissipation_residual",
    "AUDIT_RTOL",
]

AUDIT_RTOL = 1e-10
_ABS_FLOOR = 1e-12


@dataclass(frozen=True)
class EnergyRecord:
    step: int
    t: float
    E_original: float
    E_modified: float
    R: float
    diagnostic_tag: str
    diagnostic_value: float
    dissipation_residual: float
    # not written to CSV
    branch: str | None = None
    dE_modified: float = math.nan
    startup: str | None = None
    order: int = 0

    def csv_row(self):
        return [getattr(self, name) for name in CSV_FIELDS]

    def as_dict(self):
        return asdict(self)


CSV_FIELDS = tuple(f.name for f in fields(EnergyRecord))[:8]

_TAGS = {
    Scheme.SAV_BDF: "xi_minus_1",
    Scheme.RSAV_CN: "lambda0",
    Scheme.EOPSAV_CN: "E1_minus_s",
    Scheme.GSAV_BDF: "xi_minus_1",
    Scheme.EOPGSAV_BDF: "E_minus_R",
    Scheme.NS_EOPGSAV_BDF: "E_minus_R",
}


def _diagnostic(after: SchemeState):
    diag, scheme = after.diagnostics, after.scheme
    if scheme is Scheme.SAV_BDF or scheme is Scheme.GSAV_BDF:
        return diag["xi"] - 1.0
    if scheme is Scheme.RSAV_CN:
        return diag["lambda0"]
    if scheme is Scheme.EOPSAV_CN:
        return diag["cap"] - diag["s"]
    return diag["E_next"] - diag["budget"]


def dissipation_residual(before: SchemeState, after: SchemeState, model: ModelSpec) -> float:
    """Defect of the scheme's discrete energy law for one step.

    Zero to round-off for the CN Step I identity and the GSAV scalar
    equation; nonpositive for SAV-BDFk (dissipation is an inequality there).
    """
    diag, scheme = after.diagnostics, after.scheme
    dt, d, w = diag["dt"], diag["d"], diag["w"]
    if scheme.is_cn:
        lhs = (quadratic_energy(model, after.phi) + diag["R_tilde"] ** 2
               - quadratic_energy(model, before.phi) - before.R**2)
        return lhs + dt * d - dt * w
    if scheme.is_gsav:
        xi = diag["R_tilde"] / diag["E_bar"]
        return diag["R_tilde"] - before.R + dt * xi * d - dt * w
    order = diag["order"]
    dE = modified_energy(after, model, order) - modified_energy(before, model, order)
    return dE + dt * d - dt * w


def audit_step(before: SchemeState, after: SchemeState, model: ModelSpec) -> EnergyRecord:
    if before.scheme is not after.scheme:
        raise ValueError("states belong to different schemes")
    E_original = total_energy(model, after.phi)
    diag = after.diagnostics
    order = diag.get("order", 0)
    startup = diag.get("startup")
    # the step's own Lyapunov form (matters for SAV-BDF2 right after startup)
    dE = modified_energy(after, model, order) - modified_energy(before, model, order) if order else math.nan
    if startup == "exact_history" or (startup is not None and before.options.substeps_pow > 0):
        # exact history or composite substeps: no single-step law to check
        tag, value, residual = "none", 0.0, 0.0
    else:
        tag = _TAGS[after.scheme]
        value = float(_diagnostic(after))
        residual = float(dissipation_residual(before, after, model))
    return EnergyRecord(
        step=after.step_index,
        t=after.t,
        E_original=float(E_original),
        E_modified=float(modified_energy(after, model)),
        R=float(after.R),
        diagnostic_tag=tag,
        diagnostic_value=value,
        dissipation_residual=residual,
        branch=diag.get("branch"),
        dE_modified=float(dE),
        startup=startup,
        order=order,
    )


def check_run(records, scheme, forced=False, rtol=AUDIT_RTOL):
    """List of human-readable violations (empty when the run is clean).

    Checks, where the scheme guarantees them: per-step decay of the
    modified energy (unforced runs only), the EOP bound
    ``E_modified <= E_original`` with equality on the ``original`` branch,
    ``lambda0`` in [0, 1], and the CN/GSAV energy identities.
    """
    scheme = Scheme(scheme)
    problems = []
    for rec in records:
        if rec.diagnostic_tag == "none":
            continue
        scale = max(1.0, abs(rec.E_original), abs(rec.E_modified))
        tol = rtol * scale + _ABS_FLOOR
        if not forced and rec.dE_modified > tol:
            problems.append(f"step {rec.step}: modified energy rose by {rec.dE_modified:.3e}")
        if scheme is Scheme.SAV_BDF:
            if rec.dissipation_residual > tol:
                problems.append(f"step {rec.step}: SAV energy inequality violated "
                                f"({rec.dissipation_residual:.3e})")
        elif abs(rec.dissipation_residual) > tol:
            problems.append(f"step {rec.step}: energy identity residual {rec.dissipation_residual:.3e}")
        if scheme is Scheme.RSAV_CN and not -tol <= rec.diagnostic_value <= 1.0 + tol:
            problems.append(f"step {rec.step}: lambda0 = {rec.diagnostic_value} outside [0, 1]")
        if scheme is Scheme.EOPGSAV_BDF or scheme is Scheme.NS_EOPGSAV_BDF:
            gap = rec.E_original - rec.E_modified
            if gap < -tol:
                problems.append(f"step {rec.step}: E_modified exceeds E_original by {-gap:.3e}")
            if rec.branch == "original" and abs(gap) > tol:
                problems.append(f"step {rec.step}: original branch but E_modified != E_original")
            if (rec.branch == "original") != (rec.diagnostic_value <= 0.0):
                problems.append(f"step {rec.step}: branch {rec.branch} disagrees with diagnostic")
        if scheme is Scheme.EOPSAV_CN:
            if (rec.branch == "original") != (rec.diagnostic_value <= 0.0):
                problems.append(f"step {rec.step}: branch {rec.branch} disagrees with diagnostic")
            if rec.branch == "original" and abs(rec.E_original - rec.E_modified) > tol:
                problems.append(f"step {rec.step}: original branch but E_modified != E_original")
    return problems


@dataclass(frozen=True, eq=False)
class ComparisonTable:
    """Diagnostics of several runs side by side on their common time grid.

    ``columns`` is ``t`` followed by one ``label:tag`` column per run.
    ``differences`` holds per-step differences of each run from the first
    one (``E_original``, ``E_modified`` and ``R``); ``summary`` their max norms.
    """

    columns: tuple
    rows: np.ndarray
    differences: dict
    summary: dict


def compare_runs(*runs, labels=None) -> ComparisonTable:
    if not runs:
        raise ValueError("nothing to compare")
    labels = list(labels) if labels is not None else [f"run{i}" for i in range(len(runs))]
    if len(labels) != len(runs):
        raise ValueError("one label per run")
    n = len(runs[0])
    for label, records in zip(labels, runs):
        if len(records) != n:
            raise ValueError(f"run {label!r} has {len(records)} steps, expected {n}")
    t = np.array([r.t for r in runs[0]], dtype=float)
    for label, records in zip(labels, runs):
        other = np.array([r.t for r in records], dtype=float)
        if not np.allclose(other, t, rtol=1e-12, atol=1e-12):
            raise ValueError(f"run {label!r} is on a different time grid")
    columns = ["t"]
    data = [t]
    for label, records in zip(labels, runs):
        tags = {r.diagnostic_tag for r in records} - {"none"}
        columns.append(f"{label}:{'/'.join(sorted(tags)) or 'none'}")
        data.append(np.array([r.diagnostic_value for r in records], dtype=float))
    differences, summary = {}, {}
    base = runs[0]
    for label, records in zip(labels[1:], runs[1:]):
        for name in ("E_original", "E_modified", "R"):
            diff = np.array([getattr(a, name) - getattr(b, name) for a, b in zip(records, base)])
            differences[(label, name)] = diff
            summary[(label, name)] = float(np.max(np.abs(diff))) if n else 0.0
    return ComparisonTable(tuple(columns), np.column_stack(data) if n else np.empty((0, len(columns))),
                           differences, summary)
