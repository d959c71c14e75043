"""
Scalar-auxiliary-variable time steppers.

Every scheme is a pure function ``SchemeState -> SchemeState``:

``sav_bdf``
    baseline SAV with IMEX-BDFk, ``R ~ sqrt(E_1 + C)``, k = 1, 2.
``rsav_cn``
    Crank-Nicolson Step I followed by the relaxation Step II.
``eop_sav_cn``
    Crank-Nicolson Step I followed by the energy-optimal min rule
    ``R = min(s, sqrt(E_1 + C))``.
``gsav_bdf`` / ``eop_gsav_bdf``
    generalized SAV with ``R ~ E + C0``, k = 1..4, optionally followed by
    ``R = min(R^n, E(phi) + C0)``.
``ns_eop_gsav_bdf``
    the energy-optimal GSAV scheme for periodic incompressible Navier-Stokes.

The linear implicit parts are all of the form ``(a I + b G L) phi = rhs`` and
are inverted mode by mode.  The coupled (phi, R) systems of the SAV and CN
schemes are closed by superposition: ``phi = phi_a - r phi_b`` with two
diagonal solves and one scalar equation for ``r``.

A manufactured forcing ``f`` (``model.manufactured``) enters explicitly in
the phi equation at ``t^{n+1/2}`` (CN) or ``t^{n+1}`` (BDF).  For the GSAV
family its work ``(f, mu)`` is added to the scalar energy balance; with
``f = 0`` every formula reduces to the unforced scheme.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, NamedTuple

import numpy as np

from .models import (
    ModelSpec,
    default_C0,
    exact_solution,
    manufactured_forcing,
    nonlinear_energy,
    quadratic_energy,
    total_energy,
)
from .spectral import dealias_mask, divergence, leray_project, shifted_symbol

log = logging.getLogger(__name__)

__all__ = [
    "Scheme",
    "BdfTable",
    "BDF_TABLES",
    "SchemeOptions",
    "SchemeState",
    "ConfigurationError",
    "NumericalFailure",
    "init_state",
    "startup",
    "startup_step",
    "step",
    "sav_bdfk_step",
    "cn_stepI",
    "rsav_relax",
    "eop_sav_update",
    "gsav_bdfk_step",
    "eop_gsav_update",
    "ns_eopgsav_step",
    "advance",
    "modified_energy",
]


class Scheme(str, Enum):
    SAV_BDF = "sav_bdf"
    RSAV_CN = "rsav_cn"
    EOPSAV_CN = "eop_sav_cn"
    GSAV_BDF = "gsav_bdf"
    EOPGSAV_BDF = "eop_gsav_bdf"
    NS_EOPGSAV_BDF = "ns_eop_gsav_bdf"

    @property
    def is_cn(self):
        return self in (Scheme.RSAV_CN, Scheme.EOPSAV_CN)

    @property
    def is_gsav(self):
        return self in (Scheme.GSAV_BDF, Scheme.EOPGSAV_BDF, Scheme.NS_EOPGSAV_BDF)

    @property
    def is_eop(self):
        return self in (Scheme.EOPSAV_CN, Scheme.EOPGSAV_BDF, Scheme.NS_EOPGSAV_BDF)

    @property
    def orders(self):
        if self is Scheme.SAV_BDF:
            return (1, 2)
        if self.is_cn:
            return (2,)
        return (1, 2, 3, 4)


class ConfigurationError(ValueError):
    """Invalid scheme/model combination or a nonpositive shifted energy."""


class NumericalFailure(ArithmeticError):
    """A step could not be completed; ``step`` is the index being computed."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")


@dataclass(frozen=True)
class BdfTable:
    """``alpha phi^{n+1} - sum(A_j phi^{n-j})`` and ``phi_hat = sum(hat_j phi^{n-j})``."""

    k: int
    alpha: float
    A: tuple
    hat: tuple


BDF_TABLES = {
    1: BdfTable(1, 1.0, (1.0,), (1.0,)),
    2: BdfTable(2, 1.5, (2.0, -0.5), (2.0, -1.0)),
    3: BdfTable(3, 11.0 / 6.0, (3.0, -1.5, 1.0 / 3.0), (3.0, -3.0, 1.0)),
    4: BdfTable(4, 25.0 / 12.0, (4.0, -3.0, 4.0 / 3.0, -0.25), (4.0, -6.0, 4.0, -1.0)),
}


@dataclass(frozen=True)
class SchemeOptions:
    """Tunables.

    eta
        residual fraction in the relaxation constraint (RSAV).
    exponent
        overrides the GSAV correction exponent in ``1 - (1 - xi)^exponent``;
        ``None`` means ``k + 1`` for gradient flows and ``k`` for NS.
    cn_denominator
        ``"half"`` evaluates ``sqrt(E_1 + C)`` at the CN extrapolation
        ``3/2 phi^n - 1/2 phi^{n-1}`` for both CN schemes; ``"full"`` uses
        ``2 phi^n - phi^{n-1}`` in the RSAV denominators instead.
    substeps_pow
        cold start takes ``2**substeps_pow`` first-order substeps per slot.
    """

    eta: float = 0.95
    exponent: int | None = None
    cn_denominator: str = "half"
    substeps_pow: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigurationError(f"eta must lie in [0, 1], got {self.eta}")
        if self.cn_denominator not in ("half", "full"):
            raise ConfigurationError("cn_denominator must be 'half' or 'full'")
        if self.substeps_pow < 0:
            raise ConfigurationError("substeps_pow must be nonnegative")


@dataclass(frozen=True, eq=False)
class SchemeState:
    """Time-stepper state.  ``history`` and ``R_history`` are newest first."""

    scheme: Scheme
    k: int
    dt: float
    t: float
    step_index: int
    history: tuple
    R_history: tuple
    shift: float
    options: SchemeOptions = field(default_factory=SchemeOptions)
    diagnostics: Mapping = field(default_factory=dict)

    @property
    def phi(self) -> np.ndarray:
        return self.history[0]

    @property
    def R(self) -> float:
        return self.R_history[0]

    @property
    def ready(self) -> bool:
        """History holds enough levels for a full order-k step."""
        return len(self.history) >= self.k


# -- helpers -----------------------------------------------------------------

def _combine(weights, fields):
    out = weights[0] * fields[0]
    for w, f in zip(weights[1:], fields[1:]):
        out = out + w * f
    return out


def _forcing(model, t):
    if model.manufactured is None:
        return None
    return manufactured_forcing(model, model.manufactured, t)


def _nonlinear(model, phi):
    v = model.dF(phi)
    if model.dealias != "none":
        grid = model.grid
        v = grid.ifft(grid.fft(v) * dealias_mask(grid))
    return v


def _shifted_E1(model, phi, C, step=None):
    value = nonlinear_energy(model, phi) + C
    if value <= 0.0:
        raise NumericalFailure(f"E_1 + C = {value:.3e} is not positive; increase C", step)
    return value


def _push(items, new, keep):
    return (new,) + tuple(items[: keep - 1])


def _dissipation(model, mu_h):
    return model.grid.spectral_inner(model.G.symbol * mu_h, mu_h)


def _work(model, f, mu):
    if f is None:
        return 0.0
    return model.grid.cell_volume * float(np.sum(f * mu))


def _order(state, order):
    q = min(state.k, len(state.history)) if order is None else order
    if q < 1 or q > len(state.history):
        raise NumericalFailure(f"order {q} needs {q} history levels, have {len(state.history)}",
                               state.step_index + 1)
    return q


def _advance_state(state, phi, R, diagnostics, keep=None):
    keep = max(state.k, 2) if keep is None else keep
    return replace(
        state,
        t=state.t + state.dt,
        step_index=state.step_index + 1,
        history=_push(state.history, phi, keep),
        R_history=_push(state.R_history, R, keep),
        diagnostics=diagnostics,
    )


# -- construction and startup --------------------------------------------------

def init_state(model: ModelSpec, scheme, phi0, dt, k=None, t0=0.0, options=None) -> SchemeState:
    """Seed a scheme with ``phi0`` (or the velocity for NS) at time ``t0``.

    ``R^0 = sqrt(E_1(phi0) + C)`` for the SAV, RSAV and EOP-SAV schemes and
    ``R^0 = E(phi0) + C0`` for the GSAV family.
    """
    scheme = Scheme(scheme)
    options = options or SchemeOptions()
    if k is None:
        k = 2 if scheme.is_cn else 1
    if k not in scheme.orders:
        raise ConfigurationError(f"k out of range for {scheme.value}: {k} not in {scheme.orders}")
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if (scheme is Scheme.NS_EOPGSAV_BDF) != model.is_navier_stokes:
        raise ConfigurationError(f"scheme {scheme.value} does not apply to {model.kind.value}")
    phi0 = np.array(phi0, dtype=float)
    if model.is_navier_stokes:
        grid = model.grid
        model.grid.check_field(phi0, components=(grid.dim,))
        phi0 = grid.ifft(leray_project(grid, grid.fft(phi0)))
    else:
        model.grid.check_field(phi0, components=())
    if scheme.is_gsav:
        shift = default_C0(model, phi0) if model.C0 is None else float(model.C0)
        R0 = total_energy(model, phi0) + shift
        if R0 <= 0:
            raise ConfigurationError(f"E(phi0) + C0 = {R0:.3e} must be positive")
    else:
        shift = model.shift_C
        E1 = nonlinear_energy(model, phi0) + shift
        if E1 <= 0:
            raise ConfigurationError(f"E_1(phi0) + C = {E1:.3e} must be positive")
        R0 = math.sqrt(E1)
    return SchemeState(scheme, k, float(dt), float(t0), 0, (phi0,), (R0,), shift, options, {})


def _exact_R(state, model, phi):
    if state.scheme.is_gsav:
        return total_energy(model, phi) + state.shift
    return math.sqrt(_shifted_E1(model, phi, state.shift))


def startup_step(state: SchemeState, model: ModelSpec, method="cold_bdf1_substeps") -> SchemeState:
    """Fill one missing history level.

    ``cold_bdf1_substeps`` runs the first-order member of the scheme's own
    family with ``2**options.substeps_pow`` substeps; ``exact_history``
    samples the manufactured solution.
    """
    if state.ready:
        return state
    if method == "exact_history":
        if model.manufactured is None:
            raise ConfigurationError("exact_history startup needs a manufactured solution")
        t_new = state.t + state.dt
        phi = exact_solution(model, model.manufactured, t_new)
        if model.is_navier_stokes:
            grid = model.grid
            phi = grid.ifft(leray_project(grid, grid.fft(phi)))
        R = _exact_R(state, model, phi)
        return _advance_state(state, phi, R, {"startup": "exact_history", "order": 0})
    if method != "cold_bdf1_substeps":
        raise ConfigurationError(f"unknown startup method {method!r}")
    n_sub = 2 ** state.options.substeps_pow
    if n_sub == 1:
        return step(state, model, order=1)
    sub = replace(state, dt=state.dt / n_sub, history=state.history[:1], R_history=state.R_history[:1])
    for _ in range(n_sub):
        sub = step(sub, model, order=1)
    diagnostics = dict(sub.diagnostics, startup="cold_bdf1_substeps")
    return _advance_state(state, sub.phi, sub.R, diagnostics)


def startup(state: SchemeState, model: ModelSpec, method="cold_bdf1_substeps") -> SchemeState:
    while not state.ready:
        state = startup_step(state, model, method)
    return state


# -- baseline SAV ----------------------------------------------------------------

def sav_bdfk_step(state: SchemeState, model: ModelSpec, order=None) -> SchemeState:
    """One IMEX-BDFk step of the baseline SAV scheme (k = 1, 2)."""
    q = _order(state, order)
    tab = BDF_TABLES[q]
    grid, dt, C = model.grid, state.dt, state.shift
    n1 = state.step_index + 1
    hist, Rh = state.history[:q], state.R_history[:q]
    A_phi = _combine(tab.A, hist)
    A_R = float(np.dot(tab.A, Rh))
    phi_hat = _combine(tab.hat, hist)
    b = _nonlinear(model, phi_hat) / math.sqrt(_shifted_E1(model, phi_hat, C, n1))

    f = _forcing(model, state.t + dt)
    denom = shifted_symbol(tab.alpha, dt, model.G, model.L)
    rhs = A_phi if f is None else A_phi + dt * f
    bh = grid.fft(b)
    phi_a_h = grid.fft(rhs) / denom
    phi_b_h = dt * model.G.symbol * bh / denom
    # alpha R - A(R) = 1/2 (b, alpha phi - A(phi)),  phi = phi_a - R phi_b
    b_phib = grid.spectral_inner(bh, phi_b_h)
    coeff = tab.alpha * (1.0 + 0.5 * b_phib)
    if abs(coeff) < 1e-14:
        raise NumericalFailure("singular scalar closure in SAV step", n1)
    R = (A_R + 0.5 * grid.spectral_inner(bh, tab.alpha * phi_a_h - grid.fft(A_phi))) / coeff
    phi_h = phi_a_h - R * phi_b_h
    phi = grid.ifft(phi_h)

    mu_h = model.L.symbol * phi_h + R * bh
    mu = grid.ifft(mu_h)
    diagnostics = {
        "order": q,
        "dt": dt,
        "mu": mu,
        "d": _dissipation(model, mu_h),
        "w": _work(model, f, mu),
        "xi": R / math.sqrt(_shifted_E1(model, phi, C, n1)),
    }
    return _advance_state(state, phi, R, diagnostics)


# -- Crank-Nicolson family ---------------------------------------------------------

class StepI(NamedTuple):
    phi_next: np.ndarray
    R_tilde: float
    mu_half: np.ndarray
    d: float
    w: float


def cn_stepI(state: SchemeState, model: ModelSpec, order=None) -> StepI:
    """Semi-implicit CN Step I shared by RSAV-CN and EOP-SAV/CN.

    With one history level (cold start) the extrapolation falls back to
    ``phi_hat = phi^n``.
    """
    grid, dt, C = model.grid, state.dt, state.shift
    n1 = state.step_index + 1
    phi_n, Rn = state.history[0], state.R_history[0]
    two_level = (order is None or order >= 2) and len(state.history) >= 2
    if two_level:
        phi_m = state.history[1]
        phi_hat = 1.5 * phi_n - 0.5 * phi_m
    else:
        phi_hat = phi_n
    if two_level and state.scheme is Scheme.RSAV_CN and state.options.cn_denominator == "full":
        E1_hat = _shifted_E1(model, 2.0 * phi_n - phi_m, C, n1)
    else:
        E1_hat = _shifted_E1(model, phi_hat, C, n1)
    b = _nonlinear(model, phi_hat) / math.sqrt(E1_hat)

    f = _forcing(model, state.t + 0.5 * dt)
    Lsym, Gsym = model.L.symbol, model.G.symbol
    denom = shifted_symbol(1.0, 0.5 * dt, model.G, model.L)
    phin_h = grid.fft(phi_n)
    rhs_h = (1.0 - 0.5 * dt * Gsym * Lsym) * phin_h
    if f is not None:
        rhs_h = rhs_h + dt * grid.fft(f)
    bh = grid.fft(b)
    phi_a_h = rhs_h / denom
    phi_b_h = dt * Gsym * bh / denom
    # q = (R~ + R^n)/2 = R^n + 1/4 (b, phi^{n+1} - phi^n),  phi^{n+1} = phi_a - q phi_b
    closure = 1.0 + 0.25 * grid.spectral_inner(bh, phi_b_h)
    if abs(closure) < 1e-14:
        raise NumericalFailure("singular scalar closure in CN step", n1)
    qv = (Rn + 0.25 * grid.spectral_inner(bh, phi_a_h - phin_h)) / closure
    phi_h = phi_a_h - qv * phi_b_h
    R_tilde = 2.0 * qv - Rn
    mu_h = 0.5 * Lsym * (phi_h + phin_h) + qv * bh
    mu = grid.ifft(mu_h)
    return StepI(grid.ifft(phi_h), R_tilde, mu, _dissipation(model, mu_h), _work(model, f, mu))


class Relaxation(NamedTuple):
    R_next: float
    lambda0: float
    a: float
    b: float
    c: float
    fallback: bool


def rsav_relax(R_tilde, Rn, phi_next, mu_half, model: ModelSpec, dt, eta, C=None) -> Relaxation:
    """Smallest ``lambda`` in [0, 1] with ``a l^2 + b l + c <= 0``.

    ``R^{n+1} = lambda R~ + (1 - lambda) sqrt(E_1(phi^{n+1}) + C)``.  A
    negative discriminant (round-off only: ``lambda = 1`` is always feasible)
    falls back to ``lambda = 1`` and sets ``fallback``.
    """
    C = model.shift_C if C is None else C
    grid = model.grid
    S = math.sqrt(_shifted_E1(model, phi_next, C))
    mu_h = grid.fft(mu_half)
    d = _dissipation(model, mu_h)
    a = (R_tilde - S) ** 2
    b = 2.0 * (R_tilde - S) * S
    c = S * S - R_tilde**2 - dt * eta * d
    fallback = False
    if a <= 1e-14:
        lam = 0.0
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            lam, fallback = 1.0, True
            log.info("negative relaxation discriminant %.3e; using lambda0 = 1", disc)
        else:
            lam = max(0.0, (-b - math.sqrt(disc)) / (2.0 * a))
            lam = min(lam, 1.0)
    R_next = lam * R_tilde + (1.0 - lam) * S
    return Relaxation(R_next, lam, a, b, c, fallback)


class EopSavUpdate(NamedTuple):
    R_next: float
    s: float
    cap: float
    branch: str


def eop_sav_update(R_tilde, Rn, phi_n, phi_next, model: ModelSpec, C=None) -> EopSavUpdate:
    """``R^{n+1} = min(s, sqrt(E_1(phi^{n+1}) + C))``.

    ``s^2 = (L phi^n, phi^n)/2 - (L phi^{n+1}, phi^{n+1})/2 + (R^n)^2`` is the
    largest value of ``R^2`` compatible with the discrete dissipation law.
    ``branch`` is ``"original"`` when the cap is taken (modified energy equals
    the original energy) and ``"dissipation"`` otherwise.  ``R_tilde`` is
    accepted for symmetry with :func:`rsav_relax` and not used.
    """
    C = model.shift_C if C is None else C
    lin_n = quadratic_energy(model, phi_n)
    radicand = lin_n - quadratic_energy(model, phi_next) + Rn * Rn
    if radicand < 0.0:
        if radicand < -1e-12 * max(1.0, abs(lin_n), Rn * Rn):
            raise NumericalFailure(f"negative s^2 = {radicand:.3e}: Step I identity violated")
        radicand = 0.0
    s = math.sqrt(radicand)
    cap = math.sqrt(_shifted_E1(model, phi_next, C))
    if s >= cap:
        return EopSavUpdate(cap, s, cap, "original")
    return EopSavUpdate(s, s, cap, "dissipation")


def _cn_step(state, model, order=None):
    n1 = state.step_index + 1
    res = cn_stepI(state, model, order)
    diagnostics = {
        "order": 2 if (order is None or order >= 2) and len(state.history) >= 2 else 1,
        "dt": state.dt,
        "R_tilde": res.R_tilde,
        "mu": res.mu_half,
        "d": res.d,
        "w": res.w,
    }
    if state.scheme is Scheme.RSAV_CN:
        rel = rsav_relax(res.R_tilde, state.R, res.phi_next, res.mu_half, model, state.dt,
                         state.options.eta, state.shift)
        R = rel.R_next
        diagnostics.update(lambda0=rel.lambda0, a=rel.a, b=rel.b, c=rel.c, fallback=rel.fallback)
    else:
        try:
            upd = eop_sav_update(res.R_tilde, state.R, state.phi, res.phi_next, model, state.shift)
        except NumericalFailure as exc:
            raise NumericalFailure(str(exc), n1) from exc
        R = upd.R_next
        diagnostics.update(s=upd.s, cap=upd.cap, branch=upd.branch)
    return _advance_state(state, res.phi_next, R, diagnostics)


# -- generalized SAV ------------------------------------------------------------------

class EopGsavUpdate(NamedTuple):
    R_next: float
    E_next: float
    branch: str


def eop_gsav_update(Rn, phi_next, model: ModelSpec, C0, budget=None) -> EopGsavUpdate:
    """``R^{n+1} = min(R^n, E(phi^{n+1}) + C0)``.

    ``budget`` replaces ``R^n`` as the upper bound when an external force
    does work on the system (``R^n + dt (f, mu)``).
    """
    bound = Rn if budget is None else budget
    E_next = total_energy(model, phi_next) + C0
    if E_next <= bound:
        return EopGsavUpdate(E_next, E_next, "original")
    return EopGsavUpdate(bound, E_next, "dissipation")


def _gsav_scalar(Rn, dt, d, w, E_bar, n1):
    # (R~ - R^n)/dt = -R~ d / E_bar + w
    if E_bar <= 0.0:
        raise NumericalFailure(f"E(phi_bar) + C0 = {E_bar:.3e} is not positive; C0 too small", n1)
    R_tilde = (Rn + dt * w) / (1.0 + dt * d / E_bar)
    if R_tilde <= 0.0:
        raise NumericalFailure(f"auxiliary variable became nonpositive ({R_tilde:.3e})", n1)
    return R_tilde


def _correction(xi, exponent):
    return 1.0 - (1.0 - xi) ** exponent


def gsav_bdfk_step(state: SchemeState, model: ModelSpec, order=None) -> SchemeState:
    """GSAV/BDFk Step I, plus the min-rule Step II for ``eop_gsav_bdf``."""
    q = _order(state, order)
    tab = BDF_TABLES[q]
    grid, dt = model.grid, state.dt
    n1 = state.step_index + 1
    hist = state.history[:q]
    A_phi = _combine(tab.A, hist)
    phi_hat = _combine(tab.hat, hist)
    nl = _nonlinear(model, phi_hat)
    nl_h = grid.fft(nl)
    f = _forcing(model, state.t + dt)
    rhs_h = grid.fft(A_phi) - dt * model.G.symbol * nl_h
    if f is not None:
        rhs_h = rhs_h + dt * grid.fft(f)
    denom = shifted_symbol(tab.alpha, dt, model.G, model.L)
    bar_h = rhs_h / denom
    phi_bar = grid.ifft(bar_h)
    mu_h = model.L.symbol * bar_h + nl_h
    mu = grid.ifft(mu_h)
    d = _dissipation(model, mu_h)
    w = _work(model, f, mu)
    E_bar = total_energy(model, phi_bar) + state.shift
    R_tilde = _gsav_scalar(state.R, dt, d, w, E_bar, n1)
    xi = R_tilde / E_bar
    exponent = state.options.exponent or (q + 1)
    phi = _correction(xi, exponent) * phi_bar
    diagnostics = {
        "order": q, "dt": dt, "mu": mu, "d": d, "w": w,
        "E_bar": E_bar, "R_tilde": R_tilde, "xi": xi,
    }
    if state.scheme is Scheme.EOPGSAV_BDF:
        budget = state.R + dt * w
        upd = eop_gsav_update(state.R, phi, model, state.shift, budget)
        R = upd.R_next
        diagnostics.update(budget=budget, E_next=upd.E_next, branch=upd.branch)
    else:
        R = R_tilde
    return _advance_state(state, phi, R, diagnostics)


# -- Navier-Stokes -----------------------------------------------------------------------

def advection(grid, u_h, mask=None):
    """Spectral coefficients of ``(u . grad) u`` from those of ``u``."""
    dim = grid.dim
    u = grid.ifft(u_h)
    out = []
    for i in range(dim):
        acc = 0.0
        for j, kj in enumerate(grid.k_deriv):
            acc = acc + u[j] * grid.ifft(1j * kj * u_h[i])
        out.append(acc)
    w_h = grid.fft(np.stack(out))
    if mask is not None:
        w_h = w_h * mask
    return w_h


def recover_pressure(grid, u_h, f=None, mask=None):
    """Zero-mean ``p`` with ``Lap p = -div((u . grad) u) + div f``."""
    D = divergence(grid, advection(grid, u_h, mask))
    if f is not None:
        D = D - divergence(grid, grid.fft(f))
    k2 = grid.k2
    p_h = np.where(k2 == 0.0, 0.0, D / np.where(k2 == 0.0, 1.0, k2))
    return grid.ifft(p_h)


def ns_eopgsav_step(state: SchemeState, model: ModelSpec, order=None) -> SchemeState:
    """EOP-GSAV/BDFk step for ``u_t - nu Lap u + P((u . grad) u) = P f``.

    ``P`` is the Leray projector (``-J`` in the rotational form).  The
    pressure is recovered afterwards from the updated velocity.
    """
    q = _order(state, order)
    tab = BDF_TABLES[q]
    grid, dt = model.grid, state.dt
    n1 = state.step_index + 1
    mask = dealias_mask(grid) if model.dealias != "none" else None
    hist_h = [grid.fft(u) for u in state.history[:q]]
    A_h = _combine(tab.A, hist_h)
    B_h = _combine(tab.hat, hist_h)
    rhs_h = A_h - dt * leray_project(grid, advection(grid, B_h, mask))
    f = _forcing(model, state.t + dt)
    if f is not None:
        rhs_h = rhs_h + dt * leray_project(grid, grid.fft(f))
    denom = shifted_symbol(tab.alpha, dt, model.L)
    bar_h = rhs_h / denom
    u_bar = grid.ifft(bar_h)
    d = grid.spectral_inner(model.L.symbol * bar_h, bar_h)
    w = _work(model, f, u_bar)
    E_bar = total_energy(model, u_bar) + state.shift
    R_tilde = _gsav_scalar(state.R, dt, d, w, E_bar, n1)
    xi = R_tilde / E_bar
    exponent = state.options.exponent or q
    u_h = _correction(xi, exponent) * bar_h
    u = grid.ifft(u_h)
    budget = state.R + dt * w
    upd = eop_gsav_update(state.R, u, model, state.shift, budget)
    diagnostics = {
        "order": q, "dt": dt, "mu": u_bar, "d": d, "w": w,
        "E_bar": E_bar, "R_tilde": R_tilde, "xi": xi,
        "budget": budget, "E_next": upd.E_next, "branch": upd.branch,
        "pressure": recover_pressure(grid, u_h, f, mask),
    }
    return _advance_state(state, u, upd.R_next, diagnostics)


# -- dispatch --------------------------------------------------------------------------------

def step(state: SchemeState, model: ModelSpec, order=None) -> SchemeState:
    """Advance by one step with the state's scheme."""
    scheme = state.scheme
    if scheme is Scheme.SAV_BDF:
        return sav_bdfk_step(state, model, order)
    if scheme.is_cn:
        return _cn_step(state, model, order)
    if scheme is Scheme.NS_EOPGSAV_BDF:
        return ns_eopgsav_step(state, model, order)
    return gsav_bdfk_step(state, model, order)


def modified_energy(state: SchemeState, model: ModelSpec, order=None) -> float:
    """The Lyapunov functional each scheme dissipates, shifted back by C/C0.

    SAV-BDF2 uses ``1/2 [q(phi^n) + q(2 phi^n - phi^{n-1})] + 1/2 [(R^n)^2 +
    (2 R^n - R^{n-1})^2] - C`` with ``q(v) = (L v, v)/2``.
    """
    scheme, C = state.scheme, state.shift
    if scheme.is_gsav:
        return state.R - C
    if scheme is Scheme.SAV_BDF:
        q = min(state.k, len(state.history)) if order is None else order
        if q == 2:
            phi, phim = state.history[0], state.history[1]
            R, Rm = state.R_history[0], state.R_history[1]
            lin = 0.5 * (quadratic_energy(model, phi) + quadratic_energy(model, 2.0 * phi - phim))
            return lin + 0.5 * (R * R + (2.0 * R - Rm) ** 2) - C
    return quadratic_energy(model, state.phi) + state.R**2 - C


def advance(state: SchemeState, model: ModelSpec, n_steps: int, observers=(),
            startup_method="cold_bdf1_substeps"):
    """Take ``n_steps`` steps (startup steps included) and audit each one.

    Returns ``(state, records)``.  Every observer is called as
    ``observer(state, record)`` after each step.
    """
    from .audit import audit_step

    records = []
    for _ in range(int(n_steps)):
        before = state
        try:
            if state.ready:
                state = step(state, model)
            else:
                state = startup_step(state, model, startup_method)
        except NumericalFailure as exc:
            if exc.step is None:
                raise NumericalFailure(str(exc), before.step_index + 1) from exc
            raise
        except (FloatingPointError, ZeroDivisionError) as exc:
            raise NumericalFailure(str(exc), before.step_index + 1) from exc
        record = audit_step(before, state, model)
        if not (math.isfinite(record.E_original) and math.isfinite(record.R)):
            raise NumericalFailure("solution is no longer finite", state.step_index)
        records.append(record)
        for obs in observers:
            obs(state, record)
    return state, records
