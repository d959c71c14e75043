"""
Gradient-flow model instances and the incompressible Navier-Stokes system.

Each gradient flow is split as ``E(phi) = 1/2 (phi, L phi) + (F(phi), 1)``
with ``phi_t = -G mu`` and ``mu = L phi + F'(phi)``:

=============  ==================  ==========  ==============================
kind           L                   G           F(phi)
=============  ==================  ==========  ==============================
allen_cahn     -alpha0 Lap         M           (phi^2 - 1)^2 / 4
cahn_hilliard  -alpha0 Lap         -M Lap      (phi^2 - 1)^2 / (4 eps^2)
pfc            (Lap + beta)^2      -M Lap      phi^4/4 - eps phi^2/2
=============  ==================  ==========  ==============================

Navier-Stokes carries ``L = -nu Lap`` (viscous dissipation) and ``G = I``;
its energy is ``||u||^2 / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache
from typing import Mapping, NamedTuple

import numpy as np
import sympy as sp

from .spectral import DiagonalOperator, PeriodicGrid, inner_product, leray_project

__all__ = [
    "ModelKind",
    "ModelSpec",
    "Splitting",
    "make_model",
    "splitting",
    "nonlinear_energy",
    "total_energy",
    "energy_lower_bound",
    "default_C",
    "default_C0",
    "make_initial",
    "exact_solution",
    "manufactured_forcing",
    "MANUFACTURED",
]


class ModelKind(str, Enum):
    ALLEN_CAHN = "allen_cahn"
    CAHN_HILLIARD = "cahn_hilliard"
    PFC = "pfc"
    NAVIER_STOKES = "navier_stokes"


_REQUIRED = {
    ModelKind.ALLEN_CAHN: ("M", "alpha0"),
    ModelKind.CAHN_HILLIARD: ("M", "alpha0", "eps"),
    ModelKind.PFC: ("M", "beta", "eps"),
    ModelKind.NAVIER_STOKES: ("nu",),
}


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """An immutable gradient-flow (or NS) instance on a periodic grid.

    ``C`` shifts the nonlinear energy for the SAV/RSAV/EOP-SAV schemes and
    ``C0`` the total energy for the GSAV family; ``None`` selects the
    defaults of :func:`default_C` and :func:`default_C0`.  ``manufactured``
    names a closed-form solution whose residual is added as forcing.
    """

    kind: ModelKind
    grid: PeriodicGrid
    params: Mapping[str, float] = field(default_factory=dict)
    C: float | None = None
    C0: float | None = None
    manufactured: str | None = None
    dealias: str = "none"

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        missing = [p for p in _REQUIRED[kind] if p not in self.params]
        if missing:
            raise ValueError(f"{kind.value} model needs parameters {missing}")
        object.__setattr__(self, "params", dict(self.params))
        if self.manufactured is not None and self.manufactured not in MANUFACTURED:
            raise ValueError(f"unknown manufactured solution {self.manufactured!r}")

    @property
    def is_navier_stokes(self) -> bool:
        return self.kind is ModelKind.NAVIER_STOKES

    @cached_property
    def L(self) -> DiagonalOperator:
        p, k2 = self.params, self.grid.k2
        if self.kind in (ModelKind.ALLEN_CAHN, ModelKind.CAHN_HILLIARD):
            return DiagonalOperator(self.grid, p["alpha0"] * k2)
        if self.kind is ModelKind.PFC:
            return DiagonalOperator(self.grid, (p["beta"] - k2) ** 2)
        return DiagonalOperator(self.grid, p["nu"] * k2)

    @cached_property
    def G(self) -> DiagonalOperator:
        p, k2 = self.params, self.grid.k2
        if self.kind is ModelKind.ALLEN_CAHN:
            return DiagonalOperator(self.grid, np.full(k2.shape, float(p["M"])))
        if self.kind is ModelKind.NAVIER_STOKES:
            return DiagonalOperator(self.grid, np.ones(k2.shape))
        return DiagonalOperator(self.grid, p["M"] * k2)

    @cached_property
    def shift_C(self) -> float:
        return default_C(self) if self.C is None else float(self.C)

    def F(self, v):
        v = np.asarray(v, dtype=float)
        p = self.params
        if self.kind is ModelKind.ALLEN_CAHN:
            return 0.25 * (v * v - 1.0) ** 2
        if self.kind is ModelKind.CAHN_HILLIARD:
            return 0.25 * (v * v - 1.0) ** 2 / p["eps"] ** 2
        if self.kind is ModelKind.PFC:
            v2 = v * v
            return 0.25 * v2 * v2 - 0.5 * p["eps"] * v2
        raise ValueError("Navier-Stokes has no nonlinear energy density")

    def dF(self, v):
        v = np.asarray(v, dtype=float)
        p = self.params
        if self.kind is ModelKind.ALLEN_CAHN:
            return v**3 - v
        if self.kind is ModelKind.CAHN_HILLIARD:
            return (v**3 - v) / p["eps"] ** 2
        if self.kind is ModelKind.PFC:
            return v**3 - p["eps"] * v
        raise ValueError("Navier-Stokes has no nonlinear energy density")


class Splitting(NamedTuple):
    L: DiagonalOperator
    G: DiagonalOperator
    F: object
    dF: object


def make_model(kind, grid, C=None, C0=None, manufactured=None, dealias="none", **params) -> ModelSpec:
    return ModelSpec(ModelKind(kind), grid, params, C=C, C0=C0, manufactured=manufactured, dealias=dealias)


def splitting(model: ModelSpec) -> Splitting:
    """Linear operator, mobility and nonlinear density of a model."""
    if model.is_navier_stokes:
        return Splitting(model.L, model.G, None, None)
    return Splitting(model.L, model.G, model.F, model.dF)


def nonlinear_energy(model: ModelSpec, phi) -> float:
    """``E_1(phi) = (F(phi), 1)``."""
    return inner_product(model.grid, model.F(phi), 1.0)


def quadratic_energy(model: ModelSpec, phi) -> float:
    """``(L phi, phi) / 2`` evaluated spectrally."""
    grid = model.grid
    ph = grid.fft(phi)
    return 0.5 * grid.spectral_inner(model.L.symbol * ph, ph)


def total_energy(model: ModelSpec, phi) -> float:
    """Free energy ``1/2 (phi, L phi) + E_1(phi)``, or ``||u||^2/2`` for NS."""
    if model.is_navier_stokes:
        return 0.5 * inner_product(model.grid, phi, phi)
    return quadratic_energy(model, phi) + nonlinear_energy(model, phi)


def energy_lower_bound(model: ModelSpec) -> float:
    """A lower bound of ``E_1`` (hence of ``E``, since ``L >= 0``)."""
    if model.kind is ModelKind.PFC:
        return -0.25 * model.params["eps"] ** 2 * model.grid.volume
    return 0.0


def default_C(model: ModelSpec) -> float:
    if model.kind is ModelKind.PFC:
        return -energy_lower_bound(model) + 1.0
    return 1.0


def default_C0(model: ModelSpec, phi0) -> float:
    """Shift making ``E + C0 >= 1`` at ``phi0`` and along the whole run."""
    E0 = total_energy(model, phi0)
    return max(0.0, 1.0 - E0, 1.0 - energy_lower_bound(model))


# -- initial conditions ------------------------------------------------------

def _need(params, *names):
    missing = [n for n in names if n not in params]
    if missing:
        raise ValueError(f"missing initial-condition parameters {missing}")


def make_initial(tag, grid: PeriodicGrid, params=None, seed=None):
    """Initial data of the standard experiments.

    ``tag`` is one of ``manufactured``, ``star``, ``circle_array``,
    ``crystallites``, ``shear_layer`` or ``uniform_random``.  Returns a real
    array of shape ``grid.modes``, or ``(2, *grid.modes)`` for the shear layer.
    """
    params = dict(params or {})
    if tag == "manufactured":
        _need(params, "solution")
        return _exact_values(params["solution"], grid, params.get("t", 0.0))
    if tag == "star":
        _need(params, "alpha")
        X, Y = grid.coords()
        Lx, Ly = grid.extents[:2]
        dx, dy = X - 0.5 * Lx, Y - 0.5 * Ly
        theta = np.arctan2(dy, dx)
        r = np.hypot(dx, dy)
        return np.tanh((1.5 + 1.2 * np.cos(6 * theta) - 2 * np.pi * r) / np.sqrt(2 * params["alpha"]))
    if tag == "circle_array":
        _need(params, "eps")
        r0 = params.get("r0", 0.085)
        n = int(params.get("count", 9))
        spacing = params.get("spacing", 0.2)
        X, Y = grid.coords()
        phi = np.full(grid.modes, float(n * n - 1))
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                d = np.hypot(X - spacing * i, Y - spacing * j)
                phi -= np.tanh((d - r0) / (np.sqrt(2) * params["eps"]))
        return phi
    if tag == "crystallites":
        return _crystallites(grid, params)
    if tag == "shear_layer":
        _need(params, "rho", "perturbation")
        X, Y = grid.coords()
        rho = params["rho"]
        u1 = np.where(Y <= 0.5, np.tanh(rho * (Y - 0.25)), np.tanh(rho * (0.75 - Y)))
        u2 = params["perturbation"] * np.sin(2 * np.pi * X)
        return np.stack([u1, u2])
    if tag == "uniform_random":
        _need(params, "phibar")
        if seed is None:
            raise ValueError("uniform_random initial data needs a seed")
        rng = np.random.default_rng(seed)
        amp = params.get("amplitude", 0.01)
        return params["phibar"] + amp * rng.uniform(-1.0, 1.0, size=grid.modes)
    raise ValueError(f"unknown initial-condition tag {tag!r}")


CRYSTALLITE_CENTERS = ((350.0, 400.0), (200.0, 200.0), (600.0, 300.0))
CRYSTALLITE_ANGLES = (-np.pi / 4, 0.0, np.pi / 4)


def _crystallites(grid, params):
    phibar = params.get("phibar", 0.285)
    C1 = params.get("C1", 0.446)
    C2 = params.get("C2", 0.66)
    side = params.get("side", 40.0)
    centers = params.get("centers", CRYSTALLITE_CENTERS)
    angles = params.get("angles", CRYSTALLITE_ANGLES)
    X, Y = grid.coords()
    phi = np.full(grid.modes, float(phibar))
    half = 0.5 * side
    for (cx, cy), theta in zip(centers, angles):
        if cx - half < 0 or cy - half < 0 or cx + half > grid.extents[0] or cy + half > grid.extents[1]:
            raise ValueError(f"crystallite patch at ({cx}, {cy}) lies outside the domain")
        inside = (np.abs(X - cx) <= half) & (np.abs(Y - cy) <= half)
        xl = X * np.sin(theta) + Y * np.cos(theta)
        yl = -X * np.cos(theta) + Y * np.sin(theta)
        pattern = phibar + C1 * (
            np.cos(C2 / np.sqrt(3) * yl) * np.cos(C2 * xl) - 0.5 * np.cos(2 * C2 / np.sqrt(3) * yl)
        )
        phi = np.where(inside, pattern, phi)
    return phi


# -- manufactured solutions --------------------------------------------------
#
# Forcing terms are derived symbolically once per (solution, model) and then
# evaluated pointwise, so they carry no discretization error.

_x, _y, _t = sp.symbols("x y t", real=True)

MANUFACTURED = {
    # phi = exp(sin(pi x) sin(pi y)) sin(t)
    "exp_sin": (sp.exp(sp.sin(sp.pi * _x) * sp.sin(sp.pi * _y)) * sp.sin(_t),),
    # velocity (u1, u2) and pressure p
    "ns_case_a": (
        sp.pi * sp.exp(sp.sin(sp.pi * _x)) * sp.exp(sp.sin(sp.pi * _y)) * sp.cos(sp.pi * _y) * sp.sin(_t) ** 2,
        -sp.pi * sp.exp(sp.sin(sp.pi * _x)) * sp.exp(sp.sin(sp.pi * _y)) * sp.cos(sp.pi * _x) * sp.sin(_t) ** 2,
        sp.exp(sp.cos(sp.pi * _x) * sp.sin(sp.pi * _y)) * sp.sin(_t) ** 2,
    ),
}


def _lap(e):
    return sp.diff(e, _x, 2) + sp.diff(e, _y, 2)


@lru_cache(maxsize=None)
def _forcing_exprs(tag, kind, param_items):
    p = dict(param_items)
    exprs = MANUFACTURED[tag]
    if tag == "ns_case_a":
        if kind is not ModelKind.NAVIER_STOKES:
            raise ValueError("ns_case_a is a Navier-Stokes solution")
        u1, u2, pr = exprs
        nu = p["nu"]
        f1 = sp.diff(u1, _t) - nu * _lap(u1) + u1 * sp.diff(u1, _x) + u2 * sp.diff(u1, _y) + sp.diff(pr, _x)
        f2 = sp.diff(u2, _t) - nu * _lap(u2) + u1 * sp.diff(u2, _x) + u2 * sp.diff(u2, _y) + sp.diff(pr, _y)
        return (f1, f2)
    if kind is ModelKind.NAVIER_STOKES:
        raise ValueError(f"{tag} is a scalar gradient-flow solution")
    (phi,) = exprs
    if kind is ModelKind.ALLEN_CAHN:
        mu = -p["alpha0"] * _lap(phi) + phi**3 - phi
        return (sp.diff(phi, _t) + p["M"] * mu,)
    if kind is ModelKind.CAHN_HILLIARD:
        mu = -p["alpha0"] * _lap(phi) + (phi**3 - phi) / p["eps"] ** 2
        return (sp.diff(phi, _t) - p["M"] * _lap(mu),)
    if kind is ModelKind.PFC:
        beta = p["beta"]
        L_phi = _lap(_lap(phi)) + 2 * beta * _lap(phi) + beta**2 * phi
        mu = L_phi + phi**3 - p["eps"] * phi
        return (sp.diff(phi, _t) - p["M"] * _lap(mu),)
    raise ValueError(kind)


@lru_cache(maxsize=None)
def _lambdified(tag, kind, param_items, what):
    if what == "exact":
        exprs = MANUFACTURED[tag]
    else:
        exprs = _forcing_exprs(tag, kind, param_items)
    return tuple(sp.lambdify((_x, _y, _t), e, modules="numpy") for e in exprs)


def _evaluate(funcs, grid, t):
    if grid.dim != 2:
        raise ValueError("manufactured solutions are defined on 2D grids")
    X, Y = grid.coords()
    return [np.broadcast_to(np.asarray(f(X, Y, float(t)), dtype=float), grid.modes).copy() for f in funcs]


def _exact_values(tag, grid, t):
    if tag not in MANUFACTURED:
        raise ValueError(f"unknown exact-solution tag {tag!r}")
    vals = _evaluate(_lambdified(tag, None, (), "exact"), grid, t)
    if tag == "ns_case_a":
        return np.stack(vals[:2])
    return vals[0]


def _param_key(model):
    return tuple(sorted((k, float(v)) for k, v in model.params.items() if isinstance(v, (int, float))))


def exact_solution(model: ModelSpec, tag: str, t: float):
    """The closed-form solution at time ``t``: ``phi`` or the velocity ``u``."""
    return _exact_values(tag, model.grid, t)


def exact_pressure(model: ModelSpec, tag: str, t: float):
    if tag != "ns_case_a":
        raise ValueError(f"{tag} carries no pressure")
    return _evaluate(_lambdified(tag, None, (), "exact"), model.grid, t)[2]


def manufactured_forcing(model: ModelSpec, tag: str, t: float):
    """Residual ``f`` that makes the closed-form solution exact.

    Gradient flows: ``f = phi_t + G mu(phi)``.  Navier-Stokes:
    ``f = u_t - nu Lap u + (u . grad) u + grad p``.
    """
    if tag not in MANUFACTURED:
        raise ValueError(f"unknown exact-solution tag {tag!r}")
    vals = _evaluate(_lambdified(tag, model.kind, _param_key(model), "forcing"), model.grid, t)
    if model.is_navier_stokes:
        return np.stack(vals)
    return vals[0]


def project_divergence_free(grid: PeriodicGrid, u):
    return grid.ifft(leray_project(grid, grid.fft(u)))
