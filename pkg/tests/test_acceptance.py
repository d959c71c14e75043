"""
Acceptance suite: one PASS/FAIL line per criterion, collected in the
"acceptance criteria" section of the pytest summary.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np
import pytest

from savflow.harness import SCENARIOS, ConvergenceStudy, build_run, run_convergence, run_scenario, scenario_config
from savflow.integrators import advance, cn_stepI, init_state, rsav_relax, startup, step
from savflow.models import exact_solution, make_model, nonlinear_energy, quadratic_energy
from savflow.spectral import build_grid, divergence, gradient, leray_project

AC_LADDER = tuple(0.1 / 2**i for i in range(5))  # 1/10 ... 1/160
NS_LADDERS = {
    1: tuple(1 / (40 * 2**i) for i in range(5)),  # 1/40 ... 1/640
    2: tuple(1 / (80 * 2**i) for i in range(5)),  # 1/80 ... 1/1280
    3: tuple(1 / (40 * 2**i) for i in range(5)),
    4: tuple(1 / (40 * 2**i) for i in range(5)),
}
GRADIENT_SCHEMES = [
    ("sav_bdf", 1), ("sav_bdf", 2), ("rsav_cn", 2), ("eop_sav_cn", 2),
    ("gsav_bdf", 1), ("gsav_bdf", 2), ("gsav_bdf", 3), ("gsav_bdf", 4),
    ("eop_gsav_bdf", 1), ("eop_gsav_bdf", 2), ("eop_gsav_bdf", 3), ("eop_gsav_bdf", 4),
]
SEEDS = (0, 1, 2)
DTS = (1e-3, 0.1, 1.0, 10.0)


def smooth_random(grid, seed, amp=0.5, offset=0.0, components=()):
    rng = np.random.default_rng(seed)
    coords = grid.coords()
    out = []
    for _ in range(max(1, math.prod(components))):
        field = np.zeros(grid.modes)
        for _ in range(6):
            phase = rng.uniform(0, 2 * np.pi)
            arg = sum(2 * np.pi * rng.integers(0, 4) * x / L for x, L in zip(coords, grid.extents))
            field += rng.normal() * np.cos(arg + phase)
        out.append(offset + amp * field / max(np.max(np.abs(field)), 1e-300))
    return np.stack(out) if components else out[0]


def stability_models():
    g_ac = build_grid(2, [2.0, 2.0], [32, 32])
    g_pfc = build_grid(2, [32.0, 32.0], [32, 32])
    return {
        "allen_cahn": (make_model("allen_cahn", g_ac, M=1.0, alpha0=1e-2), 0.0),
        "cahn_hilliard": (make_model("cahn_hilliard", g_ac, M=1.0, alpha0=0.04, eps=1.0), 0.0),
        "pfc": (make_model("pfc", g_pfc, M=1.0, beta=1.0, eps=0.25), 0.2),
    }


@pytest.fixture(scope="module")
def stability_runs():
    """Every scheme, 3 seeds, 4 time steps, 50 steps each: (label, scheme, records) triples."""
    runs = []
    for name, (model, offset) in stability_models().items():
        for scheme, k in GRADIENT_SCHEMES:
            for seed in SEEDS:
                phi0 = smooth_random(model.grid, seed, amp=0.6, offset=offset)
                for dt in DTS:
                    _, recs = advance(init_state(model, scheme, phi0, dt, k=k), model, 50)
                    runs.append((f"{name}/{scheme}/k{k}/seed{seed}/dt{dt:g}", scheme, recs))
    g = build_grid(2, [2 * np.pi, 2 * np.pi], [32, 32])
    ns = make_model("navier_stokes", g, nu=0.05)
    for k in (1, 2, 3, 4):
        for seed in SEEDS:
            u0 = smooth_random(g, seed, amp=1.0, components=(2,))
            for dt in DTS:
                _, recs = advance(init_state(ns, "ns_eop_gsav_bdf", u0, dt, k=k), ns, 50)
                runs.append((f"navier_stokes/k{k}/seed{seed}/dt{dt:g}", "ns_eop_gsav_bdf", recs))
    return runs


def test_c1_convergence_orders(criterion):
    g = build_grid(2, [2.0, 2.0], [32, 32])
    ac = make_model("allen_cahn", g, M=1.0, alpha0=1e-4, manufactured="exp_sin")
    cases = [("eop_sav_cn", 2), ("rsav_cn", 2), ("sav_bdf", 1), ("sav_bdf", 2)]
    cases += [("eop_gsav_bdf", k) for k in (1, 2, 3, 4)]
    t0 = time.perf_counter()
    ac_slopes = {}
    for scheme, k in cases:
        est = run_convergence(ConvergenceStudy(ac, scheme, AC_LADDER, 0.5, k=k))
        ac_slopes[(scheme, k)] = est.slope
    ac_time = time.perf_counter() - t0

    gn = build_grid(2, [2.0, 2.0], [40, 40])
    ns = make_model("navier_stokes", gn, nu=1.0, manufactured="ns_case_a")
    t0 = time.perf_counter()
    ns_slopes = {}
    for k, ladder in NS_LADDERS.items():
        est = run_convergence(ConvergenceStudy(ns, "ns_eop_gsav_bdf", ladder, 3.0, k=k, t0=2.0))
        ns_slopes[k] = est.slope
    ns_time = time.perf_counter() - t0

    def inside(k, s):
        return k - 0.25 <= s <= k + 0.4

    ok = all(inside(k, s) for (_, k), s in ac_slopes.items())
    ok &= all(inside(k, s) for k, s in ns_slopes.items())
    ok &= ac_time < 60 and ns_time < 120
    detail = ", ".join(f"{s}/k{k} {v:.3f}" for (s, k), v in ac_slopes.items())
    detail += f" [{ac_time:.1f} s]; NS " + ", ".join(f"k{k} {v:.3f}" for k, v in ns_slopes.items())
    detail += f" [{ns_time:.1f} s]"
    criterion(1, ok, detail)


def test_c2_unconditional_stability(criterion, stability_runs):
    violations, steps = [], 0
    for label, _, recs in stability_runs:
        for r in recs:
            if r.diagnostic_tag == "none":
                continue
            steps += 1
            if r.dE_modified > 1e-9 * max(1.0, abs(r.E_modified)):
                violations.append(f"{label} step {r.step}: +{r.dE_modified:.2e}")
    detail = f"{len(stability_runs)} runs, {steps} audited steps, {len(violations)} increases"
    if violations:
        detail += "; first: " + violations[0]
    criterion(2, not violations, detail)


def test_c3_eop_cap(criterion, stability_runs):
    worst, count, bad = -math.inf, 0, []
    for label, scheme, recs in stability_runs:
        if not scheme.startswith(("eop", "ns_eop")):
            continue
        for r in recs:
            count += 1
            excess = (r.E_modified - r.E_original) / max(1.0, abs(r.E_original))
            worst = max(worst, excess)
            if excess > 1e-9:
                bad.append(f"{label} step {r.step}")
    criterion(3, not bad, f"{count} EOP steps, max (E_modified - E_original)/scale = {worst:.2e}")


def _smallest_feasible(R_tilde, S, dt, eta, d, n=10_000):
    lam = np.arange(n + 1) / n
    R = lam * R_tilde + (1 - lam) * S
    return lam[np.argmax(R**2 - R_tilde**2 <= dt * eta * d)]


def test_c4_rsav_optimality(criterion):
    g = build_grid(2, [2.0, 2.0], [32, 32])
    m = make_model("allen_cahn", g, M=1.0, alpha0=1e-2)
    rng = np.random.default_rng(2024)
    worst, nonzero, bad = 0.0, 0, 0
    for i in range(200):
        dt = 10 ** rng.uniform(-3, 1)
        eta = rng.uniform(0, 1)
        phi0 = smooth_random(g, 100 + i, amp=rng.uniform(0.1, 1.2))
        s = startup(init_state(m, "rsav_cn", phi0, dt), m)
        res = cn_stepI(s, m)
        R_tilde = res.R_tilde
        if i % 2:
            # push R~ away from the cap so the constraint binds
            S = math.sqrt(nonlinear_energy(m, res.phi_next) + m.shift_C)
            R_tilde = S * rng.uniform(0.3, 1.7)
        rel = rsav_relax(R_tilde, s.R, res.phi_next, res.mu_half, m, dt, eta)
        S = math.sqrt(nonlinear_energy(m, res.phi_next) + m.shift_C)
        d = g.cell_volume * np.sum(res.mu_half**2)  # (G mu, mu) with G = M = 1
        scan = _smallest_feasible(R_tilde, S, dt, eta, d)
        gap = abs(rel.lambda0 - scan)
        worst = max(worst, gap)
        nonzero += rel.lambda0 > 0
        if gap > 1e-4 or not 0.0 <= rel.lambda0 <= 1.0:
            bad += 1
    criterion(4, bad == 0, f"200 cases ({nonzero} with lambda0 > 0), max |lambda0 - scan| = {worst:.1e}")


def test_c5_min_rule(criterion):
    models = stability_models()
    worst_res, steps, bad = 0.0, 0, []
    for name, (m, offset) in models.items():
        for seed in SEEDS:
            for dt in DTS:
                s = startup(init_state(m, "eop_sav_cn", smooth_random(m.grid, seed, 0.6, offset), dt), m)
                for _ in range(20):
                    before = s
                    s = step(s, m)
                    dg = s.diagnostics
                    cap = math.sqrt(nonlinear_energy(m, s.phi) + s.shift)
                    s2 = quadratic_energy(m, before.phi) - quadratic_energy(m, s.phi) + before.R**2
                    if s.R != min(dg["s"], cap) or dg["cap"] != cap:
                        bad.append(f"{name} seed {seed} dt {dt} step {s.step_index}")
                    lhs = quadratic_energy(m, s.phi) + dg["R_tilde"] ** 2 - quadratic_energy(m, before.phi) - before.R**2
                    rhs = -dt * dg["d"]
                    res = abs(lhs - rhs) / max(abs(rhs), 1e-300)
                    if abs(rhs) > 1e-14 * max(1.0, before.R**2):
                        worst_res = max(worst_res, res)
                    if abs(dg["s"] ** 2 - max(s2, 0.0)) > 1e-12 * max(1.0, before.R**2):
                        bad.append(f"{name} s mismatch step {s.step_index}")
                    steps += 1
    ok = not bad and worst_res <= 1e-8
    criterion(5, ok, f"{steps} steps, R = min(s, cap) exactly: {not bad}; max identity residual {worst_res:.1e}")


def test_c6_fig2_signs(criterion):
    g = build_grid(2, [2.0, 2.0], [64, 64])
    m = make_model("allen_cahn", g, M=1.0, alpha0=1e-4, manufactured="exp_sin")
    phi0 = exact_solution(m, "exp_sin", 0.0)
    _, eop = advance(init_state(m, "eop_sav_cn", phi0, 0.01), m, 50, startup_method="exact_history")
    _, rsav = advance(init_state(m, "rsav_cn", phi0, 0.01), m, 50, startup_method="exact_history")
    eop_steps = [r for r in eop if r.diagnostic_tag != "none"]
    rsav_steps = [r for r in rsav if r.diagnostic_tag != "none"]
    neg = sum(r.diagnostic_value < 0 for r in eop_steps)
    zero = sum(r.diagnostic_value == 0.0 for r in rsav_steps)
    _, eop_cold = advance(init_state(m, "eop_sav_cn", phi0, 0.01), m, 50)
    neg_cold = sum(r.diagnostic_value < 0 for r in eop_cold)
    ok = neg == len(eop_steps) and zero == len(rsav_steps) and neg_cold == 50
    criterion(6, ok, f"E1 - s < 0 on {neg}/{len(eop_steps)} scheme steps ({neg_cold}/50 with cold start); "
                     f"lambda0 = 0 on {zero}/{len(rsav_steps)}")


def test_c7_fig1_ranking(criterion):
    g = build_grid(2, [2.0, 2.0], [32, 32])
    m = make_model("allen_cahn", g, M=1.0, alpha0=1e-4, manufactured="exp_sin")
    ranking = True
    for k in (1, 2):
        eop = run_convergence(ConvergenceStudy(m, "eop_gsav_bdf", AC_LADDER, 0.5, k=k))
        base = run_convergence(ConvergenceStudy(m, "gsav_bdf", AC_LADDER, 0.5, k=k))
        ranking &= all(e <= b for e, b in zip(eop.errors, base.errors))
    g64 = build_grid(2, [2.0, 2.0], [64, 64])
    m64 = make_model("allen_cahn", g64, M=1.0, alpha0=1e-4, manufactured="exp_sin")
    err = {}
    for scheme in ("gsav_bdf", "eop_gsav_bdf"):
        est = run_convergence(ConvergenceStudy(m64, scheme, (0.02, 0.01), 0.5, k=2))
        err[scheme] = est.errors[-1]
    reference = {"gsav_bdf": 5.5896e-5, "eop_gsav_bdf": 4.3071e-5}
    factors = {s: max(err[s] / reference[s], reference[s] / err[s]) for s in err}
    ok = ranking and err["eop_gsav_bdf"] <= err["gsav_bdf"] and all(f <= 3 for f in factors.values())
    criterion(7, ok, f"rung-wise EOP <= GSAV for BDF1/BDF2: {ranking}; BDF2 dt=0.01 errors "
                     f"GSAV {err['gsav_bdf']:.4e} (factor {factors['gsav_bdf']:.2f} from reference), "
                     f"EOP-GSAV {err['eop_gsav_bdf']:.4e} (factor {factors['eop_gsav_bdf']:.2f})")


def test_c8_navier_stokes_structure(criterion):
    worst_div = [0.0]
    worst_p = [0.0]

    def full_fft_residual(u, p, extents):
        # independent route: complex FFT, explicit wavenumbers
        n1, n2 = u.shape[1:]
        q1 = 2 * np.pi * np.fft.fftfreq(n1, extents[0] / n1)[:, None]
        q2 = 2 * np.pi * np.fft.fftfreq(n2, extents[1] / n2)[None, :]
        # first derivatives drop the unpaired Nyquist mode; the Laplacian keeps it
        k1 = np.where(np.abs(np.fft.fftfreq(n1) * n1)[:, None] == n1 // 2, 0.0, q1)
        k2 = np.where(np.abs(np.fft.fftfreq(n2) * n2)[None, :] == n2 // 2, 0.0, q2)
        uh = np.fft.fft2(u)
        dx = lambda fh: np.real(np.fft.ifft2(1j * k1 * fh))
        dy = lambda fh: np.real(np.fft.ifft2(1j * k2 * fh))
        adv = np.stack([u[0] * dx(uh[i]) + u[1] * dy(uh[i]) for i in range(2)])
        ah = np.fft.fft2(adv)
        div_adv = np.fft.ifft2(1j * k1 * ah[0] + 1j * k2 * ah[1]).real
        lap_p = np.fft.ifft2(-(q1**2 + q2**2) * np.fft.fft2(p)).real
        return np.linalg.norm(lap_p + div_adv) / np.linalg.norm(div_adv)

    def observe(state, rec):
        grid = state_grid[0]
        uh = grid.fft(state.phi)
        div = divergence(grid, uh)
        worst_div[0] = max(worst_div[0], math.sqrt(grid.spectral_inner(div, div) / grid.spectral_inner(uh, uh)))
        if "pressure" in state.diagnostics:
            worst_p[0] = max(worst_p[0], full_fft_residual(state.phi, state.diagnostics["pressure"],
                                                           grid.extents))

    config = scenario_config("ns_shear", ["scheme.T=0.12", "output.snapshot_times="])
    model, state = build_run(config)
    state_grid = [model.grid]
    _, recs = advance(state, model, 200, observers=[observe])

    g = build_grid(2, [1.0, 1.0], [128, 128])
    q = np.random.default_rng(8).standard_normal(g.modes)
    grad = gradient(g, g.fft(q))
    leray = np.max(np.abs(g.ifft(leray_project(g, grad)))) / np.max(np.abs(g.ifft(grad)))
    ok = len(recs) == 200 and worst_div[0] <= 1e-10 and leray <= 1e-12 and worst_p[0] <= 1e-9
    criterion(8, ok, f"max |div u|/|u| = {worst_div[0]:.1e} over 200 steps at 128^2; "
                     f"Leray on gradients {leray:.1e}; pressure residual {worst_p[0]:.1e}")


def test_c9_dense_oracle(criterion):
    n, Lx, M, a0, dt = 8, 2.0, 0.7, 0.05, 0.3
    g = build_grid(2, [Lx, Lx], [n, n])
    m = make_model("allen_cahn", g, M=M, alpha0=a0)
    phi_n = smooth_random(g, 3, amp=0.9)
    out = step(init_state(m, "sav_bdf", phi_n, dt, k=1), m)
    N, h2 = n * n, (Lx / n) ** 2
    F1 = np.fft.fft(np.eye(n), axis=0)
    F = np.kron(F1, F1)
    kx = 2 * np.pi * np.fft.fftfreq(n, d=Lx / n)
    k2 = (kx[:, None] ** 2 + kx[None, :] ** 2).ravel()
    Lmat = np.real(np.linalg.inv(F) @ np.diag(a0 * k2) @ F)
    Rn = math.sqrt(np.sum(0.25 * (phi_n**2 - 1) ** 2) * h2 + 1.0)
    b = ((phi_n**3 - phi_n) / Rn).ravel()
    A = np.zeros((N + 1, N + 1))
    A[:N, :N] = np.eye(N) + dt * M * Lmat
    A[:N, N] = dt * M * b
    A[N, :N] = -0.5 * h2 * b
    A[N, N] = 1.0
    rhs = np.concatenate([phi_n.ravel(), [Rn - 0.5 * h2 * b @ phi_n.ravel()]])
    sol = np.linalg.solve(A, rhs)
    diff = max(np.max(np.abs(out.phi.ravel() - sol[:N])), abs(out.R - sol[N]))
    criterion(9, diff <= 1e-10, f"max |spectral - dense| = {diff:.1e}")


def test_c10_determinism(criterion, tmp_path):
    small = {
        "ac_caseA": ["grid.modes=32,32", "scheme.T=0.1"],
        "ac_caseB": ["grid.modes=32,32", "scheme.T=0.02"],
        "ch_caseA": ["grid.modes=32,32", "scheme.T=0.1"],
        "ch_caseB": ["grid.modes=64,64", "scheme.T=0.02"],
        "pfc_2d": ["grid.modes=64,64", "scheme.T=0.4"],
        "pfc_3d": ["grid.modes=16,16,16", "scheme.T=1.0"],
        "ns_caseA": ["grid.modes=16,16", "scheme.T=2.1"],
        "ns_shear": ["grid.modes=32,32", "scheme.T=0.012"],
    }
    assert set(small) == set(SCENARIOS)
    same, violations = [], []
    for name, over in small.items():
        a = run_scenario(name, over, tmp_path / name / "a")
        run_scenario(name, over, tmp_path / name / "b")
        files = sorted(p.name for p in (tmp_path / name / "a").iterdir())
        same.append(all((tmp_path / name / "a" / f).read_bytes() == (tmp_path / name / "b" / f).read_bytes()
                        for f in files))
        violations += a.violations
    ok = all(same) and not violations
    criterion(10, ok, f"{sum(same)}/{len(same)} scenarios byte-identical on rerun; "
                      f"{len(violations)} audit violations in the smoke runs")
