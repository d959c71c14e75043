import numpy as np
import pytest

from savflow.harness import (
    SCENARIOS,
    ConvergenceStudy,
    OrderEstimate,
    RungFailure,
    compare_schemes,
    convergence_from_config,
    run_convergence,
    run_scenario,
    scenario_config,
)
from savflow.integrators import SchemeOptions, advance, init_state
from savflow.io import read_energy_csv, read_snapshot
from savflow.models import CRYSTALLITE_ANGLES, CRYSTALLITE_CENTERS, exact_solution, make_model
from savflow.spectral import build_grid, l2_norm

LADDER = tuple(0.1 / 2**i for i in range(5))  # 1/10 ... 1/160


@pytest.fixture(scope="module")
def caseA():
    g = build_grid(2, [2.0, 2.0], [32, 32])
    return make_model("allen_cahn", g, M=1.0, alpha0=1e-4, manufactured="exp_sin")


class TestOrderEstimate:
    def test_exact_power_law(self):
        dts = [0.1, 0.05, 0.025]
        est = OrderEstimate.from_errors(dts, [3 * d**2 for d in dts])
        assert est.slope == pytest.approx(2.0)
        assert est.pairwise == pytest.approx((2.0, 2.0))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            OrderEstimate.from_errors([0.1, 0.05], [1e-3, 0.0])


class TestConvergenceStudy:
    @pytest.mark.parametrize("ladder", [(0.1,), (0.05, 0.1), (0.1, 0.1), (0.1, 0.03)])
    def test_bad_ladder(self, caseA, ladder):
        with pytest.raises(ValueError):
            ConvergenceStudy(caseA, "eop_sav_cn", ladder, 0.5)

    def test_needs_manufactured(self):
        g = build_grid(2, [2.0, 2.0], [16, 16])
        m = make_model("allen_cahn", g, M=1.0, alpha0=1e-4)
        with pytest.raises(ValueError):
            ConvergenceStudy(m, "eop_sav_cn", (0.1, 0.05), 0.5)

    def test_eop_sav_order(self, caseA):
        est = run_convergence(ConvergenceStudy(caseA, "eop_sav_cn", LADDER, 0.5))
        assert 1.75 <= est.slope <= 2.4

    def test_one_step_errors_shrink(self, caseA):
        errors = []
        for dt in (0.1, 0.05, 0.025):
            s = init_state(caseA, "eop_gsav_bdf", exact_solution(caseA, "exp_sin", 0.0), dt, k=1)
            s, _ = advance(s, caseA, 1)
            errors.append(l2_norm(caseA.grid, s.phi - exact_solution(caseA, "exp_sin", dt)))
        assert errors[0] > errors[1] > errors[2] > 0

    @pytest.mark.parametrize("k", [1, 2])
    def test_eop_gsav_beats_gsav(self, caseA, k):
        eop = run_convergence(ConvergenceStudy(caseA, "eop_gsav_bdf", LADDER, 0.5, k=k))
        base = run_convergence(ConvergenceStudy(caseA, "gsav_bdf", LADDER, 0.5, k=k))
        assert all(e <= b for e, b in zip(eop.errors, base.errors))

    def test_self_reference_agrees(self, caseA):
        manu = run_convergence(ConvergenceStudy(caseA, "eop_sav_cn", LADDER, 0.5))
        selfref = run_convergence(
            ConvergenceStudy(caseA, "eop_sav_cn", LADDER, 0.5, reference="fine_dt_self_reference")
        )
        assert abs(manu.slope - selfref.slope) <= 0.3

    def test_cold_start_k3(self, caseA):
        # same-dt BDF1 startup leaves an O(dt^2) global error; fine substeps hide it on this ladder
        plain = run_convergence(ConvergenceStudy(caseA, "eop_gsav_bdf", LADDER, 0.5, k=3,
                                                 startup="cold_bdf1_substeps"))
        assert 1.75 <= plain.slope <= 2.4
        fine = run_convergence(ConvergenceStudy(caseA, "eop_gsav_bdf", LADDER, 0.5, k=3,
                                                startup="cold_bdf1_substeps",
                                                options=SchemeOptions(substeps_pow=10)))
        assert fine.slope >= 2.7

    def test_deterministic(self, caseA):
        a = run_convergence(ConvergenceStudy(caseA, "gsav_bdf", LADDER[:3], 0.5, k=2))
        b = run_convergence(ConvergenceStudy(caseA, "gsav_bdf", LADDER[:3], 0.5, k=2))
        assert a.errors == b.errors

    def test_rung_failure(self):
        g = build_grid(2, [2.0, 2.0], [16, 16])
        m = make_model("allen_cahn", g, M=1.0, alpha0=1e-3, C0=-0.9, manufactured="exp_sin")
        rng = np.random.default_rng(0)
        study = ConvergenceStudy(m, "gsav_bdf", (1.0, 0.5), 200.0,
                                 initial=0.05 * rng.standard_normal(g.modes))
        with pytest.raises(RungFailure) as info:
            run_convergence(study)
        assert info.value.rung == 0 and info.value.step >= 1


class TestScenarios:
    def test_names(self):
        assert set(SCENARIOS) == {"ac_caseA", "ac_caseB", "ch_caseA", "ch_caseB",
                                  "pfc_2d", "pfc_3d", "ns_caseA", "ns_shear"}

    def test_ac_caseB_defaults(self):
        c = scenario_config("ac_caseB")
        assert c.grid["modes"] == (128, 128)
        assert c.model["alpha0"] == pytest.approx(0.01**2)
        assert c.scheme["dt"] == 1e-3
        assert c.output["snapshot_times"] == (10.0, 50.0, 100.0, 200.0)

    def test_ns_caseA_defaults(self):
        c = scenario_config("ns_caseA")
        assert c.grid["extents"] == (2.0, 2.0) and c.grid["modes"] == (40, 40)
        assert c.model["nu"] == 1.0
        assert (c.scheme["t0"], c.scheme["T"]) == (2.0, 3.0)

    def test_pfc_patches(self):
        assert CRYSTALLITE_CENTERS == ((350.0, 400.0), (200.0, 200.0), (600.0, 300.0))
        assert CRYSTALLITE_ANGLES == pytest.approx((-np.pi / 4, 0.0, np.pi / 4))

    def test_short_T_drops_late_snapshots(self):
        c = scenario_config("ac_caseB", ["scheme.T=0.02"])
        assert c.output["snapshot_times"] == ()

    def test_unknown(self):
        with pytest.raises(KeyError):
            scenario_config("kdv")

    def test_run_artifacts(self, tmp_path):
        res = run_scenario("ac_caseB", ["grid.modes=32,32", "scheme.T=0.05",
                                        "output.snapshot_times=0.02,0.05", "output.plot_scripts=true"],
                           tmp_path)
        assert res.violations == []
        assert len(res.records) == 50
        assert (tmp_path / "config.ini").exists()
        assert len(read_energy_csv(tmp_path / "energy.csv")) == 50
        snap = read_snapshot(tmp_path / "phi_t0.05.savf")
        assert snap.time == pytest.approx(0.05)
        np.testing.assert_array_equal(snap.data, res.state.phi)
        assert (tmp_path / "plot_energy.py").exists() and (tmp_path / "plot_fields.py").exists()

    def test_relative_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        run_scenario("ac_caseB", ["grid.modes=16,16", "scheme.T=0.01", "output.snapshot_times=0.01",
                                  "output.plot_scripts=true"], "rel/out")
        text = (tmp_path / "rel" / "out" / "plot_energy.py").read_text()
        assert "'energy.csv'" in text
        assert (tmp_path / "rel" / "out" / "plot_fields.py").exists()

    def test_rerun_bit_identical(self, tmp_path):
        over = ["grid.modes=16,16,16", "scheme.T=1.0", "output.snapshot_times=1.0"]
        run_scenario("pfc_3d", over, tmp_path / "a")
        run_scenario("pfc_3d", over, tmp_path / "b")
        for name in ("energy.csv", "phi_t1.savf"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_changes_output(self, tmp_path):
        over = ["grid.modes=16,16,16", "scheme.T=0.5"]
        a = run_scenario("pfc_3d", over + ["output.seed=1"])
        b = run_scenario("pfc_3d", over + ["output.seed=2"])
        assert a.records[-1].E_original != b.records[-1].E_original


class TestFromConfig:
    def test_convergence_outputs(self, tmp_path):
        c = scenario_config("ac_caseA", ["grid.modes=32,32", "output.plot_scripts=true"])
        est = convergence_from_config(c, LADDER[:4], tmp_path)
        assert 1.75 <= est.slope <= 2.4
        text = (tmp_path / "convergence_eop_sav_cn_k2.csv").read_text()
        assert text.splitlines()[0] == "dt,error" and len(text.splitlines()) == 5
        assert (tmp_path / "plot_convergence.py").exists()

    def test_compare(self, tmp_path):
        c = scenario_config("ac_caseA", ["grid.modes=32,32", "scheme.T=0.1"])
        table = compare_schemes(c, ["gsav", "eop_gsav", "eop_sav"], tmp_path)
        assert table.columns[0] == "t" and len(table.columns) == 4
        lines = (tmp_path / "comparison.csv").read_text().splitlines()
        assert len(lines) == 11
        assert (tmp_path / "gsav" / "energy.csv").exists()
