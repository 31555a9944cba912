import json
import math

import numpy as np
import pytest

from invsde.errors import ConfigError
from invsde.expr import evaluate
from invsde.harness import (
    ConvergenceTable,
    ErrorReport,
    catalog,
    catalog_names,
    convergence_study,
    export_report,
    get_entry,
    invariant_error,
    parse_report,
    quaternion_definition,
)
from invsde.synthesis import ITO, invariance_residuals

MONOTONE_PAIRS = [
    ("catenoid", "euler"), ("catenoid", "milstein"), ("catenoid", "artemiev"),
    ("dynamic-parabola", "euler"), ("dynamic-parabola", "milstein"), ("dynamic-parabola", "artemiev"),
    ("sphere", "euler"), ("sphere", "milstein"), ("sphere", "artemiev"),
    ("quaternion", "euler"), ("iterated-integrals", "euler"),
]


def _report(h=0.01, eps=0.0123, seed=5):
    return ErrorReport(h, 100, eps, 0.004, 0.0004, 1, seed,
                       {"system": "sphere", "integrator": "milstein", "x0": [0.0, 1.0, 1.0], "t0": 0.0, "T": 5.0})


class TestCatalog:
    def test_five_entries(self):
        assert catalog_names() == ["catenoid", "dynamic-parabola", "sphere", "quaternion", "iterated-integrals"]

    @pytest.mark.parametrize("name", ["catenoid", "dynamic-parabola", "sphere", "quaternion", "iterated-integrals"])
    def test_self_validation(self, name):
        assert get_entry(name).validate() <= 1e-10

    def test_iterated_integrals_has_no_drift(self):
        e = get_entry("iterated-integrals")
        assert e.definition.M == "x2+x4-x1*x3" and e.system.s == 2
        rs = np.random.default_rng(0)
        for x in rs.normal(size=(20, 4)):
            assert np.all(e.system.drift_at(0.0, x) == 0.0)
            assert np.all(e.system_for("euler").drift_at(0.0, x) == 0.0)

    def test_quaternion_unit_start(self):
        e = get_entry("quaternion")
        for x0 in e.initial_states:
            assert sum(v * v for v in x0) == 1.0
        assert e.ito_system.interpretation == ITO

    def test_quaternion_time_varying_omega(self):
        d = quaternion_definition(omega=("sin(t)", 0.2, "cos(3*t)"))
        pts = np.random.default_rng(1).normal(size=(200, 4))
        r = invariance_residuals(d.build(), "x1^2+x2^2+x3^2+x4^2", pts, np.linspace(0, 5, 200))
        assert r.max_residual <= 1e-12

    def test_catenoid_initial_states(self):
        e = get_entry("catenoid")
        assert e.initial_states == ((0.0, 1.0, 0.0), (1.0, 0.0, 0.0))
        for x0 in e.initial_states:
            assert evaluate(e.M, 0.0, list(x0)) == 0.0

    def test_parabola_states_share_level(self):
        e = get_entry("dynamic-parabola")
        levels = [evaluate(e.M, 0.0, list(x)) for x in e.initial_states]
        assert levels == pytest.approx([3.0, 3.0, 3.0], abs=1e-15)

    def test_sphere_matrices(self):
        m = get_entry("sphere").matrices
        assert m["S"] == [[0.0, 1.0, 0.0], [-1.0, 0.0, -1.0], [0.0, 1.0, 0.0]]
        assert m["F"] == [[-0.5, 0.0, -0.5], [0.0, -1.0, 0.0], [-0.5, 0.0, -0.5]]

    def test_references(self):
        e = get_entry("catenoid")
        assert e.reference((0, 1, 0), 0.01) == 3.315e-2
        assert e.reference((1, 0, 0), 1e-4) == 3.393e-4
        assert e.reference((0, 1, 0), 0.5) is None

    def test_unknown_name_suggests(self):
        with pytest.raises(KeyError, match="sphere"):
            get_entry("spere")


class TestInvariantError:
    def test_analytic_sphere_exact(self):
        e = get_entry("sphere")
        r = invariant_error(e.system, "analytic_sphere", (0, 1, 1), 0.0, 5.0, 0.01, R=100, seed=3)
        assert 0.0 <= r.epsilon <= 1e-12 and r.aborts == 0 and r.R == 100

    def test_bit_identical_repeat(self):
        e = get_entry("dynamic-parabola")
        a = invariant_error(e.system, "artemiev", (1, 1), 0.0, 1.0, 0.01, R=50, seed=11)
        b = invariant_error(e.system, "artemiev", (1, 1), 0.0, 1.0, 0.01, R=50, seed=11)
        assert export_report(a) == export_report(b)

    def test_independent_of_chunks_and_threads(self):
        e = get_entry("catenoid")
        runs = [invariant_error(e.system, "milstein", (0, 1, 0), 0.0, 1.0, 0.01, R=97, seed=2,
                                threads=th, chunk=ch) for th, ch in ((1, 97), (1, 10), (4, 7), (3, 250))]
        assert len({(r.epsilon, r.std, r.stderr) for r in runs}) == 1

    def test_seed_changes_result(self):
        e = get_entry("sphere")
        a = invariant_error(e.system, "milstein", (0, 1, 1), 0.0, 1.0, 0.01, R=20, seed=1)
        b = invariant_error(e.system, "milstein", (0, 1, 1), 0.0, 1.0, 0.01, R=20, seed=2)
        assert a.epsilon != b.epsilon

    def test_statistics_consistent(self):
        e = get_entry("sphere")
        r = invariant_error(e.system, "milstein", (0, 1, 1), 0.0, 1.0, 0.01, R=64, seed=0)
        assert r.epsilon >= 0.0
        assert r.stderr == pytest.approx(r.std / 8.0, rel=1e-15)

    def test_aborts_counted(self):
        from invsde.synthesis import STRATONOVICH, hand_entered
        system = hand_entered(2, STRATONOVICH, ["x1^2", "0"], [["x1", "0"]], M="x2")
        r = invariant_error(system, "milstein", (5.0, 0.0), 0.0, 2.0, 0.01, R=20, seed=0)
        assert r.aborts == 20 and r.failed and math.isnan(r.epsilon)

    @pytest.mark.parametrize("kw", [{"R": 0}, {"h": 0.3}, {"integrator": "rk4"}])
    def test_config_errors(self, kw):
        e = get_entry("sphere")
        args = {"integrator": "milstein", "h": 0.01, "R": 10} | kw
        with pytest.raises(ConfigError):
            invariant_error(e.system, args["integrator"], (0, 1, 1), 0.0, 1.0, args["h"], R=args["R"])


class TestReportFormat:
    def test_failed_threshold(self):
        assert not ErrorReport(0.01, 1000, 0.1, 0, 0, 10, 0).failed
        assert ErrorReport(0.01, 1000, 0.1, 0, 0, 11, 0).failed

    def test_csv_header(self):
        assert export_report(_report()).splitlines()[0] == "h,R,epsilon,stderr,aborts"

    def test_json_has_seed(self):
        doc = json.loads(export_report(_report(seed=42), "json"))
        assert doc["seed"] == 42

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_report_roundtrip(self, fmt):
        r = _report(eps=1 / 3)
        assert parse_report(export_report(r, fmt), fmt) == r

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_table_roundtrip(self, fmt):
        table = ConvergenceTable([_report(0.01, 0.1), _report(0.001, 0.0103)])
        back = parse_report(export_report(table, fmt), fmt)
        assert isinstance(back, ConvergenceTable) and back.rows == table.rows

    def test_unknown_format(self):
        with pytest.raises(ConfigError):
            export_report(_report(), "xml")


class TestConvergenceTable:
    def test_order(self):
        table = ConvergenceTable([_report(0.01, 0.1), _report(0.001, 0.01)])
        assert table.orders == pytest.approx([1.0], rel=1e-14)

    @pytest.mark.parametrize("hs", [[0.01], [0.001, 0.01], [0.01, 0.01]])
    def test_ladder_validation(self, hs):
        with pytest.raises(ConfigError):
            ConvergenceTable([_report(h) for h in hs])

    def test_study_rejects_single_rung(self):
        e = get_entry("sphere")
        with pytest.raises(ConfigError):
            convergence_study(e.system, "milstein", (0, 1, 1), 0.0, 1.0, [0.01], R=10)

    def test_study_rows(self):
        e = get_entry("sphere")
        table = convergence_study(e.system, "milstein", (0, 1, 1), 0.0, 1.0, [0.1, 0.01], R=50, seed=4)
        assert [r.h for r in table.rows] == [0.1, 0.01]
        assert all(r.seed == 4 and r.R == 50 for r in table.rows)


@pytest.mark.parametrize("name,integrator", MONOTONE_PAIRS)
def test_drift_shrinks_with_step(name, integrator):
    e = get_entry(name)
    T = min(e.T, e.t0 + 1.0)
    eps = [invariant_error(e.system_for(integrator), integrator, e.initial_states[0], e.t0, T, h,
                           R=200, seed=0).epsilon for h in (1e-2, 1e-3)]
    assert eps[1] < eps[0]


@pytest.mark.slow
@pytest.mark.parametrize("name,integrator", MONOTONE_PAIRS)
def test_drift_shrinks_with_step_full_horizon(name, integrator):
    e = get_entry(name)
    eps = [invariant_error(e.system_for(integrator), integrator, e.initial_states[0], e.t0, e.T, h,
                           R=1000, seed=0).epsilon for h in (1e-2, 1e-3)]
    assert eps[1] < eps[0]
