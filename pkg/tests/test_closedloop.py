"""Closed-loop maps, discretization, simulation and decision logic."""

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from nullfdi import lti
from nullfdi.closedloop import (ClosedLoopError, DecisionConfig, FaultEvent, FaultScenario,
                                ReferenceSpec, build_closed_loop, calibrate_thresholds, decide,
                                discretize, internal_form, match_signature, moving_rms,
                                simulate)
from nullfdi.isolability import StructureMatrix, make_structure
from nullfdi.lti import StateSpaceModel
from nullfdi.plant import PartitionedPlant, assemble
from nullfdi.synthesis import synthesize_bank, synthesize_detector
from nullfdi.verification import random_plant

from conftest import grid_points, random_stable_model

INTEGRATOR = StateSpaceModel([[0.0]], [[1.0]], [[1.0]], [[0.0]])


def small_system(seed: int = 0, n_d: int = 1):
    plant, ctrl = random_plant(seed, 3, 2, n_d, 0, 3, order=4)
    bank = synthesize_detector(plant)
    return build_closed_loop(plant, ctrl, bank)


class TestBuild:
    def test_zero_controller(self):
        g = random_stable_model(1, 3, 2, 4)
        plant = PartitionedPlant(g, 1, 1, 1, 1)
        sys = build_closed_loop(plant, lti.zeros(1, 2))
        w = grid_points()
        for src in ("d", "w", "f"):
            assert np.max(np.abs(lti.freqresp(sys.map("u", src), w))) == 0.0
            want = lti.freqresp(plant.block(src), w)
            assert np.allclose(lti.freqresp(sys.map("y", src), w), want)

    def test_static_unity_loop(self):
        plant = PartitionedPlant(lti.gain(1.0), 1)
        sys = build_closed_loop(plant, lti.gain(1.0))
        assert np.allclose(lti.freqresp(sys.sensitivity, grid_points()), 0.5)

    def test_integrator_sensitivity_zero_at_dc(self):
        plant = PartitionedPlant(INTEGRATOR, 1)
        sys = build_closed_loop(plant, lti.gain(2.0))
        assert abs(lti.evaluate(sys.sensitivity, 0.0)[0, 0]) < 1e-12

    def test_unstable_loop_rejected(self):
        plant = PartitionedPlant(INTEGRATOR, 1)
        with pytest.raises(ClosedLoopError):
            build_closed_loop(plant, lti.gain(-1.0))

    def test_maps_match_formulas(self):
        g = random_stable_model(2, 4, 2, 3)
        plant = PartitionedPlant(g, 2, 1)
        ctrl = lti.gain(0.1 * np.eye(2))
        sys = build_closed_loop(plant, ctrl)
        s = 0.9j
        gu, gd = lti.evaluate(plant.g_u, s), lti.evaluate(plant.g_d, s)
        sens = np.linalg.inv(np.eye(2) + gu @ ctrl.d)
        assert np.allclose(lti.evaluate(sys.map("y", "r"), s), sens @ gu @ ctrl.d)
        assert np.allclose(lti.evaluate(sys.map("y", "d"), s), sens @ gd)
        assert np.allclose(lti.evaluate(sys.map("u", "d"), s), -ctrl.d @ sens @ gd)


class TestInternalForm:
    def test_zero_filter(self):
        g = random_stable_model(3, 3, 2, 4)
        plant = PartitionedPlant(g, 1, 1, 1, 1)
        forms = internal_form(plant, "open_loop", lti.zeros(1, 3))
        assert all(np.max(np.abs(lti.freqresp(m, grid_points()))) == 0 for m in forms.values())

    def test_explicit_residual(self):
        g = lti.first_order(1.0)
        plant = PartitionedPlant(g, 1)
        q = lti.hstack(lti.gain(1.0), -g)
        r_u = internal_form(plant, "open_loop", q)["u"]
        assert np.max(np.abs(lti.freqresp(r_u, grid_points()))) < 1e-14

    def test_closed_loop_decoupling(self):
        sys = small_system(4)
        forms = internal_form(sys, "closed_loop")
        scale = 1 + np.max(np.abs(lti.freqresp(sys.plant.model, grid_points())))
        for key in ("r", "d"):
            assert np.max(np.abs(lti.freqresp(forms[key], grid_points()))) < 1e-6 * scale

    def test_bad_formulation(self):
        with pytest.raises(ValueError):
            internal_form(small_system(), "sideways")


class TestDiscretize:
    def test_integrator(self):
        d = discretize(INTEGRATOR, 0.01)
        assert d.a[0, 0] == pytest.approx(1.0) and d.b[0, 0] == pytest.approx(0.01)

    def test_gain(self):
        d = discretize(lti.gain([[2.0, 3.0]]), 0.1)
        assert np.array_equal(d.d, [[2.0, 3.0]]) and d.ts == 0.1

    def test_first_order(self):
        d = discretize(StateSpaceModel([[-1.0]], [[1.0]], [[1.0]], [[0.0]]), 0.2)
        assert d.a[0, 0] == pytest.approx(np.exp(-0.2))
        assert d.b[0, 0] == pytest.approx(1 - np.exp(-0.2))

    def test_matrix_exponential_oracle(self):
        g = random_stable_model(5, 4, 2, 2)
        d = discretize(g, 1e-3)
        assert np.allclose(d.a, sla.expm(g.a * 1e-3))

    def test_tustin_singularity(self):
        with pytest.raises(ValueError):
            discretize(StateSpaceModel([[2.0]], [[1.0]], [[1.0]], [[0.0]]), 1.0, "tustin")

    @pytest.mark.parametrize("method", ["zoh", "tustin"])
    def test_low_frequency_agreement(self, method):
        g = random_stable_model(6, 4, 1, 1)
        ts = 1e-3
        d = discretize(g, ts, method)
        w = np.logspace(-2, np.log10(np.pi / ts / 10), 50)
        c, z = lti.freqresp(g, w), lti.freqresp(d, w)
        assert np.max(np.abs(z - c) / np.abs(c)) < 0.02


class TestSimulate:
    def test_fault_free_zero_reference(self):
        sys = small_system(7)
        sc = FaultScenario(2.0, 1e-3)
        res = simulate(sys, sc)
        assert np.max(np.abs(res.residuals)) < 1e-9

    def test_reference_invariance(self):
        sys = small_system(8)
        base = simulate(sys, FaultScenario(3.0, 1e-3))
        moved = simulate(sys, FaultScenario(3.0, 1e-3, ReferenceSpec("fourth_order", 1.0, 1.0, 0)))
        assert np.max(np.abs(moved.y)) > 1e-2
        diff = moved.residuals - base.residuals
        assert np.sqrt(np.mean(diff ** 2)) < 1e-6

    @settings(max_examples=8, deadline=None)
    @given(alpha=st.floats(0.01, 100.0), fault=st.integers(1, 3))
    def test_linearity(self, alpha, fault):
        sys = small_system(9)
        one = FaultScenario(2.0, 1e-3, events=(FaultEvent(fault, 0.5, 1.5, alpha),))
        two = one.with_events((FaultEvent(fault, 0.5, 1.5, 2 * alpha),))
        r1, r2 = simulate(sys, one).residuals, simulate(sys, two).residuals
        assert np.allclose(r2, 2 * r1, rtol=1e-9, atol=1e-12 * alpha)

    def test_actuator_fault_persists(self):
        g = random_stable_model(10, 4, 3, 2)
        plant = assemble(g, actuator_faults=[0, 1])
        ctrl = random_plant(10, 3, 2)[1]
        bank = synthesize_bank(plant, make_structure("hollow", 2))
        sys = build_closed_loop(plant, ctrl, bank)
        res = simulate(sys, FaultScenario(6.0, 1e-3, events=(FaultEvent(1, 1.0, 6.0, 1.0),)))
        tail = np.abs(res.residuals[res.time > 5.0, 1])
        assert np.min(tail) > 1e-3 * np.max(np.abs(res.residuals[:, 1]))

    def test_sine_fault(self):
        sys = small_system(11)
        ev = FaultEvent(1, 0.5, 1.5, 1.0, "sine", 5.0)
        res = simulate(sys, FaultScenario(2.0, 1e-3, events=(ev,)))
        assert np.max(np.abs(res.residuals[res.time > 0.6])) > 0

    def test_event_validation(self):
        with pytest.raises(ValueError):
            FaultScenario(1.0, 1e-3, events=(FaultEvent(1, 0.8, 0.5, 1.0),))

    def test_scenario_round_trip(self):
        sc = FaultScenario(2.0, 1e-3, ReferenceSpec("fourth_order", 1e-4, 1.0, 0),
                           (FaultEvent(2, 0.5, 1.0, 3.0), FaultEvent(1, 1.0, 1.5, 1.0, "sine", 4.0)))
        assert FaultScenario.from_dict(sc.to_dict()) == sc


class TestDecide:
    s = make_structure("hollow", 3)

    def test_quiet(self):
        tr = decide(np.zeros((100, 3)), self.s, np.ones(3), 1e-3)
        assert np.all(tr.isolated == 0)

    def test_signature_match(self):
        res = np.zeros((200, 3))
        res[100:, 1:] = 5.0  # fired pattern (0, 1, 1) is column 1
        tr = decide(res, self.s, np.ones(3), 1e-3, DecisionConfig(window_s=0.005, debounce=3))
        assert tr.isolated[-1] == 1

    def test_ambiguous(self):
        assert match_signature([1, 1, 1], self.s) == -1
        assert match_signature([1, 0, 0], self.s) == -1
        assert match_signature([0, 0, 0], self.s) == 0

    def test_debounce_suppresses_spikes(self):
        res = np.zeros((200, 3))
        res[50:53, 1:] = 100.0
        tr = decide(res, self.s, np.ones(3), 1e-3, DecisionConfig(window_s=0.001, debounce=5))
        assert np.all(tr.isolated == 0)

    def test_threshold_calibration(self):
        rng = np.random.default_rng(0)
        noise = rng.standard_normal((5000, 3))
        thr = calibrate_thresholds(noise, 1e-3)
        rms = moving_rms(noise, 50)
        assert np.allclose(thr, 5 * np.percentile(rms, 99, axis=0))
        assert np.all(calibrate_thresholds(np.zeros((100, 3)), 1e-3) == 1e-9)

    def test_residual_count_mismatch(self):
        with pytest.raises(ValueError):
            decide(np.zeros((10, 2)), self.s, np.ones(2), 1e-3)

    def test_moving_rms_of_constant(self):
        assert np.allclose(moving_rms(np.full((20, 1), -3.0), 5), 3.0)
