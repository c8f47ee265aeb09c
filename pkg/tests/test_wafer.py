"""Synthetic wafer-stage case study."""

import numpy as np
import pytest

from nullfdi import lti
from nullfdi.closedloop import (FaultEvent, FaultScenario, ReferenceSpec, build_closed_loop,
                                fourth_order_setpoint, simulate)
from nullfdi.isolability import make_structure
from nullfdi.wafer import (N_ACT, SENSOR_FAULT, case_study_scenario, design_stage_controller,
                           dof_directions, generate_wafer_plant, modal_spec)


@pytest.fixture(scope="module")
def plant():
    return generate_wafer_plant(7)


@pytest.fixture(scope="module")
def controller(plant):
    return design_stage_controller(plant, 7)


class TestPlant:
    def test_dimensions(self, plant):
        assert plant.model.n_states == 20
        assert plant.g_u.shape == (4, 13)
        assert (plant.n_u, plant.n_d, plant.n_w, plant.n_f) == (13, 0, 0, 17)

    def test_fault_columns(self, plant):
        w = np.logspace(-1, 3, 30)
        g_f = lti.freqresp(plant.g_f, w)
        assert np.allclose(g_f[:, :, :13], lti.freqresp(plant.g_u, w))
        assert np.allclose(g_f[:, :, 13:], np.eye(4))

    def test_modes(self):
        spec = modal_spec(7)
        assert spec.n_modes == 10
        assert np.all(np.diff(spec.freq_hz) > 0)
        assert np.all((spec.freq_hz[:3] >= 1) & (spec.freq_hz[:3] <= 5))
        assert np.all((spec.freq_hz[3:] >= 80) & (spec.freq_hz[3:] <= 600))
        assert np.all((spec.damping > 0) & (spec.damping <= 0.6))

    def test_stable(self, plant):
        assert lti.is_stable(plant.model)

    def test_deterministic(self):
        a, b = generate_wafer_plant(7).model, generate_wafer_plant(7).model
        assert all(np.array_equal(getattr(a, k), getattr(b, k)) for k in "abcd")

    def test_mismatch_shifts_frequencies(self):
        spec = modal_spec(7)
        pert = spec.perturbed(2.0)
        assert np.allclose(np.abs(pert.freq_hz / spec.freq_hz - 1), 0.02)
        assert np.array_equal(pert.damping, spec.damping)


class TestController:
    def test_static_decoupling(self, controller):
        assert controller.margins["static_coupling"] < 0.1

    def test_closed_loop_stable(self, plant, controller):
        assert lti.is_stable(build_closed_loop(plant, controller.model).model)

    def test_sensitivity_peak(self, controller):
        assert controller.margins["sensitivity_peak_db"] < 8.0
        assert controller.margins["modulus_margin"] > 0.4

    def test_nominal_bandwidth_kept(self, controller):
        assert controller.bandwidth_hz == 20.0

    @pytest.mark.parametrize("seed", [3, 5])
    def test_bandwidth_backoff(self, seed):
        ctrl = design_stage_controller(seed=seed)
        assert 10.0 <= ctrl.bandwidth_hz < 20.0
        assert ctrl.margins["modulus_margin"] > 0.4


class TestSetpoint:
    def test_stroke_and_endpoints(self):
        ts = 1e-4
        r = fourth_order_setpoint(100e-6, 1.0, ts)
        assert np.max(r) == pytest.approx(100e-6)
        assert r[0] == 0 and abs(r[-1]) < 1e-12
        for k in range(1, 4):
            d = np.diff(r, k) / ts ** k
            assert abs(d[0]) < 1e-12 * 10 ** (4 * k)

    def test_zero_stroke(self):
        assert not np.any(fourth_order_setpoint(0.0, 1.0, 1e-3))

    def test_linear_in_stroke(self):
        a = fourth_order_setpoint(1e-4, 1.0, 1e-3)
        assert np.allclose(fourth_order_setpoint(2e-4, 1.0, 1e-3), 2 * a)

    def test_infeasible_timing(self):
        with pytest.raises(ValueError):
            fourth_order_setpoint(1.0, 1000.0, 1e-3)


class TestScenario:
    def test_timeline(self):
        sc = case_study_scenario(1000.0)
        assert sc.duration == pytest.approx(87.5)
        assert [e.t_start for e in sc.events[:3]] == [2.5, 7.5, 12.5]
        assert sc.events[0].magnitude == 0.1 and sc.events[13].magnitude == SENSOR_FAULT


class TestCaseStudy:
    def test_bank_shape(self, case_study_1khz):
        bank = case_study_1khz["_bank"]
        assert len(bank) == 17
        assert all(f.shape == (1, 17) for f in bank.filters)
        assert bank.achieved_structure == make_structure("wafer17", 17)

    def test_signature_per_window(self, case_study_1khz):
        res = case_study_1khz["_result"]
        trace = res.decisions
        s = make_structure("wafer17", 17)
        for ev in case_study_scenario(1000.0).events:
            win = (res.time >= ev.t_start + 0.1) & (res.time < ev.t_end)
            silent = np.flatnonzero(s.column(ev.fault - 1) == 0)
            assert not trace.fired[win][:, silent].any(), f"fault {ev.fault}"

    def test_persistence(self, case_study_1khz):
        per = case_study_1khz["metrics"]["per_fault"]
        assert all(p["fired_full_hold"] for p in per[:N_ACT])
        assert all(p["fired_first_half_s"] for p in per[N_ACT:])

    def test_sensor_residuals_decay(self, case_study_1khz):
        per = case_study_1khz["metrics"]["per_fault"]
        assert all(p["decay_ratio"] < 0.5 for p in per[N_ACT:])

    def test_halving_sample_time(self, case_study_1khz, plant, controller):
        # 10 kHz (the case-study rate) against 20 kHz. The first millisecond of
        # each window is skipped: a sensor step passes the filter feedthrough
        # as a spike decaying in ~50 us, whose sampled energy scales with ts.
        bank = case_study_1khz["_bank"]
        system = build_closed_loop(plant, controller.model, bank)
        events = (FaultEvent(1, 0.5, 1.5, 0.1), FaultEvent(15, 1.5, 2.5, SENSOR_FAULT))
        ref = ReferenceSpec("fourth_order", 100e-6, 1.0, "z")
        s = make_structure("wafer17", 17)
        rms = []
        for rate in (10_000.0, 20_000.0):
            r = simulate(system, FaultScenario(2.5, 1.0 / rate, ref, events),
                         directions=dof_directions())
            rms.append([np.sqrt(np.mean(r.residuals[(r.time >= e.t_start + 1e-3)
                                                    & (r.time < e.t_end)] ** 2, axis=0))
                        [s.column(e.fault - 1) == 1] for e in events])
        for coarse, fine in zip(*rms):
            assert np.max(np.abs(coarse - fine) / fine) < 0.01
