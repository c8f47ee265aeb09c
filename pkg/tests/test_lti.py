"""State-space core: evaluation, interconnection, poles, rank and norms."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nullfdi import lti
from nullfdi.lti import StateSpaceModel

from conftest import grid_points, random_stable_model

INTEGRATOR = StateSpaceModel([[0.0]], [[1.0]], [[1.0]], [[0.0]])
LAG = lti.first_order(1.0)


def resonance(zeta: float, wn: float = 1.0) -> StateSpaceModel:
    return StateSpaceModel([[0.0, 1.0], [-wn ** 2, -2 * zeta * wn]], [[0.0], [wn ** 2]],
                           [[1.0, 0.0]], [[0.0]])


class TestEvaluation:
    def test_integrator_at_two(self):
        assert lti.evaluate(INTEGRATOR, 2.0)[0, 0] == pytest.approx(0.5)

    def test_static_gain(self):
        assert lti.evaluate(lti.gain(3.0), 1j)[0, 0] == pytest.approx(3.0)

    def test_first_order_at_unit_frequency(self):
        assert lti.evaluate(LAG, 1j)[0, 0] == pytest.approx((1 - 1j) / 2, abs=1e-14)

    def test_transfer_function_oracle(self):
        # scipy's ss2tf gives an independent polynomial evaluation.
        from scipy import signal
        g = random_stable_model(1, 5, 1, 1)
        num, den = signal.ss2tf(g.a, g.b, g.c, g.d)
        for s in (0.3j, 2.0 + 1j, 40j):
            want = np.polyval(num[0], s) / np.polyval(den, s)
            assert lti.evaluate(g, s)[0, 0] == pytest.approx(want, rel=1e-9)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            StateSpaceModel([[np.nan]], [[1.0]], [[1.0]], [[0.0]])


class TestInterconnection:
    def test_poles_of_lightly_damped_pair(self):
        p = lti.poles(StateSpaceModel([[0, 1], [-1, -0.1]], [[0], [1]], [[1, 0]], [[0]]))
        assert np.allclose(p.real, -0.05)

    @pytest.mark.parametrize("k", [0.5, 2.0, 10.0])
    def test_feedback_of_integrator(self, k):
        cl = lti.feedback(INTEGRATOR, lti.gain(k))
        assert np.allclose(lti.poles(cl), -k)

    def test_series_of_gains(self):
        assert lti.series(lti.gain(2.0), lti.gain(3.0)).d[0, 0] == 6.0

    def test_connect_dispatch(self):
        g = lti.connect("col_concat", LAG, LAG)
        assert g.shape == (2, 1)
        with pytest.raises(ValueError):
            lti.connect("parallel_universe", LAG)

    def test_stack_and_concat_shapes(self):
        assert lti.hstack(LAG, LAG).shape == (1, 2)
        assert lti.append(LAG, lti.gain(np.eye(2))).shape == (3, 3)

    def test_mixed_sample_times_rejected(self):
        disc = StateSpaceModel([[0.5]], [[1.0]], [[1.0]], [[0.0]], 0.1)
        with pytest.raises(ValueError):
            lti.series(LAG, disc)

    def test_ill_posed_feedback(self):
        with pytest.raises(lti.IllPosedLoopError):
            lti.feedback(lti.gain(1.0), lti.gain(-1.0))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n1=st.integers(1, 5), n2=st.integers(1, 5))
def test_series_evaluates_as_product(seed, n1, n2):
    g1 = random_stable_model(seed, n1, 2, 3)
    g2 = random_stable_model(seed + 1, n2, 2, 2)
    s = complex(*np.random.default_rng(seed).uniform(-3, 3, 2))
    if np.min(np.abs(np.concatenate([lti.poles(g1), lti.poles(g2)]) - s)) < 1e-3:
        return
    want = lti.evaluate(g2, s) @ lti.evaluate(g1, s)
    got = lti.evaluate(lti.series(g1, g2), s)
    assert np.max(np.abs(got - want)) <= 1e-9 * (1 + np.max(np.abs(want)))
    # poles of the cascade are the union of the factors' poles
    assert np.allclose(np.sort_complex(lti.poles(lti.series(g1, g2))),
                       np.sort_complex(np.concatenate([lti.poles(g1), lti.poles(g2)])))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_feedback_matches_formula(seed):
    g = random_stable_model(seed, 3, 2, 2)
    k = lti.gain(0.2 * np.random.default_rng(seed).standard_normal((2, 2)))
    try:
        t = lti.feedback(g, k)
    except lti.IllPosedLoopError:
        return
    s = 0.7j
    l = lti.evaluate(g, s) @ k.d
    if np.linalg.cond(np.eye(2) + l) > 1e8:
        return
    want = np.linalg.solve(np.eye(2) + l, l)
    assert np.max(np.abs(lti.evaluate(t, s) - want)) <= 1e-8 * (1 + np.max(np.abs(want)))


class TestNormalRank:
    def test_identity(self):
        assert lti.normal_rank(lti.gain(np.eye(4))) == 4

    def test_repeated_column(self):
        assert lti.normal_rank(lti.hstack(LAG, LAG)) == 1

    def test_control_channel_with_identity(self):
        g_u = random_stable_model(4, 6, 4, 13, strictly_proper=True)
        assert lti.normal_rank(lti.hstack(g_u, lti.gain(np.eye(4)))) == 4

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10_000), m=st.integers(1, 4))
    def test_invariant_under_scalar_filter(self, seed, m):
        g = random_stable_model(seed, 4, 3, m)
        filt = lti.append(*[lti.first_order(1 / 3.0, 1 / 3.0)] * 3)  # 1/(s+3)
        assert lti.normal_rank(lti.series(g, filt)) == lti.normal_rank(g)


class TestNorms:
    def test_gain(self):
        assert lti.h_inf_norm(lti.gain(2.0)) == pytest.approx(2.0)

    def test_first_order(self):
        assert lti.h_inf_norm(LAG) == pytest.approx(1.0, rel=1e-6)

    def test_resonance_peak(self):
        # closed form 1 / (2 zeta sqrt(1 - zeta^2))
        zeta = 0.05
        want = 1 / (2 * zeta * np.sqrt(1 - zeta ** 2))
        assert want == pytest.approx(10.01, abs=0.01)
        assert lti.h_inf_norm(resonance(zeta)) == pytest.approx(want, rel=1e-6)

    def test_unstable_rejected(self):
        with pytest.raises(ValueError):
            lti.h_inf_norm(StateSpaceModel([[1.0]], [[1.0]], [[1.0]], [[0.0]]))

    def test_h_minus_of_lag(self):
        # smallest gain of 1/(s+1) over the grid occurs at the top frequency
        w = lti.FrequencyGrid.standard().all()[-1]
        assert lti.h_minus_over_grid(LAG) == pytest.approx(1 / np.hypot(1, w), rel=1e-9)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            lti.FrequencyGrid(np.array([1.0, 0.5]))


def test_minimal_realization_drops_uncontrollable_states():
    g = lti.append(LAG, lti.first_order(0.5))
    one_input = lti.select(g, [0], [0])
    red = lti.minimal_realization(one_input)
    assert red.n_states == 1
    w = grid_points()
    assert np.allclose(lti.freqresp(red, w), lti.freqresp(one_input, w), atol=1e-12)


def test_transmission_zeros_of_nonminimum_phase_model():
    # (1 - s) / (s + 2) has a single zero at s = 1
    g = StateSpaceModel([[-2.0]], [[1.0]], [[3.0]], [[-1.0]])
    assert lti.zeros_of(g) == pytest.approx([1.0])
