"""Rank-condition tests and structure matrices."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nullfdi import lti
from nullfdi.isolability import (StructureMatrix, is_completely_detectable, is_s_isolable,
                                 is_strongly_isolable, is_weakly_isolable, make_structure)
from nullfdi.lti import StateSpaceModel
from nullfdi.plant import PartitionedPlant, assemble

from conftest import random_stable_model


def plant_with_faults(seed: int, n_y: int, n_u: int, n_d: int, n_f: int, order: int = 4
                      ) -> PartitionedPlant:
    g = random_stable_model(seed, order, n_y, n_u + n_d + n_f)
    return PartitionedPlant(g, n_u, n_d, 0, n_f)


def scaled_faults(plant: PartitionedPlant) -> PartitionedPlant:
    """Every fault column multiplied by 1/(s + 2)."""
    f_cols = plant.columns("f")
    other = [j for j in range(plant.model.n_inputs) if j not in f_cols]
    lag = lti.append(*[lti.first_order(0.5, 0.5)] * plant.n_f)
    faults = lti.series(lag, lti.select(plant.model, None, f_cols))
    model = lti.hstack(lti.select(plant.model, None, other), faults)
    return PartitionedPlant(model, plant.n_u, plant.n_d, plant.n_w, plant.n_f)


class TestStructure:
    def test_hollow_three(self):
        assert make_structure("hollow", 3).entries.tolist() == [[0, 1, 1], [1, 0, 1],
                                                                [1, 1, 0]]

    def test_wafer_first_row(self):
        row = make_structure("wafer17", 17).row(0)
        assert np.flatnonzero(row == 0).tolist() == [0, 13]

    def test_wafer_row_sums(self):
        sums = make_structure("wafer17", 17).entries.sum(axis=1)
        assert sums[:4].tolist() == [15] * 4
        assert sums[4:].tolist() == [16] * 13

    def test_wafer_needs_seventeen(self):
        with pytest.raises(ValueError):
            make_structure("wafer17", 5)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_structure("diagonal", 3)

    def test_nonbinary_rejected(self):
        with pytest.raises(ValueError):
            StructureMatrix([[0, 2]])

    def test_text_round_trip(self):
        s = make_structure("hollow", 4)
        assert StructureMatrix.from_text(s.to_csv()) == s
        assert StructureMatrix.from_text(s.to_json()) == s


class TestDetectability:
    def test_zero_fault_column(self):
        g = random_stable_model(1, 3, 2, 1)
        plant = assemble(g, g_f=np.array([[0.0, 1.0], [0.0, 0.0]]))
        assert is_completely_detectable(plant) == [False, True]

    def test_identity_faults(self):
        g = random_stable_model(2, 3, 3, 1)
        assert all(is_completely_detectable(assemble(g, sensor_faults=[0, 1, 2])))

    def test_fault_equal_to_disturbance(self):
        g = random_stable_model(3, 3, 2, 1)
        col = np.array([[1.0], [2.0]])
        plant = assemble(g, g_d=col, g_f=np.hstack([col, [[0.0], [1.0]]]))
        assert is_completely_detectable(plant) == [False, True]


class TestIsolability:
    def test_single_row_reduces_to_detectability(self):
        plant = plant_with_faults(4, 3, 1, 1, 3)
        rep = is_s_isolable(plant, StructureMatrix(np.ones((1, 3), dtype=int)))
        assert rep.passed == all(is_completely_detectable(plant))

    def test_hollow_on_dependent_columns(self):
        g = random_stable_model(5, 3, 2, 1)
        plant = assemble(g, g_f=np.array([[1.0, 2.0], [1.0, 2.0]]))
        assert not is_s_isolable(plant, make_structure("hollow", 2)).passed

    def test_sensor_only_strong(self):
        g = random_stable_model(6, 4, 3, 2)
        assert is_strongly_isolable(assemble(g, sensor_faults=[0, 1, 2]))

    def test_combined_not_strong(self):
        g = random_stable_model(7, 4, 3, 2)
        assert not is_strongly_isolable(assemble(g, actuator_faults=[0, 1],
                                                 sensor_faults=[0, 1, 2]))

    def test_actuator_only_tall_strong(self):
        g = random_stable_model(8, 4, 3, 2)
        assert is_strongly_isolable(assemble(g, actuator_faults=[0, 1]))

    def test_single_output_not_weak(self):
        plant = plant_with_faults(9, 1, 1, 0, 3)
        ok, pairs = is_weakly_isolable(plant)
        assert not ok and pairs

    def test_identity_weak(self):
        g = random_stable_model(10, 2, 2, 1)
        assert is_weakly_isolable(assemble(g, sensor_faults=[0, 1]))[0]

    def test_parallel_columns_reported(self):
        g = random_stable_model(11, 3, 3, 1)
        plant = assemble(g, g_f=np.array([[1.0, 3.0, 0.0], [2.0, 6.0, 0.0], [0.0, 0.0, 1.0]]))
        ok, pairs = is_weakly_isolable(plant)
        assert not ok
        assert set(pairs) == {(0, 1), (1, 0)}

    def test_weak_needs_two_faults(self):
        with pytest.raises(ValueError):
            is_weakly_isolable(plant_with_faults(12, 2, 1, 0, 1))

    def test_margin_reported(self):
        plant = plant_with_faults(13, 3, 1, 0, 2)
        rep = is_s_isolable(plant, make_structure("strong", 2))
        assert all(v.margin > 0 for v in rep.checks.values() if v.passed)


def draw_plant(seed: int) -> PartitionedPlant:
    rng = np.random.default_rng(seed)
    n_y = int(rng.integers(1, 4))
    n_d = int(rng.integers(0, n_y))
    n_f = int(rng.integers(2, 5))
    g = random_stable_model(seed, int(rng.integers(1, 5)), n_y, 1 + n_d + n_f)
    return PartitionedPlant(g, 1, n_d, 0, n_f)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_scalar_prefactor_invariance(seed):
    plant = draw_plant(seed)
    other = scaled_faults(plant)
    assert is_completely_detectable(plant) == is_completely_detectable(other)
    assert is_strongly_isolable(plant) == is_strongly_isolable(other)
    assert is_weakly_isolable(plant)[0] == is_weakly_isolable(other)[0]
    s = make_structure("hollow", plant.n_f)
    assert is_s_isolable(plant, s).passed == is_s_isolable(other, s).passed


@pytest.mark.parametrize("seed", range(50))
def test_implication_chain(seed):
    plant = draw_plant(seed)
    strong = is_strongly_isolable(plant)
    weak = is_weakly_isolable(plant)[0]
    detect = all(is_completely_detectable(plant))
    assert (not strong) or weak
    assert (not weak) or detect
    assert strong == is_s_isolable(plant, make_structure("strong", plant.n_f)).passed
    assert weak == is_s_isolable(plant, make_structure("hollow", plant.n_f)).passed


def test_structures_of_wafer_plant():
    from nullfdi.wafer import generate_wafer_plant
    plant = generate_wafer_plant(7)
    assert is_s_isolable(plant, make_structure("wafer17", 17)).passed
    assert not is_strongly_isolable(plant)
