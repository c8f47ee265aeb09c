"""Nullspace-based fault detection and isolation for closed-loop LTI systems."""

from .closedloop import (DecisionConfig, FaultEvent, FaultScenario, ReferenceSpec,
                         build_closed_loop, internal_form, simulate, simulate_segmented)
from .factorizations import co_inner_outer, left_coprime_factorization, solve_care
from .isolability import (StructureMatrix, is_completely_detectable, is_s_isolable,
                          is_strongly_isolable, is_weakly_isolable, make_structure)
from .lti import StateSpaceModel
from .nullspace import left_nullspace
from .plant import PartitionedPlant, assemble
from .synthesis import (FilterBank, SynthesisError, SynthesisOptions, synthesize_bank,
                        synthesize_detector)
from .verification import check_theorem1, check_theorem2, random_plant

__all__ = [
    "DecisionConfig", "FaultEvent", "FaultScenario", "FilterBank", "PartitionedPlant",
    "ReferenceSpec", "StateSpaceModel", "StructureMatrix", "SynthesisError",
    "SynthesisOptions", "assemble", "build_closed_loop", "check_theorem1", "check_theorem2",
    "co_inner_outer", "internal_form", "is_completely_detectable", "is_s_isolable",
    "is_strongly_isolable", "is_weakly_isolable", "left_coprime_factorization",
    "left_nullspace", "make_structure", "random_plant", "simulate", "simulate_segmented",
    "solve_care", "synthesize_bank", "synthesize_detector",
]
__version__ = "0.1.0"
