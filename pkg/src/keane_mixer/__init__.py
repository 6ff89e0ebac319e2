"""Exact construction and verification of Keane's topologically mixing 4-IET."""

from .exact import (
    BudgetExceeded, Iet, IntegerIet, IntervalSet, Permutation, image_step, iet_apply,
    iet_apply_inverse, iet_new, intersects, iterate_image, orbit, rescale_to_integer,
)
from .induction import (
    InducedMap, NotInKeaneCone, OrbitJumper, Tower, TowerStack, first_return_map,
    induce_on_fourth, induce_within_chain, induction_chain, locate, tower_level,
)
from .keane import (
    ConditionReport, ReturnTable, SearchPolicy, StageParams, build_iet, check_conditions,
    is_prime, lengths_from_params, matrix_A, primality, return_table, search, search_stage,
)
from .harness import (
    KeaneSystem, MixingWindowResult, ObstructionResult, PreconditionError, WitnessEngine,
    lemma2_check, lemma3_check, mixing_window_check, obstruction_check, theorem1_check,
)

__version__ = "0.1.0"
