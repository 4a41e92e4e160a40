from fractions import Fraction

import pytest

from core.failures import InvalidArgumentError
from core.fixtures import FOUR_METAFLOW_LOADS, FOUR_METAFLOW_SIZES, four_metaflow_fabric
from core.model import GainKind
from core.schedulers import SchedulerState, gain, sort_metaflows

SIZE = {mf: sum(parts, Fraction(0)) for mf, parts in FOUR_METAFLOW_SIZES.items()}
LOAD = FOUR_METAFLOW_LOADS


def _state(job, finished_metaflows=(), finished_tasks=()):
    remaining = {f: Fraction(0) for mf in finished_metaflows for f in job.metaflows[mf].flows}
    return SchedulerState(
        fabric=four_metaflow_fabric(),
        jobs={job.job: job},
        remaining=remaining,
        finished_metaflows=frozenset(finished_metaflows),
        finished_tasks=frozenset(finished_tasks),
    )


def test_mf1_direct_gain_is_load_over_remaining(four_metaflows):
    g = gain(_state(four_metaflows), "MF1")
    assert g.kind is GainKind.DIRECT
    assert g.value == LOAD["c1"] / SIZE["MF1"]


def test_mf2_credits_the_cascaded_task(four_metaflows):
    g = gain(_state(four_metaflows, {"MF1", "MF3", "MF4"}, {"c1", "c3"}), "MF2")
    assert g.kind is GainKind.DIRECT
    assert g.value == (LOAD["c2"] + LOAD["c4"]) / SIZE["MF2"]


def test_mf3_indirect_attribute_sums_its_ancestors(four_metaflows):
    g = gain(_state(four_metaflows), "MF3")
    assert g.kind is GainKind.INDIRECT
    assert g.value == SIZE["MF1"] + SIZE["MF3"]


def test_mf4_indirect_attribute_sums_all_four(four_metaflows):
    g = gain(_state(four_metaflows), "MF4")
    assert g.kind is GainKind.INDIRECT
    assert g.value == SIZE["MF1"] + SIZE["MF2"] + SIZE["MF3"] + SIZE["MF4"]


def test_finished_ancestors_drop_out_of_the_indirect_attribute(four_metaflows):
    g = gain(_state(four_metaflows, {"MF1"}, {"c1"}), "MF4")
    assert g.kind is GainKind.INDIRECT
    assert g.value == SIZE["MF2"] + SIZE["MF3"] + SIZE["MF4"]


def test_mf3_turns_direct_once_mf1_is_done(four_metaflows):
    # c1 has not run yet, but it can start without MF3, so only c3 is credited.
    g = gain(_state(four_metaflows, {"MF1"}), "MF3")
    assert g.kind is GainKind.DIRECT
    assert g.value == LOAD["c3"] / SIZE["MF3"]


def test_initial_priority_order(four_metaflows):
    state = _state(four_metaflows)
    ordered = sort_metaflows([(mf, gain(state, mf)) for mf in sorted(four_metaflows.metaflows)])
    assert [mf for mf, _ in ordered] == ["MF2", "MF1", "MF3", "MF4"]


def test_gain_rejects_finished_metaflow(four_metaflows):
    with pytest.raises(InvalidArgumentError):
        gain(_state(four_metaflows, {"MF1"}), "MF1")


def test_gain_rejects_unreleased_job(four_metaflows):
    state = SchedulerState(fabric=four_metaflow_fabric(), jobs={"F2": four_metaflows}, remaining={}, now=-1.0)
    with pytest.raises(InvalidArgumentError):
        gain(state, "MF1")
