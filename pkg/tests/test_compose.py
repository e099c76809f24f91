import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from focuspolicy import compose as cp
from focuspolicy import numerics as nx
from focuspolicy import policy as pl
from focuspolicy import toyworld as tw


def test_score_two_of_three():
    assert abs(cp.score([True, False, True]) - 2 / 3) < 1e-12
    with pytest.raises(ValueError):
        cp.score([])


@given(st.lists(st.booleans(), min_size=1, max_size=12), st.integers(0, 11))
def test_score_is_exact_fraction_and_monotone(flags, i):
    assert cp.score(flags) == float(Fraction(sum(flags), len(flags)))
    i %= len(flags)
    better = list(flags)
    better[i] = True
    assert cp.score(better) >= cp.score(flags)


@pytest.mark.parametrize("family", list(tw.TaskFamily))
def test_family_goals_expand_to_their_skills(family):
    state = tw.reset(family, "compose", 0)
    p = cp.plan(tw.COMPOSITION_GOALS[family], state.objects)
    assert sorted(p.skill_ids) == sorted(
        ["pull_avoid", "tool_push"] if family is tw.TaskFamily.OBSTACLE_AVOIDANCE else tw.FAMILY_SKILLS[family]
    )


def test_sort_plan_follows_object_ids():
    for seed in range(10):
        state = tw.reset(tw.TaskFamily.SORT_BY_COLOR, "compose", seed)
        p = cp.plan(tw.COMPOSITION_GOALS[tw.TaskFamily.SORT_BY_COLOR], state.objects)
        ids = [tw.get_skill(s).find(state.objects, 0).id for s in p.skill_ids]
        assert ids == sorted(ids)


def test_single_skill_and_unknown_goals():
    p = cp.plan("put the blue cube into the bin", [])
    assert p.skill_ids == ["cube_in"] and len(p) == 1
    with pytest.raises(cp.PlanningError, match="no decomposition"):
        cp.plan("make coffee", [])
    with pytest.raises(ValueError):
        cp.Plan(())
    assert p.to_json() == {"subgoals": [{"skill_id": "cube_in", "max_steps": 200}]}


PLANNER = (
    "import json,sys\n"
    "for line in sys.stdin:\n"
    "    req = json.loads(line)\n"
    "    if req['goal'] == 'bad':\n"
    "        print(json.dumps({'error': 'cannot'}), flush=True)\n"
    "    else:\n"
    "        print(json.dumps({'subgoals': [{'skill_id': 'cube_out', 'max_steps': 50}]}), flush=True)\n"
)


def test_external_planner():
    planner = cp.ExternalPlanner([sys.executable, "-c", PLANNER])
    state = tw.reset(tw.TaskFamily.CUBE_OUT_IN, "compose", 0)
    try:
        p = planner("anything", state.objects, state.gripper)
        assert p.skill_ids == ["cube_out"] and p.subgoals[0].max_steps == 50
        with pytest.raises(cp.PlanningError, match="cannot"):
            planner("bad", state.objects, state.gripper)
    finally:
        planner.close()


def test_expert_composition_scores_one():
    rep = cp.evaluate(None, "compose", 5)
    assert rep["variant"] == "expert"
    assert [t["mean"] for t in rep["tasks"]] == [1.0] * 4
    assert [t["name"] for t in rep["tasks"]] == [f.value for f in tw.TaskFamily]


def test_expert_atomic_report_shape(tmp_path):
    rep = cp.evaluate(None, "atomic", [3, 4], tasks=["cube_in"])
    assert rep["tasks"] == [{"name": "cube_in", "seeds": [3, 4], "scores": [1.0, 1.0], "mean": 1.0}]
    cp.write_report(rep, tmp_path / "r.json")
    first = (tmp_path / "r.json").read_bytes()
    cp.write_report(cp.evaluate(None, "atomic", [3, 4], tasks=["cube_in"]), tmp_path / "r.json")
    assert (tmp_path / "r.json").read_bytes() == first
    with pytest.raises(ValueError):
        cp.evaluate(None, "both", 1)


def test_failed_subgoal_does_not_stop_plan():
    state = tw.reset(tw.TaskFamily.CUBE_OUT_IN, "compose", 2)
    p = cp.Plan((cp.subgoal("cube_in", max_steps=1), cp.subgoal("cube_out")))
    done, _ = cp.run_compositions(None, [state], [p], lambda i, j: nx.rng(i, j))
    assert done == [[False, True]]


def test_report_mean_matches_scores():
    model = pl.PolicyModel(pl.PolicyConfig())
    rep = cp.evaluate(model, "atomic", 2, config=tw.WorldConfig(max_steps=8), tasks=["tool_push"])
    t = rep["tasks"][0]
    assert t["mean"] == np.mean(t["scores"])


def test_graph_context_shuffle_invariant():
    model = pl.PolicyModel(pl.PolicyConfig())
    state = tw.reset(tw.TaskFamily.TOOLS_USAGE, "compose", 3)
    base = cp.variant_context(model, (state.objects, state.gripper), "tool_pull")
    for s in range(10):
        got = cp.variant_context(model, (state.objects, state.gripper), "tool_pull", nx.rng(s))
        np.testing.assert_allclose(got, base, atol=1e-9, rtol=0)


@pytest.mark.parametrize("family", list(tw.TaskFamily))
def test_distractors_change_nograph_context_only(family):
    graph = pl.PolicyModel(pl.PolicyConfig())
    nograph = pl.PolicyModel(pl.PolicyConfig(variant="nograph"))
    state = tw.reset(family, "compose", 4)
    more = cp.with_distractors(state, 3, 9)
    sid = tw.FAMILY_SKILLS[family][0]
    a = cp.variant_context(graph, (state.objects, state.gripper), sid)
    b = cp.variant_context(graph, (more.objects, more.gripper), sid)
    assert np.array_equal(a, b)
    a = cp.variant_context(nograph, (state.objects, state.gripper), sid)
    b = cp.variant_context(nograph, (more.objects, more.gripper), sid)
    assert not np.array_equal(a, b)


def test_shuffle_ids_keeps_geometry():
    state = tw.reset(tw.TaskFamily.SORT_BY_COLOR, "compose", 1)
    out = cp.shuffle_ids(state.objects, nx.rng(0))
    assert sorted(o.id for o in out) == sorted(o.id for o in state.objects)
    assert all(np.array_equal(a.centroid, b.centroid) for a, b in zip(out, state.objects))
