import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from focuspolicy import numerics as nx
from focuspolicy import toyworld as tw
from focuspolicy.scenegraph import (
    GRIPPER_ID,
    Gripper,
    Relation,
    SceneGraph,
    Node,
    build_subgraph,
    infer_relations,
    scene_to_json,
    serve_geometric_oracle,
)
from focuspolicy.skilltext import get_skill


def obj(oid, cat, color, xy):
    return tw.make_object(oid, cat, color, np.array(xy, dtype=float), nx.rng(oid, "t"))


def test_inside_edge():
    bin_ = obj(0, "bin", "white", (0.5, 0.5))
    cube = obj(1, "cube", "blue", (0.52, 0.5))
    edges = infer_relations([bin_, cube], Gripper(np.array([0.1, 0.1])))
    inside = [e for e in edges if e[2] == Relation.INSIDE]
    assert inside == [(1, 0, Relation.INSIDE)]


def test_grasp_edge_only_when_closed():
    cube = obj(1, "cube", "blue", (0.5, 0.5))
    assert (GRIPPER_ID, 1, Relation.GRASP) in infer_relations([cube], Gripper(np.array([0.5, 0.5]), True))
    assert not infer_relations([cube], Gripper(np.array([0.5, 0.5]), False))


def test_next_to_threshold():
    a = obj(1, "cube", "red", (0.3, 0.3))
    b = obj(2, "cube", "blue", (0.3 + 3 * 0.12, 0.3))
    assert not [e for e in infer_relations([a, b], Gripper(np.zeros(2))) if e[2] == Relation.NEXT_TO]
    c = obj(3, "cube", "green", (0.35, 0.3))
    near = [e for e in infer_relations([a, c], Gripper(np.zeros(2))) if e[2] == Relation.NEXT_TO]
    assert sorted(near) == [(1, 3, Relation.NEXT_TO), (3, 1, Relation.NEXT_TO)]


def _random_scene(seed):
    gen = nx.rng(seed, "scene")
    cats = ["cube", "apple", "banana", "bin", "ellipse_target", "obstacle", "tool_L"]
    objs = [obj(i, cats[int(gen.integers(len(cats)))], "red", gen.uniform(0.1, 0.9, 2)) for i in range(6)]
    return objs, Gripper(gen.uniform(0, 1, 2), bool(gen.integers(2)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_inside_antisymmetric_next_to_symmetric(seed):
    objs, g = _random_scene(seed)
    edges = set(infer_relations(objs, g))
    for s, d, r in edges:
        if r == Relation.INSIDE:
            assert (d, s, Relation.INSIDE) not in edges
        if r == Relation.NEXT_TO:
            assert (d, s, Relation.NEXT_TO) in edges


def test_composed_scene_focuses_on_three_nodes():
    state = tw.reset(tw.TaskFamily.SORT_BY_COLOR, "compose", 3)
    assert len(state.objects) >= 8
    g = build_subgraph(state.objects, get_skill("sort_apple"), state.gripper)
    assert [n.category for n in g.nodes] == ["gripper"] + sorted(
        ["apple", "ellipse_target"], key=lambda c: next(o.id for o in state.objects if o.category == c and o.color == "red")
    )


def test_obstacle_on_pull_path_enters_graph():
    for seed in range(50):
        state = tw.reset(tw.TaskFamily.OBSTACLE_AVOIDANCE, "compose", seed)
        g = build_subgraph(state.objects, get_skill("pull_avoid"), state.gripper)
        cats = [n.category for n in g.nodes]
        assert "obstacle" in cats
        assert any(r == Relation.OBSTRUCTS for _, _, r in g.edges)


def test_relevant_same_category_both_included_by_id():
    a = obj(5, "cube", "red", (0.2, 0.2))
    b = obj(2, "cube", "red", (0.6, 0.6))
    bin_ = obj(7, "bin", "white", (0.5, 0.8))
    g = build_subgraph([a, bin_, b], get_skill("cube_out"), Gripper(np.zeros(2)))
    assert [n.obj_id for n in g.nodes] == [GRIPPER_ID, 2, 5, 7]


def test_missing_relevant_object():
    with pytest.raises(LookupError, match="relevant object absent"):
        build_subgraph([obj(1, "cube", "red", (0.5, 0.5))], get_skill("cube_out"), Gripper(np.zeros(2)))


@pytest.mark.parametrize("family", list(tw.TaskFamily))
def test_distractors_leave_subgraph_unchanged(family):
    for seed in range(10):
        state = tw.reset(family, "compose", seed)
        more = tw.add_distractors(state, 4, seed + 100)
        for sid in tw.FAMILY_SKILLS[family]:
            a = build_subgraph(state.objects, get_skill(sid), state.gripper)
            b = build_subgraph(more.objects, get_skill(sid), more.gripper)
            assert a.to_json() == b.to_json()
            assert all(np.array_equal(x.local_cloud, y.local_cloud) for x, y in zip(a.nodes, b.nodes))


def test_graph_is_deterministic():
    state = tw.reset(tw.TaskFamily.TOOLS_USAGE, "compose", 4)
    a = build_subgraph(state.objects, get_skill("tool_pull"), state.gripper)
    b = build_subgraph(state.copy().objects, get_skill("tool_pull"), state.gripper)
    assert a.to_json() == b.to_json()


def test_scene_graph_validation():
    g = Node("gripper", "gripper", np.zeros(2), np.zeros((1, 2)))
    o = Node("object", "cube", np.zeros(2), np.zeros((1, 2)), 0)
    with pytest.raises(ValueError):
        SceneGraph([o])
    with pytest.raises(ValueError):
        SceneGraph([g, o], [(0, 2, Relation.GRASP)])
    with pytest.raises(ValueError):
        SceneGraph([g, o], [(0, 1, Relation.GRASP), (0, 1, Relation.GRASP)])
    src, dst, typ = SceneGraph([g, o], [(0, 1, Relation.GRASP)]).edge_arrays()
    assert list(dst) == sorted(dst)
    assert len(src) == 3


def test_relation_ids_stable():
    assert [r.value for r in Relation] == list(range(6))
    assert Relation.GRASP == 0 and Relation.OBSTRUCTS == 5


def test_line_protocol_matches_in_process_oracle():
    state = tw.reset(tw.TaskFamily.CUBE_OUT_IN, "compose", 2)
    request = scene_to_json(state.objects, state.gripper)
    out = io.StringIO()
    serve_geometric_oracle(io.StringIO(json.dumps(request) + "\n"), out)
    reply = json.loads(out.getvalue())
    direct = infer_relations(state.objects, state.gripper)
    assert [(e["src"], e["dst"], e["type"]) for e in reply] == [(s, d, Relation(r).name) for s, d, r in direct]
