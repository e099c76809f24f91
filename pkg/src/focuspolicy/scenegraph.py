"""Focused sub-scene graphs: objects, geometric relations, and per-skill subgraphs.

Relations are produced by a :class:`RelationOracle`. The default
:class:`GeometricOracle` applies thresholded predicates to object poses; an
external process speaking line-delimited JSON can be swapped in through
:class:`ExternalRelationOracle`.
"""

from __future__ import annotations

import enum
import json
import subprocess
from dataclasses import dataclass, field

import numpy as np

from .pointcloud import Shape

CATEGORIES = (
    "gripper",
    "cube",
    "apple",
    "banana",
    "ellipse_target",
    "bin",
    "basket",
    "tool_L",
    "tool_stick",
    "obstacle",
    "distractor",
)
CATEGORY_INDEX = {c: i for i, c in enumerate(CATEGORIES)}
CONTAINERS = ("bin", "basket")
FLAT_TARGETS = ("ellipse_target",)
TOOLS = ("tool_L", "tool_stick")
COLORS = ("red", "blue", "green", "yellow", "purple", "orange", "gray", "white", "black")

GRIPPER_ID = -1
PULL_Y = 0.10  # pull target line, near the robot's home edge (y = 0)
PUSH_Y = 0.90


class Relation(enum.IntEnum):
    GRASP = 0
    INSIDE = 1
    NEXT_TO = 2
    ON_TOP = 3
    BEHIND = 4
    OBSTRUCTS = 5


SELF_LOOP = len(Relation)  # attention bias slot for implicit self-loops
NUM_EDGE_TYPES = SELF_LOOP + 1


@dataclass
class ObjectInstance:
    id: int
    category: str
    color: str
    centroid: np.ndarray
    shape: Shape
    local_cloud: np.ndarray  # downsampled, relative to the centroid

    @property
    def cloud(self):
        return self.local_cloud + self.centroid

    def copy(self, **changes):
        fields = dict(
            id=self.id,
            category=self.category,
            color=self.color,
            centroid=self.centroid.copy(),
            shape=self.shape,
            local_cloud=self.local_cloud,
        )
        fields.update(changes)
        return ObjectInstance(**fields)

    def contains(self, point):
        return bool(self.shape.contains(np.asarray(point) - self.centroid)[0])


@dataclass
class Gripper:
    pos: np.ndarray
    closed: bool = False


@dataclass(frozen=True)
class SkillSpec:
    """An atomic skill: what it manipulates, relative to what, and how.

    ``relevant`` lists (category, color) pairs; the first names the manipulated
    object and the second its anchor (container, target, or tool). A color of
    ``None`` matches any color.
    """

    skill_id: str
    description: str
    relevant: tuple
    motion: str  # "place", "remove", "pull" or "push"

    @property
    def relevant_categories(self):
        return {c for c, _ in self.relevant}

    def matches(self, obj):
        return any(obj.category == c and (col is None or obj.color == col) for c, col in self.relevant)

    def find(self, objects, slot):
        cat, col = self.relevant[slot]
        hits = [o for o in objects if o.category == cat and (col is None or o.color == col)]
        return min(hits, key=lambda o: o.id) if hits else None


@dataclass(frozen=True)
class Thresholds:
    r_grasp: float = 0.03
    tau_next: float = 0.12
    tau_behind: float = 0.10
    clearance: float = 0.08  # added to the object radius when testing obstruction
    remove_offset: float = 0.18  # drop distance beside a container


@dataclass
class Node:
    kind: str  # "gripper" or "object"
    category: str
    centroid: np.ndarray
    local_cloud: np.ndarray
    obj_id: int = GRIPPER_ID
    aperture: float = 0.0  # 1 when the gripper is closed


@dataclass
class SceneGraph:
    nodes: list
    edges: list = field(default_factory=list)  # (src, dst, Relation) over node indices

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("scene graph needs at least one node")
        if sum(n.kind == "gripper" for n in self.nodes) != 1:
            raise ValueError("scene graph needs exactly one gripper node")
        n = len(self.nodes)
        seen = set()
        for s, d, r in self.edges:
            if not (0 <= s < n and 0 <= d < n):
                raise ValueError(f"edge ({s}, {d}) out of range")
            if (s, d, r) in seen:
                raise ValueError(f"duplicate edge ({s}, {d}, {r})")
            seen.add((s, d, r))

    def edge_arrays(self):
        """Edges plus one self-loop per node, sorted by destination."""
        n = len(self.nodes)
        src = [s for s, _, _ in self.edges] + list(range(n))
        dst = [d for _, d, _ in self.edges] + list(range(n))
        typ = [int(r) for _, _, r in self.edges] + [SELF_LOOP] * n
        order = np.lexsort((np.array(src), np.array(dst)))
        return (np.array(src, dtype=np.int64)[order], np.array(dst, dtype=np.int64)[order],
                np.array(typ, dtype=np.int64)[order])

    def to_json(self):
        return {
            "nodes": [
                {
                    "index": i,
                    "kind": nd.kind,
                    "id": nd.obj_id,
                    "category": nd.category,
                    "centroid": [float(v) for v in nd.centroid],
                    "aperture": nd.aperture,
                }
                for i, nd in enumerate(self.nodes)
            ],
            "edges": [{"src": s, "dst": d, "type": Relation(r).name} for s, d, r in self.edges],
        }


# ---------------------------------------------------------------------------
# geometry


def _rect_hits_segment(center, half, a, b):
    """Whether segment a-b meets the axis-aligned rect (slab test)."""
    lo = np.asarray(center) - half
    hi = np.asarray(center) + half
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    t0, t1 = 0.0, 1.0
    for k in range(2):
        if abs(d[k]) < 1e-15:
            if a[k] < lo[k] or a[k] > hi[k]:
                return False
            continue
        u0 = (lo[k] - a[k]) / d[k]
        u1 = (hi[k] - a[k]) / d[k]
        if u0 > u1:
            u0, u1 = u1, u0
        t0, t1 = max(t0, u0), min(t1, u1)
        if t0 > t1:
            return False
    return True


def obstacle_half(obj):
    (part,) = obj.shape.parts
    return np.asarray(part.half, dtype=float)


def body_radius(obj):
    return obj.shape.radius


def obstructs(obstacle, mover_pos, mover_radius, target, clearance):
    half = obstacle_half(obstacle) + mover_radius + clearance
    return _rect_hits_segment(obstacle.centroid, half, np.asarray(mover_pos), np.asarray(target))


def motion_target(skill, manipulated, anchor, thresholds=Thresholds()):
    """Where the skill moves its manipulated object, given the current scene."""
    if skill.motion == "pull":
        return np.array([manipulated.centroid[0], PULL_Y])
    if skill.motion == "push":
        return np.array([manipulated.centroid[0], PUSH_Y])
    if skill.motion == "place":
        return anchor.centroid.copy()
    if skill.motion == "remove":
        side = 1.0 if anchor.centroid[0] <= 0.5 else -1.0
        return anchor.centroid + np.array([side * thresholds.remove_offset, 0.0])
    raise ValueError(f"unknown motion {skill.motion!r}")


def skill_targets(skill, objects, thresholds=Thresholds()):
    """Map manipulated-object id to its motion target (empty if a role is missing)."""
    obj = skill.find(objects, 0)
    anchor = skill.find(objects, 1)
    if obj is None or anchor is None:
        return {}
    return {obj.id: motion_target(skill, obj, anchor, thresholds)}


# ---------------------------------------------------------------------------
# relation inference


class RelationOracle:
    """Maps a scene to typed edges ``(src_id, dst_id, Relation)``; the gripper is id -1."""

    def __call__(self, objects, gripper, targets=None):
        raise NotImplementedError


class GeometricOracle(RelationOracle):
    def __init__(self, thresholds=Thresholds()):
        self.th = thresholds

    def __call__(self, objects, gripper, targets=None):
        th = self.th
        targets = targets or {}
        edges = []
        if gripper.closed:
            for o in objects:
                if o.category != "obstacle" and np.linalg.norm(gripper.pos - o.centroid) < th.r_grasp:
                    edges.append((GRIPPER_ID, o.id, Relation.GRASP))
        contained = set()
        for a in objects:
            for b in objects:
                if a.id == b.id or a.category in CONTAINERS + FLAT_TARGETS:
                    continue
                if b.category in CONTAINERS and b.contains(a.centroid):
                    edges.append((a.id, b.id, Relation.INSIDE))
                    contained.add((a.id, b.id))
                elif b.category in FLAT_TARGETS and b.contains(a.centroid):
                    edges.append((a.id, b.id, Relation.ON_TOP))
                    contained.add((a.id, b.id))
        for i, a in enumerate(objects):
            for b in objects[i + 1:]:
                if (a.id, b.id) in contained or (b.id, a.id) in contained:
                    continue
                if np.linalg.norm(a.centroid - b.centroid) < th.tau_next:
                    edges.append((a.id, b.id, Relation.NEXT_TO))
                    edges.append((b.id, a.id, Relation.NEXT_TO))
        for a in objects:
            for b in objects:
                if a.id == b.id or (a.id, b.id) in contained or (b.id, a.id) in contained:
                    continue
                d = a.centroid - b.centroid
                dist = np.linalg.norm(d)
                # within +-45 degrees of the away (+y) axis
                if 0 < dist < th.tau_behind and d[1] >= abs(d[0]):
                    edges.append((a.id, b.id, Relation.BEHIND))
        by_id = {o.id: o for o in objects}
        for oid, target in targets.items():
            mover = by_id.get(oid)
            if mover is None:
                continue
            for o in objects:
                if o.category == "obstacle" and o.id != oid and obstructs(
                    o, mover.centroid, body_radius(mover), target, th.clearance
                ):
                    edges.append((o.id, oid, Relation.OBSTRUCTS))
        return edges


def scene_to_json(objects, gripper, targets=None):
    return {
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "color": o.color,
                "centroid": [float(v) for v in o.centroid],
                "shape": [
                    {"kind": p.kind, "half": list(p.half), "offset": list(p.offset)} for p in o.shape.parts
                ],
            }
            for o in objects
        ],
        "gripper": {"pos": [float(v) for v in gripper.pos], "closed": bool(gripper.closed)},
        "targets": {str(k): [float(v) for v in t] for k, t in (targets or {}).items()},
    }


class ExternalRelationOracle(RelationOracle):
    """Relation inference delegated to a subprocess.

    One JSON request per line on the child's stdin (the scene, as produced by
    :func:`scene_to_json`), one JSON reply per line on its stdout:
    ``[{"src": id, "dst": id, "type": "INSIDE"}, ...]``.
    """

    def __init__(self, command):
        self.proc = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )

    def __call__(self, objects, gripper, targets=None):
        self.proc.stdin.write(json.dumps(scene_to_json(objects, gripper, targets)) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise RuntimeError("relation oracle process closed its output")
        return [(int(e["src"]), int(e["dst"]), Relation[e["type"]]) for e in json.loads(line)]

    def close(self):
        self.proc.stdin.close()
        self.proc.wait(timeout=5)


def serve_geometric_oracle(stdin, stdout, thresholds=Thresholds()):
    """Answer line-delimited relation requests with the geometric predicates."""
    from .pointcloud import Part

    oracle = GeometricOracle(thresholds)
    for line in stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        objects = []
        for o in req["objects"]:
            shape = Shape(tuple(Part(p["kind"], tuple(p["half"]), tuple(p["offset"])) for p in o["shape"]))
            objects.append(
                ObjectInstance(o["id"], o["category"], o["color"], np.array(o["centroid"], float), shape,
                               np.zeros((1, 2)))
            )
        g = req["gripper"]
        gripper = Gripper(np.array(g["pos"], float), bool(g["closed"]))
        targets = {int(k): np.array(v, float) for k, v in req.get("targets", {}).items()}
        edges = oracle(objects, gripper, targets)
        stdout.write(json.dumps([{"src": s, "dst": d, "type": Relation(r).name} for s, d, r in edges]) + "\n")
        stdout.flush()


# ---------------------------------------------------------------------------
# subgraph construction


def infer_relations(objects, gripper, thresholds=Thresholds(), targets=None):
    return GeometricOracle(thresholds)(objects, gripper, targets)


def build_subgraph(objects, skill, gripper, oracle=None, thresholds=Thresholds()):
    """Gripper plus the skill's relevant objects plus any obstacle in their way.

    Nodes are ordered gripper first, then objects by ascending id. Edges among
    excluded objects are dropped.
    """
    oracle = oracle or GeometricOracle(thresholds)
    for cat, col in skill.relevant:
        if not any(o.category == cat and (col is None or o.color == col) for o in objects):
            raise LookupError(f"relevant object absent: {col or 'any'} {cat}")
    targets = skill_targets(skill, objects, thresholds)
    edges = oracle(objects, gripper, targets)
    keep = {o.id for o in objects if skill.matches(o)}
    keep |= {s for s, d, r in edges if r == Relation.OBSTRUCTS and d in keep}
    chosen = sorted((o for o in objects if o.id in keep), key=lambda o: o.id)
    nodes = [Node("gripper", "gripper", np.asarray(gripper.pos, dtype=float).copy(), GRIPPER_CLOUD,
                  GRIPPER_ID, 1.0 if gripper.closed else 0.0)]
    nodes += [Node("object", o.category, o.centroid.copy(), o.local_cloud, o.id) for o in chosen]
    index = {nd.obj_id: i for i, nd in enumerate(nodes)}
    sub_edges = []
    seen = set()
    for s, d, r in edges:
        if s in index and d in index and (index[s], index[d], r) not in seen:
            seen.add((index[s], index[d], r))
            sub_edges.append((index[s], index[d], Relation(r)))
    return SceneGraph(nodes, sub_edges)


def _gripper_cloud():
    from .pointcloud import gripper_template

    return gripper_template()


GRIPPER_CLOUD = _gripper_cloud()
