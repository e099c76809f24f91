"""Deterministic 2D tabletop world with scripted experts.

The robot's home edge is ``y = 0`` and "away" is ``+y``. The gripper moves at
most ``delta_max`` per axis each step. Cubes, fruit and tools can be grasped;
a held tool drags any cube that comes within ``r_tool`` of its tip. Obstacles
never move and stop any cube (held or dragged) that would overlap them; tools
are carried above obstacles. Distractors are inert.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .pointcloud import RAW_POINTS, Part, Shape, downsample, sample_object_cloud
from .scenegraph import (
    PULL_Y,
    PUSH_Y,
    Gripper,
    ObjectInstance,
    Thresholds,
    motion_target,
    obstructs,
    body_radius,
)
from .skilltext import SKILLS, get_skill


@dataclass(frozen=True)
class WorldConfig:
    delta_max: float = 0.03
    r_tool: float = 0.04
    min_separation: float = 0.08
    tip_offset: tuple = (0.0, 0.06)
    detour_offset: float = 0.12
    pull_success_y: float = 0.15
    push_success_y: float = 0.85
    max_steps: int = 200
    thresholds: Thresholds = field(default_factory=Thresholds)


SHAPES = {
    "cube": Shape.rect(0.02, 0.02),
    "apple": Shape.disc(0.025),
    "banana": Shape.rect(0.035, 0.015),
    "ellipse_target": Shape.disc(0.065, 0.045),
    "bin": Shape.rect(0.09, 0.075),
    "basket": Shape.rect(0.09, 0.075),
    "tool_L": Shape((Part("rect", (0.012, 0.05)), Part("rect", (0.03, 0.012), (0.018, 0.05)))),
    "tool_stick": Shape.rect(0.012, 0.06),
    "obstacle": Shape.rect(0.045, 0.015),
}
GRASPABLE = ("cube", "apple", "banana", "tool_L", "tool_stick")
COLLIDES = ("cube", "apple", "banana")
DISTRACTOR_COLORS = ("purple", "orange", "gray", "white", "black")


class TaskFamily(str, enum.Enum):
    CUBE_OUT_IN = "cube_out_in"
    SORT_BY_COLOR = "sort_by_color"
    TOOLS_USAGE = "tools_usage"
    OBSTACLE_AVOIDANCE = "obstacle_avoidance"


FAMILY_SKILLS = {
    TaskFamily.CUBE_OUT_IN: ("cube_out", "cube_in"),
    TaskFamily.SORT_BY_COLOR: ("sort_apple", "sort_banana", "sort_cube"),
    TaskFamily.TOOLS_USAGE: ("tool_pull", "tool_push"),
    TaskFamily.OBSTACLE_AVOIDANCE: ("pull_avoid",),
}
SKILL_FAMILY = {s: f for f, skills in FAMILY_SKILLS.items() for s in skills}
COMPOSITION_GOALS = {
    TaskFamily.CUBE_OUT_IN: "put the blue cube into the bin so that only the blue cube remains inside",
    TaskFamily.SORT_BY_COLOR: "put the three objects onto the ellipses of same color",
    TaskFamily.TOOLS_USAGE: "pull back the blue cube with red tool and push away the green cube with yellow tool",
    TaskFamily.OBSTACLE_AVOIDANCE: (
        "pull one cube back with red tool and push another cube away with yellow tool, "
        "while avoiding the obstacles"
    ),
}


class PlacementError(RuntimeError):
    pass


class ExpertFailure(RuntimeError):
    pass


@dataclass
class WorldState:
    objects: list
    gripper: Gripper
    held: int | None = None
    bound: int | None = None  # cube dragged by the held tool
    bound_offset: np.ndarray | None = None
    contact: bool = False
    t: int = 0

    def obj(self, oid):
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def copy(self):
        return WorldState(
            [o.copy() for o in self.objects],
            Gripper(self.gripper.pos.copy(), self.gripper.closed),
            self.held,
            self.bound,
            None if self.bound_offset is None else self.bound_offset.copy(),
            self.contact,
            self.t,
        )


def make_object(oid, category, color, center, gen, shape=None):
    shape = shape or SHAPES[category]
    center = np.asarray(center, dtype=np.float64)
    raw = sample_object_cloud(shape, center, RAW_POINTS, gen)
    local = downsample(raw) - center
    return ObjectInstance(oid, category, color, center.copy(), shape, local)


# ---------------------------------------------------------------------------
# kinematics


def _aabb(obj):
    lo = np.full(2, np.inf)
    hi = np.full(2, -np.inf)
    for p in obj.shape.parts:
        off = np.asarray(p.offset)
        lo = np.minimum(lo, off - p.half)
        hi = np.maximum(hi, off + p.half)
    return lo, hi


def _overlaps(obj, center, obstacle):
    lo, hi = _aabb(obj)
    olo, ohi = _aabb(obstacle)
    a0, a1 = center + lo, center + hi
    b0, b1 = obstacle.centroid + olo, obstacle.centroid + ohi
    return bool(np.all(a0 < b1) and np.all(b0 < a1))


def step(state, action, config=WorldConfig()):
    """Advance one step; motion that would leave bounds or enter an obstacle is clamped."""
    s = state.copy()
    a = np.asarray(action, dtype=np.float64)
    delta = np.clip(a[:2], -config.delta_max, config.delta_max)
    grip = float(np.clip(a[2], -1.0, 1.0))
    g = s.gripper
    carried = []
    if s.held is not None:
        carried.append(s.obj(s.held))
    if s.bound is not None:
        carried.append(s.obj(s.bound))
    # stay in bounds
    for axis in range(2):
        for p in [g.pos] + [o.centroid for o in carried]:
            lo, hi = -p[axis], 1.0 - p[axis]
            delta[axis] = min(max(delta[axis], lo), hi)
    obstacles = [o for o in s.objects if o.category == "obstacle"]
    movers = [o for o in carried if o.category in COLLIDES]

    def free(d):
        return not any(_overlaps(m, m.centroid + d, ob) for m in movers for ob in obstacles)

    if movers and obstacles and not free(delta):
        s.contact = True
        options = [np.array([delta[0], 0.0]), np.array([0.0, delta[1]])]
        delta = next((d for d in options if free(d)), np.zeros(2))
    g.pos = g.pos + delta
    for o in carried:
        o.centroid = o.centroid + delta
    if grip >= 0.0 and not g.closed:
        g.closed = True
        best, best_d = None, config.thresholds.r_grasp
        for o in s.objects:
            if o.category in GRASPABLE and o.id != s.bound:
                d = np.linalg.norm(o.centroid - g.pos)
                if d < best_d:
                    best, best_d = o, d
        if best is not None:
            s.held = best.id
            best.centroid = g.pos.copy()
    elif grip < 0.0 and g.closed:
        g.closed = False
        s.held = None
        s.bound = None
        s.bound_offset = None
    if s.held is not None and s.bound is None and s.obj(s.held).category in ("tool_L", "tool_stick"):
        tip = g.pos + np.asarray(config.tip_offset)
        best, best_d = None, config.r_tool
        for o in s.objects:
            if o.category == "cube" and o.id != s.held:
                d = np.linalg.norm(o.centroid - tip)
                if d < best_d:
                    best, best_d = o, d
        if best is not None:
            s.bound = best.id
            s.bound_offset = best.centroid - tip
    s.t += 1
    return s


# ---------------------------------------------------------------------------
# skills: success and expert


def success_predicate(skill_id, state, config=WorldConfig()):
    skill = get_skill(skill_id)
    obj = skill.find(state.objects, 0)
    anchor = skill.find(state.objects, 1)
    if obj is None or anchor is None:
        return False
    if skill.motion == "place":
        return state.held != obj.id and anchor.contains(obj.centroid)
    if skill.motion == "remove":
        return state.held != obj.id and not anchor.contains(obj.centroid)
    if skill.motion == "pull":
        return state.held != anchor.id and obj.centroid[1] < config.pull_success_y and not state.contact
    if skill.motion == "push":
        return state.held != anchor.id and obj.centroid[1] > config.push_success_y
    raise ValueError(skill.motion)


def _toward(frm, to, dmax, settle=False):
    d = np.asarray(to) - np.asarray(frm)
    n = np.linalg.norm(d)
    if settle:
        # halve the remaining gap near the goal so an early close still lands within r_grasp
        dmax = min(dmax, max(n / 2, SETTLE_STEP))
    if n <= dmax:
        return d
    return d * (dmax / n)


_EPS = 1e-9
SETTLE_STEP = 0.01


def detour_waypoint(state, mover, target, config=WorldConfig()):
    """The detour point for the first obstacle blocking ``mover``'s path to ``target``, else None."""
    th = config.thresholds
    blocking = [
        o for o in state.objects
        if o.category == "obstacle" and obstructs(o, mover.centroid, body_radius(mover), target, th.clearance)
    ]
    if not blocking:
        return None
    ob = min(blocking, key=lambda o: np.linalg.norm(o.centroid - mover.centroid))
    p, t = mover.centroid, np.asarray(target)
    seg = t - p
    L = np.linalg.norm(seg)
    u = seg / L if L > 0 else np.array([0.0, -1.0])
    normal = np.array([-u[1], u[0]])
    foot = p + u * np.clip(np.dot(ob.centroid - p, u), 0.0, L)
    side = np.sign(np.dot(p - ob.centroid, normal))
    if side == 0.0:
        side = np.sign(np.dot(np.array([0.5, 0.5]) - ob.centroid, normal)) or 1.0
    return foot + side * config.detour_offset * normal


def expert_action(skill_id, state, config=WorldConfig()):
    """Waypoint controller for one atomic skill, a pure function of the state."""
    skill = get_skill(skill_id)
    obj = skill.find(state.objects, 0)
    anchor = skill.find(state.objects, 1)
    if obj is None or anchor is None:
        raise LookupError(f"skill {skill_id} is inapplicable: relevant object missing")
    g = state.gripper
    dm = config.delta_max
    release = np.array([0.0, 0.0, -1.0])

    def move(target, grip):
        d = _toward(g.pos, target, dm, settle=True)
        return np.array([d[0], d[1], grip])

    if skill.motion in ("place", "remove"):
        target = motion_target(skill, obj, anchor, config.thresholds)
        if state.held == obj.id:
            if np.linalg.norm(obj.centroid - target) <= _EPS:
                return release
            return move(target, 1.0)
        if g.closed:
            return release
        if np.linalg.norm(g.pos - obj.centroid) <= _EPS:
            return np.array([0.0, 0.0, 1.0])
        return move(obj.centroid, -1.0)

    tool = anchor
    if state.held == tool.id:
        if state.bound == obj.id:
            target = motion_target(skill, obj, tool, config.thresholds)
            done = obj.centroid[1] <= PULL_Y + _EPS if skill.motion == "pull" else obj.centroid[1] >= PUSH_Y - _EPS
            if done:
                return release
            way = detour_waypoint(state, obj, target, config)
            goal = target if way is None else way
            d = _toward(obj.centroid, goal, dm)
            return np.array([d[0], d[1], 1.0])
        if state.bound is not None:
            return release
        return move(obj.centroid - np.asarray(config.tip_offset), 1.0)
    if g.closed:
        return release
    if np.linalg.norm(g.pos - tool.centroid) <= _EPS:
        return np.array([0.0, 0.0, 1.0])
    return move(tool.centroid, -1.0)


# ---------------------------------------------------------------------------
# scenario generation


class _Placer:
    def __init__(self, gen, config, objects=None):
        self.gen = gen
        self.config = config
        self.objects = list(objects or [])

    def ok(self, center, shape, extra=()):
        for o in list(self.objects) + list(extra):
            need = max(self.config.min_separation, shape.radius + o.shape.radius + 0.01)
            if np.linalg.norm(o.centroid - center) < need:
                return False
        return True

    def sample(self, box, shape, check=None):
        (x0, x1), (y0, y1) = box
        for _ in range(1000):
            c = np.array([self.gen.uniform(x0, x1), self.gen.uniform(y0, y1)])
            if self.ok(c, shape) and (check is None or check(c)):
                return c
        raise PlacementError(f"could not place a {shape} in {box} after 1000 attempts")

    def put(self, oid, category, color, center, shape=None):
        o = make_object(oid, category, color, center, self.gen, shape)
        self.objects.append(o)
        return o


FULL = ((0.1, 0.9), (0.1, 0.9))


def _distractor_shape(gen):
    if gen.random() < 0.5:
        return Shape.disc(gen.uniform(0.015, 0.03))
    return Shape.rect(gen.uniform(0.012, 0.03), gen.uniform(0.012, 0.03))


def add_distractors(state, n, seed, config=WorldConfig()):
    """Return a copy of ``state`` with ``n`` extra inert distractors (ids after the existing ones)."""
    s = state.copy()
    gen = nx.rng(seed, "distractors", n)
    placer = _Placer(gen, config, s.objects)
    next_id = max((o.id for o in s.objects), default=-1) + 1
    for i in range(n):
        shape = _distractor_shape(gen)
        c = placer.sample(FULL, shape, lambda c: np.linalg.norm(c - s.gripper.pos) > 0.05)
        placer.put(next_id + i, "distractor", DISTRACTOR_COLORS[gen.integers(len(DISTRACTOR_COLORS))], c, shape)
    s.objects = sorted(placer.objects, key=lambda o: o.id)
    return s


def _inside_bin(placer, bin_obj, margin=0.03):
    hx, hy = bin_obj.shape.parts[0].half
    return bin_obj.centroid + placer.gen.uniform(-1, 1, 2) * np.array([hx - margin, hy - margin])


def _pull_layout(placer, ids, xbox, obstructed, config):
    gen = placer.gen
    cube_c = placer.sample((xbox, (0.55, 0.85)), SHAPES["cube"])
    cube = placer.put(ids["blue_cube"], "cube", "blue", cube_c)
    obstacle = None
    if obstructed is not None:
        if obstructed:
            # just off the straight pull line, so the detour side is well defined
            off = gen.uniform(0.015, 0.045) * (1 if gen.random() < 0.5 else -1)
            c = placer.sample(((cube_c[0] + off, cube_c[0] + off), (0.2, cube_c[1] - 0.18)), SHAPES["obstacle"])
        else:
            c = placer.sample(FULL, SHAPES["obstacle"], lambda c: abs(c[0] - cube_c[0]) > 0.15)
        obstacle = placer.put(ids["obstacle"], "obstacle", "gray", c)
    tool_c = placer.sample((xbox, (0.1, 0.4)), SHAPES["tool_L"])
    placer.put(ids["tool_L"], "tool_L", "red", tool_c)
    return cube, obstacle


def _push_layout(placer, ids, xbox, config):
    cube_c = placer.sample((xbox, (0.3, 0.55)), SHAPES["cube"])
    cube = placer.put(ids["green_cube"], "cube", "green", cube_c)
    tool_c = placer.sample((xbox, (0.1, 0.3)), SHAPES["tool_stick"],
                           lambda c: np.linalg.norm(c + np.asarray(config.tip_offset) - cube_c) > 0.08)
    placer.put(ids["tool_stick"], "tool_stick", "yellow", tool_c)
    return cube


def _ids(gen, names, shuffle):
    order = gen.permutation(len(names)) if shuffle else np.arange(len(names))
    return {n: int(i) for n, i in zip(names, order)}


def reset(family, scenario, seed, config=WorldConfig()):
    """Initial state for an atomic skill (``scenario`` = skill id) or ``"compose"``."""
    family = TaskFamily(family)
    if scenario != "compose" and SKILL_FAMILY.get(scenario) != family:
        raise ValueError(f"{scenario!r} is not a scenario of {family.value}")
    gen = nx.rng(seed, "reset", family.value, scenario)
    placer = _Placer(gen, config)
    compose = scenario == "compose"

    if family is TaskFamily.CUBE_OUT_IN:
        ids = _ids(gen, ["bin", "red_cube", "blue_cube"], compose)
        b = placer.put(ids["bin"], "bin", "white", placer.sample(((0.2, 0.8), (0.25, 0.75)), SHAPES["bin"]))
        drop = b.centroid + np.array([(1.0 if b.centroid[0] <= 0.5 else -1.0) * config.thresholds.remove_offset, 0])
        if scenario in ("cube_out", "compose"):
            placer.objects.append(make_object(ids["red_cube"], "cube", "red", _inside_bin(placer, b), gen))
        if scenario in ("cube_in", "compose"):
            c = placer.sample(FULL, SHAPES["cube"],
                              lambda c: not b.contains(c) and np.linalg.norm(c - drop) > 0.1)
            placer.put(ids["blue_cube"], "cube", "blue", c)
    elif family is TaskFamily.SORT_BY_COLOR:
        items = [("apple", "red", "sort_apple"), ("banana", "yellow", "sort_banana"), ("cube", "green", "sort_cube")]
        if not compose:
            items = [it for it in items if it[2] == scenario]
        names = [f"{cat}" for cat, _, _ in items] + [f"ellipse_{col}" for _, col, _ in items]
        ids = _ids(gen, names, compose)
        for cat, col, _ in items:
            placer.put(ids[f"ellipse_{col}"], "ellipse_target", col, placer.sample(FULL, SHAPES["ellipse_target"]))
        for cat, col, _ in items:
            placer.put(ids[cat], cat, col, placer.sample(FULL, SHAPES[cat]))
    elif family is TaskFamily.TOOLS_USAGE or family is TaskFamily.OBSTACLE_AVOIDANCE:
        names = ["blue_cube", "tool_L", "green_cube", "tool_stick", "obstacle", "obstacle2"]
        ids = _ids(gen, names, compose)
        avoid = family is TaskFamily.OBSTACLE_AVOIDANCE
        if compose:
            left = gen.random() < 0.5
            pull_box, push_box = ((0.12, 0.4), (0.6, 0.88)) if left else ((0.6, 0.88), (0.12, 0.4))
            cube, _ = _pull_layout(placer, ids, pull_box, True if avoid else None, config)
            green = _push_layout(placer, ids, push_box, config)
            if avoid and gen.random() < 0.5:
                def clear(c):
                    probe = ObjectInstance(-2, "obstacle", "gray", c, SHAPES["obstacle"], np.zeros((1, 2)))
                    th = config.thresholds
                    return not any(
                        obstructs(probe, m.centroid, body_radius(m), t, th.clearance)
                        for m, t in ((cube, (cube.centroid[0], PULL_Y)), (green, (green.centroid[0], PUSH_Y)))
                    )
                placer.put(ids["obstacle2"], "obstacle", "gray", placer.sample(FULL, SHAPES["obstacle"], clear))
        elif scenario == "tool_push":
            _push_layout(placer, ids, (0.12, 0.88), config)
        else:
            obstructed = (gen.random() < 0.6) if avoid else None
            _pull_layout(placer, ids, (0.2, 0.8), obstructed, config)
    objects = placer.objects
    if compose:
        dgen = nx.rng(seed, "reset-distractors", family.value)
        dplacer = _Placer(dgen, config, objects)
        next_id = max(o.id for o in objects) + 1
        for i in range(int(dgen.integers(2, 5))):
            shape = _distractor_shape(dgen)
            dplacer.put(next_id + i, "distractor", DISTRACTOR_COLORS[dgen.integers(len(DISTRACTOR_COLORS))],
                        dplacer.sample(FULL, shape), shape)
        objects = dplacer.objects
    gpos = np.array([gen.uniform(0.05, 0.95), gen.uniform(0.05, 0.95)])
    return WorldState(sorted(objects, key=lambda o: o.id), Gripper(gpos, False))


# ---------------------------------------------------------------------------
# demonstrations


@dataclass
class StepRecord:
    objects: list
    gripper: Gripper
    action: np.ndarray


@dataclass
class Demonstration:
    skill_id: str
    steps: list
    seed: int | None = None

    def __len__(self):
        return len(self.steps)


def run_expert(skill_id, state, config=WorldConfig(), max_steps=None):
    """Roll the expert from ``state``; returns (records, final state, success)."""
    max_steps = config.max_steps if max_steps is None else max_steps
    records = []
    s = state
    for _ in range(max_steps):
        if success_predicate(skill_id, s, config):
            return records, s, True
        a = expert_action(skill_id, s, config)
        records.append(StepRecord([o.copy() for o in s.objects],
                                  Gripper(s.gripper.pos.copy(), s.gripper.closed), a))
        s = step(s, a, config)
    return records, s, success_predicate(skill_id, s, config)


MIN_DEMO_STEPS = 10


def gen_demonstrations(skill_id, n, seed, config=WorldConfig()):
    """``n`` successful expert episodes of one skill from seeded resets.

    Episodes shorter than ``MIN_DEMO_STEPS`` are resampled; an expert failure
    raises :class:`ExpertFailure` carrying the offending reset seed.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    family = SKILL_FAMILY[skill_id]
    demos = []
    for i in range(n):
        for attempt in range(100):
            ep_seed = int(nx.rng(seed, "demo", skill_id, i, attempt).integers(2**31))
            state = reset(family, skill_id, ep_seed, config)
            records, final, ok = run_expert(skill_id, state, config)
            if not ok:
                raise ExpertFailure(f"expert failed on {skill_id} with reset seed {ep_seed}")
            if final.contact:
                raise ExpertFailure(f"expert touched an obstacle on {skill_id} with reset seed {ep_seed}")
            if len(records) >= MIN_DEMO_STEPS:
                demos.append(Demonstration(skill_id, records, ep_seed))
                break
        else:
            raise ExpertFailure(f"no usable episode for {skill_id} demo {i}")
    return demos


def all_skill_ids():
    return [s.skill_id for s in SKILLS]
