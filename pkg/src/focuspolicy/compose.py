"""Test-time composition of learned skills, scoring and evaluation reports.

A plan is an ordered list of sub-goals. Each sub-goal runs until its success
predicate holds or its step budget is spent; a failed sub-goal never stops
the plan, and a trial scores the fraction of sub-goals completed.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, replace

import numpy as np

from . import numerics as nx
from . import policy as pl
from . import toyworld as tw
from .scenegraph import scene_to_json
from .skilltext import SKILL_BY_ID, get_skill


@dataclass(frozen=True)
class SubGoal:
    skill_id: str
    description: str
    relevant: tuple  # (category, color) filter, manipulated object first
    max_steps: int = 200


@dataclass(frozen=True)
class Plan:
    subgoals: tuple

    def __post_init__(self):
        if not self.subgoals:
            raise ValueError("a plan needs at least one sub-goal")
        for g in self.subgoals:
            if g.skill_id not in SKILL_BY_ID:
                raise ValueError(f"unknown skill {g.skill_id!r} in plan")

    def __len__(self):
        return len(self.subgoals)

    @property
    def skill_ids(self):
        return [g.skill_id for g in self.subgoals]

    def to_json(self):
        return {"subgoals": [{"skill_id": g.skill_id, "max_steps": g.max_steps} for g in self.subgoals]}


def subgoal(skill_id, max_steps=200):
    s = get_skill(skill_id)
    return SubGoal(s.skill_id, s.description, s.relevant, max_steps)


class PlanningError(LookupError):
    pass


def _family_for_goal(goal):
    for fam, text in tw.COMPOSITION_GOALS.items():
        if goal == text:
            return fam
    return None


def plan(goal, objects, max_steps=200):
    """Scripted decomposition of a known goal text for the given scene.

    Single-skill goals (a skill's own description) give a one-step plan.
    "Put each object somewhere" goals are ordered by ascending object id.
    """
    for s in SKILL_BY_ID.values():
        if goal == s.description:
            return Plan((subgoal(s.skill_id, max_steps),))
    fam = _family_for_goal(goal)
    if fam is None:
        raise PlanningError(f"no decomposition for goal {goal!r}")
    if fam is tw.TaskFamily.SORT_BY_COLOR:
        skills = []
        for sid in tw.FAMILY_SKILLS[fam]:
            obj = get_skill(sid).find(objects, 0)
            if obj is None:
                raise PlanningError(f"no decomposition: {sid} object missing from scene")
            skills.append((obj.id, sid))
        order = [sid for _, sid in sorted(skills)]
    elif fam is tw.TaskFamily.OBSTACLE_AVOIDANCE:
        order = ["pull_avoid", "tool_push"]
    else:
        order = list(tw.FAMILY_SKILLS[fam])
    return Plan(tuple(subgoal(sid, max_steps) for sid in order))


class ExternalPlanner:
    """Planner in a subprocess.

    Request line: ``{"goal": text, "scene": scene JSON}``. Reply line:
    ``{"subgoals": [{"skill_id": ..., "max_steps": ...}, ...]}`` or
    ``{"error": message}``.
    """

    def __init__(self, command):
        self.proc = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True)

    def __call__(self, goal, objects, gripper):
        self.proc.stdin.write(json.dumps({"goal": goal, "scene": scene_to_json(objects, gripper)}) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise PlanningError("planner process closed its output")
        reply = json.loads(line)
        if "error" in reply:
            raise PlanningError(reply["error"])
        return Plan(tuple(subgoal(g["skill_id"], int(g.get("max_steps", 200))) for g in reply["subgoals"]))

    def close(self):
        self.proc.stdin.close()
        self.proc.wait(timeout=5)


def detect_subtask_done(state, goal, config=tw.WorldConfig()):
    return tw.success_predicate(goal.skill_id, state, config)


def score(completed):
    """Fraction of sub-goals completed."""
    completed = list(completed)
    if not completed:
        raise ValueError("no sub-goals")
    return sum(1 for c in completed if c) / len(completed)


# ---------------------------------------------------------------------------
# variants


def shuffle_ids(objects, gen):
    """Same scene with object ids randomly permuted."""
    ids = [o.id for o in objects]
    perm = gen.permutation(ids)
    return [o.copy(id=int(p)) for o, p in zip(objects, perm)]


def variant_context(model, history, skill_id, shuffle_gen=None):
    """Conditioning vector the model would see for one observation history.

    ``history`` is a list of ``T_o`` (objects, gripper) pairs (a single pair is
    repeated). With ``shuffle_gen`` the object ids are permuted first.
    """
    if isinstance(history, tuple):
        history = [history] * model.config.t_obs
    if shuffle_gen is not None:
        perm = {}
        ids = sorted({o.id for objs, _ in history for o in objs})
        for a, b in zip(ids, shuffle_gen.permutation(ids)):
            perm[a] = int(b)
        history = [([o.copy(id=perm[o.id]) for o in objs], g) for objs, g in history]
    skill = get_skill(skill_id)
    frames = [pl.make_frame(objs, g, skill, model.config.variant) for objs, g in history]
    table = pl.FrameTable(frames, model.config.variant)
    feats = model.frame_features(table, np.arange(len(frames)))
    idx = np.arange(len(frames))[None, :]
    return model.context(feats, idx, [skill_id], table.q[idx]).data[0]


# ---------------------------------------------------------------------------
# execution


def _expert_batch(states, skill_ids, max_steps, config):
    out = []
    for s, sid, budget in zip(states, skill_ids, max_steps):
        records, final, ok = tw.run_expert(sid, s, config, max_steps=budget)
        out.append((final, ok))
    return out


def _run_subgoals(model, states, goals, gens, config, shuffle_gens=None):
    """Run one sub-goal per environment; ``model=None`` uses the scripted expert."""
    budgets = [g.max_steps for g in goals]
    skill_ids = [g.skill_id for g in goals]
    if model is None:
        return _expert_batch(states, skill_ids, budgets, config)
    results, finals = pl.rollout_batch(
        model, states, skill_ids, gens, max_steps=budgets, world=config, keep_trajectory=False,
        shuffle_gens=shuffle_gens,
    )
    return [(f, r.success) for f, r in zip(finals, results)]


def run_compositions(model, states, plans, gens_for, config=tw.WorldConfig(), shuffle=False):
    """Execute each environment's plan; returns per-environment completion flags.

    ``gens_for(i, j)`` gives the sampling generator of environment ``i`` for
    sub-goal ``j``. Sub-goals of different environments run in lock step.
    """
    n = len(states)
    states = [s.copy() for s in states]
    done = [[] for _ in range(n)]
    depth = max(len(p) for p in plans)
    for j in range(depth):
        envs = [i for i in range(n) if j < len(plans[i])]
        starts = [replace(states[i], contact=False) for i in envs]
        goals = [plans[i].subgoals[j] for i in envs]
        gens = [gens_for(i, j) for i in envs]
        sgens = [gens_for(i, f"shuffle{j}") for i in envs] if shuffle else None
        outs = _run_subgoals(model, starts, goals, gens, config, sgens)
        for i, (final, ok) in zip(envs, outs):
            states[i] = final
            done[i].append(bool(ok))
    return done, states


def run_composition(model, state, goal_plan, gen, config=tw.WorldConfig()):
    """Score of one trial (see :func:`run_compositions`)."""
    base = int(gen.integers(2**63))
    done, _ = run_compositions(model, [state], [goal_plan], lambda i, j: nx.rng(base, j), config)
    return score(done[0])


def evaluate(model, mode, seeds, config=tw.WorldConfig(), shuffle=False, tasks=None):
    """Evaluation report over ``seeds`` trials per task.

    ``mode`` is ``"atomic"`` (one task per skill) or ``"compose"`` (one task per
    family). ``model=None`` runs the scripted expert instead of the policy.
    """
    if mode not in ("atomic", "compose"):
        raise ValueError(f"unknown mode {mode!r}")
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    variant = "expert" if model is None else model.config.variant
    report = {"mode": mode, "variant": variant, "shuffle": bool(shuffle), "tasks": []}
    if mode == "atomic":
        names = tasks or tw.all_skill_ids()
        for sid in names:
            fam = tw.SKILL_FAMILY[sid]
            states = [tw.reset(fam, sid, s, config) for s in seed_list]
            plans = [Plan((subgoal(sid, config.max_steps),))] * len(seed_list)
            done, _ = run_compositions(
                model, states, plans, lambda i, j, sid=sid: nx.rng(seed_list[i], "atomic", sid, j), config, shuffle
            )
            report["tasks"].append(_task_entry(sid, seed_list, [score(d) for d in done]))
    else:
        names = tasks or [f.value for f in tw.TaskFamily]
        for fam_name in names:
            fam = tw.TaskFamily(fam_name)
            states = [tw.reset(fam, "compose", s, config) for s in seed_list]
            plans = [plan(tw.COMPOSITION_GOALS[fam], st.objects, config.max_steps) for st in states]
            done, _ = run_compositions(
                model, states, plans, lambda i, j, f=fam.value: nx.rng(seed_list[i], "compose", f, j), config, shuffle
            )
            report["tasks"].append(_task_entry(fam.value, seed_list, [score(d) for d in done]))
    return report


def _task_entry(name, seeds, scores):
    return {"name": name, "seeds": list(seeds), "scores": scores, "mean": float(np.mean(scores))}


def write_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")


def with_distractors(state, n, seed, config=tw.WorldConfig()):
    """``state`` plus ``n`` extra inert distractors (see :func:`toyworld.add_distractors`)."""
    return tw.add_distractors(state, n, seed, config)


__all__ = [
    "ExternalPlanner",
    "Plan",
    "PlanningError",
    "SubGoal",
    "detect_subtask_done",
    "evaluate",
    "plan",
    "run_composition",
    "run_compositions",
    "score",
    "shuffle_ids",
    "variant_context",
    "with_distractors",
    "write_report",
]
