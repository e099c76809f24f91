"""Skill vocabulary and the learned description embedding table."""

from __future__ import annotations

import json
import subprocess

import numpy as np

from . import numerics as nx
from .scenegraph import SkillSpec

D_TXT = 32

SKILLS = (
    SkillSpec("cube_out", "remove the red cube from the bin", (("cube", "red"), ("bin", None)), "remove"),
    SkillSpec("cube_in", "put the blue cube into the bin", (("cube", "blue"), ("bin", None)), "place"),
    SkillSpec("sort_apple", "place the apple on the red ellipse",
              (("apple", "red"), ("ellipse_target", "red")), "place"),
    SkillSpec("sort_banana", "place the banana on the yellow ellipse",
              (("banana", "yellow"), ("ellipse_target", "yellow")), "place"),
    SkillSpec("sort_cube", "place the green cube on the green ellipse",
              (("cube", "green"), ("ellipse_target", "green")), "place"),
    SkillSpec("tool_pull", "pull the blue cube back with the red L-shaped tool",
              (("cube", "blue"), ("tool_L", "red")), "pull"),
    SkillSpec("tool_push", "push the green cube away with the yellow stick",
              (("cube", "green"), ("tool_stick", "yellow")), "push"),
    SkillSpec("pull_avoid", "pull the blue cube back with the red L-shaped tool while avoiding obstacles",
              (("cube", "blue"), ("tool_L", "red")), "pull"),
)
SKILL_BY_ID = {s.skill_id: s for s in SKILLS}


def get_skill(skill_id):
    try:
        return SKILL_BY_ID[skill_id]
    except KeyError:
        raise KeyError(f"unknown skill {skill_id!r}") from None


class SkillVocabulary:
    """Ordered skills with one learned ``D_TXT`` row each, initialised N(0, 0.02^2)."""

    def __init__(self, params, gen, skills=SKILLS, name="text.table"):
        self.skills = tuple(skills)
        ids = [s.skill_id for s in self.skills]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate skill ids")
        self.index = {sid: i for i, sid in enumerate(ids)}
        self.name = name
        self.params = params
        params.add(name, gen.normal(0.0, 0.02, (len(ids), D_TXT)))

    @property
    def table(self):
        return self.params[self.name]

    def rows(self, skill_ids):
        try:
            idx = [self.index[s] for s in skill_ids]
        except KeyError as e:
            raise KeyError(f"unknown skill {e.args[0]!r}") from None
        return nx.take_rows(self.table, np.array(idx, dtype=np.int64))

    def embed_description(self, skill_id):
        return self.rows([skill_id])[0]

    def to_json(self):
        return [{"skill_id": s.skill_id, "description": s.description} for s in self.skills]


class ExternalTextEncoder:
    """Description encoder running in a subprocess.

    Requests are ``{"text": ...}`` lines; replies are ``{"embedding": [D_TXT floats]}`` lines.
    """

    def __init__(self, command):
        self.proc = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True)

    def __call__(self, text):
        self.proc.stdin.write(json.dumps({"text": text}) + "\n")
        self.proc.stdin.flush()
        vec = np.asarray(json.loads(self.proc.stdout.readline())["embedding"], dtype=np.float64)
        if vec.shape != (D_TXT,) or not np.all(np.isfinite(vec)):
            raise ValueError(f"encoder returned a bad embedding of shape {vec.shape}")
        return vec

    def close(self):
        self.proc.stdin.close()
        self.proc.wait(timeout=5)
