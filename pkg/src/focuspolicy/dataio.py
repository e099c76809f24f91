"""Line-delimited JSON demonstration files.

One episode per line::

    {"skill_id": ..., "seed": ..., "objects": [{id, category, color, shape, local_cloud}],
     "steps": [{"objects": [{id, centroid}], "gripper": {pos, aperture}, "action": [dx, dy, grip]}]}

Object clouds are stored once per episode in the object's own frame; the world
cloud at a step is ``local_cloud + centroid``. Floats are written with
``repr`` precision, so loading what was saved gives back the same bits.
"""

from __future__ import annotations

import json

import numpy as np

from .pointcloud import Part, Shape
from .scenegraph import Gripper, ObjectInstance
from .toyworld import Demonstration, StepRecord


class DatasetError(ValueError):
    pass


def _shape_json(shape):
    return [{"kind": p.kind, "half": list(p.half), "offset": list(p.offset)} for p in shape.parts]


def _shape_from(parts):
    return Shape(tuple(Part(p["kind"], tuple(p["half"]), tuple(p["offset"])) for p in parts))


def episode_to_json(demo):
    first = {o.id: o for o in demo.steps[0].objects}
    return {
        "skill_id": demo.skill_id,
        "seed": demo.seed,
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "color": o.color,
                "shape": _shape_json(o.shape),
                "local_cloud": o.local_cloud.tolist(),
            }
            for o in first.values()
        ],
        "steps": [
            {
                "objects": [{"id": o.id, "centroid": o.centroid.tolist()} for o in st.objects],
                "gripper": {"pos": st.gripper.pos.tolist(), "aperture": 1.0 if st.gripper.closed else 0.0},
                "action": np.asarray(st.action, dtype=np.float64).tolist(),
            }
            for st in demo.steps
        ],
    }


def episode_from_json(rec):
    try:
        protos = {}
        for o in rec["objects"]:
            cloud = np.array(o["local_cloud"], dtype=np.float64)
            if cloud.ndim != 2 or cloud.shape[1] != 2:
                raise DatasetError(f"object {o['id']}: cloud must be n x 2")
            protos[o["id"]] = (o["category"], o["color"], _shape_from(o["shape"]), cloud)
        steps = []
        for st in rec["steps"]:
            objs = []
            for o in st["objects"]:
                cat, col, shape, cloud = protos[o["id"]]
                objs.append(ObjectInstance(o["id"], cat, col, np.array(o["centroid"], dtype=np.float64), shape, cloud))
            g = st["gripper"]
            action = np.array(st["action"], dtype=np.float64)
            if action.shape != (3,):
                raise DatasetError("action must have 3 entries")
            steps.append(StepRecord(objs, Gripper(np.array(g["pos"], dtype=np.float64), g["aperture"] > 0.5), action))
    except KeyError as e:
        raise DatasetError(f"missing field {e.args[0]!r}") from None
    if not steps:
        raise DatasetError("episode has no steps")
    return Demonstration(rec["skill_id"], steps, rec.get("seed"))


def dumps_episode(demo):
    return json.dumps(episode_to_json(demo), separators=(",", ":"))


def save_dataset(demos, path):
    with open(path, "w") as fh:
        for d in demos:
            fh.write(dumps_episode(d) + "\n")


def load_dataset(path):
    demos = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                demos.append(episode_from_json(json.loads(line)))
            except (json.JSONDecodeError, DatasetError) as e:
                raise DatasetError(f"{path}:{lineno}: {e}") from None
    return demos
