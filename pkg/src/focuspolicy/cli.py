"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields

from . import compose, dataio
from . import numerics as nx
from . import policy as pl
from . import toyworld as tw
from .scenegraph import Thresholds, build_subgraph
from .skilltext import get_skill

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3
CONFIG_VERSION = 1
CONFIG_ENV = "FOCUSPOLICY_CONFIG"

log = logging.getLogger("focuspolicy")


class UsageError(Exception):
    pass


class VerificationError(Exception):
    pass


# ---------------------------------------------------------------------------
# run configuration

_POLICY_KEYS = {f.name for f in fields(pl.PolicyConfig)}
_WORLD_KEYS = {f.name for f in fields(tw.WorldConfig)} - {"thresholds"}
_THRESHOLD_KEYS = {f.name for f in fields(Thresholds)}


def _check_keys(section, given, allowed):
    extra = set(given) - allowed
    if extra:
        raise UsageError(f"unknown keys in {section}: {sorted(extra)}")


def load_run_config(path):
    """Parse a run config into (PolicyConfig, WorldConfig).

    Layout: ``{"version": 1, "seed": int, "policy": {...}, "world": {..., "thresholds": {...}}}``.
    Unknown keys anywhere are rejected.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    _check_keys("config", doc, {"version", "seed", "policy", "world"})
    if doc.get("version") != CONFIG_VERSION:
        raise UsageError(f"config version {doc.get('version')!r} is not {CONFIG_VERSION}")
    policy = dict(doc.get("policy", {}))
    _check_keys("policy", policy, _POLICY_KEYS)
    if "seed" in doc:
        policy.setdefault("seed", doc["seed"])
    world = dict(doc.get("world", {}))
    _check_keys("world", world, _WORLD_KEYS | {"thresholds"})
    th = world.pop("thresholds", {})
    _check_keys("world.thresholds", th, _THRESHOLD_KEYS)
    if "tip_offset" in world:
        world["tip_offset"] = tuple(world["tip_offset"])
    try:
        return pl.PolicyConfig(**policy), tw.WorldConfig(thresholds=Thresholds(**th), **world)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad config: {e}") from None


def default_run_config(seed=0):
    return {
        "version": CONFIG_VERSION,
        "seed": seed,
        "policy": asdict(pl.PolicyConfig(seed=seed)),
        "world": asdict(tw.WorldConfig()),
    }


def _resolve_config(path):
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        return load_run_config(path)
    return pl.PolicyConfig(), tw.WorldConfig()


# ---------------------------------------------------------------------------
# commands


def _skills_for(task, skill):
    if skill:
        get_skill(skill)
        if task and tw.SKILL_FAMILY[skill] != tw.TaskFamily(task):
            raise UsageError(f"skill {skill} is not part of task {task}")
        return [skill]
    if task:
        return list(tw.FAMILY_SKILLS[tw.TaskFamily(task)])
    return tw.all_skill_ids()


def cmd_gen_demos(args):
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    _, world = _resolve_config(args.config)
    demos = []
    for sid in _skills_for(args.task, args.skill):
        try:
            batch = tw.gen_demonstrations(sid, args.n, args.seed, world)
        except tw.ExpertFailure as e:
            raise VerificationError(str(e)) from None
        demos.extend(batch)
        print(f"{sid}: {len(batch)} episodes, expert success 1.0")
    dataio.save_dataset(demos, args.out)
    print(f"wrote {len(demos)} episodes to {args.out}")
    return EXIT_OK


def cmd_train(args):
    config, _ = _resolve_config(args.config)
    overrides = {k: v for k, v in (("variant", args.variant), ("epochs", args.epochs), ("seed", args.seed)) if v is not None}
    if overrides:
        config = pl.PolicyConfig(**{**asdict(config), **overrides})
    demos = []
    for path in args.data:
        if not os.path.exists(path):
            raise UsageError(f"dataset not found: {path}")
        try:
            demos.extend(dataio.load_dataset(path))
        except dataio.DatasetError as e:
            raise UsageError(f"schema mismatch: {e}") from None
    if not demos:
        raise UsageError("datasets contain no episodes")
    os.makedirs(args.out, exist_ok=True)
    loss_log = os.path.join(args.out, "loss.jsonl")
    with open(loss_log, "w") as fh:
        def progress(epoch, loss):
            fh.write(json.dumps({"epoch": epoch, "loss": loss}) + "\n")
            fh.flush()
            print(f"epoch {epoch}: loss {loss:.6f}")

        model, _ = pl.train(demos, config, progress)
    pl.save_checkpoint(model, args.out)
    print(f"checkpoint written to {args.out}")
    return EXIT_OK


def _load_model(path):
    try:
        return pl.load_checkpoint(path)
    except FileNotFoundError as e:
        raise UsageError(f"checkpoint not found: {e.filename}") from None
    except (pl.CheckpointError, KeyError, ValueError) as e:
        raise UsageError(f"cannot load checkpoint {path}: {e}") from None


def cmd_eval(args):
    _, world = _resolve_config(args.config)
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    if args.expert:
        model = None
    else:
        if not args.ckpt:
            raise UsageError("--ckpt is required unless --expert is given")
        model = _load_model(args.ckpt)
        if args.variant and args.variant != model.config.variant:
            raise UsageError(f"checkpoint was trained as {model.config.variant!r}, not {args.variant!r}")
    report = compose.evaluate(model, args.mode, args.seeds, world, shuffle=args.shuffle)
    if args.report:
        compose.write_report(report, args.report)
    for task in report["tasks"]:
        print(f"{task['name']}: {task['mean']:.4f}")
    return EXIT_OK


def cmd_gradcheck(args):
    failures = {}
    for variant in args.variants:
        rep = pl.gradient_suite(variant, samples=args.samples, seed=args.seed, tolerance=args.tolerance)
        for name in sorted(rep.max_rel_err):
            print(f"{variant} {name}: max rel err {rep.max_rel_err[name]:.3e} over {rep.probes[name]} probes")
        failures.update({f"{variant}:{k}": v for k, v in rep.failing().items()})
    if failures:
        raise VerificationError("gradient check failed: " + ", ".join(f"{k} ({v:.3e})" for k, v in failures.items()))
    print("gradient check passed")
    return EXIT_OK


def _scene(args, world):
    family = tw.TaskFamily(args.task)
    state = tw.reset(family, args.scenario or "compose", args.seed, world)
    if args.distractors:
        state = tw.add_distractors(state, args.distractors, args.seed, world)
    return state


def cmd_dump_graph(args):
    _, world = _resolve_config(args.config)
    state = _scene(args, world)
    try:
        graph = build_subgraph(state.objects, get_skill(args.skill), state.gripper, thresholds=world.thresholds)
    except LookupError as e:
        raise VerificationError(str(e)) from None
    out = graph.to_json()
    out["skill"] = args.skill
    print(json.dumps(out, indent=1))
    return EXIT_OK


def _svg(states, path, size=400):
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 1 1">',
             '<g transform="matrix(1 0 0 -1 0 1)">']
    for o in states[0].objects:
        pts = " ".join(f"{x:.4f},{y:.4f}" for x, y in o.cloud)
        lines.append(f'<!-- {o.category} {o.id} --><polyline points="{pts}" fill="none" stroke="gray" stroke-width="0.002"/>')
    path_pts = " ".join(f"{s.gripper.pos[0]:.4f},{s.gripper.pos[1]:.4f}" for s in states)
    lines.append(f'<polyline points="{path_pts}" fill="none" stroke="black" stroke-width="0.004"/>')
    lines.append("</g></svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_plot(args):
    _, world = _resolve_config(args.config)
    skill = args.skill
    family = tw.SKILL_FAMILY[get_skill(skill).skill_id]
    state = tw.reset(family, skill, args.seed, world)
    if args.ckpt:
        model = _load_model(args.ckpt)
        res = pl.rollout_skill(model, state, skill, nx.rng(args.seed, "plot", skill), world.max_steps, world)
        states = res.trajectory
    else:
        records, _, _ = tw.run_expert(skill, state, world)
        states = [state]
        s = state
        for r in records:
            s = tw.step(s, r.action, world)
            states.append(s)
    if args.out.endswith(".svg"):
        _svg(states, args.out)
    else:
        with open(args.out, "w") as fh:
            fh.write("t,kind,id,x,y\n")
            for t, s in enumerate(states):
                fh.write(f"{t},gripper,-1,{s.gripper.pos[0]!r},{s.gripper.pos[1]!r}\n")
                for o in s.objects:
                    fh.write(f"{t},{o.category},{o.id},{o.centroid[0]!r},{o.centroid[1]!r}\n")
    print(f"wrote {len(states)} frames to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="focuspolicy", description="Scene-graph conditioned diffusion policies in a 2D toy world.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    tasks = [f.value for f in tw.TaskFamily]

    g = sub.add_parser("gen-demos", help="write expert demonstrations as JSONL")
    g.add_argument("--task", choices=tasks)
    g.add_argument("--skill", choices=tw.all_skill_ids())
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--config")
    g.set_defaults(func=cmd_gen_demos)

    t = sub.add_parser("train", help="train one policy on pooled datasets")
    t.add_argument("--config")
    t.add_argument("--data", nargs="+", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--variant", choices=pl.VARIANTS)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate atomic skills or compositions")
    e.add_argument("--ckpt")
    e.add_argument("--expert", action="store_true", help="run the scripted expert instead of a policy")
    e.add_argument("--mode", choices=("atomic", "compose"), default="atomic")
    e.add_argument("--variant", choices=pl.VARIANTS)
    e.add_argument("--seeds", type=int, default=50)
    e.add_argument("--shuffle", action="store_true", help="permute object ids before the policy sees them")
    e.add_argument("--report")
    e.add_argument("--config")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of every parameter block")
    c.add_argument("--variants", nargs="+", choices=pl.VARIANTS, default=list(pl.VARIANTS))
    c.add_argument("--samples", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tolerance", type=float, default=1e-4)
    c.set_defaults(func=cmd_gradcheck)

    d = sub.add_parser("dump-graph", help="print the focused sub-scene graph of a scene")
    d.add_argument("--task", choices=tasks, required=True)
    d.add_argument("--scenario", help="skill id for an atomic scene; default is the composed scene")
    d.add_argument("--skill", required=True, choices=tw.all_skill_ids())
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--distractors", type=int, default=0)
    d.add_argument("--config")
    d.set_defaults(func=cmd_dump_graph)

    pp = sub.add_parser("plot", help="write a rollout as CSV coordinates or an SVG sketch")
    pp.add_argument("--skill", required=True, choices=tw.all_skill_ids())
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--ckpt", help="policy checkpoint; default is the scripted expert")
    pp.add_argument("--out", required=True)
    pp.add_argument("--config")
    pp.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except VerificationError as e:
        print(f"verification failed: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except (OSError, RuntimeError, ValueError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
