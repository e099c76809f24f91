"""Observation encoding, training and receding-horizon execution of the policy.

One policy serves every skill. Each observed frame is turned into a feature
vector by one of three encoders (the *variant*):

``graph``
    focused sub-scene graph -> graph attention -> mean pool (the full method)
``nograph``
    every segmented object's cloud merged, FPS-downsampled and encoded as one cloud
``concat``
    focused graph's node inputs concatenated in node order and projected, no attention

The conditioning vector stacks ``T_o`` frame features, the skill embedding and
``T_o`` gripper poses (x, y, aperture).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx
from .diffusion import Denoiser, draw_training_noise, make_schedule, sample_actions, training_loss
from .graphnet import D_F, GraphBatch, GraphEncoder
from .pointcloud import CLOUD_POINTS, D_PC, LOCAL_SCALE, CloudEncoder, downsample
from .scenegraph import CATEGORIES, CATEGORY_INDEX, SELF_LOOP, build_subgraph
from .skilltext import D_TXT, SKILLS, SkillVocabulary, get_skill
from . import toyworld as tw

log = logging.getLogger(__name__)

VARIANTS = ("graph", "nograph", "concat")
D_CAT = 8
D_ACT = 3
Q_DIM = 3
CONCAT_CAPACITY = 6
RELATIVE_SCALE = 5.0  # node centroids enter relative to the gripper, times this


def node_input_width(d=2):
    return D_PC + D_CAT + d + 2


@dataclass
class PolicyConfig:
    variant: str = "graph"
    t_obs: int = 2
    t_pred: int = 8
    t_exec: int = 4
    K: int = 50
    beta_start: float | None = None
    beta_end: float | None = None
    lr: float = 3e-3
    lr_final: float = 1e-4
    epochs: int = 135
    batch_size: int = 64
    items_per_episode: int = 8
    noise_draws: int = 8  # (k, eps) pairs per item and epoch, sharing one encoder pass
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not (1 <= self.t_exec <= self.t_pred) or self.t_obs < 1:
            raise ValueError("need 1 <= t_exec <= t_pred and t_obs >= 1")
        if self.noise_draws < 1:
            raise ValueError("noise_draws must be at least 1")

    @property
    def ctx_dim(self):
        return self.t_obs * D_F + D_TXT + self.t_obs * Q_DIM


# ---------------------------------------------------------------------------
# frames


@dataclass
class Frame:
    """Everything the encoders need from one observation under one skill."""

    q: np.ndarray  # gripper x, y, aperture
    graph: object = None  # SceneGraph for graph / concat
    union: np.ndarray | None = None  # merged cloud for nograph (CLOUD_POINTS x 2, gripper-relative)


def make_frame(objects, gripper, skill, variant):
    q = np.array([gripper.pos[0], gripper.pos[1], 1.0 if gripper.closed else 0.0])
    if variant == "nograph":
        merged = np.concatenate([o.cloud for o in objects], axis=0)
        return Frame(q, union=(downsample(merged) - q[:2]) * RELATIVE_SCALE)
    graph = build_subgraph(objects, skill, gripper)
    if variant == "concat" and len(graph.nodes) > CONCAT_CAPACITY:
        raise ValueError(f"concat variant holds at most {CONCAT_CAPACITY} nodes, got {len(graph.nodes)}")
    return Frame(q, graph=graph)


class FrameTable:
    """Flat arrays for many frames so that batches assemble without Python loops."""

    def __init__(self, frames, variant):
        self.variant = variant
        self.q = np.array([f.q for f in frames]).reshape(len(frames), Q_DIM)
        self.n = len(frames)
        if variant == "nograph":
            self.union = np.array([f.union for f in frames])
            return
        bank, bank_index = [], {}
        node_cloud, node_cat, node_pos, node_flag, node_ap = [], [], [], [], []
        e_src, e_dst, e_typ = [], [], []
        n_start, n_count, e_start, e_count = [], [], [], []
        for f in frames:
            g = f.graph
            origin = f.q[:2]
            n_start.append(len(node_cat))
            n_count.append(len(g.nodes))
            for nd in g.nodes:
                key = nd.local_cloud.tobytes()
                idx = bank_index.get(key)
                if idx is None:
                    idx = bank_index[key] = len(bank)
                    bank.append(nd.local_cloud)
                node_cloud.append(idx)
                node_cat.append(CATEGORY_INDEX[nd.category])
                node_pos.append((nd.centroid - origin) * RELATIVE_SCALE)
                node_flag.append(1.0 if nd.kind == "gripper" else 0.0)
                node_ap.append(nd.aperture)
            e_start.append(len(e_src))
            e_count.append(len(g.edges))
            for s, d, r in g.edges:
                e_src.append(s)
                e_dst.append(d)
                e_typ.append(int(r))
        self.bank = np.array(bank).reshape(len(bank), CLOUD_POINTS, -1) * LOCAL_SCALE
        self.node_cloud = np.array(node_cloud, dtype=np.int64)
        self.node_cat = np.array(node_cat, dtype=np.int64)
        self.node_pos = np.array(node_pos).reshape(-1, 2)
        self.node_flag = np.array(node_flag)
        self.node_ap = np.array(node_ap)
        self.n_start = np.array(n_start, dtype=np.int64)
        self.n_count = np.array(n_count, dtype=np.int64)
        self.e_src = np.array(e_src, dtype=np.int64)
        self.e_dst = np.array(e_dst, dtype=np.int64)
        self.e_typ = np.array(e_typ, dtype=np.int64)
        self.e_start = np.array(e_start, dtype=np.int64)
        self.e_count = np.array(e_count, dtype=np.int64)

    @staticmethod
    def _ranges(starts, counts):
        total = counts.sum()
        offs = np.repeat(np.cumsum(counts) - counts, counts)
        return np.repeat(starts, counts) + np.arange(total) - offs

    def gather(self, frame_ids):
        """Nodes and edges (with self-loops) of ``frame_ids`` as one disjoint graph."""
        frame_ids = np.asarray(frame_ids, dtype=np.int64)
        counts = self.n_count[frame_ids]
        nodes = self._ranges(self.n_start[frame_ids], counts)
        node_base = np.cumsum(counts) - counts  # first node of each batch graph
        ecounts = self.e_count[frame_ids]
        edges = self._ranges(self.e_start[frame_ids], ecounts)
        shift = np.repeat(node_base, ecounts)
        n = len(nodes)
        src = np.concatenate([self.e_src[edges] + shift, np.arange(n)])
        dst = np.concatenate([self.e_dst[edges] + shift, np.arange(n)])
        typ = np.concatenate([self.e_typ[edges], np.full(n, SELF_LOOP)])
        order = np.lexsort((src, dst))
        graph_of = np.repeat(np.arange(len(frame_ids)), counts)
        return nodes, src[order], dst[order], typ[order], graph_of, node_base, counts


# ---------------------------------------------------------------------------
# model


class PolicyModel:
    """All trainable pieces for one variant plus the fixed noise schedule."""

    def __init__(self, config, skills=SKILLS):
        self.config = config
        self.params = nx.ParamStore()
        gen = nx.rng(config.seed, "init", config.variant)
        self.cloud = CloudEncoder(self.params, gen)
        if config.variant in ("graph", "concat"):
            self.params.add("node.category", gen.normal(0.0, 0.5, (len(CATEGORIES), D_CAT)))
        if config.variant == "graph":
            self.gnn = GraphEncoder(self.params, gen, node_input_width())
        if config.variant == "concat":
            width = CONCAT_CAPACITY * node_input_width()
            self.params.add("concat.w", gen.normal(0.0, np.sqrt(1.0 / width), (width, D_F)))
            self.params.add("concat.b", np.zeros(D_F))
        self.vocab = SkillVocabulary(self.params, gen, skills)
        self.denoiser = Denoiser(self.params, gen, config.t_pred, D_ACT, config.ctx_dim)
        self.sched = make_schedule(config.K, config.beta_start, config.beta_end)
        self.action_center = np.zeros(D_ACT)
        self.action_scale = np.ones(D_ACT)

    # normalisation ------------------------------------------------------
    def fit_normalization(self, actions):
        lo, hi = actions.min(axis=0), actions.max(axis=0)
        self.action_center = (hi + lo) / 2.0
        scale = (hi - lo) / 2.0
        self.action_scale = np.where(scale > 1e-12, scale, 1.0)

    def normalize(self, actions):
        return (actions - self.action_center) / self.action_scale

    def denormalize(self, actions):
        return actions * self.action_scale + self.action_center

    # encoders -----------------------------------------------------------
    def node_inputs(self, table, nodes):
        """Per-node GAT inputs [cloud | category | centroid | gripper flag | aperture].

        Centroids are taken relative to the gripper, so the gripper node sits at the origin.
        """
        used, local = np.unique(table.node_cloud[nodes], return_inverse=True)
        emb = self.cloud(table.bank[used])
        cat = nx.take_rows(self.params["node.category"], table.node_cat[nodes])
        extra = np.concatenate(
            [table.node_pos[nodes], table.node_flag[nodes, None], table.node_ap[nodes, None]], axis=1
        )
        return nx.concat([nx.take_rows(emb, local.reshape(-1)), cat, nx.Tensor(extra)], axis=1)

    def frame_features(self, table, frame_ids):
        """Feature vector per frame (len(frame_ids) x 64)."""
        frame_ids = np.asarray(frame_ids, dtype=np.int64)
        v = self.config.variant
        if v == "nograph":
            return self.cloud(table.union[frame_ids])
        nodes, src, dst, typ, graph_of, node_base, counts = table.gather(frame_ids)
        x = self.node_inputs(table, nodes)
        if v == "graph":
            return self.gnn(GraphBatch(x, src, dst, typ, graph_of, len(frame_ids)))
        if counts.max() > CONCAT_CAPACITY:
            raise ValueError(f"concat variant holds at most {CONCAT_CAPACITY} nodes")
        slot = np.arange(len(nodes)) - np.repeat(node_base, counts)
        width = x.shape[1]
        pos = (graph_of * CONCAT_CAPACITY + slot).astype(np.int64)
        # scatter node rows into fixed slots; empty slots stay zero
        padded = nx.segment_sum(x, pos, len(frame_ids) * CONCAT_CAPACITY)
        flat = nx.reshape(padded, (len(frame_ids), CONCAT_CAPACITY * width))
        return flat @ self.params["concat.w"] + self.params["concat.b"]

    def context(self, feats, frame_index, skill_ids, q):
        """Stack [F_1..F_To | P | Q_1..Q_To] per item.

        Gripper x, y are centred on the table and scaled like node positions.

        ``frame_index`` is (B x T_o) rows of ``feats``; ``q`` is (B x T_o x 3).
        """
        b, t_obs = frame_index.shape
        f = nx.reshape(nx.take_rows(feats, frame_index.reshape(-1)), (b, t_obs * D_F))
        p = self.vocab.rows(skill_ids)
        q = np.array(q, dtype=float).reshape(b, t_obs, Q_DIM)
        q[..., :2] = (q[..., :2] - 0.5) * RELATIVE_SCALE
        return nx.concat([f, p, nx.Tensor(q.reshape(b, t_obs * Q_DIM))], axis=1)


# ---------------------------------------------------------------------------
# training data


@dataclass
class TrainingSet:
    table: FrameTable
    item_frames: np.ndarray  # (items x T_o) global frame ids
    item_actions: np.ndarray  # (items x T_p x 3) raw actions
    item_skill: list
    item_episode: np.ndarray
    episode_items: list  # per episode: array of item ids


def build_training_items(demo, t, config):
    """Frame indices and target actions for step ``t`` with edge padding.

    History repeats the first frame; the action window repeats the final action.
    Returns (list of T_o step indices, T_p x 3 action array).
    """
    n = len(demo.steps)
    if n < 1:
        raise ValueError("demonstration has no steps")
    frames = [min(max(t - j, 0), n - 1) for j in range(config.t_obs - 1, -1, -1)]
    acts = np.array([demo.steps[min(t + j, n - 1)].action for j in range(config.t_pred)])
    return frames, acts


def build_training_item(model, demo, t):
    """Conditioning context and target actions for one step of one demonstration."""
    cfg = model.config
    steps, acts = build_training_items(demo, t, cfg)
    skill = get_skill(demo.skill_id)
    frames = [make_frame(demo.steps[i].objects, demo.steps[i].gripper, skill, cfg.variant) for i in steps]
    table = FrameTable(frames, cfg.variant)
    feats = model.frame_features(table, np.arange(len(frames)))
    ctx = model.context(feats, np.arange(len(frames))[None, :], [demo.skill_id], table.q[None])
    return ctx, acts


def prepare(demos, config):
    frames, item_frames, item_actions, item_skill, item_episode, episode_items = [], [], [], [], [], []
    for e, demo in enumerate(demos):
        skill = get_skill(demo.skill_id)
        base = len(frames)
        for st in demo.steps:
            frames.append(make_frame(st.objects, st.gripper, skill, config.variant))
        ids = []
        for t in range(len(demo.steps)):
            steps, acts = build_training_items(demo, t, config)
            ids.append(len(item_frames))
            item_frames.append([base + i for i in steps])
            item_actions.append(acts)
            item_skill.append(demo.skill_id)
            item_episode.append(e)
        episode_items.append(np.array(ids, dtype=np.int64))
    return TrainingSet(
        FrameTable(frames, config.variant),
        np.array(item_frames, dtype=np.int64),
        np.array(item_actions),
        item_skill,
        np.array(item_episode, dtype=np.int64),
        episode_items,
    )


def plan_batches(ts, config, epoch):
    """Every item once per epoch, grouped a few per episode to share frames."""
    gen = nx.rng(config.seed, "batches", epoch)
    chunks = []
    for items in ts.episode_items:
        perm = gen.permutation(items)
        for i in range(0, len(perm), config.items_per_episode):
            chunks.append(perm[i:i + config.items_per_episode])
    order = gen.permutation(len(chunks))
    batches, cur, size = [], [], 0
    for j in order:
        cur.append(chunks[j])
        size += len(chunks[j])
        if size >= config.batch_size:
            batches.append(np.concatenate(cur))
            cur, size = [], 0
    if cur:
        batches.append(np.concatenate(cur))
    return batches


def epoch_noise(model, ts, epoch):
    """Diffusion steps (items x draws) and noise (items x draws x T_p x 3) for one epoch."""
    shape = ts.item_actions.shape[1:]
    m = model.config.noise_draws
    n = len(ts.item_frames)
    ks, eps = draw_training_noise(nx.rng(model.config.seed, "noise", epoch), model.sched, shape, n * m)
    return ks.reshape(n, m), eps.reshape((n, m) + shape)


def batch_loss(model, ts, items, noise):
    frames = ts.item_frames[items]
    uniq, inv = np.unique(frames, return_inverse=True)
    feats = model.frame_features(ts.table, uniq)
    ctx = model.context(feats, inv.reshape(frames.shape), [ts.item_skill[i] for i in items], ts.table.q[frames])
    a0 = model.normalize(ts.item_actions[items])
    ks, eps = noise
    m = ks.shape[1]
    rep = np.repeat(np.arange(len(items)), m)
    eps = eps[items].reshape((len(rep),) + a0.shape[1:])
    return training_loss(model.denoiser, nx.take_rows(ctx, rep), a0[rep], ks[items].reshape(-1), eps, model.sched)


def train(demos, config, progress=None):
    """Fit one policy on the pooled demonstrations of every skill.

    Returns (model, per-epoch mean losses). ``progress(epoch, loss)`` is called
    after each epoch when given.
    """
    if not demos:
        raise ValueError("no demonstrations")
    model = PolicyModel(config)
    ts = prepare(demos, config)
    model.fit_normalization(ts.item_actions.reshape(-1, D_ACT))
    state = nx.AdamState()
    batches_per_epoch = len(plan_batches(ts, config, 0))
    total = batches_per_epoch * config.epochs
    losses = []
    for epoch in range(config.epochs):
        acc, count = 0.0, 0
        noise = epoch_noise(model, ts, epoch)
        for items in plan_batches(ts, config, epoch):
            frac = state.step / max(total, 1)
            lr = config.lr_final + 0.5 * (config.lr - config.lr_final) * (1.0 + np.cos(np.pi * frac))
            loss = batch_loss(model, ts, items, noise)
            if not np.isfinite(loss.item()):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, step {state.step}")
            loss.backward()
            nx.adam_step(model.params, state, lr=lr)
            acc += loss.item() * len(items)
            count += len(items)
        losses.append(acc / count)
        log.info("epoch %d loss %.5f", epoch, losses[-1])
        if progress is not None:
            progress(epoch, losses[-1])
    return model, losses


# ---------------------------------------------------------------------------
# execution


def predict(model, histories, skill_ids, gens):
    """Sample a normalised-then-restored action chunk for each environment.

    ``histories[i]`` is the list of the last ``T_o`` (objects, gripper) observations.
    """
    cfg = model.config
    frames = []
    for hist, sid in zip(histories, skill_ids):
        skill = get_skill(sid)
        for objects, gripper in hist:
            frames.append(make_frame(objects, gripper, skill, cfg.variant))
    table = FrameTable(frames, cfg.variant)
    feats = model.frame_features(table, np.arange(len(frames)))
    idx = np.arange(len(frames)).reshape(len(histories), cfg.t_obs)
    ctx = model.context(feats, idx, list(skill_ids), table.q[idx])
    a = sample_actions(model.denoiser, ctx, model.sched, gens, (cfg.t_pred, D_ACT))
    return model.denormalize(a)


@dataclass
class RolloutResult:
    trajectory: list  # states visited, including the first
    actions: list
    success: bool
    steps: int


def _observation(state, relabel=None):
    objects = [o.copy() if relabel is None else o.copy(id=relabel[o.id]) for o in state.objects]
    return (objects, tw.Gripper(state.gripper.pos.copy(), state.gripper.closed))


def rollout_batch(model, states, skill_ids, gens, max_steps=200, world=tw.WorldConfig(), keep_trajectory=True,
                  shuffle_gens=None):
    """Receding-horizon execution of many independent episodes in lock step.

    Each environment replans every ``T_exec`` steps from its last ``T_o``
    observations and stops once its skill's success predicate holds or its
    step budget (``max_steps``, scalar or per environment) runs out. With
    ``shuffle_gens`` every environment's object ids are permuted once before
    the policy sees them.
    Returns (per-environment results, final states).
    """
    cfg = model.config
    n = len(states)
    budgets = [max_steps] * n if np.isscalar(max_steps) else list(max_steps)
    relabel = [None] * n
    if shuffle_gens is not None:
        for i, s in enumerate(states):
            ids = [o.id for o in s.objects]
            relabel[i] = {a: int(b) for a, b in zip(ids, shuffle_gens[i].permutation(ids))}
    states = list(states)
    hist = [[_observation(s, relabel[i])] * cfg.t_obs for i, s in enumerate(states)]
    traj = [[s] for s in states]
    acts = [[] for _ in states]
    done = [tw.success_predicate(sid, s, world) for sid, s in zip(skill_ids, states)]
    used = [0] * n
    queue = [[] for _ in states]
    while True:
        live = [i for i in range(n) if not done[i] and used[i] < budgets[i]]
        if not live:
            break
        need = [i for i in live if not queue[i]]
        if need:
            chunk = predict(model, [hist[i] for i in need], [skill_ids[i] for i in need], [gens[i] for i in need])
            for j, i in enumerate(need):
                queue[i] = list(chunk[j][: cfg.t_exec])
        for i in live:
            a = queue[i].pop(0)
            s = tw.step(states[i], a, world)
            states[i] = s
            used[i] += 1
            acts[i].append(a)
            if keep_trajectory:
                traj[i].append(s)
            hist[i] = hist[i][1:] + [_observation(s, relabel[i])]
            if tw.success_predicate(skill_ids[i], s, world):
                done[i] = True
    return [
        RolloutResult(traj[i] if keep_trajectory else [states[i]], acts[i], done[i], used[i]) for i in range(n)
    ], states


def rollout_skill(model, state, skill_id, gen, max_steps=200, world=tw.WorldConfig()):
    """Execute one skill from ``state`` (see :func:`rollout_batch`)."""
    results, _ = rollout_batch(model, [state], [skill_id], [gen], max_steps, world)
    return results[0]


# ---------------------------------------------------------------------------
# checkpoints

FORMAT_VERSION = 1


def save_checkpoint(model, path, extra=None):
    """Write ``manifest.json`` and ``params.bin`` (little-endian float64) under ``path``."""
    import os

    os.makedirs(path, exist_ok=True)
    table = {}
    offset = 0
    blobs = []
    for name, t in model.params.items():
        raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
        table[name] = {"shape": list(t.data.shape), "dtype": "f64", "file": "params.bin", "offset": offset}
        offset += len(raw)
        blobs.append(raw)
    with open(os.path.join(path, "params.bin"), "wb") as fh:
        fh.write(b"".join(blobs))
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "normalization": {"center": model.action_center.tolist(), "scale": model.action_scale.tolist()},
        "skills": model.vocab.to_json(),
        "tensors": table,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


class CheckpointError(ValueError):
    pass


def load_checkpoint(path):
    import os

    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format_version')!r}")
    config = PolicyConfig(**manifest["config"])
    skills = [get_skill(s["skill_id"]) for s in manifest["skills"]]
    model = PolicyModel(config, skills)
    state = {}
    blobs = {}
    for name, entry in manifest["tensors"].items():
        if entry["dtype"] != "f64":
            raise CheckpointError(f"{name}: unsupported dtype {entry['dtype']}")
        fname = entry["file"]
        if fname not in blobs:
            with open(os.path.join(path, fname), "rb") as fh:
                blobs[fname] = fh.read()
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(blobs[fname], dtype="<f8", count=count, offset=entry["offset"])
        state[name] = arr.reshape(entry["shape"]).astype(np.float64)
    if set(state) != set(model.params.names()):
        raise CheckpointError("checkpoint tensors do not match the configured variant")
    model.params.load_state(state)
    model.action_center = np.array(manifest["normalization"]["center"])
    model.action_scale = np.array(manifest["normalization"]["scale"])
    return model


# ---------------------------------------------------------------------------
# gradient verification


BLOCKS = ("cloud", "node", "gat", "concat", "text", "denoiser")


def _block_of(name):
    head = name.split(".")[0]
    if head.startswith("gat"):
        return "gat"
    return {"cloud": "cloud", "node": "node", "concat": "concat", "text": "text", "denoiser": "denoiser"}[head]


def gradient_suite(variant="graph", samples=100, seed=0, h=1e-5, tolerance=1e-4, items=6):
    """Finite-difference check of every parameter block against reverse mode.

    Each block is probed through a random linear readout of its own output,
    with the block's inputs taken from real training frames, so gradients
    are well scaled and rounding noise in the differences stays small.
    Returns one :class:`numerics.GradCheckReport` covering all parameters.
    """
    demos = tw.gen_demonstrations("tool_pull", 1, seed) + tw.gen_demonstrations("sort_apple", 1, seed)
    config = PolicyConfig(variant=variant, seed=seed)
    model = PolicyModel(config)
    ts = prepare(demos, config)
    model.fit_normalization(ts.item_actions.reshape(-1, D_ACT))
    gen = nx.rng(seed, "gradcheck-data")
    pick = np.sort(gen.choice(len(ts.item_frames), size=items, replace=False))
    frames = ts.item_frames[pick]
    uniq, inv = np.unique(frames, return_inverse=True)
    table = ts.table

    def probe(fn):
        out = fn()
        weights = nx.rng(seed, "gradcheck-readout").standard_normal(out.shape) / out.data.size
        return lambda: nx.tensor_sum(fn() * weights)

    losses = {}
    if variant == "nograph":
        clouds = table.union[uniq]
        losses["cloud"] = probe(lambda: model.cloud(clouds))
    else:
        nodes, src, dst, typ, graph_of, _, _ = table.gather(uniq)
        losses["cloud"] = probe(lambda: model.cloud(table.bank[np.unique(table.node_cloud[nodes])]))
        losses["node"] = probe(lambda: model.node_inputs(table, nodes))
        x = nx.Tensor(model.node_inputs(table, nodes).data)
        if variant == "graph":
            losses["gat"] = probe(lambda: model.gnn(GraphBatch(x, src, dst, typ, graph_of, len(uniq))))
        else:
            losses["concat"] = probe(lambda: model.frame_features(table, uniq))
    skills = [ts.item_skill[i] for i in pick]
    losses["text"] = probe(lambda: model.vocab.rows(skills))
    ctx = model.context(model.frame_features(table, uniq), inv.reshape(frames.shape), skills, table.q[frames]).data
    ks = gen.integers(1, config.K + 1, size=items)
    a_k = gen.standard_normal((items, config.t_pred, D_ACT))
    losses["denoiser"] = probe(lambda: model.denoiser(a_k, ks, nx.Tensor(ctx)))

    merged = nx.GradCheckReport({}, {}, tolerance)
    for block, fn in losses.items():
        names = [n for n in model.params.names() if _block_of(n) == block]
        rep = nx.gradient_check(fn, model.params, h=h, samples=samples, seed=seed, names=names, tolerance=tolerance)
        merged.max_rel_err.update(rep.max_rel_err)
        merged.probes.update(rep.probes)
    missing = set(model.params.names()) - set(merged.max_rel_err)
    if missing:
        raise RuntimeError(f"parameters left unchecked: {sorted(missing)}")
    return merged
