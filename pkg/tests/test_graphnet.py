import numpy as np
import pytest

from focuspolicy import numerics as nx
from focuspolicy.graphnet import D_F, LAYERS, GraphBatch, GraphEncoder, encode_graph
from focuspolicy.scenegraph import NUM_EDGE_TYPES, SELF_LOOP

D_IN = 12


def make_encoder(seed=0):
    return GraphEncoder(nx.ParamStore(), nx.rng(seed, "gat"), D_IN)


def random_graph(gen, n):
    src, dst, typ = [], [], []
    for i in range(n):
        src.append(i), dst.append(i), typ.append(SELF_LOOP)
    for _ in range(int(gen.integers(0, 2 * n))):
        a, b = gen.integers(0, n, 2)
        if a != b:
            src.append(a), dst.append(b), typ.append(int(gen.integers(0, NUM_EDGE_TYPES - 1)))
    return gen.standard_normal((n, D_IN)), np.array(src), np.array(dst), np.array(typ)


def batch_of(x, src, dst, typ):
    order = np.argsort(dst, kind="stable")
    n = len(x)
    return GraphBatch(nx.Tensor(x), src[order], dst[order], typ[order], np.zeros(n, dtype=np.int64), 1)


def test_output_width_and_layer_shapes():
    enc = make_encoder()
    assert enc.params["gat0.w"].shape == (D_IN, 4 * 32)
    assert enc.params["gat1.w"].shape == (4 * 32, D_F)
    assert enc.params["gat0.b_rel"].shape == (NUM_EDGE_TYPES, 4)
    x, s, d, t = random_graph(nx.rng(1), 5)
    assert encode_graph(enc, batch_of(x, s, d, t)).shape == (1, D_F)
    assert LAYERS[0][2] and not LAYERS[1][2]


def test_permutation_invariance():
    enc = make_encoder()
    gen = nx.rng(2)
    x, s, d, t = random_graph(gen, 7)
    base = enc(batch_of(x, s, d, t)).data
    for _ in range(100):
        perm = gen.permutation(7)
        inv = np.argsort(perm)
        got = enc(batch_of(x[perm], inv[s], inv[d], t)).data
        np.testing.assert_allclose(got, base, atol=1e-9, rtol=0)


def test_attention_sums_to_one_per_node():
    enc = make_encoder()
    x, s, d, t = random_graph(nx.rng(3), 6)
    b = batch_of(x, s, d, t)
    _, alpha = enc.layer(b.x, b, 0, return_attention=True)
    sums = np.zeros((6, 4))
    np.add.at(sums, b.dst, alpha.data)
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_single_node_is_two_linear_maps():
    enc = make_encoder()
    x = nx.rng(4).standard_normal((1, D_IN))
    b = batch_of(x, np.array([0]), np.array([0]), np.array([SELF_LOOP]))
    p = enc.params
    expected = nx.elu(x @ p["gat0.w"]).data @ p["gat1.w"].data
    np.testing.assert_allclose(enc(b).data, expected, atol=1e-12)


def test_symmetric_pair_splits_attention_evenly():
    enc = make_encoder()
    x = np.tile(nx.rng(5).standard_normal(D_IN), (2, 1))
    b = batch_of(x, np.array([0, 1, 0, 1]), np.array([0, 1, 1, 0]), np.array([SELF_LOOP, SELF_LOOP, 2, 2]))
    enc.params["gat0.b_rel"].data[:] = 0.0
    _, alpha = enc.layer(b.x, b, 0, return_attention=True)
    np.testing.assert_allclose(alpha.data, 0.5, atol=1e-15)


def test_identity_weights_average_neighbours():
    ps = nx.ParamStore()
    enc = GraphEncoder(ps, nx.rng(6), 4 * 32)
    for name in ("gat1.a_self", "gat1.a_nbr"):
        ps[name].data[:] = 0.0
    ps["gat1.w"].data[:] = np.eye(4 * 32)[:, :D_F]
    h = nx.rng(7).standard_normal((2, 4 * 32))
    b = batch_of(h, np.array([0, 1, 1]), np.array([0, 1, 0]), np.array([SELF_LOOP, SELF_LOOP, 3]))
    ps["gat1.b_rel"].data[:] = 0.0
    out = enc.layer(b.x, b, 1).data
    np.testing.assert_allclose(out[0], (h[0, :D_F] + h[1, :D_F]) / 2, atol=1e-14)
    np.testing.assert_allclose(out[1], h[1, :D_F], atol=1e-14)


def test_batched_graphs_match_individual():
    enc = make_encoder()
    gen = nx.rng(8)
    graphs = [random_graph(gen, n) for n in (1, 4, 3)]
    singles = [enc(batch_of(*g)).data[0] for g in graphs]
    xs, ss, ds, ts, of, off = [], [], [], [], [], 0
    for i, (x, s, d, t) in enumerate(graphs):
        xs.append(x), ss.append(s + off), ds.append(d + off), ts.append(t), of.append(np.full(len(x), i))
        off += len(x)
    src, dst, typ = np.concatenate(ss), np.concatenate(ds), np.concatenate(ts)
    order = np.argsort(dst, kind="stable")
    b = GraphBatch(nx.Tensor(np.concatenate(xs)), src[order], dst[order], typ[order], np.concatenate(of), 3)
    np.testing.assert_allclose(enc(b).data, np.stack(singles), atol=1e-12)


def test_node_without_incoming_edge_fails():
    enc = make_encoder()
    x = np.zeros((2, D_IN))
    b = batch_of(x, np.array([0]), np.array([0]), np.array([SELF_LOOP]))
    with pytest.raises(ValueError, match="empty neighborhood"):
        enc(b)
