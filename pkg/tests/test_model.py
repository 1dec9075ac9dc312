from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from aghint import ndiff as nd
from aghint.hin import SynthSpec, synth_hin
from aghint.model import (
    AGHINT,
    AGTLayerParams,
    CheckpointError,
    GuidanceMismatchError,
    MessageGraph,
    ModelConfig,
    SequenceBatch,
    agm_layer,
    agt_forward,
    init_params,
    load_checkpoint,
    masked_loss,
    model_forward,
    prepare_inputs,
    project_features,
    save_checkpoint,
)
from aghint.ndiff import Tensor, grad_check
from aghint.pathsample import build_guidance
from conftest import make_graph, random_hin

SMALL = dict(d0=6, d_hidden=6, k_top=3, k_btm=3, n=5, dropout=0.0)


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def _leaky(x, slope):
    return np.where(x > 0, x, slope * x)


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def _layer_norm(x, g, b, eps):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def dense_agm(H, graph, message_weights, W, a_dst, a_src, slope):
    """Materialised attention: one dense in-neighbour mask per node."""
    n = graph.node_count
    mask = np.zeros((n, n), dtype=bool)
    wmat = np.ones((n, n))
    mask[graph.edge_dst, graph.edge_src] = True
    wmat[graph.edge_dst, graph.edge_src] = message_weights
    for i in range(n):
        if not mask[i].any():
            mask[i, i] = True
    WH = H @ W
    S = _leaky(WH, slope)
    out = np.zeros_like(WH)
    for i in range(n):
        js = np.flatnonzero(mask[i])
        coef = np.zeros(js.size)
        for h in range(a_dst.shape[1]):
            z = (S[i] @ a_dst[:, h] + S[js] @ a_src[:, h]) * wmat[i, js]
            coef += _softmax(z)
        coef /= a_dst.shape[1]
        out[i] = coef @ WH[js]
    return _elu(out)


def dense_agt(Hp, sequences, layers, eps):
    """Per-sequence transformer written with explicit Q/K/V matrices."""
    out = []
    for seq in sequences:
        X = Hp[seq]
        for p in layers:
            heads = []
            for Wq, Wk, Wv in zip(p["Wq"], p["Wk"], p["Wv"]):
                A = np.apply_along_axis(_softmax, 1, (X @ Wq) @ (X @ Wk).T / np.sqrt(Wk.shape[1]))
                heads.append(A @ (X @ Wv))
            X = _layer_norm(np.concatenate(heads, axis=1) @ p["Wo"] + X, p["g"], p["b"], eps)
        out.append(X[0])
    return np.array(out)


def _random_agt_layers(rng, d, heads, count):
    dk = d // heads
    layers = []
    for _ in range(count):
        layers.append({
            "Wq": [rng.normal(size=(d, dk)) for _ in range(heads)],
            "Wk": [rng.normal(size=(d, dk)) for _ in range(heads)],
            "Wv": [rng.normal(size=(d, dk)) for _ in range(heads)],
            "Wo": rng.normal(size=(dk * heads, d)),
            "g": rng.normal(size=d), "b": rng.normal(size=d),
        })
    return layers


def _as_params(layer):
    t = lambda xs: [Tensor(x) for x in xs]  # noqa: E731
    return AGTLayerParams(t(layer["Wq"]), t(layer["Wk"]), t(layer["Wv"]), Tensor(layer["Wo"]),
                          Tensor(layer["g"]), Tensor(layer["b"]))


def _small_model(graph, seed=0, **overrides):
    cfg = ModelConfig(**{**SMALL, **overrides})
    return AGHINT(graph, build_guidance(graph, cfg.guidance_params()), cfg, seed=seed)


class TestAGM:
    def test_dense_oracle_twenty_seeds(self, f64):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            g = random_hin(seed, n=25, p=0.1)
            heads = 1 + seed % 3
            H = rng.normal(size=(g.node_count, 5))
            W = rng.normal(size=(5, 4))
            a_dst, a_src = rng.normal(size=(4, heads)), rng.normal(size=(4, heads))
            uid_w = rng.uniform(0.1, 1.0, size=g.edge_uid.max() + 1)
            weights = uid_w[g.edge_uid]
            mg = MessageGraph.from_graph(g)
            got = agm_layer(Tensor(H), mg, mg.edge_weights(weights), Tensor(W), Tensor(a_dst),
                            Tensor(a_src), slope=0.2).data
            want = dense_agm(H, g, weights, W, a_dst, a_src, 0.2)
            assert_allclose(got, want, rtol=0, atol=1e-10)

    def test_single_in_neighbour(self, f64):
        g = make_graph([0, 1], [(0, 1, 0)])
        rng = np.random.default_rng(0)
        H, W = rng.normal(size=(2, 3)), rng.normal(size=(3, 3))
        mg = MessageGraph.from_graph(g)
        out = agm_layer(Tensor(H), mg, mg.edge_weights(None), Tensor(W),
                        Tensor(rng.normal(size=(3, 1))), Tensor(rng.normal(size=(3, 1)))).data
        assert_allclose(out[0], _elu(H[1] @ W), atol=1e-12)
        assert_allclose(out[1], _elu(H[0] @ W), atol=1e-12)

    def test_two_equal_neighbours_share_evenly(self, f64):
        g = make_graph([0, 1, 1], [(0, 1, 0), (0, 2, 0)])
        H = np.array([[1.0, -1.0], [0.5, 2.0], [0.5, 2.0]])
        W = np.eye(2)
        mg = MessageGraph.from_graph(g)
        out = agm_layer(Tensor(H), mg, mg.edge_weights(None), Tensor(W),
                        Tensor([[0.3], [0.7]]), Tensor([[-0.2], [1.1]])).data
        assert_allclose(out[0], _elu(0.5 * H[1] + 0.5 * H[2]), atol=1e-12)

    def test_self_loops_only_for_nodes_without_in_edges(self):
        g = make_graph([0, 1, 0], [(0, 1, 0)])
        mg = MessageGraph.from_graph(g)
        loops = mg.src == mg.dst
        assert_array_equal(mg.src[loops], [2])
        assert np.all(mg.slot[loops] == -1)
        assert_array_equal(mg.edge_weights(np.full(2, 0.3))[loops], [1.0])

    def test_message_edges_sorted_by_destination(self):
        mg = MessageGraph.from_graph(random_hin(4))
        key = mg.dst * (mg.num_nodes + 1) + mg.src
        assert np.all(np.diff(key) >= 0)

    def test_weight_length_checked(self, toy3):
        mg = MessageGraph.from_graph(toy3)
        with pytest.raises(ValueError):
            agm_layer(Tensor(np.ones((3, 2))), mg, np.ones(1), Tensor(np.eye(2)),
                      Tensor(np.ones((2, 1))), Tensor(np.ones((2, 1))))


class TestAGT:
    def test_qkv_oracle(self, f64):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            n, d, heads = 20, 6, 1 + seed % 3
            d = heads * 2
            Hp = rng.normal(size=(n, d))
            seqs = [rng.choice(n, size=int(rng.integers(1, 7)), replace=False) for _ in range(8)]
            layers = _random_agt_layers(rng, d, heads, 1 + seed % 2)
            got = agt_forward(Tensor(Hp), SequenceBatch.from_sequences(seqs),
                              [_as_params(p) for p in layers], eps=1e-5).data
            assert_allclose(got, dense_agt(Hp, seqs, layers, 1e-5), rtol=0, atol=1e-10)

    def test_singleton_sequence(self, f64):
        rng = np.random.default_rng(1)
        Hp = rng.normal(size=(3, 4))
        layer = _random_agt_layers(rng, 4, 1, 1)[0]
        got = agt_forward(Tensor(Hp), SequenceBatch.from_sequences([np.array([2])]), [_as_params(layer)]).data
        # attention over a single token returns that token's value
        want = _layer_norm(Hp[2] @ layer["Wv"][0] @ layer["Wo"] + Hp[2], layer["g"], layer["b"], 1e-5)
        assert_allclose(got[0], want, atol=1e-10)

    def test_identical_rows_attend_uniformly(self, f64):
        rng = np.random.default_rng(2)
        Hp = np.tile(rng.normal(size=4), (3, 1))
        batch = SequenceBatch.from_sequences([np.array([0, 1, 2])])
        layer = _random_agt_layers(rng, 4, 1, 1)[0]
        got = agt_forward(Tensor(Hp), batch, [_as_params(layer)]).data
        want = _layer_norm(Hp[0] @ layer["Wv"][0] @ layer["Wo"] + Hp[0], layer["g"], layer["b"], 1e-5)
        assert_allclose(got[0], want, atol=1e-10)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError):
            SequenceBatch.from_sequences([np.array([1]), np.array([], dtype=int)])

    def test_pair_layout(self):
        b = SequenceBatch.from_sequences([np.array([4, 5]), np.array([7])])
        assert_array_equal(b.pair_q, [0, 0, 1, 1, 2])
        assert_array_equal(b.pair_k, [0, 1, 0, 1, 2])
        assert_array_equal(b.first_token, [0, 2])


class TestClassifierAndProjection:
    def test_uniform_logits_loss_is_log_classes(self, f64):
        for c in (2, 3, 7):
            loss = masked_loss(Tensor(np.zeros((5, c))), np.arange(5) % c, np.ones(5, bool))
            assert loss.data == pytest.approx(np.log(c), abs=1e-12)

    def test_multi_label_zero_logits(self, f64):
        labels = np.array([[1, 0, 1], [0, 0, 1]])
        loss = masked_loss(Tensor(np.zeros((2, 3))), labels, np.ones(2, bool), multi_label=True)
        assert loss.data == pytest.approx(np.log(2), abs=1e-12)

    def test_mask_selects_rows(self, f64):
        logits = Tensor(np.array([[10.0, 0.0], [0.0, 0.0]]))
        loss = masked_loss(logits, np.array([1, 0]), np.array([False, True]))
        assert loss.data == pytest.approx(np.log(2))
        with pytest.raises(ValueError):
            masked_loss(logits, np.array([1, 0]), np.zeros(2, bool))

    def test_identity_projection(self, f64):
        x = np.random.default_rng(0).normal(size=(3, 4))
        H = project_features([Tensor(x)], [np.array([2, 0, 1])], [Tensor(np.eye(4))],
                             [Tensor(np.zeros(4))], 3).data
        assert_allclose(H[[2, 0, 1]], x)

    def test_bias_only_projection(self, f64):
        H = project_features([Tensor(np.ones((2, 3)))], [np.array([0, 1])], [Tensor(np.zeros((3, 2)))],
                             [Tensor([0.5, -1.0])], 2).data
        assert_allclose(H, [[0.5, -1.0], [0.5, -1.0]])

    def test_per_type_oracle(self, f64):
        rng = np.random.default_rng(3)
        xs = [rng.normal(size=(2, 3)), rng.normal(size=(3, 2))]
        idx = [np.array([0, 3]), np.array([1, 2, 4])]
        Ws = [rng.normal(size=(3, 4)), rng.normal(size=(2, 4))]
        bs = [rng.normal(size=4), rng.normal(size=4)]
        H = project_features([Tensor(x) for x in xs], idx, [Tensor(w) for w in Ws],
                             [Tensor(b) for b in bs], 5).data
        for x, ix, W, b in zip(xs, idx, Ws, bs):
            for row, node in zip(x, ix):
                assert_allclose(H[node], row @ W + b, atol=1e-12)

    def test_projection_dim_checked(self):
        with pytest.raises(ValueError):
            project_features([Tensor(np.ones((1, 3)))], [np.array([0])], [Tensor(np.ones((2, 2)))],
                             [Tensor(np.zeros(2))], 1)


def _expected_parameter_count(graph, cfg):
    d0, dh = cfg.d0, cfg.d_hidden
    count = sum(info.attr_dim * d0 + d0 for info in graph.node_types)
    if cfg.variant == "no_agm":
        count += d0 * dh if d0 != dh else 0
    else:
        for layer in range(cfg.L_M):
            count += (d0 if layer == 0 else dh) * dh + 2 * dh * cfg.heads_M
    if cfg.variant != "no_agt":
        dk = dh // cfg.heads_T
        per_layer = 3 * dh * dk * cfg.heads_T + dk * cfg.heads_T * dh + 2 * dh
        if cfg.ffn_in_agt:
            per_layer += 2 * dh * dh + 4 * dh
        count += cfg.L_T * per_layer
    return count + dh * graph.num_classes + graph.num_classes


class TestNetwork:
    @pytest.mark.parametrize("variant", ["full", "no_agt", "no_agm", "no_ag"])
    @pytest.mark.parametrize("dims", [(6, 6), (5, 8)])
    def test_parameter_accounting(self, variant, dims):
        g = synth_hin(SynthSpec(num_target=40))
        cfg = ModelConfig(d0=dims[0], d_hidden=dims[1], heads_M=2, heads_T=2, L_M=2, L_T=2,
                          variant=variant, ffn_in_agt=variant == "full")
        assert sum(p.size for p in init_params(g, cfg, 0).values()) == _expected_parameter_count(g, cfg)

    def test_alpha_one_equals_all_ones_weights(self):
        g = synth_hin(SynthSpec(num_target=60))
        plain = _small_model(g, alpha=1.0)
        cfg = ModelConfig(**SMALL, alpha=0.8)
        forced = AGHINT(g, build_guidance(g, cfg.guidance_params()), cfg, seed=0,
                        message_weights=np.ones(g.edge_count))
        assert_array_equal(plain.forward().data, forced.forward().data)

    def test_no_ag_ignores_message_weights(self):
        g = synth_hin(SynthSpec(num_target=60))
        cfg = ModelConfig(**SMALL, variant="no_ag")
        gd = build_guidance(g, cfg.guidance_params())
        a = AGHINT(g, gd, cfg).forward().data
        b = AGHINT(g, gd, cfg, message_weights=np.full(g.edge_count, 0.01)).forward().data
        assert_array_equal(a, b)

    def test_sequence_tail_permutation_invariance(self, f64):
        g = synth_hin(SynthSpec(num_target=60))
        cfg = ModelConfig(**{**SMALL, "L_T": 2, "heads_T": 2})
        gd = build_guidance(g, cfg.guidance_params())
        rng = np.random.default_rng(0)
        shuffled = [np.concatenate([s[:1], rng.permutation(s[1:])]) for s in gd.attr_sequences]
        a = AGHINT(g, gd, cfg).forward().data
        b = AGHINT(g, replace(gd, attr_sequences=shuffled), cfg).forward().data
        assert_allclose(a, b, atol=1e-6)

    def test_adjacency_order_invariance(self, f64):
        base = random_hin(8, n=30)
        edges = sorted({(min(u, v), max(u, v), t) for u, v, t in
                        zip(base.edge_src.tolist(), base.edge_dst.tolist(), base.edge_type_of.tolist())})
        types = base.node_type_of
        attrs, labels = base.target_attributes, base.labels
        shuffled = [edges[i] for i in np.random.default_rng(1).permutation(len(edges))]
        flipped = [(v, u, t) for u, v, t in shuffled]
        out = []
        for es in (edges, flipped):
            g = make_graph(types, es, attrs, labels)
            out.append(_small_model(g).forward().data)
        assert_allclose(out[0], out[1], atol=1e-6)

    def test_full_model_gradient(self, f64):
        g = synth_hin(SynthSpec(num_target=12, aux_per_class=2, target_attr_dim=6))
        assert g.node_count == 30
        cfg = ModelConfig(d0=3, d_hidden=4, heads_M=2, heads_T=2, L_M=2, L_T=2, ffn_in_agt=True,
                          k_top=2, k_btm=2, n=4, dropout=0.0)
        model = AGHINT(g, build_guidance(g, cfg.guidance_params()), cfg, seed=0)
        y = g.labels

        def loss():
            return masked_loss(model.forward(), y, np.ones(y.size, bool))

        assert grad_check(loss, model.parameters()) < 1e-4

    def test_multi_label_mismatch(self):
        g = synth_hin(SynthSpec(num_target=30))
        cfg = ModelConfig(**SMALL, multi_label=True)
        with pytest.raises(ValueError):
            AGHINT(g, build_guidance(g, cfg.guidance_params()), cfg)

    def test_guidance_mismatch(self):
        g = synth_hin(SynthSpec(num_target=30))
        other = synth_hin(SynthSpec(num_target=30, seed=5))
        cfg = ModelConfig(**SMALL)
        with pytest.raises(GuidanceMismatchError):
            prepare_inputs(g, build_guidance(other, cfg.guidance_params()), cfg)
        with pytest.raises(GuidanceMismatchError):
            prepare_inputs(g, build_guidance(g, replace(cfg, k_top=1).guidance_params()), cfg)

    def test_seed_controls_init_only(self):
        g = synth_hin(SynthSpec(num_target=30))
        a, b = _small_model(g, seed=0), _small_model(g, seed=1)
        assert not np.array_equal(a.forward().data, b.forward().data)
        assert_array_equal(a.forward().data, _small_model(g, seed=0).forward().data)

    def test_dropout_only_in_training(self):
        g = synth_hin(SynthSpec(num_target=30))
        m = _small_model(g, dropout=0.5)
        assert_array_equal(m.forward().data, m.forward().data)
        assert not np.array_equal(m.forward(training=True, step=0).data,
                                  m.forward(training=True, step=1).data)

    def test_model_forward_matches_method(self):
        g = synth_hin(SynthSpec(num_target=30))
        m = _small_model(g)
        assert_array_equal(model_forward(m.inputs, m.params, m.config).data, m.forward().data)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        g = synth_hin(SynthSpec(num_target=30))
        m = _small_model(g)
        path = save_checkpoint(tmp_path / "m.ckpt", m.state(), m.config, {"epoch": 3})
        state, cfg, meta = load_checkpoint(path, expected=m.config)
        assert cfg == m.config and meta == {"epoch": 3}
        fresh = _small_model(g, seed=9)
        fresh.load_state(state)
        assert_array_equal(fresh.forward().data, m.forward().data)

    def test_config_hash_mismatch(self, tmp_path):
        cfg = ModelConfig(**SMALL)
        path = save_checkpoint(tmp_path / "m.ckpt", {"w": np.ones(2)}, cfg)
        with pytest.raises(CheckpointError):
            load_checkpoint(path, expected=replace(cfg, d_hidden=8))

    def test_corrupt_files(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "missing.ckpt")
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)
        path = save_checkpoint(tmp_path / "t.ckpt", {"w": np.ones(100)}, ModelConfig(**SMALL))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_precision_preserved(self, tmp_path):
        state = {"a": np.arange(3, dtype=np.float32), "b": np.ones((2, 2))}
        back, _, _ = load_checkpoint(save_checkpoint(tmp_path / "p.ckpt", state, ModelConfig()))
        for k in state:
            assert back[k].dtype == state[k].dtype
            assert_array_equal(back[k], state[k])


class TestAttentionRows:
    @pytest.mark.parametrize("bits,tol", [(32, 1e-6), (64, 1e-12)])
    def test_rows_sum_to_one(self, bits, tol):
        g = synth_hin(SynthSpec(num_target=80))
        mg = MessageGraph.from_graph(g)
        gd = build_guidance(g, ModelConfig(**SMALL).guidance_params())
        batch = SequenceBatch.from_sequences(gd.attr_sequences)
        rng = np.random.default_rng(0)
        with nd.precision(bits):
            for seg in (mg.dst, batch.pair_q):
                z = rng.normal(scale=5.0, size=(seg.size, 2))
                att = nd.segment_softmax(Tensor(z), seg).data
                sums = np.zeros((seg.max() + 1, 2))
                np.add.at(sums, seg, att.astype(np.float64))
                assert np.abs(sums[np.unique(seg)] - 1).max() < tol
