"""Architecture structure, fixtures, and forward-equivalence oracles."""

import math

import numpy as np
import pytest

from kinseg.autodiff import Tensor, ops
from kinseg.model import (Conv1d, DdrlLayer, ModelConfig, MsTcrNet,
                          RefinementStage, downsampled_length)


class TestConfig:
    def test_parameter_counts_match_published(self):
        l_count = MsTcrNet(ModelConfig.l_variant()).num_parameters()
        g_count = MsTcrNet(ModelConfig.g_variant()).num_parameters()
        assert abs(l_count - 6.3e6) / 6.3e6 < 0.02
        assert abs(g_count - 8.4e6) / 8.4e6 < 0.02

    @pytest.mark.parametrize("n_layers", [7, 11, 13])
    def test_dilation_pairs(self, n_layers):
        cfg = ModelConfig(variant="G", num_layers_pg=n_layers, feature_maps=4,
                          num_classes=2, input_dim=2)
        for layer in range(1, n_layers + 1):
            assert cfg.dilations(layer) == (2 ** (layer - 1),
                                            2 ** (n_layers - layer))

    @pytest.mark.parametrize("n_layers,expected", [
        (7, (4,)), (11, (4, 7, 10)), (13, (4, 7, 10)), (4, ()), (5, (4,)),
    ])
    def test_isr_index_sets(self, n_layers, expected):
        cfg = ModelConfig(variant="L", num_layers_pg=n_layers, feature_maps=4,
                          num_classes=2, input_dim=2)
        assert cfg.isr_indices == expected

    def test_head_count(self):
        model = MsTcrNet(ModelConfig.l_variant(num_classes=3, input_dim=6))
        out = model.forward(np.zeros((40, 6)), training=False)
        assert len(out.isr) == 3
        assert len(out.refined) == 1
        assert len(out.heads) == 5  # 3 ISR + stage + 1 refinement

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ModelConfig(variant="X")
        with pytest.raises(ValueError):
            ModelConfig(num_layers_pg=0)


def ddrl_oracle(x, layer, dilation_a, dilation_b):
    """Nested-loop re-implementation of one DDRL (no dropout)."""
    def conv(x, w, b, dil):
        c_out, c_in, k = w.shape
        pad = dil * (k - 1) // 2
        t_len = x.shape[1]
        y = np.zeros((c_out, t_len))
        for c in range(c_out):
            for t in range(t_len):
                acc = b[c]
                for i in range(c_in):
                    for j in range(k):
                        src = t + j * dil - pad
                        if 0 <= src < t_len:
                            acc += w[c, i, j] * x[i, src]
                y[c, t] = acc
        return y

    a = conv(x, layer.conv_a.w.data, layer.conv_a.b.data, dilation_a)
    b = conv(x, layer.conv_b.w.data, layer.conv_b.b.data, dilation_b)
    cat = np.maximum(np.concatenate([a, b], axis=0), 0.0)
    fused = conv(cat, layer.fuse.w.data, layer.fuse.b.data, 1)
    return x + fused


class TestDdrl:
    def test_zero_weights_pure_residual(self, f64, rng):
        layer = DdrlLayer(4, 1, 2, np.random.default_rng(0), np.float64)
        for _, p in layer.parameters():
            p.data[:] = 0.0
        x = Tensor(rng.normal(size=(4, 9)))
        y = layer(x, 0.0, False, rng)
        assert np.array_equal(y.data, x.data)

    def test_matches_loop_oracle(self, f64, rng):
        layer = DdrlLayer(4, 2, 4, np.random.default_rng(3), np.float64)
        x = rng.normal(size=(4, 16))
        y = layer(Tensor(x), 0.0, False, rng)
        assert np.allclose(y.data, ddrl_oracle(x, layer, 2, 4), atol=1e-6)


class TestBiRnn:
    def test_zero_weights_zero_states(self, f64):
        cfg = ModelConfig(variant="L", num_layers_pg=2, feature_maps=4,
                          num_classes=3, input_dim=3, rnn_layers=2, rnn_hidden=4)
        stage = RefinementStage(cfg, np.random.default_rng(0), np.float64)
        for name, p in stage.rnn.parameters():
            p.data[:] = 0.0
        x = Tensor(np.random.default_rng(1).normal(size=(6, 3)))
        h = stage.rnn(x)
        assert np.array_equal(h.data, np.zeros((6, 8)))

    def test_hand_executed_lstm_fixture(self, f64):
        # frozen from a scalar hand recurrence (Q=1, M=1, gates i,f,g,o)
        wx = Tensor(np.array([[0.5], [-0.25], [1.0], [0.3]]))
        wh = Tensor(np.array([[0.1], [0.2], [-0.1], [0.4]]))
        b = Tensor(np.array([0.05, -0.05, 0.1, 0.0]))
        x = Tensor(np.array([[1.0], [-0.5], [0.25]]))
        h = ops.lstm(x, wx, wh, b)
        expected = [0.2688922841512205, 0.04206133141283491, 0.11423357841337424]
        assert np.allclose(h.data.ravel(), expected, atol=1e-12)

    @pytest.mark.parametrize("kind", ["lstm", "gru"])
    def test_direction_symmetry(self, f64, rng, kind):
        """Reversing the input swaps the forward/backward halves of a single
        bidirectional layer (with time order reversed)."""
        from kinseg.model import RnnCell
        fwd = RnnCell(kind, 3, 4, np.random.default_rng(0), np.float64)
        bwd = RnnCell(kind, 3, 4, np.random.default_rng(1), np.float64)
        x = Tensor(rng.normal(size=(7, 3)))

        def bidir(f, b, xin):
            rev = b(xin.flip(0)).flip(0)
            return ops.concat([f(xin), rev], axis=1).data

        out = bidir(fwd, bwd, x)
        out_rev = bidir(bwd, fwd, x.flip(0))
        swapped = np.concatenate([out_rev[::-1, 4:], out_rev[::-1, :4]], axis=1)
        assert np.allclose(out, swapped, atol=1e-12)


class TestRefinement:
    def make_stage(self, k, hidden=4, classes=3, seed=0):
        cfg = ModelConfig(variant="G", num_layers_pg=2, feature_maps=4,
                          num_classes=classes, input_dim=3, rnn_layers=1,
                          rnn_hidden=hidden, secondary_sampling=k)
        return RefinementStage(cfg, np.random.default_rng(seed), np.float64)

    def probs(self, rng, c, t):
        p = rng.random((c, t)) + 0.1
        return Tensor(p / p.sum(axis=0, keepdims=True))

    def test_k1_no_resampling(self, f64, rng):
        stage = self.make_stage(k=1)
        y = stage(self.probs(rng, 3, 11), False, rng)
        assert y.shape == (3, 11)

    def test_downsample_upsample_lengths(self, f64, rng):
        # T'=7, k=3 -> kept {0,3,6}, N'=3, upsampled 9 truncated to 7
        assert downsampled_length(7, 3) == 3
        stage = self.make_stage(k=3)
        y = stage(self.probs(rng, 3, 7), False, rng)
        assert y.shape == (3, 7)
        # replicated blocks: frames 0-2 equal, 3-5 equal, 6 alone
        assert np.allclose(y.data[:, 0], y.data[:, 1])
        assert np.allclose(y.data[:, 1], y.data[:, 2])
        assert np.allclose(y.data[:, 3], y.data[:, 5])
        assert not np.allclose(y.data[:, 2], y.data[:, 3])

    def test_zero_rnn_head_bias_softmax(self, f64, rng):
        stage = self.make_stage(k=2)
        for _, p in stage.rnn.parameters():
            p.data[:] = 0.0
        stage.head.w.data[:] = 0.0
        beta = np.array([1.0, -1.0, 0.5])
        stage.head.b.data[:] = beta
        y = stage(self.probs(rng, 3, 8), False, rng)
        expected = np.exp(beta) / np.exp(beta).sum()
        assert np.allclose(y.data, expected[:, None], atol=1e-12)

    def test_probability_rows(self, f64, rng):
        stage = self.make_stage(k=3)
        y = stage(self.probs(rng, 3, 10), False, rng)
        assert np.allclose(y.data.sum(axis=0), 1.0, atol=1e-6)


def straight_line_forward(model: MsTcrNet, feats: np.ndarray) -> np.ndarray:
    """Independent no-graph re-implementation of the full forward pass
    (eval mode) for G-variant models; plain numpy only."""
    cfg = model.cfg

    def conv(x, w, b, dil):
        c_out, _, k = w.shape
        pad = dil * (k - 1) // 2
        t_len = x.shape[1]
        xp = np.zeros((x.shape[0], t_len + 2 * pad))
        xp[:, pad:pad + t_len] = x
        y = np.tile(b[:, None], (1, t_len)).astype(float)
        for j in range(k):
            y += w[:, :, j] @ xp[:, j * dil:j * dil + t_len]
        return y

    def softmax(z):
        e = np.exp(z - z.max(axis=0, keepdims=True))
        return e / e.sum(axis=0, keepdims=True)

    def gru_seq(x, wx, wh, bx, bh):
        q = wh.shape[1]
        h = np.zeros(q)
        out = []
        for t in range(x.shape[0]):
            prex = wx @ x[t] + bx
            preh = wh @ h
            r = 1 / (1 + np.exp(-(prex[:q] + preh[:q])))
            z = 1 / (1 + np.exp(-(prex[q:2 * q] + preh[q:2 * q])))
            n = np.tanh(prex[2 * q:] + r * (preh[2 * q:] + bh))
            h = (1 - z) * n + z * h
            out.append(h)
        return np.stack(out)

    x = feats.T[:, ::cfg.primary_sampling]
    t_work = x.shape[1]
    h = conv(x, model.input_proj.w.data, model.input_proj.b.data, 1)
    for i, layer in enumerate(model.ddrl, start=1):
        d1, d2 = cfg.dilations(i)
        a = conv(h, layer.conv_a.w.data, layer.conv_a.b.data, d1)
        b2 = conv(h, layer.conv_b.w.data, layer.conv_b.b.data, d2)
        cat = np.maximum(np.concatenate([a, b2], axis=0), 0.0)
        h = h + conv(cat, layer.fuse.w.data, layer.fuse.b.data, 1)
    y = softmax(conv(h, model.stage_head.w.data, model.stage_head.b.data, 1))
    for stage in model.refinements:
        k = stage.k
        xin = y[:, ::k].T
        for fwd, bwd in stage.rnn.cells:
            f = gru_seq(xin, fwd.wx.data, fwd.wh.data, fwd.b.data, fwd.bh.data)
            r = gru_seq(xin[::-1], bwd.wx.data, bwd.wh.data, bwd.b.data,
                        bwd.bh.data)[::-1]
            xin = np.concatenate([f, r], axis=1)
        logits = conv(xin.T, stage.head.w.data, stage.head.b.data, 1)
        y = np.repeat(softmax(logits), k, axis=1)[:, :t_work]
    return np.repeat(y, cfg.primary_sampling, axis=1)[:, :feats.shape[0]]


class TestModelForward:
    def toy(self):
        cfg = ModelConfig(variant="G", num_layers_pg=2, feature_maps=4,
                          pg_dropout=0.0, num_refinements=1, rnn_layers=2,
                          rnn_hidden=3, rnn_dropout=0.0, num_classes=3,
                          input_dim=3, primary_sampling=2, secondary_sampling=2)
        return MsTcrNet(cfg, seed=7, dtype=np.float64)

    def test_matches_straight_line_reimplementation(self, rng):
        model = self.toy()
        feats = rng.normal(size=(23, 3))
        ours = model.forward(feats, training=False).final_fullres.data
        theirs = straight_line_forward(model, feats)
        assert np.allclose(ours, theirs, atol=1e-5)

    def test_r1_no_refinement_final_is_stage(self, rng):
        cfg = ModelConfig(variant="G", num_layers_pg=2, feature_maps=4,
                          num_refinements=0, rnn_layers=1, rnn_hidden=3,
                          num_classes=3, input_dim=3, primary_sampling=1,
                          secondary_sampling=1)
        model = MsTcrNet(cfg, seed=0, dtype=np.float64)
        out = model.forward(rng.normal(size=(15, 3)), training=False)
        assert out.final_fullres is out.stage

    def test_length_contract_fuzz(self, rng):
        for _ in range(60):
            r = int(rng.integers(1, 5))
            k = int(rng.integers(1, 5))
            t_len = int(rng.integers(r * k, 80))
            cfg = ModelConfig(variant="L", num_layers_pg=2, feature_maps=4,
                              num_refinements=1, rnn_layers=1, rnn_hidden=3,
                              num_classes=2, input_dim=2, primary_sampling=r,
                              secondary_sampling=k)
            model = MsTcrNet(cfg, seed=1)
            out = model.forward(rng.normal(size=(t_len, 2)), training=False)
            assert out.final_fullres.shape == (2, t_len), (t_len, r, k)

    def test_channel_permutation_symmetry(self, rng):
        """Relabeling classes consistently (stage head rows, refinement input
        weights, refinement head rows) permutes the final output rows."""
        model = self.toy()
        feats = rng.normal(size=(21, 3))
        base = model.forward(feats, training=False).final_fullres.data
        perm = np.array([2, 0, 1])
        model.stage_head.w.data = model.stage_head.w.data[perm]
        model.stage_head.b.data = model.stage_head.b.data[perm]
        for i, head in model.isr_heads.items():
            head.w.data = head.w.data[perm]
            head.b.data = head.b.data[perm]
        stage = model.refinements[0]
        for fwd, bwd in stage.rnn.cells[:1]:
            fwd.wx.data = fwd.wx.data[:, perm]
            bwd.wx.data = bwd.wx.data[:, perm]
        stage.head.w.data = stage.head.w.data[perm]
        stage.head.b.data = stage.head.b.data[perm]
        permuted = model.forward(feats, training=False).final_fullres.data
        # row i of the relabeled output is row perm[i] of the original;
        # un-permuting the head rows this way restores identical predictions
        assert np.allclose(permuted, base[perm], atol=1e-12)

    def test_wrong_input_dim_errors(self, rng):
        with pytest.raises(ValueError):
            self.toy().forward(rng.normal(size=(10, 5)))

    def test_checkpoint_round_trip(self, tmp_path, rng):
        model = self.toy()
        feats = rng.normal(size=(19, 3))
        before = model.forward(feats).final_fullres.data
        path = tmp_path / "toy.ckpt"
        model.save_checkpoint(path)
        loaded = MsTcrNet.load_checkpoint(path, dtype=np.float64)
        after = loaded.forward(feats).final_fullres.data
        assert np.allclose(before, after, atol=1e-6)  # f32 storage

    def test_predict_labels(self, rng):
        model = self.toy()
        pred = model.predict(rng.normal(size=(18, 3)))
        assert pred.shape == (18,)
        assert set(np.unique(pred)) <= {0, 1, 2}
