"""The multi-stage temporal convolutional-recurrent segmentation model.

Stage 1 (prediction generator): a 1x1 input projection followed by L dual
dilated residual layers whose parallel convolutions use dilations
2^(l-1) and 2^(L-l); prediction heads sit after every layer in
{4, 7, 10} that is strictly below L (intra-stage regularization) plus the
stage output head after layer L.

Refinement stages consume the previous stage's frame-wise probabilities
only: downsample by k, a stacked bidirectional RNN (LSTM for the L
variant, GRU for G), dropout, a linear head with softmax, and upsample
back by k.  The network input itself is downsampled by the primary factor
r and the final stage output is upsampled back to full resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tensor, ops
from .autodiff import checkpoint as ckpt

ISR_CANDIDATES = (4, 7, 10)


@dataclass
class ModelConfig:
    variant: str = "G"  # "L" (BiLSTM refinement) or "G" (BiGRU)
    num_layers_pg: int = 13
    feature_maps: int = 256
    pg_dropout: float = 0.645
    num_refinements: int = 1
    rnn_layers: int = 2
    rnn_hidden: int = 256
    rnn_dropout: float = 0.5747
    num_classes: int = 6
    input_dim: int = 36
    primary_sampling: int = 1  # r
    secondary_sampling: int = 6  # k
    isr_candidates: tuple[int, ...] = ISR_CANDIDATES

    def __post_init__(self):
        if self.variant not in ("L", "G"):
            raise ValueError("variant must be 'L' or 'G'")
        for name in ("num_layers_pg", "feature_maps", "rnn_hidden",
                     "primary_sampling", "secondary_sampling", "num_classes",
                     "input_dim", "rnn_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def isr_indices(self) -> tuple[int, ...]:
        return tuple(i for i in self.isr_candidates if i < self.num_layers_pg)

    def dilations(self, layer: int) -> tuple[int, int]:
        """Dilation pair of 1-based DDRL index ``layer``."""
        return 2 ** (layer - 1), 2 ** (self.num_layers_pg - layer)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["isr_candidates"] = list(self.isr_candidates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["isr_candidates"] = tuple(d.get("isr_candidates", ISR_CANDIDATES))
        return cls(**d)

    @classmethod
    def l_variant(cls, num_classes: int = 6, input_dim: int = 36) -> "ModelConfig":
        return cls(variant="L", num_layers_pg=11, feature_maps=256,
                   pg_dropout=0.546, num_refinements=1, rnn_layers=2,
                   rnn_hidden=128, rnn_dropout=0.619, num_classes=num_classes,
                   input_dim=input_dim, primary_sampling=2, secondary_sampling=3)

    @classmethod
    def g_variant(cls, num_classes: int = 6, input_dim: int = 36) -> "ModelConfig":
        return cls(variant="G", num_layers_pg=13, feature_maps=256,
                   pg_dropout=0.645, num_refinements=1, rnn_layers=2,
                   rnn_hidden=256, rnn_dropout=0.5747, num_classes=num_classes,
                   input_dim=input_dim, primary_sampling=1, secondary_sampling=6)


def downsampled_length(n: int, step: int) -> int:
    return (n - 1) // step + 1


class Conv1d:
    """1-d convolution parameter block, uniform +-1/sqrt(fan_in) init."""

    def __init__(self, in_ch, out_ch, kernel, dilation, rng, dtype):
        bound = 1.0 / np.sqrt(in_ch * kernel)
        self.w = Tensor(rng.uniform(-bound, bound, size=(out_ch, in_ch, kernel)),
                        requires_grad=True, dtype=dtype)
        self.b = Tensor(rng.uniform(-bound, bound, size=out_ch),
                        requires_grad=True, dtype=dtype)
        self.dilation = dilation

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.w, self.b, self.dilation)

    def parameters(self):
        return [("w", self.w), ("b", self.b)]


class DdrlLayer:
    """Dual dilated residual layer.

    Two parallel K=3 dilated convolutions, channel concat, ReLU, a 1x1
    fusion convolution back to D maps, dropout, then the residual add.
    """

    def __init__(self, d_maps, dilation_a, dilation_b, rng, dtype):
        self.conv_a = Conv1d(d_maps, d_maps, 3, dilation_a, rng, dtype)
        self.conv_b = Conv1d(d_maps, d_maps, 3, dilation_b, rng, dtype)
        self.fuse = Conv1d(2 * d_maps, d_maps, 1, 1, rng, dtype)

    def __call__(self, h, dropout_p, training, rng) -> Tensor:
        cat = ops.concat([self.conv_a(h), self.conv_b(h)], axis=0)
        out = self.fuse(cat.relu())
        out = ops.dropout(out, dropout_p, training, rng)
        return h + out

    def parameters(self):
        return ([("d1." + n, p) for n, p in self.conv_a.parameters()]
                + [("d2." + n, p) for n, p in self.conv_b.parameters()]
                + [("fuse." + n, p) for n, p in self.fuse.parameters()])


class RnnCell:
    """Weights for one direction of one RNN layer; all uniform +-1/sqrt(Q)."""

    def __init__(self, kind, in_dim, hidden, rng, dtype):
        self.kind = kind
        q = hidden
        bound = 1.0 / np.sqrt(q)
        gates = 4 if kind == "lstm" else 3

        def mk(*shape):
            return Tensor(rng.uniform(-bound, bound, size=shape),
                          requires_grad=True, dtype=dtype)

        self.wx = mk(gates * q, in_dim)
        self.wh = mk(gates * q, q)
        self.b = mk(gates * q)
        self.bh = mk(q) if kind == "gru" else None

    def __call__(self, x: Tensor) -> Tensor:
        if self.kind == "lstm":
            return ops.lstm(x, self.wx, self.wh, self.b)
        return ops.gru(x, self.wx, self.wh, self.b, self.bh)

    def parameters(self):
        out = [("wx", self.wx), ("wh", self.wh), ("b", self.b)]
        if self.bh is not None:
            out.append(("bh", self.bh))
        return out


class BiRnn:
    """Stacked bidirectional RNN; layer input is the 2Q concat of the layer
    below, output is the per-frame concat of the top layer's directions."""

    def __init__(self, kind, in_dim, hidden, layers, rng, dtype):
        self.cells = []
        for i in range(layers):
            dim = in_dim if i == 0 else 2 * hidden
            self.cells.append((RnnCell(kind, dim, hidden, rng, dtype),
                               RnnCell(kind, dim, hidden, rng, dtype)))

    def __call__(self, x: Tensor) -> Tensor:
        for fwd, bwd in self.cells:
            rev = bwd(x.flip(0)).flip(0)
            x = ops.concat([fwd(x), rev], axis=1)
        return x

    def parameters(self):
        out = []
        for i, (fwd, bwd) in enumerate(self.cells):
            out += [(f"l{i}.fwd.{n}", p) for n, p in fwd.parameters()]
            out += [(f"l{i}.bwd.{n}", p) for n, p in bwd.parameters()]
        return out


class RefinementStage:
    def __init__(self, cfg: ModelConfig, rng, dtype):
        kind = "lstm" if cfg.variant == "L" else "gru"
        self.k = cfg.secondary_sampling
        self.dropout_p = cfg.rnn_dropout
        self.rnn = BiRnn(kind, cfg.num_classes, cfg.rnn_hidden,
                         cfg.rnn_layers, rng, dtype)
        self.head = Conv1d(2 * cfg.rnn_hidden, cfg.num_classes, 1, 1, rng, dtype)

    def __call__(self, y_prev: Tensor, training, rng) -> Tensor:
        t_work = y_prev.shape[1]
        x = y_prev.subsample(1, self.k) if self.k > 1 else y_prev
        h = self.rnn(x.transpose())
        h = ops.dropout(h, self.dropout_p, training, rng)
        probs = self.head(h.transpose()).softmax(axis=0)
        if self.k > 1:
            probs = probs.repeat_upsample(1, self.k).narrow(1, 0, t_work)
        return probs

    def parameters(self):
        return ([("rnn." + n, p) for n, p in self.rnn.parameters()]
                + [("head." + n, p) for n, p in self.head.parameters()])


@dataclass
class ModelOutput:
    isr: list  # ISR head probabilities, each (C, T')
    stage: Tensor  # prediction-generator output (C, T')
    refined: list  # refinement stage outputs, each (C, T')
    final_fullres: Tensor  # (C, T)

    @property
    def heads(self) -> list:
        """Every prediction head, in loss order (ISR, stage, refinements)."""
        return [*self.isr, self.stage, *self.refined]

    def pg_fullres(self, r: int, n_frames: int) -> np.ndarray:
        """Prediction-generator output upsampled to full resolution (no graph)."""
        data = self.stage.data
        if r > 1:
            data = np.repeat(data, r, axis=1)[:, :n_frames]
        return data


class MsTcrNet:
    """Prediction generator with ISR heads plus BiRNN refinement stages."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        rng = self.rng
        d = cfg.feature_maps
        self.input_proj = Conv1d(cfg.input_dim, d, 1, 1, rng, dtype)
        self.ddrl = [DdrlLayer(d, *cfg.dilations(i), rng, dtype)
                     for i in range(1, cfg.num_layers_pg + 1)]
        self.isr_heads = {i: Conv1d(d, cfg.num_classes, 1, 1, rng, dtype)
                          for i in cfg.isr_indices}
        self.stage_head = Conv1d(d, cfg.num_classes, 1, 1, rng, dtype)
        self.refinements = [RefinementStage(cfg, rng, dtype)
                            for _ in range(cfg.num_refinements)]

    # -- forward ----------------------------------------------------------

    def pg_forward(self, x: Tensor, training: bool) -> tuple[list, Tensor]:
        """x is already primary-downsampled, shape (M, T')."""
        h = self.input_proj(x)
        isr_out = []
        for i, layer in enumerate(self.ddrl, start=1):
            h = layer(h, self.cfg.pg_dropout, training, self.rng)
            if i in self.isr_heads:
                isr_out.append(self.isr_heads[i](h).softmax(axis=0))
        stage = self.stage_head(h).softmax(axis=0)
        return isr_out, stage

    def forward(self, features: np.ndarray, training: bool = False) -> ModelOutput:
        """features: (T, M) array; returns every head plus the full-resolution
        final output (length exactly T)."""
        feats = np.ascontiguousarray(np.asarray(features).T, dtype=self.dtype)
        if feats.shape[0] != self.cfg.input_dim:
            raise ValueError(
                f"expected {self.cfg.input_dim} feature channels, got {feats.shape[0]}")
        n_frames = feats.shape[1]
        x = Tensor(feats, dtype=self.dtype)
        r = self.cfg.primary_sampling
        if r > 1:
            x = x.subsample(1, r)
        isr_out, stage = self.pg_forward(x, training)
        refined = []
        y = stage
        for ref in self.refinements:
            y = ref(y, training, self.rng)
            refined.append(y)
        final = y
        if r > 1:
            final = final.repeat_upsample(1, r).narrow(1, 0, n_frames)
        return ModelOutput(isr=isr_out, stage=stage, refined=refined,
                           final_fullres=final)

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Frame-wise class ids at full resolution (eval mode)."""
        out = self.forward(features, training=False)
        return np.argmax(out.final_fullres.data, axis=0)

    # -- parameters ---------------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [("proj." + n, p) for n, p in self.input_proj.parameters()]
        for i, layer in enumerate(self.ddrl, start=1):
            out += [(f"ddrl{i}.{n}", p) for n, p in layer.parameters()]
        for i, head in sorted(self.isr_heads.items()):
            out += [(f"isr{i}.{n}", p) for n, p in head.parameters()]
        out += [("stage." + n, p) for n, p in self.stage_head.parameters()]
        for j, ref in enumerate(self.refinements):
            out += [(f"ref{j}.{n}", p) for n, p in ref.parameters()]
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)[:4]}...")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=self.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{arr.shape} vs {p.data.shape}")
            p.data = arr.copy()

    def save_checkpoint(self, path, extra_config: dict | None = None) -> None:
        config = {"model": self.cfg.to_dict()}
        if extra_config:
            config.update(extra_config)
        ckpt.save(path, self.state_dict(), config, seed=self.seed)

    @classmethod
    def load_checkpoint(cls, path, dtype=np.float32) -> "MsTcrNet":
        params, header = ckpt.load(path)
        cfg = ModelConfig.from_dict(header["config"]["model"])
        model = cls(cfg, seed=header.get("seed") or 0, dtype=dtype)
        model.load_state_dict(params)
        return model
