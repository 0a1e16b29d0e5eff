"""Per-pair attention refinement of raw descriptors before spectral projection.

Both images' pixel sets exchange information through dense single-head cross
attention: each node queries the other image's nodes, receives a message, and
updates through a residual MLP. Weights are shared between the two directions
and trained jointly with the functional map for one input pair; there is no
pretraining corpus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Node, Tape
from .errors import NumericError, ValidationError
from .interchange import FeatureGrid


@dataclass(frozen=True)
class RefineConfig:
    d_model: int = 128
    hidden: int = 256
    blocks: int = 1

    def __post_init__(self):
        if self.d_model % 4 != 0:
            raise ValidationError(f"d_model must be divisible by 4, got {self.d_model}")
        if self.hidden < 1 or self.blocks < 0:
            raise ValidationError("hidden must be >= 1 and blocks >= 0")


def positional_embedding(h: int, w: int, d_model: int) -> np.ndarray:
    """Fixed 2D sinusoidal embedding, one row per node in row-major order.

    The first d_model/2 channels encode the x coordinate as interleaved
    (sin, cos) pairs over a geometric frequency ladder 10000^(-i/quarter);
    the second half encodes y the same way. Channel 0 is sin(x * 1).
    """
    if d_model % 4 != 0:
        raise ValidationError(f"d_model must be divisible by 4, got {d_model}")
    quarter = d_model // 4
    freqs = 10000.0 ** (-np.arange(quarter) / quarter)
    ys, xs = np.divmod(np.arange(h * w), w)
    out = np.empty((h * w, d_model), dtype=np.float64)
    for offset, coord in ((0, xs), (d_model // 2, ys)):
        angles = coord[:, None] * freqs[None, :]
        out[:, offset + 0 : offset + 2 * quarter : 2] = np.sin(angles)
        out[:, offset + 1 : offset + 2 * quarter : 2] = np.cos(angles)
    return out


def init_refine_params(d_feat: int, config: RefineConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded Xavier-style init; float32 storage to match the optimizer."""
    rng = np.random.default_rng(seed)

    def xavier(n_in: int, n_out: int) -> np.ndarray:
        scale = np.sqrt(2.0 / (n_in + n_out))
        return (rng.standard_normal((n_in, n_out)) * scale).astype(np.float32)

    d, hid = config.d_model, config.hidden
    params: dict[str, np.ndarray] = {
        "proj_w": xavier(d_feat, d),
        "proj_b": np.zeros(d, dtype=np.float32),
    }
    for b in range(config.blocks):
        params[f"b{b}_wq"] = xavier(d, d)
        params[f"b{b}_wk"] = xavier(d, d)
        params[f"b{b}_wv"] = xavier(d, d)
        params[f"b{b}_mlp_w1"] = xavier(2 * d, hid)
        params[f"b{b}_mlp_b1"] = np.zeros(hid, dtype=np.float32)
        params[f"b{b}_gamma"] = np.ones(hid, dtype=np.float32)
        params[f"b{b}_beta"] = np.zeros(hid, dtype=np.float32)
        params[f"b{b}_mlp_w2"] = xavier(hid, d)
        params[f"b{b}_mlp_b2"] = np.zeros(d, dtype=np.float32)
    return params


def cross_attention(tape: Tape, q: Node, k: Node, v: Node, d_model: int) -> Node:
    """Messages m_i = sum_j softmax_j(q_i . k_j / sqrt(d_model)) v_j."""
    scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / np.sqrt(d_model))
    return tape.matmul(tape.softmax(scores), v)


def _node_update(tape: Tape, x: Node, m: Node, p: dict[str, Node], b: int) -> Node:
    """Residual update x + MLP([x || m]) with ReLU and per-node instance norm."""
    h = tape.add(tape.matmul(tape.concat([x, m], axis=1), p[f"b{b}_mlp_w1"]), p[f"b{b}_mlp_b1"])
    h = tape.instance_norm(tape.relu(h), p[f"b{b}_gamma"], p[f"b{b}_beta"])
    return tape.add(x, tape.add(tape.matmul(h, p[f"b{b}_mlp_w2"]), p[f"b{b}_mlp_b2"]))


def refine_forward(
    tape: Tape,
    params: dict[str, Node],
    feat_m: np.ndarray,
    feat_n: np.ndarray,
    pos_m: np.ndarray,
    pos_n: np.ndarray,
    config: RefineConfig,
) -> tuple[Node, Node]:
    """Build the refinement graph on an existing tape; params are leaf nodes.

    Raw features and positional embeddings enter as constants, so gradients
    flow only into the parameter leaves. Both directions run from the same
    pre-update states inside each block, keeping M and N symmetric.
    """
    const_m, const_n = tape.constant(feat_m), tape.constant(feat_n)
    x_m = tape.add(tape.add(tape.matmul(const_m, params["proj_w"]), params["proj_b"]),
                   tape.constant(pos_m))
    x_n = tape.add(tape.add(tape.matmul(const_n, params["proj_w"]), params["proj_b"]),
                   tape.constant(pos_n))
    for b in range(config.blocks):
        q_m = tape.matmul(x_m, params[f"b{b}_wq"])
        k_m = tape.matmul(x_m, params[f"b{b}_wk"])
        v_m = tape.matmul(x_m, params[f"b{b}_wv"])
        q_n = tape.matmul(x_n, params[f"b{b}_wq"])
        k_n = tape.matmul(x_n, params[f"b{b}_wk"])
        v_n = tape.matmul(x_n, params[f"b{b}_wv"])
        m_to_m = cross_attention(tape, q_m, k_n, v_n, config.d_model)
        m_to_n = cross_attention(tape, q_n, k_m, v_m, config.d_model)
        x_m = _node_update(tape, x_m, m_to_m, params, b)
        x_n = _node_update(tape, x_n, m_to_n, params, b)
        if not (np.all(np.isfinite(x_m.value)) and np.all(np.isfinite(x_n.value))):
            raise NumericError(f"non-finite activations after refinement block {b}")
    return x_m, x_n


def refine(
    grid_m: FeatureGrid,
    grid_n: FeatureGrid,
    params: dict[str, np.ndarray],
    config: RefineConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Forward-only convenience wrapper returning plain (n, d_model) arrays."""
    if grid_m.d != grid_n.d:
        raise ValidationError(f"feature depth mismatch: {grid_m.d} vs {grid_n.d}")
    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    out_m, out_n = refine_forward(
        tape,
        leaves,
        grid_m.flat().astype(np.float64),
        grid_n.flat().astype(np.float64),
        positional_embedding(grid_m.h, grid_m.w, config.d_model),
        positional_embedding(grid_n.h, grid_n.w, config.d_model),
        config,
    )
    return out_m.value, out_n.value
