"""Two-domain transfer architecture: encoder, shared/domain dense layers,
task classifiers, and a domain discriminator behind a gradient reversal
layer.

Parameter groups
----------------
``w_b``   encoder (embedding table + two tanh dense layers)
``w_sh``  shared dense layer (feeds the discriminator and both classifiers)
``phi_s`` source dense layer + source classifier
``phi_t`` target dense layer + target classifier
``theta_d`` domain discriminator

The groups partition the trainable tensors exactly; the training strategies
key their update rules off this partition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import NodeId, Tape

CHECKPOINT_VERSION = 1

GROUP_NAMES = ("w_b", "w_sh", "phi_s", "phi_t", "theta_d")


@dataclass
class ModelConfig:
    vocab_size: int = 4096
    embed_dim: int = 16
    latent_dim: int = 32
    grl_k: float = 10.0  # steepness of the reversal-weight schedule


@dataclass
class ModelParams:
    """All trainable tensors, keyed by name, plus the group partition."""

    config: ModelConfig
    tensors: dict[str, np.ndarray]

    GROUPS = {
        "w_b": ("embedding", "enc1_W", "enc1_b", "enc2_W", "enc2_b"),
        "w_sh": ("sh_W", "sh_b"),
        "phi_s": ("src_W", "src_b", "cls_s1_W", "cls_s1_b", "cls_s2_W", "cls_s2_b"),
        "phi_t": ("tgt_W", "tgt_b", "cls_t1_W", "cls_t1_b", "cls_t2_W", "cls_t2_b"),
        "theta_d": ("disc1_W", "disc1_b", "disc2_W", "disc2_b"),
    }

    def group(self, name: str) -> dict[str, np.ndarray]:
        return {k: self.tensors[k] for k in self.GROUPS[name]}

    def group_of(self, tensor_name: str) -> str:
        for g, names in self.GROUPS.items():
            if tensor_name in names:
                return g
        raise KeyError(tensor_name)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def size_of(self, group: str) -> int:
        return sum(self.tensors[k].size for k in self.GROUPS[group])


def _glorot(rng, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Deterministic initialization; the same (config, seed) always yields
    bit-identical tensors, which is what lets every strategy start from the
    same weights."""
    rng = np.random.default_rng(seed)
    v, e, d = config.vocab_size, config.embed_dim, config.latent_dim
    t = {
        "embedding": rng.normal(0.0, 0.1, size=(v, e)),
        "enc1_W": _glorot(rng, e, d),
        "enc1_b": np.zeros(d),
        "enc2_W": _glorot(rng, d, d),
        "enc2_b": np.zeros(d),
        "src_W": _glorot(rng, d, d),
        "src_b": np.zeros(d),
        "tgt_W": _glorot(rng, d, d),
        "tgt_b": np.zeros(d),
        "sh_W": _glorot(rng, d, d),
        "sh_b": np.zeros(d),
        "cls_s1_W": _glorot(rng, 2 * d, d),
        "cls_s1_b": np.zeros(d),
        "cls_s2_W": _glorot(rng, d, 2),
        "cls_s2_b": np.zeros(2),
        "cls_t1_W": _glorot(rng, 2 * d, d),
        "cls_t1_b": np.zeros(d),
        "cls_t2_W": _glorot(rng, d, 2),
        "cls_t2_b": np.zeros(2),
        "disc1_W": _glorot(rng, d, d),
        "disc1_b": np.zeros(d),
        "disc2_W": _glorot(rng, d, 2),
        "disc2_b": np.zeros(2),
    }
    return ModelParams(config, t)


def grl_weight(progress: float, k: float = 10.0) -> float:
    """Reversal weight schedule: 0 at the start of training, saturating
    toward 1. ``progress`` is the fraction of training completed."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {progress}")
    return 2.0 / (1.0 + math.exp(-k * progress)) - 1.0


def onehot(labels, n_classes: int = 2) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _validate_onehot(y: np.ndarray) -> None:
    if y.ndim != 2 or not np.all((y == 0.0) | (y == 1.0)) or not np.all(y.sum(axis=1) == 1.0):
        raise ValueError("labels must be one-hot rows")


@dataclass
class GraphRefs:
    """Node ids of interest after building a forward graph on a tape."""

    tape: Tape
    param_nodes: dict[str, NodeId]
    z_s: NodeId = -1
    z_t: NodeId = -1
    v_s: NodeId = -1
    v_t: NodeId = -1
    u_s: NodeId = -1
    u_t: NodeId = -1
    logits_s: NodeId = -1
    logits_t: NodeId = -1
    logits_d: NodeId = -1
    loss_s: NodeId = -1
    loss_t: NodeId = -1
    loss_d: NodeId = -1
    objective: NodeId = -1
    extras: dict = field(default_factory=dict)

    def value(self, nid: NodeId) -> np.ndarray:
        return self.tape.value(nid)

    def param_grads(self, grads) -> dict[str, np.ndarray]:
        return {name: grads[nid] for name, nid in self.param_nodes.items()}


def put_params(tape: Tape, params: ModelParams) -> dict[str, NodeId]:
    return {name: tape.leaf(arr) for name, arr in params.tensors.items()}


def dense(tape: Tape, x: NodeId, w: NodeId, b: NodeId, act: str | None) -> NodeId:
    h = tape.add(tape.matmul(x, w), b)
    if act == "tanh":
        return tape.tanh(h)
    if act == "relu":
        return tape.relu(h)
    return h


def encode_on_tape(tape: Tape, p: dict[str, NodeId], sequences) -> NodeId:
    """Mean-pooled embeddings through the two-layer tanh encoder."""
    if len(sequences) == 0:
        raise ValueError("encode: batch must be nonempty")
    pooled = tape.embedding_mean(p["embedding"], sequences)
    h = dense(tape, pooled, p["enc1_W"], p["enc1_b"], "tanh")
    return dense(tape, h, p["enc2_W"], p["enc2_b"], "tanh")


def encode(params: ModelParams, sequences) -> np.ndarray:
    """Latent features [B, D] for a batch of token-id sequences."""
    tape = Tape()
    p = put_params(tape, params)
    return tape.value(encode_on_tape(tape, p, sequences))


def classifier_logits(tape, p, z, domain: str) -> tuple[NodeId, NodeId, NodeId]:
    """Task logits from latent features: the concatenation of
    domain-specific and shared features through the 2-layer head.

    Returns (logits, v, u) node ids.
    """
    if domain == "source":
        v = dense(tape, z, p["src_W"], p["src_b"], "tanh")
        c1w, c1b, c2w, c2b = "cls_s1_W", "cls_s1_b", "cls_s2_W", "cls_s2_b"
    else:
        v = dense(tape, z, p["tgt_W"], p["tgt_b"], "tanh")
        c1w, c1b, c2w, c2b = "cls_t1_W", "cls_t1_b", "cls_t2_W", "cls_t2_b"
    u = dense(tape, z, p["sh_W"], p["sh_b"], "tanh")
    vu = tape.concat(v, u, axis=1)
    h = dense(tape, vu, p[c1w], p[c1b], "relu")
    return dense(tape, h, p[c2w], p[c2b], None), v, u


def discriminator_logits(tape, p, u: NodeId) -> NodeId:
    h = dense(tape, u, p["disc1_W"], p["disc1_b"], "relu")
    return dense(tape, h, p["disc2_W"], p["disc2_b"], None)


def task_loss_on_tape(tape: Tape, logits: NodeId, y: np.ndarray) -> NodeId:
    _validate_onehot(y)
    if tape.value(logits).shape != y.shape:
        raise ValueError("task_loss: logits/labels shape mismatch")
    return tape.softmax_cross_entropy(logits, tape.leaf(y))


def task_loss(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy of softmaxed logits against one-hot labels."""
    tape = Tape()
    return float(tape.value(task_loss_on_tape(tape, tape.leaf(logits), y)))


def domain_loss_on_tape(tape, p, u_s: NodeId, u_t: NodeId, lam: float | None = None):
    """Discriminator loss: source carries domain label 0, target label 1,
    each term averaged over its batch. With ``lam`` set, the inputs pass
    through the gradient reversal layer first (forward unchanged).

    Returns (loss_id, logits_d_id).
    """
    bs = tape.value(u_s).shape[0]
    bt = tape.value(u_t).shape[0]
    if bs != bt:
        raise ValueError(f"domain_loss: batch sizes {bs} and {bt} differ")
    if lam is not None:
        u_s = tape.grl(u_s, lam)
        u_t = tape.grl(u_t, lam)
    logit_s = discriminator_logits(tape, p, u_s)
    logit_t = discriminator_logits(tape, p, u_t)
    y_s = onehot(np.zeros(bs, dtype=int))
    y_t = onehot(np.ones(bt, dtype=int))
    loss = tape.add(
        tape.softmax_cross_entropy(logit_s, tape.leaf(y_s)),
        tape.softmax_cross_entropy(logit_t, tape.leaf(y_t)),
    )
    return loss, tape.concat(logit_s, logit_t, axis=0)


def domain_loss(params: ModelParams, u_s: np.ndarray, u_t: np.ndarray) -> float:
    tape = Tape()
    p = put_params(tape, params)
    loss, _ = domain_loss_on_tape(tape, p, tape.leaf(u_s), tape.leaf(u_t))
    return float(tape.value(loss))


def predict(params: ModelParams, sequences, domain: str, batch_size: int = 256) -> np.ndarray:
    """Argmax class predictions for one domain's classifier."""
    out = []
    for start in range(0, len(sequences), batch_size):
        tape = Tape()
        p = put_params(tape, params)
        z = encode_on_tape(tape, p, sequences[start : start + batch_size])
        logits, _, _ = classifier_logits(tape, p, z, domain)
        out.append(np.argmax(tape.value(logits), axis=1))
    return np.concatenate(out)


def save_checkpoint(params: ModelParams, path) -> None:
    """JSON checkpoint: group-name -> tensor-name -> shape + row-major
    values. Floats are serialized via repr so the round-trip is exact."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "vocab_size": params.config.vocab_size,
            "embed_dim": params.config.embed_dim,
            "latent_dim": params.config.latent_dim,
            "grl_k": params.config.grl_k,
        },
        "groups": {
            g: {
                name: {
                    "shape": list(params.tensors[name].shape),
                    "data": params.tensors[name].reshape(-1).tolist(),
                }
                for name in names
            }
            for g, names in ModelParams.GROUPS.items()
        },
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_checkpoint(path) -> ModelParams:
    with open(path) as f:
        payload = json.load(f)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    cfg = ModelConfig(**payload["config"])
    tensors = {}
    for g, names in payload["groups"].items():
        for name, spec in names.items():
            tensors[name] = np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
    return ModelParams(cfg, tensors)
