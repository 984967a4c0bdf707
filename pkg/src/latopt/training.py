"""Training strategies built on one shared forward-graph constructor.

Strategies
----------
``mtl``       two task losses, no discriminator
``adv``       adversarial: task losses plus reversed domain loss
``mtl+lo``    mtl with a one-step latent lookahead (descent on task losses)
``adv+lo``    adv with a one-step latent lookahead (ascent on the domain
              loss); the task heads consume the updated latents while the
              discriminator consumes the originals
``adv+maml``  adv with the lookahead taken in encoder parameter space
``single:source`` / ``single:target``  one-domain task training (used by
              the sequential fine-tuning baseline)

All lookahead variants are first-order: the lookahead delta enters the
graph as a detached constant, so no second-order terms flow anywhere. With
gamma=0 every lookahead strategy builds the exact graph of its base
strategy, which makes the reduction identities bitwise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .autodiff import NodeId, NonFiniteError, Tape, backward
from .model import (
    GraphRefs,
    ModelParams,
    classifier_logits,
    dense,
    domain_loss_on_tape,
    encode_on_tape,
    grl_weight,
    onehot,
    put_params,
    task_loss_on_tape,
)

STRATEGIES = ("mtl", "mtl+lo", "adv", "adv+lo", "adv+maml", "seq")

_WITH_DISC = ("adv", "adv+lo", "adv+maml")


def trainable_tensors(strategy: str) -> tuple[str, ...]:
    names = []
    for group, members in ModelParams.GROUPS.items():
        if group == "theta_d" and strategy not in _WITH_DISC:
            continue
        if strategy == "single:source" and group == "phi_t":
            continue
        if strategy == "single:target" and group == "phi_s":
            continue
        names.extend(members)
    return tuple(names)


@dataclass
class LatentPair:
    """Per-batch latents and their lookahead updates (values, not nodes)."""

    z_s: np.ndarray
    z_t: np.ndarray
    z_s_prime: np.ndarray
    z_t_prime: np.ndarray
    gamma: float
    id_s_prime: NodeId = -1
    id_t_prime: NodeId = -1

    @property
    def aux_scalars(self) -> int:
        return self.z_s_prime.size + self.z_t_prime.size


def latent_step(tape: Tape, z_s: NodeId, z_t: NodeId, loss: NodeId, gamma: float, sign: float = 1.0) -> LatentPair:
    """One lookahead step on the latents: z' = z + sign*gamma*dloss/dz.

    The gradient factor is inserted as a constant leaf, i.e. detached: the
    graph downstream of z' treats the step as data, which is exactly the
    first-order approximation. With gamma=0 the original nodes are returned
    untouched.
    """
    if gamma < 0:
        raise ValueError("latent_step: gamma must be >= 0")
    zs_val = tape.value(z_s)
    zt_val = tape.value(z_t)
    if gamma == 0.0:
        return LatentPair(zs_val, zt_val, zs_val, zt_val, 0.0, z_s, z_t)
    grads = backward(tape, loss)
    step_s = tape.leaf(sign * gamma * grads[z_s])
    step_t = tape.leaf(sign * gamma * grads[z_t])
    id_s = tape.add(z_s, step_s)
    id_t = tape.add(z_t, step_t)
    return LatentPair(zs_val, zt_val, tape.value(id_s), tape.value(id_t), gamma, id_s, id_t)


def mtl_lo_step(tape: Tape, z_s: NodeId, z_t: NodeId, loss_s: NodeId, loss_t: NodeId, gamma: float) -> LatentPair:
    """Task-loss lookahead for the non-adversarial variant: a descent step
    z' = z - gamma*dL_task/dz on each domain's latents."""
    if gamma < 0:
        raise ValueError("mtl_lo_step: gamma must be >= 0")
    if gamma == 0.0:
        return LatentPair(tape.value(z_s), tape.value(z_t), tape.value(z_s), tape.value(z_t), 0.0, z_s, z_t)
    both = tape.add(loss_s, loss_t)
    return latent_step(tape, z_s, z_t, both, gamma, sign=-1.0)


@dataclass
class ForwardResult:
    """One strategy forward graph plus its reported loss values.

    ``joint`` is L_s + L_t - L_d (or L_s + L_t without a discriminator).
    ``refs.objective`` is the node to run backward on; its -L_d pathway goes
    through the gradient reversal layer so one sweep yields the minimax
    signs while the discriminator still receives +dL_d/d(theta_d).
    """

    refs: GraphRefs
    loss_s: float | None
    loss_t: float | None
    loss_d: float | None
    latents: LatentPair | None = None

    @property
    def joint(self) -> float:
        total = (self.loss_s or 0.0) + (self.loss_t or 0.0)
        if self.loss_d is not None:
            total -= self.loss_d
        return total

    @property
    def aux_scalars(self) -> int:
        return self.latents.aux_scalars if self.latents is not None else 0


def strategy_forward(
    params: ModelParams,
    batch_s,
    batch_t,
    strategy: str = "adv",
    lam: float = 1.0,
    gamma: float = 0.0,
) -> ForwardResult:
    """Build the forward graph for one paired batch under a strategy.

    ``batch_s``/``batch_t`` are (sequences, one-hot labels) tuples. For the
    ``single:*`` strategies the other domain's batch may be None.
    """
    tape = Tape()
    p = put_params(tape, params)
    refs = GraphRefs(tape, p)
    latents = None

    if strategy in ("single:source", "single:target"):
        domain = strategy.split(":")[1]
        batch = batch_s if domain == "source" else batch_t
        seqs, y = batch
        z = encode_on_tape(tape, p, seqs)
        logits, v, u = classifier_logits(tape, p, z, domain)
        loss = task_loss_on_tape(tape, logits, y)
        refs.objective = loss
        if domain == "source":
            refs.z_s, refs.v_s, refs.u_s, refs.logits_s, refs.loss_s = z, v, u, logits, loss
            return ForwardResult(refs, float(tape.value(loss)), None, None)
        refs.z_t, refs.v_t, refs.u_t, refs.logits_t, refs.loss_t = z, v, u, logits, loss
        return ForwardResult(refs, None, float(tape.value(loss)), None)

    seq_s, y_s = batch_s
    seq_t, y_t = batch_t
    refs.z_s = encode_on_tape(tape, p, seq_s)
    refs.z_t = encode_on_tape(tape, p, seq_t)
    z_s_in, z_t_in = refs.z_s, refs.z_t

    if strategy in _WITH_DISC:
        # shared features feeding the discriminator (pre-reversal)
        refs.u_s = dense(tape, refs.z_s, p["sh_W"], p["sh_b"], "tanh")
        refs.u_t = dense(tape, refs.z_t, p["sh_W"], p["sh_b"], "tanh")
        if strategy == "adv+lo" and gamma != 0.0:
            raw_loss_d, _ = domain_loss_on_tape(tape, p, refs.u_s, refs.u_t, lam=None)
            latents = latent_step(tape, refs.z_s, refs.z_t, raw_loss_d, gamma, sign=1.0)
            z_s_in, z_t_in = latents.id_s_prime, latents.id_t_prime
        refs.logits_s, refs.v_s, _ = classifier_logits(tape, p, z_s_in, "source")
        refs.logits_t, refs.v_t, _ = classifier_logits(tape, p, z_t_in, "target")
        refs.loss_s = task_loss_on_tape(tape, refs.logits_s, y_s)
        refs.loss_t = task_loss_on_tape(tape, refs.logits_t, y_t)
        refs.loss_d, refs.logits_d = domain_loss_on_tape(tape, p, refs.u_s, refs.u_t, lam=lam)
        refs.objective = tape.add(tape.add(refs.loss_s, refs.loss_t), refs.loss_d)
        return ForwardResult(
            refs,
            float(tape.value(refs.loss_s)),
            float(tape.value(refs.loss_t)),
            float(tape.value(refs.loss_d)),
            latents,
        )

    if strategy in ("mtl", "mtl+lo"):
        if strategy == "mtl+lo" and gamma != 0.0:
            logits_s0, _, _ = classifier_logits(tape, p, refs.z_s, "source")
            logits_t0, _, _ = classifier_logits(tape, p, refs.z_t, "target")
            loss_s0 = task_loss_on_tape(tape, logits_s0, y_s)
            loss_t0 = task_loss_on_tape(tape, logits_t0, y_t)
            latents = mtl_lo_step(tape, refs.z_s, refs.z_t, loss_s0, loss_t0, gamma)
            z_s_in, z_t_in = latents.id_s_prime, latents.id_t_prime
        refs.logits_s, refs.v_s, refs.u_s = classifier_logits(tape, p, z_s_in, "source")
        refs.logits_t, refs.v_t, refs.u_t = classifier_logits(tape, p, z_t_in, "target")
        refs.loss_s = task_loss_on_tape(tape, refs.logits_s, y_s)
        refs.loss_t = task_loss_on_tape(tape, refs.logits_t, y_t)
        refs.objective = tape.add(refs.loss_s, refs.loss_t)
        return ForwardResult(
            refs, float(tape.value(refs.loss_s)), float(tape.value(refs.loss_t)), None, latents
        )

    raise ValueError(f"unknown strategy '{strategy}'")


def adv_joint_loss(params, batch_s, batch_t, lam: float = 1.0) -> float:
    """Reported adversarial joint loss L_s + L_t - L_d."""
    return strategy_forward(params, batch_s, batch_t, "adv", lam).joint


def lookahead_joint_loss(params, batch_s, batch_t, gamma: float, lam: float = 1.0) -> float:
    """Joint loss with the latent lookahead: L_s(z_s') + L_t(z_t') - L_d(z_s, z_t)."""
    return strategy_forward(params, batch_s, batch_t, "adv+lo", lam, gamma).joint


def _grouped(params: ModelParams, tensor_grads: dict[str, np.ndarray]):
    return {g: {n: tensor_grads[n] for n in names} for g, names in ModelParams.GROUPS.items()}


def adv_grads(params, batch_s, batch_t, lam: float = 1.0):
    """Per-group gradients of the adversarial objective."""
    fwd = strategy_forward(params, batch_s, batch_t, "adv", lam)
    grads = backward(fwd.refs.tape, fwd.refs.objective)
    return _grouped(params, fwd.refs.param_grads(grads)), fwd


def lookahead_joint_grads(params, batch_s, batch_t, gamma: float, lam: float = 1.0):
    """Per-group gradients of the lookahead objective (first-order).

    phi_s sees only the source task pathway, phi_t only the target one;
    w_sh and w_b combine the task pathways (evaluated at the updated
    latents) with the reversed domain-loss pathway; theta_d receives the
    unreversed +dL_d/d(theta_d).
    """
    fwd = strategy_forward(params, batch_s, batch_t, "adv+lo", lam, gamma)
    grads = backward(fwd.refs.tape, fwd.refs.objective)
    return _grouped(params, fwd.refs.param_grads(grads)), fwd


W_B_TENSORS = ModelParams.GROUPS["w_b"]


def domain_loss_graph(params: ModelParams, batch_s, batch_t) -> GraphRefs:
    """Encoder + shared layer + discriminator only, no reversal; the raw
    domain loss used by the parameter-space lookahead."""
    tape = Tape()
    p = put_params(tape, params)
    refs = GraphRefs(tape, p)
    refs.z_s = encode_on_tape(tape, p, batch_s[0])
    refs.z_t = encode_on_tape(tape, p, batch_t[0])
    refs.u_s = dense(tape, refs.z_s, p["sh_W"], p["sh_b"], "tanh")
    refs.u_t = dense(tape, refs.z_t, p["sh_W"], p["sh_b"], "tanh")
    refs.loss_d, refs.logits_d = domain_loss_on_tape(tape, p, refs.u_s, refs.u_t, lam=None)
    refs.objective = refs.loss_d
    return refs


def maml_lookahead_step(params: ModelParams, refs: GraphRefs, gamma: float) -> dict[str, np.ndarray]:
    """Encoder-space lookahead: w_b' = w_b + gamma * dL_d/dw_b.

    ``refs`` must hold a raw domain-loss graph (see ``domain_loss_graph``).
    Returns the modified encoder tensors; everything else is untouched.
    """
    if gamma < 0:
        raise ValueError("maml_lookahead_step: gamma must be >= 0")
    if gamma == 0.0:
        return {k: params.tensors[k].copy() for k in W_B_TENSORS}
    grads = refs.param_grads(backward(refs.tape, refs.loss_d))
    return {k: params.tensors[k] + gamma * grads[k] for k in W_B_TENSORS}


# --- epoch loop --------------------------------------------------------------


@dataclass
class TrainingConfig:
    lr: float = 1e-3
    gamma: float = 0.01  # lookahead step size (never reported upstream; a config choice)
    batch_size: int = 128
    epochs: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grl_k: float = 10.0
    grl_lambda: float | None = None  # fixed reversal weight; None uses the schedule
    lr_grid: tuple = (1e-5, 3e-5, 5e-5, 7e-5, 9e-5)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochReport:
    epoch: int
    strategy: str
    batch_losses: list
    losses: dict
    lr: float
    wall_ms: float
    aux_state_scalars: int

    def runlog_entry(self) -> dict:
        return {
            "epoch": self.epoch,
            "strategy": self.strategy,
            "losses": self.losses,
            "lr": self.lr,
            "wall_ms": self.wall_ms,
            "aux_state_scalars": self.aux_state_scalars,
        }


class TrainingAborted(RuntimeError):
    """A run hit a non-finite loss; carries the diagnostics."""

    def __init__(self, strategy, epoch, batch, cause):
        super().__init__(f"non-finite loss: strategy={strategy} epoch={epoch} batch={batch}: {cause}")
        self.strategy = strategy
        self.epoch = epoch
        self.batch = batch


def make_batches(examples, batch_size: int, rng) -> list:
    """Shuffle and cut into full batches of (sequences, onehot labels)."""
    order = rng.permutation(len(examples))
    batches = []
    for start in range(0, len(examples) - batch_size + 1, batch_size):
        idx = order[start : start + batch_size]
        seqs = tuple(tuple(examples[i][0]) for i in idx)
        labels = onehot([examples[i][1] for i in idx])
        batches.append((seqs, labels))
    return batches


def paired_batches(source_examples, target_examples, batch_size: int, rng) -> list:
    """Equal-count batch pairs; the shorter side cycles over reshuffles."""
    bs = make_batches(source_examples, batch_size, rng)
    bt = make_batches(target_examples, batch_size, rng)
    if not bs or not bt:
        raise ValueError("paired_batches: a loader produced no full batch")
    n = max(len(bs), len(bt))
    while len(bs) < n:
        bs.extend(make_batches(source_examples, batch_size, rng))
    while len(bt) < n:
        bt.extend(make_batches(target_examples, batch_size, rng))
    return list(zip(bs[:n], bt[:n]))


def training_step(strategy, params, opt_state, batch_s, batch_t, lr_t, lam, gamma):
    """One gradient step; returns (loss record, aux state scalars)."""
    from .optim import adam_step

    aux = 0
    if strategy == "adv+maml" and gamma != 0.0:
        refs = domain_loss_graph(params, batch_s, batch_t)
        wb_prime = maml_lookahead_step(params, refs, gamma)
        aux = sum(v.size for v in wb_prime.values())
        shifted = ModelParams(params.config, {**params.tensors, **wb_prime})
        fwd = strategy_forward(shifted, batch_s, batch_t, "adv", lam)
    else:
        graph_strategy = "adv" if strategy == "adv+maml" else strategy
        fwd = strategy_forward(params, batch_s, batch_t, graph_strategy, lam, gamma)
        aux = fwd.aux_scalars
    grads = fwd.refs.param_grads(backward(fwd.refs.tape, fwd.refs.objective))
    wanted = trainable_tensors(strategy)
    adam_step(opt_state, params.tensors, {k: grads[k] for k in wanted}, lr_t)
    record = {"L_s": fwd.loss_s, "L_t": fwd.loss_t, "L_d": fwd.loss_d, "joint": fwd.joint}
    return record, aux


def train_epoch(
    strategy,
    params,
    opt_state,
    source_examples,
    target_examples,
    config: TrainingConfig,
    epoch: int,
    total_steps: int,
    step_offset: int,
    rng,
) -> EpochReport:
    """One pass over paired batches with the cosine schedule and the
    reversal-weight ramp. Aborts (with diagnostics) on a non-finite loss."""
    from .optim import cosine_lr

    if strategy.startswith("single:"):
        examples = source_examples if strategy.endswith("source") else target_examples
        pairs = [(b, b) for b in make_batches(examples, config.batch_size, rng)]
        if not pairs:
            raise ValueError("train_epoch: empty loader")
    else:
        pairs = paired_batches(source_examples, target_examples, config.batch_size, rng)

    batch_losses = []
    peak_aux = 0
    lr_start = cosine_lr(step_offset, total_steps, config.lr)
    t0 = time.perf_counter()
    for i, (batch_s, batch_t) in enumerate(pairs):
        step = step_offset + i
        lr_t = cosine_lr(step, total_steps, config.lr)
        if config.grl_lambda is not None:
            lam = config.grl_lambda
        else:
            lam = grl_weight(step / total_steps, config.grl_k)
        try:
            record, aux = training_step(
                strategy, params, opt_state, batch_s, batch_t, lr_t, lam, config.gamma
            )
        except NonFiniteError as e:
            raise TrainingAborted(strategy, epoch, i, e) from e
        batch_losses.append(record)
        peak_aux = max(peak_aux, aux)
    wall_ms = (time.perf_counter() - t0) * 1000.0

    def mean_of(key):
        vals = [r[key] for r in batch_losses if r[key] is not None]
        return float(np.mean(vals)) if vals else None

    losses = {k: mean_of(k) for k in ("L_s", "L_t", "L_d", "joint")}
    return EpochReport(epoch, strategy, batch_losses, losses, lr_start, wall_ms, peak_aux)


@dataclass
class RunResult:
    strategy: str
    checkpoints: list  # per-epoch parameter snapshots
    epoch_reports: list
    dev_f: list  # selection metric per epoch
    wall_ms: float = 0.0
    peak_aux: int = 0

    @property
    def n_epochs(self) -> int:
        return len(self.checkpoints)


def train_run(
    strategy: str,
    params: ModelParams,
    source_splits: dict,
    target_splits: dict,
    config: TrainingConfig,
    seed: int,
    eval_domain: str = "target",
    dev_metric=None,
    run_log=None,
) -> RunResult:
    """Multi-epoch training with per-epoch snapshots and dev evaluation.

    ``source_splits``/``target_splits`` map split name -> list of
    (token sequence, label). ``dev_metric(params) -> float`` overrides the
    default positive-class F on ``eval_domain``'s dev split. ``run_log`` is
    an optional file handle receiving one JSON line per epoch.
    """
    import json

    from .metrics import f_score
    from .model import predict
    from .optim import AdamState

    rng = np.random.default_rng(seed)
    opt_state = AdamState(beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    if strategy.startswith("single:"):
        n_src = len(source_splits["train"]) if strategy.endswith("source") else len(target_splits["train"])
        steps_per_epoch = n_src // config.batch_size
    else:
        steps_per_epoch = max(
            len(source_splits["train"]) // config.batch_size,
            len(target_splits["train"]) // config.batch_size,
        )
    if steps_per_epoch == 0:
        raise ValueError("train_run: not enough examples for a single batch")
    total_steps = steps_per_epoch * config.epochs

    def default_dev_metric(p):
        dev = target_splits["dev"] if eval_domain == "target" else source_splits["dev"]
        seqs = [e[0] for e in dev]
        labels = np.array([e[1] for e in dev])
        preds = predict(p, seqs, eval_domain)
        return f_score(preds, labels)[0]

    metric = dev_metric or default_dev_metric
    checkpoints, reports, dev_f = [], [], []
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        report = train_epoch(
            strategy,
            params,
            opt_state,
            source_splits["train"],
            target_splits["train"],
            config,
            epoch,
            total_steps,
            epoch * steps_per_epoch,
            rng,
        )
        reports.append(report)
        if run_log is not None:
            run_log.write(json.dumps(report.runlog_entry()) + "\n")
        checkpoints.append(params.copy())
        dev_f.append(metric(params))
    wall_ms = (time.perf_counter() - t0) * 1000.0
    peak_aux = max((r.aux_state_scalars for r in reports), default=0)
    return RunResult(strategy, checkpoints, reports, dev_f, wall_ms, peak_aux)
