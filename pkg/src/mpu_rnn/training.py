"""Loss, optimizer and the minibatch training loop.

Training processes samples one at a time (sequences have different lengths,
so there is no padded batch tensor); a minibatch is purely the unit of
gradient aggregation.  Per-sample gradients are summed in a fixed order and
each batch ends with one optional global-norm clip and one rmsprop step.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, InternalError, TrainingError
from .network import NetworkParams, backward, forward
from .numerics import stable_softmax
from .rng import Rng

# held-out share carved from the training split when no validation set is
# supplied (fraction of the combined pool)
DEFAULT_VAL_CARVE = 14.0 / 92.0


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of a batch.

    ``logits`` is (m, K), ``labels`` m integers in [0, K).  Returns
    (loss, dlogits) with dlogits[i] = (softmax(logits[i]) - onehot[i]) / m.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise InputError(f"logit batch has shape {logits.shape}, expected (m, K)")
    m, K = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (m,):
        raise InputError(f"{m} logit rows but {labels.shape} labels")
    if labels.min() < 0 or labels.max() >= K:
        raise InputError(f"label outside [0, {K})")
    probs = np.vstack([stable_softmax(row) for row in logits])
    picked = probs[np.arange(m), labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    dlogits = probs.copy()
    dlogits[np.arange(m), labels] -= 1.0
    dlogits /= m
    return loss, dlogits


class RmspropState:
    """Per-tensor squared-gradient accumulators plus hyperparameters.

    Update rule per tensor: v <- decay*v + (1-decay)*g^2,
    theta <- theta - lr * g / (sqrt(v) + epsilon).
    """

    def __init__(self, cfg, learning_rate=1e-3, decay=0.9, epsilon=1e-8):
        if learning_rate < 0:
            raise ConfigError("learning rate must be non-negative")
        if not 0.0 <= decay < 1.0:
            raise ConfigError("rmsprop decay must be in [0, 1)")
        self.learning_rate = learning_rate
        self.decay = decay
        self.epsilon = epsilon
        self.v = NetworkParams.zeros(cfg)


def rmsprop_step(params, grads, state):
    for (name, theta), (_, g), (_, v) in zip(
        params.named_arrays(), grads.named_arrays(), state.v.named_arrays()
    ):
        if theta.shape != g.shape:
            raise InternalError(f"gradient shape mismatch on {name}")
        v *= state.decay
        v += (1.0 - state.decay) * g * g
        theta -= state.learning_rate * g / (np.sqrt(v) + state.epsilon)


def clip_gradients(grads, max_norm):
    """Scale all gradients so their global L2 norm is at most ``max_norm``.
    Returns the pre-clip norm."""
    total = 0.0
    for _, g in grads.named_arrays():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if max_norm is not None and max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for _, g in grads.named_arrays():
            g *= scale
    return norm


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    seed: int = 12345
    learning_rate: float = 1e-3
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    clip_norm: float = 5.0  # 0 disables clipping
    dropout_keep: float = None  # None: use the network config's value
    patience: int = 0  # epochs without val improvement before stopping; 0: off

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("need at least one epoch")
        if self.batch_size < 1:
            raise ConfigError("batch size must be positive")
        if self.dropout_keep is not None and not 0.0 < self.dropout_keep <= 1.0:
            raise ConfigError("dropout keep probability must be in (0, 1]")
        if self.patience < 0:
            raise ConfigError("patience cannot be negative")
        return self


@dataclass
class Metrics:
    """Per-epoch training trace.  ``cell_evals`` counts the cell evaluations
    of the training forward passes, cumulative over epochs."""

    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    cell_evals: list = field(default_factory=list)

    def add(self, epoch, loss, tr_acc, v_acc, secs, evals):
        self.epochs.append(epoch)
        self.train_loss.append(loss)
        self.train_acc.append(tr_acc)
        self.val_acc.append(v_acc)
        self.seconds.append(secs)
        self.cell_evals.append(evals)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,train_acc,val_acc,seconds,cell_evals\n")
            for row in zip(
                self.epochs, self.train_loss, self.train_acc,
                self.val_acc, self.seconds, self.cell_evals,
            ):
                fh.write(
                    f"{row[0]},{row[1]:.6f},{row[2]:.6f},{row[3]:.6f},"
                    f"{row[4]:.3f},{row[5]}\n"
                )


def evaluate(params, cfg, dataset):
    """Fraction of samples whose argmax logit equals the label.  Dropout off."""
    if len(dataset) == 0:
        raise InputError("cannot evaluate on an empty dataset")
    hits = 0
    for s in dataset.samples:
        logits, _ = forward(s.dots, params, cfg)
        if int(np.argmax(logits)) == s.label:
            hits += 1
    return hits / len(dataset)


def _carve_validation(ds, rng):
    """Split off a stratified validation share when none was supplied."""
    by_class = {}
    for idx, s in enumerate(ds.samples):
        by_class.setdefault(s.label, []).append(idx)
    train_idx, val_idx = [], []
    for label in sorted(by_class):
        idxs = by_class[label]
        rng.shuffle(idxs)
        n_val = max(1, int(len(idxs) * DEFAULT_VAL_CARVE))
        if n_val >= len(idxs):
            raise InputError(f"class {label} too small to carve a validation share")
        val_idx.extend(idxs[:n_val])
        train_idx.extend(idxs[n_val:])
    from .data import Dataset  # local import to avoid a cycle at module load

    tr = Dataset([ds.samples[i] for i in train_idx], ds.num_classes, ds.dim, "train")
    va = Dataset([ds.samples[i] for i in val_idx], ds.num_classes, ds.dim, "val")
    return tr, va


def train(params, cfg, train_ds, tcfg, val_ds=None, log=None):
    """Run the minibatch loop; returns (best_params, metrics).

    Keeps a copy of the parameters from the epoch with the highest
    validation accuracy.  Stops early when ``tcfg.patience`` epochs pass
    without improvement.  A non-finite loss or gradient aborts with
    TrainingError naming the epoch.
    """
    cfg.validate()
    tcfg.validate()
    if len(train_ds) == 0:
        raise InputError("empty training set")
    if train_ds.dim != cfg.input_dim:
        raise ConfigError(
            f"dataset dots have {train_ds.dim} fields, network expects {cfg.input_dim}"
        )
    if train_ds.num_classes > cfg.num_classes:
        raise ConfigError(
            f"dataset has {train_ds.num_classes} classes, network outputs {cfg.num_classes}"
        )
    run_cfg = cfg
    if tcfg.dropout_keep is not None and tcfg.dropout_keep != cfg.dropout_keep:
        from dataclasses import replace

        run_cfg = replace(cfg, dropout_keep=tcfg.dropout_keep)

    rng = Rng(tcfg.seed)
    shuffle_rng = rng.spawn(1)
    dropout_rng = rng.spawn(2)
    if val_ds is None:
        train_ds, val_ds = _carve_validation(train_ds, rng.spawn(3))

    state = RmspropState(
        run_cfg,
        learning_rate=tcfg.learning_rate,
        decay=tcfg.rmsprop_decay,
        epsilon=tcfg.rmsprop_epsilon,
    )
    metrics = Metrics()
    best_params = params.copy()
    best_val = -1.0
    stale = 0
    total_evals = 0

    for epoch in range(1, tcfg.epochs + 1):
        t0 = time.perf_counter()
        order = list(range(len(train_ds)))
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        hits = 0
        for b0 in range(0, len(order), tcfg.batch_size):
            batch = order[b0 : b0 + tcfg.batch_size]
            grads = NetworkParams.zeros(run_cfg)
            batch_loss = 0.0
            m = len(batch)
            for idx in batch:
                s = train_ds.samples[idx]
                logits, trace = forward(
                    s.dots, params, run_cfg, training=True, rng=dropout_rng
                )
                total_evals += trace.cell_evals
                if int(np.argmax(logits)) == s.label:
                    hits += 1
                loss_i, dl = softmax_cross_entropy(logits[None, :], [s.label])
                batch_loss += loss_i
                sgrads = backward(trace, dl[0], params, run_cfg)
                for (_, acc), (_, g) in zip(grads.named_arrays(), sgrads.named_arrays()):
                    acc += g
            batch_loss /= m
            if not np.isfinite(batch_loss):
                raise TrainingError("loss is not finite", epoch=epoch)
            # per-sample dlogits carried 1/1 weighting; rescale the summed
            # gradient to the batch mean
            for _, g in grads.named_arrays():
                g /= m
            norm = clip_gradients(grads, tcfg.clip_norm)
            if not np.isfinite(norm):
                raise TrainingError("gradient is not finite", epoch=epoch)
            rmsprop_step(params, grads, state)
            epoch_loss += batch_loss * m
        epoch_loss /= len(order)
        train_acc = hits / len(order)
        val_acc = evaluate(params, run_cfg, val_ds)
        secs = time.perf_counter() - t0
        metrics.add(epoch, epoch_loss, train_acc, val_acc, secs, total_evals)
        if log is not None:
            log(
                f"epoch {epoch:3d}  loss {epoch_loss:.4f}  "
                f"train {train_acc:.3f}  val {val_acc:.3f}  {secs:.1f}s"
            )
        if val_acc > best_val:
            best_val = val_acc
            best_params = params.copy()
            stale = 0
        else:
            stale += 1
            if tcfg.patience > 0 and stale >= tcfg.patience:
                break
    return best_params, metrics
