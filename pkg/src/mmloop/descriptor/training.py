"""SGD training on a triplet database, plateau detection and hard fine-tuning."""

from dataclasses import dataclass, field
import logging

import numpy as np

from ..errors import ConfigError, DataError, PhaseOrderError, TrainingDivergenceError
from .loss import LossConfig, triplet_loss_and_grad
from .network import backward, forward, init_weights

log = logging.getLogger(__name__)

PHASES = ("random_db", "hard_db")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 20
    finetune_epochs: int = 5
    batch_size: int = 16
    triplets_per_epoch: int = 0  # 0: the whole training split every epoch
    val_fraction: float = 0.1
    val_max: int = 256
    plateau_window: int = 3
    plateau_epsilon: float = 0.02
    stop_on_plateau: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must be in [0, 1)")
        if self.plateau_window < 2:
            raise ConfigError("plateau_window must be >= 2")


@dataclass
class TrainState:
    epoch: int = 0
    lr: float = 0.0
    phase: str = "random_db"
    seed: int = 0
    plateau: bool = False
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    active_loss: list = field(default_factory=list)
    active_fraction: list = field(default_factory=list)
    log_rows: list = field(default_factory=list)

    def set_phase(self, phase):
        if PHASES.index(phase) < PHASES.index(self.phase):
            raise PhaseOrderError(f"cannot go back from {self.phase} to {phase}")
        self.phase = phase


class ArrayResolver:
    """Maps sample ids to rows of a preloaded (N, H, W, C) tensor stack."""

    def __init__(self, ids, tensors):
        self.tensors = tensors
        self._row = {int(s): i for i, s in enumerate(ids)}

    def __call__(self, ids):
        try:
            rows = [self._row[int(s)] for s in ids]
        except KeyError as exc:
            raise DataError(f"no network input for sample {exc.args[0]}") from None
        return np.asarray(self.tensors[rows], dtype=np.float64)


def loss_gradients(weights, anchor, positive, negative, loss_cfg=LossConfig()):
    """Mean triplet loss and its gradient w.r.t. every shared parameter.

    Inputs are single (H, W, C) images or aligned batches. The three roles
    run through the same weights in one stacked batch, so the parameter
    gradients accumulate all tower contributions.
    """
    a = np.asarray(anchor, dtype=float)
    if a.ndim == 3:
        a, positive, negative = a[None], np.asarray(positive)[None], np.asarray(negative)[None]
    b = len(a)
    x = np.concatenate([a, positive, negative], axis=0)
    desc, cache = forward(weights, x, keep=True)
    if not np.all(np.isfinite(desc)):
        raise TrainingDivergenceError("non-finite descriptor in forward pass")
    loss, per, ga, gp, gn = triplet_loss_and_grad(desc[:b], desc[b:2 * b], desc[2 * b:], loss_cfg.margin)
    grads = backward(weights, cache, np.concatenate([ga, gp, gn], axis=0))
    return loss, grads, per


def detect_plateau(history, window, epsilon):
    """True iff the best loss inside the last ``window`` epochs improved on the
    best loss before the window by less than ``epsilon`` (relative)."""
    if window < 2:
        raise ConfigError("window must be >= 2")
    if isinstance(history, TrainState):
        history = history.val_loss
    if len(history) <= window:
        return False
    before = min(history[:-window])
    recent = min(history[-window:])
    if before <= 0:
        return True
    return (before - recent) / before < epsilon


def evaluate_loss(weights, db, idx, resolver, loss_cfg, batch=64):
    """Mean triplet loss over records ``idx`` of ``db`` (no gradients)."""
    if len(idx) == 0:
        return float("nan")
    total = 0.0
    for s in range(0, len(idx), batch):
        j = idx[s:s + batch]
        b = len(j)
        x = resolver(np.concatenate([db.anchors[j], db.positives[j], db.negatives[j]]))
        d = forward(weights, x)
        loss, _, _, _, _ = triplet_loss_and_grad(d[:b], d[b:2 * b], d[2 * b:], loss_cfg.margin)
        total += loss * b
    return total / len(idx)


def _split_val(n, cfg, rng):
    perm = rng.permutation(n)
    n_val = min(int(round(cfg.val_fraction * n)), cfg.val_max)
    if n - n_val < 1:
        n_val = 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _run_epochs(weights, db, resolver, loss_cfg, cfg, state, n_epochs, phase, stop_on_plateau):
    rng = np.random.default_rng([cfg.seed, PHASES.index(phase)])
    train_idx, val_idx = _split_val(len(db), cfg, rng)
    velocity = {k: np.zeros_like(v) for k, v in weights.params.items()}
    for _ in range(n_epochs):
        last_good = weights.copy()
        order = train_idx[rng.permutation(len(train_idx))]
        if cfg.triplets_per_epoch:
            order = order[:cfg.triplets_per_epoch]
        losses = []
        for s in range(0, len(order), cfg.batch_size):
            j = order[s:s + cfg.batch_size]
            b = len(j)
            x = resolver(np.concatenate([db.anchors[j], db.positives[j], db.negatives[j]]))
            try:
                loss, grads, per = loss_gradients(weights, x[:b], x[b:2 * b], x[2 * b:], loss_cfg)
            except TrainingDivergenceError as exc:
                raise TrainingDivergenceError(f"epoch {state.epoch + 1}: {exc}", last_good) from None
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDivergenceError(f"epoch {state.epoch + 1}: non-finite loss", last_good)
            for k in weights.params:
                velocity[k] = cfg.momentum * velocity[k] - cfg.lr * grads[k]
                weights.params[k] += velocity[k]
            losses.append(per)
        per_all = np.concatenate(losses) if losses else np.zeros(0)
        state.epoch += 1
        train_loss = float(per_all.mean()) if len(per_all) else float("nan")
        act = per_all[per_all > 0]
        val = evaluate_loss(weights, db, val_idx, resolver, loss_cfg) if len(val_idx) else train_loss
        state.train_loss.append(train_loss)
        state.val_loss.append(val)
        state.active_loss.append(float(act.mean()) if len(act) else 0.0)
        state.active_fraction.append(len(act) / max(len(per_all), 1))
        state.log_rows.append((state.epoch, phase, train_loss, val))
        log.info("epoch %d %s train %.5f val %.5f active %.3f", state.epoch, phase, train_loss, val,
                 state.active_fraction[-1])
        if stop_on_plateau and detect_plateau(state.val_loss, cfg.plateau_window, cfg.plateau_epsilon):
            state.plateau = True
            break
    return weights


def train(db, resolver, net_cfg, loss_cfg=LossConfig(), cfg=TrainConfig(), weights=None):
    """Random-negative phase: SGD until a validation plateau or ``cfg.epochs``."""
    if len(db) == 0:
        raise DataError("empty triplet database")
    if weights is None:
        weights = init_weights(net_cfg, cfg.seed)
    else:
        weights = weights.copy()
    state = TrainState(lr=cfg.lr, seed=cfg.seed)
    weights = _run_epochs(weights, db, resolver, loss_cfg, cfg, state, cfg.epochs, "random_db",
                          cfg.stop_on_plateau)
    return weights, state


def fine_tune_hard(weights, hard_db, resolver, loss_cfg, cfg, state, epochs=None):
    """Continue from ``weights`` on the hard-negative database after a plateau."""
    if state.phase != "random_db" or not state.plateau:
        raise PhaseOrderError("hard fine-tuning requires a plateau in the random_db phase")
    state.set_phase("hard_db")
    if len(hard_db) == 0:
        log.warning("hard-negative database is empty; weights left unchanged")
        return weights.copy()
    n = cfg.finetune_epochs if epochs is None else epochs
    return _run_epochs(weights.copy(), hard_db, resolver, loss_cfg, cfg, state, n, "hard_db", False)


def write_train_log(state, path):
    with open(path, "w") as fh:
        fh.write("epoch,phase,train_loss,val_loss\n")
        for epoch, phase, tl, vl in state.log_rows:
            fh.write(f"{epoch},{phase},{tl:.8f},{vl:.8f}\n")
