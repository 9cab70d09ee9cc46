"""Loss definitions, Adam optimization, and the two-stage training procedure.

Every loss returns (value, gradient) so the trainer can route gradients
through the model's manual backward pass. Node-summed objectives default to
means over their index sets, which keeps the fixed mixing weights scale-free
across datasets; reduction="sum" restores plain sums.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import Dataset
from .graph import normalize
from .linalg import log_softmax_rows
from .model import ForwardTrace, ModelParams, backward, forward, init_params
from .pretext import PretextTask
from .util import derive_seed, make_record

ADAM_B1 = 0.9
ADAM_B2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class LossConfig:
    alpha: float = 0.1        # auxiliary-task weight in the teacher objective
    beta1: float = 0.6        # teacher share in classification distillation
    beta2: float = 0.3        # teacher share in auxiliary distillation
    tau: float = 2.0          # soft-label temperature
    sd_nc: float = 1.0        # per-term multipliers of the student objective
    sd_ss: float = 1.0
    sd_m: float = 1.0
    reduction: str = "mean"
    tau_squared: bool = False  # conventional tau^2 rescale of the KL term

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.beta1 <= 1.0 or not 0.0 <= self.beta2 <= 1.0:
            raise ValueError("beta1 and beta2 must lie in [0, 1]")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.reduction not in ("mean", "sum"):
            raise ValueError(f"reduction must be 'mean' or 'sum', got {self.reduction!r}")


@dataclass
class TrainSettings:
    hidden_dim: int = 64
    dropout: float = 0.5
    lr: float = 0.01
    weight_decay: float = 0.001
    max_epochs: int = 300
    patience: int = 50
    loss: LossConfig = field(default_factory=LossConfig)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int
    lr: float
    weight_decay: float


def adam_init(params: ModelParams, lr: float = 0.01, weight_decay: float = 0.001) -> AdamState:
    arrays = params.arrays()
    return AdamState(
        m={k: np.zeros_like(a) for k, a in arrays.items()},
        v={k: np.zeros_like(a) for k, a in arrays.items()},
        step=0,
        lr=lr,
        weight_decay=weight_decay,
    )


def adam_step(params: ModelParams, grads, state: AdamState) -> None:
    """One Adam update in place, with decoupled L2 weight decay."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - ADAM_B1**t
    bc2 = 1.0 - ADAM_B2**t
    p_arrays = params.arrays()
    for name, g in grads.arrays().items():
        p = p_arrays[name]
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_B1
        m += (1.0 - ADAM_B1) * g
        v *= ADAM_B2
        v += (1.0 - ADAM_B2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        p -= state.lr * update + state.lr * state.weight_decay * p


def _coeff(count: int, reduction: str) -> float:
    return 1.0 / count if reduction == "mean" else 1.0


def _check_idx(idx: np.ndarray) -> np.ndarray:
    idx = np.asarray(idx)
    if idx.size == 0:
        raise ValueError("loss evaluated on an empty index set")
    return idx


def smooth_l1(residual: np.ndarray):
    """Elementwise piecewise loss (quadratic inside the unit band) and its slope."""
    a = np.abs(residual)
    value = np.where(a < 1.0, 0.5 * residual * residual, a - 0.5)
    grad = np.where(a < 1.0, residual, np.sign(residual))
    return value, grad


def _ce_rows(logits_rows: np.ndarray, label_rows: np.ndarray):
    """Summed cross-entropy over rows and its gradient (softmax minus one-hot)."""
    lp = log_softmax_rows(logits_rows)
    rows = np.arange(logits_rows.shape[0])
    value = -float(lp[rows, label_rows].sum())
    grad = np.exp(lp)
    grad[rows, label_rows] -= 1.0
    return value, grad


def loss_nc(logits: np.ndarray, labels: np.ndarray, idx, reduction: str = "mean"):
    """Softmax cross-entropy over idx; gradient rows outside idx are zero."""
    idx = _check_idx(idx)
    c = _coeff(idx.size, reduction)
    value, grad_rows = _ce_rows(logits[idx], labels[idx])
    d = np.zeros_like(logits)
    d[idx] = c * grad_rows
    return c * value, d


def loss_ss(aux_logits: np.ndarray, task: PretextTask, idx, reduction: str = "mean"):
    """Auxiliary-task loss on idx: cross-entropy for classification tasks,
    per-node summed smooth-L1 for regression tasks.

    For the completion task the caller passes idx already restricted to
    masked nodes (see PretextTask.effective_index).
    """
    idx = _check_idx(idx)
    c = _coeff(idx.size, reduction)
    d = np.zeros_like(aux_logits)
    if task.task_type == "classification":
        value, grad_rows = _ce_rows(aux_logits[idx], task.targets[idx])
        d[idx] = c * grad_rows
        return c * value, d
    value_elems, grad_elems = smooth_l1(aux_logits[idx] - task.targets[idx])
    d[idx] = c * grad_elems
    return c * float(value_elems.sum()), d


def loss_sd_nc(logits_s: np.ndarray, logits_t: np.ndarray, labels: np.ndarray, idx, cfg: LossConfig):
    """Distillation loss for the classification head.

    beta1 weights the tempered KL between teacher and student distributions
    (teacher treated as constant); the remainder is ordinary cross-entropy on
    the ground-truth labels at temperature 1.
    """
    idx = _check_idx(idx)
    c = _coeff(idx.size, cfg.reduction)
    tau = cfg.tau
    lp_s = log_softmax_rows(logits_s[idx], tau)
    lp_t = log_softmax_rows(logits_t[idx], tau)
    p_t = np.exp(lp_t)
    kl = float((p_t * (lp_t - lp_s)).sum())
    kl_scale = cfg.beta1 * c * (tau * tau if cfg.tau_squared else 1.0)
    d = np.zeros_like(logits_s)
    d[idx] = kl_scale * (np.exp(lp_s) - p_t) / tau
    value = kl_scale * kl
    if cfg.beta1 < 1.0:
        hard, grad_rows = _ce_rows(logits_s[idx], labels[idx])
        value += (1.0 - cfg.beta1) * c * hard
        d[idx] += (1.0 - cfg.beta1) * c * grad_rows
    return value, d


def loss_sd_ss(aux_s: np.ndarray, aux_t: np.ndarray, task: PretextTask, idx, cfg: LossConfig):
    """Distillation loss for the auxiliary head.

    Classification tasks mirror loss_sd_nc with beta2. Regression heads have
    no softmax to temper, so the teacher term becomes smooth-L1 against the
    teacher outputs, mixed with smooth-L1 against the generated targets.
    """
    idx = _check_idx(idx)
    c = _coeff(idx.size, cfg.reduction)
    d = np.zeros_like(aux_s)
    if task.task_type == "classification":
        tau = cfg.tau
        lp_s = log_softmax_rows(aux_s[idx], tau)
        lp_t = log_softmax_rows(aux_t[idx], tau)
        p_t = np.exp(lp_t)
        kl_scale = cfg.beta2 * c * (tau * tau if cfg.tau_squared else 1.0)
        value = kl_scale * float((p_t * (lp_t - lp_s)).sum())
        d[idx] = kl_scale * (np.exp(lp_s) - p_t) / tau
        if cfg.beta2 < 1.0:
            hard, grad_rows = _ce_rows(aux_s[idx], task.targets[idx])
            value += (1.0 - cfg.beta2) * c * hard
            d[idx] += (1.0 - cfg.beta2) * c * grad_rows
        return value, d
    v_teacher, g_teacher = smooth_l1(aux_s[idx] - aux_t[idx])
    v_target, g_target = smooth_l1(aux_s[idx] - task.targets[idx])
    value = c * (cfg.beta2 * float(v_teacher.sum()) + (1.0 - cfg.beta2) * float(v_target.sum()))
    d[idx] = c * (cfg.beta2 * g_teacher + (1.0 - cfg.beta2) * g_target)
    return value, d


def loss_sd_m(hidden_s: np.ndarray, hidden_t: np.ndarray, idx, reduction: str = "mean"):
    """Middle-layer alignment: per-node summed smooth-L1 between hiddens."""
    idx = _check_idx(idx)
    c = _coeff(idx.size, reduction)
    value_elems, grad_elems = smooth_l1(hidden_s[idx] - hidden_t[idx])
    d = np.zeros_like(hidden_s)
    d[idx] = c * grad_elems
    return c * float(value_elems.sum()), d


def loss_teacher(trace: ForwardTrace, labels: np.ndarray, task: PretextTask | None,
                 cfg: LossConfig, idx):
    """Teacher objective: classification loss plus alpha times the auxiliary loss."""
    value, d_logits = loss_nc(trace.logits, labels, idx, cfg.reduction)
    terms = {"nc": value, "ss": 0.0}
    d_aux = None
    if task is not None and cfg.alpha > 0.0:
        eff = task.effective_index(np.asarray(idx))
        v_ss, d_aux = loss_ss(trace.aux_logits, task, eff, cfg.reduction)
        terms["ss"] = v_ss
        value += cfg.alpha * v_ss
        d_aux = cfg.alpha * d_aux
    return value, terms, d_logits, d_aux


def loss_student(trace: ForwardTrace, teacher_logits: np.ndarray,
                 teacher_aux: np.ndarray | None, teacher_hidden: np.ndarray,
                 labels: np.ndarray, task: PretextTask | None, cfg: LossConfig, idx):
    """Student objective: weighted sum of the three distillation terms."""
    idx = np.asarray(idx)
    terms = {"sd_nc": 0.0, "sd_ss": 0.0, "sd_m": 0.0}
    total = 0.0
    d_logits = None
    d_aux = None
    d_hidden = None
    if cfg.sd_nc != 0.0:
        v, d = loss_sd_nc(trace.logits, teacher_logits, labels, idx, cfg)
        terms["sd_nc"] = v
        total += cfg.sd_nc * v
        d_logits = cfg.sd_nc * d
    if cfg.sd_ss != 0.0 and task is not None:
        eff = task.effective_index(idx)
        v, d = loss_sd_ss(trace.aux_logits, teacher_aux, task, eff, cfg)
        terms["sd_ss"] = v
        total += cfg.sd_ss * v
        d_aux = cfg.sd_ss * d
    if cfg.sd_m != 0.0:
        v, d = loss_sd_m(trace.hidden, teacher_hidden, idx, cfg.reduction)
        terms["sd_m"] = v
        total += cfg.sd_m * v
        d_hidden = cfg.sd_m * d
    return total, terms, d_logits, d_aux, d_hidden


def accuracy(logits: np.ndarray, labels: np.ndarray, idx) -> float:
    idx = np.asarray(idx)
    if idx.size == 0:
        return 0.0
    return float(np.mean(logits[idx].argmax(axis=1) == labels[idx]))


def predict(params: ModelParams, dataset: Dataset) -> np.ndarray:
    """Eval-mode class predictions for every node."""
    lnorm = normalize(dataset.graph)
    trace = forward(params, lnorm, dataset.features, train_mode=False)
    return trace.logits.argmax(axis=1)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    terms: dict[str, float]
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainReport:
    stage: str
    epochs: list[EpochStats]
    best_epoch: int
    best_val_acc: float
    test_acc: float
    config: dict
    wall_clock: float

    def records(self) -> list[str]:
        """Deterministic record lines (epochs plus stage summary, no timing)."""
        lines = []
        for e in self.epochs:
            fields = {
                "stage": self.stage,
                "epoch": e.epoch,
                "train_loss": e.train_loss,
                "train_acc": e.train_acc,
                "val_loss": e.val_loss,
                "val_acc": e.val_acc,
            }
            fields.update({f"loss_{k}": v for k, v in e.terms.items()})
            lines.append(make_record("epoch", fields))
        lines.append(
            make_record(
                "stage_summary",
                {
                    "stage": self.stage,
                    "best_epoch": self.best_epoch,
                    "best_val_acc": self.best_val_acc,
                    "test_acc": self.test_acc,
                    "epochs_run": len(self.epochs),
                },
            )
        )
        return lines


def _settings_snapshot(settings: TrainSettings, seed: int, stage: str) -> dict:
    snap = {"stage": stage, "seed": int(seed)}
    snap.update({k: v for k, v in asdict(settings).items() if k != "loss"})
    snap.update({f"loss_{k}": v for k, v in asdict(settings.loss).items()})
    return snap


def _run_stage(
    stage: str,
    dataset: Dataset,
    task: PretextTask | None,
    settings: TrainSettings,
    seed: int,
    step_fn,
) -> tuple[ModelParams, TrainReport]:
    """Shared epoch loop: Adam steps, eval pass, patience-based early stopping.

    step_fn(params, trace) computes (loss value, term dict, gradient triple)
    for one training forward pass. The returned parameters are the snapshot
    with the highest validation accuracy (earliest epoch on ties); when the
    validation set is empty, training accuracy is used instead.
    """
    t_start = time.perf_counter()
    lnorm = normalize(dataset.graph)
    x = dataset.features
    x_override = task.input_override if task is not None else None
    aux_dim = task.output_dim if task is not None else None
    params = init_params(
        dataset.num_features,
        settings.hidden_dim,
        dataset.num_classes,
        aux_dim=aux_dim,
        dropout=settings.dropout,
        seed=derive_seed(seed, "init"),
    )
    state = adam_init(params, settings.lr, settings.weight_decay)
    drop_rng = np.random.default_rng(derive_seed(seed, "dropout"))

    epochs: list[EpochStats] = []
    best_params = params.copy()
    best_val = -1.0
    best_epoch = -1
    stale = 0
    for epoch in range(settings.max_epochs):
        trace = forward(params, lnorm, x, x_override, train_mode=True, rng=drop_rng)
        value, terms, grad_triple = step_fn(params, trace)
        grads = backward(
            params,
            trace,
            d_logits=grad_triple[0],
            d_aux=grad_triple[1],
            d_hidden=grad_triple[2],
        )
        adam_step(params, grads, state)

        ev = forward(params, lnorm, x, x_override, train_mode=False)
        train_acc = accuracy(ev.logits, dataset.labels, dataset.train_idx)
        if dataset.val_idx.size:
            val_acc = accuracy(ev.logits, dataset.labels, dataset.val_idx)
            val_loss, _ = loss_nc(ev.logits, dataset.labels, dataset.val_idx, settings.loss.reduction)
        else:
            val_acc, val_loss = train_acc, value
        epochs.append(
            EpochStats(
                epoch=epoch,
                train_loss=value,
                terms=terms,
                train_acc=train_acc,
                val_loss=val_loss,
                val_acc=val_acc,
            )
        )
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_params = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= settings.patience:
                break

    ev = forward(best_params, lnorm, x, x_override, train_mode=False)
    test_acc = accuracy(ev.logits, dataset.labels, dataset.test_idx)
    report = TrainReport(
        stage=stage,
        epochs=epochs,
        best_epoch=best_epoch,
        best_val_acc=best_val,
        test_acc=test_acc,
        config=_settings_snapshot(settings, seed, stage),
        wall_clock=time.perf_counter() - t_start,
    )
    return best_params, report


def train_teacher(
    dataset: Dataset,
    task: PretextTask | None,
    settings: TrainSettings,
    seed: int,
) -> tuple[ModelParams, TrainReport]:
    """Stage one: optimize classification plus alpha-weighted auxiliary loss."""

    def step(params: ModelParams, trace: ForwardTrace):
        value, terms, d_logits, d_aux = loss_teacher(
            trace, dataset.labels, task, settings.loss, dataset.train_idx
        )
        return value, terms, (d_logits, d_aux, None)

    return _run_stage("teacher", dataset, task, settings, seed, step)


def train_student(
    dataset: Dataset,
    task: PretextTask | None,
    teacher_params: ModelParams,
    settings: TrainSettings,
    seed: int,
) -> tuple[ModelParams, TrainReport]:
    """Stage two: train a freshly initialized student against the frozen teacher.

    The teacher runs once in eval mode (deterministic, so per-epoch recomputation
    would produce identical values) to provide its logits, auxiliary logits, and
    hidden outputs as constants of the student objective.
    """
    lnorm = normalize(dataset.graph)
    x_override = task.input_override if task is not None else None
    t_trace = forward(teacher_params, lnorm, dataset.features, x_override, train_mode=False)
    teacher_logits = t_trace.logits
    teacher_aux = t_trace.aux_logits
    teacher_hidden = t_trace.hidden

    def step(params: ModelParams, trace: ForwardTrace):
        value, terms, d_logits, d_aux, d_hidden = loss_student(
            trace,
            teacher_logits,
            teacher_aux,
            teacher_hidden,
            dataset.labels,
            task,
            settings.loss,
            dataset.train_idx,
        )
        return value, terms, (d_logits, d_aux, d_hidden)

    return _run_stage("student", dataset, task, settings, seed, step)
