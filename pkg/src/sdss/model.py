"""Two-layer graph convolutional backbone with two linear heads.

The forward map is

    hidden  = P relu(P X W0)        (P = normalized adjacency)
    logits  = hidden W1
    aux     = hidden' W_aux         (hidden' recomputed from overridden inputs
                                     when the auxiliary task masks features,
                                     otherwise shared with `hidden`)

Dropout (inverted scaling) is applied to the post-relu activations in train
mode only. backward() differentiates this composition exactly, including the
shared-W0 sum of the classification path, the auxiliary path, and a direct
gradient on the hidden output used by middle-layer distillation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import NormalizedAdjacency, spmm
from .linalg import glorot_init, relu, relu_backward


@dataclass
class ModelParams:
    w0: np.ndarray                  # (f, h) feature extractor
    w1: np.ndarray                  # (h, m) classification head
    w_aux: np.ndarray | None        # (h, p) auxiliary head, None when unused
    hidden_dim: int
    dropout: float

    def copy(self) -> "ModelParams":
        return ModelParams(
            w0=self.w0.copy(),
            w1=self.w1.copy(),
            w_aux=None if self.w_aux is None else self.w_aux.copy(),
            hidden_dim=self.hidden_dim,
            dropout=self.dropout,
        )

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"w0": self.w0, "w1": self.w1}
        if self.w_aux is not None:
            out["w_aux"] = self.w_aux
        return out


@dataclass
class Gradients:
    dw0: np.ndarray
    dw1: np.ndarray
    dw_aux: np.ndarray | None

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"w0": self.dw0, "w1": self.dw1}
        if self.dw_aux is not None:
            out["w_aux"] = self.dw_aux
        return out


def init_params(
    num_features: int,
    hidden_dim: int,
    num_classes: int,
    aux_dim: int | None = None,
    dropout: float = 0.5,
    seed: int = 0,
) -> ModelParams:
    """Glorot-initialized parameters; layer seeds derive from the given seed."""
    rng = np.random.default_rng(seed)
    s0, s1, s2 = (int(v) for v in rng.integers(0, 2**63 - 1, size=3))
    return ModelParams(
        w0=glorot_init(num_features, hidden_dim, s0),
        w1=glorot_init(hidden_dim, num_classes, s1),
        w_aux=None if aux_dim is None else glorot_init(hidden_dim, aux_dim, s2),
        hidden_dim=hidden_dim,
        dropout=dropout,
    )


@dataclass(eq=False)
class ForwardTrace:
    """Cached intermediates of one forward pass, consumed by backward()."""

    lnorm: NormalizedAdjacency
    x_prop: np.ndarray              # P X
    pre_act: np.ndarray             # P X W0
    drop_mask: np.ndarray | None    # scaled inverted-dropout mask or None
    hidden: np.ndarray              # P relu(P X W0), after dropout in train mode
    logits: np.ndarray
    shares_input: bool = True
    x_prop_aux: np.ndarray | None = None
    pre_act_aux: np.ndarray | None = None
    drop_mask_aux: np.ndarray | None = None
    hidden_aux: np.ndarray | None = None
    aux_logits: np.ndarray | None = None


def _dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(shape) >= rate) / (1.0 - rate)


def forward(
    params: ModelParams,
    lnorm: NormalizedAdjacency,
    x: np.ndarray,
    x_override: np.ndarray | None = None,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardTrace:
    """Run both pipelines; eval mode (train_mode=False) is fully deterministic.

    When x_override is given the auxiliary pipeline recomputes its hidden
    state from the overridden inputs with its own dropout mask; otherwise it
    reuses the classification hidden state (one backbone, one pass).
    """
    if x.ndim != 2 or x.shape[0] != lnorm.n:
        raise ValueError(f"features must be {lnorm.n}xF, got {x.shape}")
    if x.shape[1] != params.w0.shape[0]:
        raise ValueError(f"feature dim {x.shape[1]} does not match W0 {params.w0.shape}")
    if x_override is not None and x_override.shape != x.shape:
        raise ValueError(f"override shape {x_override.shape} does not match {x.shape}")
    use_dropout = train_mode and params.dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("train-mode forward with dropout requires an rng")

    x_prop = spmm(lnorm, x)
    pre_act = x_prop @ params.w0
    post = relu(pre_act)
    drop_mask = None
    if use_dropout:
        drop_mask = _dropout_mask(post.shape, params.dropout, rng)
        post = post * drop_mask
    hidden = spmm(lnorm, post)
    trace = ForwardTrace(
        lnorm=lnorm,
        x_prop=x_prop,
        pre_act=pre_act,
        drop_mask=drop_mask,
        hidden=hidden,
        logits=hidden @ params.w1,
    )
    if params.w_aux is None:
        return trace
    if x_override is None:
        trace.aux_logits = hidden @ params.w_aux
        return trace
    trace.shares_input = False
    trace.x_prop_aux = spmm(lnorm, x_override)
    trace.pre_act_aux = trace.x_prop_aux @ params.w0
    post_aux = relu(trace.pre_act_aux)
    if use_dropout:
        trace.drop_mask_aux = _dropout_mask(post_aux.shape, params.dropout, rng)
        post_aux = post_aux * trace.drop_mask_aux
    trace.hidden_aux = spmm(lnorm, post_aux)
    trace.aux_logits = trace.hidden_aux @ params.w_aux
    return trace


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    d_logits: np.ndarray | None = None,
    d_aux: np.ndarray | None = None,
    d_hidden: np.ndarray | None = None,
) -> Gradients:
    """Exact gradients of the forward composition.

    d_logits, d_aux, d_hidden are the loss gradients with respect to the
    classification logits, the auxiliary logits, and the classification-path
    hidden output; any of them may be None (treated as zero).
    """
    dw1 = np.zeros_like(params.w1)
    dw0 = np.zeros_like(params.w0)
    dw_aux = None if params.w_aux is None else np.zeros_like(params.w_aux)

    dh = None
    if d_logits is not None:
        if d_logits.shape != trace.logits.shape:
            raise ValueError(f"d_logits shape {d_logits.shape} != {trace.logits.shape}")
        dw1 = trace.hidden.T @ d_logits
        dh = d_logits @ params.w1.T
    if d_hidden is not None:
        if d_hidden.shape != trace.hidden.shape:
            raise ValueError(f"d_hidden shape {d_hidden.shape} != {trace.hidden.shape}")
        dh = d_hidden if dh is None else dh + d_hidden
    if d_aux is not None:
        if params.w_aux is None:
            raise ValueError("auxiliary gradient given but the model has no auxiliary head")
        if d_aux.shape != trace.aux_logits.shape:
            raise ValueError(f"d_aux shape {d_aux.shape} != {trace.aux_logits.shape}")
        source = trace.hidden if trace.shares_input else trace.hidden_aux
        dw_aux = source.T @ d_aux
        if trace.shares_input:
            extra = d_aux @ params.w_aux.T
            dh = extra if dh is None else dh + extra

    if dh is not None:
        # P is symmetric, so the adjoint of h -> P h is the same product
        d_post = spmm(trace.lnorm, dh)
        if trace.drop_mask is not None:
            d_post = d_post * trace.drop_mask
        d_pre = relu_backward(d_post, trace.pre_act)
        dw0 += trace.x_prop.T @ d_pre

    if d_aux is not None and not trace.shares_input:
        d_post = spmm(trace.lnorm, d_aux @ params.w_aux.T)
        if trace.drop_mask_aux is not None:
            d_post = d_post * trace.drop_mask_aux
        d_pre = relu_backward(d_post, trace.pre_act_aux)
        dw0 += trace.x_prop_aux.T @ d_pre

    return Gradients(dw0=dw0, dw1=dw1, dw_aux=dw_aux)


def save_checkpoint(path, params: ModelParams, seed: int, config_hash: str) -> None:
    """Text checkpoint: header lines, then one `matrix` block per parameter."""
    path = Path(path)
    blocks = [("w0", params.w0), ("w1", params.w1)]
    if params.w_aux is not None:
        blocks.append(("w_aux", params.w_aux))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("gcn-checkpoint v1\n")
        fh.write(f"hidden_dim={params.hidden_dim}\n")
        fh.write("dropout=%.17g\n" % params.dropout)
        fh.write(f"seed={int(seed)}\n")
        fh.write(f"config_hash={config_hash}\n")
        for name, mat in blocks:
            fh.write(f"matrix {name} {mat.shape[0]} {mat.shape[1]}\n")
            for row in mat:
                fh.write(" ".join("%.17g" % v for v in row) + "\n")


def load_checkpoint(path) -> tuple[ModelParams, dict[str, str]]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "gcn-checkpoint v1":
        raise ValueError(f"{path}: not a v1 checkpoint file")
    meta: dict[str, str] = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("matrix "):
        key, _, value = lines[i].partition("=")
        meta[key] = value
        i += 1
    matrices: dict[str, np.ndarray] = {}
    while i < len(lines):
        _, name, rows, cols = lines[i].split()
        rows, cols = int(rows), int(cols)
        block = np.empty((rows, cols))
        for r in range(rows):
            block[r] = [float(tok) for tok in lines[i + 1 + r].split()]
        matrices[name] = block
        i += 1 + rows
    if "w0" not in matrices or "w1" not in matrices:
        raise ValueError(f"{path}: checkpoint is missing parameter matrices")
    params = ModelParams(
        w0=matrices["w0"],
        w1=matrices["w1"],
        w_aux=matrices.get("w_aux"),
        hidden_dim=int(meta["hidden_dim"]),
        dropout=float(meta["dropout"]),
    )
    return params, meta
