"""The three training loops (cover classifier pretraining, contrastive
alignment, supervised baseline), checkpoint helpers, and the epoch log.

Every loop is deterministic for a fixed (seed, config, data): shuffling,
dropout and initialization each draw from their own keyed substream, epoch
metrics are logged, and early stopping restores the best validation
checkpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataprep import PairedDataset
from .encoders import (
    AlignmentModel,
    BotaniaMLP,
    BotaSPModel,
    GradientTape,
)
from .errors import EmptySplit, NotNormalized
from .fileio import read_csv, write_csv
from .losses import (
    ScalarsTauB,
    botasp_loss_and_grads,
    cross_entropy_batch,
    regularizer_and_grad,
    scl_loss_and_grads,
)
from .numerics import Rng, row_norms
from .optim import AdamW, EarlyStopper, adam
from .spatial import FoldAssignment, buffered_split, check_no_leakage

UNIT_CHECK_TOL = 1e-9


@dataclass
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 1000
    patience: int = 10
    lam: float = 1.0
    seed: int = 0
    shuffle: bool = True


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    scl: list = field(default_factory=list)   # validation contrastive term
    reg: list = field(default_factory=list)   # validation drift term
    tau: list = field(default_factory=list)
    b: list = field(default_factory=list)
    best_epoch: int = -1

    def append(self, epoch, train_loss, val_loss, scl, reg, tau, b):
        self.epochs.append(epoch)
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.scl.append(scl)
        self.reg.append(reg)
        self.tau.append(tau)
        self.b.append(b)

    def to_csv(self, path):
        write_csv(path, ["epoch", "train_loss", "val_loss", "scl", "reg",
                         "tau", "b"],
                  zip(self.epochs, self.train_loss, self.val_loss, self.scl,
                      self.reg, self.tau, self.b))

    @classmethod
    def from_csv(cls, path):
        _, rows = read_csv(path)
        log = cls()
        for row in rows:
            log.append(int(row[0]), *(float(v) for v in row[1:]))
        return log


def _batches(n: int, batch_size: int, order=None):
    idx = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield idx[start:start + batch_size]


def _snapshot(params):
    return {p.name: p.value.copy() for p in params}


def _restore(params, snapshot):
    for p in params:
        p.value = snapshot[p.name].copy()


def _check_unit(z, what):
    dev = np.abs(row_norms(z) - 1.0)
    if dev.size and dev.max() > UNIT_CHECK_TOL:
        raise NotNormalized(f"{what} left the unit sphere by {dev.max():.2e}")


# --- cover-classifier pretraining -------------------------------------------

def train_botania(covers: np.ndarray, labels: np.ndarray,
                  train_idx: np.ndarray, val_idx: np.ndarray,
                  cfg: TrainConfig, hidden: int = 1536, embed: int = 768,
                  n_classes: int = 232, dropout_rate: float = 0.4,
                  lr: float = 0.3):
    """Plain-Adam classifier pretraining; early stopping on validation
    cross-entropy; returns the best-epoch model and the log."""
    train_idx = np.asarray(train_idx)
    val_idx = np.asarray(val_idx)
    if train_idx.size == 0 or val_idx.size == 0:
        raise EmptySplit("empty train or validation split")
    rng = Rng(cfg.seed)
    model = BotaniaMLP(covers.shape[1], hidden, embed, n_classes,
                       dropout_rate, gen=rng.substream("init"))
    opt = adam(model.params(), lr=lr)
    stopper = EarlyStopper(cfg.patience)
    log = TrainLog()
    best = _snapshot(model.params())

    for epoch in range(1, cfg.max_epochs + 1):
        order = train_idx.copy()
        if cfg.shuffle:
            order = order[rng.substream("shuffle", epoch).permutation(order.size)]
        losses = []
        for bi, batch in enumerate(_batches(order.size, cfg.batch_size, order)):
            logits, _ = model.forward(
                covers[batch], train=True,
                gen=rng.substream(f"dropout/{epoch}", bi), with_penult=False)
            loss, dlogits = cross_entropy_batch(logits, labels[batch])
            tape = GradientTape()
            model.backward(tape, g_logits=dlogits)
            opt.step(tape)
            losses.append(loss)

        val_losses = []
        for batch in _batches(val_idx.size, cfg.batch_size, val_idx):
            logits, _ = model.forward(covers[batch], with_penult=False)
            val_losses.append(cross_entropy_batch(logits, labels[batch])[0])
        val_loss = float(np.mean(val_losses))
        log.append(epoch, float(np.mean(losses)), val_loss, val_loss, 0.0,
                   math.nan, math.nan)
        stop = stopper.update(epoch, val_loss)
        if stopper.improved:
            best = _snapshot(model.params())
        if stop:
            break
    log.best_epoch = stopper.best_epoch
    _restore(model.params(), best)
    return model, log


def botania_accuracy(model: BotaniaMLP, covers, labels, top_k: int = 1) -> float:
    logits, _ = model.forward(covers, with_penult=False)
    top = np.argsort(logits, axis=1, kind="stable")[:, ::-1][:, :top_k]
    return float(np.mean([labels[i] in top[i] for i in range(len(labels))]))


# --- contrastive alignment ----------------------------------------------------

def train_botaclip(pairs: PairedDataset, assignment: FoldAssignment,
                   cfg: TrainConfig, variant: str = "botania-linear",
                   regularized: bool = True, fold: int = 1,
                   botania: BotaniaMLP | None = None,
                   proj_dim: int | None = None,
                   model_options: dict | None = None,
                   lr: float = 1e-3, weight_decay: float = 1e-3):
    """Align image views with cover vectors; image embeddings stay frozen
    inputs, adapters (and the trainable cover encoder) update.

    Multi-view pairs expand into one (view, pair) sample each; validation
    uses only the first view of each pair. The model with the best
    validation loss (contrastive + lambda * drift) is returned.
    """
    lam = cfg.lam if regularized else 0.0
    rng = Rng(cfg.seed)
    train_p, val_p, _ = buffered_split(assignment, fold)
    check_no_leakage(assignment, train_p, val_p)

    d_img = pairs.images.shape[1]
    d_tab = pairs.covers.shape[1]
    opts = dict(model_options or {})
    b_hidden = opts.pop("botania_hidden", 96)
    b_classes = opts.pop("botania_classes", 8)
    b_dropout = opts.pop("botania_dropout", 0.4)
    if variant == "botania-linear" and botania is None:
        botania = BotaniaMLP(d_tab, b_hidden, proj_dim or d_img, b_classes,
                             b_dropout, gen=rng.substream("init/botania"))
    model = AlignmentModel(variant, d_img=d_img, d_tab=d_tab, rng=rng,
                           proj_dim=proj_dim or d_img, botania=botania,
                           **opts)
    opt = AdamW(model.params(), lr=lr, weight_decay=weight_decay)
    stopper = EarlyStopper(cfg.patience)
    log = TrainLog()
    best = _snapshot(model.params())

    train_rows = pairs.view_rows_for_pairs(train_p)
    val_rows = pairs.view_rows_for_pairs(val_p, first_view_only=True)
    if train_rows.size == 0 or val_rows.size == 0:
        raise EmptySplit("no usable train or validation views")

    def validation_components():
        scls, regs = [], []
        s = ScalarsTauB(float(model.tau.value), float(model.bias.value))
        for batch in _batches(val_rows.size, cfg.batch_size, val_rows):
            x = pairs.images[batch]
            c = pairs.covers[pairs.pair_index[batch]]
            z_img = model.encode_images(x)
            z_tab = model.encode_tables(c)
            scl, *_ = scl_loss_and_grads(z_img, z_tab, s)
            reg, _ = regularizer_and_grad(x, z_img)
            scls.append(scl)
            regs.append(reg)
        return float(np.mean(scls)), float(np.mean(regs))

    for epoch in range(1, cfg.max_epochs + 1):
        order = train_rows.copy()
        if cfg.shuffle:
            order = order[rng.substream("shuffle", epoch).permutation(order.size)]
        batch_losses = []
        for bi, batch in enumerate(_batches(order.size, cfg.batch_size, order)):
            x = pairs.images[batch]
            c = pairs.covers[pairs.pair_index[batch]]
            gen = rng.substream(f"dropout/{epoch}", bi)
            z_img = model.encode_images(x, train=True, gen=gen)
            z_tab = model.encode_tables(c, train=True, gen=gen)
            _check_unit(z_img, "image projection")
            _check_unit(z_tab, "tabular projection")
            s = ScalarsTauB(float(model.tau.value), float(model.bias.value))
            scl, d_zi, d_zt, d_tau, d_b = scl_loss_and_grads(z_img, z_tab, s)
            reg, d_reg = regularizer_and_grad(x, z_img)
            tape = GradientTape()
            model.backward_images(d_zi + lam * d_reg if lam > 0 else d_zi,
                                  tape)
            model.backward_tables(d_zt, tape)
            tape.add(model.tau, np.float64(d_tau))
            tape.add(model.bias, np.float64(d_b))
            opt.step(tape)
            batch_losses.append(scl + lam * reg)

        val_scl, val_reg = validation_components()
        val_loss = val_scl + lam * val_reg
        log.append(epoch, float(np.mean(batch_losses)), val_loss, val_scl,
                   val_reg, float(model.tau.value), float(model.bias.value))
        stop = stopper.update(epoch, val_loss)
        if stopper.improved:
            best = _snapshot(model.params())
        if stop:
            break
    log.best_epoch = stopper.best_epoch
    _restore(model.params(), best)
    return model, log


def embed_images(model: AlignmentModel, images: np.ndarray) -> np.ndarray:
    """Apply the trained image branch in eval mode."""
    return model.encode_images(np.asarray(images, dtype=np.float64))


# --- supervised baseline --------------------------------------------------------

def train_botasp(embeddings: np.ndarray, presence: np.ndarray,
                 train_idx: np.ndarray, val_idx: np.ndarray,
                 cfg: TrainConfig, proj_dim: int = 768, hidden: int = 1536,
                 dropout_rate: float = 0.4, lr: float = 1e-3,
                 weight_decay: float = 1e-3):
    """Presence/absence pretraining over unit-norm embeddings with the
    similarity-drift penalty on the projection (lambda from cfg.lam)."""
    train_idx = np.asarray(train_idx)
    val_idx = np.asarray(val_idx)
    if train_idx.size == 0 or val_idx.size == 0:
        raise EmptySplit("empty train or validation split")
    rng = Rng(cfg.seed)
    model = BotaSPModel(embeddings.shape[1], presence.shape[1], proj_dim,
                        hidden, dropout_rate, gen=rng.substream("init"))
    opt = AdamW(model.params(), lr=lr, weight_decay=weight_decay)
    stopper = EarlyStopper(cfg.patience)
    log = TrainLog()
    best = _snapshot(model.params())
    targets = np.asarray(presence, dtype=np.float64)

    def val_components():
        bces, regs = [], []
        for batch in _batches(val_idx.size, cfg.batch_size, val_idx):
            logits, z, _ = model.forward(embeddings[batch])
            _, _, _, bce, reg = botasp_loss_and_grads(
                logits, targets[batch], embeddings[batch], z, cfg.lam)
            bces.append(bce)
            regs.append(reg)
        return float(np.mean(bces)), float(np.mean(regs))

    for epoch in range(1, cfg.max_epochs + 1):
        order = train_idx.copy()
        if cfg.shuffle:
            order = order[rng.substream("shuffle", epoch).permutation(order.size)]
        losses = []
        for bi, batch in enumerate(_batches(order.size, cfg.batch_size, order)):
            logits, z, _ = model.forward(
                embeddings[batch], train=True,
                gen=rng.substream(f"dropout/{epoch}", bi))
            loss, dlogits, dz, _, _ = botasp_loss_and_grads(
                logits, targets[batch], embeddings[batch], z, cfg.lam)
            tape = GradientTape()
            model.backward(tape, g_logits=dlogits,
                           g_z=dz if cfg.lam > 0 else None)
            opt.step(tape)
            losses.append(loss)
        val_bce, val_reg = val_components()
        val_loss = val_bce + cfg.lam * val_reg
        log.append(epoch, float(np.mean(losses)), val_loss, val_bce, val_reg,
                   math.nan, math.nan)
        stop = stopper.update(epoch, val_loss)
        if stopper.improved:
            best = _snapshot(model.params())
        if stop:
            break
    log.best_epoch = stopper.best_epoch
    _restore(model.params(), best)
    return model, log


def botasp_features(model: BotaSPModel, embeddings: np.ndarray) -> np.ndarray:
    """Post-GELU, pre-dropout hidden activations used downstream."""
    _, _, feat = model.forward(np.asarray(embeddings, dtype=np.float64))
    return feat


# --- checkpoint round trip -------------------------------------------------------

def model_state(model) -> dict[str, np.ndarray]:
    return {p.name: p.value for p in model.params()}


def alignment_model_from_state(state: dict[str, np.ndarray]) -> AlignmentModel:
    """Rebuild an alignment model from named checkpoint arrays; the variant
    and every dimension are inferred from parameter names and shapes."""
    rng = Rng(0)
    if "img_adapter.weight" in state:
        d_img = state["img_adapter.weight"].shape[1]
        in_dim, hidden = state["botania.lin1.weight"].shape[::-1]
        embed = state["botania.lin2.weight"].shape[0]
        n_classes = state["botania.head.weight"].shape[0]
        botania = BotaniaMLP(in_dim, hidden, embed, n_classes, gen=None)
        model = AlignmentModel("botania-linear", d_img=d_img, d_tab=in_dim,
                               rng=rng, proj_dim=d_img, botania=botania,
                               adapter_noise_variance=0.0)
    elif "tab_encoder.reduce.weight" in state:
        d_img = state["img_encoder.lin1.weight"].shape[1]
        d_tab = state["tab_encoder.reduce.weight"].shape[1]
        model_dim = state["tab_encoder.reduce.weight"].shape[0]
        proj = state["tab_encoder.project.weight"].shape[0]
        model = AlignmentModel(
            "attention", d_img=d_img, d_tab=d_tab, rng=rng, proj_dim=proj,
            mlp_img_hidden=state["img_encoder.lin1.weight"].shape[0],
            attn_model_dim=model_dim,
            attn_heads=4 if model_dim % 4 == 0 else 1)
    else:
        d_img = state["img_encoder.lin1.weight"].shape[1]
        d_tab = state["tab_encoder.lin1.weight"].shape[1]
        proj = state["tab_encoder.lin2.weight"].shape[0]
        model = AlignmentModel(
            "mlp", d_img=d_img, d_tab=d_tab, rng=rng, proj_dim=proj,
            mlp_img_hidden=state["img_encoder.lin1.weight"].shape[0],
            mlp_tab_hidden=state["tab_encoder.lin1.weight"].shape[0])
    for p in model.params():
        p.value = np.asarray(state[p.name], dtype=np.float64).copy()
    return model


def botania_from_state(state: dict[str, np.ndarray]) -> BotaniaMLP:
    in_dim, hidden = state["botania.lin1.weight"].shape[::-1]
    embed = state["botania.lin2.weight"].shape[0]
    n_classes = state["botania.head.weight"].shape[0]
    model = BotaniaMLP(in_dim, hidden, embed, n_classes, gen=None)
    for p in model.params():
        p.value = np.asarray(state[p.name], dtype=np.float64).copy()
    return model


def botasp_from_state(state: dict[str, np.ndarray]) -> BotaSPModel:
    in_dim = state["botasp.proj.weight"].shape[1]
    proj_dim = state["botasp.proj.weight"].shape[0]
    hidden = state["botasp.hidden.weight"].shape[0]
    n_species = state["botasp.head.weight"].shape[0]
    model = BotaSPModel(in_dim, n_species, proj_dim, hidden, gen=None)
    for p in model.params():
        p.value = np.asarray(state[p.name], dtype=np.float64).copy()
    return model
