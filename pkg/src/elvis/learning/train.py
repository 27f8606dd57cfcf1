"""End-to-end training loop."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..descriptors import RawDescriptorSet, select_top_m
from ..model import Ablation, ModelParams
from ..transport import NumericError, OtConfig
from . import autodiff
from .checkpoint import save_model
from .loss import warped_bce
from .optim import OptimState, adamw_step
from .sampling import Batch, mine_pairs, sample_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    dim: int = 128
    lam: float = 0.1
    iterations: int = 10
    batch_size: int = 200  # triplets, i.e. 2 * batch_size pairs per step
    m_range: tuple[int, int] = (100, 400)
    lr: float = 5e-4
    epochs: int = 10
    warmup_fraction: float = 0.1
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    tau: float = 1.0  # temperature of sigmoid(score / tau) when g is ablated
    hard_pool: int = 10
    ln_eps: float = 1e-5
    seed: int = 0
    ablation: Ablation = field(default_factory=Ablation)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        lo, hi = self.m_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad descriptor count range {self.m_range}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    @property
    def ot(self) -> OtConfig:
        return OtConfig(self.lam, self.iterations, log_domain=True)


@dataclass
class TrainResult:
    params: ModelParams
    losses: list[tuple[int, float, float]]  # (step, lr, loss)
    epoch_losses: list[float]


def batch_loss_and_grads(
    model: ModelParams,
    batch: Batch,
    images: Mapping[str, RawDescriptorSet],
    cfg: TrainConfig,
):
    """Mean warped-BCE over the batch and its gradient w.r.t. all parameters."""
    ot = cfg.ot
    groups: dict[tuple[int, int], list[int]] = {}
    selected = {}
    for p in batch.pairs:
        for i in (p.query_id, p.candidate_id):
            if i not in selected:
                selected[i] = select_top_m(images[i], batch.m).descriptors
    for idx, p in enumerate(batch.pairs):
        key = (selected[p.query_id].shape[1], selected[p.candidate_id].shape[1])
        groups.setdefault(key, []).append(idx)

    total = len(batch.pairs)
    grads = model.zeros_like()
    acc = grads.named_tensors()
    losses = np.empty(total)
    for idx in groups.values():
        q = np.stack([selected[batch.pairs[i].query_id] for i in idx])
        x = np.stack([selected[batch.pairs[i].candidate_id] for i in idx])
        labels = np.array([batch.pairs[i].label for i in idx])
        trace = autodiff.forward(model, ot, q, x)
        loss, d_score, g_grads = warped_bce(trace.scores, labels, model.g, cfg.tau)
        losses[idx] = loss
        part = autodiff.backward(trace, d_score / total)
        for name, arr in part.named_tensors(include_warp=False).items():
            acc[name] += arr
        if g_grads is not None:
            for name, arr in g_grads.tensors().items():
                acc[f"g.{name}"] += arr / total
    return float(losses.mean()), losses, grads


def _dump_nan(out_dir, step, batch, losses):
    bad = [
        {"query": p.query_id, "candidate": p.candidate_id, "label": p.label, "loss": repr(l)}
        for p, l in zip(batch.pairs, losses)
        if not np.isfinite(l)
    ]
    if out_dir is not None:
        with open(Path(out_dir) / "nan_dump.json", "w") as fh:
            json.dump({"step": step, "m": batch.m, "pairs": bad}, fh, indent=1)
    return bad


def train(
    images: Mapping[str, RawDescriptorSet],
    labels: Mapping[str, object],
    rankings: Mapping[str, Sequence[str]],
    cfg: TrainConfig,
    out_dir=None,
    init: ModelParams | None = None,
) -> TrainResult:
    """Train on the images listed in ``labels`` (image id -> instance id).

    ``rankings`` supplies global-descriptor shortlists for hard-negative
    mining. With ``out_dir`` set, a checkpoint is written after every epoch
    together with ``loss.csv``.
    """
    rng = np.random.default_rng(cfg.seed)
    in_dim = next(iter(images.values())).dim
    score_scale = float(sum(cfg.m_range))  # rough size of a pair score
    model = init.copy() if init is not None else ModelParams.init(
        in_dim, cfg.dim, rng, cfg.ablation, score_scale=score_scale, ln_eps=cfg.ln_eps
    )
    anchors = sorted(labels)
    pairs_per_step = 2 * cfg.batch_size
    steps_per_epoch = max(1, (2 * len(anchors)) // pairs_per_step)
    state = OptimState.for_run(
        steps_per_epoch * cfg.epochs,
        lr_peak=cfg.lr,
        warmup_fraction=cfg.warmup_fraction,
        weight_decay=cfg.weight_decay,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.adam_eps,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    params = model.named_tensors()
    history: list[tuple[int, float, float]] = []
    epoch_losses = []
    for epoch in range(1, cfg.epochs + 1):
        pool = mine_pairs(labels, rankings, rng, cfg.hard_pool, anchors)
        running = []
        for _ in range(steps_per_epoch):
            batch = sample_batch(pool, min(pairs_per_step, 2 * (len(pool) // 2)), rng, cfg.m_range)
            loss, per_pair, grads = batch_loss_and_grads(model, batch, images, cfg)
            if not np.isfinite(loss):
                bad = _dump_nan(out_dir, state.step + 1, batch, per_pair)
                raise NumericError(f"non-finite loss at step {state.step + 1}: {bad[:3]}")
            lr = adamw_step(params, grads.named_tensors(), state)
            history.append((state.step, lr, loss))
            running.append(loss)
        epoch_losses.append(float(np.mean(running)))
        log.info("epoch %d mean loss %.5f", epoch, epoch_losses[-1])
        if out_dir is not None:
            save_model(out_dir / f"checkpoint_epoch{epoch:03d}.elvc", model)
            write_loss_csv(out_dir / "loss.csv", history)
    if out_dir is not None:
        save_model(out_dir / "model.elvc", model)
    return TrainResult(model, history, epoch_losses)


def write_loss_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "lr", "loss"])
        for step, lr, loss in history:
            w.writerow([step, repr(lr), repr(loss)])
