"""Training loop and displacement-error metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .encoding import EncoderConfig
from .model import VelocityNet


@dataclass(frozen=True)
class TrainReport:
    epoch_losses: tuple  # mean train MSE per epoch
    val_losses: tuple    # val MSE after each epoch
    ade: float           # mean displacement error on the validation set
    fde: float


def evaluate_ade_fde(pred, truth, dt: float):
    """Displacement errors between two velocity profiles.

    Positions follow the per-step advance convention: s_i = sum_{j<=i} v_j*dt.
    """
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError(f"profile shapes differ: {p.shape} vs {t.shape}")
    err = np.abs(np.cumsum(p) * dt - np.cumsum(t) * dt)
    return float(err.mean()), float(err[-1])


def _mse(model: VelocityNet, items) -> float:
    if not items:
        raise ValueError("empty dataset")
    model.eval()
    total = 0.0
    with torch.no_grad():
        for ex in items:
            pred = model(ex.matrices, ex.target_index)
            target = torch.as_tensor(ex.labels, dtype=pred.dtype)
            total += float(torch.mean((pred - target) ** 2))
    return total / len(items)


def dataset_ade_fde(model: VelocityNet, items, dt: float):
    if not items:
        raise ValueError("empty dataset")
    ades, fdes = [], []
    model.eval()
    with torch.no_grad():
        for ex in items:
            pred = model(ex.matrices, ex.target_index).numpy()
            a, f = evaluate_ade_fde(pred, ex.labels, dt)
            ades.append(a)
            fdes.append(f)
    return float(np.mean(ades)), float(np.mean(fdes))


def train(train_items, val_items, cfg: EncoderConfig, *, epochs: int = 50,
          seed: int = 0, lr: float = 1e-3, batch_size: int = 128,
          lr_decay: float = 0.9, hidden: int = 64):
    """Fit a VelocityNet; returns (model, TrainReport).

    Scenes have ragged polyline sets, so batches accumulate per-scene losses
    before one optimizer step rather than stacking tensors.
    """
    if not train_items:
        raise ValueError("empty dataset")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    torch.manual_seed(seed)
    model = VelocityNet(cfg, hidden=hidden)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=lr_decay)
    order_rng = np.random.default_rng(seed)

    epoch_losses = []
    val_losses = []
    for _ in range(epochs):
        model.train()
        order = order_rng.permutation(len(train_items))
        running = 0.0
        for start in range(0, order.size, batch_size):
            idx = order[start:start + batch_size]
            opt.zero_grad()
            loss = torch.zeros((), dtype=torch.float32)
            for i in idx:
                ex = train_items[i]
                pred = model(ex.matrices, ex.target_index)
                target = torch.as_tensor(ex.labels, dtype=pred.dtype)
                loss = loss + torch.mean((pred - target) ** 2)
            loss = loss / idx.size
            loss.backward()
            opt.step()
            running += float(loss.detach()) * idx.size
        sched.step()
        epoch_losses.append(running / order.size)
        val_losses.append(_mse(model, val_items) if val_items else epoch_losses[-1])

    score_items = val_items if val_items else train_items
    ade, fde = dataset_ade_fde(model, score_items, cfg.dt)
    return model, TrainReport(epoch_losses=tuple(epoch_losses),
                              val_losses=tuple(val_losses), ade=ade, fde=fde)
