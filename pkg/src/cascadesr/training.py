"""Staged (cascade) and single-phase training loops.

Cascade training starts from the 3-layer base, trains until the per-epoch
loss improvement falls under the plateau threshold, inserts two fresh 3x3
layers before the last one, and repeats until the target depth. The learning
rate is one fixed constant for every step of every stage.

Seed discipline: every random draw is derived from the master seed through
namespaced child streams, so a run is reproducible byte-for-byte:
  (1, stage)        weight init (stage 0 = base/full build, else insertion)
  (2, stage, epoch) per-epoch shuffle order
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .data import PatchSet
from .model import (
    NetworkModel,
    StageRecord,
    build_base_network,
    build_network,
    insert_layers,
    save_model,
)

MODE_CASCADE = "cascade"
MODE_ONE_SHOT = "one_shot"


@dataclass
class TrainConfig:
    learning_rate: float = 0.0001
    plateau_threshold: float = 0.03
    insert_count: int = 2
    target_depth: int = 3
    batch_size: int = 64
    max_epochs_per_stage: int = 100
    seed: int = 0
    mode: str = MODE_CASCADE

    def __post_init__(self):
        if not (0 < self.plateau_threshold < 1):
            raise ValueError(f"plateau_threshold must be in (0, 1), got {self.plateau_threshold}")
        if self.target_depth < 3 or self.target_depth % 2 == 0:
            raise ValueError(f"target_depth must be odd and >= 3, got {self.target_depth}")
        # learning_rate 0 is allowed as an evaluation-only pass
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1 or self.max_epochs_per_stage < 0 or self.insert_count < 1:
            raise ValueError("batch_size >= 1, max_epochs_per_stage >= 0, insert_count >= 1 required")
        if self.mode not in (MODE_CASCADE, MODE_ONE_SHOT):
            raise ValueError(f"mode must be cascade or one_shot, got {self.mode!r}")


@dataclass
class StageLog:
    depth: int
    losses: list[float] = field(default_factory=list)
    terminated_by: str = "max_epochs"

    @property
    def epochs(self) -> int:
        return len(self.losses)


def plateau_reached(prev_loss: float, curr_loss: float, threshold: float) -> bool:
    """True when the relative loss drop is below threshold (or loss rose)."""
    if prev_loss <= 0:
        raise ValueError(f"prev_loss must be > 0, got {prev_loss}")
    return (prev_loss - curr_loss) / prev_loss < threshold


def _forward_tape(net: NetworkModel, x: np.ndarray):
    """Forward pass keeping pre-activations and unfolded columns per layer.

    Accumulates in the storage dtype (float32): the SGD path trades the
    public ops' 64-bit accumulation for speed; determinism is unaffected.
    """
    tape = []
    h = x
    for layer in net.layers:
        pre, cols = ops.conv2d_forward_cols(h, layer.weights, layer.bias, layer.spec.pad, acc64=False)
        post = np.maximum(pre, 0) if layer.spec.activation == "rectifier" else pre
        tape.append((h, cols, pre))
        h = post
    return h, tape


def _train_batch(net: NetworkModel, x: np.ndarray, y: np.ndarray, lr: float) -> float:
    pred, tape = _forward_tape(net, x)
    loss, grad = ops.mse_loss(pred, y)
    if lr == 0:
        return loss
    for index in reversed(range(len(net.layers))):
        layer = net.layers[index]
        inp, cols, pre = tape[index]
        if layer.spec.activation == "rectifier":
            grad = ops.relu_backward(pre, grad)
        grad, grad_w, grad_b = ops.conv2d_backward_from_cols(
            inp.shape, layer.weights, grad, layer.spec.pad, cols, need_grad_input=index > 0, acc64=False
        )
        ops.sgd_step([layer.weights, layer.bias], [grad_w, grad_b], lr)
    return loss


def run_epoch(
    net: NetworkModel, patches: PatchSet, cfg: TrainConfig, epoch: int = 0, stage: int = 0
):
    """One full pass over the patches in a seed-determined shuffled order.

    Returns (net, mean per-element training loss over the epoch). The epoch
    and stage indices select the shuffle sub-stream so that repeated runs
    reproduce exactly while successive epochs see different orders.
    """
    n = patches.lr.shape[0]
    order = ops.RngState(cfg.seed).child(2, stage, epoch).permutation(n)
    total = 0.0
    for start in range(0, n, cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        loss = _train_batch(net, patches.lr[idx], patches.hr[idx], cfg.learning_rate)
        total += loss * len(idx)
    return net, total / n


def _train_stage(net, patches, cfg, stage, log_writer=None):
    log = StageLog(depth=net.depth)
    for epoch in range(cfg.max_epochs_per_stage):
        t0 = time.perf_counter()
        net, loss = run_epoch(net, patches, cfg, epoch=epoch, stage=stage)
        seconds = time.perf_counter() - t0
        log.losses.append(loss)
        if log_writer is not None:
            log_writer.writerow([stage, net.depth, epoch, f"{loss:.8e}", f"{seconds:.3f}"])
        if epoch >= 1 and plateau_reached(log.losses[-2], loss, cfg.plateau_threshold):
            log.terminated_by = "plateau"
            break
    return net, log


class _TrainLogger:
    def __init__(self, log_dir):
        self.fh = None
        self.writer = None
        if log_dir is not None:
            os.makedirs(log_dir, exist_ok=True)
            self.fh = open(os.path.join(log_dir, "train_log.csv"), "a", newline="")
            self.writer = csv.writer(self.fh)
            if self.fh.tell() == 0:
                self.writer.writerow(["stage_index", "depth", "epoch", "mean_loss", "wall_seconds"])

    def close(self):
        if self.fh is not None:
            self.fh.close()


def _checkpoint(net, stem):
    if stem is not None:
        save_model(net, f"{stem}-d{net.depth}.ctsr")


def cascade_train(
    patches: PatchSet,
    cfg: TrainConfig,
    log_dir: str | None = None,
    checkpoint_stem: str | None = None,
    scale: int = 2,
    first_filters: int = 64,
    mid_filters: int = 32,
):
    """Grow from 3 layers to cfg.target_depth, training each stage to plateau.

    Returns (net, stage logs). Writes a per-stage CSV log and a model
    checkpoint at every stage boundary when the optional paths are given.
    """
    if cfg.mode != MODE_CASCADE:
        raise ValueError(f"cascade_train requires mode=cascade, got {cfg.mode!r}")
    rng = ops.RngState(cfg.seed)
    if first_filters == 64 and mid_filters == 32:
        net = build_base_network(rng.child(1, 0), scale=scale)
    else:
        net = build_network(3, rng.child(1, 0), scale=scale, first_filters=first_filters, mid_filters=mid_filters)
    logger = _TrainLogger(log_dir)
    logs = []
    try:
        stage = 0
        while True:
            net, log = _train_stage(net, patches, cfg, stage, logger.writer)
            logs.append(log)
            net.stage_history.append(
                StageRecord(net.depth, log.epochs, log.losses[-1] if log.losses else float("nan"))
            )
            _checkpoint(net, checkpoint_stem)
            if net.depth >= cfg.target_depth:
                break
            stage += 1
            net = insert_layers(net, rng.child(1, stage), how_many=cfg.insert_count)
    finally:
        logger.close()
    return net, logs


def one_shot_train(
    patches: PatchSet,
    cfg: TrainConfig,
    depth: int,
    log_dir: str | None = None,
    checkpoint_stem: str | None = None,
    scale: int = 2,
):
    """Control arm: build the full depth at once and train a single stage."""
    if cfg.mode != MODE_ONE_SHOT:
        raise ValueError(f"one_shot_train requires mode=one_shot, got {cfg.mode!r}")
    net = build_network(depth, ops.RngState(cfg.seed).child(1, 0), scale=scale)
    logger = _TrainLogger(log_dir)
    try:
        net, log = _train_stage(net, patches, cfg, 0, logger.writer)
    finally:
        logger.close()
    net.stage_history.append(
        StageRecord(net.depth, log.epochs, log.losses[-1] if log.losses else float("nan"))
    )
    _checkpoint(net, checkpoint_stem)
    return net, log
