"""Structured filter removal: importance scoring, surgery, and the one-shot /
cascade / trim-train pipelines.

Removing output filter j from layer i deletes its kernel slab and bias and
the matching input-channel slices of layer i+1, so both layers get cheaper.
One-shot trimming removes the lowest-importance filters from every layer at
once and fine-tunes; cascade trimming removes a random half from two adjacent
layers per stage, fine-tuning the whole network between stages, starting from
the deepest trimmable pair (the single-filter output layer is never trimmed).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .data import PatchSet
from .model import Layer, LayerSpec, NetworkModel, clone, param_count, save_model
from .ops import RngState
from .training import MODE_CASCADE, StageLog, TrainConfig, _train_stage

MODE_ONE_SHOT_INDEPENDENT = "one_shot_independent"
MODE_ONE_SHOT_GREEDY = "one_shot_greedy"
MODE_CASCADE_TRIM = "cascade"

# fine-tune epochs draw shuffles from stage keys offset far above training stages
FINETUNE_STAGE_BASE = 1000


@dataclass
class TrimPlan:
    rates: list[float]
    mode: str = MODE_ONE_SHOT_INDEPENDENT
    layers_per_stage: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (MODE_ONE_SHOT_INDEPENDENT, MODE_ONE_SHOT_GREEDY, MODE_CASCADE_TRIM):
            raise ValueError(f"unknown trim mode {self.mode!r}")
        if any(not (0 <= r < 1) for r in self.rates):
            raise ValueError(f"trim rates must lie in [0, 1), got {self.rates}")
        if self.rates and self.rates[-1] != 0:
            raise ValueError("the final layer's trim rate must be 0 (single output filter)")
        if self.layers_per_stage < 1:
            raise ValueError(f"layers_per_stage must be >= 1, got {self.layers_per_stage}")


def default_plan(depth: int, mode: str, rate: float = 0.5, seed: int = 0) -> TrimPlan:
    """Uniform-rate plan over all trimmable layers (last layer pinned to 0)."""
    return TrimPlan(rates=[rate] * (depth - 1) + [0.0], mode=mode, seed=seed)


@dataclass
class TrimStageLog:
    stage_index: int
    trimmed_layers: list[int]
    removed_filters: dict[int, list[int]]
    param_count_after: int
    finetune_losses: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stage_index": self.stage_index,
            "trimmed_layers": self.trimmed_layers,
            "removed_filters": {str(k): v for k, v in self.removed_filters.items()},
            "param_count_after": self.param_count_after,
            "finetune_losses": self.finetune_losses,
        }


def filter_importance(weights: np.ndarray) -> float:
    """Relative importance of one filter: the square sum of its weights."""
    if weights.size == 0:
        raise ValueError("empty weight set")
    return float(np.sum(weights.astype(np.float64) ** 2))


def importance_scores(
    net: NetworkModel,
    layer_index: int,
    mode: str = "independent",
    removed_input_channels=None,
) -> np.ndarray:
    """Per-filter importance for one layer.

    Independent mode scores the kernels as given. Greedy mode first drops the
    input-channel slices removed by trimming the previous layer, so a filter
    whose mass lives in removed channels scores lower.
    """
    if not 0 <= layer_index < net.depth:
        raise IndexError(f"layer index {layer_index} out of range for depth {net.depth}")
    if mode not in ("independent", "greedy"):
        raise ValueError(f"unknown scoring mode {mode!r}")
    w = net.layers[layer_index].weights
    if mode == "greedy" and removed_input_channels:
        keep = [c for c in range(w.shape[1]) if c not in set(removed_input_channels)]
        w = w[:, keep]
    return np.array([filter_importance(w[j]) for j in range(w.shape[0])])


def trim_filters(net: NetworkModel, layer_index: int, filter_indices) -> NetworkModel:
    """Remove the named output filters from a layer and the matching input
    slices from the next layer. Returns a new model; the input is untouched."""
    if not 0 <= layer_index < net.depth - 1:
        raise IndexError(f"layer {layer_index} not trimmable (depth {net.depth}; last layer untouchable)")
    indices = sorted(set(int(i) for i in filter_indices))
    out = clone(net)
    if not indices:
        return out
    layer = out.layers[layer_index]
    n = layer.spec.out_filters
    if indices[0] < 0 or indices[-1] >= n:
        raise IndexError(f"filter indices {indices} out of range for {n} filters")
    if len(indices) >= n:
        raise ValueError(f"cannot remove all {n} filters of layer {layer_index}")
    keep = [j for j in range(n) if j not in set(indices)]
    spec = layer.spec
    out.layers[layer_index] = Layer(
        LayerSpec(spec.kernel_size, spec.in_channels, len(keep), spec.pad, spec.activation),
        np.ascontiguousarray(layer.weights[keep]),
        np.ascontiguousarray(layer.bias[keep]),
    )
    nxt = out.layers[layer_index + 1]
    nspec = nxt.spec
    out.layers[layer_index + 1] = Layer(
        LayerSpec(nspec.kernel_size, len(keep), nspec.out_filters, nspec.pad, nspec.activation),
        np.ascontiguousarray(nxt.weights[:, keep]),
        nxt.bias.copy(),
    )
    return out.validate()


def _finetune(net, patches, cfg, stage_key, log_writer=None):
    if patches is None or cfg is None or len(patches) == 0:
        return net, StageLog(depth=net.depth)
    return _train_stage(net, patches, cfg, FINETUNE_STAGE_BASE + stage_key, log_writer)


def _write_stage_log(log: TrimStageLog, log_dir: str | None):
    if log_dir is None:
        return
    os.makedirs(log_dir, exist_ok=True)
    path = os.path.join(log_dir, f"trim_stage_{log.stage_index}.json")
    with open(path, "w") as fh:
        json.dump(log.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def one_shot_trim(
    net: NetworkModel,
    plan: TrimPlan,
    patches: PatchSet | None = None,
    cfg: TrainConfig | None = None,
    log_dir: str | None = None,
    checkpoint_stem: str | None = None,
):
    """Trim every layer at once by importance score, then fine-tune.

    Filter counts come from the original layer widths: floor(rate_i * n_i)
    lowest-scoring filters go, ties broken toward the lower filter index.
    """
    if plan.mode not in (MODE_ONE_SHOT_INDEPENDENT, MODE_ONE_SHOT_GREEDY):
        raise ValueError(f"one_shot_trim needs a one-shot plan, got mode {plan.mode!r}")
    if len(plan.rates) != net.depth:
        raise ValueError(f"plan has {len(plan.rates)} rates for depth {net.depth}")
    greedy = plan.mode == MODE_ONE_SHOT_GREEDY
    original = clone(net)
    current = clone(net)
    removed: dict[int, list[int]] = {}
    for i in range(net.depth - 1):
        count = math.floor(plan.rates[i] * original.layers[i].spec.out_filters)
        if count == 0:
            continue
        scores = importance_scores(
            current if greedy else original, i, "greedy" if greedy else "independent"
        )
        victims = sorted(np.argsort(scores, kind="stable")[:count].tolist())
        current = trim_filters(current, i, victims)
        removed[i] = victims
    current, ft = _finetune(current, patches, cfg, 0)
    log = TrimStageLog(
        stage_index=1,
        trimmed_layers=sorted(removed),
        removed_filters=removed,
        param_count_after=param_count(current),
        finetune_losses=ft.losses,
    )
    _write_stage_log(log, log_dir)
    if checkpoint_stem is not None:
        save_model(current, f"{checkpoint_stem}-trimS1.ctsr")
    return current, log


def cascade_trim_pairs(depth: int) -> list[tuple[int, int]]:
    """Stage-ordered trimmed layer pairs, deepest first (0-based indices)."""
    pairs = []
    hi = depth - 2
    while hi >= 1:
        pairs.append((hi - 1, hi))
        hi -= 2
    return pairs


def cascade_trim(
    net: NetworkModel,
    patches: PatchSet | None,
    cfg: TrainConfig | None,
    plan: TrimPlan,
    log_dir: str | None = None,
    checkpoint_stem: str | None = None,
):
    """Stagewise trimming: random half of two adjacent layers per stage,
    whole-network fine-tune to plateau between stages."""
    if plan.mode != MODE_CASCADE_TRIM:
        raise ValueError(f"cascade_trim needs a cascade plan, got mode {plan.mode!r}")
    if len(plan.rates) != net.depth:
        raise ValueError(f"plan has {len(plan.rates)} rates for depth {net.depth}")
    rng = RngState(plan.seed)
    current = clone(net)
    logs = []
    for stage, pair in enumerate(cascade_trim_pairs(net.depth)):
        removed: dict[int, list[int]] = {}
        for layer_index in pair:
            n = current.layers[layer_index].spec.out_filters
            count = math.floor(plan.rates[layer_index] * n)
            if count == 0:
                continue
            victims = sorted(rng.child(3, stage, layer_index).choice(n, size=count, replace=False).tolist())
            current = trim_filters(current, layer_index, victims)
            removed[layer_index] = victims
        current, ft = _finetune(current, patches, cfg, stage)
        log = TrimStageLog(
            stage_index=stage + 1,
            trimmed_layers=sorted(removed),
            removed_filters=removed,
            param_count_after=param_count(current),
            finetune_losses=ft.losses,
        )
        logs.append(log)
        _write_stage_log(log, log_dir)
        if checkpoint_stem is not None:
            save_model(current, f"{checkpoint_stem}-trimS{stage + 1}.ctsr")
    return current, logs


def trim_train(
    patches: PatchSet,
    cfg: TrainConfig,
    plan: TrimPlan | None = None,
    log_dir: str | None = None,
    checkpoint_stem: str | None = None,
    scale: int = 2,
):
    """Slim-first alternative: cascade-train the halved architecture
    (32-16-...-16-1 filters) from scratch to the target depth."""
    from .training import cascade_train

    if plan is not None and plan.mode != MODE_CASCADE_TRIM:
        raise ValueError(f"trim_train expects a cascade plan, got mode {plan.mode!r}")
    if cfg.mode != MODE_CASCADE:
        raise ValueError("trim_train requires cfg.mode=cascade")
    return cascade_train(
        patches,
        cfg,
        log_dir=log_dir,
        checkpoint_stem=checkpoint_stem,
        scale=scale,
        first_filters=32,
        mid_filters=16,
    )
