"""Training loop: batch-of-one steps with pose-variant augmentation,
AdamW + one-cycle, NaN aborts, checkpoints, and a loss trace. Also the
finite-difference gradient check that validates the manual reverse mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import InputError, NumericalError
from .augment import PairBatch, TrainingVariant, augment_pair, draw_channel_mask
from .losses import loss_dense, loss_sparse
from .optim import AdamW, one_cycle_lr
from .stack import PostProcessor, bottleneck_specs


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    lr_max: float = 1.25e-3
    weight_decay: float = 1e-3
    pct_start: float = 0.3
    batch_size: int = 1
    dropout_rate: float = 0.2
    perturb_std: float = 1.0
    temperature: float = 0.04
    temperature_c: float = 0.07
    weight_original: float = 1.0
    weight_double: float = 1.0
    weight_single: float = 1.0
    weight_self: float = 0.25
    augment: bool = True
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        if self.steps <= 0:
            raise InputError("steps must be positive")
        if self.batch_size != 1:
            raise InputError("only batch size 1 is supported")
        if not 0.0 < self.pct_start < 1.0:
            raise InputError(f"pct_start must be in (0, 1), got {self.pct_start}")
        if self.lr_max <= 0 or self.temperature <= 0 or self.temperature_c <= 0:
            raise InputError("rates and temperatures must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InputError("dropout rate must be in [0, 1)")
        if self.perturb_std < 0 or self.weight_decay < 0:
            raise InputError("perturb_std and weight_decay must be non-negative")

    def variant_weights(self) -> dict[str, float]:
        return {"original": self.weight_original, "double": self.weight_double,
                "single": self.weight_single, "self": self.weight_self}


@dataclass(frozen=True)
class TraceRow:
    step: int
    lr: float
    loss_sparse: float
    loss_dense: float
    total: float


def write_trace(path: str | Path, trace: Sequence[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss_sparse", "loss_dense", "total"])
        for row in trace:
            # repr of a Python float round-trips; coerce first so numpy
            # scalars cannot leak their repr into the CSV
            writer.writerow([row.step, repr(float(row.lr)),
                             repr(float(row.loss_sparse)),
                             repr(float(row.loss_dense)),
                             repr(float(row.total))])


def _original_variant(batch: PairBatch, weight: float) -> list[TrainingVariant]:
    mut = batch.mutual_indices()
    if mut.size == 0:
        return []
    return [TrainingVariant("original", weight, batch.source, batch.target,
                            batch.kps_source[mut], batch.kps_target[mut])]


def step_variants(batch: PairBatch, cfg: TrainConfig) -> list[TrainingVariant]:
    if cfg.augment:
        return augment_pair(batch, cfg.variant_weights())
    return _original_variant(batch, cfg.weight_original)


def draw_step_noise(variants: Sequence[TrainingVariant], cfg: TrainConfig,
                    rng: np.random.Generator) -> list:
    """One (source mask, target mask, gt perturbation) triple per variant,
    drawn up front so a step is a pure function of params given the noise."""
    noise = []
    for v in variants:
        ms = draw_channel_mask(v.source.channels, cfg.dropout_rate, rng)
        mt = draw_channel_mask(v.target.channels, cfg.dropout_rate, rng)
        n = v.kps_source.shape[0]
        if cfg.perturb_std > 0:
            eps = rng.normal(0.0, cfg.perturb_std, size=(n, 2))
        else:
            eps = np.zeros((n, 2), dtype=np.float64)
        noise.append((ms, mt, eps))
    return noise


def evaluate_step(proc: PostProcessor, variants: Sequence[TrainingVariant],
                  cfg: TrainConfig, noise: Sequence, with_grads: bool = True):
    """Weighted sparse + dense losses over all variants; gradients accumulate
    into proc.grads when requested. Returns (loss_sparse, loss_dense)."""
    total_sparse = 0.0
    total_dense = 0.0
    for v, (mask_s, mask_t, eps) in zip(variants, noise):
        xs = np.asarray(v.source.data, dtype=np.float64) * mask_s[None, None, :]
        xt = np.asarray(v.target.data, dtype=np.float64) * mask_t[None, None, :]
        fs, cache_s = proc.forward(xs)
        ft, cache_t = proc.forward(xt)
        n = v.kps_source.shape[0]
        d_fs = np.zeros_like(fs)
        d_ft = np.zeros_like(ft)
        if n >= 2:
            ls, g_s, g_t = loss_sparse(fs, ft, v.kps_source, v.kps_target,
                                       cfg.temperature_c)
            total_sparse += v.weight * ls
            d_fs += g_s
            d_ft += g_t
        ld, g_s, g_t = loss_dense(fs, ft, v.kps_source, v.kps_target,
                                  cfg.temperature, eps=eps)
        total_dense += v.weight * ld
        d_fs += g_s
        d_ft += g_t
        if with_grads:
            proc.backward(cache_s, v.weight * d_fs)
            proc.backward(cache_t, v.weight * d_ft)
    return total_sparse, total_dense


def train(pairs: Sequence[PairBatch], cfg: TrainConfig,
          proc: PostProcessor | None = None,
          checkpoint_dir: str | Path | None = None):
    """Run cfg.steps optimization steps over the pair list.

    Pairs are visited in a freshly shuffled order each epoch. Returns the
    trained post-processor and the per-step trace. Aborts on a non-finite
    loss, naming the step and pair.
    """
    if not pairs:
        raise InputError("no training pairs")
    if proc is None:
        channels = pairs[0].source.channels
        proc = PostProcessor.build(bottleneck_specs(channels), seed=cfg.seed)
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    opt = AdamW(weight_decay=cfg.weight_decay)
    trace: list[TraceRow] = []
    order: list[int] = []
    for step in range(cfg.steps):
        if not order:
            order = [int(i) for i in rng.permutation(len(pairs))]
        pair = pairs[order.pop(0)]
        variants = step_variants(pair, cfg)
        noise = draw_step_noise(variants, cfg, rng)
        proc.zero_grads()
        ls, ld = evaluate_step(proc, variants, cfg, noise, with_grads=True)
        total = ls + ld
        if not np.isfinite(total):
            raise NumericalError(
                f"non-finite loss at step {step} on pair {pair.src_id!r}->{pair.tgt_id!r}")
        lr = one_cycle_lr(step, cfg.steps, cfg.lr_max, cfg.pct_start)
        opt.update(proc.params, proc.grads, lr)
        trace.append(TraceRow(step=step, lr=lr, loss_sparse=ls, loss_dense=ld,
                              total=total))
        if (cfg.checkpoint_every and checkpoint_dir
                and (step + 1) % cfg.checkpoint_every == 0):
            from .checkpoint import save_checkpoint
            path = Path(checkpoint_dir) / f"step_{step + 1:06d}.ckpt"
            save_checkpoint(proc, path)
    return proc, trace


def finite_diff_check(proc: PostProcessor, batch: PairBatch, cfg: TrainConfig,
                      h: float = 1e-5, n_samples: int = 200, seed: int = 0) -> float:
    """Central-difference check of the analytic parameter gradient.

    Noise (dropout masks, GT perturbations) is frozen once so both loss
    evaluations per parameter see the same function. Returns the max
    relative error over >= min(n_samples, P) sampled parameters with
    denominator max(|analytic|, |numeric|, 1e-8).
    """
    variants = step_variants(batch, cfg)
    if not variants:
        raise InputError("batch yields no usable variants")
    rng = np.random.Generator(np.random.Philox(seed))
    noise = draw_step_noise(variants, cfg, rng)
    proc.zero_grads()
    evaluate_step(proc, variants, cfg, noise, with_grads=True)
    analytic = proc.grads.copy()

    def loss_at() -> float:
        ls, ld = evaluate_step(proc, variants, cfg, noise, with_grads=False)
        return ls + ld

    count = min(n_samples, proc.params.size)
    idx = rng.choice(proc.params.size, size=count, replace=False)
    worst = 0.0
    for i in idx:
        orig = proc.params[i]
        proc.params[i] = orig + h
        hi = loss_at()
        proc.params[i] = orig - h
        lo = loss_at()
        proc.params[i] = orig
        numeric = (hi - lo) / (2.0 * h)
        denom = max(abs(analytic[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
