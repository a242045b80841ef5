"""Training, contrastive unlearning, and the reference baselines.

The unlearning loop walks the samples to forget in seeded epoch
permutations. For each unlearning batch it repeats a fixed number of
times: draw a fresh remaining batch, build contrast sets, take one
gradient step on the combined objective (unlearning term plus
cross-entropy on the remaining batch). After each pass the termination
condition for the task kind is evaluated:

    class task:  accuracy on the unlearning class's test view has
                 dropped to chance (1 / num_classes) or below;
    sample task: accuracy on the unlearning evaluation view is at or
                 below accuracy on the test evaluation view.

Baselines share the same termination checks so their records compare
like for like: retraining from scratch on the remaining data, plain
fine-tuning on the remaining data, and gradient ascent on the
unlearning data (with a divergence guard).
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    TAG_REMAIN_SAMPLER,
    TAG_TRAIN_BATCHES,
    TAG_UNLEARN_BATCHES,
    Dataset,
    UnlearnTask,
    batches,
    sample_remaining,
)
from .errors import (
    DivergenceError,
    NonFiniteError,
    NoValidAnchorError,
    UnlearnableConfigurationError,
    ValidationError,
)
from .evaluation import accuracy
from .losses import (
    LossConfig,
    build_contrast_sets,
    class_unlearn_loss,
    combined_loss,
    cross_entropy_loss,
    sample_unlearn_loss,
)
from .model import (
    ModelArchitecture,
    ModelParameters,
    encode,
    forward,
    head_logits,
    init_parameters,
)
from .tensor import GradTape, as_tensor


@dataclass(frozen=True)
class EngineConfig:
    """Optimization settings shared by training and unlearning runs.

    remaining_resamples is how many fresh remaining batches each
    unlearning batch is contrasted against per pass (capped at 4; more
    buys little and slows the pass). divergence_factor scales the
    gradient-ascent guard: the run halts once mean cross-entropy on the
    unlearning evaluation view exceeds factor * ln(num_classes).
    """

    batch_size: int = 64
    remaining_resamples: int = 2
    learning_rate: float = 0.05
    max_epochs: int = 60
    max_unlearn_epochs: int = 50
    termination_every: int = 1
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    divergence_factor: float = 10.0
    anchor_resample_limit: int = 8

    def __post_init__(self):
        problems = []
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2")
        if not 1 <= self.remaining_resamples <= 4:
            problems.append("remaining_resamples must lie in [1, 4]")
        if not self.learning_rate > 0:
            problems.append("learning_rate must be positive")
        if self.max_epochs < 0 or self.max_unlearn_epochs < 0:
            problems.append("epoch caps must be >= 0")
        if self.termination_every < 1:
            problems.append("termination_every must be >= 1")
        if not self.divergence_factor > 0:
            problems.append("divergence_factor must be positive")
        if self.anchor_resample_limit < 1:
            problems.append("anchor_resample_limit must be >= 1")
        if problems:
            raise ValidationError("invalid engine config: " + "; ".join(problems), problems)

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "remaining_resamples": self.remaining_resamples,
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "max_unlearn_epochs": self.max_unlearn_epochs,
            "termination_every": self.termination_every,
            "seed": self.seed,
            "loss": {
                "temperature": self.loss.temperature,
                "unlearn_weight": self.loss.unlearn_weight,
                "ce_weight": self.loss.ce_weight,
                "variant": self.loss.variant,
            },
            "divergence_factor": self.divergence_factor,
            "anchor_resample_limit": self.anchor_resample_limit,
        }


@dataclass
class RunRecord:
    """What one run did: per-epoch metric rows and how it stopped.

    termination_reason is "condition-met", "epoch-cap", or "error";
    termination_detail says which error when the reason is "error".
    """

    method: str
    config: dict
    rows: list[dict] = field(default_factory=list)
    duration_seconds: float = 0.0
    termination_reason: str = "epoch-cap"
    termination_detail: str | None = None
    gradient_steps: int = 0
    batches_processed: int = 0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "config": self.config,
            "rows": self.rows,
            "duration_seconds": self.duration_seconds,
            "termination_reason": self.termination_reason,
            "termination_detail": self.termination_detail,
            "gradient_steps": self.gradient_steps,
            "batches_processed": self.batches_processed,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def check_termination_class(
    params: ModelParameters, eval_view: Dataset, num_classes: int
) -> bool:
    """True once unlearning-class accuracy is at or below chance."""
    return accuracy(params, eval_view) <= 1.0 / num_classes


def check_termination_sample(
    params: ModelParameters, unlearn_eval: Dataset, test_eval: Dataset
) -> bool:
    """True once unlearning accuracy is at or below test accuracy."""
    return accuracy(params, unlearn_eval) <= accuracy(params, test_eval)


def _termination_metrics(params: ModelParameters, task: UnlearnTask) -> tuple[bool, dict]:
    if task.kind == "class":
        acc = accuracy(params, task.eval_unlearn)
        threshold = 1.0 / task.train.num_classes
        return acc <= threshold, {
            "unlearn_test_accuracy": acc,
            "chance_level": threshold,
        }
    acc_u = accuracy(params, task.eval_unlearn)
    acc_t = accuracy(params, task.eval_test)
    return acc_u <= acc_t, {
        "unlearn_eval_accuracy": acc_u,
        "test_eval_accuracy": acc_t,
    }


def _sgd_step(
    params: ModelParameters, grads: list, lr: float, sign: float = -1.0
) -> ModelParameters:
    return params.replace(
        [p.data + sign * lr * g.data for p, g in zip(params.as_list(), grads)]
    )


def _mean_ce(params: ModelParameters, view: Dataset) -> float:
    return cross_entropy_loss(forward(params, view.features), view.labels).item()


def _check_compat(params: ModelParameters, data: Dataset) -> None:
    problems = []
    if params.arch.input_dim != data.num_features:
        problems.append(
            f"model input_dim {params.arch.input_dim} != feature width {data.num_features}"
        )
    if params.arch.num_classes != data.num_classes:
        problems.append(
            f"model num_classes {params.arch.num_classes} != dataset classes {data.num_classes}"
        )
    if problems:
        raise ValidationError("model does not fit the data: " + "; ".join(problems), problems)


def train(
    arch: ModelArchitecture, data: Dataset, cfg: EngineConfig, method: str = "train"
) -> tuple[ModelParameters, RunRecord]:
    """Train a fresh model with SGD on cross-entropy.

    Deterministic in the seed: initialization and every epoch's batch
    order derive from it, so two calls with equal arguments produce
    bit-identical parameters.
    """
    params = init_parameters(arch, cfg.seed)
    _check_compat(params, data)
    record = RunRecord(method=method, config=cfg.to_dict())
    start = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        losses = []
        for b_index, batch in enumerate(
            batches(data, cfg.batch_size, [cfg.seed, TAG_TRAIN_BATCHES, epoch])
        ):
            try:
                with GradTape() as tape:
                    loss = cross_entropy_loss(forward(params, batch.features), batch.labels)
                grads = tape.gradient(loss, params.as_list())
            except NonFiniteError as exc:
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {b_index}: {exc}",
                    epoch=epoch,
                    batch=b_index,
                ) from exc
            params = _sgd_step(params, grads, cfg.learning_rate)
            losses.append(loss.item())
            record.gradient_steps += 1
            record.batches_processed += 1
        record.rows.append(
            {
                "kind": "pass",
                "epoch": epoch,
                "mean_ce": float(np.mean(losses)) if losses else 0.0,
                "train_accuracy": accuracy(params, data),
            }
        )
    record.duration_seconds = time.perf_counter() - start
    record.termination_reason = "epoch-cap"
    return params, record


def retrain(
    arch: ModelArchitecture, task: UnlearnTask, cfg: EngineConfig
) -> tuple[ModelParameters, RunRecord]:
    """Train from scratch on the remaining data only (the gold standard)."""
    return train(arch, task.remain_train, cfg, method="retrain")


def _unlearn_loop(
    params: ModelParameters,
    task: UnlearnTask,
    cfg: EngineConfig,
    method: str,
    run_pass,
    extra_halt=None,
) -> tuple[ModelParameters, RunRecord]:
    """Shared skeleton: evaluate, maybe stop, otherwise run one pass.

    run_pass(params, epoch, record) -> params executes one pass over the
    relevant data. extra_halt(params) -> str | None may force an error
    stop (the gradient-ascent divergence guard); it is consulted at the
    same cadence as the termination condition.
    """
    record = RunRecord(method=method, config=cfg.to_dict())
    start = time.perf_counter()
    if cfg.max_unlearn_epochs == 0:
        record.duration_seconds = time.perf_counter() - start
        record.termination_reason = "epoch-cap"
        return params, record
    for epoch in range(cfg.max_unlearn_epochs + 1):
        if epoch % cfg.termination_every == 0:
            met, metrics = _termination_metrics(params, task)
            row = {"kind": "evaluation", "epoch": epoch, "condition_met": bool(met)}
            row.update(metrics)
            detail = None if met or extra_halt is None else extra_halt(params)
            if detail is not None:
                row["halt"] = detail
            record.rows.append(row)
            if met:
                record.termination_reason = "condition-met"
                break
            if detail is not None:
                record.termination_reason = "error"
                record.termination_detail = detail
                break
        if epoch == cfg.max_unlearn_epochs:
            record.termination_reason = "epoch-cap"
            break
        params = run_pass(params, epoch, record)
        if record.termination_detail is not None:
            record.termination_reason = "error"
            break
    record.duration_seconds = time.perf_counter() - start
    return params, record


def unlearn_contrastive(
    params: ModelParameters, task: UnlearnTask, cfg: EngineConfig
) -> tuple[ModelParameters, RunRecord]:
    """Contrastive unlearning as described in the module docstring.

    A remaining batch that leaves every anchor without its required
    contrast sets is redrawn up to anchor_resample_limit times; if a
    whole pass finishes without a single usable anchor the task is
    reported unlearnable.
    """
    _check_compat(params, task.train)
    if cfg.loss.variant != task.kind:
        raise ValidationError(
            f"loss variant {cfg.loss.variant!r} does not match task kind {task.kind!r}"
        )
    unlearn_term = sample_unlearn_loss if task.kind == "sample" else class_unlearn_loss
    remain_rng = np.random.default_rng([cfg.seed, TAG_REMAIN_SAMPLER])

    def run_pass(params: ModelParameters, epoch: int, record: RunRecord) -> ModelParameters:
        ul_losses, ce_losses, skipped = [], [], 0
        for b_index, ub in enumerate(
            batches(
                task.unlearn_train,
                cfg.batch_size,
                [cfg.seed, TAG_UNLEARN_BATCHES, epoch],
                source="unlearn",
            )
        ):
            record.batches_processed += 1
            for _ in range(cfg.remaining_resamples):
                stepped = False
                for _ in range(cfg.anchor_resample_limit):
                    rb = sample_remaining(task, cfg.batch_size, remain_rng)
                    try:
                        with GradTape() as tape:
                            z_r = encode(params, rb.features)
                            if cfg.loss.unlearn_weight > 0:
                                z_u = encode(params, ub.features)
                                sets = build_contrast_sets(ub.labels, z_u, rb.labels, z_r)
                                ul = unlearn_term(sets, cfg.loss.temperature)
                            else:
                                ul = as_tensor(0.0)
                            if cfg.loss.ce_weight > 0:
                                ce = cross_entropy_loss(head_logits(params, z_r), rb.labels)
                            else:
                                ce = as_tensor(0.0)
                            total = combined_loss(ul, ce, cfg.loss)
                        grads = tape.gradient(total, params.as_list())
                    except NoValidAnchorError:
                        continue
                    except NonFiniteError as exc:
                        raise DivergenceError(
                            f"non-finite loss at epoch {epoch}, batch {b_index}: {exc}",
                            epoch=epoch,
                            batch=b_index,
                        ) from exc
                    params = _sgd_step(params, grads, cfg.learning_rate)
                    record.gradient_steps += 1
                    ul_losses.append(ul.item())
                    ce_losses.append(ce.item())
                    stepped = True
                    break
                if not stepped:
                    skipped += 1
        if cfg.loss.unlearn_weight > 0 and not ul_losses:
            raise UnlearnableConfigurationError(
                f"epoch {epoch}: no remaining batch yielded a usable anchor"
            )
        record.rows.append(
            {
                "kind": "pass",
                "epoch": epoch,
                "mean_unlearn_loss": float(np.mean(ul_losses)) if ul_losses else 0.0,
                "mean_ce": float(np.mean(ce_losses)) if ce_losses else 0.0,
                "skipped_steps": skipped,
            }
        )
        return params

    return _unlearn_loop(params, task, cfg, "contrastive", run_pass)


def unlearn_finetune(
    params: ModelParameters, task: UnlearnTask, cfg: EngineConfig
) -> tuple[ModelParameters, RunRecord]:
    """Keep training on the remaining data and hope the rest fades.

    Uses the same termination checks and epoch cap as contrastive
    unlearning so the records are comparable.
    """
    _check_compat(params, task.train)

    def run_pass(params: ModelParameters, epoch: int, record: RunRecord) -> ModelParameters:
        losses = []
        for b_index, batch in enumerate(
            batches(
                task.remain_train,
                cfg.batch_size,
                [cfg.seed, TAG_TRAIN_BATCHES, epoch],
                source="remain",
            )
        ):
            try:
                with GradTape() as tape:
                    loss = cross_entropy_loss(forward(params, batch.features), batch.labels)
                grads = tape.gradient(loss, params.as_list())
            except NonFiniteError as exc:
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {b_index}: {exc}",
                    epoch=epoch,
                    batch=b_index,
                ) from exc
            params = _sgd_step(params, grads, cfg.learning_rate)
            losses.append(loss.item())
            record.gradient_steps += 1
            record.batches_processed += 1
        record.rows.append(
            {
                "kind": "pass",
                "epoch": epoch,
                "mean_ce": float(np.mean(losses)) if losses else 0.0,
            }
        )
        return params

    return _unlearn_loop(params, task, cfg, "finetune", run_pass)


def unlearn_neggrad(
    params: ModelParameters, task: UnlearnTask, cfg: EngineConfig
) -> tuple[ModelParameters, RunRecord]:
    """Gradient ascent on the unlearning samples' cross-entropy.

    Ascent can run away, so a guard halts the run (reason "error") once
    mean cross-entropy on the unlearning evaluation view exceeds
    divergence_factor * ln(num_classes). A non-finite step is recorded
    the same way rather than raised: blowing up is this baseline's
    known failure mode, not a caller bug.
    """
    _check_compat(params, task.train)
    ce_cap = cfg.divergence_factor * float(np.log(task.train.num_classes))

    def extra_halt(params: ModelParameters) -> str | None:
        if _mean_ce(params, task.eval_unlearn) > ce_cap:
            return "divergence-guard"
        return None

    def run_pass(params: ModelParameters, epoch: int, record: RunRecord) -> ModelParameters:
        losses = []
        for batch in batches(
            task.unlearn_train,
            cfg.batch_size,
            [cfg.seed, TAG_UNLEARN_BATCHES, epoch],
            source="unlearn",
        ):
            try:
                with GradTape() as tape:
                    loss = cross_entropy_loss(forward(params, batch.features), batch.labels)
                grads = tape.gradient(loss, params.as_list())
                params = _sgd_step(params, grads, cfg.learning_rate, sign=+1.0)
            except NonFiniteError:
                record.termination_detail = "non-finite-loss"
                break
            losses.append(loss.item())
            record.gradient_steps += 1
            record.batches_processed += 1
        record.rows.append(
            {
                "kind": "pass",
                "epoch": epoch,
                "mean_ce": float(np.mean(losses)) if losses else 0.0,
            }
        )
        return params

    return _unlearn_loop(params, task, cfg, "neggrad", run_pass, extra_halt=extra_halt)
