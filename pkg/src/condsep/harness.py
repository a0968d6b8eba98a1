"""Experiment orchestration: training modes, schedules, checkpointing.

Five separation training modes share one loop:

    hct                one-hot condition sampled uniformly over all attributes
    completed          one-hot condition concatenated with the frozen
                       completion model's probability estimate (16-dim)
    completion_oracle  one-hot condition concatenated with the ground-truth
                       full attribute vector (16-dim)
    single:<attr>      one-hot condition restricted to a single attribute
    pit                unconditional, permutation-invariant loss

Conditions are re-sampled per epoch per mixture. The completion model's
parameters are never updated by separation training.
"""

from __future__ import annotations

import copy
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .completion import (
    CompletionModel,
    CompletionModelConfig,
    LogMelConfig,
    lr_at_epoch,
)
from .conditioning import (
    ATTRIBUTES,
    LAYOUT_VERSION,
    encode_full,
    sample_condition,
)
from .datagen import MixSpec, MixtureSample, dataset_stream
from .errors import ConfigurationError, LayoutVersionError, TrainingDiverged
from .separation import SeparationModel, SeparationModelConfig, hct_loss, pit_loss

MODES = ("hct", "completed", "completion_oracle", "single_condition", "pit")

_SINGLE_SHORTHAND = {
    "g": "gender",
    "e": "energy",
    "o": "order",
    "s": "spatial",
}


def parse_mode(mode: str) -> tuple[str, str | None]:
    """Normalize a mode string; returns (mode, attribute-or-None).

    Accepts "hct", "completed", "completion_oracle" / "completion-oracle",
    "pit", and "single:<attr>" where <attr> is a full attribute name or one
    of G/E/O/S.
    """
    m = mode.strip().lower().replace("-", "_")
    if m in ("hct", "completed", "completion_oracle", "pit"):
        return m, None
    if m.startswith("single:"):
        attr = m.split(":", 1)[1]
        attr = _SINGLE_SHORTHAND.get(attr, attr)
        if attr not in ATTRIBUTES:
            raise ConfigurationError(f"unknown single-condition attribute {attr!r}")
        return "single_condition", attr
    raise ConfigurationError(f"unknown training mode {mode!r}")


def condition_width_for_mode(mode: str) -> int:
    base, _ = parse_mode(mode)
    if base == "pit":
        return 0
    if base in ("completed", "completion_oracle"):
        return 16
    return 8


@dataclass
class ExperimentConfig:
    """Everything a separation training run needs, serializable to JSON."""

    mode: str = "hct"
    partition: str = "easy"
    scale: str = "desk"  # "paper" or "desk"
    epochs: int = 10
    batch_size: int = 6
    lr: float = 1e-3
    lr_halving_period: int = 20
    weight_decay: float = 0.0
    grad_clip_l2: float = 5.0
    seed: int = 0
    completion_ckpt: str | None = None
    n_train: int = 600
    n_val: int = 96
    n_test: int = 3000
    clip_len_samples: int = 40000
    select: str = "best"  # or "last" (the fixed-epoch evaluation behavior)
    sep_model: SeparationModelConfig = field(default_factory=SeparationModelConfig.desk)

    def __post_init__(self):
        base, _ = parse_mode(self.mode)
        width = condition_width_for_mode(self.mode)
        if self.sep_model.condition_width != width:
            raise ConfigurationError(
                f"mode {self.mode!r} requires condition_width {width}, "
                f"model is configured with {self.sep_model.condition_width}"
            )
        if base == "completed" and not self.completion_ckpt:
            raise ConfigurationError("mode 'completed' requires completion_ckpt")
        if self.partition not in ("easy", "hard"):
            raise ConfigurationError(f"unknown partition {self.partition!r}")

    @classmethod
    def paper(cls, mode: str, partition: str, seed: int = 0,
              completion_ckpt: str | None = None) -> "ExperimentConfig":
        return cls(
            mode=mode,
            partition=partition,
            scale="paper",
            epochs=150,
            n_train=20000,
            n_val=3000,
            n_test=3000,
            seed=seed,
            completion_ckpt=completion_ckpt,
            sep_model=SeparationModelConfig.paper(condition_width_for_mode(mode)),
        )

    @classmethod
    def desk(cls, mode: str, partition: str = "easy", seed: int = 0,
             completion_ckpt: str | None = None, **overrides) -> "ExperimentConfig":
        cfg = cls(
            mode=mode,
            partition=partition,
            scale="desk",
            epochs=10,
            n_train=600,
            n_val=96,
            n_test=200,
            clip_len_samples=16000,
            seed=seed,
            completion_ckpt=completion_ckpt,
            sep_model=SeparationModelConfig.desk(condition_width_for_mode(mode)),
        )
        return replace(cfg, **overrides) if overrides else cfg

    def allowed_attributes(self) -> tuple[str, ...]:
        base, attr = parse_mode(self.mode)
        if base == "single_condition":
            return (attr,)
        return ATTRIBUTES


def build_condition_input(
    mode: str,
    c: np.ndarray,
    sample: MixtureSample,
    target_index: int,
    completion_model: CompletionModel | None = None,
) -> np.ndarray:
    """Assemble the separator's condition input for one sample.

    hct / single_condition pass c through; completed concatenates the frozen
    completion estimate; completion_oracle concatenates the ground-truth full
    vector; pit yields a zero-width array.
    """
    base, _ = parse_mode(mode)
    if base == "pit":
        return np.zeros(0, dtype=np.float32)
    if base in ("hct", "single_condition"):
        return np.asarray(c, dtype=np.float32)
    if base == "completion_oracle":
        full = encode_full(sample.attributes[target_index])
        return np.concatenate([c, full]).astype(np.float32)
    if completion_model is None:
        raise ConfigurationError("mode 'completed' requires a completion model")
    from .completion import completion_forward

    estimate = completion_forward(completion_model, sample.mixture, c)
    return np.concatenate([c, estimate]).astype(np.float32)


def grad_clip(grads, max_l2: float = 5.0):
    """Rescale gradients so the global L2 norm is at most max_l2.

    Exactly max_l2 is left untouched. Non-finite gradients abort.
    """
    grads = list(grads)
    total_sq = 0.0
    for g in grads:
        s = float((g.detach() ** 2).sum()) if isinstance(g, torch.Tensor) else float(np.sum(g**2))
        if not math.isfinite(s):
            raise TrainingDiverged("non-finite gradient")
        total_sq += s
    norm = math.sqrt(total_sq)
    if norm > max_l2:
        scale = max_l2 / norm
        for g in grads:
            g *= scale
    return grads


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _to_plain(obj):
    """Dataclasses and tuples to JSON-ish nested dicts/lists for torch.save."""
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _to_plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def checkpoint_save(
    path,
    kind: str,
    model: torch.nn.Module,
    train_config=None,
    epoch: int = 0,
    optimizer: torch.optim.Optimizer | None = None,
    history: dict | None = None,
) -> Path:
    """Atomically write a checkpoint (params, configs, schedule position, RNG)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "layout_version": LAYOUT_VERSION,
        "kind": kind,
        "model_config": _to_plain(model.config),
        "train_config": _to_plain(train_config) if train_config is not None else None,
        "state_dict": model.state_dict(),
        "epoch": epoch,
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "torch_rng": torch.get_rng_state(),
        "history": history or {},
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def checkpoint_load(path, expect_kind: str | None = None) -> dict:
    """Load a checkpoint dict, refusing foreign attribute layouts."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("layout_version")
    if version != LAYOUT_VERSION:
        raise LayoutVersionError(
            f"checkpoint {path} uses layout {version!r}, this build expects "
            f"{LAYOUT_VERSION!r}"
        )
    if expect_kind is not None and payload.get("kind") != expect_kind:
        raise ConfigurationError(
            f"expected a {expect_kind!r} checkpoint, found {payload.get('kind')!r}"
        )
    return payload


def _logmel_from_dict(d: dict) -> LogMelConfig:
    return LogMelConfig(**d)


def load_completion_model(path) -> tuple[CompletionModel, dict]:
    payload = checkpoint_load(path, expect_kind="completion")
    cfg_dict = dict(payload["model_config"])
    cfg_dict["logmel"] = _logmel_from_dict(cfg_dict["logmel"])
    cfg_dict["dilations"] = tuple(cfg_dict["dilations"])
    model = CompletionModel(CompletionModelConfig(**cfg_dict))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def load_separation_model(path) -> tuple[SeparationModel, dict]:
    payload = checkpoint_load(path, expect_kind="separation")
    model = SeparationModel(SeparationModelConfig(**payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def experiment_config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    if d.get("sep_model") is not None:
        d["sep_model"] = SeparationModelConfig(**d["sep_model"])
    return ExperimentConfig(**d)


# ---------------------------------------------------------------------------
# Separation training
# ---------------------------------------------------------------------------


def _separation_batches(samples, cond_rng, cfg: ExperimentConfig, completion_model):
    base, _ = parse_mode(cfg.mode)
    allowed = cfg.allowed_attributes()
    batch = []
    for sample in samples:
        if base == "pit":
            batch.append((sample.mixture, None, sample.sources[0], sample.sources[1]))
        else:
            c, target = sample_condition(sample.attributes, cond_rng, allowed)
            cond = build_condition_input(cfg.mode, c, sample, target, completion_model)
            batch.append(
                (sample.mixture, cond, sample.sources[target], sample.sources[1 - target])
            )
        if len(batch) == cfg.batch_size:
            yield _stack_separation_batch(batch)
            batch = []
    if batch:
        yield _stack_separation_batch(batch)


def _stack_separation_batch(batch):
    xs = torch.as_tensor(np.stack([b[0] for b in batch]), dtype=torch.float32)
    conds = None
    if batch[0][1] is not None:
        conds = torch.as_tensor(np.stack([b[1] for b in batch]), dtype=torch.float32)
    refs_t = torch.as_tensor(np.stack([b[2] for b in batch]), dtype=torch.float32)
    refs_o = torch.as_tensor(np.stack([b[3] for b in batch]), dtype=torch.float32)
    return xs, conds, refs_t, refs_o


def _separation_step_loss(model, xs, conds, refs_t, refs_o, mode):
    out = model(xs, conds)
    if parse_mode(mode)[0] == "pit":
        loss, _ = pit_loss(out, torch.stack([refs_t, refs_o], dim=1))
        return loss
    return hct_loss(out[:, 0], out[:, 1], refs_t, refs_o)


def train_separation(
    cfg: ExperimentConfig,
    corpus,
    rir_bank,
    completion_model: CompletionModel | None = None,
    diagnostic_dir=None,
    resume_from=None,
    checkpoint_path=None,
) -> tuple[SeparationModel, dict]:
    """Train a separation model in any of the five modes.

    Streams freshly generated mixtures every epoch, re-samples (condition,
    target) per visit, minimizes the fixed-assignment loss (or the
    permutation-invariant loss for pit), halves the LR on schedule, clips
    gradients at the global L2 norm, and retains the best-validation
    parameters unless cfg.select == "last".

    ``checkpoint_path`` saves a resumable checkpoint (optimizer included)
    after every epoch; ``resume_from`` continues an interrupted run from its
    recorded epoch with the optimizer state and RNG restored. Best-val
    tracking restarts at the resume point.
    """
    base, _ = parse_mode(cfg.mode)
    if base == "completed":
        if completion_model is None:
            if not cfg.completion_ckpt:
                raise ConfigurationError("mode 'completed' requires completion_ckpt")
            completion_model, _ = load_completion_model(cfg.completion_ckpt)
        completion_model.eval()
        for p in completion_model.parameters():
            p.requires_grad_(False)

    torch.manual_seed(cfg.seed)
    model = SeparationModel(cfg.sep_model)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    spec = MixSpec.for_partition(cfg.partition, cfg.clip_len_samples)

    history = {"train_loss": [], "val_loss": [], "lr": []}
    start_epoch = 0
    if resume_from is not None:
        payload = checkpoint_load(resume_from, expect_kind="separation")
        model.load_state_dict(payload["state_dict"])
        if payload.get("optimizer") is not None:
            opt.load_state_dict(payload["optimizer"])
        torch.set_rng_state(payload["torch_rng"])
        history = payload.get("history") or history
        start_epoch = payload["epoch"]
    best_val = math.inf
    best_state = None

    for epoch in range(start_epoch, cfg.epochs):
        lr = lr_at_epoch(cfg.lr, epoch, cfg.lr_halving_period)
        for group in opt.param_groups:
            group["lr"] = lr

        model.train()
        cond_rng = np.random.default_rng(np.random.SeedSequence([0x5E9, cfg.seed, epoch]))
        stream = dataset_stream(
            corpus, rir_bank, spec, epoch_seed=cfg.seed * 100_003 + epoch,
            n=cfg.n_train, split="train",
        )
        losses = []
        for xs, conds, refs_t, refs_o in _separation_batches(
            stream, cond_rng, cfg, completion_model
        ):
            opt.zero_grad()
            loss = _separation_step_loss(model, xs, conds, refs_t, refs_o, cfg.mode)
            if not torch.isfinite(loss):
                if diagnostic_dir is not None:
                    checkpoint_save(
                        f"{diagnostic_dir}/separation-diverged.pt",
                        kind="separation",
                        model=model,
                        train_config=cfg,
                        epoch=epoch,
                        history=history,
                    )
                raise TrainingDiverged(f"non-finite separation loss at epoch {epoch}")
            loss.backward()
            grad_clip(
                [p.grad for p in model.parameters() if p.grad is not None],
                cfg.grad_clip_l2,
            )
            opt.step()
            losses.append(float(loss.detach()))

        val_loss = _validate_separation(model, corpus, rir_bank, spec, cfg, completion_model)
        history["train_loss"].append(float(np.mean(losses)))
        history["val_loss"].append(val_loss)
        history["lr"].append(lr)
        if val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(model.state_dict())
        if checkpoint_path is not None:
            checkpoint_save(
                checkpoint_path,
                kind="separation",
                model=model,
                train_config=cfg,
                epoch=epoch + 1,
                optimizer=opt,
                history=history,
            )

    if cfg.select == "best" and best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return model, history


def _validate_separation(model, corpus, rir_bank, spec, cfg, completion_model) -> float:
    model.eval()
    cond_rng = np.random.default_rng(np.random.SeedSequence([0x5E9, cfg.seed, 0x7A1]))
    stream = dataset_stream(
        corpus, rir_bank, spec, epoch_seed=cfg.seed, n=cfg.n_val, split="val"
    )
    losses = []
    with torch.no_grad():
        for xs, conds, refs_t, refs_o in _separation_batches(
            stream, cond_rng, cfg, completion_model
        ):
            loss = _separation_step_loss(model, xs, conds, refs_t, refs_o, cfg.mode)
            losses.append(float(loss.detach()))
    return float(np.mean(losses))
