"""Metadata-completion classifier: log-Mel frontend plus FiLM-conditioned TDNN.

Given the mixture and a one-hot condition identifying one source, the model
estimates the probabilities of all four attribute values of that source. The
trunk is a channel-reduced TDNN speaker-embedding topology (initial TDNN
layer, three SE-Res2Blocks with dilations 2/3/4, multi-layer feature
aggregation, attentive statistics pooling, embedding layer); the condition is
injected through a FiLM site after each SE-Res2Block's residual connection
plus one on the embedding right before the 4-node sigmoid head.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch
from torch import nn

from .conditioning import (
    ATTRIBUTES,
    COND_DIM,
    ConditionToFilm,
    encode_condition,
    encode_full,
    film_apply,
    probs_to_estimate,
    sample_condition,
)
from .datagen import MixSpec, dataset_stream
from .errors import DomainError, TrainingDiverged

PROB_CLAMP = 1e-7


# ---------------------------------------------------------------------------
# Log-Mel frontend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogMelConfig:
    n_mels: int = 64
    win_length: int = 256
    hop: int = 128
    f_min: float = 50.0
    f_max: float = 4000.0
    log_floor: float = 1e-10
    sample_rate: int = 8000

    def __post_init__(self):
        if self.hop * 2 != self.win_length:
            raise DomainError("hop must be half the window (50% overlap)")
        if not 0 <= self.f_min < self.f_max <= self.sample_rate / 2:
            raise DomainError("need 0 <= f_min < f_max <= Nyquist")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(cfg: LogMelConfig) -> np.ndarray:
    """n_mels + 2 band edge frequencies, equally spaced on the mel scale."""
    mels = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    return mel_to_hz(mels)


def mel_filterbank(cfg: LogMelConfig) -> np.ndarray:
    """Triangular filters, shape (n_mels, win_length // 2 + 1)."""
    n_bins = cfg.win_length // 2 + 1
    fft_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.win_length
    edges = mel_band_edges(cfg)
    fb = np.zeros((cfg.n_mels, n_bins), dtype=np.float64)
    for i in range(cfg.n_mels):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (fft_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - fft_freqs) / max(hi - center, 1e-12)
        fb[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb.astype(np.float32)


class LogMelFrontend(nn.Module):
    """Batched log-Mel extraction; no center padding, natural log with floor."""

    def __init__(self, cfg: LogMelConfig | None = None):
        super().__init__()
        self.cfg = cfg or LogMelConfig()
        self.register_buffer("window", torch.hann_window(self.cfg.win_length, periodic=True))
        self.register_buffer("fb", torch.from_numpy(mel_filterbank(self.cfg)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if x.shape[-1] < cfg.win_length:
            raise DomainError(
                f"input of {x.shape[-1]} samples is shorter than one window"
            )
        spec = torch.stft(
            x,
            n_fft=cfg.win_length,
            hop_length=cfg.hop,
            win_length=cfg.win_length,
            window=self.window,
            center=False,
            return_complex=True,
        )
        power = spec.real**2 + spec.imag**2
        mel = torch.matmul(self.fb, power)
        return torch.log(mel + cfg.log_floor)


def logmel(x: np.ndarray, cfg: LogMelConfig | None = None) -> np.ndarray:
    """Log-Mel spectrogram of one waveform, shape (n_mels, T) with
    T = floor((L - win) / hop) + 1."""
    frontend = LogMelFrontend(cfg)
    with torch.no_grad():
        out = frontend(torch.as_tensor(np.asarray(x), dtype=torch.float32).unsqueeze(0))
    return out[0].numpy()


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass
class CompletionModelConfig:
    frame_channels: int = 128
    dilations: tuple[int, ...] = (2, 3, 4)
    kernel: int = 3
    res2net_scale: int = 8
    se_channels: int = 128
    attention_channels: int = 128
    embedding_dim: int = 192
    condition_width: int = COND_DIM
    logmel: LogMelConfig = field(default_factory=LogMelConfig)

    @classmethod
    def paper(cls) -> "CompletionModelConfig":
        return cls()

    @classmethod
    def desk(cls) -> "CompletionModelConfig":
        return cls(
            frame_channels=64,
            se_channels=64,
            attention_channels=64,
            embedding_dim=96,
        )


class TdnnBlock(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, dilation=1):
        super().__init__()
        self.conv = nn.Conv1d(
            in_ch, out_ch, kernel, dilation=dilation, padding=dilation * (kernel - 1) // 2
        )
        self.bn = nn.BatchNorm1d(out_ch)

    def forward(self, x):
        return self.bn(torch.relu(self.conv(x)))


class Res2Dilated(nn.Module):
    """Split channels into scale groups with a hierarchical dilated conv cascade."""

    def __init__(self, channels, scale, kernel, dilation):
        super().__init__()
        assert channels % scale == 0
        width = channels // scale
        self.scale = scale
        self.blocks = nn.ModuleList(
            [TdnnBlock(width, width, kernel, dilation) for _ in range(scale - 1)]
        )

    def forward(self, x):
        chunks = torch.chunk(x, self.scale, dim=1)
        out = [chunks[0]]
        y = None
        for i, chunk in enumerate(chunks[1:]):
            y = chunk if y is None else chunk + y
            y = self.blocks[i](y)
            out.append(y)
        return torch.cat(out, dim=1)


class SqueezeExcite(nn.Module):
    def __init__(self, channels, se_channels):
        super().__init__()
        self.fc1 = nn.Conv1d(channels, se_channels, 1)
        self.fc2 = nn.Conv1d(se_channels, channels, 1)

    def forward(self, x):
        s = x.mean(dim=2, keepdim=True)
        s = torch.sigmoid(self.fc2(torch.relu(self.fc1(s))))
        return x * s


class SERes2Block(nn.Module):
    def __init__(self, channels, scale, se_channels, kernel, dilation):
        super().__init__()
        self.tdnn1 = TdnnBlock(channels, channels, 1)
        self.res2 = Res2Dilated(channels, scale, kernel, dilation)
        self.tdnn2 = TdnnBlock(channels, channels, 1)
        self.se = SqueezeExcite(channels, se_channels)

    def forward(self, x):
        y = self.tdnn1(x)
        y = self.res2(y)
        y = self.tdnn2(y)
        y = self.se(y)
        return y + x


class AttentiveStatsPool(nn.Module):
    """Attention-weighted mean and std over time, with global context."""

    def __init__(self, channels, attention_channels):
        super().__init__()
        self.tdnn = TdnnBlock(channels * 3, attention_channels, 1)
        self.conv = nn.Conv1d(attention_channels, channels, 1)
        self.eps = 1e-12

    def forward(self, x):
        t = x.shape[-1]
        mean = x.mean(dim=2, keepdim=True).expand(-1, -1, t)
        std = x.std(dim=2, unbiased=False, keepdim=True).clamp(min=self.eps).expand(-1, -1, t)
        attn = self.conv(torch.tanh(self.tdnn(torch.cat([x, mean, std], dim=1))))
        attn = torch.softmax(attn, dim=2)
        mu = (attn * x).sum(dim=2)
        sigma = torch.sqrt(((attn * (x - mu.unsqueeze(2)) ** 2).sum(dim=2)).clamp(min=self.eps))
        return torch.cat([mu, sigma], dim=1)


class CompletionModel(nn.Module):
    """FiLM-conditioned attribute classifier over the mixture's log-Mel input."""

    def __init__(self, config: CompletionModelConfig | None = None):
        super().__init__()
        self.config = config or CompletionModelConfig()
        cfg = self.config
        c = cfg.frame_channels
        self.frontend = LogMelFrontend(cfg.logmel)
        self.input_bn = nn.BatchNorm2d(1)
        self.layer1 = TdnnBlock(cfg.logmel.n_mels, c, 5)
        self.blocks = nn.ModuleList(
            [
                SERes2Block(c, cfg.res2net_scale, cfg.se_channels, cfg.kernel, d)
                for d in cfg.dilations
            ]
        )
        self.films = nn.ModuleList(
            [ConditionToFilm(cfg.condition_width, c) for _ in cfg.dilations]
        )
        agg = c * len(cfg.dilations)
        self.mfa = TdnnBlock(agg, agg, 1)
        self.pool = AttentiveStatsPool(agg, cfg.attention_channels)
        self.pool_bn = nn.BatchNorm1d(agg * 2)
        self.embed = nn.Linear(agg * 2, cfg.embedding_dim)
        self.film_embed = ConditionToFilm(cfg.condition_width, cfg.embedding_dim)
        self.head = nn.Linear(cfg.embedding_dim, len(ATTRIBUTES))
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)
        from .separation import param_count

        self.parameter_counts = param_count(self)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        """Probabilities of each attribute's first-listed value, shape (B, 4)."""
        squeeze = x.dim() == 1
        if squeeze:
            x = x.unsqueeze(0)
            if cond.dim() == 1:
                cond = cond.unsqueeze(0)
        m = self.frontend(x)
        m = self.input_bn(m.unsqueeze(1)).squeeze(1)
        h = self.layer1(m)
        taps = []
        for block, film in zip(self.blocks, self.films):
            h = block(h)
            gamma, beta = film(cond)
            h = film_apply(h, gamma, beta)
            taps.append(h)
        h = self.mfa(torch.cat(taps, dim=1))
        v = self.pool_bn(self.pool(h))
        e = self.embed(v)
        gamma, beta = self.film_embed(cond)
        e = film_apply(e, gamma, beta)
        p = torch.sigmoid(self.head(e))
        return p.squeeze(0) if squeeze else p


def completion_forward(
    model: CompletionModel, x: np.ndarray, c: np.ndarray
) -> np.ndarray:
    """Run the classifier on one mixture; returns the 8-dim probability vector."""
    model.eval()
    with torch.no_grad():
        probs4 = model(
            torch.as_tensor(np.asarray(x), dtype=torch.float32),
            torch.as_tensor(np.asarray(c), dtype=torch.float32),
        )
    return probs_to_estimate(probs4.numpy())


def estimate_from_probs(probs4: torch.Tensor) -> torch.Tensor:
    """Torch counterpart of probs_to_estimate: (B, 4) -> (B, 8), pair sums 1."""
    return torch.stack([probs4, 1.0 - probs4], dim=-1).flatten(-2)


def completion_loss(estimate, truth):
    """Mean binary cross-entropy over the four attribute nodes.

    ``estimate`` is an 8-dim completion estimate (or batch), ``truth`` the
    8-dim four-hot description of the target source. Only the even slots
    carry independent information; probabilities are clamped to
    [1e-7, 1 - 1e-7]. All four attributes are supervised, the given one
    included.
    """
    est = estimate if isinstance(estimate, torch.Tensor) else torch.as_tensor(
        np.asarray(estimate), dtype=torch.float32
    )
    ref = truth if isinstance(truth, torch.Tensor) else torch.as_tensor(
        np.asarray(truth), dtype=torch.float32
    )
    if est.shape != ref.shape or est.shape[-1] != COND_DIM:
        raise DomainError(f"expected matching 8-dim operands, got {tuple(est.shape)}")
    p = est[..., 0::2].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = ref[..., 0::2]
    bce = -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p))
    return bce.mean()


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class CompletionTrainConfig:
    partition: str = "easy"
    epochs: int = 50
    batch_size: int = 6
    lr: float = 1e-3
    lr_halving_period: int = 40
    weight_decay: float = 2e-5
    grad_clip_l2: float = 5.0
    n_train: int = 20000
    n_val: int = 3000
    seed: int = 0
    clip_len_samples: int = 40000
    select: str = "best"  # "best" keeps the lowest-val-loss epoch, "last" the final one
    model: CompletionModelConfig = field(default_factory=CompletionModelConfig)

    @classmethod
    def paper(cls, partition: str, seed: int = 0) -> "CompletionTrainConfig":
        return cls(
            partition=partition,
            epochs=50 if partition == "easy" else 200,
            seed=seed,
            model=CompletionModelConfig.paper(),
        )

    @classmethod
    def desk(cls, partition: str = "easy", seed: int = 0, **overrides) -> "CompletionTrainConfig":
        cfg = cls(
            partition=partition,
            epochs=12,
            n_train=2000,
            n_val=256,
            seed=seed,
            model=CompletionModelConfig.desk(),
        )
        return replace(cfg, **overrides) if overrides else cfg


def lr_at_epoch(lr0: float, epoch: int, halving_period: int) -> float:
    return lr0 * 0.5 ** (epoch // halving_period)


def _completion_batches(samples, cond_rng, batch_size):
    """Group samples into (mixtures, conditions, truths) tensors."""
    batch = []
    for sample in samples:
        c, target = sample_condition(sample.attributes, cond_rng)
        truth = encode_full(sample.attributes[target])
        batch.append((sample.mixture, c, truth))
        if len(batch) == batch_size:
            yield _stack_completion_batch(batch)
            batch = []
    if batch:
        yield _stack_completion_batch(batch)


def _stack_completion_batch(batch):
    xs = torch.as_tensor(np.stack([b[0] for b in batch]), dtype=torch.float32)
    cs = torch.as_tensor(np.stack([b[1] for b in batch]), dtype=torch.float32)
    ys = torch.as_tensor(np.stack([b[2] for b in batch]), dtype=torch.float32)
    return xs, cs, ys


def train_completion(
    corpus,
    rir_bank,
    cfg: CompletionTrainConfig,
    diagnostic_dir=None,
    resume_from=None,
    checkpoint_path=None,
) -> tuple[CompletionModel, dict]:
    """Train the completion classifier on on-the-fly mixtures.

    Adam with a halving LR schedule, weight decay, global L2 gradient
    clipping, BCE objective. Keeps the best-validation parameters unless
    cfg.select == "last". Returns (model, history). ``resume_from`` continues
    from a checkpoint's recorded epoch with optimizer state and RNG restored.
    """
    from .harness import checkpoint_load, checkpoint_save, grad_clip

    torch.manual_seed(cfg.seed)
    model = CompletionModel(cfg.model)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    spec = MixSpec.for_partition(cfg.partition, cfg.clip_len_samples)

    history = {"train_loss": [], "val_loss": [], "lr": []}
    start_epoch = 0
    if resume_from is not None:
        payload = checkpoint_load(resume_from, expect_kind="completion")
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
        cond_rng = np.random.default_rng(
            np.random.SeedSequence([0xC07D, cfg.seed, epoch])
        )
        train_samples = dataset_stream(
            corpus, rir_bank, spec, epoch_seed=cfg.seed * 100_003 + epoch,
            n=cfg.n_train, split="train",
        )
        losses = []
        for xs, cs, ys in _completion_batches(train_samples, cond_rng, cfg.batch_size):
            opt.zero_grad()
            probs = model(xs, cs)
            loss = completion_loss(estimate_from_probs(probs), ys)
            if not torch.isfinite(loss):
                if diagnostic_dir is not None:
                    checkpoint_save(
                        f"{diagnostic_dir}/completion-diverged.pt",
                        kind="completion",
                        model=model,
                        train_config=cfg,
                        epoch=epoch,
                        history=history,
                    )
                raise TrainingDiverged(f"non-finite completion loss at epoch {epoch}")
            loss.backward()
            grad_clip([p.grad for p in model.parameters() if p.grad is not None],
                      cfg.grad_clip_l2)
            opt.step()
            losses.append(float(loss.detach()))

        val_loss = _validate_completion(model, corpus, rir_bank, spec, cfg)
        history["train_loss"].append(float(np.mean(losses)))
        history["val_loss"].append(val_loss)
        history["lr"].append(lr)
        if val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(model.state_dict())
        if checkpoint_path is not None:
            checkpoint_save(
                checkpoint_path,
                kind="completion",
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


def _validate_completion(model, corpus, rir_bank, spec, cfg) -> float:
    model.eval()
    cond_rng = np.random.default_rng(np.random.SeedSequence([0xC07D, cfg.seed, 0x7A1]))
    stream = dataset_stream(
        corpus, rir_bank, spec, epoch_seed=cfg.seed, n=cfg.n_val, split="val"
    )
    losses = []
    with torch.no_grad():
        for xs, cs, ys in _completion_batches(stream, cond_rng, cfg.batch_size):
            probs = model(xs, cs)
            losses.append(float(completion_loss(estimate_from_probs(probs), ys)))
    return float(np.mean(losses))


# ---------------------------------------------------------------------------
# Accuracy matrix
# ---------------------------------------------------------------------------


def completion_accuracy_matrix(model: CompletionModel, test_stream) -> np.ndarray:
    """4x4 accuracy matrix: rows = given attribute, columns = predicted.

    Cell (g, p) is the fraction of samples where thresholding the model's
    probability for attribute p at 0.5 matches the target's true value, when
    the model is conditioned on the target's value of attribute g. The
    diagonal is NaN; exact 0.5 outputs count as errors. The target source of
    each sample is drawn once from the sample seed, so every row sees the
    same targets.
    """
    samples = list(test_stream)
    if not samples:
        raise DomainError("accuracy matrix needs a non-empty test stream")

    model.eval()
    hits = np.zeros((4, 4), dtype=np.int64)
    counts = np.zeros((4, 4), dtype=np.int64)

    batch_size = 32
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        xs = torch.as_tensor(np.stack([s.mixture for s in chunk]), dtype=torch.float32)
        targets = [
            int(np.random.default_rng(np.random.SeedSequence([0xACC, s.seed])).integers(2))
            for s in chunk
        ]
        truth_bits = np.stack(
            [encode_full(s.attributes[t])[0::2] for s, t in zip(chunk, targets)]
        )
        for gi, given in enumerate(ATTRIBUTES):
            cs = torch.as_tensor(
                np.stack(
                    [
                        encode_condition(given, s.attributes[t].value_of(given))
                        for s, t in zip(chunk, targets)
                    ]
                ),
                dtype=torch.float32,
            )
            with torch.no_grad():
                probs = model(xs, cs).numpy()
            predicted_first = probs > 0.5
            predicted_second = probs < 0.5
            correct = np.where(truth_bits == 1.0, predicted_first, predicted_second)
            for pi in range(4):
                if pi == gi:
                    continue
                hits[gi, pi] += int(correct[:, pi].sum())
                counts[gi, pi] += len(chunk)

    matrix = np.full((4, 4), np.nan)
    mask = counts > 0
    matrix[mask] = hits[mask] / counts[mask]
    return matrix
