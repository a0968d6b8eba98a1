"""Conditional time-domain separation network, SI-SDR metric, and losses.

The network is a learned-filterbank encoder / masker / decoder stack: the
masker is a series of U-ConvBlocks (1x1 expansion, successive depthwise
stride-2 downsampling, nearest-neighbor upsampling with skip additions) with
a FiLM site right after each block's residual connection. Masks are produced
by a learned output layer with ReLU and applied multiplicatively in encoder
space. An unconditional variant (condition width 0, no FiLM sites) serves as
the PIT baseline sharing the same trunk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .conditioning import ConditionToFilm, film_apply
from .errors import ConfigurationError, DomainError

SISDR_EPS = 1e-8


# ---------------------------------------------------------------------------
# Metric and losses
# ---------------------------------------------------------------------------


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    arr = np.asarray(x)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return torch.as_tensor(arr)


def si_sdr(s_hat, s, eps: float = SISDR_EPS):
    """Scale-invariant signal-to-distortion ratio in dB.

    alpha = <s_hat, s> / ||s||^2, then 10 log10(||alpha s||^2 /
    (||alpha s - s_hat||^2 + eps ||alpha s||^2)). The guard term is relative,
    which keeps the metric exactly scale-invariant and caps perfect
    reconstruction at 10 log10(1/eps) = 80 dB.

    Accepts 1-D arrays (returns a float) or batched tensors with time last
    (returns a tensor, differentiable).
    """
    est = _as_tensor(s_hat)
    ref = _as_tensor(s)
    if est.shape != ref.shape:
        raise DomainError(f"shape mismatch {tuple(est.shape)} vs {tuple(ref.shape)}")
    ref_energy = (ref * ref).sum(dim=-1)
    if torch.any(ref_energy <= 0):
        raise DomainError("si_sdr reference must have nonzero energy")
    alpha = (est * ref).sum(dim=-1) / ref_energy
    target = alpha.unsqueeze(-1) * ref
    target_energy = (target * target).sum(dim=-1)
    error_energy = ((target - est) ** 2).sum(dim=-1)
    value = 10.0 * torch.log10(target_energy / (error_energy + eps * target_energy))
    if value.dim() == 0:
        return float(value)
    return value


def si_sdr_improvement(s_hat, s, mixture) -> float:
    """SI-SDR of the estimate minus SI-SDR of the unprocessed mixture."""
    return float(si_sdr(s_hat, s)) - float(si_sdr(mixture, s))


def hct_loss(s_hat_t, s_hat_o, s_t, s_o):
    """Fixed-assignment loss: -SI-SDR(target pair) - SI-SDR(residual pair).

    No permutation minimum is taken; the condition decides the assignment.
    Batched inputs return the mean over the batch.
    """
    loss = -si_sdr(s_hat_t, s_t) - si_sdr(s_hat_o, s_o)
    if isinstance(loss, torch.Tensor):
        return loss.mean()
    return loss


def pit_loss(outputs, refs):
    """Permutation-invariant loss: min over the two pairings of mean -SI-SDR.

    ``outputs`` and ``refs`` are (2, L) pairs or (B, 2, L) batches. Returns
    (loss, best_perm) where best_perm is (0, 1) / (1, 0) for a single pair and
    an integer array of 0 (identity) / 1 (swap) per sample for a batch.
    """
    out = _as_tensor(outputs)
    ref = _as_tensor(refs)
    if out.shape != ref.shape or out.shape[-2] != 2:
        raise DomainError(f"expected matching (..., 2, L) pairs, got {tuple(out.shape)}")
    single = out.dim() == 2
    if single:
        out, ref = out.unsqueeze(0), ref.unsqueeze(0)

    identity = -(si_sdr(out[:, 0], ref[:, 0]) + si_sdr(out[:, 1], ref[:, 1])) / 2.0
    swapped = -(si_sdr(out[:, 0], ref[:, 1]) + si_sdr(out[:, 1], ref[:, 0])) / 2.0
    both = torch.stack([identity, swapped], dim=-1)
    per_sample, best = both.min(dim=-1)
    loss = per_sample.mean()

    if single:
        perm = (0, 1) if int(best[0]) == 0 else (1, 0)
        return float(loss) if not isinstance(outputs, torch.Tensor) else loss, perm
    return loss, best


def oracle_select(outputs, s_t) -> np.ndarray:
    """Pick the output waveform with the higher SI-SDR against the target."""
    candidates = [np.asarray(o) for o in outputs]
    scores = [float(si_sdr(o, s_t)) for o in candidates]
    return candidates[int(np.argmax(scores))]


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass
class SeparationModelConfig:
    """Architecture of the conditional separation network.

    condition_width: 8 for one-hot conditioning, 16 for completion-augmented
    conditioning, 0 for the unconditional PIT variant (FiLM sites omitted).
    """

    enc_filters: int = 512
    filter_len: int = 41
    hop: int = 20
    bottleneck_channels: int = 512
    expanded_channels: int = 512
    n_blocks: int = 8
    u_depth: int = 4
    n_outputs: int = 2
    condition_width: int = 8

    def __post_init__(self):
        if self.condition_width not in (0, 8, 16):
            raise ConfigurationError(
                f"condition_width must be 0, 8 or 16, got {self.condition_width}"
            )
        if self.n_outputs != 2:
            raise ConfigurationError("separator emits exactly (target, residual)")

    @classmethod
    def paper(cls, condition_width: int = 8) -> "SeparationModelConfig":
        return cls(condition_width=condition_width)

    @classmethod
    def desk(cls, condition_width: int = 8) -> "SeparationModelConfig":
        return cls(
            enc_filters=128,
            bottleneck_channels=128,
            expanded_channels=256,
            n_blocks=4,
            condition_width=condition_width,
        )


class GlobalLayerNorm(nn.Module):
    """Layer norm over both channel and time axes of (B, C, T)."""

    def __init__(self, channels: int, eps: float = 1e-8):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels, 1))
        self.bias = nn.Parameter(torch.zeros(channels, 1))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=(1, 2), keepdim=True)
        var = x.var(dim=(1, 2), keepdim=True, unbiased=False)
        return (x - mean) / torch.sqrt(var + self.eps) * self.weight + self.bias


class ConvNormAct(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, groups=1):
        super().__init__()
        self.conv = nn.Conv1d(
            in_ch, out_ch, kernel, stride=stride, padding=(kernel - 1) // 2, groups=groups
        )
        self.norm = GlobalLayerNorm(out_ch)
        self.act = nn.PReLU()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class ConvNorm(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, groups=1):
        super().__init__()
        self.conv = nn.Conv1d(
            in_ch, out_ch, kernel, stride=stride, padding=(kernel - 1) // 2, groups=groups
        )
        self.norm = GlobalLayerNorm(out_ch)

    def forward(self, x):
        return self.norm(self.conv(x))


class UConvBlock(nn.Module):
    """1x1 expansion, depthwise stride-2 pyramid, additive upsampling path."""

    def __init__(self, channels: int, expanded: int, depth: int):
        super().__init__()
        self.depth = depth
        self.proj = ConvNormAct(channels, expanded, 1)
        self.pyramid = nn.ModuleList(
            [ConvNorm(expanded, expanded, 5, stride=1, groups=expanded)]
            + [ConvNorm(expanded, expanded, 5, stride=2, groups=expanded) for _ in range(depth - 1)]
        )
        self.out_norm = GlobalLayerNorm(expanded)
        self.out_act = nn.PReLU()
        self.res_conv = nn.Conv1d(expanded, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        residual = x
        y = self.proj(x)
        levels = [self.pyramid[0](y)]
        for stage in self.pyramid[1:]:
            levels.append(stage(levels[-1]))
        for _ in range(self.depth - 1):
            top = levels.pop()
            up = F.interpolate(top, size=levels[-1].shape[-1], mode="nearest")
            levels[-1] = levels[-1] + up
        out = self.out_act(self.out_norm(levels[0]))
        return self.res_conv(out) + residual


class SeparationModel(nn.Module):
    """Learned-filterbank encoder, FiLM-conditioned masker, overlap-add decoder."""

    def __init__(self, config: SeparationModelConfig):
        super().__init__()
        self.config = config
        c = config
        self.encoder = nn.Conv1d(1, c.enc_filters, c.filter_len, stride=c.hop, bias=False)
        nn.init.xavier_uniform_(self.encoder.weight)
        self.enc_norm = GlobalLayerNorm(c.enc_filters)
        self.bottleneck = nn.Conv1d(c.enc_filters, c.bottleneck_channels, 1)
        self.blocks = nn.ModuleList(
            [
                UConvBlock(c.bottleneck_channels, c.expanded_channels, c.u_depth)
                for _ in range(c.n_blocks)
            ]
        )
        if c.condition_width > 0:
            self.films = nn.ModuleList(
                [
                    ConditionToFilm(c.condition_width, c.bottleneck_channels)
                    for _ in range(c.n_blocks)
                ]
            )
        else:
            self.films = None
        self.mask_act_in = nn.PReLU()
        self.mask_conv = nn.Conv1d(c.bottleneck_channels, c.n_outputs * c.enc_filters, 1)
        self.decoder = nn.ConvTranspose1d(c.enc_filters, 1, c.filter_len, stride=c.hop, bias=False)
        nn.init.xavier_uniform_(self.decoder.weight)
        self.parameter_counts = param_count(self)

    def forward(self, x: torch.Tensor, cond: torch.Tensor | None = None) -> torch.Tensor:
        """Separate a (B, L) or (L,) mixture into (B, 2, L) waveforms.

        ``cond`` is (B, condition_width) / (condition_width,), or None for the
        unconditional variant.
        """
        c = self.config
        squeeze = x.dim() == 1
        if squeeze:
            x = x.unsqueeze(0)
            if cond is not None and cond.dim() == 1:
                cond = cond.unsqueeze(0)
        if c.condition_width == 0:
            if cond is not None and cond.numel() > 0:
                raise ConfigurationError("unconditional model was given a condition")
            cond = None
        else:
            if cond is None:
                raise ConfigurationError(
                    f"model expects a {c.condition_width}-dim condition input"
                )
            if cond.shape[-1] != c.condition_width:
                raise ConfigurationError(
                    f"condition width {cond.shape[-1]} does not match configured "
                    f"width {c.condition_width}"
                )

        length = x.shape[-1]
        if length < c.filter_len:
            raise DomainError(f"input length {length} is shorter than one filter")
        pad = (-(length - c.filter_len)) % c.hop
        if pad:
            x = F.pad(x.unsqueeze(1), (0, pad), mode="reflect").squeeze(1)

        feats = torch.relu(self.encoder(x.unsqueeze(1)))
        h = self.bottleneck(self.enc_norm(feats))
        for i, block in enumerate(self.blocks):
            h = block(h)
            if self.films is not None:
                gamma, beta = self.films[i](cond)
                h = film_apply(h, gamma, beta)
        masks = torch.relu(self.mask_conv(self.mask_act_in(h)))
        b, _, frames = masks.shape
        masks = masks.view(b, c.n_outputs, c.enc_filters, frames)
        masked = masks * feats.unsqueeze(1)
        decoded = self.decoder(masked.reshape(b * c.n_outputs, c.enc_filters, frames))
        out = decoded.view(b, c.n_outputs, -1)[..., :length]
        return out.squeeze(0) if squeeze else out


def separate(
    model: SeparationModel, mixture: np.ndarray, cond: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Run inference on one mixture; returns (target estimate, residual estimate)."""
    model.eval()
    with torch.no_grad():
        x = torch.as_tensor(np.asarray(mixture), dtype=torch.float32)
        c = None
        if cond is not None and np.size(cond) > 0:
            c = torch.as_tensor(np.asarray(cond), dtype=torch.float32)
        out = model(x, c)
    return out[0].numpy(), out[1].numpy()


def n_encoder_frames(length: int, filter_len: int = 41, hop: int = 20) -> int:
    """Frame count of the learned filterbank before padding adjustments."""
    if length < filter_len:
        raise DomainError(f"input length {length} is shorter than one filter")
    return (length - filter_len) // hop + 1


def param_count(model: nn.Module) -> dict[str, int]:
    """Trainable parameter counts, split into FiLM sites vs everything else."""
    total = 0
    film = 0
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        total += p.numel()
        if ".films." in name or name.startswith("films.") or ".film_" in name or name.startswith("film_"):
            film += p.numel()
    return {"total": total, "film": film, "without_film": total - film}
