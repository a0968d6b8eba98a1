"""Attribute vocabulary, condition encodings, and the FiLM conditioning primitive.

Every vector in the toolkit uses one fixed 8-slot layout, position-indexed:

    0 gender=female    1 gender=male
    2 energy=high      3 energy=low
    4 order=first      5 order=second
    6 spatial=near     7 spatial=far

A one-hot vector over these slots encodes a single condition value ("the near
source"), a four-hot vector describes one source completely, and a completion
estimate fills the same slots with probabilities that sum to one inside each
attribute pair. The layout is frozen and tagged with LAYOUT_VERSION so that
checkpoints and manifests stay interoperable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, DomainError

LAYOUT_VERSION = "geos-layout-v1"

ATTRIBUTES = ("gender", "energy", "order", "spatial")

ATTRIBUTE_VALUES = {
    "gender": ("female", "male"),
    "energy": ("high", "low"),
    "order": ("first", "second"),
    "spatial": ("near", "far"),
}

COND_DIM = 8


def layout_index(attribute: str, value: str) -> int:
    """Slot of (attribute, value) in the fixed 8-dim layout."""
    if attribute not in ATTRIBUTE_VALUES:
        raise DomainError(f"unknown attribute {attribute!r}")
    values = ATTRIBUTE_VALUES[attribute]
    if value not in values:
        raise DomainError(f"value {value!r} does not belong to attribute {attribute!r}")
    return 2 * ATTRIBUTES.index(attribute) + values.index(value)


def layout_slot(index: int) -> tuple[str, str]:
    """Inverse of layout_index."""
    if not 0 <= index < COND_DIM:
        raise DomainError(f"layout index {index} out of range")
    attribute = ATTRIBUTES[index // 2]
    return attribute, ATTRIBUTE_VALUES[attribute][index % 2]


@dataclass(frozen=True)
class AttributeSet:
    """The four binary attribute values of one source."""

    gender: str
    energy: str
    order: str
    spatial: str

    def __post_init__(self):
        for attribute in ATTRIBUTES:
            value = getattr(self, attribute)
            if value not in ATTRIBUTE_VALUES[attribute]:
                raise DomainError(
                    f"value {value!r} does not belong to attribute {attribute!r}"
                )

    def value_of(self, attribute: str) -> str:
        if attribute not in ATTRIBUTES:
            raise DomainError(f"unknown attribute {attribute!r}")
        return getattr(self, attribute)

    def complement(self) -> "AttributeSet":
        """The attribute set of the other source in the same mixture."""
        flipped = {}
        for attribute in ATTRIBUTES:
            first, second = ATTRIBUTE_VALUES[attribute]
            flipped[attribute] = second if getattr(self, attribute) == first else first
        return AttributeSet(**flipped)

    def as_dict(self) -> dict[str, str]:
        return {a: getattr(self, a) for a in ATTRIBUTES}


def encode_condition(attribute: str, value: str) -> np.ndarray:
    """One-hot condition vector for a single attribute value."""
    vec = np.zeros(COND_DIM, dtype=np.float32)
    vec[layout_index(attribute, value)] = 1.0
    return vec


def decode_condition(vec: Sequence[float]) -> tuple[str, str]:
    """Inverse of encode_condition; rejects anything that is not one-hot."""
    arr = np.asarray(vec, dtype=np.float32)
    if arr.shape != (COND_DIM,):
        raise DomainError(f"condition vector must have shape ({COND_DIM},), got {arr.shape}")
    ones = np.flatnonzero(arr == 1.0)
    if len(ones) != 1 or np.count_nonzero(arr) != 1:
        raise DomainError("condition vector is not one-hot")
    return layout_slot(int(ones[0]))


def encode_full(attrs: AttributeSet) -> np.ndarray:
    """Four-hot vector describing every attribute value of one source."""
    vec = np.zeros(COND_DIM, dtype=np.float32)
    for attribute in ATTRIBUTES:
        vec[layout_index(attribute, attrs.value_of(attribute))] = 1.0
    return vec


def sample_condition(
    attr_pair: tuple[AttributeSet, AttributeSet],
    rng: np.random.Generator,
    allowed: Iterable[str] = ATTRIBUTES,
) -> tuple[np.ndarray, int]:
    """Draw a uniform (condition, target) query for one mixture.

    Picks the target source uniformly from {0, 1} and the condition attribute
    uniformly from ``allowed``, then emits the one-hot vector for the target's
    value of that attribute. Returns (condition vector, target index).
    """
    allowed = tuple(allowed)
    if not allowed:
        raise DomainError("allowed attribute set must be non-empty")
    for attribute in allowed:
        if attribute not in ATTRIBUTES:
            raise DomainError(f"unknown attribute {attribute!r}")
    target = int(rng.integers(2))
    attribute = allowed[int(rng.integers(len(allowed)))]
    value = attr_pair[target].value_of(attribute)
    return encode_condition(attribute, value), target


def probs_to_estimate(sigmoid_outputs: Sequence[float]) -> np.ndarray:
    """Spread 4 per-attribute probabilities over the 8-slot layout.

    Slot 2k gets the probability of the attribute's first-listed value and
    slot 2k+1 its complement, so pair sums are exactly one.
    """
    p = np.asarray(sigmoid_outputs, dtype=np.float32)
    if p.shape != (4,):
        raise DomainError(f"expected 4 sigmoid outputs, got shape {p.shape}")
    if np.any(p < 0) or np.any(p > 1):
        raise DomainError("sigmoid outputs must lie in [0, 1]")
    out = np.empty(COND_DIM, dtype=np.float32)
    out[0::2] = p
    out[1::2] = 1.0 - p
    return out


def is_one_hot(vec: np.ndarray) -> bool:
    arr = np.asarray(vec)
    return arr.shape == (COND_DIM,) and np.count_nonzero(arr) == 1 and arr.max() == 1.0


def is_full_vector(vec: np.ndarray) -> bool:
    arr = np.asarray(vec)
    if arr.shape != (COND_DIM,):
        return False
    pairs = arr.reshape(4, 2)
    return bool(np.all(pairs.sum(axis=1) == 1.0) and np.all((arr == 0) | (arr == 1)))


def film_apply(features: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """Per-channel affine modulation: out[c, t] = gamma[c] * x[c, t] + beta[c].

    Accepts (C, T), (B, C, T) features with (C,) / (B, C) params, or plain
    (B, C) feature vectors. Channel counts must agree.
    """
    if features.dim() == 3:
        channel_dim = features.shape[1]
        g, b = gamma, beta
        if g.dim() == 1:
            g, b = g.unsqueeze(0), b.unsqueeze(0)
        if g.shape[-1] != channel_dim or b.shape[-1] != channel_dim:
            raise DomainError(
                f"FiLM params for {g.shape[-1]} channels applied to {channel_dim}-channel features"
            )
        return g.unsqueeze(-1) * features + b.unsqueeze(-1)
    if features.dim() == 2 and gamma.dim() <= 2:
        if gamma.shape[-1] != features.shape[-1]:
            raise DomainError(
                f"FiLM params for {gamma.shape[-1]} channels applied to "
                f"{features.shape[-1]}-channel features"
            )
        return gamma * features + beta
    if features.dim() == 1:
        if gamma.shape != features.shape or beta.shape != features.shape:
            raise DomainError("FiLM parameter length must equal the channel count")
        return gamma * features + beta
    raise DomainError(f"unsupported feature rank {features.dim()} for film_apply")


class ConditionToFilm(nn.Module):
    """Affine map from a condition vector to per-channel FiLM (gamma, beta).

    Each FiLM site owns one of these. Initialized to the identity modulation
    (gamma = 1, beta = 0 for every condition) so a freshly built network
    behaves as if it were unconditional; conditioning is then learned.
    """

    def __init__(self, cond_width: int, n_channels: int):
        super().__init__()
        self.cond_width = cond_width
        self.gamma = nn.Linear(cond_width, n_channels)
        self.beta = nn.Linear(cond_width, n_channels)
        nn.init.zeros_(self.gamma.weight)
        nn.init.ones_(self.gamma.bias)
        nn.init.zeros_(self.beta.weight)
        nn.init.zeros_(self.beta.bias)

    def forward(self, cond: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if cond.shape[-1] != self.cond_width:
            raise ConfigurationError(
                f"condition width {cond.shape[-1]} does not match configured "
                f"width {self.cond_width}"
            )
        return self.gamma(cond), self.beta(cond)
