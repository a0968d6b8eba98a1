"""Attribute-annotated two-source mixture construction.

One mixture = one female and one male utterance, each convolved with a
randomly paired near/far RIR, placed with a sampled overlap, scaled to a
sampled signed SNR, summed and peak-normalized. The two sources end up with
complementary gender/energy/order/spatial attributes by construction, and
every step is a pure function of the per-sample seed.

Placement geometry: both sources get the same active length
L_a = floor(clip_len / (2 - overlap)); the first occupies [0, L_a), the
second [clip_len - L_a, clip_len), which realizes the requested overlap to
within 1/L_a and fills the clip.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.signal import fftconvolve

from ..conditioning import AttributeSet
from ..errors import ConfigurationError, DegenerateInputError, DomainError
from .corpus import RirClip, SourceClip

SAMPLE_RATE = 8000
CLIP_LEN = 40000  # 5 s at 8 kHz

CROSSFADE_SAMPLES = 400  # 50 ms, used when tiling short sources

_MIX_NS = 0x4D495830  # "MIX0"
_STREAM_NS = 0x53545245  # "STRE"
_SPLIT_NS = {"train": 1, "val": 2, "test": 3}

_MAX_RETRIES = 5


@dataclass(frozen=True)
class MixSpec:
    """Partition-level mixing parameters.

    Overlap is sampled from [lo, hi) with the upper bound open so the order
    attribute is always strictly defined; SNR magnitude is sampled from
    [lo, hi] and signed uniformly, so 0 dB is excluded by construction.
    """

    partition: str
    overlap_range: tuple[float, float]
    snr_range_db: tuple[float, float]
    clip_len_samples: int = CLIP_LEN
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        lo, hi = self.overlap_range
        if not 0.0 <= lo < hi <= 1.0:
            raise ConfigurationError(f"bad overlap range {self.overlap_range}")
        slo, shi = self.snr_range_db
        if not 0.0 < slo <= shi:
            raise ConfigurationError(
                f"SNR magnitude range must exclude 0 dB, got {self.snr_range_db}"
            )

    @classmethod
    def easy(cls, clip_len_samples: int = CLIP_LEN) -> "MixSpec":
        return cls("easy", (0.60, 1.0), (0.5, 5.0), clip_len_samples)

    @classmethod
    def hard(cls, clip_len_samples: int = CLIP_LEN) -> "MixSpec":
        return cls("hard", (0.80, 1.0), (0.5, 2.5), clip_len_samples)

    @classmethod
    def for_partition(cls, partition: str, clip_len_samples: int = CLIP_LEN) -> "MixSpec":
        if partition == "easy":
            return cls.easy(clip_len_samples)
        if partition == "hard":
            return cls.hard(clip_len_samples)
        raise ConfigurationError(f"unknown partition {partition!r}")


@dataclass
class MixtureSample:
    """One generated mixture with both sources, attributes and provenance."""

    mixture: np.ndarray
    sources: tuple[np.ndarray, np.ndarray]
    attributes: tuple[AttributeSet, AttributeSet]
    sampled_overlap: float
    sampled_snr_db: float
    onset_samples: tuple[int, int]
    seed: int
    source_ids: tuple[str, str]
    rir_ids: tuple[str, str]
    partition: str = "easy"

    def target_source(self, target_index: int) -> np.ndarray:
        return self.sources[target_index]

    def other_source(self, target_index: int) -> np.ndarray:
        return self.sources[1 - target_index]


def tile_to_length(x: np.ndarray, length: int, crossfade: int = CROSSFADE_SAMPLES) -> np.ndarray:
    """Truncate or tile x to exactly ``length`` samples.

    Tiling joins copies with a raised-cosine crossfade to avoid onset clicks;
    degenerately short inputs fall back to plain repetition.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise DegenerateInputError("cannot tile an empty signal")
    if len(x) >= length:
        return x[:length].copy()
    if len(x) <= crossfade + 1:
        reps = int(np.ceil(length / len(x)))
        return np.tile(x, reps)[:length]
    fade_in = 0.5 - 0.5 * np.cos(np.pi * np.arange(crossfade) / crossfade)
    out = x.copy()
    while len(out) < length:
        head = x.copy()
        joint = out[-crossfade:] * (1.0 - fade_in) + head[:crossfade] * fade_in
        out = np.concatenate([out[:-crossfade], joint, head[crossfade:]])
    return out[:length]


def place_sources(
    active_a: np.ndarray,
    active_b: np.ndarray,
    overlap: float,
    clip_len: int,
    first_is_a: bool = True,
) -> tuple[np.ndarray, np.ndarray, tuple[int, int]]:
    """Place two sources into a clip with the requested overlap fraction.

    Both get active length L_a = floor(clip_len / (2 - overlap)); the first
    starts at 0, the second ends at clip_len. Returns zero-padded full-length
    arrays for a and b plus their onsets (a first when first_is_a).
    """
    if not 0.0 <= overlap < 1.0:
        raise DomainError(f"overlap must lie in [0, 1), got {overlap}")
    active_len = int(clip_len / (2.0 - overlap))
    first, second = (active_a, active_b) if first_is_a else (active_b, active_a)
    first = tile_to_length(first, active_len)
    second = tile_to_length(second, active_len)

    placed_first = np.zeros(clip_len, dtype=np.float64)
    placed_second = np.zeros(clip_len, dtype=np.float64)
    second_onset = clip_len - active_len
    placed_first[:active_len] = first
    placed_second[second_onset:] = second

    if first_is_a:
        return placed_first, placed_second, (0, second_onset)
    return placed_second, placed_first, (second_onset, 0)


def apply_snr(a: np.ndarray, b: np.ndarray, snr_db: float) -> tuple[np.ndarray, np.ndarray]:
    """Scale b so that 10 log10(E_a / E_b_scaled) equals snr_db exactly."""
    e_a = float(np.sum(np.asarray(a, dtype=np.float64) ** 2))
    e_b = float(np.sum(np.asarray(b, dtype=np.float64) ** 2))
    if e_a <= 0.0 or e_b <= 0.0:
        raise DegenerateInputError("apply_snr needs nonzero energy in both signals")
    gain = np.sqrt((e_a / e_b) * 10.0 ** (-snr_db / 10.0))
    return np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64) * gain


def make_mixture(
    corpus: list[SourceClip],
    rir_bank: list[RirClip],
    spec: MixSpec,
    seed: int,
) -> MixtureSample:
    """Generate one mixture, all randomness driven solely by ``seed``."""
    females = [c for c in corpus if c.gender == "female"]
    males = [c for c in corpus if c.gender == "male"]
    if not females or not males:
        raise ConfigurationError("corpus must contain both genders")
    nears = [r for r in rir_bank if r.position == "near"]
    fars = [r for r in rir_bank if r.position == "far"]
    if not nears or not fars:
        raise ConfigurationError("RIR bank must contain both positions")

    rng = np.random.default_rng(np.random.SeedSequence([_MIX_NS, int(seed)]))
    last_err: Exception | None = None
    for _ in range(_MAX_RETRIES):
        try:
            return _make_mixture_once(females, males, nears, fars, spec, seed, rng)
        except DegenerateInputError as err:
            last_err = err  # redraw everything from the same stream
    raise DegenerateInputError(
        f"mixture seed {seed}: no usable draw after {_MAX_RETRIES} attempts"
    ) from last_err


def _make_mixture_once(females, males, nears, fars, spec, seed, rng) -> MixtureSample:
    clip_len = spec.clip_len_samples

    female = females[int(rng.integers(len(females)))]
    male = males[int(rng.integers(len(males)))]
    near = nears[int(rng.integers(len(nears)))]
    far = fars[int(rng.integers(len(fars)))]

    near_to_female = bool(rng.integers(2))
    female_rir, male_rir = (near, far) if near_to_female else (far, near)

    overlap = float(rng.uniform(*spec.overlap_range))
    snr_mag = float(rng.uniform(*spec.snr_range_db))
    female_first = bool(rng.integers(2))
    first_is_louder = bool(rng.integers(2))
    swap_storage = bool(rng.integers(2))

    wet_female = fftconvolve(
        female.waveform.astype(np.float64), female_rir.waveform.astype(np.float64)
    )
    wet_male = fftconvolve(
        male.waveform.astype(np.float64), male_rir.waveform.astype(np.float64)
    )

    placed_f, placed_m, (onset_f, onset_m) = place_sources(
        wet_female, wet_male, overlap, clip_len, first_is_a=female_first
    )

    # Signed SNR of the first-placed source relative to the second.
    snr_first_db = snr_mag if first_is_louder else -snr_mag
    if female_first:
        placed_f, placed_m = apply_snr(placed_f, placed_m, snr_first_db)
    else:
        placed_m, placed_f = apply_snr(placed_m, placed_f, snr_first_db)

    e_f = float(np.sum(placed_f**2))
    e_m = float(np.sum(placed_m**2))
    if e_f <= 0.0 or e_m <= 0.0:
        raise DegenerateInputError("a placed source lost all energy")

    # Labels from what is acoustically there: order from the onsets, energy
    # from the realized post-placement energies.
    attrs_f = AttributeSet(
        gender="female",
        energy="high" if e_f > e_m else "low",
        order="first" if onset_f < onset_m else "second",
        spatial=female_rir.position,
    )
    pair = [
        (placed_f, attrs_f, female.id, female_rir.id, onset_f, snr_first_db if female_first else -snr_first_db),
        (placed_m, attrs_f.complement(), male.id, male_rir.id, onset_m, -snr_first_db if female_first else snr_first_db),
    ]
    if swap_storage:
        pair.reverse()

    raw_mixture = pair[0][0] + pair[1][0]
    peak = float(np.max(np.abs(raw_mixture)))
    if peak <= 0.0:
        raise DegenerateInputError("silent mixture")
    norm = 0.9 / peak

    s0 = (pair[0][0] * norm).astype(np.float32)
    s1 = (pair[1][0] * norm).astype(np.float32)

    return MixtureSample(
        mixture=s0 + s1,  # float32 sum so additivity is bitwise
        sources=(s0, s1),
        attributes=(pair[0][1], pair[1][1]),
        sampled_overlap=overlap,
        sampled_snr_db=pair[0][5],  # sampled ratio of sources[0] over sources[1]
        onset_samples=(pair[0][4], pair[1][4]),
        seed=int(seed),
        source_ids=(pair[0][2], pair[1][2]),
        rir_ids=(pair[0][3], pair[1][3]),
        partition=spec.partition,
    )


def derive_sample_seed(split: str, epoch_seed: int, index: int) -> int:
    """Per-sample seed from (split namespace, epoch seed, index)."""
    if split not in _SPLIT_NS:
        raise ConfigurationError(f"unknown split {split!r}; expected one of {list(_SPLIT_NS)}")
    ss = np.random.SeedSequence([_STREAM_NS, _SPLIT_NS[split], int(epoch_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def dataset_stream(
    corpus: list[SourceClip],
    rir_bank: list[RirClip],
    spec: MixSpec,
    epoch_seed: int,
    n: int,
    split: str = "train",
) -> Iterator[MixtureSample]:
    """Yield n mixtures with per-sample seeds derived from (split, epoch_seed, i).

    The three splits live in disjoint seed namespaces. Callers keep val/test
    streams fixed by passing a constant epoch_seed, and vary the train stream
    by passing the epoch index.
    """
    if n <= 0:
        raise DomainError(f"stream length must be positive, got {n}")
    for i in range(n):
        yield make_mixture(corpus, rir_bank, spec, derive_sample_seed(split, epoch_seed, i))
