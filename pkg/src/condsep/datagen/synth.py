"""Built-in synthetic voices and room impulse responses.

These stand in for a licensed speech corpus so the whole pipeline runs at desk
scale. Voices are harmonic complexes with gender-disjoint fundamental bands;
RIRs are a direct impulse plus an exponentially decaying noise tail whose
direct-to-reverberant ratio separates near from far. Real recordings ingest
through the same manifest interface (see datagen.corpus).
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .corpus import RirClip, SourceClip

SAMPLE_RATE = 8000

# Disjoint fundamental-frequency bands, Hz.
F0_BANDS = {"male": (90.0, 140.0), "female": (190.0, 250.0)}

# Near vs far geometry: direct-path delay, decay time, direct-to-reverberant ratio.
RIR_DELAY_S = {"near": (0.001, 0.005), "far": (0.010, 0.030)}
RIR_T60_S = {"near": (0.2, 0.4), "far": (0.4, 0.8)}
RIR_DRR_DB = {"near": (6.0, 12.0), "far": (-6.0, 0.0)}

# Tail onset sits past the 2.5 ms direct-energy window so the generated DRR
# is exactly what a windowed measurement sees.
_TAIL_GAP = 16  # samples (2 ms)

_VOICE_NS = 0x564F4943  # "VOIC"
_RIR_NS = 0x52495230  # "RIR0"

NOISE_FLOOR_DB = -20.0


def synth_voice(gender: str, duration_s: float, seed: int) -> SourceClip:
    """Deterministic harmonic-complex "voice" at 8 kHz.

    Fundamental drawn from the gender's band with a slow sinusoidal glide,
    1/k harmonic roll-off, 2-6 Hz amplitude modulation and a -20 dB noise
    floor. Bitwise-reproducible for a given (gender, duration_s, seed).
    """
    if gender not in F0_BANDS:
        raise DomainError(f"unknown gender {gender!r}")
    if not 1.0 <= duration_s <= 10.0:
        raise DomainError(f"duration_s must be in [1, 10], got {duration_s}")

    rng = np.random.default_rng(np.random.SeedSequence([_VOICE_NS, int(seed)]))
    n = int(round(duration_s * SAMPLE_RATE))
    t = np.arange(n, dtype=np.float64) / SAMPLE_RATE

    lo, hi = F0_BANDS[gender]
    f0 = rng.uniform(lo, hi)
    glide_rate = rng.uniform(0.1, 0.5)
    glide_depth = rng.uniform(0.01, 0.04)
    glide_phase = rng.uniform(0.0, 2.0 * np.pi)
    f_inst = f0 * (1.0 + glide_depth * np.sin(2.0 * np.pi * glide_rate * t + glide_phase))
    phase = 2.0 * np.pi * np.cumsum(f_inst) / SAMPLE_RATE

    n_harm = max(1, int((SAMPLE_RATE / 2 - 1) // (f0 * (1.0 + glide_depth))))
    harm_phases = rng.uniform(0.0, 2.0 * np.pi, size=n_harm)
    k = np.arange(1, n_harm + 1, dtype=np.float64)
    wave = ((1.0 / k)[:, None] * np.sin(k[:, None] * phase[None, :] + harm_phases[:, None])).sum(
        axis=0
    )

    am_rate = rng.uniform(2.0, 6.0)
    am_depth = rng.uniform(0.25, 0.45)
    am_phase = rng.uniform(0.0, 2.0 * np.pi)
    wave *= 1.0 + am_depth * np.sin(2.0 * np.pi * am_rate * t + am_phase)

    noise = rng.standard_normal(n)
    gain = np.sqrt(
        np.sum(wave**2) * 10.0 ** (NOISE_FLOOR_DB / 10.0) / max(np.sum(noise**2), 1e-30)
    )
    x = wave + gain * noise
    x *= 0.9 / np.max(np.abs(x))

    return SourceClip(
        id=f"synthvoice-{gender}-{seed}",
        waveform=x.astype(np.float32),
        gender=gender,
        speaker_id=f"synth-{gender}-{seed}",
        duration_s=n / SAMPLE_RATE,
    )


def synth_rir(position: str, seed: int) -> RirClip:
    """Deterministic synthetic RIR: direct impulse plus decaying noise tail.

    Near RIRs have a short direct delay, fast decay and DRR >= +6 dB; far
    RIRs a long delay, slow decay and DRR <= 0 dB. Peak-normalized to 1.
    """
    if position not in RIR_DELAY_S:
        raise DomainError(f"unknown RIR position {position!r}")

    rng = np.random.default_rng(np.random.SeedSequence([_RIR_NS, int(seed)]))
    delay_s = rng.uniform(*RIR_DELAY_S[position])
    t60_s = rng.uniform(*RIR_T60_S[position])
    drr_db = rng.uniform(*RIR_DRR_DB[position])

    n0 = int(round(delay_s * SAMPLE_RATE))
    n = min(SAMPLE_RATE, n0 + _TAIL_GAP + int(np.ceil(t60_s * SAMPLE_RATE)))
    h = np.zeros(n, dtype=np.float64)

    tail_len = n - (n0 + _TAIL_GAP)
    decay = 10.0 ** (-3.0 * np.arange(tail_len) / (t60_s * SAMPLE_RATE))
    tail = rng.standard_normal(tail_len) * decay
    tail_energy = float(np.sum(tail**2))

    direct = np.sqrt(tail_energy * 10.0 ** (drr_db / 10.0))
    h[n0] = direct
    h[n0 + _TAIL_GAP :] = tail
    h /= np.max(np.abs(h))

    return RirClip(
        id=f"synthrir-{position}-{seed}",
        waveform=h.astype(np.float32),
        position=position,
    )


def measure_drr(rir: np.ndarray, window_s: float = 0.0025, sr: int = SAMPLE_RATE) -> float:
    """Direct-to-reverberant ratio in dB: energy in a window around the peak
    versus everything else."""
    h = np.asarray(rir, dtype=np.float64)
    peak = int(np.argmax(np.abs(h)))
    half = int(round(window_s * sr / 2))
    lo, hi = max(0, peak - half), min(len(h), peak + half + 1)
    direct = float(np.sum(h[lo:hi] ** 2))
    rest = float(np.sum(h**2) - direct)
    return 10.0 * np.log10(direct / max(rest, 1e-30))
