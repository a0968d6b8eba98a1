"""Corpus and RIR-bank ingestion plus the built-in synthetic substitutes.

Manifests are JSON-lines, UTF-8, one record per clip:

    corpus:   {"id", "path", "speaker_id", "gender", "duration_s"}
    RIR bank: {"id", "path", "position"}

Audio is WAV. 32-bit float is the native format; 16/32-bit PCM is accepted on
ingest and rescaled to [-1, 1]. Everything is resampled to 8 kHz mono.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from ..errors import ConfigurationError, IngestionError

SAMPLE_RATE = 8000
MIN_CLIP_S = 0.5
MAX_RIR_S = 1.0


@dataclass
class SourceClip:
    """One mono source utterance at 8 kHz."""

    id: str
    waveform: np.ndarray
    gender: str
    speaker_id: str
    duration_s: float


@dataclass
class RirClip:
    """One room impulse response at 8 kHz, peak-normalized, <= 1 s."""

    id: str
    waveform: np.ndarray
    position: str


def _read_wav_mono(path: Path) -> tuple[int, np.ndarray]:
    sr, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    else:
        data = data.astype(np.float32)
    if data.ndim > 1:
        data = data.mean(axis=1)
    return sr, data


def _resample_to_8k(x: np.ndarray, sr: int) -> np.ndarray:
    if sr == SAMPLE_RATE:
        return x
    g = math.gcd(sr, SAMPLE_RATE)
    return resample_poly(x, SAMPLE_RATE // g, sr // g).astype(np.float32)


def _iter_manifest(manifest_path: str | Path):
    path = Path(manifest_path)
    if not path.exists():
        raise IngestionError(f"manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: invalid JSON record") from exc


def load_corpus(manifest_path: str | Path) -> list[SourceClip]:
    """Ingest a JSON-lines corpus manifest into SourceClips.

    Referenced audio is resampled to 8 kHz mono; clips shorter than 0.5 s are
    rejected with a warning. Raises IngestionError naming the offending record
    for unreadable audio and ConfigurationError if only one gender survives.
    """
    base = Path(manifest_path).parent
    clips: list[SourceClip] = []
    for record in _iter_manifest(manifest_path):
        for field in ("id", "path", "speaker_id", "gender", "duration_s"):
            if field not in record:
                raise IngestionError(
                    f"record {record.get('id', '<missing id>')!r} lacks field {field!r}"
                )
        audio_path = Path(record["path"])
        if not audio_path.is_absolute():
            audio_path = base / audio_path
        try:
            sr, data = _read_wav_mono(audio_path)
        except (OSError, ValueError) as exc:
            raise IngestionError(
                f"cannot read audio for record {record['id']!r}: {audio_path}"
            ) from exc
        data = _resample_to_8k(data, sr)
        if not np.all(np.isfinite(data)):
            raise IngestionError(f"non-finite samples in record {record['id']!r}")
        duration_s = len(data) / SAMPLE_RATE
        if duration_s < MIN_CLIP_S:
            warnings.warn(
                f"rejecting clip {record['id']!r}: {duration_s:.3f} s is shorter "
                f"than the {MIN_CLIP_S} s minimum",
                stacklevel=2,
            )
            continue
        if record["gender"] not in ("female", "male"):
            raise IngestionError(
                f"record {record['id']!r} has unknown gender {record['gender']!r}"
            )
        clips.append(
            SourceClip(
                id=str(record["id"]),
                waveform=data,
                gender=record["gender"],
                speaker_id=str(record["speaker_id"]),
                duration_s=duration_s,
            )
        )
    _check_corpus(clips)
    return clips


def _check_corpus(clips: list[SourceClip]) -> None:
    genders = {c.gender for c in clips}
    if not clips:
        raise ConfigurationError("corpus is empty")
    if genders != {"female", "male"}:
        raise ConfigurationError(
            f"corpus must contain both genders (complementary attributes are "
            f"unattainable otherwise); found {sorted(genders)}"
        )


def load_rir_bank(manifest_path: str | Path) -> list[RirClip]:
    """Ingest a JSON-lines RIR manifest. RIRs are truncated to 1 s and
    peak-normalized; both positions must be present."""
    base = Path(manifest_path).parent
    rirs: list[RirClip] = []
    for record in _iter_manifest(manifest_path):
        for field in ("id", "path", "position"):
            if field not in record:
                raise IngestionError(
                    f"record {record.get('id', '<missing id>')!r} lacks field {field!r}"
                )
        audio_path = Path(record["path"])
        if not audio_path.is_absolute():
            audio_path = base / audio_path
        try:
            sr, data = _read_wav_mono(audio_path)
        except (OSError, ValueError) as exc:
            raise IngestionError(
                f"cannot read audio for record {record['id']!r}: {audio_path}"
            ) from exc
        data = _resample_to_8k(data, sr)[: int(MAX_RIR_S * SAMPLE_RATE)]
        peak = np.max(np.abs(data)) if len(data) else 0.0
        if peak == 0.0:
            raise IngestionError(f"RIR record {record['id']!r} is silent")
        if record["position"] not in ("near", "far"):
            raise IngestionError(
                f"record {record['id']!r} has unknown position {record['position']!r}"
            )
        rirs.append(
            RirClip(
                id=str(record["id"]),
                waveform=(data / peak).astype(np.float32),
                position=record["position"],
            )
        )
    _check_rir_bank(rirs)
    return rirs


def _check_rir_bank(rirs: list[RirClip]) -> None:
    positions = {r.position for r in rirs}
    if positions != {"near", "far"}:
        raise ConfigurationError(
            f"RIR bank must contain both near and far responses; found {sorted(positions)}"
        )


def synthetic_corpus(
    n_per_gender: int = 8, duration_s: float = 5.0, seed: int = 0
) -> list[SourceClip]:
    """Built-in corpus of synthetic voices, n_per_gender of each gender."""
    from .synth import synth_voice

    clips = []
    for i in range(n_per_gender):
        clips.append(synth_voice("female", duration_s, seed * 10_000 + i))
        clips.append(synth_voice("male", duration_s, seed * 10_000 + i))
    return clips


def synthetic_rir_bank(n_per_position: int = 4, seed: int = 0) -> list[RirClip]:
    """Built-in bank of synthetic RIRs, n_per_position of each position."""
    from .synth import synth_rir

    rirs = []
    for i in range(n_per_position):
        rirs.append(synth_rir("near", seed * 10_000 + i))
        rirs.append(synth_rir("far", seed * 10_000 + i))
    return rirs


def write_corpus_manifest(clips: list[SourceClip], out_dir: str | Path) -> Path:
    """Persist clips as WAVs plus a manifest (useful for fixtures and the CLI)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "corpus.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for clip in clips:
            wav_name = f"{clip.id}.wav"
            wavfile.write(out / wav_name, SAMPLE_RATE, clip.waveform.astype(np.float32))
            fh.write(
                json.dumps(
                    {
                        "id": clip.id,
                        "path": wav_name,
                        "speaker_id": clip.speaker_id,
                        "gender": clip.gender,
                        "duration_s": clip.duration_s,
                    }
                )
                + "\n"
            )
    return manifest


def write_rir_manifest(rirs: list[RirClip], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "rirs.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for rir in rirs:
            wav_name = f"{rir.id}.wav"
            wavfile.write(out / wav_name, SAMPLE_RATE, rir.waveform.astype(np.float32))
            fh.write(
                json.dumps({"id": rir.id, "path": wav_name, "position": rir.position}) + "\n"
            )
    return manifest
