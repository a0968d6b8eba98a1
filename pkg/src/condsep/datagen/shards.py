"""Shard persistence: mixtures as float32 WAVs plus a JSON-lines manifest.

Used for debugging and frozen benchmark fixtures; round-trips bit-exactly
because both the files and the in-memory arrays are 32-bit float.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from ..conditioning import LAYOUT_VERSION, AttributeSet
from ..errors import IngestionError
from .mixer import SAMPLE_RATE, MixtureSample

MANIFEST_NAME = "shard.jsonl"


def _sample_stem(sample: MixtureSample) -> str:
    return f"mix-{sample.seed:020d}"


def write_shard(samples: list[MixtureSample], out_dir: str | Path) -> Path:
    """Write WAVs and the manifest for a list of samples; returns manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / MANIFEST_NAME
    with open(manifest, "w", encoding="utf-8") as fh:
        for sample in samples:
            stem = _sample_stem(sample)
            wavfile.write(out / f"{stem}.wav", SAMPLE_RATE, sample.mixture)
            wavfile.write(out / f"{stem}.src0.wav", SAMPLE_RATE, sample.sources[0])
            wavfile.write(out / f"{stem}.src1.wav", SAMPLE_RATE, sample.sources[1])
            row = {
                "layout_version": LAYOUT_VERSION,
                "stem": stem,
                "seed": sample.seed,
                "partition": sample.partition,
                "sampled_overlap": sample.sampled_overlap,
                "sampled_snr_db": sample.sampled_snr_db,
                "onset_samples": list(sample.onset_samples),
                "attributes": [a.as_dict() for a in sample.attributes],
                "source_ids": list(sample.source_ids),
                "rir_ids": list(sample.rir_ids),
            }
            fh.write(json.dumps(row) + "\n")
    return manifest


def read_shard(shard_dir: str | Path) -> list[MixtureSample]:
    """Reload a shard written by write_shard."""
    shard_dir = Path(shard_dir)
    manifest = shard_dir / MANIFEST_NAME
    if not manifest.exists():
        raise IngestionError(f"no shard manifest at {manifest}")
    samples = []
    with open(manifest, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            stem = row["stem"]

            def _load(name: str) -> np.ndarray:
                path = shard_dir / name
                try:
                    sr, data = wavfile.read(path)
                except (OSError, ValueError) as exc:
                    raise IngestionError(f"cannot read shard audio: {path}") from exc
                if sr != SAMPLE_RATE:
                    raise IngestionError(f"unexpected sample rate {sr} in {path}")
                return data.astype(np.float32)

            samples.append(
                MixtureSample(
                    mixture=_load(f"{stem}.wav"),
                    sources=(_load(f"{stem}.src0.wav"), _load(f"{stem}.src1.wav")),
                    attributes=tuple(AttributeSet(**a) for a in row["attributes"]),
                    sampled_overlap=row["sampled_overlap"],
                    sampled_snr_db=row["sampled_snr_db"],
                    onset_samples=tuple(row["onset_samples"]),
                    seed=row["seed"],
                    source_ids=tuple(row["source_ids"]),
                    rir_ids=tuple(row["rir_ids"]),
                    partition=row["partition"],
                )
            )
    return samples
