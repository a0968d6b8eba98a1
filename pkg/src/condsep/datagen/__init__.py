"""Synthetic corpus, RIR bank, and on-the-fly mixture generation."""

from .corpus import (
    RirClip,
    SourceClip,
    load_corpus,
    load_rir_bank,
    synthetic_corpus,
    synthetic_rir_bank,
    write_corpus_manifest,
    write_rir_manifest,
)
from .mixer import (
    CLIP_LEN,
    SAMPLE_RATE,
    MixSpec,
    MixtureSample,
    apply_snr,
    dataset_stream,
    derive_sample_seed,
    make_mixture,
    place_sources,
    tile_to_length,
)
from .shards import read_shard, write_shard
from .synth import measure_drr, synth_rir, synth_voice

__all__ = [
    "CLIP_LEN",
    "SAMPLE_RATE",
    "MixSpec",
    "MixtureSample",
    "RirClip",
    "SourceClip",
    "apply_snr",
    "dataset_stream",
    "derive_sample_seed",
    "load_corpus",
    "load_rir_bank",
    "make_mixture",
    "measure_drr",
    "place_sources",
    "read_shard",
    "synth_rir",
    "synth_voice",
    "synthetic_corpus",
    "synthetic_rir_bank",
    "tile_to_length",
    "write_corpus_manifest",
    "write_rir_manifest",
    "write_shard",
]
