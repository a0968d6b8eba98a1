import json

import numpy as np
import pytest

from condsep.datagen import (
    MixSpec,
    apply_snr,
    dataset_stream,
    derive_sample_seed,
    load_corpus,
    load_rir_bank,
    make_mixture,
    measure_drr,
    place_sources,
    read_shard,
    synth_rir,
    synth_voice,
    synthetic_corpus,
    synthetic_rir_bank,
    tile_to_length,
    write_corpus_manifest,
    write_rir_manifest,
    write_shard,
)
from condsep.datagen.synth import F0_BANDS
from condsep.errors import (
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    IngestionError,
)


def dominant_frequency(waveform, sr=8000):
    spectrum = np.abs(np.fft.rfft(waveform.astype(np.float64))) ** 2
    freqs = np.fft.rfftfreq(len(waveform), 1 / sr)
    return freqs[int(np.argmax(spectrum))]


class TestSynthVoice:
    def test_deterministic(self):
        a = synth_voice("male", 5.0, 1)
        b = synth_voice("male", 5.0, 1)
        assert np.array_equal(a.waveform, b.waveform)

    def test_female_peak_in_band(self):
        clip = synth_voice("female", 5.0, 2)
        lo, hi = F0_BANDS["female"]
        assert lo <= dominant_frequency(clip.waveform) <= hi

    def test_gender_f0_estimates_disjoint(self):
        male = dominant_frequency(synth_voice("male", 5.0, 3).waveform)
        female = dominant_frequency(synth_voice("female", 5.0, 3).waveform)
        assert male <= F0_BANDS["male"][1] < F0_BANDS["female"][0] <= female

    def test_duration_bounds(self):
        with pytest.raises(DomainError):
            synth_voice("male", 0.2, 0)

    def test_finite_and_normalized(self):
        clip = synth_voice("female", 2.0, 9)
        assert np.all(np.isfinite(clip.waveform))
        assert np.max(np.abs(clip.waveform)) <= 0.9 + 1e-6


class TestSynthRir:
    def test_near_drr(self):
        for seed in range(5):
            rir = synth_rir("near", seed)
            assert measure_drr(rir.waveform) >= 6.0

    def test_far_drr(self):
        for seed in range(5):
            rir = synth_rir("far", seed)
            assert measure_drr(rir.waveform) <= 0.0

    def test_deterministic(self):
        assert np.array_equal(synth_rir("near", 7).waveform, synth_rir("near", 7).waveform)

    def test_length_and_peak(self):
        for position in ("near", "far"):
            rir = synth_rir(position, 3)
            assert len(rir.waveform) <= 8000
            assert np.max(np.abs(rir.waveform)) == pytest.approx(1.0, abs=1e-6)


class TestPlaceSources:
    def test_sixty_percent_overlap(self):
        a, b, onsets = place_sources(np.ones(50000), np.ones(50000), 0.6, 40000)
        active = int(40000 / (2 - 0.6))
        assert active == 28571
        assert onsets == (0, 40000 - 28571)
        realized = (2 * active - 40000) / active
        assert abs(realized - 0.6) < 1 / active + 1e-9

    def test_zero_overlap_abuts(self):
        a, b, onsets = place_sources(np.ones(30000), np.ones(30000), 0.0, 40000)
        assert onsets == (0, 20000)
        assert np.all(a[20000:] == 0)
        assert np.all(b[:20000] == 0)

    def test_near_total_overlap(self):
        a, b, onsets = place_sources(np.ones(50000), np.ones(50000), 0.999, 40000)
        assert onsets == (0, 40)
        assert onsets[0] < onsets[1]

    def test_first_is_b(self):
        a, b, onsets = place_sources(np.ones(50000), np.ones(50000), 0.5, 40000, first_is_a=False)
        assert onsets[1] == 0
        assert onsets[0] > 0

    def test_overlap_domain(self):
        with pytest.raises(DomainError):
            place_sources(np.ones(10), np.ones(10), 1.0, 100)
        with pytest.raises(DomainError):
            place_sources(np.ones(10), np.ones(10), -0.1, 100)

    def test_short_sources_are_tiled(self):
        a, b, _ = place_sources(np.ones(1000), np.ones(1000), 0.6, 40000)
        active = int(40000 / (2 - 0.6))
        assert np.count_nonzero(a) >= active - 1


class TestTile:
    def test_truncates(self):
        out = tile_to_length(np.arange(100, dtype=float), 40)
        assert np.array_equal(out, np.arange(40, dtype=float))

    def test_tiles_to_exact_length(self):
        out = tile_to_length(np.ones(1000), 4321)
        assert len(out) == 4321
        assert np.all(out > 0)

    def test_crossfade_preserves_constant_signal(self):
        # A constant signal crossfaded with itself stays constant.
        out = tile_to_length(np.ones(1000), 3000, crossfade=200)
        assert np.allclose(out, 1.0, atol=1e-12)

    def test_degenerately_short_input(self):
        out = tile_to_length(np.array([0.5, -0.5]), 11)
        assert len(out) == 11

    def test_empty_raises(self):
        with pytest.raises(DegenerateInputError):
            tile_to_length(np.zeros(0), 10)


class TestApplySnr:
    def test_equal_energy_half_db(self):
        a = np.ones(100)
        b = np.ones(100)
        _, b_scaled = apply_snr(a, b, 0.5)
        gain = np.sqrt(np.sum(b_scaled**2) / np.sum(b**2))
        assert gain == pytest.approx(10 ** (-0.025), abs=1e-5)

    def test_round_trip_five_db(self, rng):
        a = rng.standard_normal(5000)
        b = rng.standard_normal(5000)
        a2, b2 = apply_snr(a, b, 5.0)
        measured = 10 * np.log10(np.sum(a2**2) / np.sum(b2**2))
        assert measured == pytest.approx(5.0, abs=1e-6)

    def test_a_unchanged(self, rng):
        a = rng.standard_normal(100)
        a2, _ = apply_snr(a, rng.standard_normal(100), 2.0)
        assert np.array_equal(a, a2)

    def test_zero_energy_raises(self):
        with pytest.raises(DegenerateInputError):
            apply_snr(np.ones(10), np.zeros(10), 1.0)


class TestMakeMixture:
    def test_deterministic(self, corpus, rir_bank, short_spec):
        a = make_mixture(corpus, rir_bank, short_spec, 42)
        b = make_mixture(corpus, rir_bank, short_spec, 42)
        assert np.array_equal(a.mixture, b.mixture)
        assert np.array_equal(a.sources[0], b.sources[0])
        assert a.attributes == b.attributes
        assert a.sampled_overlap == b.sampled_overlap

    def test_complementarity_and_consistency(self, corpus, rir_bank, short_spec):
        for seed in range(60):
            s = make_mixture(corpus, rir_bank, short_spec, seed)
            a0, a1 = s.attributes
            assert a1 == a0.complement()
            # additivity is bitwise by construction
            assert np.array_equal(s.mixture, s.sources[0] + s.sources[1])
            # order consistency, strict
            first_idx = 0 if a0.order == "first" else 1
            assert s.onset_samples[first_idx] < s.onset_samples[1 - first_idx]
            # energy consistency and realized ratio against the sampled SNR
            e0 = float(np.sum(s.sources[0].astype(np.float64) ** 2))
            e1 = float(np.sum(s.sources[1].astype(np.float64) ** 2))
            high_idx = 0 if a0.energy == "high" else 1
            assert (e0 > e1) == (high_idx == 0)
            realized = 10 * np.log10(e0 / e1)
            assert realized == pytest.approx(s.sampled_snr_db, abs=0.1)
            assert abs(realized) >= 0.4

    def test_ranges(self, corpus, rir_bank, short_spec):
        for seed in range(100, 160):
            s = make_mixture(corpus, rir_bank, short_spec, seed)
            assert 0.60 <= s.sampled_overlap < 1.0
            assert 0.5 <= abs(s.sampled_snr_db) <= 5.0

    def test_normalization(self, corpus, rir_bank, short_spec):
        s = make_mixture(corpus, rir_bank, short_spec, 3)
        assert np.max(np.abs(s.mixture)) == pytest.approx(0.9, abs=1e-3)

    def test_single_gender_corpus_rejected(self, corpus, rir_bank, short_spec):
        females = [c for c in corpus if c.gender == "female"]
        with pytest.raises(ConfigurationError):
            make_mixture(females, rir_bank, short_spec, 0)

    def test_hard_spec_ranges(self, corpus, rir_bank):
        spec = MixSpec.hard(16000)
        for seed in range(30):
            s = make_mixture(corpus, rir_bank, spec, seed)
            assert 0.80 <= s.sampled_overlap < 1.0
            assert 0.5 <= abs(s.sampled_snr_db) <= 2.5


class TestDatasetStream:
    def test_repeatable(self, corpus, rir_bank, short_spec):
        a = list(dataset_stream(corpus, rir_bank, short_spec, epoch_seed=0, n=3))
        b = list(dataset_stream(corpus, rir_bank, short_spec, epoch_seed=0, n=3))
        for x, y in zip(a, b):
            assert np.array_equal(x.mixture, y.mixture)

    def test_epoch_seeds_differ(self, corpus, rir_bank, short_spec):
        a = next(iter(dataset_stream(corpus, rir_bank, short_spec, epoch_seed=0, n=1)))
        b = next(iter(dataset_stream(corpus, rir_bank, short_spec, epoch_seed=1, n=1)))
        assert not np.array_equal(a.mixture, b.mixture)

    def test_split_namespaces_disjoint(self):
        seeds = {
            derive_sample_seed(split, 0, i) for split in ("train", "val", "test") for i in range(50)
        }
        assert len(seeds) == 150

    def test_bad_split(self):
        with pytest.raises(ConfigurationError):
            derive_sample_seed("dev", 0, 0)

    def test_positive_length_required(self, corpus, rir_bank, short_spec):
        with pytest.raises(DomainError):
            list(dataset_stream(corpus, rir_bank, short_spec, epoch_seed=0, n=0))


class TestShards:
    def test_round_trip(self, tmp_path, corpus, rir_bank, short_spec):
        samples = [make_mixture(corpus, rir_bank, short_spec, 700 + i) for i in range(10)]
        write_shard(samples, tmp_path)
        back = read_shard(tmp_path)
        assert len(back) == len(samples)
        for orig, loaded in zip(samples, back):
            assert np.max(np.abs(orig.mixture - loaded.mixture)) < 1e-7
            assert np.max(np.abs(orig.sources[0] - loaded.sources[0])) < 1e-7
            assert orig.attributes == loaded.attributes
            assert orig.sampled_overlap == loaded.sampled_overlap
            assert orig.onset_samples == loaded.onset_samples

    def test_manifest_schema(self, tmp_path, corpus, rir_bank, short_spec):
        samples = [make_mixture(corpus, rir_bank, short_spec, 1)]
        manifest = write_shard(samples, tmp_path)
        row = json.loads(manifest.read_text().splitlines()[0])
        for key in ("sampled_overlap", "sampled_snr_db", "seed", "attributes", "onset_samples"):
            assert key in row

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(IngestionError):
            read_shard(tmp_path)

    def test_unwritable_destination(self, tmp_path, corpus, rir_bank, short_spec):
        # A file where the shard directory should go makes the write fail.
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        samples = [make_mixture(corpus, rir_bank, short_spec, 1)]
        with pytest.raises(OSError):
            write_shard(samples, blocker / "shard")


class TestManifestIngestion:
    def test_corpus_round_trip(self, tmp_path):
        clips = synthetic_corpus(n_per_gender=2, duration_s=1.5, seed=5)
        manifest = write_corpus_manifest(clips, tmp_path)
        loaded = load_corpus(manifest)
        assert len(loaded) == len(clips)
        assert {c.gender for c in loaded} == {"female", "male"}
        by_id = {c.id: c for c in loaded}
        for clip in clips:
            assert np.max(np.abs(by_id[clip.id].waveform - clip.waveform)) < 1e-7

    def test_missing_audio_names_record(self, tmp_path):
        manifest = tmp_path / "corpus.jsonl"
        manifest.write_text(
            json.dumps(
                {
                    "id": "ghost",
                    "path": "missing.wav",
                    "speaker_id": "s",
                    "gender": "female",
                    "duration_s": 1.0,
                }
            )
            + "\n"
        )
        with pytest.raises(IngestionError, match="ghost"):
            load_corpus(manifest)

    def test_single_gender_rejected(self, tmp_path):
        clips = [c for c in synthetic_corpus(3, 1.5, seed=2) if c.gender == "female"]
        manifest = write_corpus_manifest(clips, tmp_path)
        with pytest.raises(ConfigurationError):
            load_corpus(manifest)

    def test_short_clip_warns_and_skips(self, tmp_path):
        from scipy.io import wavfile

        clips = synthetic_corpus(2, 1.5, seed=3)
        manifest = write_corpus_manifest(clips, tmp_path)
        wavfile.write(tmp_path / "short.wav", 8000, np.zeros(800, np.float32))
        with open(manifest, "a", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {
                        "id": "too-short",
                        "path": "short.wav",
                        "speaker_id": "x",
                        "gender": "male",
                        "duration_s": 0.1,
                    }
                )
                + "\n"
            )
        with pytest.warns(UserWarning, match="too-short"):
            loaded = load_corpus(manifest)
        assert all(c.id != "too-short" for c in loaded)

    def test_rir_bank_round_trip(self, tmp_path):
        rirs = synthetic_rir_bank(2, seed=4)
        manifest = write_rir_manifest(rirs, tmp_path)
        loaded = load_rir_bank(manifest)
        assert {r.position for r in loaded} == {"near", "far"}
        assert all(len(r.waveform) <= 8000 for r in loaded)

    def test_rir_single_position_rejected(self, tmp_path):
        rirs = [r for r in synthetic_rir_bank(2, seed=4) if r.position == "near"]
        manifest = write_rir_manifest(rirs, tmp_path)
        with pytest.raises(ConfigurationError):
            load_rir_bank(manifest)

    def test_manifest_missing_field(self, tmp_path):
        manifest = tmp_path / "corpus.jsonl"
        manifest.write_text(json.dumps({"id": "x", "path": "x.wav"}) + "\n")
        with pytest.raises(IngestionError):
            load_corpus(manifest)
