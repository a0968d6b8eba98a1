import json

import numpy as np
import pytest
import torch

from condsep.conditioning import ATTRIBUTES
from condsep.errors import ConfigurationError, DomainError
from condsep.report import (
    ScatterArtifact,
    emit_accuracy_matrix,
    emit_reports,
    emit_scatter,
    emit_separation_report,
    eval_condition_for,
    evaluate_separation,
    evaluate_single_condition_ensemble,
)
from condsep.separation import SeparationModel, SeparationModelConfig

TINY = SeparationModelConfig(
    enc_filters=32, bottleneck_channels=16, expanded_channels=16, n_blocks=1, condition_width=8
)


def oracle_passthrough(sample, cond):
    _, target = eval_condition_for(sample)
    return sample.sources[target], sample.sources[1 - target]


def mixture_passthrough(sample, cond):
    return sample.mixture, sample.mixture


@pytest.fixture(scope="module")
def tiny_model():
    torch.manual_seed(0)
    model = SeparationModel(TINY)
    model.eval()
    return model


class TestEvalConditions:
    def test_frozen_per_sample(self, samples8):
        for sample in samples8:
            c1, t1 = eval_condition_for(sample)
            c2, t2 = eval_condition_for(sample)
            assert np.array_equal(c1, c2)
            assert t1 == t2

    def test_query_parity_across_models(self, samples8, tiny_model):
        r1 = evaluate_separation(tiny_model, "hct", samples8)
        r2 = evaluate_separation(tiny_model, "hct", samples8)
        for a, b in zip(r1.per_sample, r2.per_sample):
            assert (a.condition_attribute, a.condition_value) == (
                b.condition_attribute,
                b.condition_value,
            )
            assert a.sisdr_db == b.sisdr_db


class TestEvaluateSeparation:
    def test_oracle_passthrough_is_capped(self, samples8):
        report = evaluate_separation(None, "pit", samples8, forward=oracle_passthrough)
        assert all(r.sisdr_db >= 80.0 for r in report.per_sample)

    def test_mixture_model_has_zero_improvement(self, samples8):
        report = evaluate_separation(None, "hct", samples8, forward=mixture_passthrough)
        for r in report.per_sample:
            assert r.sisdr_db == pytest.approx(r.input_sisdr_db, abs=1e-6)
            assert r.sisdri_db == pytest.approx(0.0, abs=1e-6)

    def test_aggregation_consistency(self, samples8, tiny_model):
        report = evaluate_separation(tiny_model, "hct", samples8)
        weighted = sum(
            report.per_condition_mean_sisdr[a] * report.per_condition_counts[a]
            for a in ATTRIBUTES
            if report.per_condition_counts[a] > 0
        ) / sum(report.per_condition_counts.values())
        assert report.overall_mean_sisdr == pytest.approx(weighted, abs=1e-9)
        assert report.n_samples == len(samples8)

    def test_negative_tail_counted(self, samples8, tiny_model):
        report = evaluate_separation(tiny_model, "hct", samples8)
        expected = sum(1 for r in report.per_sample if r.sisdr_db < 0)
        assert report.n_negative_sisdr == expected

    def test_mode_width_mismatch_rejected(self, samples8, tiny_model):
        with pytest.raises(ConfigurationError):
            evaluate_separation(tiny_model, "completion_oracle", samples8)

    def test_empty_stream_rejected(self, tiny_model):
        with pytest.raises(DomainError):
            evaluate_separation(tiny_model, "hct", [])


class TestEnsemble:
    def test_identical_models_match_single_report(self, samples8, tiny_model):
        models = {a: tiny_model for a in ATTRIBUTES}
        ensemble = evaluate_single_condition_ensemble(models, samples8)
        single = evaluate_separation(tiny_model, "hct", samples8)
        assert ensemble.overall_mean_sisdr == pytest.approx(
            single.overall_mean_sisdr, abs=1e-9
        )

    def test_per_condition_cells_match_specialists(self, samples8, tiny_model):
        models = {a: tiny_model for a in ATTRIBUTES}
        ensemble = evaluate_single_condition_ensemble(models, samples8)
        single = evaluate_separation(tiny_model, "hct", samples8)
        for a in ATTRIBUTES:
            if ensemble.per_condition_counts[a]:
                assert ensemble.per_condition_mean_sisdr[a] == pytest.approx(
                    single.per_condition_mean_sisdr[a], abs=1e-9
                )

    def test_missing_specialist_rejected(self, samples8, tiny_model):
        with pytest.raises(ConfigurationError):
            evaluate_single_condition_ensemble({"gender": tiny_model}, samples8)


class TestEmission:
    def test_report_files_and_round_trip(self, tmp_path, samples8, tiny_model):
        report = evaluate_separation(tiny_model, "hct", samples8)
        paths = emit_separation_report(report, tmp_path, seed=0)
        payload = json.loads(paths["json"].read_text())
        assert payload["overall_mean_sisdr"] == pytest.approx(
            report.overall_mean_sisdr, abs=1e-9
        )
        assert len(payload["per_sample"]) == len(samples8)
        assert "config_hash" in payload["provenance"]
        csv_lines = paths["csv"].read_text().strip().splitlines()
        assert csv_lines[0].startswith("# config_hash=")
        header = csv_lines[1].split(",")
        assert header[1:5] == list(ATTRIBUTES)
        assert "n_negative" in header

    def test_accuracy_matrix_shape(self, tmp_path):
        matrix = np.full((4, 4), 0.9)
        np.fill_diagonal(matrix, np.nan)
        paths = emit_accuracy_matrix(matrix, tmp_path, seed=1)
        lines = paths["csv"].read_text().strip().splitlines()
        assert len(lines) == 2 + 4  # provenance, header, 4 given-rows
        for row in lines[2:]:
            cells = row.split(",")[1:]
            assert len(cells) == 4
            assert sum(1 for c in cells if c) == 3  # diagonal blank

    def test_scatter_artifact(self, tmp_path, samples8, tiny_model):
        r1 = evaluate_separation(tiny_model, "hct", samples8, checkpoint_id="a")
        r2 = evaluate_separation(None, "hct", samples8, forward=mixture_passthrough)
        artifact = ScatterArtifact.from_reports(r1, r2)
        assert len(artifact.sisdr_a) == len(samples8)
        stats = artifact.stats()
        assert stats["mean_b"] == pytest.approx(r2.overall_mean_sisdr, abs=1e-9)
        paths = emit_scatter(artifact, tmp_path, seed=0)
        rows = paths["csv"].read_text().strip().splitlines()
        assert len(rows) == 2 + len(samples8)
        assert paths["image"].exists()
        assert paths["image"].stat().st_size > 0

    def test_emit_reports_bundle(self, tmp_path, samples8, tiny_model):
        r1 = evaluate_separation(tiny_model, "hct", samples8)
        r2 = evaluate_separation(None, "hct", samples8, forward=mixture_passthrough)
        matrix = np.full((4, 4), 0.8)
        np.fill_diagonal(matrix, np.nan)
        paths = emit_reports(
            [r1, r2], tmp_path, seed=3, accuracy_matrix=matrix, scatter_pair=(r1, r2)
        )
        for key in ("hct_json", "hct_csv", "accuracy_csv", "scatter_csv", "scatter_image"):
            assert paths[key].exists()
