"""Evaluation and artifact emission.

Per-condition SI-SDR tables, the single-condition specialist ensemble, the
completion accuracy matrix, and paired per-sample scatter comparisons. The
evaluation condition for each test sample is drawn once from the sample seed
over all four attributes, so every model evaluated on the same stream sees
byte-identical (mixture, condition) queries and per-sample results pair up.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .completion import CompletionModel
from .conditioning import ATTRIBUTES, decode_condition, sample_condition
from .datagen import MixtureSample
from .errors import ConfigurationError, DomainError
from .harness import build_condition_input, parse_mode
from .separation import SeparationModel, oracle_select, separate, si_sdr

_EVAL_COND_NS = 0xE7A1


def eval_condition_for(sample: MixtureSample) -> tuple[np.ndarray, int]:
    """The frozen evaluation query for one sample: uniform over all four
    attributes, derived solely from the sample seed."""
    rng = np.random.default_rng(np.random.SeedSequence([_EVAL_COND_NS, sample.seed]))
    return sample_condition(sample.attributes, rng)


@dataclass
class SampleResult:
    seed: int
    condition_attribute: str
    condition_value: str
    target_index: int
    sisdr_db: float
    input_sisdr_db: float
    sisdri_db: float


@dataclass
class SeparationReport:
    mode: str
    checkpoint_id: str
    n_samples: int
    overall_mean_sisdr: float
    per_condition_mean_sisdr: dict[str, float]
    per_condition_counts: dict[str, int]
    mean_sisdri: float
    n_negative_sisdr: int
    per_sample: list[SampleResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _aggregate(mode: str, checkpoint_id: str, results: list[SampleResult]) -> SeparationReport:
    values = np.array([r.sisdr_db for r in results])
    per_cond = {}
    per_counts = {}
    for attribute in ATTRIBUTES:
        sel = [r.sisdr_db for r in results if r.condition_attribute == attribute]
        per_counts[attribute] = len(sel)
        per_cond[attribute] = float(np.mean(sel)) if sel else float("nan")
    return SeparationReport(
        mode=mode,
        checkpoint_id=checkpoint_id,
        n_samples=len(results),
        overall_mean_sisdr=float(values.mean()),
        per_condition_mean_sisdr=per_cond,
        per_condition_counts=per_counts,
        mean_sisdri=float(np.mean([r.sisdri_db for r in results])),
        n_negative_sisdr=int((values < 0.0).sum()),
        per_sample=results,
    )


def evaluate_separation(
    model: SeparationModel,
    mode: str,
    test_stream,
    completion_model: CompletionModel | None = None,
    checkpoint_id: str = "",
    forward=None,
) -> SeparationReport:
    """Evaluate one model over a fixed test stream.

    For pit mode the output closest to the target (oracle selection) is
    scored; conditional modes score the designated target output. ``forward``
    may override the model call for oracle/passthrough baselines in tests: it
    receives (sample, cond) and returns the pair of estimated waveforms.
    """
    base, _ = parse_mode(mode)
    if base == "completed" and completion_model is None:
        raise ConfigurationError("evaluating mode 'completed' needs the completion model")
    if base != "pit" and model is not None:
        width = model.config.condition_width
        expected = 16 if base in ("completed", "completion_oracle") else 8
        if width != expected:
            raise ConfigurationError(
                f"checkpoint with condition_width {width} cannot be evaluated "
                f"in mode {mode!r} (needs {expected})"
            )

    results = []
    for sample in test_stream:
        c, target = eval_condition_for(sample)
        attribute, value = decode_condition(c)
        cond = build_condition_input(mode, c, sample, target, completion_model)
        if forward is not None:
            est_pair = forward(sample, cond)
        else:
            est_pair = separate(model, sample.mixture, cond if cond.size else None)
        s_t = sample.sources[target]
        if base == "pit":
            est = oracle_select(est_pair, s_t)
        else:
            est = np.asarray(est_pair[0])
        value_db = float(si_sdr(est, s_t))
        input_db = float(si_sdr(sample.mixture, s_t))
        results.append(
            SampleResult(
                seed=sample.seed,
                condition_attribute=attribute,
                condition_value=value,
                target_index=target,
                sisdr_db=value_db,
                input_sisdr_db=input_db,
                sisdri_db=value_db - input_db,
            )
        )
    if not results:
        raise DomainError("evaluation needs a non-empty test stream")
    return _aggregate(mode, checkpoint_id, results)


def evaluate_single_condition_ensemble(
    models: dict[str, SeparationModel],
    test_stream,
    checkpoint_id: str = "ensemble",
) -> SeparationReport:
    """Route each sample to the specialist matching its evaluation condition."""
    missing = [a for a in ATTRIBUTES if a not in models]
    if missing:
        raise ConfigurationError(f"ensemble lacks specialist models for {missing}")

    results = []
    for sample in test_stream:
        c, target = eval_condition_for(sample)
        attribute, value = decode_condition(c)
        model = models[attribute]
        cond = build_condition_input(f"single:{attribute}", c, sample, target)
        est_pair = separate(model, sample.mixture, cond)
        s_t = sample.sources[target]
        value_db = float(si_sdr(est_pair[0], s_t))
        input_db = float(si_sdr(sample.mixture, s_t))
        results.append(
            SampleResult(
                seed=sample.seed,
                condition_attribute=attribute,
                condition_value=value,
                target_index=target,
                sisdr_db=value_db,
                input_sisdr_db=input_db,
                sisdri_db=value_db - input_db,
            )
        )
    if not results:
        raise DomainError("evaluation needs a non-empty test stream")
    return _aggregate("single_condition_ensemble", checkpoint_id, results)


@dataclass
class ScatterArtifact:
    """Paired per-sample SI-SDR of two models on the identical test stream."""

    label_a: str
    label_b: str
    seeds: list[int]
    conditions: list[str]
    sisdr_a: list[float]
    sisdr_b: list[float]

    @classmethod
    def from_reports(cls, a: SeparationReport, b: SeparationReport) -> "ScatterArtifact":
        by_seed_b = {r.seed: r for r in b.per_sample}
        seeds, conds, va, vb = [], [], [], []
        for r in a.per_sample:
            other = by_seed_b.get(r.seed)
            if other is None:
                raise DomainError(f"sample seed {r.seed} missing from second report")
            if (other.condition_attribute, other.condition_value) != (
                r.condition_attribute,
                r.condition_value,
            ):
                raise DomainError(
                    f"sample seed {r.seed} was evaluated under different conditions"
                )
            seeds.append(r.seed)
            conds.append(f"{r.condition_attribute}:{r.condition_value}")
            va.append(r.sisdr_db)
            vb.append(other.sisdr_db)
        return cls(a.mode, b.mode, seeds, conds, va, vb)

    def stats(self) -> dict[str, float]:
        return {
            "mean_a": float(np.mean(self.sisdr_a)),
            "std_a": float(np.std(self.sisdr_a)),
            "mean_b": float(np.mean(self.sisdr_b)),
            "std_b": float(np.std(self.sisdr_b)),
        }


def config_hash(config) -> str:
    """Stable short hash of any JSON-serializable config structure."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _provenance(report_meta: dict, seed: int) -> dict:
    return {"config_hash": config_hash(report_meta), "seed": seed}


def emit_separation_report(
    report: SeparationReport, out_dir, seed: int, meta: dict | None = None,
    name: str | None = None,
) -> dict[str, Path]:
    """Write JSON (full per-sample records) and CSV (table-layout) artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = meta or {"mode": report.mode, "checkpoint_id": report.checkpoint_id}
    prov = _provenance(meta, seed)
    name = name or report.mode

    json_path = out / f"separation_{name}.json"
    payload = {"provenance": prov, **report.to_dict()}
    json_path.write_text(json.dumps(payload, indent=2))

    csv_path = out / f"separation_{name}.csv"
    cols = ",".join(ATTRIBUTES)
    lines = [
        f"# config_hash={prov['config_hash']} seed={prov['seed']}",
        f"mode,{cols},overall,mean_sisdri,n_negative,n_samples",
        ",".join(
            [report.mode]
            + [f"{report.per_condition_mean_sisdr[a]:.4f}" for a in ATTRIBUTES]
            + [
                f"{report.overall_mean_sisdr:.4f}",
                f"{report.mean_sisdri:.4f}",
                str(report.n_negative_sisdr),
                str(report.n_samples),
            ]
        ),
    ]
    csv_path.write_text("\n".join(lines) + "\n")
    return {"json": json_path, "csv": csv_path}


def emit_accuracy_matrix(
    matrix: np.ndarray, out_dir, seed: int, meta: dict | None = None, name: str = "completion"
) -> dict[str, Path]:
    """Accuracy matrix as CSV (given-attribute rows) plus JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(meta or {"artifact": name}, seed)

    csv_path = out / f"{name}_accuracy.csv"
    lines = [
        f"# config_hash={prov['config_hash']} seed={prov['seed']}",
        "given," + ",".join(ATTRIBUTES),
    ]
    for gi, given in enumerate(ATTRIBUTES):
        cells = []
        for pi in range(len(ATTRIBUTES)):
            cells.append("" if gi == pi else f"{matrix[gi, pi]:.4f}")
        lines.append(f"{given}," + ",".join(cells))
    csv_path.write_text("\n".join(lines) + "\n")

    json_path = out / f"{name}_accuracy.json"
    payload = {
        "provenance": prov,
        "given": list(ATTRIBUTES),
        "matrix": [[None if gi == pi else float(matrix[gi, pi]) for pi in range(4)]
                   for gi in range(4)],
    }
    json_path.write_text(json.dumps(payload, indent=2))
    return {"json": json_path, "csv": csv_path}


def emit_scatter(
    artifact: ScatterArtifact, out_dir, seed: int, meta: dict | None = None
) -> dict[str, Path]:
    """Paired scatter comparison: CSV of per-sample pairs plus a rendered image."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(meta or {"a": artifact.label_a, "b": artifact.label_b}, seed)
    stats = artifact.stats()

    csv_path = out / f"scatter_{artifact.label_a}_vs_{artifact.label_b}.csv"
    lines = [
        f"# config_hash={prov['config_hash']} seed={prov['seed']}",
        f"seed,condition,sisdr_{artifact.label_a},sisdr_{artifact.label_b}",
    ]
    for s, c, va, vb in zip(artifact.seeds, artifact.conditions, artifact.sisdr_a, artifact.sisdr_b):
        lines.append(f"{s},{c},{va:.4f},{vb:.4f}")
    csv_path.write_text("\n".join(lines) + "\n")

    png_path = out / f"scatter_{artifact.label_a}_vs_{artifact.label_b}.png"
    _render_scatter(artifact, stats, png_path)
    return {"csv": csv_path, "image": png_path}


def _render_scatter(artifact: ScatterArtifact, stats: dict, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(artifact.sisdr_a, artifact.sisdr_b, s=8, alpha=0.5)
    lo = min(min(artifact.sisdr_a), min(artifact.sisdr_b))
    hi = max(max(artifact.sisdr_a), max(artifact.sisdr_b))
    ax.plot([lo, hi], [lo, hi], color="gray", linewidth=0.8)
    ax.axvline(stats["mean_a"], color="black")
    ax.axvline(stats["mean_a"] - stats["std_a"], color="black", linestyle="--", linewidth=0.8)
    ax.axvline(stats["mean_a"] + stats["std_a"], color="black", linestyle="--", linewidth=0.8)
    ax.axhline(stats["mean_b"], color="black")
    ax.axhline(stats["mean_b"] - stats["std_b"], color="black", linestyle="--", linewidth=0.8)
    ax.axhline(stats["mean_b"] + stats["std_b"], color="black", linestyle="--", linewidth=0.8)
    ax.set_xlabel(f"SI-SDR (dB), {artifact.label_a}")
    ax.set_ylabel(f"SI-SDR (dB), {artifact.label_b}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_reports(
    reports: list[SeparationReport],
    out_dir,
    seed: int,
    accuracy_matrix: np.ndarray | None = None,
    scatter_pair: tuple[SeparationReport, SeparationReport] | None = None,
    meta: dict | None = None,
) -> dict[str, Path]:
    """Write every evaluation artifact for a run into one directory."""
    out = Path(out_dir)
    paths: dict[str, Path] = {}
    seen: dict[str, int] = {}
    for report in reports:
        seen[report.mode] = seen.get(report.mode, 0) + 1
        name = report.mode if seen[report.mode] == 1 else f"{report.mode}_{seen[report.mode]}"
        emitted = emit_separation_report(report, out, seed, meta, name=name)
        paths[f"{name}_json"] = emitted["json"]
        paths[f"{name}_csv"] = emitted["csv"]
    if accuracy_matrix is not None:
        emitted = emit_accuracy_matrix(accuracy_matrix, out, seed, meta)
        paths["accuracy_json"] = emitted["json"]
        paths["accuracy_csv"] = emitted["csv"]
    if scatter_pair is not None:
        artifact = ScatterArtifact.from_reports(*scatter_pair)
        emitted = emit_scatter(artifact, out, seed, meta)
        paths["scatter_csv"] = emitted["csv"]
        paths["scatter_image"] = emitted["image"]
    return paths
