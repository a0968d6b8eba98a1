#!/usr/bin/env python3
"""Print the paper-preset hyperparameters and model scales.

Builds both paper-preset networks, reports exact trainable parameter counts
(FiLM-inclusive and -exclusive) against the published reference sizes, and
dumps every training hyperparameter for the configuration audit.
"""

from condsep.completion import CompletionModel, CompletionModelConfig, CompletionTrainConfig
from condsep.datagen import MixSpec
from condsep.harness import ExperimentConfig
from condsep.separation import SeparationModel, SeparationModelConfig, param_count

REF_COMPLETION = 0.63e6
REF_SEPARATION = 5.38e6


def main():
    print("== model scales ==")
    completion = param_count(CompletionModel(CompletionModelConfig.paper()))
    print(
        f"completion: {completion['total']:,} params "
        f"({completion['total']/REF_COMPLETION - 1:+.1%} vs 0.63M reference), "
        f"FiLM {completion['film']:,}, trunk {completion['without_film']:,}"
    )
    for width, label in ((8, "one-hot"), (16, "completion-conditioned"), (0, "pit")):
        model = SeparationModel(SeparationModelConfig.paper(condition_width=width))
        counts = param_count(model)
        ref = f" ({counts['total']/REF_SEPARATION - 1:+.1%} vs 5.38M reference)" if width == 8 else ""
        print(
            f"separation[{label}]: {counts['total']:,} params{ref}, "
            f"FiLM {counts['film']:,}, trunk {counts['without_film']:,}"
        )

    print("\n== training presets ==")
    sep = ExperimentConfig.paper("hct", "easy")
    print(
        f"separation: epochs {sep.epochs}, batch {sep.batch_size}, Adam lr {sep.lr}, "
        f"halved every {sep.lr_halving_period} epochs, weight decay {sep.weight_decay}, "
        f"grad clip {sep.grad_clip_l2}"
    )
    for partition in ("easy", "hard"):
        comp = CompletionTrainConfig.paper(partition)
        print(
            f"completion[{partition}]: epochs {comp.epochs}, batch {comp.batch_size}, "
            f"Adam lr {comp.lr}, halved every {comp.lr_halving_period} epochs, "
            f"weight decay {comp.weight_decay}, grad clip {comp.grad_clip_l2}"
        )

    print("\n== dataset presets ==")
    print(f"splits: train {sep.n_train}, val {sep.n_val}, test {sep.n_test}")
    for partition in ("easy", "hard"):
        spec = MixSpec.for_partition(partition)
        print(
            f"{partition}: {spec.sample_rate} Hz, {spec.clip_len_samples} samples, "
            f"overlap {spec.overlap_range}, |SNR| dB {spec.snr_range_db}"
        )


if __name__ == "__main__":
    main()
