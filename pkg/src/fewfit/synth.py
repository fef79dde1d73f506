"""Synthetic many-class benchmark generator.

Each class owns a disjoint signature vocabulary; texts mix signature tokens
(possibly leaked from a neighboring class) with a shared noise vocabulary.
Desk-scale stand-in for large-label-space intent datasets.
"""

from dataclasses import dataclass

import numpy as np

from .data_io import Dataset
from .errors import ConfigError


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 50
    signature_tokens_per_class: int = 4
    shared_noise_vocab: int = 200
    tokens_per_text: int = 8
    signature_fraction: float = 0.6
    overlap_prob: float = 0.0  # 0.3 in the hard preset
    k_train: int = 5
    k_test: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes")
        if not 0.0 < self.signature_fraction <= 1.0:
            raise ConfigError("signature_fraction must be in (0, 1]")
        if not 0.0 <= self.overlap_prob < 1.0:
            raise ConfigError("overlap_prob must be in [0, 1)")


HARD_OVERLAP = 0.3


def generate_synthetic(spec):
    """Return (train, test) Datasets, deterministic per seed and disjoint."""
    rng = np.random.default_rng(spec.seed)
    M = spec.num_classes
    width = max(3, len(str(M - 1)))
    labels = [f"class_{c:0{width}d}" for c in range(M)]
    signatures = [
        [f"sig{c}t{t}" for t in range(spec.signature_tokens_per_class)]
        for c in range(M)
    ]
    noise = [f"noise{t}" for t in range(spec.shared_noise_vocab)]
    n_sig = max(1, round(spec.signature_fraction * spec.tokens_per_text))
    n_noise = spec.tokens_per_text - n_sig

    seen = set()

    def make_text(c):
        for _ in range(100):
            tokens = []
            for _ in range(n_sig):
                src = c
                if spec.overlap_prob and rng.random() < spec.overlap_prob:
                    src = (c + 1) % M
                sig = signatures[src]
                tokens.append(sig[rng.integers(len(sig))])
            for _ in range(n_noise):
                tokens.append(noise[rng.integers(len(noise))])
            order = rng.permutation(len(tokens))
            text = " ".join(tokens[i] for i in order)
            if text not in seen:
                seen.add(text)
                return text
        raise ConfigError(
            "could not generate enough distinct texts; "
            "increase vocab sizes or tokens_per_text"
        )

    train_rows, test_rows = [], []
    for c in range(M):
        for _ in range(spec.k_train):
            train_rows.append((make_text(c), labels[c]))
        for _ in range(spec.k_test):
            test_rows.append((make_text(c), labels[c]))
    return Dataset(examples=train_rows), Dataset(examples=test_rows)
