"""Synthetic two-domain datasets with controllable divergence, the
preprocessing steps (trim, dedup, upsampling), and the unigram KL
divergence diagnostic.

Generator design
----------------
Labels are drawn first (exact class counts per declared positive rate),
then tokens:

- *shared-signal* tokens correlate with the label the same way in both
  domains (positive-signal vs negative-signal subsets),
- *domain-cue* tokens correlate with the label in opposite directions in
  the two domains (cue subset A marks positives in the source but
  negatives in the target),
- everything else is background noise from a common pool.

Because the domains have different positive rates, the cue marginals
diverge: raising ``cue_rate`` raises the unigram KL between the domains,
which is the divergence dial the transfer experiments turn. With no cue
tokens and equal positive rates the two domains are exchangeable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class Example:
    tokens: tuple
    label: int
    split: str


@dataclass
class DomainDataset:
    domain: str
    vocab_size: int
    seed: int
    examples: list = field(default_factory=list)

    def split(self, name: str) -> list:
        return [e for e in self.examples if e.split == name]

    def pairs(self, name: str) -> list:
        """(tokens, label) tuples for one split, as the trainer consumes them."""
        return [(e.tokens, e.label) for e in self.examples if e.split == name]

    def positive_rate(self, split_name: str | None = None) -> float:
        ex = self.examples if split_name is None else self.split(split_name)
        if not ex:
            return 0.0
        return sum(e.label for e in ex) / len(ex)


@dataclass
class GeneratorConfig:
    vocab_size: int = 4096
    n_shared: int = 8  # per polarity (positive-signal and negative-signal subsets)
    n_cues: int = 8  # per cue subset; 0 removes domain cues entirely
    n_background: int = 128
    signal_rate: float = 0.25  # fraction of positions carrying label signal
    cue_rate: float = 0.15  # source fraction carrying domain cues (divergence dial)
    target_cue_rate: float | None = None  # default 0.4*cue_rate: cue mass identifies the domain
    signal_fidelity: float = 0.9
    cue_fidelity: float = 0.95
    min_len: int = 12
    max_len: int = 30
    source_train_size: int = 2048  # the source corpus is the big noisy one
    target_train_size: int = 1024
    test_size: int = 512
    source_positive_rate: float = 0.5
    target_positive_rate: float = 0.18
    seed: int = 7

    def __post_init__(self):
        if self.target_cue_rate is None:
            self.target_cue_rate = 0.4 * self.cue_rate
        sets = self.token_sets()
        used = 2 * self.n_shared + 2 * self.n_cues + self.n_background
        if used > self.vocab_size:
            raise ValueError(f"config needs {used} tokens but vocab_size is {self.vocab_size}")
        for r in (self.source_positive_rate, self.target_positive_rate):
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"positive rate {r} unreachable")
        if min(self.source_train_size, self.target_train_size, self.test_size) < 1:
            raise ValueError("split sizes must be >= 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        assert len(set().union(*sets.values())) == used  # disjoint by construction

    def token_sets(self) -> dict:
        n, c = self.n_shared, self.n_cues
        return {
            "shared_pos": tuple(range(0, n)),
            "shared_neg": tuple(range(n, 2 * n)),
            "cue_a": tuple(range(2 * n, 2 * n + c)),
            "cue_b": tuple(range(2 * n + c, 2 * n + 2 * c)),
            "background": tuple(range(2 * n + 2 * c, 2 * n + 2 * c + self.n_background)),
        }


def _exact_count_labels(n: int, rate: float, rng) -> np.ndarray:
    labels = np.zeros(n, dtype=int)
    labels[: round(n * rate)] = 1
    rng.shuffle(labels)
    return labels


def _sample_example(rng, cfg: GeneratorConfig, sets, label: int, domain: str, split: str) -> Example:
    length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    pos_cue, neg_cue = ("cue_a", "cue_b") if domain == "source" else ("cue_b", "cue_a")
    cue_rate = cfg.cue_rate if domain == "source" else cfg.target_cue_rate
    tokens = []
    kinds = rng.random(length)
    flips = rng.random(length)
    picks = rng.random(length)
    for r, flip, pick in zip(kinds, flips, picks):
        if r < cfg.signal_rate:
            right = flip < cfg.signal_fidelity
            bucket = "shared_pos" if (label == 1) == right else "shared_neg"
        elif cfg.n_cues > 0 and r < cfg.signal_rate + cue_rate:
            right = flip < cfg.cue_fidelity
            bucket = pos_cue if (label == 1) == right else neg_cue
        else:
            bucket = "background"
        members = sets[bucket]
        tokens.append(members[int(pick * len(members))])
    return Example(tuple(tokens), int(label), split)


def _generate_domain(rng, cfg: GeneratorConfig, domain: str, rate: float) -> DomainDataset:
    sets = cfg.token_sets()
    train_size = cfg.source_train_size if domain == "source" else cfg.target_train_size
    examples = []
    for split, size in (("train", train_size), ("test", cfg.test_size)):
        for label in _exact_count_labels(size, rate, rng):
            examples.append(_sample_example(rng, cfg, sets, label, domain, split))
    return DomainDataset(domain, cfg.vocab_size, cfg.seed, examples)


def generate_domain_pair(config: GeneratorConfig):
    """Deterministic (source, target) datasets under the config seed."""
    rng = np.random.default_rng(config.seed)
    source = _generate_domain(rng, config, "source", config.source_positive_rate)
    target = _generate_domain(rng, config, "target", config.target_positive_rate)
    return source, target


# --- preprocessing -----------------------------------------------------------


def dedup_and_trim(dataset: DomainDataset, max_len: int = 100, taken: set | None = None) -> DomainDataset:
    """Truncate sequences to ``max_len``, then drop duplicate sequences
    (first occurrence kept). ``taken`` extends the duplicate check across
    datasets. Truncating first keeps the operation idempotent."""
    seen = set() if taken is None else taken
    kept = []
    for e in dataset.examples:
        tokens = e.tokens[:max_len]
        if tokens in seen:
            continue
        seen.add(tokens)
        kept.append(Example(tokens, e.label, e.split))
    return replace(dataset, examples=kept)


def dedup_pair(source: DomainDataset, target: DomainDataset, max_len: int = 100):
    """Within- and cross-dataset dedup; cross-dataset duplicates are
    removed from the target side."""
    seen: set = set()
    source = dedup_and_trim(source, max_len, seen)
    target = dedup_and_trim(target, max_len, seen)
    return source, target


def split_dev(dataset: DomainDataset, frac: float = 0.1, seed: int = 0) -> DomainDataset:
    """Carve a seeded dev split out of the train split."""
    rng = np.random.default_rng(seed)
    train_idx = [i for i, e in enumerate(dataset.examples) if e.split == "train"]
    n_dev = int(len(train_idx) * frac)
    dev_idx = set(rng.permutation(train_idx)[:n_dev].tolist())
    examples = [
        Example(e.tokens, e.label, "dev") if i in dev_idx else e
        for i, e in enumerate(dataset.examples)
    ]
    return replace(dataset, examples=examples)


def upsample(dataset: DomainDataset, to_size: int, seed: int = 0) -> DomainDataset:
    """Resample each train-split class with replacement up to ``to_size``
    examples; originals are kept. Other splits pass through unchanged."""
    rng = np.random.default_rng(seed)
    train = dataset.split("train")
    rest = [e for e in dataset.examples if e.split != "train"]
    out = list(train)
    for label in (0, 1):
        members = [e for e in train if e.label == label]
        if not members:
            raise ValueError(f"upsample: class {label} is empty")
        if len(members) > to_size:
            raise ValueError(f"upsample: class {label} already exceeds to_size={to_size}")
        extra = rng.integers(0, len(members), size=to_size - len(members))
        out.extend(members[i] for i in extra)
    return replace(dataset, examples=out + rest)


def prepare_transfer_pair(config: GeneratorConfig, max_len: int = 100, dev_frac: float = 0.1):
    """Full pipeline: generate, trim+dedup (cross-duplicates dropped from
    the target), carve dev splits, and upsample the target train classes to
    the source's larger class size."""
    source, target = generate_domain_pair(config)
    source, target = dedup_pair(source, target, max_len)
    source = split_dev(source, dev_frac, config.seed + 1)
    target = split_dev(target, dev_frac, config.seed + 2)
    to_size = max(
        sum(1 for e in source.split("train") if e.label == 0),
        sum(1 for e in source.split("train") if e.label == 1),
    )
    target = upsample(target, to_size, config.seed + 3)
    return source, target


# --- unigram statistics -------------------------------------------------------


@dataclass
class UnigramModel:
    counts: dict
    total: int

    @property
    def vocabulary(self) -> set:
        return set(self.counts)

    def prob(self, token) -> float:
        return self.counts[token] / self.total

    def probs(self) -> dict:
        return {g: c / self.total for g, c in self.counts.items()}


def unigram_model(dataset: DomainDataset, splits=None) -> UnigramModel:
    counts: dict = {}
    for e in dataset.examples:
        if splits is not None and e.split not in splits:
            continue
        for t in e.tokens:
            counts[t] = counts.get(t, 0) + 1
    return UnigramModel(counts, sum(counts.values()))


def kl_over_overlap(target_counts: dict, source_counts: dict) -> float:
    """KL(target || source) over the overlapped vocabulary, with both
    distributions renormalized over the overlap. Natural log."""
    overlap = sorted(set(target_counts) & set(source_counts))
    if not overlap:
        raise ValueError("kl_over_overlap: empty overlapped vocabulary")
    t_total = sum(target_counts[g] for g in overlap)
    s_total = sum(source_counts[g] for g in overlap)
    kl = 0.0
    for g in overlap:
        pt = target_counts[g] / t_total
        ps = source_counts[g] / s_total
        kl += pt * math.log(pt / ps)
    return kl


def unigram_kl(source: DomainDataset, target: DomainDataset, splits=None) -> float:
    """d_KL(P_target || P_source) over the overlapped vocabulary."""
    return kl_over_overlap(unigram_model(target, splits).counts, unigram_model(source, splits).counts)


# --- file format ---------------------------------------------------------------


def save_dataset(dataset: DomainDataset, path) -> None:
    """JSON-lines: one header object, then one object per example."""
    with open(path, "w") as fh:
        fh.write(
            json.dumps(
                {"domain": dataset.domain, "vocab_size": dataset.vocab_size, "seed": dataset.seed}
            )
            + "\n"
        )
        for e in dataset.examples:
            fh.write(json.dumps({"tokens": list(e.tokens), "label": e.label, "split": e.split}) + "\n")


def load_dataset(path) -> DomainDataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        examples = []
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            examples.append(Example(tuple(obj["tokens"]), int(obj["label"]), obj["split"]))
    return DomainDataset(header["domain"], int(header["vocab_size"]), int(header["seed"]), examples)
