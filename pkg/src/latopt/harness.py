"""End-to-end experiment runner: strategy comparison over seeds with the
dev-set learning-rate protocol, model selection, positive-class F
reporting, and resource accounting.

Learning-rate protocol: the base strategies (``adv``, ``mtl``) are
grid-searched on the target dev split; their lookahead variants inherit
the winning rate unchanged. That asymmetry is deliberate and is the
default the comparison experiments rely on.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .data import DomainDataset, GeneratorConfig, prepare_transfer_pair, load_dataset
from .metrics import f_score, paired_sign_test
from .model import ModelConfig, ModelParams, init_params, predict
from .training import TrainingAborted, TrainingConfig, train_run

THREADS_ENV = "LATOPT_THREADS"

SUMMARY_COLUMNS = (
    "strategy",
    "seed",
    "devF",
    "testF",
    "testR",
    "testP",
    "epoch",
    "wall_ms",
    "aux_state",
    "rel_time",
    "rel_state",
)

_BASE_OF = {
    "adv": "adv",
    "adv+lo": "adv",
    "adv+maml": "adv",
    "mtl": "mtl",
    "mtl+lo": "mtl",
    "seq": "seq",
}


@dataclass
class ExperimentSpec:
    strategies: list = field(default_factory=lambda: ["mtl", "mtl+lo", "adv", "adv+lo"])
    seeds: list = field(default_factory=lambda: list(range(10)))
    lr_grid: list = field(default_factory=lambda: [3e-4, 1e-3, 3e-3])
    gamma: float = 0.25  # lookahead step for the lo variants at experiment scale
    epochs: int = 5
    batch_size: int = 128
    selection: str = "dev_f"
    source_path: str | None = None
    target_path: str | None = None
    generator: GeneratorConfig | None = None
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if not self.strategies:
            raise ValueError("spec needs at least one strategy")
        if not self.seeds:
            raise ValueError("spec needs at least one seed")
        if not self.lr_grid:
            raise ValueError("spec needs a nonempty lr grid")
        unknown = [s for s in self.strategies if s not in _BASE_OF]
        if unknown:
            raise ValueError(f"unknown strategies {unknown}")

    @classmethod
    def from_json(cls, obj) -> "ExperimentSpec":
        if isinstance(obj, (str, Path)):
            with open(obj) as fh:
                obj = json.load(fh)
        obj = dict(obj)
        if obj.get("generator") is not None:
            obj["generator"] = GeneratorConfig(**obj["generator"])
        if obj.get("model") is not None:
            obj["model"] = ModelConfig(**obj["model"])
        return cls(**obj)

    def to_json(self) -> dict:
        out = asdict(self)
        return out


@dataclass
class MetricsReport:
    strategy: str
    seed: int
    lr: float
    dev_f: float
    test_f: float
    test_r: float
    test_p: float
    selected_epoch: int
    wall_ms: float
    aux_state: int
    failed: bool = False
    error: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


def select_model(checkpoints: list, dev_metrics: list) -> int:
    """Index of the checkpoint with the best dev metric; ties go to the
    earliest epoch."""
    if not checkpoints:
        raise ValueError("select_model: no checkpoints")
    if len(checkpoints) != len(dev_metrics):
        raise ValueError("select_model: metric/checkpoint length mismatch")
    best = 0
    for i, m in enumerate(dev_metrics):
        if m > dev_metrics[best]:
            best = i
    return best


def _splits(ds: DomainDataset) -> dict:
    return {name: ds.pairs(name) for name in ("train", "dev", "test")}


def _test_metrics(params: ModelParams, splits: dict, domain: str):
    test = splits["test"]
    preds = predict(params, [e[0] for e in test], domain)
    labels = np.array([e[1] for e in test])
    return f_score(preds, labels)


def sequential_finetune(
    params: ModelParams,
    source_splits: dict,
    target_splits: dict,
    config: TrainingConfig,
    seed: int,
    phase1_epochs: int | None = None,
):
    """Two-phase fine-tuning: single-task source training with source-dev
    selection, then single-task target training (fresh target head, since
    phase one never touches it) with target-dev selection.

    Returns (selected params, phase-2 RunResult, selected epoch).
    """
    p1_epochs = config.epochs if phase1_epochs is None else phase1_epochs
    params = params.copy()
    wall = 0.0
    if p1_epochs > 0:
        cfg1 = TrainingConfig(**{**asdict(config), "epochs": p1_epochs})
        run1 = train_run("single:source", params, source_splits, target_splits, cfg1, seed, eval_domain="source")
        params = run1.checkpoints[select_model(run1.checkpoints, run1.dev_f)].copy()
        wall += run1.wall_ms
    run2 = train_run("single:target", params, source_splits, target_splits, config, seed + 1, eval_domain="target")
    run2.wall_ms += wall
    chosen = select_model(run2.checkpoints, run2.dev_f)
    return run2.checkpoints[chosen], run2, chosen


def _run_strategy(strategy, init, source_splits, target_splits, config, seed):
    params = init.copy()
    if strategy == "seq":
        selected, run, epoch = sequential_finetune(params, source_splits, target_splits, config, seed)
        return run, selected, epoch
    run = train_run(strategy, params, source_splits, target_splits, config, seed)
    epoch = select_model(run.checkpoints, run.dev_f)
    return run, run.checkpoints[epoch], epoch


def _grid_search(base, init, source_splits, target_splits, spec, seed):
    """Best LR by target-dev F; ties break toward the smaller rate.
    Returns (lr, cached run tuple) so the base run is not retrained."""
    best = None
    for lr in sorted(spec.lr_grid):
        config = TrainingConfig(lr=lr, gamma=0.0, batch_size=spec.batch_size, epochs=spec.epochs)
        run, selected, epoch = _run_strategy(base, init, source_splits, target_splits, config, seed)
        dev = run.dev_f[epoch]
        if best is None or dev > best[0]:
            best = (dev, lr, (run, selected, epoch))
    return best[1], best[2]


def _seed_jobs(spec, seed, source_splits, target_splits):
    """All reports for one seed: shared init, base grid search, variants."""
    init = init_params(spec.model, seed)
    reports = []
    bases_needed = sorted({_BASE_OF[s] for s in spec.strategies if _BASE_OF[s] != "seq"})
    best_lr: dict[str, float] = {}
    cached: dict[str, tuple] = {}
    for base in bases_needed:
        try:
            lr, run_tuple = _grid_search(base, init, source_splits, target_splits, spec, seed)
        except TrainingAborted as e:
            for s in spec.strategies:
                if _BASE_OF[s] == base:
                    reports.append(_failed_report(s, seed, 0.0, str(e)))
            continue
        best_lr[base] = lr
        cached[base] = run_tuple

    for strategy in spec.strategies:
        base = _BASE_OF[strategy]
        if base != "seq" and base not in best_lr:
            continue  # already reported as failed via the base
        try:
            if strategy == base and strategy in cached:
                run, selected, epoch = cached[strategy]
                lr = best_lr[strategy]
            elif strategy == "seq":
                lr, (run, selected, epoch) = _grid_search("seq", init, source_splits, target_splits, spec, seed)
            else:
                lr = best_lr[base]
                config = TrainingConfig(
                    lr=lr, gamma=spec.gamma, batch_size=spec.batch_size, epochs=spec.epochs
                )
                run, selected, epoch = _run_strategy(
                    strategy, init, source_splits, target_splits, config, seed
                )
            f, r, p = _test_metrics(selected, target_splits, "target")
            reports.append(
                MetricsReport(
                    strategy, seed, lr, run.dev_f[epoch], f, r, p, epoch, run.wall_ms, run.peak_aux
                )
            )
        except TrainingAborted as e:
            reports.append(_failed_report(strategy, seed, 0.0, str(e)))
    return reports


def _failed_report(strategy, seed, lr, message) -> MetricsReport:
    return MetricsReport(strategy, seed, lr, 0.0, 0.0, 0.0, 0.0, -1, 0.0, 0, failed=True, error=message)


def load_pair(spec: ExperimentSpec):
    if spec.source_path and spec.target_path:
        return load_dataset(spec.source_path), load_dataset(spec.target_path)
    return prepare_transfer_pair(spec.generator or GeneratorConfig())


def run_experiment(spec: ExperimentSpec, out_dir=None, source=None, target=None):
    """Run every (strategy, seed) cell and aggregate.

    Returns (reports, analysis). ``analysis`` holds per-strategy mean/std
    test F, the paired sign-test p-values for the lookahead-vs-base
    comparisons, and the relative resource table. Failed runs are kept in
    the reports with ``failed=True``.
    """
    if source is None or target is None:
        source, target = load_pair(spec)
    source_splits, target_splits = _splits(source), _splits(target)

    threads = int(os.environ.get(THREADS_ENV, "1") or "1")
    t0 = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = pool.map(
                lambda s: _seed_jobs(spec, s, source_splits, target_splits), spec.seeds
            )
            reports = [r for chunk in chunks for r in chunk]
    else:
        reports = [r for s in spec.seeds for r in _seed_jobs(spec, s, source_splits, target_splits)]
    wall_s = time.perf_counter() - t0

    reports.sort(key=lambda r: (r.strategy, r.seed))
    analysis = analyze(spec, reports)
    analysis["wall_s"] = wall_s
    if out_dir is not None:
        write_outputs(spec, reports, analysis, out_dir)
    return reports, analysis


def _rel_state(strategy: str, spec: ExperimentSpec, report: MetricsReport) -> float:
    """Lookahead-related state relative to the per-batch latent quantum.

    Every strategy materializes the 2*B*D latents; parameter-space
    lookahead adds its weight copy on top, so the baseline row is exactly
    1.00x and the encoder-space variant pays (|w_b| + 2BD) / (2BD).
    """
    quantum = 2 * spec.batch_size * spec.model.latent_dim
    extra = report.aux_state if strategy == "adv+maml" else 0
    return (quantum + extra) / quantum


def analyze(spec: ExperimentSpec, reports: list) -> dict:
    ok = [r for r in reports if not r.failed]
    by_strategy: dict[str, list] = {}
    for r in ok:
        by_strategy.setdefault(r.strategy, []).append(r)

    def mean_std(values):
        return (float(np.mean(values)), float(np.std(values))) if values else (0.0, 0.0)

    strategies = {}
    for s, rs in sorted(by_strategy.items()):
        mf, sf = mean_std([r.test_f for r in rs])
        strategies[s] = {
            "n": len(rs),
            "mean_test_f": mf,
            "std_test_f": sf,
            "mean_dev_f": mean_std([r.dev_f for r in rs])[0],
            "mean_wall_ms": mean_std([r.wall_ms for r in rs])[0],
            "aux_state": max((r.aux_state for r in rs), default=0),
        }

    comparisons = {}
    for lo, base in (("adv+lo", "adv"), ("mtl+lo", "mtl")):
        if lo in by_strategy and base in by_strategy:
            seeds = sorted(
                {r.seed for r in by_strategy[lo]} & {r.seed for r in by_strategy[base]}
            )
            a = [next(r.test_f for r in by_strategy[lo] if r.seed == s) for s in seeds]
            b = [next(r.test_f for r in by_strategy[base] if r.seed == s) for s in seeds]
            if seeds:
                comparisons[f"{lo} vs {base}"] = {
                    "n_seeds": len(seeds),
                    "mean_diff": float(np.mean(a) - np.mean(b)),
                    "sign_test_p": paired_sign_test(a, b),
                }
    return {
        "strategies": strategies,
        "comparisons": comparisons,
        "n_failed": sum(1 for r in reports if r.failed),
    }


def summary_rows(spec: ExperimentSpec, reports: list) -> list:
    """summary.csv rows; rel_time is wall time against the same seed's
    adversarial baseline (1.00x when that baseline is absent)."""
    adv_wall = {r.seed: r.wall_ms for r in reports if r.strategy == "adv" and not r.failed}
    rows = []
    for r in reports:
        rel_time = r.wall_ms / adv_wall[r.seed] if adv_wall.get(r.seed) else 1.0
        rows.append(
            {
                "strategy": r.strategy,
                "seed": r.seed,
                "devF": r.dev_f,
                "testF": r.test_f,
                "testR": r.test_r,
                "testP": r.test_p,
                "epoch": r.selected_epoch,
                "wall_ms": r.wall_ms,
                "aux_state": r.aux_state,
                "rel_time": rel_time,
                "rel_state": _rel_state(r.strategy, spec, r),
            }
        )
    return rows


def write_outputs(spec: ExperimentSpec, reports, analysis, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "reports.jsonl", "w") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_json()) + "\n")
    with open(out / "summary.csv", "w") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in summary_rows(spec, reports):
            fh.write(",".join(str(row[c]) for c in SUMMARY_COLUMNS) + "\n")
    with open(out / "summary.json", "w") as fh:
        json.dump(analysis, fh, indent=2)


def format_summary(analysis: dict) -> str:
    lines = ["strategy        n   mean testF   std      mean devF"]
    for s, row in analysis["strategies"].items():
        lines.append(
            f"{s:<14}{row['n']:>3}   {row['mean_test_f']:.4f}      {row['std_test_f']:.4f}   {row['mean_dev_f']:.4f}"
        )
    for name, cmp in analysis["comparisons"].items():
        lines.append(
            f"{name}: mean diff {cmp['mean_diff']:+.4f} over {cmp['n_seeds']} seeds, sign-test p={cmp['sign_test_p']:.4f}"
        )
    if analysis.get("n_failed"):
        lines.append(f"FAILED RUNS: {analysis['n_failed']}")
    return "\n".join(lines)
