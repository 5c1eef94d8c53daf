"""Seed sweeps and side-by-side strategy comparison.

An experiment config is one JSON object::

    {
      "name": "bcd",
      "dataset": {"kind": "breast_cancer"},
      "partition": {"k": 4, "alpha": 0.5, "iid": false, "overlap_fraction": 0.5,
                    "min_per_client": 8, "valid_fraction": 0.25,
                    "hold_out_groups": false},
      "federation": {"t_max": 50, "lr": 0.05, "batch_size": 16, "alpha": 0.5,
                     "beta": 5.0, "aggregation": "mean", "embedding_dim": 32,
                     "depth_range": [1, 3], "width_range": [16, 64]},
      "strategy": "ours",
      "strategies": ["solo", "avg", "avgkd", "ours"],
      "seeds": [0, 1, 2, 3, 4],
      "output": {"dir": "out", "rounds": true}
    }

``dataset.kind`` is one of ``breast_cancer`` (scikit-learn's bundled copy),
``synthetic`` (``spec`` holds :class:`~hetfl.datasets.SyntheticSpec` fields),
or ``csv`` (``path``, ``label_column``, optional ``schema``; ``preset`` may
name a UCI layout to supply the last two).  Relative paths resolve against
the config file's directory.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from hetfl.data import Table, load_csv, make_plan, make_shards, normalize
from hetfl.datasets import UCI_PRESETS, breast_cancer_table, generate_synthetic
from hetfl.errors import InvalidArgumentError
from hetfl.federation import FederationConfig, Strategy, build_models, run_federation

__all__ = [
    "ExperimentConfig", "ExperimentReport", "PartitionConfig", "load_config", "load_table",
    "build_shards", "run_experiment", "compare_strategies", "write_reports", "format_table",
    "generate_synthetic",
]

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
TABLE_ORDER = (Strategy.SOLO, Strategy.AVG, Strategy.AVGKD, Strategy.OURS)


@dataclass(frozen=True)
class PartitionConfig:
    k: int = 4
    alpha: float = 0.5
    iid: bool = False
    overlap_fraction: float = 0.5
    min_per_client: int = 8
    valid_fraction: float = 0.25
    hold_out_groups: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    name: str = "experiment"
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    strategies: tuple[Strategy, ...] = TABLE_ORDER
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    out_dir: str | None = None
    write_rounds: bool = True
    base_dir: str = "."

    def __post_init__(self):
        if not self.seeds:
            raise InvalidArgumentError("need at least one seed")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "strategies", tuple(Strategy(s) for s in self.strategies))

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "ExperimentConfig":
        if "dataset" not in doc:
            raise InvalidArgumentError("config needs a 'dataset' section")
        fed = dict(doc.get("federation", {}))
        if "strategy" in doc:
            fed["strategy"] = doc["strategy"]
        out = doc.get("output", {})
        return cls(
            dataset=dict(doc["dataset"]),
            name=doc.get("name", "experiment"),
            partition=PartitionConfig(**doc.get("partition", {})),
            federation=FederationConfig(**fed),
            strategies=tuple(doc.get("strategies", [s.value for s in TABLE_ORDER])),
            seeds=tuple(doc.get("seeds", DEFAULT_SEEDS)),
            out_dir=out.get("dir"),
            write_rounds=out.get("rounds", True),
            base_dir=str(base_dir),
        )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return ExperimentConfig.from_dict(json.loads(path.read_text()), base_dir=path.parent)


@dataclass
class ExperimentReport:
    strategy: Strategy
    seeds: tuple[int, ...]
    best: dict[int, float] = field(default_factory=dict)
    errors: dict[int, str] = field(default_factory=dict)
    rounds: dict[int, list] = field(default_factory=dict)

    @property
    def values(self) -> list[float]:
        return [self.best[s] for s in self.seeds if s in self.best]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else float("nan")

    @property
    def std(self) -> float:
        """Population standard deviation over the successful seeds."""
        return float(np.std(self.values)) if self.values else float("nan")

    @property
    def ok(self) -> bool:
        return not self.errors


def load_table(dataset: dict, base_dir=".") -> Table:
    kind = dataset.get("kind", "csv")
    if kind == "breast_cancer":
        return breast_cancer_table()
    if kind == "synthetic":
        return generate_synthetic(dict(dataset.get("spec", {})))
    if kind == "csv":
        preset = UCI_PRESETS.get(dataset.get("preset", ""), {})
        label = dataset.get("label_column", preset.get("label_column"))
        if label is None:
            raise InvalidArgumentError("csv dataset needs 'label_column' or a known 'preset'")
        path = Path(dataset["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        return load_csv(path, label, dataset.get("schema", preset.get("schema")))
    raise InvalidArgumentError(f"unknown dataset kind {kind!r}")


def build_shards(table: Table, partition: PartitionConfig, seed: int):
    plan = make_plan(
        table, partition.k, seed,
        alpha=None if partition.iid else partition.alpha,
        overlap_fraction=partition.overlap_fraction,
        min_per_client=partition.min_per_client,
        hold_out_groups=partition.hold_out_groups,
    )
    return make_shards(table, plan, partition.valid_fraction, seed)


def _sweep(
    config: ExperimentConfig, strategies: Sequence[Strategy]
) -> dict[Strategy, ExperimentReport]:
    table = normalize(load_table(config.dataset, config.base_dir))
    reports = {s: ExperimentReport(s, config.seeds) for s in strategies}
    for seed in config.seeds:
        try:
            shards = build_shards(table, config.partition, seed)
            initial = build_models(shards, replace(config.federation, seed=seed))
        except Exception as e:  # data errors abort this seed for every strategy
            for rep in reports.values():
                rep.errors[seed] = f"{type(e).__name__}: {e}"
            continue
        for strategy in strategies:
            fed = replace(config.federation, strategy=strategy, seed=seed)
            try:
                res = run_federation(fed, shards, [m.copy() for m in initial])
            except Exception as e:
                reports[strategy].errors[seed] = f"{type(e).__name__}: {e}"
                continue
            reports[strategy].best[seed] = res.best_mean_valid_acc
            reports[strategy].rounds[seed] = [r.to_dict() for r in res.rounds]
    return reports


def run_experiment(config: ExperimentConfig, strategy=None) -> ExperimentReport:
    """Best mean-over-clients validation accuracy per seed for one strategy."""
    strategy = Strategy(strategy or config.federation.strategy)
    report = _sweep(config, [strategy])[strategy]
    if config.out_dir:
        write_reports({strategy: report}, config)
    return report


def compare_strategies(
    config: ExperimentConfig, strategies=None
) -> dict[Strategy, ExperimentReport]:
    """Run several strategies on identical shards and initial models, SOLO always included."""
    chosen = [Strategy(s) for s in (strategies or config.strategies)]
    if Strategy.SOLO not in chosen:
        chosen.insert(0, Strategy.SOLO)
    chosen = sorted(dict.fromkeys(chosen), key=TABLE_ORDER.index)
    reports = _sweep(config, chosen)
    if config.out_dir:
        write_reports(reports, config)
    return reports


def report_csv(reports: dict[Strategy, ExperimentReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "seed", "best_mean_valid_acc", "error"])
    for strategy, rep in reports.items():
        for seed in rep.seeds:
            acc = repr(rep.best[seed]) if seed in rep.best else ""
            w.writerow([strategy.value, seed, acc, rep.errors.get(seed, "")])
        w.writerow([strategy.value, "mean", repr(rep.mean), ""])
        w.writerow([strategy.value, "std", repr(rep.std), ""])
    return buf.getvalue()


def format_table(
    reports: dict[Strategy, ExperimentReport], name: str = "", iid: bool = False
) -> str:
    """Aligned text table, accuracy in percent as ``mean+-std`` (population std over seeds)."""
    cols = [s for s in TABLE_ORDER if s in reports]
    header = ["Dataset", "IID", *(("Ours" if s is Strategy.OURS else s.name) for s in cols)]
    cells = [name or "-", "yes" if iid else "no"]
    for s in cols:
        rep = reports[s]
        cell = f"{100 * rep.mean:.2f}+-{100 * rep.std:.2f}"
        if rep.errors:
            cell += f" ({len(rep.errors)} failed)"
        cells.append(cell)
    widths = [max(len(h), len(c)) for h, c in zip(header, cells)]
    line = lambda row: "  ".join(v.rjust(wd) for v, wd in zip(row, widths))
    seeds = next(iter(reports.values())).seeds
    notes = [f"# best mean validation accuracy (%), seeds {list(seeds)}, std with ddof=0"]
    for s in cols:
        for seed, err in reports[s].errors.items():
            notes.append(f"# {s.value} seed {seed} failed: {err}")
    return "\n".join([*notes, line(header), line(["-" * w for w in widths]), line(cells)]) + "\n"


def write_reports(reports: dict[Strategy, ExperimentReport], config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    if not out.is_absolute():
        out = Path(config.base_dir) / out
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_csv(reports))
    (out / "report.txt").write_text(format_table(reports, config.name, config.partition.iid))
    if config.write_rounds:
        with (out / "rounds.jsonl").open("w") as fh:
            for strategy, rep in reports.items():
                for seed in rep.seeds:
                    for r in rep.rounds.get(seed, []):
                        fh.write(json.dumps({"strategy": strategy.value, "seed": seed, **r}) + "\n")
    return out
