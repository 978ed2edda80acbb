"""Experiment orchestration: generation, training, evaluation, persistence.

Every task is fully determined by (spec, seed); all randomness flows from the
single spec seed through named substreams. Artifacts are structured text
(JSON documents, CSV tables) so runs are diffable.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bnb import solve_exact
from .cran import (
    CranConfig,
    CranInstance,
    exhaustive_oracle,
    generate_feasible_instance,
    gsbf,
    rminlp,
)
from .features import FeatureConfig
from .imitation import DaggerConfig, dagger_train
from .learned import EscalationSchedule, LeafTable, learned_solve
from .mlp import PrunePolicy, load_policy, save_policy
from .problems import InfeasibleInstanceError
from .seeding import derive_seed
from .theory import comparison_table
from .transfer import SiConfig, si_transfer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_INFEASIBLE_BATCH = 3

TASKS = (
    "generate",
    "solve-exact",
    "train",
    "solve-lorm",
    "transfer",
    "baseline",
    "theory",
    "bench",
)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentSpec:
    task: str
    config_path: str | None = None
    seed: int = 0
    out_dir: str = "out"
    workers: int = 1
    fmt: str = "table"

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task '{self.task}'")
        if self.fmt not in ("table", "csv"):
            raise ConfigError(f"unknown output format '{self.fmt}'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass
class ResultRecord:
    """One method's outcome on one instance, with its audit references."""

    instance_id: str
    method: str
    objective: float
    gap: float
    relaxations: int
    escalation_rounds: int = 0
    wall_time: float = 0.0
    fell_back: bool = False
    model_digest: str = ""

    def row(self) -> list:
        return [
            self.instance_id,
            self.method,
            f"{self.objective:.6f}" if math.isfinite(self.objective) else "inf",
            f"{self.gap:.6f}" if math.isfinite(self.gap) else "inf",
            self.relaxations,
            self.escalation_rounds,
            f"{self.wall_time:.3f}",
            int(self.fell_back),
            self.model_digest,
        ]


RESULT_COLUMNS = [
    "instance_id", "method", "objective", "gap", "relaxations",
    "escalation_rounds", "wall_time_s", "fell_back", "model_digest",
]


DEFAULT_CONFIG: dict = {
    "cran": {},
    "counts": {"train": 50, "test": 50, "unlabeled": 10},
    "dagger": {},
    "si": {},
    "schedule": {"max_rounds": 10, "fallback": True},
    "theory": {
        "eps1": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        "eps2": [0.0, 0.25, 0.5, 1.0],
        "n": 12,
        "trials": 100_000,
    },
    "paths": {},
}


def load_config(spec: ExperimentSpec) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if spec.config_path is not None:
        path = Path(spec.config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            user = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        for key, value in user.items():
            if key not in cfg:
                raise ConfigError(f"unknown config section '{key}'")
            if isinstance(cfg[key], dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    return cfg


def _build(cls, section: dict, name: str):
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in section.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from exc


# -- instance persistence -------------------------------------------------


def save_instance(inst: CranInstance, path: str | Path) -> None:
    doc = {
        "format_version": 1,
        "kind": "cran-instance",
        "config": {k: getattr(inst.config, k) for k in CranConfig.__dataclass_fields__},
        "rrh_positions": inst.rrh_positions.tolist(),
        "user_positions": inst.user_positions.tolist(),
        "channel_re": inst.channel.real.tolist(),
        "channel_im": inst.channel.imag.tolist(),
        "pc": inst.pc.tolist(),
        "digest": inst.instance_id,
    }
    Path(path).write_text(json.dumps(doc))


def load_instance(path: str | Path) -> CranInstance:
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") != "cran-instance" or doc.get("format_version") != 1:
        raise ConfigError(f"{path} is not a version-1 instance file")
    cfg = CranConfig(**doc["config"])
    inst = CranInstance(
        config=cfg,
        rrh_positions=np.asarray(doc["rrh_positions"]),
        user_positions=np.asarray(doc["user_positions"]),
        channel=np.asarray(doc["channel_re"]) + 1j * np.asarray(doc["channel_im"]),
        pc=np.asarray(doc["pc"]),
    )
    if inst.instance_id != doc["digest"]:
        raise ConfigError(f"{path}: digest mismatch, file may be corrupted")
    return inst


def load_instance_dir(directory: str | Path, prefix: str = "") -> list[CranInstance]:
    paths = sorted(Path(directory).glob(f"{prefix}*.json"))
    if not paths:
        raise ConfigError(f"no instance files matching '{prefix}*.json' in {directory}")
    return [load_instance(p) for p in paths]


def write_results(records: list[ResultRecord], path: Path) -> None:
    lines = [",".join(RESULT_COLUMNS)]
    lines += [",".join(str(v) for v in rec.row()) for rec in records]
    path.write_text("\n".join(lines) + "\n")


def render_table(columns: list[str], rows: list[list], fmt: str) -> str:
    if fmt == "csv":
        out = [",".join(columns)]
        out += [",".join(str(v) for v in row) for row in rows]
        return "\n".join(out)
    widths = [
        max(len(str(col)), *(len(str(row[i])) for row in rows)) if rows else len(str(col))
        for i, col in enumerate(columns)
    ]
    header = "  ".join(str(c).ljust(w) for c, w in zip(columns, widths))
    sep = "-" * len(header)
    body = ["  ".join(str(v).ljust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join([header, sep, *body])


def _map_instances(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- evaluation helpers ----------------------------------------------------


def _gap(objective: float, optimum: float) -> float:
    if not math.isfinite(objective):
        return math.inf
    return (objective - optimum) / abs(optimum)


def evaluate_learned(
    policy: PrunePolicy,
    instances: list[CranInstance],
    optima: dict[str, tuple[tuple[int, ...], float]],
    schedule: EscalationSchedule,
    workers: int = 1,
) -> list[ResultRecord]:
    """Run the learned solver with a fresh table per instance (honest solve counts)."""

    def run(inst: CranInstance) -> ResultRecord:
        start = time.perf_counter()
        res = learned_solve(inst, policy, schedule=schedule, table=LeafTable(inst.instance_id))
        elapsed = time.perf_counter() - start
        _, opt = optima[inst.instance_id]
        return ResultRecord(
            instance_id=inst.instance_id,
            method="lorm",
            objective=res.incumbent.objective,
            gap=_gap(res.incumbent.objective, opt),
            relaxations=res.stats.relaxations_solved,
            escalation_rounds=res.rounds_used,
            wall_time=elapsed,
            fell_back=res.fell_back,
            model_digest=policy.model.digest(),
        )

    return _map_instances(run, instances, workers)


def evaluate_exact(
    instances: list[CranInstance],
    optima: dict[str, tuple[tuple[int, ...], float]],
    workers: int = 1,
) -> list[ResultRecord]:
    def run(inst: CranInstance) -> ResultRecord:
        start = time.perf_counter()
        res = solve_exact(inst)
        elapsed = time.perf_counter() - start
        _, opt = optima[inst.instance_id]
        return ResultRecord(
            instance_id=inst.instance_id,
            method="exact",
            objective=res.incumbent.objective,
            gap=_gap(res.incumbent.objective, opt),
            relaxations=res.stats.relaxations_solved,
            wall_time=elapsed,
        )

    return _map_instances(run, instances, workers)


def evaluate_baselines(
    instances: list[CranInstance],
    optima: dict[str, tuple[tuple[int, ...], float]],
    workers: int = 1,
) -> list[ResultRecord]:
    def run(inst: CranInstance) -> list[ResultRecord]:
        records = []
        _, opt = optima[inst.instance_id]
        for name, algo in (("rminlp", rminlp), ("gsbf", gsbf)):
            start = time.perf_counter()
            res = algo(inst)
            elapsed = time.perf_counter() - start
            records.append(
                ResultRecord(
                    instance_id=inst.instance_id,
                    method=name,
                    objective=res.objective,
                    gap=_gap(res.objective, opt),
                    relaxations=res.conic_solves,
                    wall_time=elapsed,
                )
            )
        return records

    nested = _map_instances(run, instances, workers)
    return [rec for sub in nested for rec in sub]


def compute_optima(
    instances: list[CranInstance], workers: int = 1, tables: dict[str, LeafTable] | None = None
) -> dict[str, tuple[tuple[int, ...], float]]:
    """Exhaustive ground truth per instance; raises on an infeasible instance."""

    def run(inst: CranInstance):
        table = tables.get(inst.instance_id) if tables is not None else None
        res = exhaustive_oracle(inst, table=table)
        return inst.instance_id, (res.assignment, res.objective)

    return dict(_map_instances(run, instances, workers))


def summarize(records: list[ResultRecord], exact_relaxations: dict[str, int]) -> list[dict]:
    """Per-method summary: gap, feasibility, relaxation ratio vs exact search."""
    methods = sorted({r.method for r in records})
    rows = []
    for method in methods:
        recs = [r for r in records if r.method == method]
        feasible = [r for r in recs if math.isfinite(r.objective)]
        gaps = [r.gap for r in feasible]
        total_relax = sum(r.relaxations for r in recs)
        total_exact = sum(exact_relaxations.get(r.instance_id, 0) for r in recs)
        rows.append(
            {
                "method": method,
                "instances": len(recs),
                "feasible_rate": len(feasible) / len(recs),
                "mean_gap_pct": 100.0 * float(np.mean(gaps)) if gaps else math.inf,
                "median_rounds": float(np.median([r.escalation_rounds for r in recs])),
                "fallback_rate": float(np.mean([r.fell_back for r in recs])),
                "relaxations": total_relax,
                "relaxation_ratio_vs_exact": (
                    total_relax / total_exact if total_exact else math.nan
                ),
                "mean_wall_time_s": float(np.mean([r.wall_time for r in recs])),
            }
        )
    return rows


# -- tasks ------------------------------------------------------------------


def _generate_set(cfg: CranConfig, seed: int, count: int, role: str) -> list[CranInstance]:
    return [
        generate_feasible_instance(cfg, derive_seed(seed, "instance-gen", role, i))
        for i in range(count)
    ]


def task_generate(spec: ExperimentSpec, cfg: dict, out: Path) -> int:
    cran_cfg = _build(CranConfig, cfg["cran"], "cran")
    counts = cfg["counts"]
    inst_dir = out / "instances"
    inst_dir.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for role in ("train", "test", "unlabeled"):
        n = int(counts.get(role, 0))
        instances = _generate_set(cran_cfg, spec.seed, n, role)
        files = []
        for i, inst in enumerate(instances):
            path = inst_dir / f"{role}_{i:03d}.json"
            save_instance(inst, path)
            files.append(path.name)
        manifest[role] = files
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote {sum(len(v) for v in manifest.values())} instances to {inst_dir}")
    return EXIT_OK


def _instances_from_config(cfg: dict, default_dir: Path, prefix: str = "") -> list[CranInstance]:
    directory = cfg["paths"].get("instances", str(default_dir))
    return load_instance_dir(directory, prefix)


def task_solve_exact(spec: ExperimentSpec, cfg: dict, out: Path) -> int:
    instances = _instances_from_config(cfg, out / "instances")
    optima = compute_optima(instances, spec.workers)
    records = evaluate_exact(instances, optima, spec.workers)
    write_results(records, out / "results_exact.csv")
    print(render_table(RESULT_COLUMNS, [r.row() for r in records], spec.fmt))
    return EXIT_OK


def task_train(spec: ExperimentSpec, cfg: dict, out: Path) -> int:
    instances = _instances_from_config(cfg, out / "instances", prefix="train_")
    dagger_cfg = _build(DaggerConfig, cfg["dagger"], "dagger")
    optima = compute_optima(instances, spec.workers)
    result = dagger_train(instances, optima, dagger_cfg, seed=derive_seed(spec.seed, "dagger"))
    save_policy(result.best_policy, out / "model.json")
    result.dataset.save(out / "dataset.csv")
    report = {
        "validation_gaps": result.validation_gaps,
        "best_round": result.best_round,
        "dataset_size": len(result.dataset),
        "model_digest": result.best_policy.model.digest(),
    }
    (out / "training_report.json").write_text(json.dumps(report, indent=2))
    print(f"trained policy {report['model_digest']}; validation gaps {result.validation_gaps}")
    return EXIT_OK


def _schedule_from_config(cfg: dict) -> EscalationSchedule:
    section = cfg["schedule"]
    return _build(EscalationSchedule, section, "schedule")


def task_solve_lorm(spec: ExperimentSpec, cfg: dict, out: Path) -> int:
    model_path = cfg["paths"].get("model", str(out / "model.json"))
    if not Path(model_path).exists():
        raise ConfigError(f"model file not found: {model_path} (run the train task first)")
    policy = load_policy(model_path)
    instances = _instances_from_config(cfg, out / "instances", prefix="test_")
    optima = compute_optima(instances, spec.workers)
    records = evaluate_learned(policy, instances, optima, _schedule_from_config(cfg), spec.workers)
    write_results(records, out / "results_lorm.csv")
    print(render_table(RESULT_COLUMNS, [r.row() for r in records], spec.fmt))
    return EXIT_OK


def task_baseline(spec: ExperimentSpec, cfg: dict, out: Path) -> int:
    instances = _instances_from_config(cfg, out / "instances")
    optima = compute_optima(instances, spec.workers)
    records = evaluate_baselines(instances, optima, spec.workers)
    write_results(records, out / "results_baseline.csv")
    print(render_table(RESULT_COLUMNS, [r.row() for r in records], spec.fmt))
    return EXIT_OK


def task_transfer(spec: ExperimentSpec, cfg: dict, out: Path) -> int:
    source_path = cfg["paths"].get("source_model")
    if source_path is None or not Path(source_path).exists():
        raise ConfigError("transfer requires paths.source_model pointing to a trained model")
    policy = load_policy(source_path)
    instances = _instances_from_config(cfg, out / "instances", prefix="unlabeled_")
    si_cfg = _build(SiConfig, cfg["si"], "si")
    result = si_transfer(
        policy,
        instances,
        si_cfg,
        seed=derive_seed(spec.seed, "transfer"),
        checkpoint_dir=out / "transfer_checkpoint",
    )
    save_policy(result.policy, out / "model_transferred.json")
    report = {
        "objective_sums": [None if math.isinf(v) else v for v in result.objective_sums],
        "thresholds": result.thresholds,
        "best_round": result.best_round,
        "model_digest": result.policy.model.digest(),
    }
    (out / "transfer_report.json").write_text(json.dumps(report, indent=2))
    print(f"transferred policy {report['model_digest']}; objective sums {report['objective_sums']}")
    return EXIT_OK


def task_theory(spec: ExperimentSpec, cfg: dict, out: Path) -> int:
    section = cfg["theory"]
    rows = comparison_table(
        section["eps1"], section["eps2"], int(section["n"]), int(section["trials"]),
        seed=derive_seed(spec.seed, "monte-carlo"),
    )
    columns = list(rows[0].keys())
    table_rows = [[f"{row[c]:.4f}" if isinstance(row[c], float) else row[c] for c in columns] for row in rows]
    text = render_table(columns, table_rows, spec.fmt)
    (out / "theory.csv").write_text(
        render_table(columns, table_rows, "csv") + "\n"
    )
    print(text)
    return EXIT_OK


def task_bench(spec: ExperimentSpec, cfg: dict, out: Path) -> int:
    """End-to-end protocol: generate, label, train, evaluate every method."""
    cran_cfg = _build(CranConfig, cfg["cran"], "cran")
    counts = cfg["counts"]
    dagger_cfg = _build(DaggerConfig, cfg["dagger"], "dagger")
    schedule = _schedule_from_config(cfg)

    logger.info("generating instances")
    train_instances = _generate_set(cran_cfg, spec.seed, int(counts["train"]), "train")
    test_instances = _generate_set(cran_cfg, spec.seed, int(counts["test"]), "test")
    inst_dir = out / "instances"
    inst_dir.mkdir(parents=True, exist_ok=True)
    for i, inst in enumerate(train_instances):
        save_instance(inst, inst_dir / f"train_{i:03d}.json")
    for i, inst in enumerate(test_instances):
        save_instance(inst, inst_dir / f"test_{i:03d}.json")

    logger.info("computing oracle optima")
    optima = compute_optima(train_instances + test_instances, spec.workers)

    logger.info("training the pruning policy")
    result = dagger_train(
        train_instances, optima, dagger_cfg, seed=derive_seed(spec.seed, "dagger")
    )
    save_policy(result.best_policy, out / "model.json")

    logger.info("evaluating on the test split")
    records = evaluate_learned(result.best_policy, test_instances, optima, schedule, spec.workers)
    exact_records = evaluate_exact(test_instances, optima, spec.workers)
    records += exact_records
    records += evaluate_baselines(test_instances, optima, spec.workers)

    write_results(records, out / "results.csv")
    exact_relax = {r.instance_id: r.relaxations for r in exact_records}
    summary = summarize(records, exact_relax)
    columns = list(summary[0].keys())
    rows = [
        [f"{row[c]:.4f}" if isinstance(row[c], float) else row[c] for c in columns]
        for row in summary
    ]
    (out / "summary.csv").write_text(render_table(columns, rows, "csv") + "\n")
    print(render_table(columns, rows, spec.fmt))
    return EXIT_OK


_TASK_FUNCS = {
    "generate": task_generate,
    "solve-exact": task_solve_exact,
    "train": task_train,
    "solve-lorm": task_solve_lorm,
    "transfer": task_transfer,
    "baseline": task_baseline,
    "theory": task_theory,
    "bench": task_bench,
}


def run_experiment(spec: ExperimentSpec) -> int:
    """Execute one task; returns the process exit code (0 ok, 2 config, 3 infeasible)."""
    try:
        cfg = load_config(spec)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG_ERROR
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _TASK_FUNCS[spec.task](spec, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG_ERROR
    except InfeasibleInstanceError as exc:
        print(f"infeasible instance batch: {exc}")
        return EXIT_INFEASIBLE_BATCH
