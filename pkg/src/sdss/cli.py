"""Command-line benchmark harness.

Subcommands: train, ablation, label-ratio, pretext-export, gen-synthetic.
Configuration comes from a key=value text file (--config) with per-key flag
overrides; SDSS_SEED supplies the seed list when none is configured. Exit
codes: 0 ok, 1 runtime failure, 2 usage or configuration error.

All emitted report files are line-delimited key=value records. Every file
embeds the complete effective configuration, and everything except the
`timing` records is byte-reproducible for a fixed configuration.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, fields as dc_fields, asdict
from pathlib import Path

import numpy as np

from .data import (
    DataError,
    Dataset,
    SplitSpec,
    generate_planted_partition,
    load_dataset,
    sample_split,
    save_dataset,
)
from .model import ModelParams, save_checkpoint
from .pretext import (
    KINDS,
    PretextTask,
    make_clustering_task,
    make_completion_task,
    make_degree_task,
    make_partition_task,
)
from .training import LossConfig, TrainReport, TrainSettings, train_student, train_teacher
from .util import config_hash, derive_seed, make_record

MODES = ("baseline", "ss", "sd", "sdss")
TERM_SETS = ("nc", "nc+m", "nc+ss+m")
SECTIONS = ("modes", "tasks", "terms")


class ConfigError(Exception):
    """Invalid configuration or command usage (exit code 2)."""


@dataclass
class RunConfig:
    dataset: str = "synthetic"     # dataset directory, or "synthetic"
    out: str = "runs"
    mode: str = "sdss"             # baseline | ss | sd | sdss
    pretext: str = "clustering"    # degree | clustering | partitioning | completion
    seeds: tuple = (0,)
    # model
    hidden_dim: int = 64
    dropout: float = 0.5
    # optimizer
    lr: float = 0.01
    weight_decay: float = 0.001
    max_epochs: int = 300
    patience: int = 50
    # losses
    alpha: float = 0.1
    beta1: float = 0.6
    beta2: float = 0.3
    tau: float = 2.0
    sd_nc: float = 1.0
    sd_ss: float = 1.0
    sd_m: float = 1.0
    reduction: str = "mean"
    tau_squared: bool = False
    # pretext construction
    kmeans_k: int = 0              # 0: use the number of classes
    kmeans_restarts: int = 10
    partition_k: int = 0           # 0: use the number of classes
    epsilon: float = 0.1
    mask_ratio: float = 0.1
    pca_dim: int = 0               # 0: min(32, feature dim)
    # data handling
    row_normalize: bool = False
    split_mode: str = "auto"       # auto | public-file | per-class-sample
    train_per_class: int = 20
    val_per_class: int = 30
    split_seed: int = 0
    # synthetic dataset
    synth_blocks: int = 5
    synth_per_block: int = 100
    synth_p_in: float = 0.1
    synth_p_out: float = 0.01
    synth_features: int = 32
    synth_shift: float = 1.0
    synth_seed: int = 0            # -1: derive a fresh world from each run seed

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pretext not in KINDS:
            raise ConfigError(f"pretext must be one of {KINDS}, got {self.pretext!r}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.mode == "ss" and self.alpha <= 0:
            raise ConfigError("mode 'ss' requires alpha > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.split_mode not in ("auto", "public-file", "per-class-sample"):
            raise ConfigError(f"unknown split_mode {self.split_mode!r}")
        try:
            LossConfig(
                alpha=self.alpha, beta1=self.beta1, beta2=self.beta2, tau=self.tau,
                reduction=self.reduction, tau_squared=self.tau_squared,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["seeds"] = list(self.seeds)
        return out

    def canonical(self) -> str:
        return make_record("config", self.to_dict())

    def hash(self) -> str:
        return config_hash(self.canonical())

    def settings(self, loss: LossConfig) -> TrainSettings:
        return TrainSettings(
            hidden_dim=self.hidden_dim,
            dropout=self.dropout,
            lr=self.lr,
            weight_decay=self.weight_decay,
            max_epochs=self.max_epochs,
            patience=self.patience,
            loss=loss,
        )


def _parse_value(name: str, text: str, target_type) -> object:
    text = text.strip()
    try:
        if target_type is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
        if target_type is tuple:
            return tuple(int(tok) for tok in text.split(",") if tok != "")
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from None


def parse_config_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def build_run_config(args: argparse.Namespace) -> RunConfig:
    field_types = {f.name: f.type for f in dc_fields(RunConfig)}
    type_map = {"int": int, "float": float, "str": str, "bool": bool, "tuple": tuple}
    raw: dict[str, str] = {}
    if getattr(args, "config", None):
        raw.update(parse_config_file(Path(args.config)))
    for name in field_types:
        value = getattr(args, name, None)
        if value is not None:
            raw[name] = value
    unknown = set(raw) - set(field_types)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "seeds" not in raw and os.environ.get("SDSS_SEED"):
        raw["seeds"] = os.environ["SDSS_SEED"]
    cfg = RunConfig()
    for name, text in raw.items():
        t = field_types[name]
        t = type_map.get(t, t) if isinstance(t, str) else t
        setattr(cfg, name, _parse_value(name, text, t))
    cfg.validate()
    return cfg


def _resolve_dataset(cfg: RunConfig, run_seed: int, cache: dict) -> Dataset:
    if cfg.dataset == "synthetic":
        world = cfg.synth_seed if cfg.synth_seed >= 0 else derive_seed(run_seed, "world")
        key = ("synthetic", world)
        if key not in cache:
            ds = generate_planted_partition(
                cfg.synth_blocks,
                cfg.synth_per_block,
                cfg.synth_p_in,
                cfg.synth_p_out,
                cfg.synth_features,
                cfg.synth_shift,
                world,
            )
            spec = SplitSpec(
                train_per_class=cfg.train_per_class,
                val_per_class=cfg.val_per_class,
                seed=derive_seed(world, "split", str(cfg.split_seed)),
            )
            cache[key] = ds.with_split(*sample_split(ds.labels, ds.num_classes, spec))
        return cache[key]
    key = ("file", cfg.dataset)
    if key not in cache:
        directory = Path(cfg.dataset)
        if cfg.split_mode == "auto":
            split = (
                None
                if (directory / "split.txt").is_file()
                else SplitSpec(
                    train_per_class=cfg.train_per_class,
                    val_per_class=cfg.val_per_class,
                    seed=cfg.split_seed,
                )
            )
        else:
            split = SplitSpec(
                mode=cfg.split_mode,
                train_per_class=cfg.train_per_class,
                val_per_class=cfg.val_per_class,
                seed=cfg.split_seed,
            )
        cache[key] = load_dataset(directory, split=split, row_normalize=cfg.row_normalize)
    return cache[key]


def build_task(kind: str, dataset: Dataset, cfg: RunConfig, seed: int) -> PretextTask:
    if kind == "degree":
        return make_degree_task(dataset.graph)
    if kind == "clustering":
        k = cfg.kmeans_k or dataset.num_classes
        return make_clustering_task(dataset.features, k, seed, restarts=cfg.kmeans_restarts)
    if kind == "partitioning":
        k = cfg.partition_k or dataset.num_classes
        return make_partition_task(dataset.graph, k, cfg.epsilon, seed)
    if kind == "completion":
        pca_dim = cfg.pca_dim or min(32, dataset.num_features)
        pca_dim = min(pca_dim, dataset.n, dataset.num_features)
        return make_completion_task(dataset.features, cfg.mask_ratio, pca_dim, seed)
    raise ConfigError(f"unknown pretext kind: {kind!r}")


def _term_multipliers(terms: str, cfg: RunConfig) -> dict[str, float]:
    parts = terms.split("+")
    if "nc" not in parts or not set(parts) <= {"nc", "ss", "m"}:
        raise ConfigError(f"bad distillation term set: {terms!r} (expected one of {TERM_SETS})")
    return {
        "nc": cfg.sd_nc,
        "ss": cfg.sd_ss if "ss" in parts else 0.0,
        "m": cfg.sd_m if "m" in parts else 0.0,
    }


@dataclass
class RunResult:
    section: str
    mode: str
    kind: str
    terms: str
    seed: int
    test_acc: float
    teacher: ModelParams
    student: ModelParams | None
    teacher_report: TrainReport
    student_report: TrainReport | None
    extra: dict

    def key(self) -> tuple:
        ex = tuple(f"{k}={self.extra[k]}" for k in sorted(self.extra))
        return (self.section, ex, self.mode, self.kind, self.terms, self.seed)

    def result_fields(self) -> dict:
        final = self.student_report or self.teacher_report
        fields = {
            "section": self.section,
            "mode": self.mode,
            "kind": self.kind,
            "terms": self.terms,
            "seed": self.seed,
            "test_acc": self.test_acc,
            "best_val_acc": final.best_val_acc,
            "best_epoch": final.best_epoch,
            "stages": 2 if self.student_report else 1,
            "mult_nc": self.extra.get("mult_nc", 0.0),
            "mult_ss": self.extra.get("mult_ss", 0.0),
            "mult_m": self.extra.get("mult_m", 0.0),
        }
        for k, v in self.extra.items():
            if not k.startswith("mult_"):
                fields[k] = v
        return fields


def run_single(
    dataset: Dataset,
    cfg: RunConfig,
    mode: str,
    kind: str,
    terms: str | None,
    seed: int,
    section: str = "train",
    extra: dict | None = None,
) -> RunResult:
    """Execute one (mode, pretext kind, term subset, seed) training run."""
    extra = dict(extra or {})
    uses_task = mode in ("ss", "sdss")
    task = None
    kind_eff = "-"
    if uses_task:
        kind_eff = kind
        task = build_task(kind, dataset, cfg, derive_seed(seed, "pretext", kind))

    teacher_loss = LossConfig(
        alpha=cfg.alpha if uses_task else 0.0,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        tau=cfg.tau,
        reduction=cfg.reduction,
        tau_squared=cfg.tau_squared,
    )
    teacher, rep_t = train_teacher(
        dataset, task, cfg.settings(teacher_loss), derive_seed(seed, "teacher")
    )

    student = None
    rep_s = None
    terms_eff = "-"
    if mode in ("sd", "sdss"):
        terms_eff = terms or ("nc+m" if mode == "sd" else "nc+ss+m")
        mult = _term_multipliers(terms_eff, cfg)
        if mode == "sd" and mult["ss"] != 0.0:
            raise ConfigError("mode 'sd' has no auxiliary task; term subset cannot include ss")
        student_loss = LossConfig(
            alpha=teacher_loss.alpha,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            tau=cfg.tau,
            sd_nc=mult["nc"],
            sd_ss=mult["ss"],
            sd_m=mult["m"],
            reduction=cfg.reduction,
            tau_squared=cfg.tau_squared,
        )
        student, rep_s = train_student(
            dataset,
            task if mode == "sdss" else None,
            teacher,
            cfg.settings(student_loss),
            derive_seed(seed, "student"),
        )
        extra.update(mult_nc=mult["nc"], mult_ss=mult["ss"], mult_m=mult["m"])

    final = rep_s or rep_t
    return RunResult(
        section=section,
        mode=mode,
        kind=kind_eff,
        terms=terms_eff,
        seed=seed,
        test_acc=final.test_acc,
        teacher=teacher,
        student=student,
        teacher_report=rep_t,
        student_report=rep_s,
        extra=extra,
    )


def _slug(result: RunResult) -> str:
    bits = [result.section, result.mode, result.kind, result.terms, f"seed{result.seed}"]
    bits.extend(f"{k}{v}" for k, v in sorted(result.extra.items()) if not k.startswith("mult_"))
    return "_".join(str(b).replace("+", "-") for b in bits)


def _write_run_files(staging: Path, cfg: RunConfig, result: RunResult) -> None:
    lines = [cfg.canonical()]
    lines.append(make_record("run", result.result_fields()))
    lines.extend(result.teacher_report.records())
    if result.student_report is not None:
        lines.extend(result.student_report.records())
    lines.append(make_record("result", result.result_fields()))
    wall = result.teacher_report.wall_clock
    if result.student_report is not None:
        wall += result.student_report.wall_clock
    lines.append(make_record("timing", {"wall_clock_s": wall}))
    slug = _slug(result)
    (staging / f"report_{slug}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    save_checkpoint(staging / f"ckpt_{slug}_teacher.txt", result.teacher, result.seed, cfg.hash())
    if result.student is not None:
        save_checkpoint(staging / f"ckpt_{slug}_student.txt", result.student, result.seed, cfg.hash())


def _group_summaries(results: list[RunResult], keys: tuple[str, ...]) -> list[dict]:
    groups: dict[tuple, list[RunResult]] = {}
    for r in results:
        fields = r.result_fields()
        groups.setdefault(tuple(fields[k] for k in keys), []).append(r)
    out = []
    for gkey in sorted(groups, key=lambda t: tuple(str(v) for v in t)):
        runs = sorted(groups[gkey], key=lambda r: r.seed)
        accs = np.array([r.test_acc for r in runs])
        fields = dict(zip(keys, gkey))
        fields.update(
            n=len(runs),
            seeds=[r.seed for r in runs],
            test_acc_mean=float(accs.mean()),
            test_acc_std=float(accs.std()),
        )
        out.append(fields)
    return out


def _format_table(summaries: list[dict], keys: tuple[str, ...]) -> str:
    header = list(keys) + ["mean", "std", "n"]
    rows = [header]
    for s in summaries:
        rows.append(
            [str(s[k]) for k in keys]
            + ["%.4f" % s["test_acc_mean"], "%.4f" % s["test_acc_std"], str(s["n"])]
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows)


class _Staging:
    """Collect artifacts in a temp dir; publish into the target only on success."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.out_dir.parent.mkdir(parents=True, exist_ok=True)
        self.path = Path(tempfile.mkdtemp(prefix=".stage_", dir=self.out_dir.parent))

    def publish(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for item in sorted(self.path.iterdir()):
            target = self.out_dir / item.name
            if target.exists():
                target.unlink()
            shutil.move(str(item), str(target))
        self.path.rmdir()

    def discard(self) -> None:
        shutil.rmtree(self.path, ignore_errors=True)


def _execute(cfg: RunConfig, plan: list[dict], summary_keys: tuple[str, ...]) -> list[RunResult]:
    """Run a sweep plan, write all artifacts, return results in sorted order."""
    staging = _Staging(Path(cfg.out))
    try:
        cache: dict = {}
        results = []
        for job in plan:
            dataset = job.get("dataset") or _resolve_dataset(cfg, job["seed"], cache)
            results.append(
                run_single(
                    dataset,
                    cfg,
                    job["mode"],
                    job.get("kind", cfg.pretext),
                    job.get("terms"),
                    job["seed"],
                    section=job.get("section", "train"),
                    extra=job.get("extra"),
                )
            )
        results.sort(key=lambda r: r.key())
        for r in results:
            _write_run_files(staging.path, cfg, r)
        summaries = _group_summaries(results, summary_keys)
        lines = [cfg.canonical()]
        lines.extend(make_record("result", r.result_fields()) for r in results)
        lines.extend(make_record("summary", s) for s in summaries)
        (staging.path / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        table = _format_table(summaries, summary_keys)
        (staging.path / "table.txt").write_text(table + "\n", encoding="utf-8")
        staging.publish()
        print(table)
        print(f"artifacts written to {cfg.out}")
        return results
    except BaseException:
        staging.discard()
        raise


def cmd_train(cfg: RunConfig) -> int:
    plan = [{"section": "train", "mode": cfg.mode, "seed": s} for s in cfg.seeds]
    _execute(cfg, plan, ("section", "mode", "kind", "terms"))
    return 0


def cmd_ablation(cfg: RunConfig, sections: tuple[str, ...]) -> int:
    plan: list[dict] = []
    for seed in cfg.seeds:
        if "modes" in sections:
            plan.extend({"section": "modes", "mode": m, "seed": seed} for m in MODES)
        if "tasks" in sections:
            plan.extend(
                {"section": "tasks", "mode": "sdss", "kind": k, "seed": seed} for k in KINDS
            )
        if "terms" in sections:
            for terms in TERM_SETS:
                mode = "sdss" if "ss" in terms.split("+") else "sd"
                plan.append({"section": "terms", "mode": mode, "terms": terms, "seed": seed})
    _execute(cfg, plan, ("section", "mode", "kind", "terms"))
    return 0


def cmd_label_ratio(cfg: RunConfig, per_class: tuple[int, ...]) -> int:
    base_cache: dict = {}
    plan: list[dict] = []
    for count in sorted(per_class):
        for mode in MODES:
            for seed in cfg.seeds:
                base = _resolve_dataset(cfg, seed, base_cache)
                spec = SplitSpec(
                    train_per_class=count,
                    val_per_class=cfg.val_per_class,
                    seed=derive_seed(cfg.split_seed, "ratio", str(count)),
                )
                ds = base.with_split(*sample_split(base.labels, base.num_classes, spec))
                plan.append(
                    {
                        "section": "label_ratio",
                        "mode": mode,
                        "seed": seed,
                        "dataset": ds,
                        "extra": {"per_class": count},
                    }
                )
    _execute(cfg, plan, ("section", "per_class", "mode", "kind", "terms"))
    return 0


def cmd_pretext_export(cfg: RunConfig) -> int:
    cache: dict = {}
    seed = cfg.seeds[0]
    dataset = _resolve_dataset(cfg, seed, cache)
    task = build_task(cfg.pretext, dataset, cfg, derive_seed(seed, "pretext", cfg.pretext))
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    target_path = out_dir / f"pretext_{task.kind}_targets.txt"
    if task.task_type == "classification" or task.kind == "degree":
        values = task.targets if task.targets.ndim == 1 else task.targets[:, 0]
        width = task.output_dim if task.task_type == "classification" else int(values.max()) + 1
        with open(target_path, "w", encoding="utf-8") as fh:
            fh.write(f"{dataset.n} {width}\n")
            for v in values:
                fh.write(f"{int(v)}\n")
    else:
        with open(target_path, "w", encoding="utf-8") as fh:
            fh.write(f"{dataset.n} {task.output_dim}\n")
            for row in task.targets:
                fh.write(" ".join("%.17g" % v for v in row) + "\n")
    if task.input_override is not None:
        with open(out_dir / f"pretext_{task.kind}_inputs.txt", "w", encoding="utf-8") as fh:
            fh.write(f"{dataset.n} {dataset.num_features}\n")
            for row in task.input_override:
                fh.write(" ".join("%.17g" % v for v in row) + "\n")
    if task.mask is not None:
        (out_dir / f"pretext_{task.kind}_mask.txt").write_text(
            "mask: " + " ".join(str(int(i)) for i in task.mask) + "\n", encoding="utf-8"
        )
    print(f"wrote {target_path}")
    return 0


def cmd_gen_synthetic(cfg: RunConfig) -> int:
    cache: dict = {}
    dataset = _resolve_dataset(cfg, cfg.seeds[0], cache)
    save_dataset(dataset, cfg.out)
    print(f"wrote synthetic dataset ({dataset.n} nodes) to {cfg.out}")
    return 0


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value configuration file")
    for f in dc_fields(RunConfig):
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, help=argparse.SUPPRESS)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdss",
        description="Graph node classification with auxiliary self-supervision "
        "and two-stage self-distillation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("train", "run the configured mode over all seeds"),
        ("ablation", "run mode/task/term-subset sweeps"),
        ("label-ratio", "rerun all modes at several labels-per-class counts"),
        ("pretext-export", "write generated pretext targets as text files"),
        ("gen-synthetic", "write a synthetic dataset directory"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_config_flags(p)
        if name == "ablation":
            p.add_argument("--sections", default="modes,tasks,terms",
                           help="comma list out of modes,tasks,terms")
        if name == "label-ratio":
            p.add_argument("--per-class", default="5,10,20,50",
                           help="comma list of labels-per-class counts")
    args = parser.parse_args(argv)

    try:
        cfg = build_run_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "ablation":
            sections = tuple(s for s in args.sections.split(",") if s)
            bad = set(sections) - set(SECTIONS)
            if bad or not sections:
                raise ConfigError(f"--sections must name some of {SECTIONS}, got {args.sections!r}")
            return cmd_ablation(cfg, sections)
        if args.command == "label-ratio":
            per_class = tuple(int(tok) for tok in args.per_class.split(",") if tok)
            if not per_class or any(c < 1 for c in per_class):
                raise ConfigError(f"--per-class must be positive integers, got {args.per_class!r}")
            return cmd_label_ratio(cfg, per_class)
        if args.command == "pretext-export":
            return cmd_pretext_export(cfg)
        if args.command == "gen-synthetic":
            return cmd_gen_synthetic(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
