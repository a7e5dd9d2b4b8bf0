"""``lanetcn`` command line: generate, train, evaluate, verify.

Every command reads one INI config (all keys optional), applies ``--seed``
and ``--set section.key=value`` overrides, and writes under ``--out``. An
empty config reproduces the desk-scale reference run.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import FEATURES, GeneratorConfig, generate_dataset, prepare, read_events, write_events
from .errors import NumericError, ParameterError
from .evaluation import (
    EvalReport,
    ExperimentConfig,
    ablation_subsets,
    evaluate,
    fit_cell,
    grid_search,
    prediction_dump,
    render_scaled,
    row_from,
    scenario_report,
    sensitivity_analysis,
    timing_benchmark,
)
from .nn import default_spec, init_params, load_model, save_model
from .optim import TrainConfig, train
from .seeding import stream
from .verify import run_checks

log = logging.getLogger("lanetcn")

TASK_TARGETS = {
    "behavior": ("alpha",),
    "trajectory": ("x", "y"),
    "joint": ("alpha", "x", "y"),
}
MODES = ("behavior", "trajectory", "joint", "scenario", "ablation", "grid", "timing")


@dataclass
class RunSection:
    seed: int = 0


@dataclass
class GeneratorSection:
    drivers: int = 47
    speeds: tuple = (60, 80, 100)
    dy_preview: float = 0.0
    lead_wander: float = 0.05
    alpha_noise: float = 0.5


@dataclass
class WindowingSection:
    time_step: int = 30
    horizon: int = 10
    task: str = "behavior"
    inputs: tuple = ()  # empty: mirror the task's targets
    speed: int = 60  # 0 keeps every scenario speed


@dataclass
class ModelSection:
    family: str = "tcn"
    levels: int = 0  # 0: family default
    channels: int = 32
    kernel_size: int = 2
    dropout: float = 0.1


@dataclass
class TrainingSection:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.001
    patience: int = 5


@dataclass
class EvaluationSection:
    mode: str = "behavior"
    families: tuple = ("tcn", "rnn", "cnn")
    time_steps: tuple = (10, 30, 50)
    horizons: tuple = (1, 10, 30, 50)
    speeds: tuple = (60, 80, 100)
    ablation: str = "remove"  # remove, add or both
    units: str = "both"  # normalized, physical or both
    repetitions: int = 50


@dataclass
class PathsSection:
    data_dir: str = "data"
    model: str = "model.bin"
    report_dir: str = "reports"


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    generator: GeneratorSection = field(default_factory=GeneratorSection)
    windowing: WindowingSection = field(default_factory=WindowingSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    paths: PathsSection = field(default_factory=PathsSection)

    @property
    def seed(self) -> int:
        return self.run.seed

    @property
    def targets(self) -> tuple[str, ...]:
        return TASK_TARGETS[self.windowing.task]

    @property
    def inputs(self) -> tuple[str, ...]:
        return tuple(self.windowing.inputs) or self.targets

    def validate(self) -> "RunConfig":
        if self.windowing.task not in TASK_TARGETS:
            raise ParameterError(f"windowing.task must be one of {sorted(TASK_TARGETS)}")
        if self.evaluation.mode not in MODES:
            raise ParameterError(f"evaluation.mode must be one of {MODES}")
        if self.evaluation.ablation not in ("remove", "add", "both"):
            raise ParameterError("evaluation.ablation must be remove, add or both")
        if self.evaluation.units not in ("normalized", "physical", "both"):
            raise ParameterError("evaluation.units must be normalized, physical or both")
        for f in self.inputs:
            if f not in FEATURES:
                raise ParameterError(f"unknown input feature {f!r}")
        return self

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for sec in fields(self):
            values = getattr(self, sec.name)
            cp[sec.name] = {f.name: _format(getattr(values, f.name)) for f in fields(values)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse(section, key: str, raw: str):
    default = getattr(section, key)
    raw = raw.strip()
    try:
        if isinstance(default, tuple):
            kind = type(default[0]) if default else str
            return tuple(kind(p.strip()) for p in raw.split(",") if p.strip())
        return type(default)(raw)
    except ValueError as exc:
        raise ParameterError(f"bad value for {key}: {raw!r}") from exc


def _apply(cfg: RunConfig, section: str, key: str, raw: str) -> None:
    names = {f.name for f in fields(cfg)}
    if section not in names:
        raise ParameterError(f"unknown config section [{section}]")
    sec = getattr(cfg, section)
    if key not in {f.name for f in fields(sec)}:
        raise ParameterError(f"unknown config key {section}.{key}")
    setattr(sec, key, _parse(sec, key, raw))


def load_config(path=None, overrides=(), seed=None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        with open(path) as fh:
            cp.read_file(fh)
        for section in cp.sections():
            for key, raw in cp.items(section):
                _apply(cfg, section, key, raw)
    for item in overrides:
        lhs, sep, raw = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ParameterError(f"override must look like section.key=value, got {item!r}")
        _apply(cfg, section, key, raw)
    if seed is not None:
        cfg.run.seed = seed
    return cfg.validate()


# shared pieces


def _generator_config(cfg: RunConfig) -> GeneratorConfig:
    g = cfg.generator
    return GeneratorConfig(
        n_drivers=g.drivers, speeds=g.speeds, dy_preview=g.dy_preview,
        lead_wander=g.lead_wander, alpha_noise=g.alpha_noise,
    )


def _train_config(cfg: RunConfig) -> TrainConfig:
    t = cfg.training
    return TrainConfig(t.epochs, t.batch_size, t.learning_rate, cfg.model.dropout, cfg.seed, t.patience)


def _model_overrides(cfg: RunConfig, family: str) -> dict:
    m = cfg.model
    out = {"channels": m.channels, "kernel_size": m.kernel_size, "dropout": m.dropout}
    if m.levels and family != "rnn":
        out["levels"] = m.levels
    return out


def _experiment(cfg: RunConfig, inputs=None, targets=None, speed=None) -> ExperimentConfig:
    m = cfg.model
    common = {"channels": m.channels, "kernel_size": m.kernel_size, "dropout": m.dropout}
    per_family = {f: {"levels": m.levels} for f in ("tcn", "cnn")} if m.levels else {}
    sp = cfg.windowing.speed if speed is None else speed
    return ExperimentConfig(
        inputs=tuple(inputs or cfg.inputs),
        targets=tuple(targets or cfg.targets),
        speed=sp or None,
        seed=cfg.seed,
        train=_train_config(cfg),
        model=common,
        family_model=per_family,
    )


def _load_events(out: Path, cfg: RunConfig):
    data_dir = out / cfg.paths.data_dir
    if not (data_dir / "manifest.json").exists():
        raise FileNotFoundError(f"no dataset at {data_dir}; run `lanetcn generate` first")
    return read_events(data_dir)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# commands


def cmd_generate(cfg: RunConfig, out: Path) -> list[Path]:
    events = generate_dataset(_generator_config(cfg), seed=cfg.seed)
    manifest = write_events(events, out / cfg.paths.data_dir, root_seed=cfg.seed)
    _write(out / "config.ini", cfg.to_ini())
    print(f"wrote {len(events)} events to {manifest.parent}")
    return [manifest]


def cmd_train(cfg: RunConfig, out: Path):
    events = _load_events(out, cfg)
    w = cfg.windowing
    data = prepare(events, w.time_step, w.horizon, cfg.inputs, cfg.targets, seed=cfg.seed, speed=w.speed or None)
    family = cfg.model.family
    spec = default_spec(family, len(cfg.inputs), len(cfg.targets), w.horizon, w.time_step, **_model_overrides(cfg, family))
    log.info("training %s on %d windows (%d validation)", family, len(data.train), len(data.val))
    params, history = train(
        spec, data.train, data.val, _train_config(cfg),
        log=lambda e, tr, va: log.info("epoch %d train %.6g val %.6g", e, tr, va),
    )
    model_path = out / cfg.paths.model
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model_path, spec, params)
    _write(out / cfg.paths.report_dir / "history.csv", history.to_csv())
    print(f"best validation MSE {history.best_val:.6g} at epoch {history.best_epoch}; model saved to {model_path}")
    return spec, params, history


def _units(cfg: RunConfig) -> tuple[str, ...]:
    return ("normalized", "physical") if cfg.evaluation.units == "both" else (cfg.evaluation.units,)


def _summary_table(title: str, header, rows) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)] if rows else [len(h) for h in header]
    lines = [title, "  ".join(str(h).ljust(n) for h, n in zip(header, widths)).rstrip()]
    lines += ["  ".join(str(c).ljust(n) for c, n in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


def _eval_model(cfg: RunConfig, out: Path, events, reports: Path) -> list[Path]:
    mode = cfg.evaluation.mode
    targets = TASK_TARGETS[mode]
    inputs = tuple(cfg.windowing.inputs) or targets
    spec, params = load_model(out / cfg.paths.model)
    if spec.input_dim != len(inputs) or spec.output_dim != len(targets):
        raise ParameterError(
            f"model maps {spec.input_dim} inputs to {spec.output_dim} outputs; "
            f"{mode} mode needs {len(inputs)} -> {len(targets)}"
        )
    w = cfg.windowing
    data = prepare(events, w.time_step, w.horizon, inputs, targets, seed=cfg.seed, speed=w.speed or None)
    ev = evaluate(spec, params, data.test, denormalize_units=True)
    report = EvalReport()
    for units in _units(cfg):
        report.add(row_from(ev, spec, data.test, w.speed or None, units))
    paths = [
        _write(reports / f"{mode}_report.csv", report.to_csv()),
        _write(reports / f"{mode}_predictions.csv", prediction_dump(data.test, ev.predictions)),
    ]
    rows = [
        (r.units, render_scaled(r.mse), render_scaled(r.mae), r.n)
        + tuple(render_scaled(r.per_variable[v]) for v in targets)
        for r in report.sorted_rows()
    ]
    header = ("units", "MSE x1e-4", "MAE x1e-4", "windows") + tuple(f"MSE[{v}] x1e-4" for v in targets)
    title = f"{mode} prediction, {spec.family} L={spec.input_length} T={spec.horizon}"
    paths.append(_write(reports / f"{mode}_summary.txt", _summary_table(title, header, rows)))
    return paths


def _eval_scenario(cfg: RunConfig, events, reports: Path) -> list[Path]:
    w, e = cfg.windowing, cfg.evaluation
    targets = TASK_TARGETS["joint"]
    inputs = tuple(w.inputs) or targets
    report = EvalReport()
    cells = {}
    for speed in e.speeds:
        exp = _experiment(cfg, inputs, targets, speed)
        for fam in e.families:
            try:
                cell = fit_cell(fam, w.time_step, w.horizon, events, exp)
            except ParameterError as exc:
                log.warning("no result for %s at %d km/h: %s", fam, speed, exc)
                continue
            cells[(fam, speed)] = cell.evaluation.normalized
            for units in _units(cfg):
                report.add(row_from(cell.evaluation, cell.spec, cell.data.test, speed, units))
    sc = scenario_report(cells, tuple(e.families), tuple(e.speeds))
    imp_rows = [
        (base, sp, repr(sc.rows[("tcn", sp)].mse), repr(sc.rows[(base, sp)].mse), f"{100 * v:.1f}")
        for (base, sp), v in sorted(sc.improvement.items())
    ]
    summary = _summary_table(
        f"joint prediction by scenario speed, L={w.time_step} T={w.horizon} (normalized, x1e-4)",
        ("family", "speed", "MSE", "MAE") + tuple(f"MSE[{v}]" for v in targets),
        [
            (f, sp, render_scaled(m.mse), render_scaled(m.mae)) + tuple(render_scaled(m.per_variable[v]) for v in targets)
            for (f, sp), m in sorted(sc.rows.items())
        ],
    )
    summary += "\n" + _summary_table("TCN improvement over baseline", ("baseline", "speed", "percent"),
                                      [(b, sp, p) for b, sp, _, _, p in imp_rows])
    if sc.missing:
        summary += "\nabsent: " + ", ".join(f"{f} at {sp} km/h" for f, sp in sc.missing) + "\n"
    return [
        _write(reports / "scenario_report.csv", report.to_csv()),
        _write(reports / "scenario_improvement.csv",
               _csv(("baseline", "speed", "tcn_mse", "baseline_mse", "improvement_percent"), imp_rows)),
        _write(reports / "scenario_summary.txt", summary),
    ]


def _eval_ablation(cfg: RunConfig, events, reports: Path) -> list[Path]:
    w, e = cfg.windowing, cfg.evaluation
    base, extra = ("alpha", "x", "y"), ("dx", "dy", "dv")
    directions = ("remove", "add") if e.ablation == "both" else (e.ablation,)
    exp = _experiment(cfg)
    rows = []
    for direction in directions:
        subsets = {"none": base + extra if direction == "remove" else base}
        subsets.update(ablation_subsets(direction, extra, base))
        for r in sensitivity_analysis(subsets, w.time_step, w.horizon, events, exp):
            rows.append((direction, r.label, "+".join(r.inputs), repr(r.mse), repr(r.mae)))
    summary = _summary_table(
        f"input sensitivity for alpha, TCN L={w.time_step} T={w.horizon} (normalized, x1e-4)",
        ("direction", "variable", "MSE", "MAE"),
        [(d, lab, render_scaled(float(m)), render_scaled(float(a))) for d, lab, _, m, a in rows],
    )
    return [
        _write(reports / "ablation.csv", _csv(("direction", "variable", "inputs", "mse", "mae"), rows)),
        _write(reports / "ablation_summary.txt", summary),
    ]


def _eval_grid(cfg: RunConfig, events, reports: Path) -> list[Path]:
    e = cfg.evaluation
    exp = _experiment(cfg)
    grid_rows, best_rows, skipped = [], [], []
    for fam in e.families:
        res = grid_search(fam, list(e.time_steps), list(e.horizons), events, exp)
        grid_rows += [(fam, L, T, repr(m), res.sample_size[(L, T)]) for (L, T), m in sorted(res.mse.items())]
        best_rows += [(fam, T, L, n, repr(res.mse[(L, T)])) for T, L, n in res.table()]
        skipped += [(fam, L, T) for L, T in res.skipped]
    summary = _summary_table(
        "best time step per horizon (normalized MSE x1e-4)",
        ("family", "horizon", "time_step", "samples", "MSE"),
        [(f, T, L, n, render_scaled(float(m))) for f, T, L, n, m in best_rows],
    )
    if skipped:
        summary += "\nskipped (infeasible): " + ", ".join(f"{f} L={L} T={T}" for f, L, T in skipped) + "\n"
    return [
        _write(reports / "grid.csv", _csv(("family", "time_step", "horizon", "mse", "sample_size"), grid_rows)),
        _write(reports / "grid_best.csv", _csv(("family", "horizon", "best_time_step", "sample_size", "mse"), best_rows)),
        _write(reports / "grid_summary.txt", summary),
    ]


def _eval_timing(cfg: RunConfig, reports: Path) -> list[Path]:
    e, w = cfg.evaluation, cfg.windowing
    D, Do = len(cfg.inputs), len(cfg.targets)
    rng = stream(cfg.seed, "timing")
    rows = []
    for L in e.time_steps:
        x = rng.uniform(size=(16, D, L))
        for fam in e.families:
            spec = default_spec(fam, D, Do, w.horizon, L, **_model_overrides(cfg, fam))
            params = init_params(spec, stream(cfg.seed, "init", fam, L))
            us = timing_benchmark({fam: (spec, params)}, x, e.repetitions)[fam]
            rows.append((fam, L, w.horizon, f"{us:.3f}"))
    summary = _summary_table("median batch-1 inference time (us/step)", ("family", "time_step", "horizon", "us_per_step"), rows)
    return [
        _write(reports / "timing.csv", _csv(("family", "time_step", "horizon", "us_per_step"), rows)),
        _write(reports / "timing_summary.txt", summary),
    ]


def cmd_evaluate(cfg: RunConfig, out: Path) -> list[Path]:
    reports = out / cfg.paths.report_dir
    mode = cfg.evaluation.mode
    if mode == "timing":
        paths = _eval_timing(cfg, reports)
    else:
        events = _load_events(out, cfg)
        if mode in TASK_TARGETS:
            paths = _eval_model(cfg, out, events, reports)
        elif mode == "scenario":
            paths = _eval_scenario(cfg, events, reports)
        elif mode == "ablation":
            paths = _eval_ablation(cfg, events, reports)
        else:
            paths = _eval_grid(cfg, events, reports)
    print(Path(paths[-1]).read_text(), end="")
    return paths


def cmd_verify(cfg: RunConfig, out: Path) -> bool:
    checks = run_checks(cfg.seed)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return not failed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanetcn", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file; every key is optional")
    common.add_argument("--seed", type=int, help="root seed (overrides run.seed)")
    common.add_argument("--out", type=Path, default=Path("run"), help="run directory (default: ./run)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config field; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write synthetic event CSVs and a manifest")
    sub.add_parser("train", parents=[common], help="train one model and save weights and loss history")
    ev = sub.add_parser("evaluate", parents=[common], help="emit metric tables for an evaluation mode")
    ev.add_argument("--mode", choices=MODES, help="shortcut for --set evaluation.mode=...")
    sub.add_parser("verify", parents=[common], help="run the numerical self-checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.overrides)
    if getattr(args, "mode", None):
        overrides.append(f"evaluation.mode={args.mode}")
    try:
        cfg = load_config(args.config, overrides, args.seed)
        commands = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate}
        if args.command == "verify":
            return 0 if cmd_verify(cfg, args.out) else 1
        commands[args.command](cfg, args.out)
    except (ParameterError, OSError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: training diverged at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
