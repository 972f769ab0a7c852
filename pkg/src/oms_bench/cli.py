"""oms-bench command line: scenario generation, validation, benchmark runs.

Subcommands:

    synth-gen    generate one synthetic bundle from a SynthConfig JSON
    validate     read + validate an OMSB bundle file
    run          full grid: fit, score, per-setting reports, comparisons
    trick-study  OtB fitted with vs without misclassified train samples
    compare      rebuild comparison matrices from an existing reports.csv

Exit codes: 0 ok, 2 config error, 3 bundle format/validation error,
4 fit or evaluation error. Outputs are written only after the whole run
has succeeded, so a failed invocation leaves no partial files.
"""

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    FitError,
    FormatError,
    OmsBenchError,
    SchemaError,
    UsageError,
    ValidationError,
)
from .evaluation import (
    EvalReport,
    EvalSetting,
    evaluate_binary,
    apply_threshold,
    label_ground_truth,
    optimal_f1_threshold,
    simulate_perfect_ood,
)
from .monitors import MonitorConfig, fit, score
from .stats import COMPARISON_METRICS, comparison_matrix, wilcoxon_one_sided
from .synth import SynthConfig, generate
from .tensor_io import (
    ScenarioBundle,
    Split,
    bundle_to_container,
    load_bundle,
    read_container_file,
    write_container_file,
)

REPORT_COLUMNS = (
    "scenario",
    "monitor",
    "setting",
    "threshold",
    "tp",
    "fp",
    "fn",
    "tn",
    "precision",
    "recall",
    "f1",
)


@dataclass(frozen=True)
class NamedMonitor:
    name: str
    config: MonitorConfig


@dataclass
class BenchmarkConfig:
    seed: int
    scenarios: list
    monitors: list[NamedMonitor]
    settings: list[EvalSetting]
    include_perfect_ood: bool
    output_dir: str
    cross_apply_threshold: bool = False


def _monitor_from_json(raw: dict) -> NamedMonitor:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("each monitor entry must be an object with a 'kind' field")
    raw = dict(raw)
    name = raw.pop("name", raw["kind"])
    allowed = set(MonitorConfig.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown monitor config fields: {sorted(unknown)}")
    try:
        config = MonitorConfig(**raw)
        config.validate()
    except (TypeError, UsageError) as exc:
        raise ConfigError(f"bad monitor config: {exc}") from exc
    return NamedMonitor(name=name, config=config)


def load_benchmark_config(path, seed_override: int | None = None) -> BenchmarkConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("benchmark config must be a JSON object")

    seed = raw.get("seed", 0)
    if seed_override is not None:
        seed = seed_override
    scenarios = raw.get("scenarios", [])
    monitors = [_monitor_from_json(m) for m in raw.get("monitors", [])]
    if not scenarios:
        raise ConfigError("config must list at least one scenario")
    if not monitors:
        raise ConfigError("config must list at least one monitor")
    names = [m.name for m in monitors]
    if len(set(names)) != len(names):
        raise ConfigError("monitor names must be unique (set 'name' to disambiguate)")

    settings_raw = raw.get("settings", ["OOD", "OMS"])
    try:
        settings = [EvalSetting(s) for s in settings_raw]
    except ValueError as exc:
        raise ConfigError(f"settings must be a subset of ['OOD', 'OMS']: {exc}") from exc
    if not settings:
        raise ConfigError("config must evaluate at least one setting")

    cross = bool(raw.get("cross_apply_threshold", False))
    if cross and EvalSetting.OOD not in settings:
        raise ConfigError("cross_apply_threshold requires the OOD setting to be evaluated")

    return BenchmarkConfig(
        seed=int(seed),
        scenarios=scenarios,
        monitors=monitors,
        settings=settings,
        include_perfect_ood=bool(raw.get("include_perfect_ood", False)),
        output_dir=str(raw.get("output_dir", "reports")),
        cross_apply_threshold=cross,
    )


def resolve_scenarios(config: BenchmarkConfig) -> list[ScenarioBundle]:
    bundles = []
    for idx, entry in enumerate(config.scenarios):
        if not isinstance(entry, dict) or ("bundle" in entry) == ("synth" in entry):
            raise ConfigError(
                f"scenario {idx}: must be an object with exactly one of 'bundle' or 'synth'"
            )
        if "bundle" in entry:
            path = entry["bundle"]
            try:
                container = read_container_file(path)
            except OSError as exc:
                raise ConfigError(f"scenario {idx}: cannot read bundle {path!r}: {exc}") from exc
            bundles.append(load_bundle(container))
        else:
            synth_raw = dict(entry["synth"])
            synth_raw.setdefault("seed", config.seed + idx)
            bundles.append(generate(SynthConfig.from_json_dict(synth_raw)))
    names = [b.name for b in bundles]
    if len(set(names)) != len(names):
        raise ConfigError("scenario names must be unique")
    return bundles


def eval_split(bundle: ScenarioBundle) -> Split:
    """The concatenated (test_id ++ ood) split every monitor is scored on."""
    return Split(
        features=np.concatenate([bundle.test_id.features, bundle.ood.features]),
        labels=np.concatenate([bundle.test_id.labels, bundle.ood.labels]),
        predictions=np.concatenate([bundle.test_id.predictions, bundle.ood.predictions]),
    )


# -------------------------------------------------------------------- reports


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def _report_row(report: EvalReport) -> list[str]:
    return [
        report.scenario,
        report.monitor,
        report.setting.value if report.setting else "",
        _fmt(report.threshold),
        str(report.tp),
        str(report.fp),
        str(report.fn),
        str(report.tn),
        _fmt(report.precision),
        _fmt(report.recall),
        _fmt(report.f1),
    ]


def reports_to_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for report in sorted(reports, key=lambda r: (r.scenario, r.monitor, r.setting.value)):
        writer.writerow(_report_row(report))
    return buf.getvalue()


def reports_to_markdown(reports: list[EvalReport], title: str) -> str:
    lines = [
        title,
        "",
        "| scenario | monitor | setting | threshold | precision | recall | f1 |",
        "|---|---|---|---|---|---|---|",
    ]
    def cell(x: float) -> str:
        return "-" if math.isnan(x) else f"{x:.4g}"

    for r in sorted(reports, key=lambda r: (r.scenario, r.monitor, r.setting.value)):
        lines.append(
            f"| {r.scenario} | {r.monitor} | {r.setting.value} | {cell(r.threshold)} "
            f"| {cell(r.precision)} | {cell(r.recall)} | {cell(r.f1)} |"
        )
    lines.append("")
    return "\n".join(lines) + "\n"


def _parse_float(text: str) -> float:
    return math.nan if text == "" else float(text)


def read_reports_csv(path) -> list[EvalReport]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read reports file: {exc}") from exc
    reports = []
    for row in rows:
        try:
            reports.append(
                EvalReport(
                    scenario=row["scenario"],
                    monitor=row["monitor"],
                    setting=EvalSetting(row["setting"]),
                    threshold=_parse_float(row["threshold"]),
                    tp=int(row["tp"]),
                    fp=int(row["fp"]),
                    fn=int(row["fn"]),
                    tn=int(row["tn"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed reports row {row!r}: {exc}") from exc
    return reports


def _comparison_files(reports: list[EvalReport], settings, out: dict[str, str]) -> None:
    for setting in settings:
        for metric in COMPARISON_METRICS:
            matrix = comparison_matrix(reports, metric, setting)
            stem = f"comparison_{setting.value}_{metric}"
            out[f"{stem}.csv"] = matrix.to_csv()
            out[f"{stem}.md"] = matrix.to_markdown()


def _write_outputs(output_dir, files: dict[str, str]) -> None:
    directory = Path(output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (directory / name).write_text(text, encoding="utf-8")


# ------------------------------------------------------------------------ run


def run_benchmark(config: BenchmarkConfig) -> dict[str, str]:
    """Execute the full grid; returns {filename: contents} without writing."""
    bundles = resolve_scenarios(config)
    reports: list[EvalReport] = []
    fit_failures: list[str] = []
    for bundle in bundles:
        split = eval_split(bundle)
        truths = {setting: label_ground_truth(bundle, setting) for setting in config.settings}
        for monitor in config.monitors:
            try:
                model = fit(bundle, monitor.config)
            except FitError as exc:
                fit_failures.append(f"{bundle.name} / {monitor.name}: {exc}")
                continue
            scores = score(model, split, bundle.head)
            ood_threshold = None
            if config.cross_apply_threshold and not scores.binary:
                ood_threshold, _ = optimal_f1_threshold(scores, truths[EvalSetting.OOD])
            for setting in config.settings:
                if scores.binary:
                    report = evaluate_binary(scores, truths[setting])
                elif ood_threshold is not None:
                    report = apply_threshold(scores, ood_threshold, truths[setting])
                else:
                    _, report = optimal_f1_threshold(scores, truths[setting])
                reports.append(
                    report.tagged(scenario=bundle.name, monitor=monitor.name, setting=setting)
                )
    if fit_failures:
        raise FitError(
            "fit failed for {} grid cell(s):\n  {}".format(
                len(fit_failures), "\n  ".join(fit_failures)
            )
        )

    files = {
        "reports.csv": reports_to_csv(reports),
        "reports.md": reports_to_markdown(reports, "Per-(scenario, monitor, setting) evaluation"),
    }
    if config.include_perfect_ood:
        perfect = [simulate_perfect_ood(bundle) for bundle in bundles]
        files["perfect_ood.csv"] = reports_to_csv(perfect)
    _comparison_files(reports, config.settings, files)
    return files


TRICK_VARIANTS = (("All training data", False), ("Only correct data", True))


def run_trick_study(config: BenchmarkConfig) -> dict[str, str]:
    """OtB with and without the misclassified-train-sample filter, OMS setting."""
    otb = next((m for m in config.monitors if m.config.kind == "otb"), None)
    if otb is None:
        raise ConfigError("trick-study requires an 'otb' monitor in the config")
    bundles = resolve_scenarios(config)

    rows: list[EvalReport] = []
    per_variant: dict[str, list[EvalReport]] = {name: [] for name, _ in TRICK_VARIANTS}
    for bundle in bundles:
        split = eval_split(bundle)
        truth = label_ground_truth(bundle, EvalSetting.OMS)
        for variant_name, filtered in TRICK_VARIANTS:
            model = fit(bundle, replace(otb.config, filter_misclassified=filtered))
            report = evaluate_binary(score(model, split, bundle.head), truth)
            report = report.tagged(scenario=bundle.name, monitor=variant_name, setting=EvalSetting.OMS)
            rows.append(report)
            per_variant[variant_name].append(report)

    def stat_cells(metric: str):
        cells = {}
        for variant_name, _ in TRICK_VARIANTS:
            vals = np.array([r.metric(metric) for r in per_variant[variant_name]])
            vals = vals[np.isfinite(vals)]
            if vals.size == 0:
                cells[variant_name] = "undefined"
            else:
                std = float(np.std(vals, ddof=1)) if vals.size > 1 else math.nan
                cells[variant_name] = f"{float(np.mean(vals)):.4f} ({std:.4f})"
        return cells

    def paired(metric: str):
        base = np.array([r.metric(metric) for r in per_variant["All training data"]])
        filt = np.array([r.metric(metric) for r in per_variant["Only correct data"]])
        ok = np.isfinite(base) & np.isfinite(filt)
        return base[ok], filt[ok]

    base_r, filt_r = paired("recall")
    base_p, filt_p = paired("precision")
    p_recall = wilcoxon_one_sided(filt_r, base_r) if base_r.size else math.nan
    p_precision = wilcoxon_one_sided(base_p, filt_p) if base_p.size else math.nan

    recall_cells = stat_cells("recall")
    precision_cells = stat_cells("precision")
    summary_rows = [
        ("All training data", recall_cells["All training data"], precision_cells["All training data"]),
        ("Only correct data", recall_cells["Only correct data"], precision_cells["Only correct data"]),
        ("Wilcoxon test", "Only correct > All training", "All training > Only correct"),
        ("p-value", _fmt(p_recall), _fmt(p_precision)),
    ]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "recall", "precision"])
    writer.writerows(summary_rows)

    md_lines = [
        "OMS results for the monitor-fit filtering trick (Outside-the-Box)",
        "",
        "| | Recall | Precision |",
        "|---|---|---|",
    ]
    for label, rec, prec in summary_rows:
        md_lines.append(f"| {label} | {rec} | {prec} |")
    md_lines.append("")

    return {
        "trick_scenarios.csv": reports_to_csv(rows),
        "trick_summary.csv": buf.getvalue(),
        "trick_summary.md": "\n".join(md_lines) + "\n",
    }


# ------------------------------------------------------------------- commands


def _cmd_synth_gen(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if args.seed is not None:
        raw = dict(raw)
        raw["seed"] = args.seed
    bundle = generate(SynthConfig.from_json_dict(raw))
    written = write_container_file(bundle_to_container(bundle), args.out)
    print(f"wrote {bundle.name!r} ({written} bytes) to {args.out}")
    return 0


def _cmd_validate(args) -> int:
    try:
        container = read_container_file(args.bundle)
    except OSError as exc:
        raise ConfigError(f"cannot read bundle file: {exc}") from exc
    bundle = load_bundle(container)
    print(
        f"ok: {bundle.name!r} kind={bundle.ood_kind} classes={bundle.num_classes} "
        f"train={len(bundle.train)} test_id={len(bundle.test_id)} ood={len(bundle.ood)}"
    )
    return 0


def _cmd_run(args) -> int:
    config = load_benchmark_config(args.config, args.seed)
    if args.out is not None:
        config.output_dir = args.out
    files = run_benchmark(config)
    _write_outputs(config.output_dir, files)
    print(f"wrote {len(files)} report file(s) to {config.output_dir}")
    return 0


def _cmd_trick_study(args) -> int:
    config = load_benchmark_config(args.config, args.seed)
    if args.out is not None:
        config.output_dir = args.out
    files = run_trick_study(config)
    _write_outputs(config.output_dir, files)
    print(f"wrote {len(files)} trick-study file(s) to {config.output_dir}")
    return 0


def _cmd_compare(args) -> int:
    reports: list[EvalReport] = []
    for path in args.reports:
        reports.extend(read_reports_csv(path))
    settings = sorted({r.setting for r in reports}, key=lambda s: s.value)
    if not settings:
        raise ConfigError("reports contain no rows")
    files: dict[str, str] = {}
    _comparison_files(reports, settings, files)
    _write_outputs(args.out, files)
    print(f"wrote {len(files)} comparison file(s) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oms-bench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate a synthetic scenario bundle")
    p.add_argument("--config", required=True, help="SynthConfig JSON file")
    p.add_argument("--out", required=True, help="output .omsb path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=_cmd_synth_gen)

    p = sub.add_parser("validate", help="read and validate an OMSB bundle")
    p.add_argument("bundle", help="bundle file path")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run", help="run the full benchmark grid")
    p.add_argument("--config", required=True, help="BenchmarkConfig JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the config output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("trick-study", help="OtB filtered-fit study (OMS setting)")
    p.add_argument("--config", required=True, help="BenchmarkConfig JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the config output directory")
    p.set_defaults(func=_cmd_trick_study)

    p = sub.add_parser("compare", help="comparison matrices from reports.csv files")
    p.add_argument("--reports", nargs="+", required=True, help="one or more reports.csv files")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, SchemaError, ValidationError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 3
    except (FitError, UsageError) as exc:
        print(f"fit/eval error: {exc}", file=sys.stderr)
        return 4
    except OmsBenchError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
