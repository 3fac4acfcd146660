"""Batch front door: simulate -> analyze -> report.

  bellrm simulate --config run.json --out outdir [--seed N] [--csv]
  bellrm analyze  --in outdir [--slices N] [--window-ns W] [--alpha-sig P]
  bellrm report   --in outdir [outdir ...]

Configuration is one JSON object with "run", "model" and "analysis"
sections (see README for the schema).  Any scalar can be overridden by an
environment variable prefixed BELLRM_ (e.g. BELLRM_SEED,
BELLRM_DARK_RATE_HZ, BELLRM_SLICES); command-line flags win over both.
Exit codes: 0 ok, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .btag import STATION_LETTERS, BtagWriter, read_btag, split_stations, write_csv
from .chsh import ChshAngles, estimate_chsh, write_chsh_csv
from .errors import ConfigError, DataError, IncompleteSettingsError, UndefinedStatisticError
from .models import OutcomeModel
from .randommeter import (
    BatteryConfig,
    classify_scenario,
    curve_from_reports,
    run_battery,
    write_curve_csv,
    write_reports_csv,
    write_verdict_json,
    RandommeterCurve,
    ScenarioVerdict,
    Verdict,
)
from .source import RunConfig, iter_event_chunks, pulse_geometry, RunStats
from .timetags import extract_sequence, match_coincidences, sequence_partition, slice_records

ENV_PREFIX = "BELLRM_"

EVENTS_FILENAME = "events.btag"
MANIFEST_FILENAME = "manifest.json"


@dataclass
class AnalysisConfig:
    n_slices: int = 2
    window_ns: int = 2
    alpha_sig: float = 0.01
    sequence_length: int = 10000
    block_size: int = 128
    serial_m: int = 4

    def validate(self) -> None:
        if self.n_slices < 2:
            raise ConfigError("analysis.n_slices must be >= 2")
        if self.window_ns <= 0:
            raise ConfigError("analysis.window_ns must be > 0")
        if not 0.0 < self.alpha_sig < 1.0:
            raise ConfigError("analysis.alpha_sig must lie in (0, 1)")
        battery = self.battery()
        if self.sequence_length < battery.min_length:
            raise ConfigError(
                f"analysis.sequence_length must be >= {battery.min_length} "
                "for the configured battery"
            )

    def battery(self) -> BatteryConfig:
        return BatteryConfig(
            alpha_sig=self.alpha_sig, block_size=self.block_size, serial_m=self.serial_m
        )

    @staticmethod
    def from_dict(obj: dict) -> "AnalysisConfig":
        known = set(AnalysisConfig.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown analysis fields: {sorted(unknown)}")
        cfg = AnalysisConfig(**obj)
        cfg.validate()
        return cfg


def _env_overrides(keys) -> dict:
    out = {}
    for key in keys:
        raw = os.environ.get(ENV_PREFIX + key.upper())
        if raw is None:
            continue
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def load_config(path) -> dict:
    """Load a config file; a manifest is accepted too (its config is reused)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if "config" in obj and isinstance(obj["config"], dict) and "run" in obj["config"]:
        obj = obj["config"]
    if "run" not in obj:
        raise ConfigError(f"config {path} lacks a 'run' section")
    return obj


_ANALYSIS_ENV_KEYS = (
    ("slices", "n_slices"),
    ("window_ns", "window_ns"),
    ("alpha_sig", "alpha_sig"),
    ("sequence_length", "sequence_length"),
)


def _merge_analysis_env(analysis_dict: dict) -> dict:
    env = _env_overrides([env_key for env_key, _ in _ANALYSIS_ENV_KEYS])
    for env_key, cfg_key in _ANALYSIS_ENV_KEYS:
        if env_key in env:
            analysis_dict[cfg_key] = env[env_key]
    return analysis_dict


def effective_configs(obj: dict, seed_flag: int | None = None):
    """Merge file values with environment overrides and the --seed flag."""
    run_dict = dict(obj.get("run", {}))
    run_dict.update(_env_overrides(RunConfig.__dataclass_fields__))
    if seed_flag is not None:
        run_dict["seed"] = seed_flag
    run = RunConfig.from_dict(run_dict)
    model = OutcomeModel.from_dict(obj.get("model", {"kind": "QM_NONLOCAL"}))
    analysis_dict = _merge_analysis_env(dict(obj.get("analysis", {})))
    analysis = AnalysisConfig.from_dict(analysis_dict)
    return run, model, analysis


@contextmanager
def output_lock(directory: Path):
    """Exclusive lock file preventing concurrent writers on one directory."""
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DataError(
            f"{directory} is locked by another invocation (remove {lock} if stale)"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock)
        except OSError:
            pass


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(
    directory: Path,
    run: RunConfig,
    model: OutcomeModel,
    analysis: AnalysisConfig,
    stats: RunStats,
    artifact_names,
) -> dict:
    geo = pulse_geometry(run)
    manifest = {
        "tool": "bellrm",
        "tool_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "seed": run.seed,
        "config": {
            "run": run.to_dict(),
            "model": model.to_dict(),
            "analysis": asdict(analysis),
        },
        "geometry": {
            "pulse_duration_s": geo.pulse_duration_s,
            "rep_period_s": geo.rep_period_s,
            "duty_cycle": geo.duty_cycle,
            "light_time_s": geo.light_time_s,
        },
        "stats": stats.to_dict(),
        "artifacts": {
            name: {
                "bytes": (directory / name).stat().st_size,
                "sha256": _sha256(directory / name),
            }
            for name in artifact_names
        },
    }
    with open(directory / MANIFEST_FILENAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def cmd_simulate(args) -> int:
    obj = load_config(args.config)
    run, model, analysis = effective_configs(obj, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with output_lock(out_dir):
        stats = RunStats()
        events_path = out_dir / EVENTS_FILENAME
        with BtagWriter(events_path) as writer:
            for chunk in iter_event_chunks(run, model, stats):
                writer.write(chunk)
        artifact_names = [EVENTS_FILENAME]
        if args.csv:
            write_csv(out_dir / "events.csv", read_btag(events_path))
            artifact_names.append("events.csv")
        write_manifest(out_dir, run, model, analysis, stats, artifact_names)
    print(
        f"simulate: {stats.n_pulses} pulses, {stats.n_coincidence_pairs} coincident "
        f"pairs, {stats.n_events} events -> {events_path}"
    )
    return 0


def _load_manifest(directory: Path) -> dict:
    path = directory / MANIFEST_FILENAME
    if not path.exists():
        raise DataError(f"missing {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def analyze_run(
    events: np.ndarray,
    run: RunConfig,
    analysis: AnalysisConfig,
    angles: ChshAngles = ChshAngles(),
):
    """Full analysis pipeline on an in-memory event stream.

    Returns (records, chsh_estimates, curve, verdict, report_rows); CHSH
    estimates cover the slices that could be estimated.
    """
    geo = pulse_geometry(run)
    battery = analysis.battery()
    events_a, events_b = split_stations(events)
    records = match_coincidences(
        events_a,
        events_b,
        analysis.window_ns,
        rep_rate_hz=run.rep_rate_hz,
        settings_menu=run.settings_menu,
    )
    records = slice_records(records, analysis.n_slices, geo.pulse_duration_ns)

    report_rows = []
    reports_by_slice = {}
    for slice_index in range(analysis.n_slices):
        slice_reports = []
        for station in (0, 1):
            seq = extract_sequence(records, station, slice_index)
            for i, block in enumerate(sequence_partition(seq.bits, analysis.sequence_length)):
                sid = f"{STATION_LETTERS[station]}{slice_index}-{i}"
                report = run_battery(block, battery, sequence_id=sid)
                slice_reports.append(report)
                report_rows.append((sid, slice_index, STATION_LETTERS[station], report))
        reports_by_slice[slice_index] = slice_reports

    chsh_estimates = []
    chsh_failure = None
    for slice_index in range(analysis.n_slices):
        try:
            chsh_estimates.append(
                estimate_chsh(records, run.settings_menu, angles, slice_index)
            )
        except (IncompleteSettingsError, UndefinedStatisticError) as exc:
            chsh_failure = str(exc)

    try:
        curve = curve_from_reports(reports_by_slice, battery)
        verdict = classify_scenario(curve, chsh_estimates)
        if chsh_failure is not None and verdict.label is not Verdict.INCONCLUSIVE:
            verdict = ScenarioVerdict(
                Verdict.INCONCLUSIVE, math.nan, math.nan, math.nan, math.nan, 0, 0,
                verdict.per_slice_S, verdict.per_slice_R, chsh_failure,
            )
    except (ConfigError, UndefinedStatisticError) as exc:
        curve = RandommeterCurve((), battery.alpha_sig, battery.false_alarm_rate)
        verdict = ScenarioVerdict(
            Verdict.INCONCLUSIVE, math.nan, math.nan, math.nan, math.nan, 0, 0,
            (), (), f"no data: {exc}",
        )
    if records.size == 0:
        verdict = ScenarioVerdict(
            Verdict.INCONCLUSIVE, math.nan, math.nan, math.nan, math.nan, 0, 0,
            verdict.per_slice_S, verdict.per_slice_R, "no data: no coincidences matched",
        )
    return records, chsh_estimates, curve, verdict, report_rows


def cmd_analyze(args) -> int:
    in_dir = Path(getattr(args, "in"))
    manifest = _load_manifest(in_dir)
    run = RunConfig.from_dict(manifest["config"]["run"])
    analysis_dict = _merge_analysis_env(dict(manifest["config"].get("analysis", {})))
    for key, flag in (
        ("n_slices", args.slices),
        ("window_ns", args.window_ns),
        ("alpha_sig", args.alpha_sig),
        ("sequence_length", args.sequence_length),
    ):
        if flag is not None:
            analysis_dict[key] = flag
    analysis = AnalysisConfig.from_dict(analysis_dict)
    events = read_btag(in_dir / EVENTS_FILENAME)

    with output_lock(in_dir):
        records, chsh_estimates, curve, verdict, report_rows = analyze_run(
            events, run, analysis
        )
        write_chsh_csv(in_dir / "chsh_per_slice.csv", chsh_estimates)
        write_reports_csv(in_dir / "sequences.csv", report_rows)
        write_curve_csv(in_dir / "curve.csv", curve)
        write_verdict_json(in_dir / "verdict.json", verdict)

    print(
        f"analyze: {records.size} coincidences, {len(report_rows)} sequences, "
        f"verdict {verdict.label.value}"
    )
    return 0


def _read_csv_rows(path: Path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_report(args) -> int:
    run_dirs = [Path(p) for p in getattr(args, "in")]
    missing = []
    for d in run_dirs:
        for name in ("chsh_per_slice.csv", "curve.csv", "verdict.json"):
            if not (d / name).exists():
                missing.append(str(d / name))
    if missing:
        raise DataError("missing analysis outputs: " + ", ".join(sorted(missing)))

    out_dir = Path(args.out) if args.out else run_dirs[0]
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_lines = []
    combined_rows = []
    for d in run_dirs:
        with open(d / "verdict.json", "r", encoding="utf-8") as fh:
            verdict = json.load(fh)
        chsh_rows = {row["slice_index"]: row for row in _read_csv_rows(d / "chsh_per_slice.csv")}
        curve_rows = _read_csv_rows(d / "curve.csv")
        seed = ""
        manifest_path = d / MANIFEST_FILENAME
        if manifest_path.exists():
            with open(manifest_path, "r", encoding="utf-8") as fh:
                seed = json.load(fh).get("seed", "")
        summary_lines.append(f"run: {d.name}" + (f" (seed {seed})" if seed != "" else ""))
        for row in curve_rows:
            s_row = chsh_rows.get(row["slice_index"])
            s_text = f"S = {float(s_row['S']):.4f} +/- {float(s_row['std_err']):.4f}" if s_row else "S = n/a"
            summary_lines.append(
                f"  slice {row['slice_index']}: {s_text}, "
                f"R = {float(row['rejection_rate']):.3f} "
                f"[{float(row['ci_low']):.3f}, {float(row['ci_high']):.3f}], "
                f"compression {float(row['mean_compression_ratio']):.3f}"
            )
            combined_rows.append(
                {
                    "run": d.name,
                    "slice_index": row["slice_index"],
                    "S": s_row["S"] if s_row else "",
                    "S_std_err": s_row["std_err"] if s_row else "",
                    "rejection_rate": row["rejection_rate"],
                    "ci_low": row["ci_low"],
                    "ci_high": row["ci_high"],
                    "mean_compression_ratio": row["mean_compression_ratio"],
                    "randomness_level": row["randomness_level"],
                }
            )
        summary_lines.append(f"  verdict: {verdict['label']}")
        summary_lines.append("")

    summary_path = out_dir / "summary.txt"
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(summary_lines))
    combined_path = out_dir / "combined_curves.csv"
    with open(combined_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "run", "slice_index", "S", "S_std_err", "rejection_rate",
                "ci_low", "ci_high", "mean_compression_ratio", "randomness_level",
            ],
        )
        writer.writeheader()
        writer.writerows(combined_rows)
    print(f"report: wrote {summary_path} and {combined_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bellrm",
        description="Pulsed Bell-test simulation and randomness-evolution analysis",
    )
    parser.add_argument("--version", action="version", version=f"bellrm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a time-tag file from a config")
    p_sim.add_argument("--config", required=True, help="JSON config path")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.add_argument("--csv", action="store_true", help="also write the CSV mirror")
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="match, slice, test and classify a run")
    p_an.add_argument("--in", required=True, help="directory produced by simulate")
    p_an.add_argument("--slices", type=int, default=None)
    p_an.add_argument("--window-ns", dest="window_ns", type=int, default=None)
    p_an.add_argument("--alpha-sig", dest="alpha_sig", type=float, default=None)
    p_an.add_argument(
        "--sequence-length", dest="sequence_length", type=int, default=None
    )
    p_an.set_defaults(func=cmd_analyze)

    p_rep = sub.add_parser("report", help="summarize one or more analyzed runs")
    p_rep.add_argument("--in", nargs="+", required=True, help="analyzed run directories")
    p_rep.add_argument("--out", default=None, help="where to write the summary")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
