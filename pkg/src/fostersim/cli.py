"""Command-line entry point: ``fostersim <command> CONFIG [overrides]``.

Exit codes: 0 success, 2 configuration or validation error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .datamodel import CLASSES, RACES, EpisodeTable, StayClass, ValidationError, format_month, parse_month
from .estimate import FittedBundle, fit_bundle
from .intervene import SEPARABILITY, SHORT_BLACK_SCR_VALUES, ScenarioConfig, TrainingError, run_scenario
from .metrics import ValidationReport, observed_in_care
from .simulate import ConfigError
from .synth import GroundTruth, generate_episodes

log = logging.getLogger("fostersim")

FORMAT_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
COMMANDS = ("synth", "fit", "simulate", "intervene", "sweep", "report")
TOP_LEVEL = {"seed", "paths", "ground_truth", "synth", "fit", "scenario", "sweep"}


class DataError(Exception):
    """Input data is missing, unreadable or unusable."""


class RunConfig:
    """Parsed configuration with CLI overrides applied."""

    def __init__(self, doc: dict, path: Path):
        self.path = path
        self.doc = doc
        unknown = set(doc) - TOP_LEVEL
        if unknown:
            raise ConfigError(f"{path}: unknown top-level field(s) {sorted(unknown)}")
        self.seed = self._int(doc.get("seed", 0), "seed")
        base = path.parent
        paths = doc.get("paths", {})
        self.episodes = base / paths.get("episodes", "episodes.csv")
        self.bundle = base / paths.get("bundle", "bundle.json")
        self.output_dir = base / paths.get("output_dir", "out")
        self.synth = doc.get("synth", {})
        self.fit = doc.get("fit", {})
        self.sweep = doc.get("sweep", {})
        try:
            self.scenario = ScenarioConfig.from_json({**doc.get("scenario", {}), "seed": self.seed})
        except ConfigError as exc:
            raise ConfigError(f"{path}: scenario: {exc}") from None

    def _int(self, value, field: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{self.path}: {field} must be an integer, got {value!r}")
        return value

    def month(self, section: dict, field: str, default: str) -> int:
        try:
            return parse_month(str(section.get(field, default)))
        except ValueError as exc:
            raise ConfigError(f"{self.path}: {field}: {exc}") from None

    @property
    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.doc, sort_keys=True).encode()).hexdigest()

    @property
    def provenance(self) -> dict:
        return {"format_version": FORMAT_VERSION, "config_sha256": self.sha256, "seed": self.seed}

    @property
    def header(self) -> str:
        return f"fostersim format_version={FORMAT_VERSION} config_sha256={self.sha256} seed={self.seed}"


def load_config(path: str, args) -> RunConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{p}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: config must be a JSON object")
    # overrides become part of the hashed document
    if args.seed is not None:
        doc["seed"] = args.seed
    scenario = dict(doc.get("scenario", {}))
    if args.horizon is not None:
        scenario["horizon"] = args.horizon
    if getattr(args, "mode", None) is not None:
        scenario["mode"] = args.mode
    if scenario:
        doc["scenario"] = scenario
    return RunConfig(doc, p)


def write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=False)
        fh.write("\n")


def read_episodes(path: Path) -> EpisodeTable:
    try:
        return EpisodeTable.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"{path}: episodes file not found") from None
    except (ValidationError, UnicodeDecodeError) as exc:
        raise DataError(str(exc)) from None


def read_bundle(path: Path) -> FittedBundle:
    if not path.exists():
        raise DataError(f"{path}: fitted bundle not found (run 'fit' first)")
    try:
        return FittedBundle.load(path)
    except ValidationError as exc:
        raise DataError(str(exc)) from None


def cmd_synth(cfg: RunConfig) -> None:
    try:
        truth = GroundTruth.from_json(cfg.doc.get("ground_truth", "ny"))
    except ValidationError as exc:
        raise ConfigError(f"{cfg.path}: ground_truth: {exc}") from None
    start = cfg.month(cfg.synth, "start", "2000-11")
    months = cfg._int(cfg.synth.get("months", 216), "synth.months")
    table = generate_episodes(truth, start, months, cfg.seed)
    cfg.episodes.parent.mkdir(parents=True, exist_ok=True)
    table.write_csv(cfg.episodes, header_comment=cfg.header)
    log.info("wrote %d episodes to %s", len(table), cfg.episodes)


def cmd_fit(cfg: RunConfig) -> None:
    episodes = read_episodes(cfg.episodes)
    start = cfg.month(cfg.fit, "history_start", "2000-11")
    end = cfg.month(cfg.fit, "history_end", "2017-11")
    maturity = cfg._int(cfg.fit.get("los_maturity_months", 72), "fit.los_maturity_months")
    try:
        bundle = fit_bundle(episodes, start, end, seed=cfg.seed, los_maturity_months=maturity)
    except ValidationError as exc:
        raise DataError(f"{cfg.episodes}: {exc}") from None
    write_json(cfg.bundle, {**bundle.to_json(), "provenance": cfg.provenance})
    log.info("wrote fitted bundle to %s", cfg.bundle)


def save_result(result, out: Path, cfg: RunConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    result.write_csv(out / "series.csv", header_comment=cfg.header)
    result.in_care.write_csv(out / "in_care.csv", header_comment=cfg.header)
    result.admitted.write_csv(out / "admitted.csv", header_comment=cfg.header)
    if result.screened is not None:
        result.screened.write_csv(out / "screened.csv", header_comment=cfg.header)
        result.reported.write_csv(out / "reported.csv", header_comment=cfg.header)
    result.dump_json(out / "result.json", extra={"provenance": cfg.provenance})


def _run(config: ScenarioConfig, bundle: FittedBundle):
    try:
        return run_scenario(config, bundle)
    except TrainingError as exc:
        raise DataError(f"training: {exc}") from None


def cmd_simulate(cfg: RunConfig) -> None:
    bundle = read_bundle(cfg.bundle)
    save_result(_run(cfg.scenario, bundle), cfg.output_dir / "simulate", cfg)


def cmd_intervene(cfg: RunConfig) -> None:
    bundle = read_bundle(cfg.bundle)
    config = cfg.scenario.with_overrides(mode="algorithm")
    save_result(_run(config, bundle), cfg.output_dir / "intervene", cfg)


def scenario_seed(master: int, index: int) -> int:
    """Independent per-scenario seed; results do not depend on scheduling."""
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


def sweep_grid(cfg: RunConfig) -> list[tuple[str, float]]:
    seps = cfg.sweep.get("separability", list(SEPARABILITY))
    scrs = cfg.sweep.get("short_black_scr", list(SHORT_BLACK_SCR_VALUES))
    if not isinstance(seps, list) or not isinstance(scrs, list) or not seps or not scrs:
        raise ConfigError(f"{cfg.path}: sweep: separability and short_black_scr must be non-empty lists")
    return list(itertools.product(seps, scrs))


def _sweep_cell(args):
    bundle_path, scenario_doc, out, header, provenance = args
    bundle = FittedBundle.load(bundle_path)
    config = ScenarioConfig.from_json(scenario_doc)
    base = run_scenario(config.with_overrides(mode="baseline"), bundle)
    algo = run_scenario(config.with_overrides(mode="algorithm"), bundle)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    algo.write_csv(out / "series.csv", header_comment=header)
    base.write_csv(out / "baseline_series.csv", header_comment=header)
    algo.dump_json(out / "result.json", extra={"provenance": provenance})
    adm = algo.admitted_totals()
    return {
        "baseline_in_care": base.total_in_care(),
        "algorithm_in_care": algo.total_in_care(),
        "long_admitted_per_month": float(adm[StayClass.LONG.index].sum() / config.horizon),
        "short_admitted_per_month": float(adm[StayClass.SHORT.index].sum() / config.horizon),
        "long_disparity": float(algo.disparity(StayClass.LONG).mean()),
        "short_disparity": float(algo.disparity(StayClass.SHORT).mean()),
    }


def cmd_sweep(cfg: RunConfig, workers: int | None) -> None:
    read_bundle(cfg.bundle)  # fail early with a data error
    grid = sweep_grid(cfg)
    root = cfg.output_dir / "sweep"
    jobs = []
    for i, (sep, scr) in enumerate(grid):
        try:
            config = cfg.scenario.with_overrides(separability=sep, short_black_scr=scr, seed=scenario_seed(cfg.seed, i))
        except ConfigError as exc:
            raise ConfigError(f"{cfg.path}: sweep[{i}]: {exc}") from None
        jobs.append((str(cfg.bundle), config.to_json(), str(root / f"{sep}-scr{scr:.2f}"), cfg.header, cfg.provenance))
    workers = workers or cfg.sweep.get("workers") or os.cpu_count() or 1
    if workers == 1:
        rows = [_sweep_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {cfg.header}\n")
        writer = csv.writer(fh, lineterminator="\n")
        fields = list(rows[0])
        writer.writerow(["separability", "short_black_scr", "seed", *fields])
        for (sep, scr), job, row in zip(grid, jobs, rows):
            writer.writerow([sep, scr, job[1]["seed"], *(repr(row[f]) for f in fields)])
    log.info("wrote %d sweep result sets under %s", len(rows), root)


def _svg(fig, path: Path, cfg: RunConfig) -> None:
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = cfg.sha256
    fig.savefig(path, format="svg", metadata={"Date": None, "Description": cfg.header})


def cmd_report(cfg: RunConfig) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    bundle = read_bundle(cfg.bundle)
    episodes = read_episodes(cfg.episodes)
    base = _run(cfg.scenario.with_overrides(mode="baseline"), bundle)
    algo = _run(cfg.scenario.with_overrides(mode="algorithm"), bundle)
    data_end = int(episodes.admit_month.max()) + 1 if len(episodes) else 0
    months = [m for m in base.months if m < data_end]
    if len(months) < 3:
        raise DataError(
            f"{cfg.episodes}: episodes end at {format_month(data_end - 1) if data_end else 'start'}; "
            f"need at least 3 months after {format_month(bundle.history_end - 1)} to validate"
        )
    actual = observed_in_care(episodes, months).counts.sum(axis=1)
    simulated = base.in_care.window(months[0], months[-1] + 1).counts.sum(axis=(0, 2))
    report = ValidationReport.build(months, simulated, actual)
    out = cfg.output_dir / "report"
    write_json(out / "validation.json", {**report.to_json(), "provenance": cfg.provenance})

    x = np.arange(len(months))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for r, color in zip(RACES, ("tab:red", "tab:cyan")):
        name = "Black" if r.value == "B" else "white"
        ax.plot(x, simulated[r.index], "^-", color=color, label=f"{name} simulated")
        ax.plot(x, actual[r.index], "o--", color=color, label=f"{name} actual")
    ax.set_ylabel("youth in care")
    ax.set_xticks(x, [format_month(m) for m in months], rotation=45)
    ax.legend()
    fig.tight_layout()
    _svg(fig, out / "in_care_by_race.svg", cfg)
    plt.close(fig)

    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    x = np.arange(len(base.months))
    for ax, stay in zip(axes, CLASSES):
        ax.plot(x, base.disparity(stay), "o-", label="baseline")
        ax.plot(x, algo.disparity(stay), "^-", label="algorithm")
        ax.set_title(f"{stay.value}-term Black - white in care")
        ax.set_xticks(x, [format_month(m) for m in base.months], rotation=45)
        ax.legend()
    fig.tight_layout()
    _svg(fig, out / "disparity.svg", cfg)
    plt.close(fig)
    log.info("wrote report to %s", out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fostersim", description="Foster-care system dynamics simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--horizon", type=int, help="override the forecast horizon in months")
        if name == "simulate":
            p.add_argument("--mode", choices=("baseline", "algorithm"), help="override the scenario mode")
        if name == "sweep":
            p.add_argument("--workers", type=int, help="worker processes (default: logical cores)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.config, args)
        if args.command == "sweep":
            cmd_sweep(cfg, args.workers)
        else:
            globals()[f"cmd_{args.command}"](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
