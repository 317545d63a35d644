"""Command-line front end: single runs and one-axis sweeps.

`fedarmor run --config cfg.json` executes one experiment and writes
`report.json` (the full metrics report, including the transfer matrix)
and `report.csv` (one schema row) to the output directory.

`fedarmor sweep --config cfg.json --axis epsilon --values 0.005,0.012`
repeats the run once per value, holding the master seed and every other
setting fixed so the rows are directly comparable, and writes the
combined `sweep.csv` and `sweep.json`.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from .config import ExperimentConfig, parse_config
from .errors import ConfigError
from .federation import DEFENSES, run_experiment
from .metrics import MetricsReport

__all__ = ["main", "cmd_run", "cmd_sweep", "CSV_HEADER"]

CSV_HEADER = "defense,epsilon,fraction,dp,seed,clean_acc_mean,asr_self,asr_avg"

SWEEP_AXES = ("epsilon", "fraction", "dp", "defense")


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors map to exit code 1."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fedarmor", description="Federated training with DP channels and adversarial adaptation.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one experiment")
    run.add_argument("--config", required=True, help="path to a JSON config")
    run.add_argument("--seed", type=int, default=None, help="master seed override")
    run.add_argument("--out", default=None, help="output directory override")

    sweep = sub.add_parser("sweep", help="repeat a run along one axis")
    sweep.add_argument("--config", required=True, help="path to a JSON config")
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", required=True, help="comma-separated axis values")
    sweep.add_argument("--seed", type=int, default=None, help="master seed override")
    sweep.add_argument("--out", default=None, help="output directory override")
    return parser


def _csv_row(cfg: ExperimentConfig, report: MetricsReport) -> str:
    cells = (
        cfg.defense,
        repr(float(cfg.attack.epsilon)),
        repr(float(cfg.federation.adaptation_fraction)),
        "on" if cfg.privacy_enabled else "off",
        str(report.seed),
        repr(float(np.mean(report.clean_accuracy))),
        repr(float(report.asr_self)),
        repr(float(report.asr_avg)),
    )
    return ",".join(cells)


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _report_json(report: MetricsReport) -> dict:
    payload = asdict(report)
    payload["clean_accuracy"] = list(payload["clean_accuracy"])
    payload["transfer_matrix"] = [list(row) for row in payload["transfer_matrix"]]
    return payload


def cmd_run(cfg: ExperimentConfig) -> int:
    """Run one experiment and write report.json and report.csv."""
    report = run_experiment(cfg)
    os.makedirs(cfg.output, exist_ok=True)
    _write(os.path.join(cfg.output, "report.csv"), CSV_HEADER + "\n" + _csv_row(cfg, report) + "\n")
    _write(
        os.path.join(cfg.output, "report.json"),
        json.dumps(_report_json(report), indent=2, sort_keys=True) + "\n",
    )
    _write(os.path.join(cfg.output, "config.json"), cfg.to_json())
    print(f"run: defense={cfg.defense} seed={report.seed} asr_self={report.asr_self:.4f} asr_avg={report.asr_avg:.4f}")
    print(f"wrote {os.path.join(cfg.output, 'report.csv')}")
    return 0


def _axis_update(axis: str, value: str) -> dict:
    if axis == "epsilon":
        return {"attack.epsilon": _parse_number(axis, value)}
    if axis == "fraction":
        return {"federation.adaptation_fraction": _parse_number(axis, value)}
    if axis == "dp":
        flags = {"on": True, "off": False, "true": True, "false": False}
        if value.lower() not in flags:
            raise ConfigError(f"axis dp: expected on/off, got {value!r}")
        return {"privacy.enabled": flags[value.lower()]}
    if axis == "defense":
        if value not in DEFENSES:
            raise ConfigError(f"axis defense: expected one of {', '.join(DEFENSES)}, got {value!r}")
        return {"defense": value}
    raise ConfigError(f"unknown sweep axis {axis!r}")


def _parse_number(axis: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"axis {axis}: expected a number, got {value!r}") from None


def cmd_sweep(cfg: ExperimentConfig, axis: str, values: list[str]) -> int:
    """Run once per axis value with a shared seed; write combined files."""
    if not values:
        raise ConfigError("--values: expected at least one value")
    rows, reports = [], []
    for value in values:
        point = cfg.with_updates(**_axis_update(axis, value))
        report = run_experiment(point)
        rows.append(_csv_row(point, report))
        reports.append({"axis": axis, "value": value, "report": _report_json(report)})
        print(f"sweep {axis}={value}: asr_self={report.asr_self:.4f} asr_avg={report.asr_avg:.4f}")
    os.makedirs(cfg.output, exist_ok=True)
    _write(os.path.join(cfg.output, "sweep.csv"), "\n".join([CSV_HEADER, *rows]) + "\n")
    _write(
        os.path.join(cfg.output, "sweep.json"),
        json.dumps(reports, indent=2, sort_keys=True) + "\n",
    )
    print(f"wrote {os.path.join(cfg.output, 'sweep.csv')}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = parse_config(args.config, args.seed, args.out)
        if args.command == "run":
            return cmd_run(cfg)
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        return cmd_sweep(cfg, args.axis, values)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary: report and exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
