"""Command line batch runner: ``mfg-inverse <command> [options]``.

Every command writes ``report.csv`` (``#`` provenance header, then a
deterministic body) and ``summary.txt`` into ``--out``.  Exit status is 0
when every asserted tolerance holds, 1 on a numerical failure and 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .experiments import EXPERIMENTS, Outcome

__all__ = ["main", "write_report", "COMMANDS"]

logger = logging.getLogger("mfg_inverse")

# command -> experiments it runs
COMMANDS: dict[str, tuple[str, ...]] = {
    "forward": ("forward",),
    "probe-check": ("probe-check",),
    "linearize-check": ("linearize-check",),
    "identity-check": ("identity-check",),
    "reconstruct": ("reconstruct",),
    "all": ("probe-algebra", "probe-check", "stationary", "forward", "linearize-check",
            "identity-check", "reconstruct", "noise"),
}

# numbering and time budgets (seconds) of the acceptance criteria
CRITERIA = {
    "probe-algebra": (1, 1.0),
    "probe-check": (2, 10.0),
    "stationary": (3, 5.0),
    "forward": (4, 30.0),
    "linearize-check": (5, 120.0),
    "identity-check": (6, 30.0),
    "reconstruct": (7, 300.0),
    "noise": (8, 300.0),
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.15e}"
    return str(v)


def write_report(path: Path, rows: list[dict], provenance: dict[str, str]) -> None:
    columns: list[str] = []
    for row in rows:
        columns += [k for k in row if k not in columns]
    buf = io.StringIO()
    for key in sorted(provenance):
        buf.write(f"# {key}: {provenance[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in columns])
    path.write_text(buf.getvalue())


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfg-inverse", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="INI configuration file")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--modes", type=int, help="modal truncation K")
    p.add_argument("--grid", type=int, help="grid points N")
    p.add_argument("--tsteps", type=int, help="time steps M")
    p.add_argument("--seed", type=int, help="first noise seed")
    p.add_argument("--quiet", action="store_true")
    return p


def _overrides(args) -> dict:
    out = {"points": args.grid, "steps": args.tsteps, "seed": args.seed}
    if args.modes is not None:
        out["recon_modes"] = args.modes
        out["probe_modes"] = tuple(range(1, args.modes + 1))
    return out


def _run_one(name: str, cfg: RunConfig, out: Path, command: str) -> tuple[Outcome, float]:
    start = time.perf_counter()
    outcome = EXPERIMENTS[name](cfg)
    elapsed = time.perf_counter() - start
    out.mkdir(parents=True, exist_ok=True)
    prov = dict(cfg.provenance(), command=command, experiment=name)
    write_report(out / "report.csv", outcome.rows, prov)
    lines = [f"{name}: {'PASS' if outcome.passed else 'FAIL'}", *outcome.summary,
             f"runtime {elapsed:.2f} s"]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return outcome, elapsed


def run(command: str, cfg: RunConfig, out: Path, quiet: bool = False) -> int:
    names = COMMANDS[command]
    failures: list[str] = []
    crit_rows, summary = [], []
    for name in names:
        target = out / name if command == "all" else out
        try:
            outcome, elapsed = _run_one(name, cfg, target, command)
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            failures.append(name)
            msg = f"{name}: numerical failure: {exc}"
            target.mkdir(parents=True, exist_ok=True)
            (target / "summary.txt").write_text(f"{name}: FAIL\n{msg}\n")
            summary.append(msg)
            crit_rows.append({"criterion": CRITERIA[name][0], "name": name, "passed": False})
            if not quiet:
                print(msg, file=sys.stderr)
            continue
        number, budget = CRITERIA[name]
        within = elapsed <= budget
        passed = outcome.passed
        if not passed:
            failures.append(name)
        crit_rows.append({"criterion": number, "name": name, "passed": passed})
        line = (f"[{'PASS' if passed else 'FAIL'}] criterion {number} {name}"
                f" ({elapsed:.2f} s, budget {budget:g} s{'' if within else ', OVER BUDGET'})")
        summary.append(line)
        if not quiet:
            print(line)
            for s in outcome.summary:
                if s:
                    print("    " + s)
    if command == "all":
        write_report(out / "report.csv", crit_rows, dict(cfg.provenance(), command=command))
        (out / "summary.txt").write_text("\n".join(summary) + "\n")
    if failures:
        print("failed: " + ", ".join(failures), file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, **_overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(args.command, cfg, args.out, args.quiet)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
