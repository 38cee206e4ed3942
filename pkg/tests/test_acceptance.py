"""End-to-end acceptance criteria at their stated tolerances and time budgets."""

import time
from pathlib import Path

import numpy as np
import pytest

from mfg_inverse.cli import main
from mfg_inverse.config import load_config
from mfg_inverse.experiments import EXPERIMENTS, initial_density
from mfg_inverse.spectral_domain import SpaceGrid

CFG = load_config()


def _run(name):
    start = time.perf_counter()
    outcome = EXPERIMENTS[name](CFG)
    return outcome, time.perf_counter() - start


def _report(log, number, title, checks, elapsed=None, budget=None):
    """Record one line per criterion, then assert every check."""
    timing_ok = budget is None or elapsed <= budget
    ok = all(v for _, v in checks) and timing_ok
    detail = ", ".join(name for name, v in checks if not v)
    timing = "" if budget is None else f" [{elapsed:.2f} s / {budget:g} s]"
    line = f"criterion {number} {title}: {'PASS' if ok else 'FAIL'}{timing}"
    if detail:
        line += f" (failed: {detail})"
    log.append(line)
    print(line)
    for name, v in checks:
        assert v, name
    assert timing_ok, f"runtime {elapsed:.2f} s exceeds {budget} s"


def test_criterion_1_probe_algebra(acceptance_log):
    out, dt = _run("probe-algebra")
    assert {r["i"] for r in out.rows} == set(range(1, 9))
    assert {r["c"] for r in out.rows} == {0.5, 1.0, 2.0, 5.0}
    _report(acceptance_log, 1, "probe algebra",
            [("identity residual <= 1e-12", out.metrics["max_residual"] <= 1e-12)], dt, 1.0)


def test_criterion_2_probe_certification(acceptance_log):
    out, dt = _run("probe-check")
    assert CFG.refinements == (65, 129, 257)
    _report(acceptance_log, 2, "probe certification", [
        ("modal residual <= 1e-10", out.metrics["max_modal"] <= 1e-10),
        ("grid slope 2.0 +- 0.2", abs(out.metrics["slope_min"] - 2) <= 0.2
         and abs(out.metrics["slope_max"] - 2) <= 0.2),
        ("all certificates", out.passed),
    ], dt, 10.0)


def test_criterion_3_stationary_state(acceptance_log):
    out, dt = _run("stationary")
    assert len(out.rows) >= 2
    _report(acceptance_log, 3, "stationary state",
            [("sup error <= 1e-10", out.metrics["max_error"] <= 1e-10)], dt, 5.0)


def test_criterion_4_mass_conservation(acceptance_log):
    out, dt = _run("forward")
    m0 = initial_density(CFG, SpaceGrid(CFG.points))
    assert np.abs(m0 - 1).max() == pytest.approx(0.05, rel=1e-12)
    _report(acceptance_log, 4, "mass conservation", [
        ("mass drift <= 1e-8", out.metrics["drift"] <= 1e-8),
        ("min m >= -1e-8", out.metrics["min_density"] >= -1e-8),
    ], dt, 30.0)


def test_criterion_5_linearization(acceptance_log):
    out, dt = _run("linearize-check")
    assert CFG.epsilons == (1e-2, 5e-3, 2.5e-3)
    _report(acceptance_log, 5, "linearization consistency", [
        ("first-order slope 2.0 +- 0.2", abs(out.metrics["slope1"] - 2.0) <= 0.2),
        ("second-order slope >= 1.8", out.metrics["slope2"] >= 1.8),
    ], dt, 120.0)


def test_criterion_6_identity_suite(acceptance_log):
    out, dt = _run("identity-check")
    assert sum(1 for r in out.rows if r["hypothesis_ok"]) == 3
    _report(acceptance_log, 6, "integral identity suite", [
        ("pairing <= 1e-6", out.metrics["max_pairing"] <= 1e-6),
        ("IBP residuals <= 1e-6", out.metrics["max_ibp"] <= 1e-6),
        ("mutation pairing >= 1e-3", out.metrics["mutation_pairing"] >= 1e-3),
    ], dt, 30.0)


def test_criterion_7_inverse_round_trip(acceptance_log):
    out, dt = _run("reconstruct")
    m = out.metrics
    _report(acceptance_log, 7, "inverse round trip", [
        ("c from mode 1 <= 1e-6", m["c from mode 1"] <= 1e-6),
        ("c from mode 2 <= 1e-6", m["c from mode 2"] <= 1e-6),
        ("F2 coefficients <= 1e-3", m["F2 (step II, true c)"] <= 1e-3),
        ("pipeline within stage tolerances", out.passed),
    ], dt, 300.0)


def test_criterion_8_noise(acceptance_log):
    out, dt = _run("noise")
    assert CFG.noise_level == 1e-4 and CFG.noise_seeds == 10
    _report(acceptance_log, 8, "noise robustness",
            [("median relative error <= 1e-3", out.metrics["median_rel_error"] <= 1e-3)],
            dt, 300.0)


def _bodies(root: Path) -> dict[str, str]:
    out = {}
    for path in sorted(root.rglob("*.csv")):
        lines = path.read_text().splitlines(keepends=True)
        out[str(path.relative_to(root))] = "".join(ln for ln in lines if not ln.startswith("#"))
    return out


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path, acceptance_log):
    codes = [main(["all", "--out", str(tmp_path / run), "--quiet"]) for run in ("a", "b")]
    a, b = _bodies(tmp_path / "a"), _bodies(tmp_path / "b")
    _report(acceptance_log, 9, "determinism", [
        ("both runs exit 0", codes == [0, 0]),
        ("nine report files", len(a) == 9),
        ("byte-identical CSV bodies", a == b),
    ])
