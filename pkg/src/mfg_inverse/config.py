"""INI-style run configuration with line-anchored validation errors.

Sections and keys (all optional; defaults in :class:`RunConfig`)::

    [grids]           points, horizon, steps
    [forward]         damping, picard_tol, max_iters, terminal_cost,
                      perturbation_bound, m0_shape, m0_amplitude
    [probes]          modes, c_values, refinements
    [linearize]       epsilons, c1, f1, f2
    [truth]           c1, F2, F3          (coefficient expressions)
    [reconstruction]  modes, taylor_order, probe_modes, scenario_modes,
                      bracket_low, bracket_high
    [noise]           level, seeds

Lists are comma separated.  Coefficient expressions follow
:func:`mfg_inverse.running_cost.parse_coefficient` (``0.3*mode1 + 0.1*mode3``).
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

__all__ = ["ConfigError", "RunConfig", "load_config", "config_hash"]


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path or '<config>'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class RunConfig:
    # grids
    points: int = 65
    horizon: float = 0.25
    steps: int = 100
    # forward
    damping: float = 0.5
    picard_tol: float = 1e-14
    max_iters: int = 500
    terminal_cost: float = 0.0
    perturbation_bound: float = 0.05
    m0_shape: str = "mode1 + 0.5*mode3"
    m0_amplitude: float = 0.05
    # probes
    probe_modes: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)
    probe_c_values: tuple[float, ...] = (0.5, 1.0, 2.0, 5.0)
    refinements: tuple[int, ...] = (65, 129, 257)
    # linearize
    epsilons: tuple[float, ...] = (1e-2, 5e-3, 2.5e-3)
    linearize_c1: float = 2.0
    linearize_f1: str = "mode1"
    linearize_f2: str = "mode2"
    # truth
    truth_c1: float = 2.0
    truth_F2: str = "0.3*mode1 + 0.1*mode3"
    truth_F3: str = "0.2*mode2"
    # reconstruction
    recon_modes: int = 8
    taylor_order: int = 3
    recon_probe_modes: tuple[int, ...] = (1, 2)
    scenario_modes: tuple[int, ...] = (1, 2)
    bracket_low: float = 1e-3
    bracket_high: float = 50.0
    # noise
    noise_level: float = 1e-4
    noise_seeds: int = 10
    seed: int = 0
    source: str = field(default="", compare=False)

    def provenance(self) -> dict[str, str]:
        return {
            "config_hash": config_hash(self),
            "grid": f"N={self.points} T={self.horizon} M={self.steps}",
            "picard_tol": f"{self.picard_tol:g}",
            "epsilons": ",".join(f"{e:g}" for e in self.epsilons),
        }


# (section, key) -> (field name, parser)
_SCHEMA = {
    ("grids", "points"): ("points", int),
    ("grids", "horizon"): ("horizon", float),
    ("grids", "steps"): ("steps", int),
    ("forward", "damping"): ("damping", float),
    ("forward", "picard_tol"): ("picard_tol", float),
    ("forward", "max_iters"): ("max_iters", int),
    ("forward", "terminal_cost"): ("terminal_cost", float),
    ("forward", "perturbation_bound"): ("perturbation_bound", float),
    ("forward", "m0_shape"): ("m0_shape", str),
    ("forward", "m0_amplitude"): ("m0_amplitude", float),
    ("probes", "modes"): ("probe_modes", _ints),
    ("probes", "c_values"): ("probe_c_values", _floats),
    ("probes", "refinements"): ("refinements", _ints),
    ("linearize", "epsilons"): ("epsilons", _floats),
    ("linearize", "c1"): ("linearize_c1", float),
    ("linearize", "f1"): ("linearize_f1", str),
    ("linearize", "f2"): ("linearize_f2", str),
    ("truth", "c1"): ("truth_c1", float),
    ("truth", "f2"): ("truth_F2", str),
    ("truth", "f3"): ("truth_F3", str),
    ("reconstruction", "modes"): ("recon_modes", int),
    ("reconstruction", "taylor_order"): ("taylor_order", int),
    ("reconstruction", "probe_modes"): ("recon_probe_modes", _ints),
    ("reconstruction", "scenario_modes"): ("scenario_modes", _ints),
    ("reconstruction", "bracket_low"): ("bracket_low", float),
    ("reconstruction", "bracket_high"): ("bracket_high", float),
    ("noise", "level"): ("noise_level", float),
    ("noise", "seeds"): ("noise_seeds", int),
}


def _line_index(text: str) -> dict[tuple[str, str], int]:
    out: dict[tuple[str, str], int] = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            out[(section, "")] = n
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = n
    return out


def _validate(cfg: RunConfig) -> list[tuple[str, str, str]]:
    """Semantic checks; returns (section, key, message) triples."""
    errs = []
    if cfg.points < 5 or cfg.points % 2 == 0:
        errs.append(("grids", "points", "points must be odd and at least 5"))
    if cfg.horizon <= 0:
        errs.append(("grids", "horizon", "horizon must be positive"))
    if cfg.steps < 2:
        errs.append(("grids", "steps", "steps must be at least 2"))
    if not 0 < cfg.damping <= 1:
        errs.append(("forward", "damping", "damping must lie in (0, 1]"))
    if cfg.picard_tol <= 0:
        errs.append(("forward", "picard_tol", "picard_tol must be positive"))
    if cfg.max_iters < 1:
        errs.append(("forward", "max_iters", "max_iters must be >= 1"))
    if not cfg.epsilons or any(e <= 0 for e in cfg.epsilons):
        errs.append(("linearize", "epsilons", "epsilons must be positive"))
    elif list(cfg.epsilons) != sorted(cfg.epsilons, reverse=True):
        errs.append(("linearize", "epsilons", "epsilons must be decreasing"))
    limit = (cfg.points - 1) // 2
    if any(i < 1 or i > limit for i in cfg.probe_modes):
        errs.append(("probes", "modes", f"probe modes must lie in 1..{limit}"))
    if any(c <= 0 for c in cfg.probe_c_values):
        errs.append(("probes", "c_values", "probe c values must be positive"))
    if any(n < 5 or n % 2 == 0 for n in cfg.refinements):
        errs.append(("probes", "refinements", "refinement grids must be odd and >= 5"))
    if cfg.recon_modes < 0 or cfg.recon_modes + 1 > cfg.points:
        errs.append(("reconstruction", "modes", "modes must fit in the grid"))
    if cfg.taylor_order < 1:
        errs.append(("reconstruction", "taylor_order", "taylor_order must be >= 1"))
    if not 0 < cfg.bracket_low < cfg.bracket_high:
        errs.append(("reconstruction", "bracket_low", "need 0 < bracket_low < bracket_high"))
    if not 0 <= cfg.m0_amplitude <= cfg.perturbation_bound:
        errs.append(("forward", "m0_amplitude", "m0_amplitude must lie in [0, perturbation_bound]"))
    if cfg.noise_level < 0:
        errs.append(("noise", "level", "noise level must be non-negative"))
    if cfg.noise_seeds < 1:
        errs.append(("noise", "seeds", "need at least one seed"))
    return errs


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Read ``path`` (or defaults), apply keyword overrides, validate.

    Raises :class:`ConfigError` carrying the offending line number.
    """
    text = ""
    values: dict = {}
    where = str(path) if path is not None else None
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", path=where) from exc
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text, source=where or "<config>")
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            if line is None and getattr(exc, "errors", None):
                line = exc.errors[0][0]
            raise ConfigError(str(exc).splitlines()[0], line, where) from exc
        lines = _line_index(text)
        for section in parser.sections():
            sec = section.lower()
            for key, raw in parser.items(section):
                entry = _SCHEMA.get((sec, key.lower()))
                line = lines.get((sec, key.lower()))
                if entry is None:
                    raise ConfigError(f"unknown key [{section}] {key}", line, where)
                name, parse = entry
                try:
                    values[name] = parse(raw.strip())
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}", line, where) from exc
    else:
        lines = {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    bad = set(values) - known
    if bad:
        raise ConfigError(f"unknown settings {sorted(bad)}")
    cfg = replace(RunConfig(), **values, source=text)
    errs = _validate(cfg)
    if errs:
        sec, key, msg = errs[0]
        raise ConfigError(f"[{sec}] {key}: {msg}", lines.get((sec, key)), where)
    return cfg


def config_hash(cfg: RunConfig) -> str:
    payload = {k: v for k, v in asdict(cfg).items() if k != "source"}
    return hashlib.sha256(repr(sorted(payload.items())).encode()).hexdigest()[:16]
