"""Run configuration: an INI document with [chain], [quench], [backend], [output] and [fit].

Unknown sections or keys raise ``ConfigError``; a typo in a physics parameter
should stop the run, not be silently ignored.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ChainSpec, QuenchProtocol, alpha_for_end_ratio, default_dt

BACKENDS = ("fermion", "mps", "both")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


_KEYS = {
    "chain": {"L", "q", "alpha_q", "end_ratio", "J0"},
    "quench": {"tau_min", "tau_max", "tau_count", "tau_values", "dt", "samples"},
    "backend": {"name", "chi", "dmrg_chi", "trunc_budget", "tolerance", "seed"},
    "output": {"dir", "workers"},
    "fit": {"plateau_tol", "adiabatic_factor", "grid_per_decade", "min_gain"},
}


@dataclass(frozen=True)
class RunConfig:
    L: int
    q: float = 2.0
    alpha_q: float = 0.0
    J0: float = 1.0
    tau_grid: tuple = (1.0,)
    dt: float | None = None
    samples: int = 200
    backend: str = "fermion"
    chi: int = 256
    dmrg_chi: int = 500
    trunc_budget: float = 1e-4
    tolerance: float = 1e-3
    seed: int = 0
    out_dir: str = "runs"
    workers: int = 1
    plateau_tol: float = 0.02
    adiabatic_factor: float = 1.5
    grid_per_decade: int = 40
    min_gain: float = 0.05

    def __post_init__(self):
        grid = tuple(float(t) for t in self.tau_grid)
        object.__setattr__(self, "tau_grid", grid)
        if not grid:
            raise ConfigError("tau_Q grid is empty")
        if any(not math.isfinite(t) or t <= 0 for t in grid):
            raise ConfigError("every tau_Q must be positive and finite")
        if len(set(grid)) != len(grid):
            raise ConfigError("tau_Q grid has repeated values")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.dt is not None and not (self.dt > 0):
            raise ConfigError("dt must be positive")
        if self.samples < 2:
            raise ConfigError("need at least 2 sample times")
        if self.chi < 1 or self.dmrg_chi < 1:
            raise ConfigError("bond dimensions must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not (self.trunc_budget > 0 and self.tolerance > 0):
            raise ConfigError("trunc_budget and tolerance must be positive")
        try:
            self.spec()
            for tau in grid:
                self.protocol(tau)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def spec(self) -> ChainSpec:
        return ChainSpec(self.L, self.q, self.alpha_q, self.J0)

    def dt_for(self, tau_Q: float) -> float:
        return default_dt(tau_Q) if self.dt is None else self.dt

    def protocol(self, tau_Q: float) -> QuenchProtocol:
        return QuenchProtocol(tau_Q, self.dt_for(tau_Q))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def snapshot(self, tau_Q: float, backend: str) -> dict:
        """Everything that determines one simulation, and nothing else."""
        snap = {
            "L": self.L,
            "q": self.q,
            "alpha_q": self.alpha_q,
            "J0": self.J0,
            "tau_Q": float(tau_Q),
            "dt": self.dt_for(tau_Q),
            "samples": self.samples,
            "backend": backend,
        }
        if backend == "mps":
            snap.update(chi=self.chi, dmrg_chi=self.dmrg_chi, trunc_budget=self.trunc_budget, seed=self.seed)
        return snap

    def fit_options(self) -> dict:
        return {
            "plateau_tol": self.plateau_tol,
            "adiabatic_factor": self.adiabatic_factor,
            "grid_per_decade": self.grid_per_decade,
            "min_gain": self.min_gain,
        }


def log_grid(tau_min: float, tau_max: float, count: int) -> tuple:
    if count < 2:
        raise ConfigError("a log-spaced grid needs tau_count >= 2; use tau_values for a single point")
    if not (0 < tau_min < tau_max):
        raise ConfigError("need 0 < tau_min < tau_max")
    return tuple(float(t) for t in np.geomspace(tau_min, tau_max, count))


def _num(section, key, conv, raw):
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def _int(raw):
    v = float(raw)
    if v != int(v):
        raise ValueError(raw)
    return int(v)


def parse_config(text: str, base_dir: str | Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for sec in cp.sections():
        if sec not in _KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        unknown = set(cp[sec]) - _KEYS[sec]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(unknown))}")
    if not cp.has_section("chain") or "L" not in cp["chain"]:
        raise ConfigError("[chain] L is required")
    if not cp.has_section("quench"):
        raise ConfigError("[quench] section is required")

    ch, qu = cp["chain"], cp["quench"]
    kw = {}
    kw["L"] = _num("chain", "L", _int, ch["L"])
    kw["q"] = _num("chain", "q", float, ch.get("q", "2"))
    kw["J0"] = _num("chain", "J0", float, ch.get("J0", "1"))
    if "alpha_q" in ch and "end_ratio" in ch:
        raise ConfigError("[chain] give alpha_q or end_ratio, not both")
    if "end_ratio" in ch:
        ratio = _num("chain", "end_ratio", float, ch["end_ratio"])
        try:
            kw["alpha_q"] = alpha_for_end_ratio(kw["L"], kw["q"], ratio)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        kw["alpha_q"] = _num("chain", "alpha_q", float, ch.get("alpha_q", "0"))

    if "tau_values" in qu:
        if any(k in qu for k in ("tau_min", "tau_max", "tau_count")):
            raise ConfigError("[quench] give tau_values or tau_min/tau_max/tau_count, not both")
        items = [s for s in qu["tau_values"].replace(",", " ").split() if s]
        kw["tau_grid"] = tuple(_num("quench", "tau_values", float, s) for s in items)
    else:
        missing = {"tau_min", "tau_max", "tau_count"} - set(qu)
        if missing:
            raise ConfigError(f"[quench] missing {', '.join(sorted(missing))}")
        kw["tau_grid"] = log_grid(
            _num("quench", "tau_min", float, qu["tau_min"]),
            _num("quench", "tau_max", float, qu["tau_max"]),
            _num("quench", "tau_count", _int, qu["tau_count"]),
        )
    dt = qu.get("dt", "auto").strip()
    kw["dt"] = None if dt.lower() == "auto" else _num("quench", "dt", float, dt)
    if "samples" in qu:
        kw["samples"] = _num("quench", "samples", _int, qu["samples"])

    if cp.has_section("backend"):
        be = cp["backend"]
        if "name" in be:
            kw["backend"] = be["name"].strip().lower()
        for key, conv in (("chi", _int), ("dmrg_chi", _int), ("seed", _int), ("trunc_budget", float), ("tolerance", float)):
            if key in be:
                kw[key] = _num("backend", key, conv, be[key])
    if cp.has_section("output"):
        out = cp["output"]
        if "dir" in out:
            d = Path(out["dir"].strip())
            if base_dir is not None and not d.is_absolute():
                d = Path(base_dir) / d
            kw["out_dir"] = str(d)
        if "workers" in out:
            kw["workers"] = _num("output", "workers", _int, out["workers"])
    if cp.has_section("fit"):
        fs = cp["fit"]
        for key, conv in (("plateau_tol", float), ("adiabatic_factor", float), ("grid_per_decade", _int), ("min_gain", float)):
            if key in fs:
                kw[key] = _num("fit", key, conv, fs[key])
    return RunConfig(**kw)


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, base_dir=p.parent)
