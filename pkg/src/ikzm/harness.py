"""Sweep orchestration, record persistence and cross-backend validation.

Layout of an output directory::

    records/<key>.json    one simulation, keyed by a hash of its config snapshot
    timing/<key>.json     wall-clock duration (kept apart so records are reproducible)
    steps/<key>.csv       per-step TEBD diagnostics (mps backend only)
    curve_<backend>.csv   final densities, one row per successful record
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fermion, mps
from .config import RunConfig
from .model import ChainSpec, QuenchProtocol, field_at
from .scaling import SweepCurve

RECORD_SCHEMA = 1
CURVE_COLUMNS = ("tau_Q", "d_final", "backend", "L", "q", "alpha_q", "J0", "chi", "dt", "trunc_err", "purity_drift")
MAX_FAILURE_FRACTION = 0.2


class SimulationError(RuntimeError):
    """A sweep or validation could not produce usable results."""


def snapshot_key(snapshot: dict) -> str:
    blob = json.dumps(snapshot, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


@dataclass
class QuenchRecord:
    snapshot: dict
    status: str
    times: np.ndarray
    kink_density: np.ndarray
    diagnostics: dict
    error: str | None = None
    wall_clock: float | None = None
    steps: list = field(default_factory=list, repr=False)

    @property
    def key(self) -> str:
        return snapshot_key(self.snapshot)

    @property
    def tau_Q(self) -> float:
        return self.snapshot["tau_Q"]

    @property
    def backend(self) -> str:
        return self.snapshot["backend"]

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def d_final(self) -> float | None:
        return float(self.kink_density[-1]) if self.ok else None

    def spec(self) -> ChainSpec:
        s = self.snapshot
        return ChainSpec(s["L"], s["q"], s["alpha_q"], s["J0"])

    def protocol(self) -> QuenchProtocol:
        return QuenchProtocol(self.snapshot["tau_Q"], self.snapshot["dt"])

    def validate(self):
        """Re-check the record against its own snapshot."""
        self.spec()
        self.protocol()
        if self.backend not in ("fermion", "mps"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if not self.ok:
            return
        if len(self.times) != len(self.kink_density) or len(self.times) == 0:
            raise ValueError("time series is empty or ragged")
        if abs(self.times[-1] - self.tau_Q) > 1e-9 * max(1.0, self.tau_Q):
            raise ValueError("time series does not end at t = tau_Q")
        needed = ("purity_drift",) if self.backend == "fermion" else ("trunc_error", "max_bond_dim")
        missing = [k for k in needed if k not in self.diagnostics]
        if missing:
            raise ValueError(f"diagnostics missing {missing}")

    def to_dict(self) -> dict:
        return {
            "schema": RECORD_SCHEMA,
            "key": self.key,
            "snapshot": self.snapshot,
            "status": self.status,
            "error": self.error,
            "times": [float(t) for t in self.times],
            "kink_density": [float(d) for d in self.kink_density],
            "d_final": self.d_final,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuenchRecord":
        if data.get("schema") != RECORD_SCHEMA:
            raise ValueError(f"unsupported record schema {data.get('schema')!r}")
        rec = cls(
            snapshot=data["snapshot"],
            status=data["status"],
            times=np.asarray(data["times"], dtype=float),
            kink_density=np.asarray(data["kink_density"], dtype=float),
            diagnostics=data["diagnostics"],
            error=data.get("error"),
        )
        if rec.ok and data.get("d_final") != rec.d_final:
            raise ValueError("d_final disagrees with the last time-series entry")
        return rec


# --------------------------------------------------------------------------- single runs


def _run_fermion(snap: dict):
    spec = ChainSpec(snap["L"], snap["q"], snap["alpha_q"], snap["J0"])
    prot = QuenchProtocol(snap["tau_Q"], snap["dt"])
    traj = fermion.run_quench(spec, prot, prot.sample_times(snap["samples"]))
    return traj.times, traj.kink_density, {"purity_drift": float(traj.purity_drift)}, []


def _run_mps(snap: dict):
    spec = ChainSpec(snap["L"], snap["q"], snap["alpha_q"], snap["J0"])
    prot = QuenchProtocol(snap["tau_Q"], snap["dt"])
    h0 = float(field_at(prot.t_start, prot, spec))
    gs = mps.dmrg_ground_state(spec, h0, chi_max=snap["dmrg_chi"], seed=snap["seed"])
    res = mps.tebd_evolve(gs.state, spec, prot, chi_max=snap["chi"], sample_times=prot.sample_times(snap["samples"]), trunc_budget=snap["trunc_budget"])
    diag = {
        "trunc_error": float(res.trunc_error[-1]),
        "max_bond_dim": int(res.max_bond_dim.max()),
        "trunc_error_series": [float(e) for e in res.trunc_error],
        "bond_dim_series": [int(c) for c in res.max_bond_dim],
        "dmrg_energy": float(gs.energy),
    }
    return res.times, res.kink_density, diag, res.diagnostics


def simulate(snapshot: dict) -> QuenchRecord:
    """Run one grid point. Failures come back as records with status "failed"."""
    start = time.perf_counter()
    runner = _run_fermion if snapshot["backend"] == "fermion" else _run_mps
    try:
        times, dens, diag, steps = runner(snapshot)
        rec = QuenchRecord(snapshot, "ok", np.asarray(times), np.asarray(dens), diag, steps=steps)
    except mps.TruncationBudgetExceeded as exc:
        rec = QuenchRecord(snapshot, "failed", exc.partial.times, exc.partial.kink_density, {"t_reached": exc.t, "trunc_error": exc.trunc_error}, error=str(exc))
    except (fermion.PurityDriftError, mps.DmrgNotConverged, np.linalg.LinAlgError, ValueError) as exc:
        rec = QuenchRecord(snapshot, "failed", np.array([]), np.array([]), {}, error=f"{type(exc).__name__}: {exc}")
    rec.wall_clock = time.perf_counter() - start
    return rec


# --------------------------------------------------------------------------- persistence


class RecordStore:
    """Files under one output directory. Only the orchestrating process writes."""

    def __init__(self, root):
        self.root = Path(root)

    def _path(self, sub: str, key: str, ext: str = "json") -> Path:
        return self.root / sub / f"{key}.{ext}"

    def has(self, snapshot: dict) -> bool:
        return self._path("records", snapshot_key(snapshot)).exists()

    def load(self, snapshot: dict) -> QuenchRecord:
        return self.load_key(snapshot_key(snapshot))

    def load_key(self, key: str) -> QuenchRecord:
        rec = QuenchRecord.from_dict(json.loads(self._path("records", key).read_text()))
        if rec.key != key:
            raise ValueError(f"record {key} does not match its snapshot hash")
        tpath = self._path("timing", key)
        if tpath.exists():
            rec.wall_clock = json.loads(tpath.read_text())["wall_clock"]
        return rec

    def all_records(self) -> list[QuenchRecord]:
        d = self.root / "records"
        if not d.is_dir():
            return []
        recs = [self.load_key(p.stem) for p in sorted(d.glob("*.json"))]
        return sorted(recs, key=lambda r: (r.backend, r.tau_Q, r.key))

    def save(self, rec: QuenchRecord):
        key = rec.key
        for sub in ("records", "timing"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        _atomic_write(self._path("records", key), json.dumps(rec.to_dict(), indent=1, sort_keys=True) + "\n")
        _atomic_write(self._path("timing", key), json.dumps({"wall_clock": rec.wall_clock}) + "\n")
        if rec.steps:
            (self.root / "steps").mkdir(parents=True, exist_ok=True)
            lines = ["# schema=1", "t,step_trunc_error,bond_dims"]
            lines += [f"{t!r},{e!r},{';'.join(map(str, dims))}" for t, dims, e in rec.steps]
            _atomic_write(self._path("steps", key, "csv"), "\n".join(lines) + "\n")


def _atomic_write(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


# --------------------------------------------------------------------------- curves


def _cell(v) -> str:
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def curve_csv(records) -> str:
    """SweepCurve CSV for successful records, sorted by tau_Q."""
    lines = ["# schema=1", ",".join(CURVE_COLUMNS)]
    for r in sorted((r for r in records if r.ok), key=lambda r: r.tau_Q):
        s, dg = r.snapshot, r.diagnostics
        row = [
            float(r.tau_Q),
            r.d_final,
            s["backend"],
            s["L"],
            float(s["q"]),
            float(s["alpha_q"]),
            float(s["J0"]),
            s.get("chi"),
            float(s["dt"]),
            dg.get("trunc_error"),
            dg.get("purity_drift"),
        ]
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def read_curve_csv(path) -> list[SweepCurve]:
    """Parse a curve file; rows are grouped by (backend, L, q, alpha_q, J0)."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "# schema=1":
        raise ValueError(f"{path}: missing '# schema=1' header")
    if len(text) < 2 or tuple(c.strip() for c in text[1].split(",")) != CURVE_COLUMNS:
        raise ValueError(f"{path}: unexpected columns")
    groups: dict = {}
    for line in text[2:]:
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(CURVE_COLUMNS):
            raise ValueError(f"{path}: malformed row {line!r}")
        row = dict(zip(CURVE_COLUMNS, cells))
        gkey = (row["backend"], int(row["L"]), float(row["q"]), float(row["alpha_q"]), float(row["J0"]))
        groups.setdefault(gkey, []).append((float(row["tau_Q"]), float(row["d_final"])))
    curves = []
    for (backend, L, q, alpha, J0), pts in sorted(groups.items()):
        pts.sort()
        meta = {"backend": backend, "L": L, "q": q, "alpha_q": alpha, "J0": J0}
        curves.append(SweepCurve(np.array([p[0] for p in pts]), np.array([p[1] for p in pts]), meta))
    return curves


def curve_from_records(records, backend: str | None = None) -> SweepCurve:
    recs = sorted((r for r in records if r.ok and (backend is None or r.backend == backend)), key=lambda r: r.tau_Q)
    if not recs:
        raise SimulationError("no successful records to build a curve from")
    s = recs[0].snapshot
    meta = {"backend": s["backend"], "L": s["L"], "q": s["q"], "alpha_q": s["alpha_q"], "J0": s["J0"]}
    return SweepCurve(np.array([r.tau_Q for r in recs]), np.array([r.d_final for r in recs]), meta)


# --------------------------------------------------------------------------- sweeps


@dataclass
class SweepResult:
    records: list
    curves: dict
    failures: list


def _backends(config: RunConfig) -> list[str]:
    return ["fermion", "mps"] if config.backend == "both" else [config.backend]


def run_sweep(config: RunConfig, backend: str | None = None) -> SweepResult:
    """Run (or resume) every grid point and write the curve file(s).

    Existing records with a matching snapshot hash are reused. Output files do
    not depend on the worker count: every write happens here, in the calling
    process, and curves are sorted by tau_Q.
    """
    cfg = config if backend is None else config.replace(backend=backend)
    store = RecordStore(cfg.out_dir)
    snaps = [cfg.snapshot(tau, b) for b in _backends(cfg) for tau in cfg.tau_grid]
    done = {}
    pending = []
    for s in snaps:
        if store.has(s):
            done[snapshot_key(s)] = store.load(s)
        else:
            pending.append(s)

    if cfg.workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(simulate, s) for s in pending]
            for fut in as_completed(futures):
                rec = fut.result()
                store.save(rec)
                done[rec.key] = rec
    else:
        for s in pending:
            rec = simulate(s)
            store.save(rec)
            done[rec.key] = rec

    records = sorted(done.values(), key=lambda r: (r.backend, r.tau_Q))
    failures = [r for r in records if not r.ok]
    for r in failures:
        warnings.warn(f"{r.backend} tau_Q={r.tau_Q:g} failed: {r.error}", RuntimeWarning, stacklevel=2)

    curves = {}
    for b in _backends(cfg):
        recs = [r for r in records if r.backend == b]
        bad = sum(not r.ok for r in recs)
        if bad > MAX_FAILURE_FRACTION * len(recs):
            raise SimulationError(f"{bad}/{len(recs)} {b} grid points failed")
        path = Path(cfg.out_dir) / f"curve_{b}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, curve_csv(recs))
        curves[b] = curve_from_records(recs)
    return SweepResult(records, curves, failures)


# --------------------------------------------------------------------------- cross-validation


@dataclass(frozen=True)
class ValidationRow:
    tau_Q: float
    max_abs: float
    mean_abs: float
    flagged: bool


@dataclass(frozen=True)
class ValidationReport:
    rows: tuple
    tolerance: float

    @property
    def flagged(self) -> bool:
        return any(r.flagged for r in self.rows)

    @property
    def max_abs(self) -> float:
        return max(r.max_abs for r in self.rows)

    def to_csv(self) -> str:
        lines = ["# schema=1", "tau_Q,max_abs,mean_abs,flagged"]
        lines += [f"{r.tau_Q!r},{r.max_abs!r},{r.mean_abs!r},{int(r.flagged)}" for r in self.rows]
        return "\n".join(lines) + "\n"


def cross_validate(config: RunConfig) -> ValidationReport:
    """Run both backends on the same grid and compare kink-density trajectories."""
    if config.L > 32:
        warnings.warn(f"cross-validation at L={config.L} may be slow for the mps backend", RuntimeWarning, stacklevel=2)
    cfg = config.replace(backend="both")
    store = RecordStore(cfg.out_dir)
    run_sweep(cfg)
    rows = []
    for tau in cfg.tau_grid:
        ferm = store.load(cfg.snapshot(tau, "fermion"))
        mp = store.load(cfg.snapshot(tau, "mps"))
        for r in (ferm, mp):
            if not r.ok:
                raise SimulationError(f"{r.backend} run at tau_Q={tau:g} failed: {r.error}")
        if not np.allclose(ferm.times, mp.times, rtol=0, atol=1e-12):
            raise SimulationError("backends sampled different time grids")
        diff = np.abs(ferm.kink_density - mp.kink_density)
        rows.append(ValidationRow(float(tau), float(diff.max()), float(diff.mean()), bool(diff.max() > cfg.tolerance)))
    report = ValidationReport(tuple(rows), cfg.tolerance)
    _atomic_write(Path(cfg.out_dir) / "validation.csv", report.to_csv())
    return report
