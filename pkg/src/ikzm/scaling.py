"""Power-law fits, two-regime segmentation and theory-vs-numerics tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .model import ChainSpec, Prediction, ikzm_exponent, predict_crossover


class FitError(ValueError):
    """A fit was requested on data that cannot support it."""


@dataclass(frozen=True)
class SweepCurve:
    """Final kink density as a function of the quench time."""

    tau_Q: np.ndarray
    density: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        tau = np.asarray(self.tau_Q, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if tau.shape != d.shape or tau.ndim != 1:
            raise ValueError("tau_Q and density must be 1-d arrays of equal length")
        if np.any(np.diff(tau) <= 0):
            raise ValueError("tau_Q must be strictly increasing")
        if np.any(d < 0):
            raise ValueError("densities must be non-negative")
        object.__setattr__(self, "tau_Q", tau)
        object.__setattr__(self, "density", d)

    def __len__(self):
        return self.tau_Q.size

    def select(self, window) -> "SweepCurve":
        lo, hi = window
        m = (self.tau_Q >= lo * (1 - 1e-12)) & (self.tau_Q <= hi * (1 + 1e-12))
        return SweepCurve(self.tau_Q[m], self.density[m], self.metadata)


@dataclass(frozen=True)
class ScalingFit:
    """OLS fit of ln d = c - beta ln tau_Q."""

    beta: float
    delta_beta: float
    r2: float
    window: tuple
    n_points: int
    intercept: float

    def __call__(self, tau):
        return np.exp(self.intercept) * np.asarray(tau, dtype=float) ** (-self.beta)


@dataclass(frozen=True)
class RegimeReport:
    """Segmentation of a sweep into plateau, KZM, IKZM and adiabatic parts.

    For single-regime curves ``ikzm_fit`` and ``tau_star_fit`` are ``None`` and
    ``kzm_fit`` holds the one fit.
    """

    single_regime: bool
    kzm_fit: ScalingFit
    ikzm_fit: ScalingFit | None
    tau_star_fit: float | None
    tau_sat: float | None
    tau_adiabatic: float | None
    residual_gain: float
    theory: dict


def fit_power_law(curve: SweepCurve, window=None) -> ScalingFit:
    """Least squares of ln d against ln tau_Q; beta is minus the slope."""
    sub = curve if window is None else curve.select(window)
    if len(sub) < 3:
        raise FitError(f"need at least 3 points in the fit window, got {len(sub)}")
    if np.any(sub.density <= 0):
        raise FitError("zero density inside the fit window")
    x, y = np.log(sub.tau_Q), np.log(sub.density)
    res = stats.linregress(x, y)
    r2 = min(max(res.rvalue**2, 0.0), 1.0)
    return ScalingFit(
        beta=float(-res.slope),
        delta_beta=float(res.stderr),
        r2=float(r2),
        window=(float(sub.tau_Q[0]), float(sub.tau_Q[-1])),
        n_points=len(sub),
        intercept=float(res.intercept),
    )


def local_slopes(curve: SweepCurve) -> np.ndarray:
    """d ln d / d ln tau_Q between consecutive points."""
    return np.diff(np.log(curve.density)) / np.diff(np.log(curve.tau_Q))


def _hinge_ssr(x, y, xb):
    A = np.column_stack([np.ones_like(x), np.minimum(x - xb, 0.0), np.maximum(x - xb, 0.0)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    return float(r @ r), coef


def _line_ssr(x, y):
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    return float(r @ r)


def _theory_dict(theory) -> dict:
    if theory is None:
        return {"beta_kzm": 0.5, "beta_ikzm": None, "tau_Q_star": None}
    if isinstance(theory, Prediction):
        return {"beta_kzm": theory.beta_kzm, "beta_ikzm": theory.beta_ikzm, "tau_Q_star": theory.tau_Q_star}
    return dict(theory)


def segment_regimes(
    curve: SweepCurve,
    theory=None,
    plateau_tol: float = 0.02,
    adiabatic_factor: float = 1.5,
    grid_per_decade: int = 40,
    min_gain: float = 0.05,
) -> RegimeReport:
    """Split a sweep into a fast-quench plateau, one or two power laws and an adiabatic tail.

    1. Plateau: leading points whose successive densities differ by < ``plateau_tol``.
    2. Adiabatic onset: first point after which the local log-log slope exceeds
       ``adiabatic_factor`` times the IKZM exponent (KZM exponent when there is none).
    3. On the remaining points a continuous two-segment (hinge) fit in log-log space
       is scanned over breakpoints on a log grid of ``grid_per_decade`` per decade
       anchored at the theoretical crossover. If it lowers the residual by less than
       ``min_gain`` relative to a single line, the curve is reported single-regime.
    """
    th = _theory_dict(theory)
    decades = math.log10(curve.tau_Q[-1] / curve.tau_Q[0]) if len(curve) > 1 else 0.0
    if decades < 1.5 - 1e-9:
        raise FitError(f"curve spans {decades:.2f} decades; segmentation needs at least 1.5")
    if np.any(curve.density <= 0):
        raise FitError("zero density in the curve")
    d = curve.density
    n = len(curve)

    lo = 0
    while lo + 1 < n and abs(d[lo + 1] - d[lo]) / d[lo] < plateau_tol:
        lo += 1
    tau_sat = float(curve.tau_Q[lo]) if lo > 0 else None

    ref_beta = th.get("beta_ikzm") or th.get("beta_kzm") or 0.5
    slopes = -local_slopes(curve)
    hi = n - 1
    tau_ad = None
    for i in range(lo, n - 1):
        if slopes[i] > adiabatic_factor * ref_beta:
            hi = i
            tau_ad = float(curve.tau_Q[i])
            break
    core = SweepCurve(curve.tau_Q[lo : hi + 1], d[lo : hi + 1], curve.metadata)
    if len(core) < 3:
        raise FitError("fewer than 3 points between plateau and adiabatic onset")

    x, y = np.log(core.tau_Q), np.log(core.density)
    ssr1 = _line_ssr(x, y)
    single = fit_power_law(core)

    seed = th.get("tau_Q_star") or math.sqrt(core.tau_Q[0] * core.tau_Q[-1])
    k_lo = math.floor(grid_per_decade * math.log10(core.tau_Q[0] / seed))
    k_hi = math.ceil(grid_per_decade * math.log10(core.tau_Q[-1] / seed))
    best = None
    for k in range(k_lo, k_hi + 1):
        b = seed * 10.0 ** (k / grid_per_decade)
        # at least three points on each side (a point at the break counts for both)
        if np.sum(core.tau_Q <= b * (1 + 1e-12)) < 3 or np.sum(core.tau_Q >= b * (1 - 1e-12)) < 3:
            continue
        ssr, _ = _hinge_ssr(x, y, math.log(b))
        if best is None or ssr < best[0] - 1e-15 * max(ssr1, 1e-300):
            best = (ssr, b)

    # a line that already fits to round-off cannot be improved on
    sst = float(np.sum((y - y.mean()) ** 2))
    gain = 0.0 if best is None or ssr1 <= 1e-20 * max(sst, 1e-300) else (ssr1 - best[0]) / ssr1
    if best is None or gain < min_gain:
        return RegimeReport(True, single, None, None, tau_sat, tau_ad, gain, th)

    b = best[1]
    fast = fit_power_law(core, (core.tau_Q[0], b))
    slow = fit_power_law(core, (b, core.tau_Q[-1]))
    return RegimeReport(False, fast, slow, float(b), tau_sat, tau_ad, gain, th)


# --------------------------------------------------------------------------- tables


def ikzm_theory_exponent(q) -> Fraction | None:
    """(q + 1) / (2q - 2) as an exact rational for integer q; None for the homogeneous row."""
    if q is None or (isinstance(q, float) and math.isinf(q)):
        return None
    fq = Fraction(q).limit_denominator(10**6)
    return (fq + 1) / (2 * fq - 2)


@dataclass(frozen=True)
class TableRow:
    q: float | None
    beta_kzm: float
    delta_beta_kzm: float
    r2_kzm: float
    beta_ikzm: float | None
    delta_beta_ikzm: float | None
    r2_ikzm: float | None
    beta_theory: float


def theory_table(q_list, reports) -> list[TableRow]:
    """One row per q comparing fitted exponents with (q+1)/(2q-2).

    A ``q`` of ``None`` (or infinity) marks the homogeneous reference row whose
    theory value is the KZM exponent 1/2.
    """
    q_list = list(q_list)
    reports = list(reports)
    if len(q_list) != len(reports):
        raise ValueError("one report per q is required")
    rows = []
    for q, rep in zip(q_list, reports):
        exact = ikzm_theory_exponent(q)
        theory = 0.5 if exact is None else float(exact)
        ik = rep.ikzm_fit
        rows.append(
            TableRow(
                q=None if exact is None else float(q),
                beta_kzm=rep.kzm_fit.beta,
                delta_beta_kzm=rep.kzm_fit.delta_beta,
                r2_kzm=rep.kzm_fit.r2,
                beta_ikzm=None if ik is None else ik.beta,
                delta_beta_ikzm=None if ik is None else ik.delta_beta,
                r2_ikzm=None if ik is None else ik.r2,
                beta_theory=theory,
            )
        )
    return rows


TABLE_COLUMNS = ("q", "beta_kzm", "dbeta_kzm", "r2_kzm", "beta_ikzm", "dbeta_ikzm", "r2_ikzm", "beta_theory")


def _fmt(v, nd=4):
    return "" if v is None else f"{v:.{nd}f}"


def table_csv(rows) -> str:
    lines = ["# schema=1", ",".join(TABLE_COLUMNS)]
    for r in rows:
        q = "inf" if r.q is None else f"{r.q:g}"
        lines.append(
            ",".join(
                [
                    q,
                    _fmt(r.beta_kzm, 6),
                    _fmt(r.delta_beta_kzm, 6),
                    _fmt(r.r2_kzm, 6),
                    _fmt(r.beta_ikzm, 6),
                    _fmt(r.delta_beta_ikzm, 6),
                    _fmt(r.r2_ikzm, 6),
                    f"{r.beta_theory:.6f}",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def table_text(rows) -> str:
    head = f"{'q':>5}  {'beta_KZM':>16}  {'r2':>7}  {'beta_IKZM':>16}  {'r2':>7}  {'theory':>9}"
    out = [head, "-" * len(head)]
    for r in rows:
        q = "inf" if r.q is None else f"{r.q:g}"
        kz = f"{r.beta_kzm:.3f} +- {r.delta_beta_kzm:.3f}"
        ik = "-" if r.beta_ikzm is None else f"{r.beta_ikzm:.3f} +- {r.delta_beta_ikzm:.3f}"
        r2i = "-" if r.r2_ikzm is None else f"{r.r2_ikzm:.4f}"
        out.append(f"{q:>5}  {kz:>16}  {r.r2_kzm:7.4f}  {ik:>16}  {r2i:>7}  {r.beta_theory:9.6f}")
    return "\n".join(out) + "\n"


def theory_for(metadata: dict) -> dict:
    """Theory exponents and crossover for a curve described by its chain metadata."""
    spec = ChainSpec(int(metadata["L"]), float(metadata["q"]), float(metadata["alpha_q"]), float(metadata["J0"]))
    if spec.homogeneous or spec.q <= 1:
        return {"beta_kzm": 0.5, "beta_ikzm": None, "tau_Q_star": None}
    return {"beta_kzm": 0.5, "beta_ikzm": ikzm_exponent(spec.q), "tau_Q_star": predict_crossover(spec)}


def read_table_csv(text: str) -> list[TableRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "# schema=1":
        raise ValueError("missing '# schema=1' header")
    if tuple(c.strip() for c in lines[1].split(",")) != TABLE_COLUMNS:
        raise ValueError("unexpected table columns")

    def val(s):
        return None if s == "" else float(s)

    rows = []
    for ln in lines[2:]:
        c = ln.split(",")
        q = None if c[0] == "inf" else float(c[0])
        rows.append(TableRow(q, float(c[1]), float(c[2]), float(c[3]), val(c[4]), val(c[5]), val(c[6]), float(c[7])))
    return rows
