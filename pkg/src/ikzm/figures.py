"""Plot-data files and SVG renderings of sweep results.

Every figure gets a CSV (``# schema=1`` header, columns listed below) next to
its SVG:

    density_heatmap.csv    tau_Q, t_over_tau, d
    scaling_curves.csv     curve, tau_Q, d, d_fit
    exponent_vs_q.csv      q, beta_fit, dbeta_fit, beta_theory
    profile_family.csv     q, tau_Q, d
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .scaling import FitError, SweepCurve, fit_power_law, segment_regimes, theory_for  # noqa: E402

plt.rcParams["svg.hashsalt"] = "ikzm"
_SVG_META = {"Date": None, "Creator": None}


class FigureInputError(ValueError):
    """Nothing to plot."""


def _curve_label(c: SweepCurve) -> str:
    m = c.metadata
    if not m or float(m.get("alpha_q", 0.0)) == 0.0:
        return f"homogeneous L={m.get('L', '?')}"
    return f"q={float(m['q']):g} L={m['L']}"


def _write_csv(path: Path, columns, rows):
    lines = ["# schema=1", ",".join(columns)]
    for row in rows:
        lines.append(",".join("" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _save(fig, path: Path):
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def _fits(curve: SweepCurve, fit_options: dict):
    """Fitted segments as (fit, label) pairs, or [] when the curve cannot be fitted."""
    meta = curve.metadata or {}
    theory = theory_for(meta) if "L" in meta else None
    try:
        rep = segment_regimes(curve, theory, **fit_options)
    except FitError:
        try:
            return [(fit_power_law(curve), "fit")]
        except FitError:
            return []
    out = [(rep.kzm_fit, "KZM fit")]
    if rep.ikzm_fit is not None:
        out.append((rep.ikzm_fit, "IKZM fit"))
    return out


def heatmap_figure(records, out: Path):
    recs = sorted((r for r in records if r.ok and len(r.times) > 1), key=lambda r: r.tau_Q)
    backends = {r.backend for r in recs}
    if "fermion" in backends and len(backends) > 1:
        recs = [r for r in recs if r.backend == "fermion"]
    if len(recs) < 2:
        raise FigureInputError("heat map needs time series from at least two tau_Q values")
    rows = [(r.tau_Q, t / r.tau_Q, d) for r in recs for t, d in zip(r.times, r.kink_density)]
    data = out / "density_heatmap.csv"
    _write_csv(data, ("tau_Q", "t_over_tau", "d"), rows)

    x = recs[0].times / recs[0].tau_Q
    if any(len(r.times) != len(x) for r in recs):
        raise FigureInputError("records have different sample counts; cannot raster")
    tau = np.array([r.tau_Q for r in recs])
    z = np.array([r.kink_density for r in recs])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    mesh = ax.pcolormesh(x, tau, z, shading="nearest", cmap="viridis")
    ax.axvline(0.0, color="w", ls="--", lw=1)
    ax.set_yscale("log")
    ax.set_xlabel("t / tau_Q")
    ax.set_ylabel("tau_Q")
    fig.colorbar(mesh, ax=ax, label="kink density d")
    svg = out / "density_heatmap.svg"
    _save(fig, svg)
    return data, svg


def scaling_figure(curves, out: Path, fit_options: dict):
    if not curves:
        raise FigureInputError("no sweep curves")
    rows = []
    fig, ax = plt.subplots(figsize=(5, 4))
    for c in curves:
        fits = _fits(c, fit_options)
        label = _curve_label(c)
        (pts,) = ax.loglog(c.tau_Q, c.density, "o", ms=4, label=label)
        for f, _ in fits:
            tt = np.geomspace(*f.window, 20)
            ax.loglog(tt, f(tt), "-", color=pts.get_color(), lw=1)
        for t, d in zip(c.tau_Q, c.density):
            fit_d = next((f(t) for f, _ in fits if f.window[0] <= t <= f.window[1]), None)
            rows.append((label, float(t), float(d), None if fit_d is None else float(fit_d)))
    # reference slopes anchored at the first curve's midpoint
    c0 = curves[0]
    mid = len(c0) // 2
    t_ref = np.geomspace(c0.tau_Q[mid], c0.tau_Q[mid] * 10, 5)
    theory = theory_for(c0.metadata) if c0.metadata and "L" in c0.metadata else {"beta_kzm": 0.5, "beta_ikzm": None}
    slopes = [theory["beta_kzm"]] + ([theory["beta_ikzm"]] if theory["beta_ikzm"] else [])
    for beta in slopes:
        ax.loglog(t_ref, 2 * c0.density[mid] * (t_ref / t_ref[0]) ** (-beta), "k:", lw=1, label=f"slope -{beta:g}")
    ax.set_xlabel("tau_Q")
    ax.set_ylabel("d")
    ax.legend(fontsize=7)
    data = out / "scaling_curves.csv"
    _write_csv(data, ("curve", "tau_Q", "d", "d_fit"), rows)
    svg = out / "scaling_curves.svg"
    _save(fig, svg)
    return data, svg


def exponent_figure(table_rows, out: Path):
    pts = [r for r in table_rows if r.q is not None and r.beta_ikzm is not None]
    if not pts:
        raise FigureInputError("no fitted IKZM exponents")
    data = out / "exponent_vs_q.csv"
    _write_csv(data, ("q", "beta_fit", "dbeta_fit", "beta_theory"), [(r.q, r.beta_ikzm, r.delta_beta_ikzm, r.beta_theory) for r in pts])
    fig, ax = plt.subplots(figsize=(5, 4))
    qq = np.linspace(1.5, max(9.0, max(r.q for r in pts) + 1), 200)
    ax.plot(qq, (qq + 1) / (2 * qq - 2), "k-", lw=1, label="(q+1)/(2q-2)")
    ax.errorbar([r.q for r in pts], [r.beta_ikzm for r in pts], yerr=[r.delta_beta_ikzm for r in pts], fmt="o", label="fit")
    ax.axhline(0.5, color="gray", ls=":", lw=1, label="KZM 1/2")
    ax.set_xlabel("q")
    ax.set_ylabel("beta")
    ax.legend(fontsize=8)
    svg = out / "exponent_vs_q.svg"
    _save(fig, svg)
    return data, svg


def q_family_figure(curves, out: Path, fit_options: dict):
    inhom = [c for c in curves if c.metadata and float(c.metadata.get("alpha_q", 0)) > 0]
    if len({float(c.metadata["q"]) for c in inhom}) < 2:
        raise FigureInputError("needs inhomogeneous curves for at least two values of q")
    inhom.sort(key=lambda c: float(c.metadata["q"]))
    rows = [(float(c.metadata["q"]), float(t), float(d)) for c in inhom for t, d in zip(c.tau_Q, c.density)]
    data = out / "profile_family.csv"
    _write_csv(data, ("q", "tau_Q", "d"), rows)
    fig, ax = plt.subplots(figsize=(5, 4))
    for c in inhom:
        (pts,) = ax.loglog(c.tau_Q, c.density, "o-", ms=3, lw=0.8, label=_curve_label(c))
        for f, _ in _fits(c, fit_options):
            tt = np.geomspace(*f.window, 20)
            ax.loglog(tt, f(tt), "-", color=pts.get_color(), lw=2, alpha=0.5)
    ax.set_xlabel("tau_Q")
    ax.set_ylabel("d")
    ax.legend(fontsize=7)
    svg = out / "profile_family.svg"
    _save(fig, svg)
    return data, svg


def emit_figures(out_dir, records=(), curves=(), table_rows=(), fit_options=None) -> tuple[dict, dict]:
    """Write every figure the inputs support.

    Returns ``(written, skipped)``: figure name to (data path, svg path), and
    figure name to the reason it was skipped. Raises ``FigureInputError`` when
    all inputs are empty.
    """
    records, curves, table_rows = list(records), list(curves), list(table_rows)
    if not (records or curves or table_rows):
        raise FigureInputError("no records, curves or tables to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    opts = fit_options or {}
    main_curves = [c for c in curves if not c.metadata or float(c.metadata.get("alpha_q", 0)) == 0 or float(c.metadata.get("q", 0)) == 2]
    jobs = {
        "density_heatmap": lambda: heatmap_figure(records, out),
        "scaling_curves": lambda: scaling_figure(main_curves or curves, out, opts),
        "exponent_vs_q": lambda: exponent_figure(table_rows, out),
        "profile_family": lambda: q_family_figure(curves, out, opts),
    }
    written, skipped = {}, {}
    for name, job in jobs.items():
        try:
            written[name] = job()
        except FigureInputError as exc:
            skipped[name] = str(exc)
    return written, skipped

