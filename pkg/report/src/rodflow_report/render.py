"""Figure rendering for each run mode.

Every renderer reads the raw CSVs first and only then touches matplotlib,
so a malformed run fails before any file is written.  Fits shown in the
figures are recomputed from the per-realization data, never copied from
the harness diagnostics; the diagnostics values are used only to
cross-check the recomputation in the summary.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "rodflow-report"

import matplotlib.pyplot as plt
import numpy as np
from scipy.special import sph_harm_y

from .index import ReportError, RunRecord, read_csv_columns

SLOPE_RANGE = (-1.2, -0.8)
SLOPE_MATCH_TOL = 0.05


def _save(fig, out_dir, stem):
    names = []
    for ext in ("svg", "png"):
        name = f"{stem}.{ext}"
        kwargs = {"metadata": {"Date": None}} if ext == "svg" else {}
        fig.savefig(os.path.join(out_dir, name), **kwargs)
        names.append(name)
    plt.close(fig)
    return names


def _group_by_n(ns, vals):
    uniq = sorted(set(ns))
    return uniq, [np.array([v for n_i, v in zip(ns, vals) if n_i == n]) for n in uniq]


def render_sweep(run: RunRecord, out_dir):
    """Log-log convergence figures for a de1 sweep run."""
    sweep = read_csv_columns(run.artifact("sweep.csv"), required=("n", "rep", "phi"))
    w1_cols = [c for c in sweep if c.startswith("w1_t")]
    if not w1_cols:
        raise ReportError(f"{run.run_id}: sweep.csv has no w1_t* columns")
    mor = read_csv_columns(run.artifact("mor.csv"), required=("phi_n_log_n", "rho"))
    diag = run.diagnostics()

    ns, groups = _group_by_n(sweep["n"], sweep["phi"])
    second = np.array([float(np.mean(g**2)) for g in groups])
    means = np.array([g.mean() for g in groups])
    stderrs = np.array([g.std(ddof=1) / np.sqrt(g.size) for g in groups])
    slope, intercept = np.polyfit(np.log(ns), np.log(second), 1)
    harness_slope = diag.get("phi_second_moment_slope", float("nan"))

    figures = []
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(ns, second, "o", label="sample E[$\\Phi^2$]")
    xs = np.array([ns[0], ns[-1]], dtype=float)
    ax.loglog(xs, np.exp(intercept) * xs**slope, "-", label=f"fit slope {slope:.3f}")
    ax.loglog(xs, second[0] * (xs / ns[0]) ** -1.0, "--", color="gray", label="slope $-1$")
    ax.set_xlabel("n")
    ax.set_ylabel("E[$\\Phi_\\varphi^2$]")
    ax.legend(fontsize=8)
    ax.set_title(f"{run.run_id}: concentration of the pairing functional")
    fig.tight_layout()
    figures += _save(fig, out_dir, f"{run.run_id}_phi2")

    w1_last = w1_cols[-1]
    _, w1_groups = _group_by_n(sweep["n"], sweep[w1_last])
    w1_medians = np.array([float(np.median(g)) for g in w1_groups])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(ns, w1_medians, "s-")
    ax.set_xlabel("n")
    ax.set_ylabel(f"median $W_1$ ({w1_last[3:]})")
    ax.set_title(f"{run.run_id}: empirical measure vs limit density")
    fig.tight_layout()
    figures += _save(fig, out_dir, f"{run.run_id}_w1")

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(mor["phi_n_log_n"], mor["rho"], "o")
    ax.set_xlabel("$\\varphi_n \\log n$")
    ax.set_ylabel("reflection contraction ratio $\\rho$")
    ax.set_title(f"{run.run_id}: dilution vs contraction")
    fig.tight_layout()
    figures += _save(fig, out_dir, f"{run.run_id}_mor")

    checks = {
        "phi2_slope_in_[-1.2,-0.8]": SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1],
        "phi2_slope_matches_harness_0.05": abs(slope - harness_slope) <= SLOPE_MATCH_TOL,
        "phi_mean_within_3_stderr": bool(np.all(np.abs(means) <= 3.0 * stderrs)),
        "w1_median_decreasing": bool(np.all(np.diff(w1_medians) < 0)) if len(ns) > 1 else True,
    }
    notes = [f"refit slope {slope:.4f} (harness {harness_slope:.4f})"]
    return {"run_id": run.run_id, "mode": run.mode, "figures": figures, "checks": checks, "notes": notes}


def _real_sph_basis(l_max, theta, phi):
    """Real orthonormal harmonics at (theta, phi) arrays, matching the
    (l*l + l + m) coefficient layout of the run artifacts."""
    y = np.empty(theta.shape + ((l_max + 1) ** 2,))
    for l in range(l_max + 1):
        for m in range(l + 1):
            val = sph_harm_y(l, m, theta, phi)
            idx = l * l + l
            if m == 0:
                y[..., idx] = val.real
            else:
                c = np.sqrt(2.0) * (-1.0 if m % 2 else 1.0)
                y[..., idx + m] = c * val.real
                y[..., idx - m] = c * val.imag
    return y


def render_fokker_planck(run: RunRecord, out_dir):
    """Orientation-density heatmap and moment/stress traces."""
    coeffs = read_csv_columns(run.artifact("coeffs.csv"), required=("t", "l", "m", "a_lm"))
    moments = read_csv_columns(
        run.artifact("moments.csv"), required=("t", "mass", "mean_xi3", "mean_xi3_sq")
    )
    stress_cols = ["sig11", "sig22", "sig12", "sig13", "sig23"]
    missing = [c for c in stress_cols if c not in moments]
    if missing:
        raise ReportError(f"{run.run_id}: moments.csv missing {missing}")

    t_last = max(coeffs["t"])
    l_max = int(max(coeffs["l"]))
    a = np.zeros((l_max + 1) ** 2)
    for t, l, m, v in zip(coeffs["t"], coeffs["l"], coeffs["m"], coeffs["a_lm"]):
        if t == t_last:
            li, mi = int(l), int(m)
            a[li * li + li + mi] = v
    theta = np.linspace(1e-3, np.pi - 1e-3, 90)
    phi = np.linspace(-np.pi, np.pi, 180)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    dens = _real_sph_basis(l_max, tt, pp) @ a

    figures = []
    fig, ax = plt.subplots(figsize=(6, 3.2))
    pc = ax.pcolormesh(pp, tt, dens, shading="auto", cmap="viridis")
    fig.colorbar(pc, ax=ax, label="f($\\xi$)")
    ax.set_xlabel("azimuth")
    ax.set_ylabel("polar angle")
    ax.invert_yaxis()
    ax.set_title(f"{run.run_id}: orientation density at t={t_last:g}")
    fig.tight_layout()
    figures += _save(fig, out_dir, f"{run.run_id}_orientation")

    gamma_e = run.gamma_e()
    stress_vals = np.array([moments[c] for c in stress_cols])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.plot(moments["t"], moments["mean_xi3"], label="E[$\\xi_3$]")
    ax1.plot(moments["t"], moments["mean_xi3_sq"], label="E[$\\xi_3^2$]")
    ax1.set_xlabel("t")
    ax1.legend(fontsize=8)
    ax1.set_title("orientation moments")
    for c, row in zip(stress_cols, stress_vals):
        ax2.plot(moments["t"], row, label=c)
    ax2.set_xlabel("t")
    ax2.legend(fontsize=7)
    ax2.set_title("elastic stress components")
    if gamma_e == 0.0:
        ax2.text(
            0.5, 0.5, "identically zero ($\\gamma_E$ = 0)",
            transform=ax2.transAxes, ha="center", va="center", color="crimson",
        )
    fig.tight_layout()
    figures += _save(fig, out_dir, f"{run.run_id}_moments")

    mass_err = float(np.abs(np.asarray(moments["mass"]) - 1.0).max())
    checks = {"mass_conserved_1e-8": mass_err <= 1e-8}
    notes = []
    if gamma_e == 0.0:
        checks["stress_identically_zero"] = bool(np.all(stress_vals == 0.0))
        notes.append("sphere preset: stress panel flagged identically zero (gamma_E = 0)")
    return {"run_id": run.run_id, "mode": run.mode, "figures": figures, "checks": checks, "notes": notes}


def render_compare_fields(run: RunRecord, out_dir):
    """Three-route pairing comparison and a spatial stress slice."""
    compare = read_csv_columns(run.artifact("compare.csv"), required=("route", "value", "stderr"))
    field = read_csv_columns(
        run.artifact("field.csv"), required=("x", "y", "z", "rho", "sig33")
    )
    diag = run.diagnostics()

    figures = []
    fig, ax = plt.subplots(figsize=(5, 4))
    idx = np.arange(len(compare["route"]))
    ax.bar(idx, compare["value"], yerr=[3.0 * s for s in compare["stderr"]], capsize=4)
    ax.set_xticks(idx, compare["route"], fontsize=8)
    ax.set_ylabel("pairing value")
    ax.set_title(f"{run.run_id}: three-way pairing ($\\pm 3\\sigma$)")
    fig.tight_layout()
    figures += _save(fig, out_dir, f"{run.run_id}_routes")

    xs = np.asarray(field["x"])
    ys = np.asarray(field["y"])
    zs = np.asarray(field["z"])
    s33 = np.asarray(field["sig33"])
    z_levels = np.unique(zs)
    weight = [np.abs(s33[zs == z]).sum() for z in z_levels]
    z_slice = z_levels[int(np.argmax(weight))]
    sel = zs == z_slice
    ux, uy = np.unique(xs[sel]), np.unique(ys[sel])
    grid = np.full((ux.size, uy.size), np.nan)
    ix = np.searchsorted(ux, xs[sel])
    iy = np.searchsorted(uy, ys[sel])
    grid[ix, iy] = s33[sel]
    fig, ax = plt.subplots(figsize=(5, 4))
    pc = ax.pcolormesh(ux, uy, grid.T, shading="auto", cmap="RdBu_r")
    fig.colorbar(pc, ax=ax, label="$\\rho \\, \\bar\\sigma_{33}$")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"{run.run_id}: stress density slice z={z_slice:g}")
    if run.gamma_e() == 0.0:
        ax.text(
            0.5, 0.5, "identically zero ($\\gamma_E$ = 0)",
            transform=ax.transAxes, ha="center", va="center", color="crimson",
        )
    fig.tight_layout()
    figures += _save(fig, out_dir, f"{run.run_id}_stress_slice")

    checks = {
        "three_way_agreement": bool(diag.get("three_way_agreement", False)),
        "quadrature_rel_err_2pct": float(diag.get("quadrature_rel_err", np.inf)) <= 0.02,
    }
    if run.gamma_e() == 0.0:
        checks = {"stress_identically_zero": bool(np.all(s33 == 0.0))}
    return {"run_id": run.run_id, "mode": run.mode, "figures": figures, "checks": checks, "notes": []}


def render_small_de(run: RunRecord, out_dir):
    """Relaxation traces toward the stationary moments, per phi_n."""
    series = read_csv_columns(
        run.artifact("series.csv"), required=("phi_n", "t", "mean_xi3", "mean_xi3_sq")
    )
    diag = run.diagnostics()
    targets = diag["stationary_targets"]

    phis = np.asarray(series["phi_n"])
    ts = np.asarray(series["t"])
    m3 = np.asarray(series["mean_xi3"])
    fig, ax = plt.subplots(figsize=(5, 4))
    for p in sorted(set(phis)):
        sel = phis == p
        ax.plot(ts[sel], m3[sel], label=f"$\\varphi_n$={p:g}")
    ax.axhline(targets["xi3"], color="gray", ls="--", label="stationary E[$\\xi_3$]")
    ax.set_xlabel("t")
    ax.set_ylabel("E[$\\xi_3$]")
    ax.legend(fontsize=8)
    ax.set_title(f"{run.run_id}: initial layer and stationary plateau")
    fig.tight_layout()
    figures = _save(fig, out_dir, f"{run.run_id}_relaxation")
    checks = {"moments_within_3_sigma": bool(diag.get("moments_within_3_sigma", False))}
    return {"run_id": run.run_id, "mode": run.mode, "figures": figures, "checks": checks, "notes": []}


RENDERERS = {
    "sweep_de1": render_sweep,
    "fokker_planck": render_fokker_planck,
    "compare_fields": render_compare_fields,
    "sweep_small_de": render_small_de,
}


def render_run(run: RunRecord, out_dir):
    renderer = RENDERERS.get(run.mode)
    if renderer is None:
        return {
            "run_id": run.run_id,
            "mode": run.mode,
            "figures": [],
            "checks": {},
            "notes": [f"no renderer for mode {run.mode}"],
        }
    return renderer(run, out_dir)


def write_summary(out_dir, summaries):
    """Single Markdown page: pass/fail table plus figure links per run."""
    lines = ["# Run report", ""]
    lines += ["| run | mode | checks | status |", "|---|---|---|---|"]
    for s in summaries:
        n_ok = sum(s["checks"].values())
        n_all = len(s["checks"])
        status = "PASS" if n_ok == n_all else "FAIL"
        if n_all == 0:
            status = "SKIPPED"
        lines.append(f"| {s['run_id']} | {s['mode']} | {n_ok}/{n_all} | {status} |")
    for s in summaries:
        lines += ["", f"## {s['run_id']} ({s['mode']})", ""]
        for name, ok in s["checks"].items():
            lines.append(f"- {'PASS' if ok else 'FAIL'}: {name}")
        for note in s["notes"]:
            lines.append(f"- note: {note}")
        for fig in s["figures"]:
            if fig.endswith(".png"):
                lines.append(f"\n![{fig}]({fig})")
    path = os.path.join(out_dir, "summary.md")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
