"""Optional static SVG renderings of experiment tables (requires matplotlib)."""

from __future__ import annotations

import os

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "varanneal"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: str) -> str:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    return path


def _loglog(ax, table, group: str, x: str, y: str, label: str):
    keys = sorted(set(table.column(group)))
    for k in keys:
        rows = [r for r in table.rows if r[table.columns.index(group)] == k]
        xs = [r[table.columns.index(x)] for r in rows]
        ys = [r[table.columns.index(y)] for r in rows]
        ax.loglog(xs, ys, "o-", label=f"{label}={k:g}")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.legend(fontsize="small")


def render(command: str, result, out: str) -> list[str]:
    """Write the SVGs for ``command`` into ``out`` and return their paths."""
    plt = _pyplot()
    written = []
    t = result.tables
    if command == "twoqubit-scan":
        fig, ax = plt.subplots()
        _loglog(ax, t["twoqubit_scan"], "A", "T", "dpsi_1", "A")
        written.append(_save(fig, os.path.join(out, "twoqubit_scan.svg")))
    elif command == "bipartite-scan":
        tab = t["bipartite_scan"]
        fig, ax = plt.subplots()
        ax.plot(tab.column("A"), tab.column("dpsi_1"), "o-", label="dpsi_1")
        ax.plot(tab.column("A"), tab.column("entropy_exact_mid"), "s-", label="entropy_exact_mid")
        ax.set_xlabel("A")
        ax.legend()
        written.append(_save(fig, os.path.join(out, "bipartite_scan.svg")))
    elif command == "lmg-scan":
        tab = t["lmg_traces"]
        fig, ax = plt.subplots()
        for T in sorted(set(tab.column("T"))):
            rows = np.array([[r[1], r[3]] for r in tab.rows if r[0] == T])
            ax.plot(rows[:, 0], rows[:, 1], label=f"T={T:g}")
        ax.axvline(result.summary["s_star"], color="k", lw=0.5)
        ax.set_xlabel("s")
        ax.set_ylabel("sqrtT_dS")
        ax.legend()
        written.append(_save(fig, os.path.join(out, "lmg_traces.svg")))
    elif command == "spinglass-run":
        fig, ax = plt.subplots()
        _loglog(ax, t["spinglass_scaling"], "D", "T", "dpsi_vgs_1", "D")
        written.append(_save(fig, os.path.join(out, "spinglass_scaling.svg")))
        for name, col in (("spinglass_gap", "eff_gap"), ("spinglass_entropy", "entropy")):
            tab = t[name]
            fig, ax = plt.subplots()
            for D in sorted(set(tab.column("D"))):
                rows = np.array([[r[1], r[tab.columns.index(col)]] for r in tab.rows if r[0] == D])
                ax.plot(rows[:, 0], rows[:, 1], label=f"D={D:g}")
            if col == "eff_gap":
                rows = np.array([[r[1], r[3]] for r in tab.rows if r[0] == tab.rows[0][0]])
                ax.plot(rows[:, 0], rows[:, 1], "k--", label="exact")
            ax.set_xlabel("s")
            ax.set_ylabel(col)
            ax.legend()
            written.append(_save(fig, os.path.join(out, name + ".svg")))
    elif command == "spinglass-histogram":
        tab = t["spinglass_histogram"]
        Ds = sorted(set(tab.column("D")))
        fig, axes = plt.subplots(1, len(Ds), figsize=(3 * len(Ds), 3), squeeze=False)
        bins = np.linspace(0.0, 1.5, 31)
        for ax, D in zip(axes[0], Ds):
            vals = [r[2] for r in tab.rows if r[1] == D]
            ax.hist(vals, bins=bins)
            ax.set_title(f"D={D:g}")
        written.append(_save(fig, os.path.join(out, "spinglass_histogram.svg")))
        fig, ax = plt.subplots()
        for D in Ds:
            rows = np.array([[r[4], r[2]] for r in tab.rows if r[1] == D])
            ax.scatter(rows[:, 0], rows[:, 1], s=8, label=f"D={D:g}")
        ax.set_xlabel("min_eff_gap")
        ax.set_ylabel("dpsi_1")
        ax.legend()
        written.append(_save(fig, os.path.join(out, "spinglass_gap_scatter.svg")))
    plt.close("all")
    return written
