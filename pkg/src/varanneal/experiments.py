"""Figure-level experiments: scans, spin-glass runs, histograms and kappa reports.

Every function returns an :class:`ExperimentResult` holding plain tables, so
the CLI, the plots and the tests all read the same numbers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .annealing import (anneal_mps, batched_parts, exact_curve, final_distance, plus_state,
                        recover)
from .dmrg import effective_gap
from .exact import (entanglement_entropy, evolve_exact, ground_state, manifold_distance,
                    phase_aligned_distance)
from .linearization import eta_deviation, kappa_bound, linearize_path
from .models import Model, SpinGlassInstance, build_protocol, sample_spin_glass
from .mps import mps_to_dense
from .product import (ProductModel, ProductState, integrate, integrate_generic,
                      lmg_critical_point, variational_ground_state)
from .tdvp import anneal_tdvp, mpo_at


@dataclass
class Table:
    name: str
    columns: list
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


@dataclass
class ExperimentResult:
    tables: dict
    summary: dict
    report: str | None = None

    def add(self, table: Table) -> Table:
        self.tables[table.name] = table
        return table


def loglog_slope(T: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log T``."""
    T = np.asarray(T, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(T) < 2 or np.any(y <= 0):
        return math.nan
    return float(np.polyfit(np.log(T), np.log(y), 1)[0])


# --- product manifolds ---------------------------------------------------------------

def _mid_ground(model: ProductModel, s: float = 0.5):
    spec = model.protocol()
    _, psi, _ = ground_state(spec.hamiltonian_at(s))
    entropy = entanglement_entropy(psi, 1, spec.local_dims)
    vgs = variational_ground_state(model, s).embed()
    return entropy, manifold_distance(vgs, [psi])


def _exact_final_distance(model: ProductModel, T: float, dt: float) -> float:
    spec = model.protocol()
    traj = evolve_exact(spec, T, dt=dt, keep_states=False)
    _, psi, _ = ground_state(spec.hamiltonian_at(1.0))
    return manifold_distance(traj.final, [psi])


def twoqubit_scan(A: Sequence[float], T: Sequence[float], T_fixed: float = 1.5,
                  dt: float = 0.01, samples: int = 100, with_exact: bool = True) -> ExperimentResult:
    """``||dpsi(1)||`` over (A, T), mid-protocol exact entropy and VGS-vs-exact distance."""
    res = ExperimentResult({}, {})
    tab = res.add(Table("twoqubit_scan", ["A", "T", "dpsi_1", "dpsi_exact_1", "entropy_exact_mid",
                                          "vgs_exact_distance_mid"]))
    Ts = sorted(set(float(t) for t in T) | {float(T_fixed)})
    for a in A:
        model = ProductModel("twoqubit", A=float(a))
        ent, dist = _mid_ground(model)
        finals = {}
        for t in Ts:
            traj = integrate(model, t, dt=dt, samples=samples)
            finals[t] = traj.observables["dpsi"][-1]
            ex = _exact_final_distance(model, t, dt) if with_exact else None
            tab.rows.append([float(a), t, finals[t], ex, ent, dist])
        res.summary[f"slope_A={a:g}"] = loglog_slope(T, [finals[float(t)] for t in T])
    return res


def bipartite_scan(N: int, A: Sequence[float], T: float = 10.0, dt: float = 0.01,
                   samples: int = 100) -> ExperimentResult:
    """Per-A final distance, mid-protocol distances and entropy; N-independence of the flow."""
    res = ExperimentResult({}, {})
    tab = res.add(Table("bipartite_scan", ["A", "N", "T", "dpsi_1", "dpsi_1_N0", "max_traj_diff",
                                           "vgs_exact_distance_mid", "entropy_exact_mid"]))
    for a in A:
        big = ProductModel("bipartite", N=N, A=float(a))
        small = ProductModel("bipartite", N=0, A=float(a))
        d_big = integrate(big, T, dt=dt, samples=samples).observables["dpsi"][-1]
        d_small = integrate(small, T, dt=dt, samples=samples).observables["dpsi"][-1]
        g_big = integrate_generic(big.protocol(), big, T, dt=dt, samples=samples)
        g_small = integrate_generic(small.protocol(), small, T, dt=dt, samples=samples)
        diff = max(max(abs(x.theta - y.theta), abs(x.phi - y.phi))
                   for x, y in zip(g_big.states, g_small.states))
        ent, dist = _mid_ground(big)
        tab.rows.append([float(a), N, T, d_big, d_small, diff, dist, ent])
    res.summary["max_traj_diff"] = max(r[5] for r in tab.rows)
    return res


def lmg_initial(N: int, shift_theta: float = 1e-4, shift_phi: float = 0.0) -> ProductState:
    model = ProductModel("lmg", N=N)
    return ProductState(math.pi / 2 + shift_theta, shift_phi, model)


def lmg_scan(N: int, T: Sequence[float], dt: float = 0.01, samples: int = 100,
             shift_theta: float = 1e-4, shift_phi: float = 0.0,
             window: tuple[float, float] = (0.45, 1.0)) -> ExperimentResult:
    """``||dS(1)||`` per T, rescaled traces ``sqrt(T) ||dS(s)||`` and their spread on ``window``."""
    model = ProductModel("lmg", N=N)
    x0 = lmg_initial(N, shift_theta, shift_phi)
    res = ExperimentResult({}, {})
    fin = res.add(Table("lmg_final", ["T", "dS_1", "dpsi_1"]))
    tr = res.add(Table("lmg_traces", ["T", "s", "dS", "sqrtT_dS"]))
    traces = []
    for t in T:
        traj = integrate(model, t, dt=dt, x0=x0, samples=samples)
        dS = traj.observables["dS"]
        fin.rows.append([t, dS[-1], traj.observables["dpsi"][-1]])
        for s, v in zip(traj.grid, dS):
            tr.rows.append([t, s, v, math.sqrt(t) * v])
        traces.append(math.sqrt(t) * dS)
        grid = traj.grid
    traces = np.array(traces)
    sel = (grid >= window[0] - 1e-12) & (grid <= window[1] + 1e-12)
    ratio = traces[:, sel].max(axis=0) / traces[:, sel].min(axis=0)
    res.summary["s_star"] = lmg_critical_point(N)
    res.summary["slope"] = loglog_slope(T, [r[1] for r in fin.rows])
    res.summary["trace_ratio_max"] = float(ratio.max())
    res.summary["trace_ratio_argmax_s"] = float(grid[sel][np.argmax(ratio)])
    return res


def kappa_report(model: ProductModel, T: Sequence[float], dt: float = 0.01, samples: int = 200,
                 s_min: float = 0.0, s_max: float = 1.0, x0: ProductState | None = None,
                 window: float = 0.05) -> ExperimentResult:
    """kappa on the trajectory grid restricted to ``[s_min, s_max]`` and the measured ratios.

    The bound is compared with ``max_s ||dx(s)||_eta * T`` for each T.  For
    LMG, points within ``window`` of s* are excluded from the grid.
    """
    grid = np.linspace(0.0, 1.0, samples + 1)
    sel = (grid >= s_min - 1e-12) & (grid <= s_max + 1e-12)
    if model.tag is Model.LMG:
        sel &= np.abs(grid - lmg_critical_point(model.N)) >= window - 1e-12
    s_grid = grid[sel]
    points = linearize_path(model, s_grid)
    rep = kappa_bound(model, points=points)
    res = ExperimentResult({}, {})
    tab = res.add(Table("kappa_measured", ["T", "max_dx_eta", "max_dx_eta_times_T", "ratio"]))
    ratios = []
    for t in T:
        traj = integrate(model, t, dt=dt, x0=x0, samples=samples)
        bloch = np.array([traj.observables[k] for k in ("Sx", "Sy", "Sz")]).T
        dev = eta_deviation(model, points, bloch, traj.grid)
        r = float(dev.max() * t / rep.kappa) if math.isfinite(rep.kappa) else math.nan
        ratios.append(r)
        tab.rows.append([t, float(dev.max()), float(dev.max() * t), r])
        rep.extra[f"ratio_T_{t:g}"] = r
    rep.extra["max_ratio"] = float(np.nanmax(ratios)) if ratios else math.nan
    res.report = rep.to_text()
    res.summary.update({"kappa": rep.kappa, "max_ratio": rep.extra["max_ratio"],
                        "max_relation_residual": rep.max_relation_residual,
                        "max_reality_residual": rep.max_reality_residual, "status": rep.status})
    res.summary["_report"] = rep
    return res


# --- spin glass ------------------------------------------------------------------------

TRACE_COLUMNS = ["D", "T", "s", "dpsi_vgs", "dpsi_exact", "eff_gap", "exact_gap", "entropy",
                 "energy", "vgs_energy", "vgs_jump"]


def spinglass_oracle(inst: SpinGlassInstance, T: float, dt: float = 0.05, order: int = 4,
                     exact_dt: float = 0.02, samples: int = 100) -> np.ndarray:
    """Phase-aligned distance between full-rank TDVP and exact evolution at every recorded s."""
    N = inst.N
    spec = build_protocol("spinglass", N, instance=inst)
    D = 2 ** (N // 2)
    run = anneal_tdvp(batched_parts(inst), plus_state(N, D), T, dt=dt, order=order, samples=samples)
    ex = evolve_exact(spec, T, dt=exact_dt, samples=samples, method="cfm4")
    return np.array([phase_aligned_distance(mps_to_dense(m)[0], e)
                     for m, e in zip(run.snapshots, ex.states)])


def _run_task(args):
    inst, D, T, dt, order, samples, exact = args
    recs = anneal_mps(inst, D, T, dt=dt, order=order, samples=samples, exact=exact)
    for r in recs:
        r.final = None
    return recs


def spinglass_run(instance: SpinGlassInstance | int, D: Sequence[int], T: Sequence[float],
                  N: int = 8, dt: float = 0.05, order: int = 2, samples: int = 100,
                  trace_T: float | None = None, oracle_T: Sequence[float] = (),
                  oracle_dt: float = 0.05, oracle_order: int = 4,
                  workers: int = 1) -> ExperimentResult:
    """Full anneal records per (D, T) for one instance, plus the exact-evolution oracle.

    ``instance`` is either an instance or a seed for :func:`sample_spin_glass`.
    """
    inst = instance if isinstance(instance, SpinGlassInstance) else sample_spin_glass(N, instance)
    res = ExperimentResult({}, {})
    traces = res.add(Table("spinglass_traces", list(TRACE_COLUMNS)))
    scaling = res.add(Table("spinglass_scaling", ["D", "T", "dpsi_vgs_1", "dpsi_exact_1"]))
    if trace_T is None:
        trace_T = max(T)
    grid = np.linspace(0.0, 1.0, samples + 1)
    exact = exact_curve(inst, grid)
    tasks = [(inst, int(d), list(T), dt, order, samples, exact) for d in D]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_task, tasks))
    else:
        runs = list(map(_run_task, tasks))
    for d, recs in zip(D, runs):
        for rec in recs:
            cols = rec.columns()
            for j in range(len(rec.s)):
                traces.rows.append([int(d), rec.T] + [cols[c][j] for c in TRACE_COLUMNS[2:]])
            scaling.rows.append([int(d), rec.T, rec.dpsi_vgs[-1], rec.dpsi_exact[-1]])
            res.summary[f"norm_drift_D={d}_T={rec.T:g}"] = rec.norm_drift
        res.summary[f"slope_D={d}"] = loglog_slope([r.T for r in recs], [r.dpsi_vgs[-1] for r in recs])
        res.summary[f"slope_exact_D={d}"] = loglog_slope([r.T for r in recs],
                                                         [r.dpsi_exact[-1] for r in recs])
    # the four panels as separate files
    t_all = traces.rows
    res.add(Table("spinglass_dpsi", ["D", "T", "s", "dpsi_vgs", "dpsi_exact"],
                  [[r[0], r[1], r[2], r[3], r[4]] for r in t_all]))
    res.add(Table("spinglass_gap", ["D", "s", "eff_gap", "exact_gap"],
                  [[r[0], r[2], r[5], r[6]] for r in t_all if r[1] == float(trace_T)]))
    res.add(Table("spinglass_entropy", ["D", "s", "entropy"],
                  [[r[0], r[2], r[7]] for r in t_all if r[1] == float(trace_T)]))
    if oracle_T:
        orc = res.add(Table("spinglass_oracle", ["T", "s", "distance"]))
        for t in oracle_T:
            dist = spinglass_oracle(inst, t, dt=oracle_dt, order=oracle_order, samples=samples)
            orc.rows.extend([[t, s, v] for s, v in zip(grid, dist)])
            res.summary[f"oracle_max_T={t:g}"] = float(dist.max())
    return res


def _histogram_task(args):
    seed, N, D, T, dt, order, threshold, recovery_D = args
    inst = sample_spin_glass(N, seed)
    parts = batched_parts(inst)
    run = anneal_tdvp(parts, plus_state(N, D), T, dt=dt, order=order)
    dpsi = float(final_distance(inst, run.final)[0])
    gaps = [effective_gap(m, mpo_at(parts, s))[0] for m, s in zip(run.snapshots, run.grid)]
    weight = None
    if dpsi > threshold:
        weight, _, _ = recover(inst, run.final, recovery_D)
    return (seed, D), [seed, D, dpsi, dpsi > threshold, float(min(gaps)), weight]


def _exact_min_gap(seed: int, N: int, samples: int = 100) -> float:
    inst = sample_spin_glass(N, seed)
    return float(exact_curve(inst, np.linspace(0.0, 1.0, samples + 1)).gap.min())


def spinglass_histogram(seed: int, instances: int, D: Sequence[int], T: float = 1600.0,
                        N: int = 8, dt: float = 0.2, order: int = 2, threshold: float = 0.1,
                        recovery_D: int = 8, workers: int = 1) -> ExperimentResult:
    """Final distances of ``instances`` seeded instances (seeds ``seed .. seed+instances-1``)."""
    tasks = [(seed + i, N, int(d), float(T), dt, order, threshold, recovery_D)
             for i in range(instances) for d in D]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = dict(pool.map(_histogram_task, tasks))
    else:
        out = dict(map(_histogram_task, tasks))
    gaps = {seed + i: _exact_min_gap(seed + i, N) for i in range(instances)}
    res = ExperimentResult({}, {})
    tab = res.add(Table("spinglass_histogram", ["seed", "D", "dpsi_1", "failed", "min_eff_gap",
                                                "exact_min_gap", "recovered_weight"]))
    for key in sorted(out):
        row = out[key]
        tab.rows.append(row[:5] + [gaps[key[0]], row[5]])
    for d in D:
        rows = [r for r in tab.rows if r[1] == int(d)]
        fails = [r for r in rows if r[3]]
        res.summary[f"failure_fraction_D={d}"] = len(fails) / len(rows)
        res.summary[f"recovered_D={d}"] = sum(r[6] > 0.999 for r in fails)
        res.summary[f"failed_D={d}"] = len(fails)
    return res
