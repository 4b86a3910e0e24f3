"""Spin-glass annealing on the MPS manifold and its diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dmrg import dmrg, effective_gap
from .exact import DEGENERACY_TOL, manifold_distance, phase_aligned_distance, z_configurations
from .models import SpinGlassInstance, spin_glass_mpo_parts
from .mps import (MpsState, from_dense, max_bond_dims, move_center, mps_entropy,
                  mps_to_dense, mpo_expectation, overlap, product_mps)
from .tdvp import anneal_tdvp, mpo_at

JUMP_OVERLAP = 0.5
EXACT_LIMIT = 14


def batched_parts(inst: SpinGlassInstance):
    """``(Wc, Wx, W1)`` of ``inst`` with a batch axis of size 1."""
    return tuple([w[None] for w in lst] for lst in spin_glass_mpo_parts(inst))


def plus_state(N: int, D: int, batch: int = 1) -> MpsState:
    return product_mps(np.ones(2) / np.sqrt(2), D_max=D, N=N, batch=batch)


@dataclass
class ExactCurve:
    """Exact ground manifolds and gaps of ``H(s)`` on a grid."""

    grid: np.ndarray
    energy: np.ndarray
    gap: np.ndarray
    ground: list


def exact_curve(inst: SpinGlassInstance, grid: Sequence[float]) -> ExactCurve:
    """Dense diagonalization of ``H(s)`` at every grid point."""
    from .models import build_protocol

    if inst.N > EXACT_LIMIT:
        raise ValueError(f"N = {inst.N} too large for the exact curve")
    spec = build_protocol("spinglass", inst.N, instance=inst)
    grid = np.asarray(grid, dtype=float)
    energy = np.empty(len(grid))
    gap = np.empty(len(grid))
    ground = []
    for j, s in enumerate(grid):
        vals, vecs = np.linalg.eigh(spec.matrix_at(s).toarray())
        deg = int(np.sum(vals - vals[0] < DEGENERACY_TOL))
        energy[j] = vals[0]
        gap[j] = vals[deg] - vals[0]
        ground.append(vecs[:, :deg].T.astype(complex))
    return ExactCurve(grid, energy, gap, ground)


@dataclass
class VgsCurve:
    """Instantaneous variational ground states at bond dimension ``D``."""

    grid: np.ndarray
    energy: np.ndarray
    states: list
    jump: np.ndarray
    converged: np.ndarray


def _is_full_rank(N: int, D: int) -> bool:
    return max_bond_dims(N, D) == max_bond_dims(N, 2**N)


def vgs_curve(inst: SpinGlassInstance, D: int, grid: Sequence[float],
              exact: ExactCurve | None = None) -> VgsCurve:
    """Variational ground states along the protocol.

    Each point is found by DMRG warm-started from the previous point.  When
    the exact ground state is available, DMRG is also run from its
    compression to bond dimension ``D`` and the lower energy wins; a
    switch to a state with overlap below ``JUMP_OVERLAP`` against the
    previous point marks a discontinuity (spurious first-order transition).
    At full rank the compressed exact ground state is itself the answer.
    """
    N = inst.N
    parts = batched_parts(inst)
    grid = np.asarray(grid, dtype=float)
    full = _is_full_rank(N, D)
    if full and exact is None:
        exact = exact_curve(inst, grid)
    energies = np.empty(len(grid))
    jump = np.zeros(len(grid), dtype=bool)
    conv = np.ones(len(grid), dtype=bool)
    states: list = []
    prev = plus_state(N, D)
    for j, s in enumerate(grid):
        W = mpo_at(parts, s)
        if full:
            cand = move_center(from_dense(exact.ground[j][0], N, D), 0)
            e = float(mpo_expectation(cand, W)[0].real)
            best, best_e = cand, e
        else:
            r = dmrg(W, D, guess=prev, alpha=0.0)
            best, best_e, conv[j] = r.mps, r.energy, r.converged
            if exact is not None:
                r2 = dmrg(W, D, guess=from_dense(exact.ground[j][0], N, D))
                if r2.energy < best_e - 1e-10:
                    best, best_e, conv[j] = r2.mps, r2.energy, r2.converged
        if j > 0:
            jump[j] = abs(overlap(prev, best)[0]) < JUMP_OVERLAP
        energies[j] = best_e
        states.append(best)
        prev = best
    return VgsCurve(grid, energies, states, jump, conv)


@dataclass
class AnnealRecord:
    """Diagnostics of one anneal sampled every ``1/samples`` in s."""

    s: np.ndarray
    dpsi_vgs: np.ndarray
    dpsi_exact: np.ndarray
    eff_gap: np.ndarray
    exact_gap: np.ndarray
    entropy: np.ndarray
    energy: np.ndarray
    vgs_energy: np.ndarray
    vgs_jump: np.ndarray
    D: int
    T: float
    dt: float
    seed: int | None = None
    norm_drift: float = 0.0
    final: MpsState | None = field(default=None, repr=False)

    COLUMNS = ("s", "dpsi_vgs", "dpsi_exact", "eff_gap", "exact_gap", "entropy",
               "energy", "vgs_energy", "vgs_jump")

    def columns(self) -> dict:
        return {c: np.asarray(getattr(self, c), dtype=float) for c in self.COLUMNS}


def _state_distance(a: MpsState, b: MpsState) -> float:
    """Phase-aligned distance; dense when affordable, since the overlap form bottoms out near 1e-8."""
    if a.d**a.N <= 2**EXACT_LIMIT:
        return phase_aligned_distance(mps_to_dense(a)[0], mps_to_dense(b)[0])
    ov = abs(overlap(a, b)[0])
    return float(np.sqrt(max(0.0, 2.0 - 2.0 * ov)))


def anneal_mps(inst: SpinGlassInstance, D: int, T, dt: float = 0.05, order: int = 2,
               samples: int = 100, gap_site: int | None = None, with_exact: bool | None = None,
               with_vgs: bool = True, vgs: VgsCurve | None = None,
               exact: ExactCurve | None = None, engine: str = "jit") -> list[AnnealRecord]:
    """Anneal ``|+>^N`` through ``H(s)`` at bond dimension ``D`` for one or more ``T``.

    The TDVP runs for all ``T`` values share one batch; the variational and
    exact ground-state curves do not depend on ``T`` and are computed once.

    Returns one :class:`AnnealRecord` per ``T``.
    """
    N = inst.N
    Ts = np.atleast_1d(np.asarray(T, dtype=float))
    if D < 1 or np.any(Ts <= 0):
        raise ValueError("need D >= 1 and T > 0")
    if with_exact is None:
        with_exact = N <= EXACT_LIMIT
    parts = batched_parts(inst)
    run = anneal_tdvp(parts, plus_state(N, D, len(Ts)), Ts, dt=dt, samples=samples,
                      order=order, engine=engine)
    grid = run.grid
    if with_exact and exact is None:
        exact = exact_curve(inst, grid)
    if with_vgs and vgs is None:
        vgs = vgs_curve(inst, D, grid, exact)
    nan = np.full(len(grid), np.nan)
    out = []
    for b, t in enumerate(Ts):
        cols = {k: nan.copy() for k in ("dpsi_vgs", "dpsi_exact", "eff_gap", "entropy", "energy")}
        for j, s in enumerate(grid):
            st = run.snapshots[j].select(b)
            W = mpo_at(parts, s)
            cols["energy"][j] = mpo_expectation(st, W)[0].real
            cols["entropy"][j] = mps_entropy(st, N // 2)[0]
            cols["eff_gap"][j] = effective_gap(st, W, gap_site)[0]
            if vgs is not None:
                cols["dpsi_vgs"][j] = _state_distance(vgs.states[j], st)
            if exact is not None:
                cols["dpsi_exact"][j] = manifold_distance(mps_to_dense(st)[0], exact.ground[j])
        out.append(AnnealRecord(
            s=grid, exact_gap=exact.gap if exact is not None else nan,
            vgs_energy=vgs.energy if vgs is not None else nan,
            vgs_jump=vgs.jump if vgs is not None else np.zeros(len(grid), dtype=bool),
            D=D, T=float(t), dt=dt, seed=inst.seed, norm_drift=float(run.norm_drift[b]),
            final=run.final.select(b), **cols))
    return out


def final_distance(inst: SpinGlassInstance, mps: MpsState) -> np.ndarray:
    """``||delta psi(1)||`` to the classical ground manifold, per batch element."""
    E = inst.energies(z_configurations(inst.N))
    ground = np.nonzero(E - E.min() < DEGENERACY_TOL)[0]
    psi = mps_to_dense(mps)
    p = np.sum(np.abs(psi[:, ground]) ** 2, axis=1)
    return np.sqrt(np.maximum(0.0, 2.0 - 2.0 * np.sqrt(np.minimum(1.0, p))))


def ground_weight(inst: SpinGlassInstance, mps: MpsState) -> np.ndarray:
    """Total squared overlap with the classical ground manifold, per batch element."""
    E = inst.energies(z_configurations(inst.N))
    ground = np.nonzero(E - E.min() < DEGENERACY_TOL)[0]
    psi = mps_to_dense(mps)
    return np.sum(np.abs(psi[:, ground]) ** 2, axis=1)


def recover(inst: SpinGlassInstance, mps: MpsState, D: int = 8) -> tuple[float, MpsState, bool]:
    """Warm-started DMRG on ``H(1)`` from an anneal's final state.

    Returns the ground-manifold weight of the result, the state and the
    DMRG convergence flag.
    """
    W = mpo_at(batched_parts(inst), 1.0)
    r = dmrg(W, max(D, max(mps.bond_dims)), guess=mps)
    return float(ground_weight(inst, r.mps)[0]), r.mps, r.converged
