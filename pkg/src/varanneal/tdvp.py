"""Single-site TDVP by projector splitting, batched over independent runs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError
from .exact import step_count
from .mps import (MpsState, _qr_left, _qr_right, apply_bond, apply_site, left_env,
                  right_env, trivial_env)

KRYLOV_TOL = 1e-12
KRYLOV_MAX = 60

# triple-jump coefficients turning a symmetric 2nd-order step into 4th order
_CUBE = 2.0 ** (1.0 / 3.0)
TRIPLE_JUMP = (1.0 / (2.0 - _CUBE), -_CUBE / (2.0 - _CUBE), 1.0 / (2.0 - _CUBE))


def _tridiag_exp_e1(T: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """``exp(tau T) e1`` for a batch of real symmetric tridiagonal matrices ``T``."""
    lam, U = np.linalg.eigh(T)
    return np.matmul(U, (np.exp(tau[:, None] * lam) * U[:, 0, :])[..., None])[..., 0]


def expm_krylov(apply: Callable[[np.ndarray], np.ndarray], v0: np.ndarray, tau,
                tol: float = KRYLOV_TOL, m_max: int = KRYLOV_MAX, site: int | None = None) -> np.ndarray:
    """``exp(tau H) v0`` per batch element by Lanczos with full reorthogonalization.

    ``H`` is Hermitian and given through ``apply`` acting on arrays shaped
    like ``v0`` (batch axis first); ``tau`` is a scalar or a ``(B,)`` array
    of purely imaginary step factors.  Iteration stops once the a-posteriori
    estimate ``beta_k |[exp(tau T_k) e1]_k|`` is below ``tol`` for every
    element.  That estimate needs a small eigendecomposition, so it is only
    evaluated once the leading Taylor term ``prod(beta) |tau|^k / k!`` of the
    same quantity has dropped below ``tol``.  A breakdown (invariant Krylov
    space) zeroes the corresponding vector, which leaves the result exact.
    """
    shape = v0.shape
    B = shape[0]
    n = int(np.prod(shape[1:]))
    tau = np.broadcast_to(np.asarray(tau, dtype=complex), (B,))
    atau = np.abs(tau)
    v = v0.reshape(B, n)
    beta0 = np.sqrt(np.einsum("bi,bi->b", v.real, v.real) + np.einsum("bi,bi->b", v.imag, v.imag))
    safe = np.where(beta0 > 0, beta0, 1.0)
    kmax = min(m_max, n)
    V = np.zeros((B, kmax + 1, n), dtype=complex)
    V[:, 0] = v / safe[:, None]
    T = np.zeros((B, kmax, kmax))
    taylor = beta0.copy()
    coeff = None
    err = np.full(B, np.inf)
    for j in range(kmax):
        w = apply(V[:, j].reshape(shape)).reshape(B, n, 1)
        Vj = V[:, : j + 1]
        h = np.matmul(Vj.conj(), w)
        T[:, j, j] = h[:, j, 0].real
        w = w - np.matmul(h.transpose(0, 2, 1), Vj).transpose(0, 2, 1)
        w = w - np.matmul(np.matmul(Vj.conj(), w).transpose(0, 2, 1), Vj).transpose(0, 2, 1)
        w = w[..., 0]
        b = np.sqrt(np.einsum("bi,bi->b", w.real, w.real) + np.einsum("bi,bi->b", w.imag, w.imag))
        broke = b < 1e-13 * np.maximum(np.abs(T[:, j, j]), 1.0)
        b = np.where(broke, 0.0, b)
        taylor = taylor * b * atau / (j + 1)
        last = j + 1 == kmax
        if last or np.all(taylor < tol):
            coeff = _tridiag_exp_e1(T[:, : j + 1, : j + 1], tau)
            err = b * np.abs(coeff[:, -1]) * beta0
            if j + 1 == n or np.all(err < tol):
                break
        if not last:
            T[:, j, j + 1] = T[:, j + 1, j] = b
            V[:, j + 1] = np.where(broke[:, None], 0.0, w / np.where(b > 0, b, 1.0)[:, None])
    else:
        where = "" if site is None else f" at site {site}"
        raise ConvergenceError(f"Krylov exponential did not converge{where}", float(np.max(err)))
    k = coeff.shape[1]
    out = np.matmul(coeff[:, None, :], V[:, :k])[:, 0] * beta0[:, None]
    return out.reshape(shape)


def mpo_at(parts, s) -> list[np.ndarray]:
    """``W(s) = Wc + (1-s) Wx + s W1`` per site; ``s`` scalar or per batch element."""
    Wc, Wx, W1 = parts
    s = np.asarray(s, dtype=float)
    if s.ndim == 0:
        return [c + (1 - s) * x + s * o for c, x, o in zip(Wc, Wx, W1)]
    sb = s[:, None, None, None, None]
    return [c + (1 - sb) * x + sb * o for c, x, o in zip(Wc, Wx, W1)]


def stack_parts(parts_list: Sequence) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Stack per-instance ``(Wc, Wx, W1)`` site lists into batched lists."""
    return tuple([np.stack([p[i][k] for p in parts_list]) for k in range(len(parts_list[0][i]))]
                 for i in range(3))


def right_envs(mps: MpsState, W: Sequence[np.ndarray]) -> list[np.ndarray]:
    """``R[k]`` is the environment of sites ``k+1 .. N-1``."""
    N = mps.N
    Rs = [None] * N
    Rs[N - 1] = trivial_env(mps.batch)
    for k in range(N - 1, 0, -1):
        Rs[k - 1] = right_env(Rs[k], mps.tensors[k], W[k])
    return Rs


def tdvp_step(mps: MpsState, W: Sequence[np.ndarray], dt, tol: float = KRYLOV_TOL) -> MpsState:
    """One symmetric single-site projector-splitting step of length ``dt``.

    Left-to-right half sweep (site forward, bond backward, each ``dt/2``),
    then the mirrored right-to-left half sweep.  ``dt`` may be a per-batch
    array; elements with ``dt = 0`` are left unchanged.  The state must have
    its centre at site 0; it is returned with the centre at site 0.
    """
    if mps.center != 0:
        raise ValueError("tdvp_step expects the canonical centre at site 0")
    N = mps.N
    B = mps.batch
    half = 0.5 * np.broadcast_to(np.asarray(dt, dtype=float), (B,))
    fwd, bwd = -1j * half, 1j * half
    A = list(mps.tensors)
    Rs = right_envs(mps, W)
    Ls = [None] * N
    Ls[0] = trivial_env(B)

    for k in range(N):
        L, R, w = Ls[k], Rs[k], W[k]
        A[k] = expm_krylov(lambda x: apply_site(x, L, w, R), A[k], fwd, tol, site=k)
        if k < N - 1:
            q, C = _qr_left(A[k])
            A[k] = q
            Ls[k + 1] = left_env(L, q, w)
            L1 = Ls[k + 1]
            C = expm_krylov(lambda x: apply_bond(x, L1, R), C, bwd, tol, site=k)
            A[k + 1] = np.einsum("bij,bjsk->bisk", C, A[k + 1])

    for k in range(N - 1, -1, -1):
        L, R, w = Ls[k], Rs[k], W[k]
        A[k] = expm_krylov(lambda x: apply_site(x, L, w, R), A[k], fwd, tol, site=k)
        if k > 0:
            q, C = _qr_right(A[k])
            A[k] = q
            Rs[k - 1] = right_env(R, q, w)
            R1 = Rs[k - 1]
            C = expm_krylov(lambda x: apply_bond(x, L, R1), C, bwd, tol, site=k)
            A[k - 1] = np.einsum("bisj,bjk->bisk", A[k - 1], C)

    return MpsState(A, 0, mps.D_max)


@dataclass
class TdvpRun:
    """Snapshots of a batched anneal at ``s = k / samples``."""

    grid: np.ndarray
    snapshots: list
    final: MpsState
    norm_drift: np.ndarray
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def anneal_tdvp(parts, mps0: MpsState, T, dt: float = 0.05, samples: int = 100,
                order: int = 2, keep: str = "all", tol: float = KRYLOV_TOL,
                progress: Callable[[int, int], None] | None = None,
                engine: str = "jit") -> TdvpRun:
    """Anneal a batch of states from s=0 to s=1.

    Parameters
    ----------
    parts : tuple of site lists
        ``(Wc, Wx, W1)`` with batch axes (size 1 or ``B``), see
        :func:`varanneal.models.spin_glass_mpo_parts`.
    T : float or array
        Annealing time, shared or per batch element.  Element ``b`` takes
        ``n_b = step_count(T_b, dt, samples)`` equal steps in s with the MPO
        evaluated at each step midpoint; finished elements idle with ``dt=0``.
    order : {2, 4}
        2: symmetric step; 4: triple-jump composition of it.
    keep : {"all", "final"}
        Whether to keep a snapshot at every recorded ``s``.
    engine : {"jit", "numpy"}
        ``jit`` runs each batch element through the compiled kernel in
        :mod:`varanneal.tdvp_jit`; ``numpy`` advances the whole batch with
        stacked matmuls.  Both implement the same step and agree to
        round-off; the numpy path is the reference.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if keep not in ("all", "final"):
        raise ValueError("keep must be 'all' or 'final'")
    if engine == "jit":
        return _anneal_jit(parts, mps0, T, dt, samples, order, keep, tol, progress)
    if engine != "numpy":
        raise ValueError(f"unknown engine {engine!r}")
    B = mps0.batch
    T = np.broadcast_to(np.asarray(T, dtype=float), (B,)).copy()
    n = np.array([step_count(t, dt, samples) for t in T])
    stride = n // samples
    nmax = int(n.max())
    h = 1.0 / n
    mps = mps0.copy()
    if mps.center != 0:
        from .mps import move_center
        move_center(mps, 0)
    grid = np.linspace(0.0, 1.0, samples + 1)
    snaps: list = [mps.copy()] if keep == "all" else []
    pending: dict[int, list] = {}
    drift = np.zeros(B)
    subs = (1.0,) if order == 2 else TRIPLE_JUMP

    for k in range(nmax):
        active = k < n
        s0 = k * h
        offset = 0.0
        for g in subs:
            smid = np.where(active, s0 + (offset + 0.5 * g) * h, 1.0)
            W = mpo_at(parts, smid)
            step = np.where(active, g * h * T, 0.0)
            mps = tdvp_step(mps, W, step, tol)
            offset += g
        nrm = mps.norm()
        drift = np.maximum(drift, np.abs(nrm - 1.0))
        done = active & ((k + 1) % stride == 0)
        if keep == "all" and np.any(done):
            idx = (k + 1) // stride
            for b in np.nonzero(done)[0]:
                pending.setdefault(int(idx[b]), []).append((int(b), [t[b].copy() for t in mps.tensors]))
        if progress is not None:
            progress(k + 1, nmax)

    if keep == "all":
        # reassemble per-sample snapshots, one batch slot per element
        for j in range(1, samples + 1):
            entries = dict(pending.get(j, []))
            tensors = [np.stack([entries[b][site] for b in range(B)]) for site in range(mps.N)]
            snaps.append(MpsState(tensors, 0, mps.D_max))
    return TdvpRun(grid, snaps, mps, drift, n)


def _anneal_jit(parts, mps0, T, dt, samples, order, keep, tol, progress) -> TdvpRun:
    from numba.typed import List

    from .tdvp_jit import anneal_single

    B = mps0.batch
    T = np.broadcast_to(np.asarray(T, dtype=float), (B,)).copy()
    n = np.array([step_count(t, dt, samples) for t in T])
    mps = mps0.copy()
    if mps.center != 0:
        from .mps import move_center
        move_center(mps, 0)
    shapes = [t.shape[1:] for t in mps.tensors]
    sizes = [int(np.prod(sh)) for sh in shapes]
    keep_all = keep == "all"
    rows = []
    drift = np.zeros(B)

    def site_list(arrs, b):
        out = List()
        for a in arrs:
            out.append(np.ascontiguousarray(a[b if a.shape[0] > 1 else 0], dtype=complex))
        return out

    for b in range(B):
        As = site_list(mps.tensors, b)
        Wc, Wx, W1 = (site_list(p, b) for p in parts)
        snaps, drift[b], worst = anneal_single(As, Wc, Wx, W1, float(T[b]), int(n[b]),
                                               int(n[b] // samples), order, tol, KRYLOV_MAX, keep_all)
        if not worst < tol:
            raise ConvergenceError("Krylov exponential did not converge", float(worst))
        rows.append(snaps)
        if progress is not None:
            progress(b + 1, B)

    def unpack(j):
        tensors, pos = [], 0
        for sh, sz in zip(shapes, sizes):
            tensors.append(np.stack([r[j, pos: pos + sz].reshape(sh) for r in rows]))
            pos += sz
        return MpsState(tensors, 0, mps.D_max)

    snaps = [unpack(j) for j in range(samples + 1)] if keep_all else []
    final = snaps[-1] if keep_all else unpack(0)
    grid = np.linspace(0.0, 1.0, samples + 1)
    return TdvpRun(grid, snaps, final, drift, n)
