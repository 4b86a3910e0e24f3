"""Single-site DMRG and effective local Hamiltonians."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import VarAnnealError
from .exact import DEGENERACY_TOL, gap_from_levels
from .mps import (MpsState, canonicalize, left_env, max_bond_dims, move_center,
                  mpo_expectation, product_mps, right_env, trivial_env)

DMRG_TOL = 1e-12
DMRG_SWEEPS = 200
ALPHA0 = 1e-3
ALPHA_DECAY = 0.3
ALPHA_MIN = 1e-10


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """Dense ``H_eff`` at ``site`` in the basis ``(Dl, d, Dr)`` flattened row-major."""

    site: int
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


@dataclass
class DmrgResult:
    """Outcome of :func:`dmrg`; unpacks as ``energy, mps``."""

    energy: float
    mps: MpsState
    converged: bool
    sweeps: int
    delta: float
    energies: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.energy, self.mps))


def heff_matrix(L: np.ndarray, W: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Dense ``H_eff`` from unbatched environments ``L (Dl,wl,Dl)``, ``W (wl,d,d,wr)``, ``R (Dr,wr,Dr)``."""
    Dl, d, Dr = L.shape[0], W.shape[1], R.shape[0]
    H = np.einsum("awA,wsSv,cvC->ascASC", L, W, R, optimize=True)
    n = Dl * d * Dr
    return H.reshape(n, n)


def _single(mps: MpsState) -> None:
    if mps.batch != 1:
        raise ValueError("expected a single state (batch size 1)")


def pad_to(mps: MpsState, D: int) -> MpsState:
    """Embed a state into the bond dimensions allowed by ``D`` (never truncates).

    Extra bond directions carry zeros; re-canonicalizing by QR completes
    them to isometries without changing the state.
    """
    N, d = mps.N, mps.d
    bonds = [1] + max_bond_dims(N, D, d) + [1]
    tensors = []
    for k, t in enumerate(mps.tensors):
        B, Dl, _, Dr = t.shape
        if Dl > bonds[k] or Dr > bonds[k + 1]:
            raise ValueError(f"state bond ({Dl}, {Dr}) at site {k} exceeds D={D}")
        out = np.zeros((B, bonds[k], d, bonds[k + 1]), dtype=complex)
        out[:, :Dl, :, :Dr] = t
        tensors.append(out)
    return canonicalize(MpsState(tensors, mps.center, D), 0)


def _expand_right(A, L, W, alpha):
    """Enlarge the right bond of ``A`` by the projected action of ``H``, then truncate back."""
    B, Dl, d, Dr = A.shape
    wr = W.shape[4]
    # P[a, s, c, w'] = sum L[a, w, a'] W[w, s, s', w'] A[a', s', c]
    P = np.einsum("bawA,bwsSv,bASc->bascv", L, W, A, optimize=True).reshape(B, Dl * d, Dr * wr)
    M = np.concatenate([A.reshape(B, Dl * d, Dr), alpha * P], axis=2)
    U, S, Vh = np.linalg.svd(M, full_matrices=False)
    q = U[:, :, :Dr].reshape(B, Dl, d, Dr)
    carry = S[:, :Dr, None] * Vh[:, :Dr, :Dr]
    return q, carry


def _expand_left(A, W, R, alpha):
    B, Dl, d, Dr = A.shape
    wl = W.shape[1]
    # P[w, a, s, c] = sum W[w, s, s', w'] A[a, s', c'] R[c, w', c']
    P = np.einsum("bwsSv,baSC,bcvC->bwasc", W, A, R, optimize=True).reshape(B, wl * Dl, d * Dr)
    M = np.concatenate([A.reshape(B, Dl, d * Dr), alpha * P], axis=1)
    U, S, Vh = np.linalg.svd(M, full_matrices=False)
    q = Vh[:, :Dl, :].reshape(B, Dl, d, Dr)
    carry = U[:, :Dl, :Dl] * S[:, None, :Dl]
    return q, carry


def _local_ground(L, W, R, shape):
    H = heff_matrix(L[0], W[0], R[0])
    vals, vecs = np.linalg.eigh(H)
    return float(vals[0]), vecs[:, 0].reshape((1,) + shape)


def _sweep(mps: MpsState, W: Sequence[np.ndarray], alpha: float) -> float:
    """Right then left sweep; centre returns to site 0.  Returns the final local eigenvalue."""
    N = mps.N
    A = mps.tensors
    Rs = [None] * N
    Rs[N - 1] = trivial_env(1)
    for k in range(N - 1, 0, -1):
        Rs[k - 1] = right_env(Rs[k], A[k], W[k])
    Ls = [None] * N
    Ls[0] = trivial_env(1)
    for k in range(N - 1):
        _, A[k] = _local_ground(Ls[k], W[k], Rs[k], A[k].shape[1:])
        if alpha > 0:
            q, carry = _expand_right(A[k], Ls[k], W[k], alpha)
        else:
            Dl, d, Dr = A[k].shape[1:]
            qq, carry = np.linalg.qr(A[k].reshape(1, Dl * d, Dr))
            q = qq.reshape(1, Dl, d, Dr)
        A[k] = q
        A[k + 1] = np.einsum("bij,bjsk->bisk", carry, A[k + 1])
        Ls[k + 1] = left_env(Ls[k], q, W[k])
    for k in range(N - 1, 0, -1):
        _, A[k] = _local_ground(Ls[k], W[k], Rs[k], A[k].shape[1:])
        if alpha > 0:
            q, carry = _expand_left(A[k], W[k], Rs[k], alpha)
        else:
            Dl, d, Dr = A[k].shape[1:]
            qq, rr = np.linalg.qr(A[k].reshape(1, Dl, d * Dr).conj().transpose(0, 2, 1))
            q = qq.conj().transpose(0, 2, 1).reshape(1, Dl, d, Dr)
            carry = rr.conj().transpose(0, 2, 1)
        A[k] = q
        A[k - 1] = np.einsum("bisj,bjk->bisk", A[k - 1], carry)
        Rs[k - 1] = right_env(Rs[k], q, W[k])
    e, A[0] = _local_ground(Ls[0], W[0], Rs[0], A[0].shape[1:])
    mps.center = 0
    return e


def dmrg(W: Sequence[np.ndarray], D: int, guess: MpsState | None = None,
         max_sweeps: int = DMRG_SWEEPS, tol: float = DMRG_TOL, alpha: float = ALPHA0) -> DmrgResult:
    """Ground state of an MPO within bond dimension ``D``.

    Each sweep replaces every site tensor by the lowest eigenvector of its
    dense effective Hamiltonian.  While ``alpha > 0`` the bond moved across
    is first enlarged by ``alpha`` times the projected action of ``H``
    (subspace expansion) and truncated back, which lets the state leave
    bond-rank traps; ``alpha`` shrinks by ``ALPHA_DECAY`` per sweep and is
    switched off below ``ALPHA_MIN``.  A sweep that raises the energy is
    rolled back, so the recorded sweep energies never increase.  Iteration
    stops once a pure sweep (``alpha = 0``) changes the energy by less than
    ``tol``, or after ``max_sweeps`` sweeps (``converged=False``).

    Parameters
    ----------
    W : list of MPO tensors ``(1, wl, d, d, wr)``
    guess : MpsState, optional
        Warm start (batch size 1, any bond dimension up to ``D``); defaults
        to the product state ``|+>^N``.
    """
    N = len(W)
    d = W[0].shape[2]
    if guess is None:
        guess = product_mps([np.ones(d) / np.sqrt(d)] * N, D_max=D)
    _single(guess)
    if guess.N != N or guess.d != d:
        raise ValueError("MPO and state disagree on N or d")
    mps = pad_to(guess, D)
    best_e = float(mpo_expectation(mps, W)[0].real)
    best = mps.copy()
    energies = [best_e]
    delta = np.inf
    a = alpha
    for sweep in range(1, max_sweeps + 1):
        e = _sweep(mps, W, a)
        delta = best_e - e
        if e > best_e:
            # expansion overshoot: restore and keep going without it
            mps = best.copy()
            delta = 0.0 if a == 0 else np.inf
            a = 0.0
        else:
            best_e, best = e, mps.copy()
        energies.append(best_e)
        if a == 0 and abs(delta) < tol:
            return DmrgResult(best_e, best, True, sweep, float(abs(delta)), energies)
        a = a * ALPHA_DECAY if a * ALPHA_DECAY >= ALPHA_MIN else 0.0
    return DmrgResult(best_e, best, False, max_sweeps, float(abs(delta)), energies)


def _envs_at(mps: MpsState, W: Sequence[np.ndarray], site: int):
    L = trivial_env(mps.batch)
    for k in range(site):
        L = left_env(L, mps.tensors[k], W[k])
    R = trivial_env(mps.batch)
    for k in range(mps.N - 1, site, -1):
        R = right_env(R, mps.tensors[k], W[k])
    return L, R


def effective_hamiltonian(mps: MpsState, W: Sequence[np.ndarray], site: int | None = None,
                          index: int = 0) -> EffectiveHamiltonian:
    """``H_eff`` at ``site`` (default ``N // 2``) with the canonical centre moved there."""
    site = mps.N // 2 if site is None else site
    if not 0 <= site < mps.N:
        raise ValueError(f"site {site} outside 0..{mps.N - 1}")
    m = move_center(mps.select(index), site)
    Ws = [w[index if w.shape[0] > 1 else 0][None] for w in W]
    L, R = _envs_at(m, Ws, site)
    return EffectiveHamiltonian(site, heff_matrix(L[0], Ws[site][0], R[0]))


def effective_gap(mps: MpsState, W: Sequence[np.ndarray], site: int | None = None,
                  tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Gap of ``H_eff`` at ``site`` for every batch element, degenerate levels skipped."""
    out = np.empty(mps.batch)
    for b in range(mps.batch):
        h = effective_hamiltonian(mps, W, site, index=b)
        if h.dim < 2:
            raise VarAnnealError(f"insufficient effective space at site {h.site}")
        out[b] = gap_from_levels(np.linalg.eigvalsh(h.matrix), tol)
    return out
