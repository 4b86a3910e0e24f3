"""Open-boundary matrix product states with a leading batch axis.

Every tensor carries a batch axis ``B`` so that many independent states
(disorder instances, annealing times) are advanced by the same stacked
matmuls.  Index conventions:

* site tensor ``A``: ``(B, Dl, d, Dr)``
* MPO tensor ``W``: ``(B, wl, d_out, d_in, wr)`` (``B`` may be 1 and broadcast)
* left environment ``L``: ``(B, Dl_bra, wl, Dl_ket)``
* right environment ``R``: ``(B, Dr_bra, wr, Dr_ket)``
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exact import MAX_DIM, entropy_from_schmidt
from .models import Mpo

NORM_TOL = 1e-10


# --- contractions ---------------------------------------------------------------

def apply_site(A, L, W, R):
    """``H_eff A``: contract ``L W R`` with a site tensor."""
    B, Dl, d, Dr = A.shape
    wl, wr = W.shape[1], W.shape[4]
    Bw = W.shape[0]
    # T1[b, a', s', c, w'] = sum_c' A[b, a', s', c'] R[b, c, w', c']
    Rt = R.transpose(0, 3, 1, 2).reshape(R.shape[0], Dr, Dr * wr)
    T1 = np.matmul(A.reshape(B, Dl * d, Dr), Rt).reshape(B, Dl, d, Dr, wr)
    # T2[b, a', c, w, s] = sum_{s', w'} T1 W[b, w, s, s', w']
    T1 = T1.transpose(0, 1, 3, 2, 4).reshape(B, Dl * Dr, d * wr)
    Wt = W.transpose(0, 3, 4, 1, 2).reshape(Bw, d * wr, wl * d)
    T2 = np.matmul(T1, Wt).reshape(B, Dl, Dr, wl, d)
    # out[b, a, s, c] = sum_{w, a'} L[b, a, w, a'] T2[b, a', c, w, s]
    T2 = T2.transpose(0, 3, 1, 2, 4).reshape(B, wl * Dl, Dr * d)
    out = np.matmul(L.reshape(L.shape[0], Dl, wl * Dl), T2)
    return out.reshape(B, Dl, Dr, d).transpose(0, 1, 3, 2)


def apply_bond(C, L, R):
    """Zero-site ``H_eff C`` for a bond matrix ``C`` of shape ``(B, Dl, Dr)``."""
    B, Dl, Dr = C.shape
    w = L.shape[2]
    Rt = R.transpose(0, 3, 1, 2).reshape(R.shape[0], Dr, Dr * w)
    T = np.matmul(C, Rt).reshape(B, Dl, Dr, w).transpose(0, 3, 1, 2).reshape(B, w * Dl, Dr)
    return np.matmul(L.reshape(L.shape[0], Dl, w * Dl), T)


def left_env(L, A, W):
    """Extend a left environment by one site."""
    B, Dl, d, Dr = A.shape
    wl, wr = W.shape[1], W.shape[4]
    Bw = W.shape[0]
    T1 = np.matmul(L.reshape(L.shape[0], Dl * wl, Dl), A.reshape(B, Dl, d * Dr))
    T1 = T1.reshape(B, Dl, wl, d, Dr).transpose(0, 1, 4, 2, 3).reshape(B, Dl * Dr, wl * d)
    Wt = W.transpose(0, 1, 3, 2, 4).reshape(Bw, wl * d, d * wr)
    T2 = np.matmul(T1, Wt).reshape(B, Dl, Dr, d, wr).transpose(0, 1, 3, 2, 4).reshape(B, Dl * d, Dr * wr)
    out = np.matmul(A.reshape(B, Dl * d, Dr).conj().transpose(0, 2, 1), T2)
    return out.reshape(B, Dr, Dr, wr).transpose(0, 1, 3, 2)


def right_env(R, A, W):
    """Extend a right environment by one site."""
    B, Dl, d, Dr = A.shape
    wl, wr = W.shape[1], W.shape[4]
    Bw = W.shape[0]
    Rt = R.transpose(0, 3, 1, 2).reshape(R.shape[0], Dr, Dr * wr)
    T1 = np.matmul(A.reshape(B, Dl * d, Dr), Rt).reshape(B, Dl, d, Dr, wr)
    T1 = T1.transpose(0, 1, 3, 2, 4).reshape(B, Dl * Dr, d * wr)
    Wt = W.transpose(0, 3, 4, 1, 2).reshape(Bw, d * wr, wl * d)
    T2 = np.matmul(T1, Wt).reshape(B, Dl, Dr, wl, d).transpose(0, 1, 3, 4, 2).reshape(B, Dl * wl, d * Dr)
    out = np.matmul(A.reshape(B, Dl, d * Dr).conj(), T2.transpose(0, 2, 1))
    return out.reshape(B, Dl, Dl, wl).transpose(0, 1, 3, 2)


def trivial_env(B: int, dtype=complex) -> np.ndarray:
    return np.ones((B, 1, 1, 1), dtype=dtype)


# --- states ------------------------------------------------------------------------

@dataclass
class MpsState:
    """Batched open-boundary MPS with a single canonical centre.

    Tensors left of ``center`` are left-isometric, tensors right of it
    right-isometric; the norm sits in the centre tensor.
    """

    tensors: list
    center: int
    D_max: int

    @property
    def N(self) -> int:
        return len(self.tensors)

    @property
    def batch(self) -> int:
        return self.tensors[0].shape[0]

    @property
    def d(self) -> int:
        return self.tensors[0].shape[2]

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[3] for t in self.tensors[:-1]]

    def copy(self) -> "MpsState":
        return MpsState([t.copy() for t in self.tensors], self.center, self.D_max)

    def select(self, idx) -> "MpsState":
        """Sub-batch (index, slice or boolean mask)."""
        if isinstance(idx, (int, np.integer)):
            idx = [int(idx)]
        return MpsState([t[idx].copy() for t in self.tensors], self.center, self.D_max)

    def norm(self) -> np.ndarray:
        c = self.tensors[self.center]
        return np.sqrt(np.sum(np.abs(c) ** 2, axis=(1, 2, 3)))

    def isometry_residual(self) -> float:
        res = 0.0
        for k, t in enumerate(self.tensors):
            B, Dl, d, Dr = t.shape
            if k < self.center:
                m = t.reshape(B, Dl * d, Dr)
                g = np.matmul(m.conj().transpose(0, 2, 1), m)
                res = max(res, float(np.max(np.abs(g - np.eye(Dr)))))
            elif k > self.center:
                m = t.reshape(B, Dl, d * Dr)
                g = np.matmul(m, m.conj().transpose(0, 2, 1))
                res = max(res, float(np.max(np.abs(g - np.eye(Dl)))))
        return res


def max_bond_dims(N: int, D: int, d: int = 2) -> list[int]:
    """Largest useful bond dimension at each cut ``k = 1..N-1`` under cap ``D``."""
    return [min(D, d**k, d ** (N - k)) for k in range(1, N)]


def _qr_left(t: np.ndarray):
    B, Dl, d, Dr = t.shape
    q, r = np.linalg.qr(t.reshape(B, Dl * d, Dr))
    return q.reshape(B, Dl, d, q.shape[2]), r


def _qr_right(t: np.ndarray):
    """``t = r @ q`` with ``q`` right-isometric (LQ via QR of the adjoint)."""
    B, Dl, d, Dr = t.shape
    q, r = np.linalg.qr(t.reshape(B, Dl, d * Dr).conj().transpose(0, 2, 1))
    q = q.conj().transpose(0, 2, 1)
    r = r.conj().transpose(0, 2, 1)
    return q.reshape(B, q.shape[1], d, Dr), r


def move_center(mps: MpsState, target: int) -> MpsState:
    """Shift the canonical centre with QR steps (in place; returns ``mps``)."""
    ts = mps.tensors
    while mps.center < target:
        k = mps.center
        q, r = _qr_left(ts[k])
        ts[k] = q
        ts[k + 1] = np.einsum("bij,bjsk->bisk", r, ts[k + 1])
        mps.center += 1
    while mps.center > target:
        k = mps.center
        q, r = _qr_right(ts[k])
        ts[k] = q
        ts[k - 1] = np.einsum("bisj,bjk->bisk", ts[k - 1], r)
        mps.center -= 1
    return mps


def canonicalize(mps: MpsState, center: int = 0, normalize: bool = True) -> MpsState:
    """Bring an arbitrary MPS into mixed canonical form around ``center``."""
    mps.center = mps.N - 1
    move_center(mps, 0)
    move_center(mps, center)
    if normalize:
        nrm = mps.norm()
        mps.tensors[center] = mps.tensors[center] / nrm[:, None, None, None]
    return mps


def product_mps(local_states: Sequence, D_max: int = 1, N: int | None = None,
                batch: int = 1) -> MpsState:
    """Product state padded with zeros to the bond dimensions allowed by ``D_max``.

    ``local_states`` is a list of single-site vectors (or one vector repeated
    ``N`` times).  Padding lets the single-site integrator use the full bond
    space from the start; the padded state is exactly the product state.
    """
    if N is None:
        N = len(local_states)
        vecs = [np.asarray(v, dtype=complex) for v in local_states]
    else:
        vecs = [np.asarray(local_states, dtype=complex)] * N
    for v in vecs:
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("local states must be normalized")
    d = len(vecs[0])
    bonds = [1] + max_bond_dims(N, D_max, d) + [1]
    tensors = []
    for k, v in enumerate(vecs):
        t = np.zeros((batch, bonds[k], d, bonds[k + 1]), dtype=complex)
        t[:, 0, :, 0] = v
        tensors.append(t)
    mps = MpsState(tensors, 0, D_max)
    # complete the zero-padded bond spaces with orthonormal directions
    _fill_isometries(mps)
    return mps


def _fill_isometries(mps: MpsState) -> None:
    """Complete padded tensors right of the centre to exact right isometries.

    Row 0 of each reshaped tensor holds the physical content and is the only
    row the left neighbour couples to, so any orthonormal completion of the
    remaining rows leaves the represented state unchanged.
    """
    for k in range(1, mps.N):
        t = mps.tensors[k]
        B, Dl, d, Dr = t.shape
        if Dl == 1:
            continue
        n = d * Dr
        r = t.reshape(B, Dl, n)[:, 0, :]
        basis = np.broadcast_to(np.eye(n, dtype=complex), (B, n, n)).copy()
        basis[:, :, 0] = r
        q, _ = np.linalg.qr(basis)
        full = np.empty((B, Dl, n), dtype=complex)
        full[:, 0, :] = r
        full[:, 1:, :] = q[:, :, 1:Dl].transpose(0, 2, 1)
        mps.tensors[k] = full.reshape(B, Dl, d, Dr)


def mps_to_dense(mps: MpsState) -> np.ndarray:
    """Full state vectors, shape ``(B, d^N)``."""
    if mps.d**mps.N > MAX_DIM:
        raise ValueError(f"dense dimension {mps.d ** mps.N} exceeds 2^14")
    B = mps.batch
    acc = mps.tensors[0].reshape(B, -1, mps.tensors[0].shape[3])
    for t in mps.tensors[1:]:
        _, Dl, d, Dr = t.shape
        acc = np.matmul(acc, t.reshape(B, Dl, d * Dr)).reshape(B, -1, Dr)
    return acc[:, :, 0]


def overlap(a: MpsState, b: MpsState) -> np.ndarray:
    """``<a|b>`` by transfer matrices, per batch element."""
    B = max(a.batch, b.batch)
    E = np.ones((B, 1, 1), dtype=complex)
    for ta, tb in zip(a.tensors, b.tensors):
        # E[b, i, j] -> sum conj(ta[i, s, k]) E[i, j] tb[j, s, l]
        T = np.einsum("bij,bjsl->bisl", E, tb)
        E = np.einsum("bisk,bisl->bkl", ta.conj(), T)
    return E[:, 0, 0]


def schmidt_values(mps: MpsState, cut: int) -> np.ndarray:
    """Singular values across ``cut`` (between sites ``cut-1`` and ``cut``); ``(B, D)``."""
    if not 1 <= cut <= mps.N - 1:
        raise ValueError(f"cut {cut} outside 1..{mps.N - 1}")
    m = move_center(mps.copy(), cut - 1)
    t = m.tensors[cut - 1]
    B, Dl, d, Dr = t.shape
    return np.linalg.svd(t.reshape(B, Dl * d, Dr), compute_uv=False)


def mps_entropy(mps: MpsState, cut: int) -> np.ndarray:
    """Von Neumann entropy at ``cut`` for each batch element."""
    sv = schmidt_values(mps, cut)
    return np.array([entropy_from_schmidt(row) for row in sv])


def mpo_tensors(mpo: Mpo | Sequence[np.ndarray]) -> list[np.ndarray]:
    """MPO site tensors with a leading batch axis of size 1."""
    ts = mpo.tensors if isinstance(mpo, Mpo) else mpo
    return [t[None] if t.ndim == 4 else t for t in ts]


def mpo_expectation(mps: MpsState, W: Sequence[np.ndarray]) -> np.ndarray:
    L = trivial_env(mps.batch)
    for A, w in zip(mps.tensors, W):
        L = left_env(L, A, w)
    return L[:, 0, 0, 0]


def from_dense(psi: np.ndarray, N: int, D: int, d: int = 2) -> MpsState:
    """Compress state vectors ``(B, d^N)`` by successive truncated SVDs (centre at N-1)."""
    psi = np.atleast_2d(np.asarray(psi, dtype=complex))
    B = psi.shape[0]
    bonds = [1] + max_bond_dims(N, D, d) + [1]
    tensors = []
    rest = psi.reshape(B, 1, -1)
    for k in range(N - 1):
        Dl = rest.shape[1]
        m = rest.reshape(B, Dl * d, -1)
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        keep = bonds[k + 1]
        u, s, vh = u[:, :, :keep], s[:, :keep], vh[:, :keep, :]
        if u.shape[2] < keep:
            pad = keep - u.shape[2]
            u = np.concatenate([u, np.zeros((B, u.shape[1], pad), dtype=complex)], axis=2)
            s = np.concatenate([s, np.zeros((B, pad))], axis=1)
            vh = np.concatenate([vh, np.zeros((B, pad, vh.shape[2]), dtype=complex)], axis=1)
        tensors.append(u.reshape(B, Dl, d, keep))
        rest = s[:, :, None] * vh
    tensors.append(rest.reshape(B, rest.shape[1], d, 1))
    mps = MpsState(tensors, N - 1, D)
    return canonicalize(mps, N - 1)


# --- checkpoints -------------------------------------------------------------------

_MAGIC = b"VAMPS001"


def write_checkpoint(mps: MpsState, path, index: int = 0) -> None:
    """Binary layout, little-endian.

    ``magic(8) | N:u32 | center:u32 | D_max:u32`` then per site
    ``Dl:u32 | d:u32 | Dr:u32`` followed by ``Dl*d*Dr`` complex128 entries in
    row-major (Dl, d, Dr) order.  One batch element is written.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", mps.N, mps.center, mps.D_max))
        for t in mps.tensors:
            a = np.ascontiguousarray(t[index], dtype="<c16")
            fh.write(struct.pack("<III", *a.shape))
            fh.write(a.tobytes(order="C"))


def read_checkpoint(path) -> MpsState:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not an MPS checkpoint")
        N, center, D = struct.unpack("<III", fh.read(12))
        tensors = []
        for _ in range(N):
            Dl, d, Dr = struct.unpack("<III", fh.read(12))
            n = Dl * d * Dr
            buf = fh.read(16 * n)
            if len(buf) != 16 * n:
                raise ValueError("truncated checkpoint")
            tensors.append(np.frombuffer(buf, dtype="<c16").reshape(1, Dl, d, Dr).astype(complex))
    return MpsState(tensors, center, D)
