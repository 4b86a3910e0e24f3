"""Compiled single-instance TDVP anneal.

Same algorithm as :func:`varanneal.tdvp.tdvp_step` (symmetric single-site
projector splitting, midpoint MPO, Lanczos exponentials), run entirely
inside numba for one state at a time.  The batched numpy engine pays a
fixed Python cost per Lanczos iteration, which dominates at ``D <= 16``;
here that cost disappears.  Tensors drop the batch axis:

* site ``A``: ``(Dl, d, Dr)``; MPO ``W``: ``(wl, d_out, d_in, wr)``
* ``L``: ``(Dl_bra, wl, Dl_ket)``; ``R``: ``(Dr_bra, wr, Dr_ket)``
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numba.typed import List

_CUBE = 2.0 ** (1.0 / 3.0)
_TJ = np.array([1.0 / (2.0 - _CUBE), -_CUBE / (2.0 - _CUBE), 1.0 / (2.0 - _CUBE)])


@njit(cache=True)
def _c(a):
    return np.ascontiguousarray(a)


@njit(cache=True)
def _site_apply(A, L, Wt, R):
    """``Wt`` is ``W`` pre-transposed to ``(d_in * wr, wl * d_out)``."""
    Dl, d, Dr = A.shape
    wr = R.shape[1]
    wl = L.shape[1]
    Rt = _c(R.transpose(2, 0, 1)).reshape(Dr, Dr * wr)
    T1 = np.dot(_c(A).reshape(Dl * d, Dr), Rt).reshape(Dl, d, Dr, wr)
    T1 = _c(T1.transpose(0, 2, 1, 3)).reshape(Dl * Dr, d * wr)
    T2 = np.dot(T1, Wt).reshape(Dl, Dr, wl, d)
    T2 = _c(T2.transpose(2, 0, 1, 3)).reshape(wl * Dl, Dr * d)
    out = np.dot(_c(L).reshape(Dl, wl * Dl), T2).reshape(Dl, Dr, d)
    return _c(out.transpose(0, 2, 1))


@njit(cache=True)
def _bond_apply(C, L, R):
    Dl, Dr = C.shape
    w = L.shape[1]
    Rt = _c(R.transpose(2, 0, 1)).reshape(Dr, Dr * w)
    T = np.dot(C, Rt).reshape(Dl, Dr, w)
    T = _c(T.transpose(2, 0, 1)).reshape(w * Dl, Dr)
    return np.dot(_c(L).reshape(Dl, w * Dl), T)


@njit(cache=True)
def _left_env(L, A, W):
    Dl, d, Dr = A.shape
    wl, wr = W.shape[0], W.shape[3]
    T1 = np.dot(_c(L).reshape(Dl * wl, Dl), _c(A).reshape(Dl, d * Dr)).reshape(Dl, wl, d, Dr)
    T1 = _c(T1.transpose(0, 3, 1, 2)).reshape(Dl * Dr, wl * d)
    Wt = _c(W.transpose(0, 2, 1, 3)).reshape(wl * d, d * wr)
    T2 = np.dot(T1, Wt).reshape(Dl, Dr, d, wr)
    T2 = _c(T2.transpose(0, 2, 1, 3)).reshape(Dl * d, Dr * wr)
    out = np.dot(_c(A).reshape(Dl * d, Dr).conj().T, T2).reshape(Dr, Dr, wr)
    return _c(out.transpose(0, 2, 1))


@njit(cache=True)
def _right_env(R, A, Wt):
    Dl, d, Dr = A.shape
    wr = R.shape[1]
    wl = Wt.shape[1] // d
    Rt = _c(R.transpose(2, 0, 1)).reshape(Dr, Dr * wr)
    T1 = np.dot(_c(A).reshape(Dl * d, Dr), Rt).reshape(Dl, d, Dr, wr)
    T1 = _c(T1.transpose(0, 2, 1, 3)).reshape(Dl * Dr, d * wr)
    T2 = np.dot(T1, Wt).reshape(Dl, Dr, wl, d)
    T2 = _c(T2.transpose(0, 2, 3, 1)).reshape(Dl * wl, d * Dr)
    out = np.dot(_c(A).reshape(Dl, d * Dr).conj(), _c(T2.T)).reshape(Dl, Dl, wl)
    return _c(out.transpose(0, 2, 1))


@njit(cache=True)
def _expm(mode, x, L, Wt, R, tau, tol, m_max):
    """``exp(tau H_eff) x`` by Lanczos; ``mode`` 0 = site, 1 = bond.

    ``x`` is always 3-D; a bond matrix travels as ``(Dl, 1, Dr)``.

    Returns the result and the final error estimate (``inf`` if it did not
    converge within ``m_max`` iterations).
    """
    shape = x.shape
    v = _c(x).ravel()
    n = v.size
    beta0 = np.sqrt(np.sum(v.real ** 2 + v.imag ** 2))
    if beta0 == 0.0 or tau == 0.0:
        return _c(x).copy(), 0.0
    kmax = min(m_max, n)
    V = np.empty((kmax + 1, n), dtype=np.complex128)
    V[0] = v / beta0
    T = np.zeros((kmax, kmax))
    atau = abs(tau)
    taylor = beta0
    err = np.inf
    coeff = np.zeros(1, dtype=np.complex128)
    for j in range(kmax):
        if mode == 0:
            w = _site_apply(V[j].reshape(shape), L, Wt, R).ravel()
        else:
            w = _bond_apply(_c(V[j]).reshape(shape[0], shape[2]), L, R).ravel()
        Vj = V[: j + 1]
        h = np.dot(Vj.conj(), w)
        T[j, j] = h[j].real
        w = w - np.dot(h, Vj)
        w = w - np.dot(np.dot(Vj.conj(), w), Vj)
        b = np.sqrt(np.sum(w.real ** 2 + w.imag ** 2))
        if b < 1e-13 * max(abs(T[j, j]), 1.0):
            b = 0.0
        taylor = taylor * b * atau / (j + 1)
        last = j + 1 == kmax
        if last or taylor < tol:
            lam, U = np.linalg.eigh(T[: j + 1, : j + 1].copy())
            coeff = np.dot(U.astype(np.complex128), np.exp(tau * lam) * U[0])
            err = b * abs(coeff[j]) * beta0
            if j + 1 == n or err < tol:
                out = np.dot(coeff, V[: j + 1]) * beta0
                return out.reshape(shape), err
        if not last:
            T[j, j + 1] = b
            T[j + 1, j] = b
            if b > 0.0:
                V[j + 1] = w / b
    out = np.dot(coeff, V[: coeff.size]) * beta0
    return out.reshape(shape), np.inf


@njit(cache=True)
def _site_wt(W):
    wl, d, _, wr = W.shape
    return _c(W.transpose(2, 3, 0, 1)).reshape(d * wr, wl * d)


@njit(cache=True)
def _sweep_step(As, Ws, dt, tol, m_max):
    """One symmetric step; centre at site 0 on entry and exit.  Returns the worst Krylov error."""
    N = len(As)
    Wts = List()
    for k in range(N):
        Wts.append(_site_wt(Ws[k]))
    Rs = List()
    Ls = List()
    one = np.ones((1, 1, 1), dtype=np.complex128)
    for k in range(N):
        Rs.append(one)
        Ls.append(one)
    for k in range(N - 1, 0, -1):
        Rs[k - 1] = _right_env(Rs[k], As[k], Wts[k])
    fwd = -0.5j * dt
    bwd = 0.5j * dt
    worst = 0.0
    for k in range(N):
        A, e = _expm(0, As[k], Ls[k], Wts[k], Rs[k], fwd, tol, m_max)
        worst = max(worst, e)
        if k < N - 1:
            Dl, d, Dr = A.shape
            q, r = np.linalg.qr(A.reshape(Dl * d, Dr))
            As[k] = _c(q).reshape(Dl, d, Dr)
            Ls[k + 1] = _left_env(Ls[k], As[k], Ws[k])
            C, e = _expm(1, _c(r).reshape(Dr, 1, Dr), Ls[k + 1], Wts[k], Rs[k], bwd, tol, m_max)
            C = C.reshape(Dr, Dr)
            worst = max(worst, e)
            nxt = As[k + 1]
            a, s2, b2 = nxt.shape
            As[k + 1] = np.dot(C, _c(nxt).reshape(a, s2 * b2)).reshape(a, s2, b2)
        else:
            As[k] = A
    for k in range(N - 1, -1, -1):
        A, e = _expm(0, As[k], Ls[k], Wts[k], Rs[k], fwd, tol, m_max)
        worst = max(worst, e)
        if k > 0:
            Dl, d, Dr = A.shape
            q, r = np.linalg.qr(_c(A.reshape(Dl, d * Dr).conj().T))
            As[k] = _c(q.conj().T).reshape(Dl, d, Dr)
            Rs[k - 1] = _right_env(Rs[k], As[k], Wts[k])
            C, e = _expm(1, _c(r.conj().T).reshape(Dl, 1, Dl), Ls[k], Wts[k], Rs[k - 1], bwd, tol, m_max)
            C = C.reshape(Dl, Dl)
            worst = max(worst, e)
            prv = As[k - 1]
            a, s2, b2 = prv.shape
            As[k - 1] = np.dot(_c(prv).reshape(a * s2, b2), C).reshape(a, s2, b2)
        else:
            As[k] = A
    return worst


@njit(cache=True)
def _mpo(Wc, Wx, W1, s):
    out = List()
    for k in range(len(Wc)):
        out.append(Wc[k] + (1.0 - s) * Wx[k] + s * W1[k])
    return out


@njit(cache=True)
def _pack(As, buf):
    pos = 0
    for k in range(len(As)):
        a = _c(As[k]).ravel()
        buf[pos: pos + a.size] = a
        pos += a.size


@njit(cache=True)
def anneal_single(As, Wc, Wx, W1, T, n, stride, order, tol, m_max, keep_all):
    """Anneal one state with ``n`` equal steps in s; record every ``stride`` steps.

    Returns ``(snapshots, norm_drift, worst_krylov_error)``; ``snapshots`` has
    one packed row per recorded point (all rows when ``keep_all``, else the
    final state only).
    """
    size = 0
    for k in range(len(As)):
        size += As[k].size
    rows = n // stride + 1 if keep_all else 1
    snaps = np.zeros((rows, size), dtype=np.complex128)
    if keep_all:
        _pack(As, snaps[0])
    h = 1.0 / n
    drift = 0.0
    worst = 0.0
    for k in range(n):
        s0 = k * h
        if order == 2:
            Ws = _mpo(Wc, Wx, W1, s0 + 0.5 * h)
            worst = max(worst, _sweep_step(As, Ws, h * T, tol, m_max))
        else:
            off = 0.0
            for g in _TJ:
                Ws = _mpo(Wc, Wx, W1, s0 + (off + 0.5 * g) * h)
                worst = max(worst, _sweep_step(As, Ws, g * h * T, tol, m_max))
                off += g
        c = As[0]
        nrm = np.sqrt(np.sum(c.real ** 2 + c.imag ** 2))
        drift = max(drift, abs(nrm - 1.0))
        if keep_all and (k + 1) % stride == 0:
            _pack(As, snaps[(k + 1) // stride])
    if not keep_all:
        _pack(As, snaps[0])
    return snaps, drift, worst
