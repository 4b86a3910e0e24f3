"""Annealing Hamiltonians ``H(s) = (1-s) H0 + s H1 + s(1-s) H2``.

Four families are provided: a two-qubit toy model with an entangling
catalyst, its bipartite generalization with local dimension ``N + 2``, the
Lipkin-Meshkov-Glick model and a fully connected random Ising spin glass.
The spin glass also has an exact matrix product operator.
"""

from __future__ import annotations

import enum
import io
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .exact import (DenseOperator, I2, SX, SZ, operator_from, site_operator,
                    z_configurations)


class Model(enum.Enum):
    TWO_QUBIT = "twoqubit"
    BIPARTITE = "bipartite"
    LMG = "lmg"
    SPIN_GLASS = "spinglass"

    @classmethod
    def parse(cls, tag) -> "Model":
        if isinstance(tag, cls):
            return tag
        key = str(tag).lower().replace("_", "").replace("-", "")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown model tag {tag!r}")


@dataclass(frozen=True, eq=False)
class SpinGlassInstance:
    """Disorder realization ``J`` (symmetric, zero diagonal) and ``h``."""

    N: int
    J: np.ndarray
    h: np.ndarray
    seed: int = 0

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        h = np.asarray(self.h, dtype=float)
        if J.shape != (self.N, self.N) or h.shape != (self.N,):
            raise ValueError("J must be N x N and h of length N")
        if not np.array_equal(J, J.T) or np.any(np.diag(J) != 0):
            raise ValueError("J must be symmetric with zero diagonal")
        J.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "h", h)

    def energies(self, z: np.ndarray) -> np.ndarray:
        """Classical energies ``-sum_{i,j} J_ij z_i z_j + sum_i h_i z_i`` for rows of ``z``."""
        z = np.asarray(z, dtype=float)
        return -np.einsum("bi,ij,bj->b", z, self.J, z) + z @ self.h

    def __eq__(self, other):
        return (isinstance(other, SpinGlassInstance) and self.N == other.N
                and np.array_equal(self.J, other.J) and np.array_equal(self.h, other.h))

    __hash__ = None


def _open_draw(rng: np.random.Generator) -> float:
    # uniform on the open interval (0, 1)
    while True:
        x = rng.random()
        if x > 0.0:
            return x


def sample_spin_glass(N: int, seed: int) -> SpinGlassInstance:
    """Draw an instance with PCG64 seeded by ``seed``.

    Draw order: the strict upper triangle of ``J`` row by row, then ``h``.
    Every draw is uniform on (0, 1); ``h_i = u - 0.5``.
    """
    if N < 2:
        raise ValueError("spin glass needs N >= 2")
    rng = np.random.default_rng(int(seed))
    J = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            J[i, j] = J[j, i] = _open_draw(rng)
    h = np.array([_open_draw(rng) - 0.5 for _ in range(N)])
    return SpinGlassInstance(N, J, h, int(seed))


def write_instance(inst: SpinGlassInstance, target) -> None:
    """Write the plain-text coefficient file (path or text stream)."""
    lines = [f"{inst.N} {inst.seed}"]
    for i in range(inst.N):
        for j in range(i + 1, inst.N):
            lines.append(f"{i} {j} {inst.J[i, j]:.17g}")
    for i in range(inst.N):
        lines.append(f"{i} {inst.h[i]:.17g}")
    text = "\n".join(lines) + "\n"
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", newline="\n") as fh:
            fh.write(text)
    else:
        target.write(text)


def read_instance(source) -> SpinGlassInstance:
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            text = fh.read()
    else:
        text = source.read()
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    N, seed = int(rows[0][0]), int(rows[0][1])
    npair = N * (N - 1) // 2
    if len(rows) != 1 + npair + N:
        raise ValueError(f"expected {1 + npair + N} lines for N={N}, got {len(rows)}")
    J = np.zeros((N, N))
    for r in rows[1:1 + npair]:
        i, j, v = int(r[0]), int(r[1]), float(r[2])
        J[i, j] = J[j, i] = v
    h = np.zeros(N)
    for r in rows[1 + npair:]:
        h[int(r[0])] = float(r[1])
    return SpinGlassInstance(N, J, h, seed)


def instance_to_text(inst: SpinGlassInstance) -> str:
    buf = io.StringIO()
    write_instance(inst, buf)
    return buf.getvalue()


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    """A model together with its three protocol terms.

    ``H0``, ``H1``, ``H2`` are stored as CSR matrices; ``H2`` is ``None``
    when the model has no catalyst.
    """

    model: Model
    N: int
    local_dims: tuple[int, ...]
    H0: sp.csr_matrix
    H1: sp.csr_matrix
    H2: sp.csr_matrix | None = None
    A: float = 0.0
    instance: SpinGlassInstance | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    def coefficients(self, s: float) -> tuple[float, float, float]:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"s = {s} outside [0, 1]")
        return 1.0 - s, s, s * (1.0 - s)

    def matrix_at(self, s: float) -> sp.csr_matrix:
        a, b, c = self.coefficients(s)
        m = a * self.H0 + b * self.H1
        if self.H2 is not None and c != 0.0:
            m = m + c * self.H2
        return sp.csr_matrix(m)

    def hamiltonian_at(self, s: float) -> DenseOperator:
        return operator_from(self.matrix_at(s), self.local_dims)

    def apply(self, s: float, psi: np.ndarray) -> np.ndarray:
        """``H(s) @ psi`` without assembling ``H(s)``."""
        a, b, c = self.coefficients(s)
        out = a * (self.H0 @ psi) + b * (self.H1 @ psi)
        if self.H2 is not None and c != 0.0:
            out += c * (self.H2 @ psi)
        return out

    def initial_state(self) -> np.ndarray:
        """Ground state of ``H0``: every site in ``(|0> + |1>)/sqrt(2)``."""
        psi = np.ones(1, dtype=complex)
        for d in self.local_dims:
            v = np.zeros(d, dtype=complex)
            v[:2] = 1 / math.sqrt(2)
            psi = np.kron(psi, v)
        return psi

    def energy(self, s: float, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.apply(s, psi)).real)


def hamiltonian_at(spec: ProtocolSpec, s: float) -> DenseOperator:
    return spec.hamiltonian_at(s)


def _two_level(d: int) -> tuple[np.ndarray, np.ndarray]:
    """``X01`` and ``Z01`` acting on the first two levels of a ``d``-level system."""
    x = np.zeros((d, d), dtype=complex)
    z = np.zeros((d, d), dtype=complex)
    x[0, 1] = x[1, 0] = 1.0
    z[0, 0], z[1, 1] = 1.0, -1.0
    return x, z


def _transverse_field(local_dims: Sequence[int], x_ops: Sequence[np.ndarray]) -> sp.csr_matrix:
    dim = math.prod(local_dims)
    h0 = sp.csr_matrix((dim, dim), dtype=complex)
    for k, x in enumerate(x_ops):
        h0 = h0 - site_operator(x, k, local_dims)
    return h0


def _bipartite_terms(n_extra: int, A: float):
    d = n_extra + 2
    dims = (d, d)
    x, z = _two_level(d)
    Id = np.eye(d, dtype=complex)
    h0 = _transverse_field(dims, [x, x])
    h1 = sp.csr_matrix(np.kron(z, z) - 2 * (np.kron(z, Id) + np.kron(Id, z)))
    psi_plus = np.zeros(d * d, dtype=complex)
    psi_plus[np.arange(d) * (d + 1)] = 1 / math.sqrt(d)
    h2 = sp.csr_matrix(-A * d * np.outer(psi_plus, psi_plus.conj()))
    return dims, h0, h1, h2


def build_protocol(tag, N: int | None = None, params: dict | None = None, **kwargs) -> ProtocolSpec:
    """Build the protocol for one model.

    Parameters
    ----------
    tag : Model or str
        ``twoqubit``, ``bipartite``, ``lmg`` or ``spinglass``.
    N : int
        System size.  Ignored for the two-qubit model; for the bipartite
        model it is the number of extra levels per subsystem.
    params : dict, optional
        ``A`` (catalyst strength, default 0) and ``instance`` (a
        :class:`SpinGlassInstance`; drawn from ``seed`` if absent).
    """
    model = Model.parse(tag)
    p = dict(params or {})
    p.update(kwargs)
    A = float(p.get("A", 0.0))
    if A < 0:
        raise ValueError("catalyst strength A must be non-negative")

    if model is Model.TWO_QUBIT:
        dims, h0, h1, h2 = _bipartite_terms(0, A)
        return ProtocolSpec(model, 2, dims, h0, h1, h2 if A else None, A)

    if N is None:
        raise ValueError(f"{model.value} requires N")
    if model is Model.BIPARTITE:
        if N < 0:
            raise ValueError("bipartite model needs N >= 0")
        dims, h0, h1, h2 = _bipartite_terms(N, A)
        return ProtocolSpec(model, N, dims, h0, h1, h2 if A else None, A)

    if N < 1:
        raise ValueError("N must be at least 1")
    dims = (2,) * N
    h0 = _transverse_field(dims, [SX] * N)
    z = z_configurations(N)
    if model is Model.LMG:
        mag = z.sum(axis=1)
        h1 = sp.diags(-(mag**2) / N, format="csr").astype(complex)
        return ProtocolSpec(model, N, dims, h0, h1)

    inst = p.get("instance")
    if inst is None:
        inst = sample_spin_glass(N, int(p.get("seed", 0)))
    if inst.N != N:
        raise ValueError(f"instance has N={inst.N}, expected {N}")
    h1 = sp.diags(inst.energies(z), format="csr").astype(complex)
    return ProtocolSpec(model, N, dims, h0, h1, None, 0.0, inst)


# --- matrix product operators ------------------------------------------------

@dataclass(frozen=True, eq=False)
class Mpo:
    """Open-boundary MPO; site tensors indexed ``(left, phys_out, phys_in, right)``."""

    tensors: tuple[np.ndarray, ...]

    def __post_init__(self):
        ts = self.tensors
        if ts[0].shape[0] != 1 or ts[-1].shape[3] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for a, b in zip(ts[:-1], ts[1:]):
            if a.shape[3] != b.shape[0]:
                raise ValueError("adjacent bond dimensions disagree")

    @property
    def N(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        """Bond dimension at each interior cut ``k = 1 .. N-1``."""
        return [t.shape[3] for t in self.tensors[:-1]]

    def to_dense(self) -> np.ndarray:
        acc = self.tensors[0][0]  # (out, in, right)
        for w in self.tensors[1:]:
            o, i, _ = acc.shape
            acc = np.einsum("abr,rcdx->acbdx", acc, w).reshape(o * w.shape[1], i * w.shape[2], w.shape[3])
        return acc[:, :, 0]

    def matrix_element(self, bra: Sequence[int], ket: Sequence[int]) -> complex:
        vec = np.ones(1, dtype=complex)
        for w, b, k in zip(self.tensors, bra, ket):
            vec = vec @ w[:, b, k, :]
        return complex(vec[0])


def _cut_layout(N: int, k: int) -> tuple[str, list[int]]:
    """Channel labels at cut ``k``: sites still open (``L``) or pending partners (``R``)."""
    if k <= N - k:
        return "L", list(range(k))
    return "R", list(range(k, N))


def spin_glass_mpo_parts(inst: SpinGlassInstance) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Tensors ``(Wc, Wx, W1)`` with ``W(s) = Wc + (1-s) Wx + s W1`` site by site.

    Bond index 0 means "no term started", the last index "term finished";
    in between sit the open channels of :func:`_cut_layout`.  The coupling
    ``-sum_{i != j} J_ij z_i z_j`` is carried with weight ``-2 J_ij`` per
    unordered pair.
    """
    N = inst.N
    c = -2.0 * inst.J
    zero = np.zeros((2, 2), dtype=complex)
    parts = ([], [], [])
    for k in range(N):
        tl, chl = _cut_layout(N, k)
        tr, chr_ = _cut_layout(N, k + 1)
        wl, wr = len(chl) + 2, len(chr_) + 2
        Wc = np.zeros((wl, 2, 2, wr), dtype=complex)
        Wx = np.zeros_like(Wc)
        W1 = np.zeros_like(Wc)
        done_l, done_r = wl - 1, wr - 1
        Wc[0, :, :, 0] = I2
        Wc[done_l, :, :, done_r] = I2
        Wx[0, :, :, done_r] = -SX
        W1[0, :, :, done_r] = inst.h[k] * SZ
        rpos = {lab: 1 + n for n, lab in enumerate(chr_)}
        for n, a in enumerate(chl):
            row = 1 + n
            if tl == "L":
                # channel carries z_a
                W1[row, :, :, done_r] += c[a, k] * SZ
                if tr == "L":
                    Wc[row, :, :, rpos[a]] = I2
                else:
                    for j in chr_:
                        W1[row, :, :, rpos[j]] += c[a, j] * I2
            else:
                # channel carries f_a = sum_{i<k} c_ia z_i
                if a == k:
                    Wc[row, :, :, done_r] += SZ
                else:
                    Wc[row, :, :, rpos[a]] = I2
        if tr == "L":
            Wc[0, :, :, rpos[k]] = SZ
        else:
            for j in chr_:
                W1[0, :, :, rpos[j]] += c[k, j] * SZ
        if k == 0:
            Wc, Wx, W1 = Wc[:1], Wx[:1], W1[:1]
        if k == N - 1:
            Wc, Wx, W1 = Wc[..., -1:], Wx[..., -1:], W1[..., -1:]
        for lst, w in zip(parts, (Wc, Wx, W1)):
            lst.append(w)
    return parts


def spin_glass_mpo(inst: SpinGlassInstance, s: float) -> Mpo:
    """Exact MPO of ``(1-s) H0 + s H1``; bond ``min(k, N-k) + 2`` at cut ``k``."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s = {s} outside [0, 1]")
    Wc, Wx, W1 = spin_glass_mpo_parts(inst)
    return Mpo(tuple(a + (1 - s) * b + s * c for a, b, c in zip(Wc, Wx, W1)))
