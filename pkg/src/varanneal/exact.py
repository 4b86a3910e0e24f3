"""Dense linear algebra on small Hilbert spaces.

Operator construction helpers, eigensolving, fixed-step Schrodinger
propagation in rescaled time, entanglement entropy and global-phase-robust
state distances.  Everything variational in this package is checked against
these routines.

Qubit convention: ``sigma_z |0> = +|0>``, ``sigma_x |0> = |1>``, and site 0 is
the most significant factor of the tensor product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, FlatSpectrumError, NonHermitianError

HERMITIAN_TOL = 1e-12
DEGENERACY_TOL = 1e-9
DENSE_LIMIT = 4096
MAX_DIM = 2**14

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def _hermiticity_residual(m) -> float:
    if sp.issparse(m):
        d = (m - m.conj().T).tocoo()
        return float(np.max(np.abs(d.data))) if d.nnz else 0.0
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Hermitian operator on a tensor-product space.

    ``matrix`` is a dense array up to dimension 4096 and a CSR matrix above
    that; both forms support ``@`` on state vectors.
    """

    matrix: np.ndarray | sp.csr_matrix
    local_dims: tuple[int, ...]

    def __post_init__(self):
        dim = self.matrix.shape[0]
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"operator must be square, got {self.matrix.shape}")
        if math.prod(self.local_dims) != dim:
            raise ValueError(f"local dims {self.local_dims} do not multiply to {dim}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def hermiticity_residual(self) -> float:
        return _hermiticity_residual(self.matrix)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def __matmul__(self, vec):
        return self.matrix @ vec

    def expectation(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.matrix @ psi).real)


def operator_from(matrix, local_dims: Sequence[int]) -> DenseOperator:
    """Wrap ``matrix`` choosing dense or sparse storage by dimension."""
    dim = matrix.shape[0]
    if dim > DENSE_LIMIT:
        matrix = sp.csr_matrix(matrix)
    elif sp.issparse(matrix):
        matrix = matrix.toarray()
    return DenseOperator(matrix, tuple(int(d) for d in local_dims))


def site_operator(op: np.ndarray, site: int, local_dims: Sequence[int]) -> sp.csr_matrix:
    """Embed a local operator acting on ``site`` into the full space."""
    left = math.prod(local_dims[:site])
    right = math.prod(local_dims[site + 1:])
    return sp.kron(sp.kron(sp.identity(left, format="csr"), sp.csr_matrix(op)),
                   sp.identity(right, format="csr"), format="csr")


def z_configurations(n_sites: int) -> np.ndarray:
    """Spin values ``z[b, i] in {+1, -1}`` for every computational basis index ``b``."""
    idx = np.arange(2**n_sites)
    bits = (idx[:, None] >> np.arange(n_sites - 1, -1, -1)[None, :]) & 1
    return 1 - 2 * bits


def product_state(local_states: Sequence[np.ndarray]) -> np.ndarray:
    psi = np.ones(1, dtype=complex)
    for v in local_states:
        psi = np.kron(psi, np.asarray(v, dtype=complex))
    return psi


def _check_hermitian(H: DenseOperator) -> None:
    res = H.hermiticity_residual()
    if res >= HERMITIAN_TOL:
        raise NonHermitianError(res)


def _lowest(H: DenseOperator, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``k`` eigenpairs (all of them for dense operators)."""
    if H.dim > MAX_DIM:
        raise ValueError(f"dimension {H.dim} exceeds the supported 2^14")
    if not H.is_sparse:
        return np.linalg.eigh(H.toarray())
    k = min(k, H.dim - 2)
    try:
        vals, vecs = spla.eigsh(H.matrix, k=k, which="SA", tol=1e-10, maxiter=20 * H.dim)
    except spla.ArpackNoConvergence as exc:
        vals, vecs = exc.eigenvalues, exc.eigenvectors
        res = np.linalg.norm(H.matrix @ vecs - vecs * vals) if len(vals) else float("inf")
        raise ConvergenceError("Lanczos eigensolver did not converge", res) from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def ground_state(H: DenseOperator) -> tuple[float, np.ndarray, int]:
    """Ground energy, a unit ground vector and the ground degeneracy of ``H``."""
    _check_hermitian(H)
    k = 6
    while True:
        vals, vecs = _lowest(H, k)
        deg = int(np.sum(vals - vals[0] < DEGENERACY_TOL))
        if deg < len(vals) or len(vals) == H.dim or not H.is_sparse:
            break
        k *= 2
    psi = vecs[:, 0].astype(complex)
    return float(vals[0]), psi / np.linalg.norm(psi), deg


def gap_from_levels(levels: np.ndarray, tol: float = DEGENERACY_TOL) -> float:
    """Distance from the lowest level to the first distinct level above it."""
    levels = np.sort(np.asarray(levels, dtype=float))
    above = levels[levels - levels[0] >= tol]
    if above.size == 0:
        raise FlatSpectrumError()
    return float(above[0] - levels[0])


def spectral_gap(H: DenseOperator) -> float:
    """Gap between the ground manifold and the next distinct level."""
    _check_hermitian(H)
    k = 8
    while True:
        vals, _ = _lowest(H, k)
        try:
            return gap_from_levels(vals)
        except FlatSpectrumError:
            if not H.is_sparse or len(vals) >= H.dim - 2:
                raise
            k *= 2


@dataclass
class Trajectory:
    """States and observables sampled on a rescaled-time grid."""

    grid: np.ndarray
    states: list | None = None
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    final: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing with at least two points")
        if abs(g[0]) > 1e-12 or abs(g[-1] - 1.0) > 1e-12:
            raise ValueError("grid must start at s=0 and end at s=1")
        self.grid = g


def step_count(T: float, dt: float, samples: int) -> int:
    """Number of equal steps in s: a multiple of ``samples`` with physical step <= dt."""
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    if dt >= T:
        raise ValueError("step exceeds horizon: dt must be smaller than T")
    per_sample = max(1, math.ceil(T / (dt * samples) - 1e-9))
    return per_sample * samples


# commutator-free 4th-order Magnus: Gauss nodes and exponent weights
_GAUSS = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
_CF4 = (0.25 + math.sqrt(3) / 6, 0.25 - math.sqrt(3) / 6)


def evolve_exact(spec, T: float, dt: float = 0.01, psi0: np.ndarray | None = None,
                 samples: int = 100, keep_states: bool = True,
                 observer: Callable[[float, np.ndarray], dict] | None = None,
                 method: str = "rk4") -> Trajectory:
    """Integrate ``d psi/ds = -i T H(s) psi`` with a 4th-order fixed step in s.

    The step in s is ``1/n`` where ``n`` is the smallest multiple of
    ``samples`` giving a physical step ``T/n <= dt``.  The state is
    renormalized after every step and recorded at ``s = k/samples``.

    Parameters
    ----------
    spec : ProtocolSpec
        Anything exposing ``apply(s, psi)`` (returns ``H(s) psi``) and ``dim``.
    observer : callable, optional
        ``observer(s, psi) -> dict`` evaluated at every recorded point; the
        values are collected into ``Trajectory.observables``.
    method : {"rk4", "cfm4"}
        ``rk4`` is classical Runge-Kutta.  ``cfm4`` is the commutator-free
        4th-order Magnus scheme: two exponentials of Hermitian combinations
        of ``H`` at the Gauss nodes, each applied by Lanczos to 1e-13.  Its
        error only involves time derivatives of ``H`` (which scale as 1/T),
        so it stays accurate where ``||H|| dt`` is too large for RK4.
    """
    if method not in ("rk4", "cfm4"):
        raise ValueError(f"unknown method {method!r}")
    n = step_count(T, dt, samples)
    if psi0 is None:
        psi0 = spec.initial_state()
    psi = np.array(psi0, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    h = 1.0 / n
    stride = n // samples
    grid = np.linspace(0.0, 1.0, samples + 1)
    states = [psi.copy()] if keep_states else None
    obs: dict[str, list] = {"norm_drift": [0.0]}
    if observer is not None:
        for key, val in observer(0.0, psi).items():
            obs.setdefault(key, []).append(val)

    def rhs(s, v):
        return -1j * T * spec.apply(s, v)

    max_drift = 0.0
    for k in range(n):
        s = k * h
        if method == "rk4":
            k1 = rhs(s, psi)
            k2 = rhs(s + h / 2, psi + (h / 2) * k1)
            k3 = rhs(s + h / 2, psi + (h / 2) * k2)
            k4 = rhs(s + h, psi + h * k3)
            psi = psi + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            sa, sb = s + _GAUSS[0] * h, s + _GAUSS[1] * h
            for wa, wb in (_CF4, _CF4[::-1]):
                psi = _expm_lanczos(lambda v: wa * spec.apply(sa, v) + wb * spec.apply(sb, v),
                                    psi, -1j * T * h)
        nrm = np.linalg.norm(psi)
        max_drift = max(max_drift, abs(nrm - 1.0))
        psi /= nrm
        if (k + 1) % stride == 0:
            s_rec = (k + 1) * h
            if keep_states:
                states.append(psi.copy())
            obs["norm_drift"].append(max_drift)
            if observer is not None:
                for key, val in observer(s_rec, psi).items():
                    obs.setdefault(key, []).append(val)
    return Trajectory(grid, states, {k: np.asarray(v) for k, v in obs.items()}, psi)


def _expm_lanczos(apply, v: np.ndarray, tau: complex, tol: float = 1e-13, m_max: int = 80) -> np.ndarray:
    """``exp(tau H) v`` for Hermitian ``H`` by Lanczos with full reorthogonalization."""
    beta0 = np.linalg.norm(v)
    V = [v / beta0]
    alpha, beta = [], []
    for j in range(min(m_max, len(v))):
        w = apply(V[j])
        alpha.append(float(np.vdot(V[j], w).real))
        for _ in range(2):
            w = w - np.array(V).T @ (np.array(V).conj() @ w)
        b = float(np.linalg.norm(w))
        Tm = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        lam, U = np.linalg.eigh(Tm)
        coeff = U @ (np.exp(tau * lam) * U[0])
        if j + 1 == len(v) or b * abs(coeff[-1]) < tol or b < 1e-14:
            return beta0 * (np.array(V).T @ coeff)
        beta.append(b)
        V.append(w / b)
    raise ConvergenceError("Lanczos exponential did not converge", b * abs(coeff[-1]))


def entanglement_entropy(state: np.ndarray, cut: int, local_dims: Sequence[int]) -> float:
    """Von Neumann entropy (natural log) of the first ``cut`` sites."""
    local_dims = list(local_dims)
    if not 0 <= cut <= len(local_dims):
        raise ValueError(f"cut {cut} outside 0..{len(local_dims)}")
    left = math.prod(local_dims[:cut])
    right = math.prod(local_dims[cut:])
    if left * right != len(state):
        raise ValueError(f"state of dimension {len(state)} does not factor as {left} x {right}")
    sv = np.linalg.svd(np.reshape(state, (left, right)), compute_uv=False)
    return entropy_from_schmidt(sv)


def entropy_from_schmidt(sv: np.ndarray, cutoff: float = 1e-14) -> float:
    p = np.abs(np.asarray(sv)) ** 2
    p = p[p > cutoff]
    return float(-np.sum(p * np.log(p)))


def phase_aligned_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``min_alpha || a - exp(i alpha) b ||_2``, equal to ``sqrt(2 - 2|<a|b>|)`` for unit vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    ov = np.vdot(b, a)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(a - phase * b))


def manifold_distance(a: np.ndarray, ground: Sequence[np.ndarray]) -> float:
    """Distance of ``a`` from a (possibly degenerate) ground manifold.

    Equal to ``sqrt(2 - 2 sqrt(p))`` with ``p`` the weight of ``a`` on the
    orthonormal vectors in ``ground``; evaluated as ``||a - P a / ||P a||||``
    so that it stays accurate for nearly coincident states.
    """
    a = np.asarray(a)
    proj = np.zeros_like(a, dtype=complex)
    for g in ground:
        proj = proj + np.vdot(g, a) * np.asarray(g)
    nrm = np.linalg.norm(proj)
    if nrm == 0.0:
        return math.sqrt(2.0)
    return float(np.linalg.norm(a - proj / nrm))
