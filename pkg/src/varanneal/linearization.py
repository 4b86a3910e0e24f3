"""Linearized variational flow around the instantaneous variational ground state.

At each ``s`` the flow ``X`` is linearized at its fixed point ``x0(s)``,
giving a real generator ``K``.  ``iK`` is pseudo-Hermitian: its eigenvalues
are real and paired, and ``eta = sum_i |w~_i><w~_i|`` built from the left
eigenvectors makes it Hermitian.  These ingredients assemble the prefactor
``kappa`` in the deviation bound ``||dx(s)||_eta <~ kappa / T``.

The (theta, phi) chart has poles exactly where some ground states sit (the
two-qubit target, the LMG endpoint).  Linearization therefore uses a local
chart: the sphere is rotated by a frame ``R`` that carries the x axis onto
``x0``, and local angles ``(theta', phi')`` are centred on ``(pi/2, 0)``.
Along a path the frame is continued by parallel transport.  With ``R = I``
the local rates coincide with :func:`varanneal.product.eom_rhs`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DefectiveError, NotStationaryError, PseudoHermiticityError
from .product import (ProductModel, ProductState, bloch_rhs, minimize_on_sphere,
                      symmetry_image, variational_ground_state)
from .models import Model

FD_STEP = 1e-5
STATIONARY_TOL = 1e-8
RELATION_TOL = 1e-8
CONDITION_MAX = 1e8
GAPLESS_TOL = 1e-6
UNRESOLVED_FACTOR = 10.0
GAPLESS_STATUS = "gapless: theorem hypotheses violated"

CENTER = (math.pi / 2, 0.0)


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def minimal_rotation(a, b) -> np.ndarray:
    """Rotation about ``a x b`` carrying unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(np.dot(a, b))
    if c < -1.0 + 1e-12:
        # antipodal: rotate by pi about any axis orthogonal to a
        axis = np.cross(a, [0.0, 0.0, 1.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    K = _skew(np.cross(a, b))
    return np.eye(3) + K + K @ K / (1.0 + c)


def frame_at(n0) -> np.ndarray:
    """Default frame: minimal rotation from the x axis to ``n0``."""
    return minimal_rotation([1.0, 0.0, 0.0], n0)


def _local_bloch(y) -> np.ndarray:
    th, ph = y
    st = math.sin(th)
    return np.array([st * math.cos(ph), -st * math.sin(ph), math.cos(th)])


def local_coordinates(n, frame: np.ndarray) -> tuple[float, float]:
    """Local angles of Bloch vector ``n`` in ``frame``."""
    m = frame.T @ np.asarray(n, dtype=float)
    th = math.acos(max(-1.0, min(1.0, m[2])))
    ph = math.atan2(-m[1], m[0])
    return th, ph


def local_rates(model: ProductModel, s: float, y, frame: np.ndarray) -> np.ndarray:
    """Physical-time rates of the local angles ``y = (theta', phi')``."""
    m = _local_bloch(y)
    ndot = np.array(bloch_rhs(model, s, frame @ m))
    md = frame.T @ ndot
    st = math.sin(y[0])
    dth = -md[2] / st
    dph = -(m[0] * md[1] - m[1] * md[0]) / (m[0] ** 2 + m[1] ** 2)
    return np.array([dth, dph])


@dataclass
class LinearizedMap:
    """Generator ``K = dX/dx`` at the fixed point, in the local chart of ``frame``."""

    K: np.ndarray
    s: float
    error: float
    frame: np.ndarray
    center: np.ndarray


@dataclass
class BiorthogonalSpectrum:
    """Eigen-decomposition of ``iK``; right vectors are columns of unit norm."""

    iK: np.ndarray
    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray

    @property
    def omegas(self) -> np.ndarray:
        return self.eigenvalues.real

    def reality_residual(self) -> float:
        return float(np.max(np.abs(self.eigenvalues.imag)))

    def pairing_residual(self) -> float:
        w = self.eigenvalues
        return float(np.max(np.abs(w + w[::-1])))

    def biorthogonality_residual(self) -> float:
        return float(np.max(np.abs(self.left.conj().T @ self.right - np.eye(len(self.eigenvalues)))))


def jacobian_K(model: ProductModel, s: float, x0: ProductState | np.ndarray,
               frame: np.ndarray | None = None, step: float = FD_STEP) -> LinearizedMap:
    """Central-difference Jacobian of the local-chart rates at ``x0``.

    ``x0`` may be a :class:`ProductState` or a Bloch vector.  The returned
    ``error`` is the difference between the step-``h`` estimate and its
    Richardson extrapolation with step ``2h``.
    """
    n0 = x0.bloch().as_array() if isinstance(x0, ProductState) else np.asarray(x0, dtype=float)
    n0 = n0 / np.linalg.norm(n0)
    if frame is None:
        frame = frame_at(n0)
    elif np.linalg.norm(frame[:, 0] - n0) > 1e-9:
        raise ValueError("frame must map the x axis onto x0")
    y0 = np.array(CENTER)
    X0 = local_rates(model, s, y0, frame)
    res = float(np.linalg.norm(X0))
    if res >= STATIONARY_TOL:
        raise NotStationaryError(res)

    def fd(h):
        K = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            K[:, j] = (local_rates(model, s, y0 + e, frame) - local_rates(model, s, y0 - e, frame)) / (2 * h)
        return K

    K = fd(step)
    K2 = fd(2 * step)
    rich = (4 * K - K2) / 3
    return LinearizedMap(K, s, float(np.max(np.abs(rich - K))), frame, n0)


def spectrum(lin: LinearizedMap | np.ndarray) -> BiorthogonalSpectrum:
    """Eigenvalues of ``iK`` ascending, with bi-orthonormal left vectors."""
    K = lin.K if isinstance(lin, LinearizedMap) else np.asarray(lin)
    iK = 1j * K
    w, V = np.linalg.eig(iK)
    order = np.lexsort((w.imag, w.real))
    w, V = w[order], V[:, order]
    V = V / np.linalg.norm(V, axis=0)
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond > CONDITION_MAX:
        raise DefectiveError(cond)
    L = np.linalg.inv(V).conj().T
    return BiorthogonalSpectrum(iK, w, V, L)


def pseudo_metric(spec: BiorthogonalSpectrum) -> np.ndarray:
    """``eta = sum_i |w~_i><w~_i|``, checked against ``(iK)^dag eta = eta iK``."""
    eta = spec.left @ spec.left.conj().T
    eta = 0.5 * (eta + eta.conj().T)
    resid = relation_residual(spec.iK, eta)
    min_eig = float(np.linalg.eigvalsh(eta)[0])
    if resid >= RELATION_TOL or min_eig <= 0:
        raise PseudoHermiticityError(resid, min_eig)
    return eta


def relation_residual(iK: np.ndarray, eta: np.ndarray) -> float:
    return float(np.max(np.abs(iK.conj().T @ eta - eta @ iK)))


def eta_norm(v: np.ndarray, eta: np.ndarray) -> float:
    v = np.asarray(v)
    return math.sqrt(max(0.0, float(np.vdot(v, eta @ v).real)))


# --- paths ---------------------------------------------------------------------

@dataclass
class PathPoint:
    s: float
    n0: np.ndarray
    ndot0: np.ndarray
    lin: LinearizedMap
    spec: BiorthogonalSpectrum
    eta: np.ndarray

    @property
    def xdot(self) -> np.ndarray:
        """Velocity of ``x0(s)`` in the local chart at ``s``."""
        R = self.lin.frame
        return np.array([-R[:, 2] @ self.ndot0, -R[:, 1] @ self.ndot0])


def _vgs_bloch(model: ProductModel, s: float, guess: np.ndarray | None) -> np.ndarray:
    if model.tag is Model.LMG:
        return variational_ground_state(model, s).bloch().as_array()
    if guess is None:
        guess = np.array([1.0, 0.0, 0.0])
    return minimize_on_sphere(model, s, guess)


def vgs_velocity(model: ProductModel, s: float, n0: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """``d n0 / ds`` by central differences (one-sided at the ends of [0, 1])."""
    lo, hi = max(0.0, s - h), min(1.0, s + h)
    a = _vgs_bloch(model, lo, n0)
    b = _vgs_bloch(model, hi, n0)
    return (b - a) / (hi - lo)


def linearize_path(model: ProductModel, grid) -> list[PathPoint]:
    """Linearize along ``grid`` with parallel-transported frames and a continuous gauge.

    Eigenvector phases are fixed so that ``<w_j(prev)|w_j(next)>`` is real and
    positive; left vectors follow the same phase to keep bi-orthonormality.
    """
    grid = np.asarray(grid, dtype=float)
    points: list[PathPoint] = []
    n_prev = None
    R_prev = None
    for s in grid:
        n0 = _vgs_bloch(model, float(s), n_prev)
        if R_prev is None:
            R = frame_at(n0)
        else:
            R = minimal_rotation(n_prev, n0) @ R_prev
        lin = jacobian_K(model, float(s), n0, frame=R)
        sp = spectrum(lin)
        if points:
            prev = points[-1].spec
            ov = np.einsum("ij,ij->j", prev.right.conj(), sp.right)
            ph = np.where(np.abs(ov) > 0, ov.conj() / np.maximum(np.abs(ov), 1e-300), 1.0)
            sp = BiorthogonalSpectrum(sp.iK, sp.eigenvalues, sp.right * ph, sp.left * ph)
        eta = pseudo_metric(sp)
        points.append(PathPoint(float(s), n0, vgs_velocity(model, float(s), n0), lin, sp, eta))
        n_prev, R_prev = n0, R
    return points


def geometric_phases(points: list[PathPoint]) -> np.ndarray:
    """``gamma_j(s_k)`` with ``Gamma_j = i gamma_j``, by the midpoint rule.

    ``gamma_j = int Im <d w~_j | w_j>``; the integral restarts across gaps in
    the grid larger than 1.5 times the smallest spacing.
    """
    n = len(points)
    dim = len(points[0].spec.eigenvalues)
    gam = np.zeros((n, dim))
    if n < 2:
        return gam
    ds = np.diff([p.s for p in points])
    hmin = ds.min()
    for k in range(1, n):
        a, b = points[k - 1].spec, points[k].spec
        if ds[k - 1] > 1.5 * hmin:
            gam[k] = gam[k - 1]
            continue
        dl = b.left - a.left
        mid = 0.5 * (a.right + b.right)
        gam[k] = gam[k - 1] + np.einsum("ij,ij->j", dl.conj(), mid).imag
    return gam


@dataclass
class KappaReport:
    model: str
    s_min: float
    s_max: float
    n_grid: int
    min_omega: float
    max_xdot_eta: float
    phase_factor: float
    kappa: float
    adiabatic_parameter: float
    max_relation_residual: float
    max_reality_residual: float
    status: str = "ok"
    notes: str = ""
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        rows = [
            ("model", self.model), ("s_min", self.s_min), ("s_max", self.s_max),
            ("n_grid", self.n_grid), ("min_omega", self.min_omega),
            ("max_xdot_eta", self.max_xdot_eta), ("phase_factor", self.phase_factor),
            ("kappa", self.kappa), ("adiabatic_parameter", self.adiabatic_parameter),
            ("max_relation_residual", self.max_relation_residual),
            ("max_reality_residual", self.max_reality_residual),
            ("status", self.status), ("notes", self.notes),
        ] + sorted(self.extra.items())
        return "".join(f"{k}={_fmt(v)}\n" for k, v in rows)

    @classmethod
    def from_text(cls, text: str) -> "KappaReport":
        kv = {}
        for line in text.splitlines():
            if "=" in line and not line.startswith("#"):
                k, v = line.split("=", 1)
                kv[k.strip()] = v.strip()
        num = ["s_min", "s_max", "min_omega", "max_xdot_eta", "phase_factor", "kappa",
               "adiabatic_parameter", "max_relation_residual", "max_reality_residual"]
        known = set(num) | {"model", "n_grid", "status", "notes"}
        return cls(kv["model"], *(float(kv[k]) for k in num[:2]), int(kv["n_grid"]),
                   *(float(kv[k]) for k in num[2:]), kv.get("status", "ok"), kv.get("notes", ""),
                   {k: v for k, v in kv.items() if k not in known})


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def default_kappa_grid(model: ProductModel, n: int = 201, window: float = 0.05) -> np.ndarray:
    """Uniform grid on [0, 1]; for LMG, points within ``window`` of s* are dropped."""
    grid = np.linspace(0.0, 1.0, n)
    if model.tag is Model.LMG:
        from .product import lmg_critical_point
        sc = lmg_critical_point(model.N)
        grid = grid[np.abs(grid - sc) >= window - 1e-12]
    return grid


def kappa_bound(model: ProductModel, s_grid=None, points: list[PathPoint] | None = None) -> KappaReport:
    """Assemble ``kappa = 2 * phase_factor * max ||x0'||_eta / min |omega|``."""
    if points is None:
        if s_grid is None:
            s_grid = default_kappa_grid(model)
        points = linearize_path(model, s_grid)
    grid = np.array([p.s for p in points])
    min_omega = min(float(np.min(np.abs(p.spec.omegas))) for p in points)
    xdot_eta = np.array([eta_norm(p.xdot, p.eta) for p in points])
    gam = geometric_phases(points)
    phase_factor = float(np.max(np.exp(gam.max(axis=0) - gam.min(axis=0))))
    rel = max(relation_residual(p.spec.iK, p.eta) for p in points)
    real = max(p.spec.reality_residual() for p in points)

    adiabatic = 0.0
    if len(points) > 2:
        Ks = np.array([p.lin.K for p in points])
        dK = np.gradient(Ks, grid, axis=0)
        for p, d in zip(points, dK):
            M = p.spec.left.conj().T @ d @ p.spec.right
            w = p.spec.omegas
            for i in range(len(w)):
                for j in range(len(w)):
                    if i != j and abs(w[i] - w[j]) > 0:
                        adiabatic = max(adiabatic, abs(M[i, j]) / (w[i] - w[j]) ** 2)

    notes = ""
    if model.tag is Model.LMG:
        from .product import lmg_critical_point
        notes = f"s_star={lmg_critical_point(model.N):.17g}"
    # at a zero mode det K (= omega^2) sinks to the finite-difference noise floor
    unresolved = [p.s for p in points
                  if abs(np.linalg.det(p.lin.K)) < UNRESOLVED_FACTOR * p.lin.error * np.max(np.abs(p.lin.K))]
    if unresolved:
        notes = (notes + " " if notes else "") + f"unresolved_K_at_s={unresolved[0]:.17g}"
    if min_omega < GAPLESS_TOL or unresolved:
        kappa = math.inf
        status = GAPLESS_STATUS
    else:
        kappa = 2.0 * phase_factor * float(xdot_eta.max()) / min_omega
        status = "ok"
    return KappaReport(_model_label(model), float(grid[0]), float(grid[-1]), len(grid), min_omega,
                       float(xdot_eta.max()), phase_factor, kappa, adiabatic, rel, real, status, notes)


def _model_label(model: ProductModel) -> str:
    if model.tag is Model.LMG:
        return f"lmg(N={model.N})"
    if model.tag is Model.BIPARTITE:
        return f"bipartite(N={model.N},A={model.A:g})"
    return f"twoqubit(A={model.A:g})"


def eta_deviation(model: ProductModel, points: list[PathPoint], bloch_traj: np.ndarray,
                  traj_grid: np.ndarray) -> np.ndarray:
    """``||dx(s)||_eta`` of a trajectory against the linearized path.

    ``bloch_traj[k]`` is the trajectory's Bloch vector at ``traj_grid[k]``;
    every path point must coincide with a trajectory sample.  For symmetric
    models the trajectory is compared with the nearer symmetry image.
    """
    traj_grid = np.asarray(traj_grid)
    out = np.empty(len(points))
    for k, p in enumerate(points):
        idx = int(np.argmin(np.abs(traj_grid - p.s)))
        if abs(traj_grid[idx] - p.s) > 1e-9:
            raise ValueError(f"trajectory has no sample at s={p.s}")
        n = bloch_traj[idx]
        img = symmetry_image(model, n)
        if img is not None and np.linalg.norm(img - p.n0) < np.linalg.norm(n - p.n0):
            n = img
        th, ph = local_coordinates(n, p.lin.frame)
        out[k] = eta_norm(np.array([th - CENTER[0], ph - CENTER[1]]), p.eta)
    return out
