"""Dynamics on homogeneous product-state manifolds.

Every site (or subsystem) carries the same single-spin state

    |psi(theta, phi)> = cos(theta/2) |0> + sin(theta/2) exp(-i phi) |1>,

copied ``m`` times: ``m = 2`` for the two-qubit and bipartite models,
``m = N`` for the LMG model.  The manifold is a sphere, and the variational
flow is the classical precession of the Bloch vector

    n = (sin(theta) cos(phi), -sin(theta) sin(phi), cos(theta))

in the mean field ``grad E(n)``.  The (theta, phi) chart is singular at the
poles, so :func:`integrate` works with ``n`` by default; the closed-form chart
equations are kept for cross-checks and linearization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceError, PoleError
from .exact import Trajectory, step_count
from .models import Model, ProtocolSpec, build_protocol

POLE_TOL = 1e-8


@dataclass(frozen=True)
class ProductModel:
    """A product-manifold model: tag, size and catalyst strength.

    ``N`` is the number of spins for LMG and the number of extra local levels
    for the bipartite model (ignored for the two-qubit model).
    """

    tag: Model
    N: int = 2
    A: float = 0.0

    def __post_init__(self):
        tag = Model.parse(self.tag)
        object.__setattr__(self, "tag", tag)
        if tag is Model.SPIN_GLASS:
            raise ValueError("the spin glass has no homogeneous product model; use the MPS engine")
        if tag is Model.TWO_QUBIT:
            object.__setattr__(self, "N", 2)
        if tag is Model.LMG and self.N < 2:
            raise ValueError("LMG needs N >= 2")
        if self.A < 0:
            raise ValueError("catalyst strength A must be non-negative")

    @property
    def copies(self) -> int:
        return self.N if self.tag is Model.LMG else 2

    @property
    def local_dim(self) -> int:
        return self.N + 2 if self.tag is Model.BIPARTITE else 2

    def protocol(self) -> ProtocolSpec:
        return build_protocol(self.tag, self.N, A=self.A)

    def energy(self, s: float, n) -> float:
        """Variational energy as a function of the Bloch vector."""
        nx, ny, nz = n
        if self.tag is Model.LMG:
            N = self.N
            return -N * (1 - s) * nx - s * (1 + (N - 1) * nz * nz)
        return -2 * (1 - s) * nx + s * (nz * nz - 4 * nz) - self.A * s * (1 - s) * (1 - ny * ny)

    def energy_gradient(self, s: float, n) -> tuple[float, float, float]:
        """``grad E`` in the embedding space R^3 (E is quadratic in n)."""
        nx, ny, nz = n
        if self.tag is Model.LMG:
            N = self.N
            return (-N * (1 - s), 0.0, -2 * s * (N - 1) * nz)
        return (-2 * (1 - s), 2 * self.A * s * (1 - s) * ny, s * (2 * nz - 4))

    def energy_hessian(self, s: float) -> np.ndarray:
        if self.tag is Model.LMG:
            return np.diag([0.0, 0.0, -2 * s * (self.N - 1)])
        return np.diag([0.0, 2 * self.A * s * (1 - s), 2 * s])


@dataclass(frozen=True)
class ProductState:
    """Point ``(theta, phi)`` on the manifold of ``model``."""

    theta: float
    phi: float
    model: ProductModel

    def local_vector(self) -> np.ndarray:
        v = np.zeros(self.model.local_dim, dtype=complex)
        v[0] = math.cos(self.theta / 2)
        v[1] = math.sin(self.theta / 2) * np.exp(-1j * self.phi)
        return v

    def embed(self) -> np.ndarray:
        v = self.local_vector()
        psi = np.ones(1, dtype=complex)
        for _ in range(self.model.copies):
            psi = np.kron(psi, v)
        return psi

    def bloch(self) -> "BlochVector":
        return BlochVector.from_angles(self.theta, self.phi)

    @classmethod
    def from_bloch(cls, n, model: ProductModel) -> "ProductState":
        theta, phi = angles_from_bloch(n)
        return cls(theta, phi, model)


@dataclass(frozen=True)
class BlochVector:
    Sx: float
    Sy: float
    Sz: float

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "BlochVector":
        st = math.sin(theta)
        return cls(st * math.cos(phi), -st * math.sin(phi), math.cos(theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.Sx, self.Sy, self.Sz])


def angles_from_bloch(n) -> tuple[float, float]:
    """``(theta, phi)`` with ``phi`` in [-pi, pi); ``phi = 0`` at the poles."""
    nx, ny, nz = (float(c) for c in n)
    theta = math.acos(max(-1.0, min(1.0, nz)))
    if math.hypot(nx, ny) < 1e-300:
        return theta, 0.0
    phi = math.atan2(-ny, nx)
    if phi >= math.pi:
        phi -= 2 * math.pi
    return theta, phi


@dataclass(frozen=True)
class ManifoldGeometry:
    g: np.ndarray
    omega: np.ndarray

    @property
    def J(self) -> np.ndarray:
        return -np.linalg.solve(self.g, self.omega)

    def kahler_residual(self) -> float:
        J = self.J
        return float(np.max(np.abs(J @ J + np.eye(2))))


def _pole_guard(theta: float, s: float | None = None) -> None:
    if abs(math.sin(theta)) < POLE_TOL:
        raise PoleError(theta, s)


def geometry(model: ProductModel, x: ProductState) -> ManifoldGeometry:
    """Metric ``g = 2 Re<V_i|V_j>`` and form ``omega = 2 Im<V_i|V_j>`` in closed form.

    With ``c = m/2``: ``g = c diag(1, sin^2 theta)`` and
    ``omega = c [[0, -sin theta], [sin theta, 0]]``.
    """
    _pole_guard(x.theta)
    c = model.copies / 2
    st = math.sin(x.theta)
    g = c * np.array([[1.0, 0.0], [0.0, st * st]])
    omega = c * np.array([[0.0, -st], [st, 0.0]])
    return ManifoldGeometry(g, omega)


def eom_rhs(model: ProductModel, s: float, x: ProductState) -> tuple[float, float]:
    """Closed-form physical-time rates ``(dtheta/dt, dphi/dt)``; multiply by T for d/ds."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s = {s} outside [0, 1]")
    th, ph = x.theta, x.phi
    _pole_guard(th, s)
    st, ct = math.sin(th), math.cos(th)
    sp_, cp = math.sin(ph), math.cos(ph)
    if model.tag is Model.LMG:
        N = model.N
        dth = 2 * (s - 1) * sp_
        dph = 2 * ct * (2 * (N - 1) * s / N + (s - 1) * cp / st)
        return dth, dph
    A = model.A
    dth = 2 * (s - 1) * sp_ * (A * s * st * cp + 1)
    dph = (2 * A * s * (1 - s) * ct * sp_ * sp_ - 2 * s * ct + 4 * s
           + 2 * (s - 1) * (ct / st) * cp)
    return dth, dph


def tangent_vectors(x: ProductState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Embedded state and horizontal tangent vectors ``(psi, V_theta, V_phi)``.

    Built from single-site derivatives by the product rule; ``V_phi`` has its
    component along ``psi`` projected out.
    """
    m = x.model.copies
    v = x.local_vector()
    d = x.model.local_dim
    dth = np.zeros(d, dtype=complex)
    dth[0] = -0.5 * math.sin(x.theta / 2)
    dth[1] = 0.5 * math.cos(x.theta / 2) * np.exp(-1j * x.phi)
    dph = np.zeros(d, dtype=complex)
    dph[1] = -1j * math.sin(x.theta / 2) * np.exp(-1j * x.phi)

    def product_rule(dv):
        total = None
        for k in range(m):
            term = np.ones(1, dtype=complex)
            for j in range(m):
                term = np.kron(term, dv if j == k else v)
            total = term if total is None else total + term
        return total

    psi = x.embed()
    V1 = product_rule(dth)
    V2 = product_rule(dph)
    V1 = V1 - np.vdot(psi, V1) * psi
    V2 = V2 - np.vdot(psi, V2) * psi
    return psi, V1, V2


def numeric_geometry(x: ProductState) -> ManifoldGeometry:
    _, V1, V2 = tangent_vectors(x)
    Vs = (V1, V2)
    gram = np.array([[np.vdot(a, b) for b in Vs] for a in Vs])
    return ManifoldGeometry(2 * gram.real, 2 * gram.imag)


def generic_rhs(spec: ProtocolSpec, s: float, x: ProductState) -> tuple[float, float]:
    """``dx/dt = -2 G Re<V|iH(s)|psi>`` evaluated on the full Hilbert space."""
    psi, V1, V2 = tangent_vectors(x)
    if psi.shape[0] != spec.dim:
        raise ValueError("state and protocol dimensions differ")
    Hpsi = 1j * spec.apply(s, psi)
    force = np.array([np.vdot(V1, Hpsi).real, np.vdot(V2, Hpsi).real])
    gram = np.array([[np.vdot(a, b) for b in (V1, V2)] for a in (V1, V2)])
    g = 2 * gram.real
    rates = -2 * np.linalg.solve(g, force)
    return float(rates[0]), float(rates[1])


def bloch_rhs(model: ProductModel, s: float, n) -> tuple[float, float, float]:
    """Physical-time flow ``dn/dt = (2/m) grad E(n) x n``."""
    gx, gy, gz = model.energy_gradient(s, n)
    k = 2.0 / model.copies
    nx, ny, nz = n
    return (k * (gy * nz - gz * ny), k * (gz * nx - gx * nz), k * (gx * ny - gy * nx))


def state_distance_from_bloch(n, n0, copies: int) -> float:
    """Phase-aligned distance of two homogeneous product states from their Bloch vectors.

    Uses ``|<psi|psi0>|^2 = (1 + n.n0)/2`` per copy.
    """
    dot = float(np.dot(n, n0))
    ov = max(0.0, (1.0 + dot) / 2.0) ** (copies / 2)
    return math.sqrt(max(0.0, 2.0 - 2.0 * min(1.0, ov)))


# --- variational ground states ---------------------------------------------------

def lmg_critical_point(N: int) -> float:
    """Mean-field transition ``s* = N / (3N - 2)``."""
    return N / (3 * N - 2)


def lmg_theta0(s: float, N: int) -> float:
    """Polar angle of the LMG variational ground state (``phi = 0``)."""
    if s <= lmg_critical_point(N):
        return math.pi / 2
    arg = (N - N * s) / (2 * s - 2 * N * s)
    return math.asin(max(-1.0, min(1.0, arg))) + math.pi


def lmg_observables(x: ProductState) -> BlochVector:
    return x.bloch()


def lmg_energy(s: float, x: ProductState) -> float:
    """Variational LMG energy; the constant term is ``-s`` (``<H1>`` carries weight s)."""
    N = x.model.N
    return (-N * (1 - s) * math.sin(x.theta) * math.cos(x.phi)
            + (1 - N) * s * math.cos(x.theta) ** 2 - s)


def _tangent_basis(n: np.ndarray) -> np.ndarray:
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - np.dot(a, n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return np.stack([e1, e2], axis=1)


def minimize_on_sphere(model: ProductModel, s: float, n0, tol: float = 1e-10,
                       max_iter: int = 200) -> np.ndarray:
    """Local minimizer of ``E(n)`` on the unit sphere by Riemannian Newton.

    Falls back to a backtracking gradient step whenever the Riemannian Hessian
    is not positive definite.
    """
    n = np.asarray(n0, dtype=float)
    n = n / np.linalg.norm(n)
    Q2 = model.energy_hessian(s)
    gnorm = np.inf
    for _ in range(max_iter):
        grad = np.array(model.energy_gradient(s, n))
        B = _tangent_basis(n)
        rg = B.T @ grad
        gnorm = float(np.linalg.norm(rg))
        if gnorm < tol:
            return n
        hess = B.T @ Q2 @ B - float(grad @ n) * np.eye(2)
        w = np.linalg.eigvalsh(hess)
        if w[0] > 1e-12:
            step = -np.linalg.solve(hess, rg)
        else:
            step = -rg
        e0 = model.energy(s, n)
        t = 1.0
        while True:
            v = B @ (t * step)
            trial = n + v
            trial /= np.linalg.norm(trial)
            if model.energy(s, trial) <= e0 + 1e-14 or t < 1e-12:
                break
            t *= 0.5
        n = trial
    raise ConvergenceError(f"variational ground state at s={s} did not converge", gnorm)


def variational_ground_state(model: ProductModel, s: float, guess: ProductState | None = None) -> ProductState:
    """Minimizer of the variational energy at fixed ``s``.

    LMG uses the closed form (``phi = 0``, ``theta = lmg_theta0``); the other
    models run Riemannian Newton warm-started from ``guess``.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s = {s} outside [0, 1]")
    if model.tag is Model.LMG:
        return ProductState(lmg_theta0(s, model.N), 0.0, model)
    if guess is None:
        guess = ProductState(math.pi / 2, 0.0, model)
    n = minimize_on_sphere(model, s, guess.bloch().as_array())
    return ProductState.from_bloch(n, model)


def vgs_bloch_curve(model: ProductModel, grid: np.ndarray) -> np.ndarray:
    """Bloch vectors of the variational ground state along ``grid`` (warm-started)."""
    out = np.empty((len(grid), 3))
    guess = None
    for k, s in enumerate(grid):
        x = variational_ground_state(model, float(s), guess)
        out[k] = x.bloch().as_array()
        guess = x
    return out


# --- integration -------------------------------------------------------------------

def _rk4_scalar(f: Callable, y: tuple, t: float, h: float) -> tuple:
    k1 = f(t, y)
    y2 = tuple(a + 0.5 * h * b for a, b in zip(y, k1))
    k2 = f(t + 0.5 * h, y2)
    y3 = tuple(a + 0.5 * h * b for a, b in zip(y, k2))
    k3 = f(t + 0.5 * h, y3)
    y4 = tuple(a + h * b for a, b in zip(y, k3))
    k4 = f(t + h, y4)
    return tuple(a + (h / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
                 for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


def integrate(model: ProductModel, T: float, dt: float = 0.01, x0: ProductState | None = None,
              samples: int = 100, method: str = "bloch") -> Trajectory:
    """RK4 in s (step ``1/n``, physical step ``T/n <= dt``) of the variational flow.

    Parameters
    ----------
    method : {"bloch", "chart"}
        ``bloch`` integrates the pole-free Bloch-vector flow and renormalizes
        ``n`` each step; ``chart`` integrates :func:`eom_rhs` in (theta, phi)
        and raises :class:`PoleError` if the path reaches a pole.

    Returns
    -------
    Trajectory
        ``states`` holds a :class:`ProductState` per grid point; observables
        are ``theta``, ``phi``, ``Sx``, ``Sy``, ``Sz``, ``energy``, ``dS``
        (Bloch distance to the variational ground state) and ``dpsi``
        (embedded-state distance to it).  For LMG both distances are taken to
        the nearer of the two degenerate ground states beyond s*.
    """
    if x0 is None:
        x0 = ProductState(math.pi / 2, 0.0, model)
    n_steps = step_count(T, dt, samples)
    h = 1.0 / n_steps
    stride = n_steps // samples
    grid = np.linspace(0.0, 1.0, samples + 1)
    recorded = [x0.bloch().as_array()]

    if method == "bloch":
        def f(s, y):
            r = bloch_rhs(model, s, y)
            return (T * r[0], T * r[1], T * r[2])

        y = tuple(recorded[0])
        for k in range(n_steps):
            y = _rk4_scalar(f, y, k * h, h)
            nrm = math.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])
            y = (y[0] / nrm, y[1] / nrm, y[2] / nrm)
            if (k + 1) % stride == 0:
                recorded.append(np.array(y))
        states = [ProductState.from_bloch(n, model) for n in recorded]
    elif method == "chart":
        def f(s, y):
            r = eom_rhs(model, min(s, 1.0), ProductState(y[0], y[1], model))
            return (T * r[0], T * r[1])

        y = (x0.theta, x0.phi)
        states = [x0]
        for k in range(n_steps):
            y = _rk4_scalar(f, y, k * h, h)
            if (k + 1) % stride == 0:
                states.append(ProductState(y[0], y[1], model))
        recorded = [x.bloch().as_array() for x in states]
    else:
        raise ValueError(f"unknown method {method!r}")

    return _product_trajectory(model, grid, states, np.array(recorded))


def symmetry_image(model: ProductModel, n) -> np.ndarray | None:
    """Image of ``n`` under the model's Z2 symmetry, if it has one.

    LMG is invariant under the pi rotation about x, ``(x, y, z) -> (x, -y, -z)``,
    which exchanges the two degenerate variational ground states beyond s*.
    """
    if model.tag is Model.LMG:
        n = np.asarray(n)
        return n * np.array([1.0, -1.0, -1.0])
    return None


def distance_to_vgs(model: ProductModel, n, n0) -> tuple[float, float]:
    """``(||n - n0||, state distance)`` to the nearer symmetry-related ground state."""
    cands = [np.asarray(n0)]
    img = symmetry_image(model, n0)
    if img is not None:
        cands.append(img)
    dS = min(float(np.linalg.norm(np.asarray(n) - c)) for c in cands)
    dpsi = min(state_distance_from_bloch(n, c, model.copies) for c in cands)
    return dS, dpsi


def _product_trajectory(model, grid, states, bloch) -> Trajectory:
    vgs = vgs_bloch_curve(model, grid)
    pairs = [distance_to_vgs(model, a, b) for a, b in zip(bloch, vgs)]
    dS = np.array([p[0] for p in pairs])
    dpsi = np.array([p[1] for p in pairs])
    energy = np.array([model.energy(s, n) for s, n in zip(grid, bloch)])
    obs = {
        "theta": np.array([x.theta for x in states]),
        "phi": np.array([x.phi for x in states]),
        "Sx": bloch[:, 0], "Sy": bloch[:, 1], "Sz": bloch[:, 2],
        "energy": energy, "dS": dS, "dpsi": dpsi,
        "vgs_Sx": vgs[:, 0], "vgs_Sy": vgs[:, 1], "vgs_Sz": vgs[:, 2],
    }
    return Trajectory(grid, states, obs, states[-1])


def integrate_generic(spec: ProtocolSpec, model: ProductModel, T: float, dt: float = 0.01,
                      x0: ProductState | None = None, samples: int = 100) -> Trajectory:
    """Chart integration driven by :func:`generic_rhs` on the full Hilbert space.

    Independent of the closed forms; used to confirm that the variational
    flow does not see the local dimension of the bipartite model.
    """
    if x0 is None:
        x0 = ProductState(math.pi / 2, 0.0, model)
    n_steps = step_count(T, dt, samples)
    h = 1.0 / n_steps
    stride = n_steps // samples

    def f(s, y):
        r = generic_rhs(spec, min(s, 1.0), ProductState(y[0], y[1], model))
        return (T * r[0], T * r[1])

    y = (x0.theta, x0.phi)
    states = [x0]
    for k in range(n_steps):
        y = _rk4_scalar(f, y, k * h, h)
        if (k + 1) % stride == 0:
            states.append(ProductState(y[0], y[1], model))
    grid = np.linspace(0.0, 1.0, samples + 1)
    return Trajectory(grid, states, {
        "theta": np.array([x.theta for x in states]),
        "phi": np.array([x.phi for x in states]),
    }, states[-1])
