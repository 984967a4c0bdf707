"""2-D quadratic minimization playground.

Compares vanilla gradient descent against two extragradient lookahead
rules on f(w) = w^T A w + b^T w + c. For a quadratic, both lookahead rules
coincide algebraically per step:

    grad f(w - gamma*grad f(w)) == (I - gamma*H) grad f(w),  H = 2A,

so ``eg_first_order_trajectory`` (re-evaluates the gradient at the
lookahead point) and ``eg_full_hessian_trajectory`` (applies the analytic
Hessian correction) differ only in how the step is computed. Per-mode decay
factors are closed-form: 1 - 2*eta*lam for descent and
1 - 2*eta*lam*(1 - 2*gamma*lam) for the lookahead rules, with lam an
eigenvalue of A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Quadratic:
    """f(w) = w^T A w + b^T w + c with A symmetric positive definite."""

    A: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.A.shape != (2, 2) or self.b.shape != (2,):
            raise ValueError("Quadratic: A must be 2x2 and b length 2")
        if not np.all(np.abs(self.A - self.A.T) <= 1e-12):
            raise ValueError("Quadratic: A must be symmetric (within 1e-12)")
        if np.linalg.eigvalsh(self.A).min() <= 0:
            raise ValueError("Quadratic: A must be positive definite")

    def f(self, w) -> float:
        w = np.asarray(w, dtype=np.float64)
        return float(w @ self.A @ w + self.b @ w + self.c)

    def grad(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        return 2.0 * (self.A @ w) + self.b

    def hessian(self) -> np.ndarray:
        return 2.0 * self.A

    def eigen(self):
        """(eigenvalues, eigenvectors) of A, ascending."""
        return np.linalg.eigh(self.A)

    def condition_number(self) -> float:
        lam = np.linalg.eigvalsh(self.A)
        return float(lam.max() / lam.min())

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(2.0 * self.A, -self.b)


def default_quadratic() -> Quadratic:
    """The ill-conditioned demo problem: condition number exactly 40,
    eigenvalues of A (39, 0.975) under a 30-degree rotation, minimizer at
    (0.4, 0). At eta=0.025 the steep mode's descent factor is -0.95 (the
    zigzag); at eta=0.1 descent diverges while the lookahead rules converge.
    """
    theta = math.pi / 6.0
    cs, sn = math.cos(theta), math.sin(theta)
    r = np.array([[cs, -sn], [sn, cs]])
    a = r.T @ np.diag([39.0, 0.975]) @ r
    a = (a + a.T) / 2.0
    w_star = np.array([0.4, 0.0])
    b = -2.0 * (a @ w_star)
    return Quadratic(a, b, 0.0)


DEFAULT_START = (0.0, -0.15)
CONVERGENCE_TOL = 1e-3


@dataclass
class Trajectory:
    method: str
    eta: float
    gamma: float
    points: list = field(default_factory=list)
    f_values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    truncated: bool = False  # hit a non-finite iterate and stopped early

    def __len__(self):
        return len(self.points)

    def steps_to(self, tol: float = CONVERGENCE_TOL):
        """First step index with gradient norm below tol, or None."""
        for i, g in enumerate(self.grad_norms):
            if g < tol:
                return i
        return None


def _run(q: Quadratic, w0, steps: int, step_fn, method, eta, gamma) -> Trajectory:
    traj = Trajectory(method=method, eta=float(eta), gamma=float(gamma))
    w = np.asarray(w0, dtype=np.float64).copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps + 1):
            fval = q.f(w)
            g = q.grad(w)
            gnorm = float(np.linalg.norm(g))
            if not (np.isfinite(fval) and np.isfinite(gnorm)):
                traj.truncated = True
                break
            traj.points.append(w.copy())
            traj.f_values.append(fval)
            traj.grad_norms.append(gnorm)
            if len(traj.points) == steps + 1:
                break
            w = step_fn(w, g)
            if not np.all(np.isfinite(w)):
                traj.truncated = True
                break
    return traj


def gd_trajectory(q: Quadratic, w0, eta: float, steps: int) -> Trajectory:
    """w <- w - eta * grad f(w)."""

    def step(w, g):
        return w - eta * g

    return _run(q, w0, steps, step, "gd", eta, 0.0)


def eg_first_order_trajectory(q: Quadratic, w0, eta: float, gamma: float, steps: int) -> Trajectory:
    """w <- w - eta * grad f(w - gamma * grad f(w)): the gradient is
    re-evaluated at the lookahead point (Hessian term of the total
    derivative dropped). gamma=0 collapses to vanilla descent bitwise."""

    def step(w, g):
        if gamma == 0.0:
            return w - eta * g
        lookahead = w - gamma * g
        return w - eta * q.grad(lookahead)

    return _run(q, w0, steps, step, "eg1", eta, gamma)


def eg_full_hessian_trajectory(q: Quadratic, w0, eta: float, gamma: float, steps: int) -> Trajectory:
    """w <- w - eta * (I - gamma*H) grad f(w) with the analytic Hessian;
    on a quadratic this equals the re-evaluated lookahead gradient exactly.
    gamma=0 collapses to vanilla descent bitwise."""
    h = q.hessian()

    def step(w, g):
        if gamma == 0.0:
            return w - eta * g
        return w - eta * (g - gamma * (h @ g))

    return _run(q, w0, steps, step, "eg2", eta, gamma)


TRAJECTORY_FNS = {
    "gd": lambda q, w0, eta, gamma, steps: gd_trajectory(q, w0, eta, steps),
    "eg1": eg_first_order_trajectory,
    "eg2": eg_full_hessian_trajectory,
}


def gd_mode_factor(lam: float, eta: float) -> float:
    return 1.0 - 2.0 * eta * lam


def eg_mode_factor(lam: float, eta: float, gamma: float) -> float:
    return 1.0 - 2.0 * eta * lam * (1.0 - 2.0 * gamma * lam)


def measure_mode_decay(q: Quadratic, traj: Trajectory, max_steps: int = 12, min_amp: float = 1e-8):
    """Observed per-mode contraction ratios along a trajectory.

    Projects the displacement from the minimizer onto A's eigenvectors and
    returns, per mode, the list of consecutive ratios over the first
    ``max_steps`` steps where the amplitude stays meaningful.
    """
    lam, vecs = q.eigen()
    w_star = q.minimizer()
    coords = np.array([vecs.T @ (p - w_star) for p in traj.points])
    ratios: list[list[float]] = [[], []]
    for mode in range(2):
        amp = coords[:, mode]
        for n in range(min(max_steps, len(amp) - 1)):
            if abs(amp[n]) > min_amp:
                ratios[mode].append(float(amp[n + 1] / amp[n]))
    return lam, ratios
