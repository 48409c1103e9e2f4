"""Optimal-control solvers: tabular value iteration, discounted Riccati
fixed-point iteration, and exact finite-horizon time-varying LQR tracking.

Every solver is deterministic and reports the suboptimality slack it can
guarantee, so learning loops can account for how well each control problem
was solved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import TimeVaryingOffsetModel
from .plant import check_symmetric_psd
from .policies import TabularPolicy, LinearFeedback, TimeVaryingAffine


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver fails to reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class TabularValue:
    v: np.ndarray


@dataclass(frozen=True)
class QuadraticValue:
    p: np.ndarray
    offset: float = 0.0


@dataclass(frozen=True)
class TimeVaryingQuadraticValue:
    p: np.ndarray        # (H, d, d)
    q: np.ndarray        # (H, d) linear terms
    r: np.ndarray        # (H,) constants

    def cost_to_go(self, t: int, state: np.ndarray) -> float:
        return float(state @ self.p[t] @ state + 2.0 * self.q[t] @ state + self.r[t])


@dataclass(frozen=True)
class OcSolution:
    policy: object
    value: object
    iterations: int
    residual: float
    converged: bool
    subopt_slack: float

    def __post_init__(self):
        if self.converged and not np.isfinite(self.residual):
            raise ValueError("converged solution must carry a finite residual")


def _tensor_of(model) -> np.ndarray:
    if hasattr(model, "as_tensor"):
        return model.as_tensor()
    return np.asarray(model, dtype=float)


def value_iteration(model, cost: np.ndarray, discount: float, tol: float = 1e-9,
                    max_iters: int = 100_000) -> OcSolution:
    """Bellman iteration on a finite (possibly learned) transition tensor.

    Stops once the sup-norm Bellman residual is at or below ``tol``; the
    greedy policy breaks ties toward the lowest action index.  Hitting
    ``max_iters`` is not an error: the solution is returned with
    ``converged=False`` and the slack accounting captures the defect.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    T = _tensor_of(model)
    C = np.asarray(cost, dtype=float)
    if T.ndim != 3 or C.shape != T.shape[:2]:
        raise ValueError("transition tensor and cost table dimensions disagree")
    v = np.zeros(T.shape[0])
    residual = np.inf
    it = 0
    while it < max_iters:
        q = C + discount * (T @ v)
        v_next = q.min(axis=1)
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        it += 1
        if residual <= tol:
            break
    q = C + discount * (T @ v)
    bellman_residual = float(np.max(np.abs(q.min(axis=1) - v)))
    greedy = TabularPolicy.deterministic(np.argmin(q, axis=1), T.shape[1])
    converged = bellman_residual <= tol
    slack = 2.0 * max(bellman_residual, tol) / (1.0 - discount)
    return OcSolution(greedy, TabularValue(v), it, bellman_residual, converged, slack)


def riccati_discounted(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: np.ndarray,
                       discount: float = 1.0, tol: float = 1e-10,
                       max_iters: int = 200_000) -> OcSolution:
    """Fixed-point iteration for the discounted algebraic Riccati equation.

    Returns the quadratic value x'Px and the stationary gain K (control law
    u = K x).  Fails loudly if the iteration does not converge or if the
    discounted closed loop is not a contraction.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    q = check_symmetric_psd(q, "q")
    r = check_symmetric_psd(r, "r", strict=True)
    if not 0.0 < discount <= 1.0:
        raise ValueError("discount must lie in (0, 1]")
    g = discount
    p = q.copy()
    residual = np.inf
    it = 0
    while it < max_iters:
        btp = b.T @ p
        gain_term = np.linalg.solve(r + g * btp @ b, g * btp @ a)
        p_next = q + g * a.T @ p @ a - g * a.T @ p @ b @ gain_term
        p_next = 0.5 * (p_next + p_next.T)
        residual = float(np.max(np.abs(p_next - p)))
        p = p_next
        it += 1
        if residual <= tol:
            break
    if residual > tol:
        raise ConvergenceError("Riccati iteration did not converge", residual)
    k = -np.linalg.solve(r + g * b.T @ p @ b, g * b.T @ p @ a)
    closed = np.sqrt(g) * (a + b @ k)
    rho = float(np.max(np.abs(np.linalg.eigvals(closed))))
    if rho >= 1.0:
        raise ValueError(f"discounted closed loop is not stable (spectral radius {rho:.4f}); "
                         "the pair is likely not stabilizable")
    slack = residual / (1.0 - g) if g < 1.0 else residual
    return OcSolution(LinearFeedback(k), QuadraticValue(p), it, residual, True, slack)


def tv_lqr_tracking(model: TimeVaryingOffsetModel, cost_q: np.ndarray, cost_r: np.ndarray,
                    horizon: int | None = None) -> OcSolution:
    """Exact backward pass for time-varying affine dynamics, quadratic cost.

    Dynamics per step: z' = A_t z + B_t u + c_t with c_t the model's
    reference-motion drift.  The returned affine policy is exactly optimal
    for the model, so its reported control slack is zero.
    """
    H = model.horizon if horizon is None else int(horizon)
    cost_q = check_symmetric_psd(cost_q, "cost_q")
    cost_r = check_symmetric_psd(cost_r, "cost_r", strict=True)
    d = model.base_a.shape[0]
    k_dim = model.base_b.shape[1]
    p_seq = np.zeros((H, d, d))
    q_seq = np.zeros((H, d))
    r_seq = np.zeros(H)
    gains = np.zeros((H, k_dim, d))
    offsets = np.zeros((H, k_dim))
    p_next = np.zeros((d, d))
    q_next = np.zeros(d)
    r_next = 0.0
    for t in range(H - 1, -1, -1):
        A, B, c = model.a_hat(t), model.b_hat(t), model.drift(t)
        m = cost_r + B.T @ p_next @ B
        pc_q = p_next @ c + q_next
        gains[t] = -np.linalg.solve(m, B.T @ p_next @ A)
        offsets[t] = -np.linalg.solve(m, B.T @ pc_q)
        closed = A + B @ gains[t]
        p_t = cost_q + A.T @ p_next @ A - gains[t].T @ m @ gains[t]
        p_seq[t] = 0.5 * (p_t + p_t.T)
        q_seq[t] = closed.T @ pc_q
        r_seq[t] = float(c @ p_next @ c + 2.0 * q_next @ c + r_next
                         - offsets[t] @ m @ offsets[t])
        p_next, q_next, r_next = p_seq[t], q_seq[t], r_seq[t]
    policy = TimeVaryingAffine(gains, offsets)
    value = TimeVaryingQuadraticValue(p_seq, q_seq, r_seq)
    return OcSolution(policy, value, H, 0.0, True, 0.0)
