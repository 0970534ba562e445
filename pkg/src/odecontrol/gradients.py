"""Gradients of control objectives through the Euler recursion.

bptt_grad runs the full discrete adjoint: lambda_K = dL/dx_K, then
lambda_k = (I + dt * dfdx^T) lambda_{k+1} plus any integrated-cost state
terms, pulling dt * dfdu^T lambda_{k+1} back through the controller at every
step (K vjp calls). tbptt_grad keeps a single time index k' and does exactly
one vjp; its "propagated" variant uses the true adjoint at k'+1 so the K
single-index gradients sum back to the full one, while "frozen" zeroes all
state sensitivity downstream of k'.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dynamics import (
    ControlProblem,
    Trajectory,
    control_energy,
    integrate_euler,
    terminal_loss,
    work_functional,
)

_vjp_calls = 0


def reset_vjp_count() -> None:
    global _vjp_calls
    _vjp_calls = 0


def vjp_count() -> int:
    return _vjp_calls


def _count_vjp(k: int = 1) -> None:
    global _vjp_calls
    _vjp_calls += k


@dataclass(frozen=True)
class LossSpec:
    """Objective J = terminal loss + mu * integrated cost.

    integrated is None (pure steering), "energy" (J += mu * E) or "work"
    (J += mu * W, moving-particle only). The terminal term is always on.
    """

    integrated: str | None = None
    mu: float = 0.0

    def __post_init__(self):
        if self.integrated not in (None, "energy", "work"):
            raise ValueError(f"unknown integrated cost {self.integrated!r}")
        if self.integrated is not None and self.mu < 0.0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")

    @staticmethod
    def terminal() -> "LossSpec":
        return LossSpec()

    @staticmethod
    def energy(mu: float) -> "LossSpec":
        return LossSpec("energy", float(mu))

    @staticmethod
    def work(mu: float) -> "LossSpec":
        return LossSpec("work", float(mu))

    def value(self, traj: Trajectory, x_star) -> float:
        total = terminal_loss(traj, x_star)
        if self.integrated == "energy":
            total += self.mu * control_energy(traj)
        elif self.integrated == "work":
            total += self.mu * work_functional(traj)
        return total


class GradResult(NamedTuple):
    grad: np.ndarray
    loss: float
    trajectory: Trajectory


def bptt_grad(
    problem: ControlProblem, model, theta, loss: LossSpec = LossSpec()
) -> GradResult:
    """Full-horizon gradient of J(theta) by the discrete adjoint (K vjps)."""
    theta = np.asarray(theta, dtype=np.float64)
    traj = integrate_euler(problem, lambda t: model.forward(theta, t))
    dyn = problem.dynamics
    dt = problem.dt
    xs, us, ts = traj.states, traj.controls, traj.times
    k_steps = problem.steps
    mu = loss.mu

    lam = xs[k_steps] - problem.x_star
    grad = np.zeros(theta.shape[0])
    for k in reversed(range(k_steps)):
        b_k = dyn.dfdu(xs[k], us[k], ts[k])
        g_u = dt * (b_k.T @ lam)
        if loss.integrated == "energy":
            g_u = g_u + mu * dt * us[k]
        elif loss.integrated == "work":
            # d(v u)/du = v
            g_u = g_u + mu * dt * np.array([xs[k][1]])
        grad += model.vjp(theta, ts[k], g_u)
        _count_vjp()
        if k > 0:
            a_k = dyn.dfdx(xs[k], us[k], ts[k])
            lam = lam + dt * (a_k.T @ lam)
            if loss.integrated == "work":
                # d(v u)/dx = (0, u)
                lam = lam + mu * dt * np.array([0.0, us[k][0]])
    return GradResult(grad, loss.value(traj, problem.x_star), traj)


def tbptt_grad(
    problem: ControlProblem,
    model,
    theta,
    k_index: int,
    variant: str = "propagated",
) -> GradResult:
    """Single-index truncated gradient (exactly one vjp), terminal loss only.

    variant "frozen" is the literal truncated rule with downstream state
    sensitivities treated as zero: dt * J_u(t_k')^T dfdu^T (x_K - x*).
    variant "propagated" (default) replaces the frozen cotangent with the true
    adjoint lambda_{k'+1}, so summing over k' = 0..K-1 reproduces bptt_grad.
    """
    if variant not in ("frozen", "propagated"):
        raise ValueError(f"unknown tbptt variant {variant!r}")
    k_steps = problem.steps
    if not 0 <= k_index < k_steps:
        raise ValueError(f"k_index must be in [0, {k_steps}), got {k_index}")
    theta = np.asarray(theta, dtype=np.float64)
    traj = integrate_euler(problem, lambda t: model.forward(theta, t))
    dyn = problem.dynamics
    dt = problem.dt
    xs, us, ts = traj.states, traj.controls, traj.times

    lam = xs[k_steps] - problem.x_star
    if variant == "propagated":
        for k in reversed(range(k_index + 1, k_steps)):
            lam = lam + dt * (dyn.dfdx(xs[k], us[k], ts[k]).T @ lam)
    b_k = dyn.dfdu(xs[k_index], us[k_index], ts[k_index])
    g_u = dt * (b_k.T @ lam)
    grad = model.vjp(theta, ts[k_index], g_u)
    _count_vjp()
    return GradResult(grad, terminal_loss(traj, problem.x_star), traj)


def fd_grad(
    problem: ControlProblem,
    model,
    theta,
    loss: LossSpec = LossSpec(),
    h: float = 1e-6,
) -> np.ndarray:
    """Central finite differences of J(theta), the reference for bptt_grad."""
    theta = np.asarray(theta, dtype=np.float64)

    def objective(th):
        traj = integrate_euler(problem, lambda t: model.forward(th, t))
        return loss.value(traj, problem.x_star)

    grad = np.zeros(theta.shape[0])
    for i in range(theta.shape[0]):
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (objective(up) - objective(dn)) / (2.0 * h)
    return grad
