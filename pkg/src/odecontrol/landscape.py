"""Random-direction projections of loss, control MSE, and energy around a
trained parameter vector.

theta = theta* + alpha*delta + beta*d2 with delta, d2 drawn i.i.d. standard
normal per coordinate. Directions are stored on the spec so any grid can be
reproduced bit for bit; cells that blow up the integrator are recorded as
NaN rather than aborting the grid.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    ControlProblem,
    DivergenceError,
    control_energy,
    integrate_euler,
    terminal_loss,
)
from .linalg import SeededRng


@dataclass(frozen=True)
class ProjectionSpec:
    """Center, directions, and grid of a 1-D or 2-D parameter projection."""

    theta_star: np.ndarray
    delta: np.ndarray
    alpha_lo: float = -0.4
    alpha_hi: float = 0.4
    alpha_count: int = 101
    d2: np.ndarray | None = None
    beta_lo: float = -0.4
    beta_hi: float = 0.4
    beta_count: int = 101
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "theta_star", np.asarray(self.theta_star, dtype=np.float64)
        )
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=np.float64))
        if self.d2 is not None:
            object.__setattr__(self, "d2", np.asarray(self.d2, dtype=np.float64))
        if self.theta_star.ndim != 1:
            raise ValueError("theta_star must be a flat parameter vector")
        if self.delta.shape != self.theta_star.shape:
            raise ValueError(
                f"delta shape {self.delta.shape} != theta shape {self.theta_star.shape}"
            )
        if self.d2 is not None and self.d2.shape != self.theta_star.shape:
            raise ValueError(
                f"d2 shape {self.d2.shape} != theta shape {self.theta_star.shape}"
            )
        if self.alpha_count < 3 or (self.d2 is not None and self.beta_count < 3):
            raise ValueError("projection grids need at least 3 points per axis")

    @property
    def two_d(self) -> bool:
        return self.d2 is not None

    def alphas(self) -> np.ndarray:
        return np.linspace(self.alpha_lo, self.alpha_hi, self.alpha_count)

    def betas(self) -> np.ndarray:
        if self.d2 is None:
            return np.zeros(1)
        return np.linspace(self.beta_lo, self.beta_hi, self.beta_count)

    def theta_at(self, alpha: float, beta: float = 0.0) -> np.ndarray:
        theta = self.theta_star + alpha * self.delta
        if self.d2 is not None:
            theta = theta + beta * self.d2
        return theta


def make_projection(
    theta_star: np.ndarray,
    seed: int,
    two_d: bool = False,
    alpha_range: tuple[float, float] = (-0.4, 0.4),
    alpha_count: int = 101,
    beta_range: tuple[float, float] = (-0.4, 0.4),
    beta_count: int = 101,
) -> ProjectionSpec:
    """Draw fresh Gaussian directions for theta_star under the given seed."""
    theta_star = np.asarray(theta_star, dtype=np.float64)
    rng = SeededRng(seed)
    delta = rng.normal(theta_star.shape[0])
    d2 = rng.normal(theta_star.shape[0]) if two_d else None
    return ProjectionSpec(
        theta_star,
        delta,
        alpha_range[0],
        alpha_range[1],
        alpha_count,
        d2,
        beta_range[0],
        beta_range[1],
        beta_count,
        seed=seed,
    )


def _eval_theta(problem, model, theta, ts, us) -> tuple[float, float, float]:
    try:
        # overflow on a blown-up cell is routine; the integrator raises
        # DivergenceError on non-finite states and the cell becomes NaN
        with np.errstate(over="ignore", invalid="ignore"):
            traj = integrate_euler(problem, lambda t: model.forward(theta, t))
    except DivergenceError:
        return np.nan, np.nan, np.nan
    loss = terminal_loss(traj, problem.x_star)
    energy = control_energy(traj)
    d = model.forward_batch(theta, ts) - us
    mse = float(np.sum(d * d)) / ts.shape[0]  # same reduction as mse_control
    if not (np.isfinite(loss) and np.isfinite(mse) and np.isfinite(energy)):
        return np.nan, np.nan, np.nan
    return loss, mse, energy


def _project_row(args):
    spec, problem, model, ts, us, alpha = args
    out = []
    for beta in spec.betas():
        theta = spec.theta_at(float(alpha), float(beta))
        out.append(_eval_theta(problem, model, theta, ts, us))
    return out


@dataclass(frozen=True)
class ProjectionResult:
    spec: ProjectionSpec
    loss: np.ndarray  # shape (alpha_count, beta_count); beta_count = 1 for 1-D
    mse_u: np.ndarray
    energy: np.ndarray
    samples: int

    def center_index(self) -> tuple[int, int]:
        ia = int(np.argmin(np.abs(self.spec.alphas())))
        ib = int(np.argmin(np.abs(self.spec.betas())))
        return ia, ib

    def to_csv(self) -> str:
        lines = ["alpha,beta,loss,mse_u,energy"]
        alphas, betas = self.spec.alphas(), self.spec.betas()
        for i, a in enumerate(alphas):
            for j, b in enumerate(betas):
                lines.append(
                    f"{float(a)!r},{float(b)!r},{float(self.loss[i, j])!r},"
                    f"{float(self.mse_u[i, j])!r},{float(self.energy[i, j])!r}"
                )
        return "\n".join(lines) + "\n"

    def manifest(self) -> dict:
        s = self.spec
        return {
            "experiment": "projection",
            "theta_star": s.theta_star.tolist(),
            "delta": s.delta.tolist(),
            "d2": None if s.d2 is None else s.d2.tolist(),
            "direction_seed": s.seed,
            "alpha": {"lo": s.alpha_lo, "hi": s.alpha_hi, "count": s.alpha_count},
            "beta": None
            if s.d2 is None
            else {"lo": s.beta_lo, "hi": s.beta_hi, "count": s.beta_count},
            "samples": self.samples,
        }


def project(
    spec: ProjectionSpec,
    problem: ControlProblem,
    model,
    u_star,
    samples: int = 100,
    workers: int = 1,
) -> ProjectionResult:
    """Evaluate (loss, control MSE, energy) over the projection grid.

    u_star is a callable t -> optimal control, used for the MSE surface with
    `samples` grid points. It is sampled once up front (so closures are fine
    with worker pools); rows of fixed alpha then run independently.
    """
    alphas = spec.alphas()
    ts = np.arange(1, samples + 1) * (problem.T / samples)
    us = np.stack(
        [np.atleast_1d(np.asarray(u_star(t), dtype=np.float64)) for t in ts]
    )
    tasks = [(spec, problem, model, ts, us, float(a)) for a in alphas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_project_row, tasks, chunksize=1))
    else:
        rows = [_project_row(t) for t in tasks]
    grid = np.asarray(rows, dtype=np.float64)  # (alpha, beta, 3)
    return ProjectionResult(
        spec=spec,
        loss=grid[:, :, 0],
        mse_u=grid[:, :, 1],
        energy=grid[:, :, 2],
        samples=samples,
    )


def sharpness_1d(alphas: np.ndarray, values: np.ndarray) -> float:
    """Central second difference of a projected curve at alpha = 0.

    Needs at least 3 uniformly spaced points with 0 in the interior; returns
    (v[i+1] - 2 v[i] + v[i-1]) / h^2 at the grid point closest to 0.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if alphas.ndim != 1 or alphas.shape != values.shape or alphas.shape[0] < 3:
        raise ValueError("sharpness needs matching 1-D arrays of length >= 3")
    h = alphas[1] - alphas[0]
    if not np.allclose(np.diff(alphas), h):
        raise ValueError("sharpness needs a uniformly spaced alpha grid")
    i = int(np.argmin(np.abs(alphas)))
    if i == 0 or i == alphas.shape[0] - 1:
        raise ValueError("alpha = 0 must be an interior grid point")
    return float((values[i + 1] - 2.0 * values[i] + values[i - 1]) / (h * h))
