"""Small dense linear-algebra kit: matrix exponential, controllability
Gramian, SPD solves, and seeded random number generation.

Everything works on float64 numpy arrays and checks dimensions explicitly;
nothing here broadcasts silently.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Shapes passed to an operation do not match its contract."""


class NotPositiveDefiniteError(ValueError):
    """Cholesky hit a non-positive pivot (uncontrollable or ill-conditioned system).

    The offending pivot value is kept on the `pivot` attribute.
    """

    def __init__(self, pivot: float, index: int):
        super().__init__(
            f"uncontrollable or ill-conditioned system: Cholesky pivot {pivot:.3e} "
            f"at index {index} is not positive"
        )
        self.pivot = float(pivot)
        self.index = int(index)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting anything else."""
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    return v


def check_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def mat_exp(a, t: float = 1.0, substeps_per_unit: int = 1000) -> np.ndarray:
    """exp(A t) computed by integrating X' = A X, X(0) = I with classical RK4.

    Parameters
    ----------
    a : (n, n) array
    t : float, finite
    substeps_per_unit : RK4 steps per unit of |t|, at least 1000 by contract.

    The step count scales with |t| so accuracy is uniform in the horizon.
    """
    A = check_square(a, "A")
    t = float(t)
    if not np.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    if substeps_per_unit < 1:
        raise ValueError("substeps_per_unit must be >= 1")
    n = A.shape[0]
    X = np.eye(n)
    if t == 0.0:
        return X
    steps = max(1, int(np.ceil(abs(t) * substeps_per_unit)))
    h = t / steps
    for _ in range(steps):
        k1 = A @ X
        k2 = A @ (X + 0.5 * h * k1)
        k3 = A @ (X + 0.5 * h * k2)
        k4 = A @ (X + h * k3)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return X


def gramian(a, b, horizon: float, steps: int = 2000) -> np.ndarray:
    """Controllability Gramian W(T) = int_0^T exp(A s) B B^T exp(A^T s) ds.

    Trapezoidal rule on a uniform grid with `steps` panels; the result is
    symmetrized before returning so downstream Cholesky never sees the
    rounding skew of the accumulation order.
    """
    A = check_square(a, "A")
    B = as_matrix(b, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionError(
            f"B must have {A.shape[0]} rows to match A, got shape {B.shape}"
        )
    horizon = float(horizon)
    if horizon <= 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if steps < 100:
        raise ValueError(f"gramian needs at least 100 steps, got {steps}")
    dt = horizon / steps
    step_mat = mat_exp(A, dt)
    n = A.shape[0]
    W = np.zeros((n, n))
    E = np.eye(n)  # exp(A * 0)
    for j in range(steps + 1):
        EB = E @ B
        G = EB @ EB.T
        weight = 0.5 if j in (0, steps) else 1.0
        W += weight * G
        if j < steps:
            E = step_mat @ E
    W *= dt
    return 0.5 * (W + W.T)


def cholesky(a) -> np.ndarray:
    """Lower-triangular L with L L^T = A for symmetric positive-definite A.

    Raises NotPositiveDefiniteError (with the pivot value) on the first
    non-positive pivot, which is how singular Gramians of uncontrollable
    systems surface.
    """
    A = check_square(a, "A")
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12):
        raise ValueError("cholesky requires a symmetric matrix")
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= 0.0 or not np.isfinite(pivot):
            raise NotPositiveDefiniteError(pivot, j)
        L[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (A[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


def solve_spd(a, rhs) -> np.ndarray:
    """Solve A x = rhs for symmetric positive-definite A via Cholesky."""
    A = check_square(a, "A")
    v = as_vector(rhs, "rhs")
    if v.shape[0] != A.shape[0]:
        raise DimensionError(
            f"rhs length {v.shape[0]} does not match matrix size {A.shape[0]}"
        )
    L = cholesky(A)
    n = A.shape[0]
    # forward substitution L y = v
    y = np.zeros(n)
    for i in range(n):
        y[i] = (v[i] - L[i, :i] @ y[:i]) / L[i, i]
    # back substitution L^T x = y
    x = np.zeros(n)
    for i in reversed(range(n)):
        x[i] = (y[i] - L[i + 1 :, i] @ x[i + 1 :]) / L[i, i]
    return x


class SeededRng:
    """Deterministic random stream: PCG64 with numpy's ziggurat normals.

    Equal seeds give equal streams on every platform for a pinned numpy
    version, which is what experiment manifests rely on.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        if not high >= low:
            raise ValueError(f"uniform needs high >= low, got [{low}, {high}]")
        return self._gen.uniform(low, high, size)

    def normal(self, size=None):
        """Standard normal draws."""
        return self._gen.standard_normal(size)

    def integers(self, low: int, high: int) -> int:
        """One integer uniform on [low, high)."""
        return int(self._gen.integers(low, high))
