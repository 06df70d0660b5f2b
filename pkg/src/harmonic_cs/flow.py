"""Constrained Dirichlet-energy flow of 2x2 complex structures on a periodic grid.

A grid field stores one real 2x2 matrix with ``J^2 = -I`` per node of an
``N x N`` periodic grid of side ``L``.  One step moves every node along the
discrete Laplacian and projects back to the constraint set with the retraction
``A -> A (-A^2)^{-1/2}``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonRetractableError, ParameterError
from .geometry import flat_torus
from .jstructure import make_conjugated, standard_matrix

DB_MAX_ITER = 50
DB_TOL = 1e-13
MAX_HALVINGS = 20
CONSTRAINT_TOL = 1e-8
CSV_HEADER = ("iter", "energy", "max_grad", "max_constraint")


@dataclass(frozen=True)
class GridField:
    """``values[i, j]`` is the matrix at the node ``(i, j) * spacing``."""

    values: np.ndarray
    L: float = 2 * np.pi

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 4 or v.shape[0] != v.shape[1] or v.shape[2:] != (2, 2):
            raise ParameterError(f"grid values must have shape (N, N, 2, 2), got {v.shape}")
        if v.shape[0] < 2:
            raise ParameterError("grid needs at least 2 nodes per side")
        if not self.L > 0:
            raise ParameterError("L must be positive")
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return self.L / self.N

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(N, N, 2)``."""
        t = np.arange(self.N) * self.spacing
        return np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)

    def with_values(self, values) -> "GridField":
        return GridField(values, self.L)


def grid_from_function(f: Callable, N: int, L: float = 2 * np.pi) -> GridField:
    """Sample a batched matrix function ``f((B, 2)) -> (B, 2, 2)`` at the grid nodes."""
    nodes = GridField(np.zeros((N, N, 2, 2)), L).nodes()
    return GridField(np.asarray(f(nodes.reshape(-1, 2))).reshape(N, N, 2, 2), L)


def constant_grid(N: int, L: float = 2 * np.pi, J=None) -> GridField:
    J = standard_matrix(2) if J is None else np.asarray(J, dtype=float)
    return GridField(np.broadcast_to(J, (N, N, 2, 2)).copy(), L)


def conjugated_grid(N: int, L: float = 2 * np.pi, seed: int = 0, epsilon: float = 0.5) -> GridField:
    """Samples of ``P J_0 P^{-1}``, the smooth conjugated structure on the flat 2-torus."""
    J = make_conjugated(flat_torus(2, L), seed, epsilon)
    return grid_from_function(J.coeff, N, L)


def constraint_defect(F: GridField) -> np.ndarray:
    """Per-node Frobenius norm of ``J^2 + I``."""
    V = F.values
    return np.linalg.norm(V @ V + np.eye(2), axis=(-2, -1))


def _shift(V, k, axis):
    return np.roll(V, -k, axis=axis)


def dirichlet_energy(F: GridField, scheme: str = "forward") -> float:
    """Discrete ``1/2 * integral |grad J|^2`` with node weight ``spacing^2``.

    ``scheme="forward"`` uses one-sided differences, whose exact gradient is
    the five-point Laplacian.  ``scheme="central"`` uses ``(J(p+d) - J(p-d)) / 2s``;
    it vanishes on the period-two checkerboard, so it is kept for comparison
    only.
    """
    V = F.values
    if scheme == "forward":
        diffs = [_shift(V, 1, a) - V for a in (0, 1)]
    elif scheme == "central":
        diffs = [0.5 * (_shift(V, 1, a) - _shift(V, -1, a)) for a in (0, 1)]
    else:
        raise ParameterError(f"unknown energy scheme {scheme!r}")
    # |D/s|^2 * s^2 = |D|^2
    return 0.5 * float(sum(np.sum(D * D) for D in diffs))


def discrete_laplacian(F: GridField) -> np.ndarray:
    """Five-point periodic Laplacian of every matrix entry."""
    V = F.values
    lap = -4.0 * V
    for a in (0, 1):
        lap = lap + _shift(V, 1, a) + _shift(V, -1, a)
    return lap / F.spacing**2


def _inv2(M):
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    adj = np.stack(
        [np.stack([M[..., 1, 1], -M[..., 0, 1]], -1), np.stack([-M[..., 1, 0], M[..., 0, 0]], -1)], -2
    )
    return adj / det[..., None, None]


def inverse_sqrt(M, max_iter: int = DB_MAX_ITER, tol: float = DB_TOL):
    """Denman-Beavers iteration for batched 2x2 ``M^{-1/2}``.

    ``Y_k -> M^{1/2}`` and ``Z_k -> M^{-1/2}``.  Raises
    :class:`NonRetractableError` when the iteration does not settle.
    """
    Y = np.array(M, dtype=float)
    Z = np.broadcast_to(np.eye(2), Y.shape).copy()
    for _ in range(max_iter):
        Y_new = 0.5 * (Y + _inv2(Z))
        Z_new = 0.5 * (Z + _inv2(Y))
        step = np.linalg.norm(Y_new - Y, axis=(-2, -1)) / np.linalg.norm(Y_new, axis=(-2, -1))
        Y, Z = Y_new, Z_new
        if not np.all(np.isfinite(step)):
            break
        if np.max(step, initial=0.0) <= tol:
            return Z
    raise NonRetractableError("Denman-Beavers iteration did not converge")


def retract(A):
    """Nearest-structure map ``A (-A^2)^{-1/2}`` for one or many 2x2 matrices.

    Requires every ``A`` to have a pair of non-real eigenvalues, that is
    ``tr(A)^2 < 4 det(A)``.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[-2:] != (2, 2):
        raise ParameterError(f"expected 2x2 matrices, got shape {A.shape}")
    tr = A[..., 0, 0] + A[..., 1, 1]
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    if np.any(tr * tr - 4.0 * det >= 0.0):
        raise NonRetractableError("matrix with real eigenvalues cannot be retracted")
    return A @ inverse_sqrt(-(A @ A))


@dataclass
class StepResult:
    field: GridField
    energy: float
    tau: float
    halvings: int
    accepted: bool


def flow_step(F: GridField, tau: float, energy: Optional[float] = None) -> StepResult:
    """One backtracking step ``J + tau * Lap(J)`` followed by node-wise retraction.

    ``tau`` is halved until the energy does not increase; after
    ``MAX_HALVINGS`` halvings the step is rejected and the input returned.
    """
    if not tau > 0:
        raise ParameterError("tau must be positive")
    E0 = dirichlet_energy(F) if energy is None else energy
    lap = discrete_laplacian(F)
    t = tau
    for halvings in range(MAX_HALVINGS + 1):
        try:
            cand = F.with_values(retract(F.values + t * lap))
        except NonRetractableError:
            cand = None
        if cand is not None:
            E1 = dirichlet_energy(cand)
            if E1 <= E0:
                return StepResult(cand, E1, t, halvings, True)
        t *= 0.5
    return StepResult(F, E0, t, MAX_HALVINGS, False)


@dataclass
class FlowTrace:
    """One row per iterate; ``rows[0]`` describes the initial field."""

    rows: list = field(default_factory=list)
    status: str = "running"
    final: Optional[GridField] = None

    def record(self, it: int, F: GridField, energy: float):
        grad = np.linalg.norm(discrete_laplacian(F), axis=(-2, -1)).max()
        self.rows.append((it, energy, float(grad), float(constraint_defect(F).max())))

    @property
    def energies(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def max_grad(self) -> float:
        return self.rows[-1][2]

    @property
    def iterations(self) -> int:
        return self.rows[-1][0]

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.energies) <= 0.0))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for it, e, g, c in self.rows:
                w.writerow([it, f"{e:.17g}", f"{g:.17g}", f"{c:.17g}"])


def default_tau(F: GridField) -> float:
    return 0.2 * F.spacing**2


def run_flow(
    init: GridField, tau: Optional[float] = None, tol: float = 1e-4, max_iter: int = 100_000
) -> FlowTrace:
    """Iterate :func:`flow_step` until ``max |Lap J| <= tol``.

    The terminal status is ``"converged"``, ``"max-iter"`` or ``"stalled"``.
    """
    if max_iter < 0:
        raise ParameterError("max_iter must be non-negative")
    if float(constraint_defect(init).max()) > CONSTRAINT_TOL:
        raise ParameterError("initial field violates J^2 = -I")
    tau = default_tau(init) if tau is None else tau
    trace = FlowTrace()
    F, E = init, dirichlet_energy(init)
    trace.record(0, F, E)
    for it in range(1, max_iter + 1):
        if trace.max_grad <= tol:
            trace.status = "converged"
            break
        res = flow_step(F, tau, E)
        if not res.accepted:
            trace.status = "stalled"
            break
        F, E = res.field, res.energy
        trace.record(it, F, E)
    else:
        trace.status = "converged" if trace.max_grad <= tol else "max-iter"
    trace.final = F
    return trace
