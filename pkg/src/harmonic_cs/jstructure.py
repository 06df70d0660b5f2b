"""Almost complex structures as endomorphism fields ``J^k_i``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _fd
from ._fd import DEFAULT_H
from .errors import DimensionError, ParameterError
from .forms import (
    BundleForm,
    _inner_values,
    _metric_trace,
    _nabla_coeff,
    exterior_d,
    hodge_laplace,
    wave_base,
)
from .geometry import ManifoldChart, _validated, sample_points


class AlmostComplexField(BundleForm):
    """Endomorphism field with ``J(x)^2 = -I`` pointwise."""

    def __init__(self, manifold, coeff, name="J"):
        super().__init__(manifold, 1, coeff, name)

    def _like(self, coeff, name):
        # linear combinations leave the constraint set
        return BundleForm(self.manifold, 1, coeff, name)

    def square_defect(self, points) -> float:
        """``max ||J^2 + I||`` over the given points (Frobenius, chart components)."""
        X, _ = _validated(self.manifold, points)
        Jx = self.coeff(X)
        return float(np.abs(Jx @ Jx + np.eye(self.dim)).max())


def _require_even(M: ManifoldChart):
    if M.dim % 2:
        raise DimensionError(f"{M.name} has odd dimension {M.dim}; no almost complex structure")


def standard_matrix(n: int) -> np.ndarray:
    """Block-diagonal ``J_0`` with blocks ``[[0, -1], [1, 0]]``."""
    if n % 2:
        raise DimensionError(f"odd dimension {n}")
    J0 = np.zeros((n, n))
    for a in range(0, n, 2):
        J0[a + 1, a] = 1.0
        J0[a, a + 1] = -1.0
    return J0


def make_standard(M: ManifoldChart) -> AlmostComplexField:
    _require_even(M)
    J0 = standard_matrix(M.dim)
    return AlmostComplexField(M, lambda X: np.broadcast_to(J0, (len(X),) + J0.shape).copy(), "J0")


def _bounded_q(M: ManifoldChart, seed: int):
    """Trigonometric matrix field rescaled so that ``||Q(x)||_F <= 1`` everywhere."""
    n = M.dim
    rng = np.random.default_rng(seed)
    terms, max_mode = 4, 1
    waves = rng.integers(-max_mode, max_mode + 1, (terms, n)) * wave_base(M)
    phases = rng.uniform(0.0, 2 * np.pi, terms)
    coefs = rng.standard_normal((terms, n * n))
    coefs /= np.sqrt(np.sum(np.abs(coefs).sum(axis=0) ** 2))

    def Q(X):
        return (np.cos(X @ waves.T + phases) @ coefs).reshape(len(X), n, n)

    return Q


def make_conjugated(
    M: ManifoldChart, seed: int, epsilon: float = 0.1, probe: int = 256
) -> AlmostComplexField:
    """``J = P J_0 P^{-1}`` with ``P = I + epsilon Q`` for a seeded smooth ``Q``.

    Since ``||Q|| <= 1``, ``P`` is invertible whenever ``epsilon < 1``.  For
    larger ``epsilon`` the construction is probed at random points and
    ``epsilon`` is halved (at most three times) if ``P`` is near singular.
    """
    _require_even(M)
    if epsilon < 0:
        raise ParameterError("epsilon must be non-negative")
    n = M.dim
    J0 = standard_matrix(n)
    Q = _bounded_q(M, seed)
    eye = np.eye(n)
    probe_pts = sample_points(M, probe, seed)
    for _ in range(4):
        cond = np.linalg.cond(eye + epsilon * Q(probe_pts))
        if np.all(cond < 1e8):
            break
        epsilon /= 2
    else:
        raise ParameterError("could not build an invertible conjugation field")

    eps = epsilon

    def coeff(X):
        P = eye + eps * Q(X)
        return P @ J0 @ _fd.inv(P)

    return AlmostComplexField(M, coeff, f"J[{seed},{eps:g}]")


def random_pointwise_j(n: int, count: int, seed: int, spread: float = 1.0) -> np.ndarray:
    """Random matrices with ``J^2 = -I``: ``P J_0 P^{-1}`` with ``P = I + spread * Gaussian``."""
    rng = np.random.default_rng(seed)
    J0 = standard_matrix(n)
    P = np.eye(n) + spread * rng.standard_normal((count, n, n)) / np.sqrt(n)
    return P @ J0 @ _fd.inv(P)


# ---------------------------------------------------------------------------
# batched pointwise quantities
# ---------------------------------------------------------------------------


def tensor_norm(vals: np.ndarray, g: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(_inner_values(vals, vals, g, ginv), 0.0))


def _nijenhuis_batch(J: BundleForm, X: np.ndarray, h: float) -> np.ndarray:
    Jx, D = _fd.split(_fd.on_stencil(J.coeff, X, h), J.dim, h)
    # D[b, a, k, i] = d_a J^k_i
    V = np.einsum("bai,balj->blij", Jx, D)
    W = V - np.swapaxes(V, -1, -2)
    return (
        np.einsum("bikj->bkij", D)
        - np.einsum("bjki->bkij", D)
        + np.einsum("bkl,blij->bkij", Jx, W)
    )


def nijenhuis(J: BundleForm, x, h: float = DEFAULT_H) -> np.ndarray:
    """Components ``N^k_ij`` of ``N(X,Y) = [JX,Y] + [X,JY] + J[JX,JY] - J[X,Y]``."""
    X, shape = _validated(J.manifold, x)
    N = _nijenhuis_batch(J, X, h)
    return N.reshape(shape + N.shape[1:])


def nijenhuis_field(J: BundleForm, h: float = DEFAULT_H) -> BundleForm:
    return BundleForm(J.manifold, 2, lambda X: _nijenhuis_batch(J, X, h), f"N({J.name})")


def integrability_defect(J: BundleForm, x, h: float = DEFAULT_H):
    """``max_{i,j} |dJ(d_i, d_j) - dJ(J d_i, J d_j) - N(d_i, d_j)|_g`` per point.

    The bracket identity behind it holds for every almost complex structure,
    integrable or not, so this is a residual rather than a property of ``J``.
    """
    M = J.manifold
    X, shape = _validated(M, x)
    dJ = exterior_d(J, h).coeff(X)
    Jx = J.coeff(X)
    dJJ = np.einsum("bkpq,bpi,bqj->bkij", dJ, Jx, Jx)
    diff = dJ - dJJ - _nijenhuis_batch(J, X, h)
    g = M.metric(X)
    lengths = np.sqrt(np.einsum("bkij,bkl,blij->bij", diff, g, diff))
    out = lengths.reshape(len(X), -1).max(axis=1)
    return out.reshape(shape) if shape else float(out[0])


def harmonic_residuals(J: BundleForm, x, h: float = DEFAULT_H):
    """``(sym_defect, trace_defect, laplace_norm)`` at ``x``.

    ``sym_defect`` is the norm of the antisymmetric part of
    ``(X, Y) -> (nabla_X J) Y`` (half of ``|dJ|``), ``trace_defect`` is
    ``|sum_i (nabla_{e_i} J) e_i| = |delta J|`` and ``laplace_norm`` is
    ``|Delta J|``.
    """
    M = J.manifold
    X, shape = _validated(M, x)
    g = M.metric(X)
    ginv = _fd.inv(g)
    B = _nabla_coeff(J, h)(X)
    anti = 0.5 * (B - np.swapaxes(B, 2, 3))
    tr = _metric_trace(ginv, B, 2, 3)
    sym = tensor_norm(anti, g, ginv)
    trace = np.sqrt(np.einsum("bk,bkl,bl->b", tr, g, tr))
    lap = tensor_norm(hodge_laplace(J, h).coeff(X), g, ginv)
    if not shape:
        return float(sym[0]), float(trace[0]), float(lap[0])
    return sym.reshape(shape), trace.reshape(shape), lap.reshape(shape)


@dataclass(frozen=True)
class DefectSummary:
    """Sup norms of the structure conditions over a sample set."""

    hermitian: float
    nearly_kaehler: float
    kaehler: float
    integrable: float
    harmonic: float
    samples: int


def pointwise_defects(J: BundleForm, X: np.ndarray, h: float = DEFAULT_H) -> dict:
    """Per-point defect norms (batched); :func:`structure_defects` takes their maxima."""
    M = J.manifold
    g = M.metric(X)
    ginv = _fd.inv(g)
    Jx = J.coeff(X)
    herm = np.einsum("bki,bkl,blj->bij", Jx, g, Jx) - g
    B = _nabla_coeff(J, h)(X)
    return {
        "hermitian": np.sqrt(np.einsum("bij,bik,bjl,bkl->b", herm, ginv, ginv, herm)),
        "nearly_kaehler": tensor_norm(B + np.swapaxes(B, 2, 3), g, ginv),
        "kaehler": tensor_norm(B, g, ginv),
        "integrable": tensor_norm(_nijenhuis_batch(J, X, h), g, ginv),
        "harmonic": tensor_norm(hodge_laplace(J, h).coeff(X), g, ginv),
    }


def structure_defects(J: BundleForm, points, h: float = DEFAULT_H) -> DefectSummary:
    X, _ = _validated(J.manifold, points)
    if len(X) == 0:
        raise ParameterError("need at least one sample point")
    d = pointwise_defects(J, X, h)
    return DefectSummary(**{k: float(v.max()) for k, v in d.items()}, samples=len(X))


def energy_density(J: BundleForm, x):
    """``e(J) = 1/2 sum_i <J e_i, J e_i>``; equals ``n/2`` exactly when ``J`` is orthogonal."""
    M = J.manifold
    X, shape = _validated(M, x)
    e = _energy_batch(J, X)
    return e.reshape(shape) if shape else float(e[0])


def _energy_batch(J: BundleForm, X: np.ndarray) -> np.ndarray:
    g = J.manifold.metric(X)
    Jx = J.coeff(X)
    return 0.5 * _inner_values(Jx, Jx, g, _fd.inv(g))
