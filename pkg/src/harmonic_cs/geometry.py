"""Single-chart Riemannian manifolds.

Curvature follows the sign convention

    R(X, Y) = -nabla_X nabla_Y + nabla_Y nabla_X + nabla_[X, Y]

which is the negative of the usual one.  With it the unit sphere has
``<R(e_i, e_j) e_k, e_m> = delta_ik delta_jm - delta_jk delta_im`` and
positive scalar curvature ``n (n - 1)``.

Array layouts (leading batch axis omitted):

* metric ``g[i, j]``
* Christoffel symbols ``gamma[k, i, j] = Gamma^k_ij``
* curvature ``riem[m, i, j, k] = R^m_ijk`` with ``R(d_i, d_j) d_k = R^m_ijk d_m``
* frames ``E[:, a]`` = coordinate components of the frame vector ``e_a``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _fd
from ._fd import DEFAULT_H
from .errors import (
    DegenerateMetricError,
    DomainError,
    ParameterError,
    UnsupportedManifoldError,
)

BatchFn = Callable[[np.ndarray], np.ndarray]

SPHERE_SAMPLE_RADIUS = 3.0


@dataclass(frozen=True)
class ManifoldChart:
    """A Riemannian manifold covered by one chart.

    All callables act on batches: ``metric(X)`` maps ``(B, n)`` points to
    ``(B, n, n)`` matrices.  ``exact_christoffel`` and ``exact_riemann`` are
    optional closed forms; when missing they are computed by central
    differences.  ``period`` is set only for flat tori and enables the
    uniform-grid quadrature rule.
    """

    name: str
    dim: int
    metric: BatchFn
    domain: Callable[[np.ndarray], np.ndarray]
    exact_christoffel: Optional[BatchFn] = None
    exact_riemann: Optional[BatchFn] = None
    period: Optional[float] = None
    params: dict = field(default_factory=dict)

    @property
    def has_quadrature(self) -> bool:
        return self.period is not None

    def without_exact_data(self) -> "ManifoldChart":
        """Same metric, with connection and curvature left to finite differences."""
        return ManifoldChart(
            name=self.name,
            dim=self.dim,
            metric=self.metric,
            domain=self.domain,
            period=self.period,
            params={**self.params, "exact": False},
        )


# ---------------------------------------------------------------------------
# batched internals (no validation; used inside stencils)
# ---------------------------------------------------------------------------


def _christoffel_batch(M: ManifoldChart, X: np.ndarray, h: float) -> np.ndarray:
    if M.exact_christoffel is not None:
        return M.exact_christoffel(X)
    g, dg = _fd.split(_fd.on_stencil(M.metric, X, h), M.dim, h)
    ginv = _fd.inv(g)
    # dg[b, l, i, j] = d_l g_ij
    lowered = 0.5 * (
        np.einsum("bijl->blij", dg) + np.einsum("bjil->blij", dg) - dg
    )
    return np.einsum("bkl,blij->bkij", ginv, lowered)


def _riemann_batch(M: ManifoldChart, X: np.ndarray, h: float) -> np.ndarray:
    if M.exact_riemann is not None:
        return M.exact_riemann(X)
    gam, dgam = _fd.split(
        _fd.on_stencil(lambda Y: _christoffel_batch(M, Y, h), X, h), M.dim, h
    )
    # dgam[b, a, m, j, k] = d_a Gamma^m_jk ; usual-sign tensor first
    usual = (
        np.einsum("bimjk->bmijk", dgam)
        - np.einsum("bjmik->bmijk", dgam)
        + np.einsum("bmip,bpjk->bmijk", gam, gam)
        - np.einsum("bmjp,bpik->bmijk", gam, gam)
    )
    return -usual


def _inverse_metric(g: np.ndarray) -> np.ndarray:
    return _fd.inv(g)


def _frames_batch(g: np.ndarray, seed: Optional[int] = None) -> np.ndarray:
    """Gram-Schmidt (in the metric) of a fixed basis, for every point at once."""
    n = g.shape[-1]
    if seed is None:
        basis = np.eye(n)
    else:
        basis = np.random.default_rng(seed).standard_normal((n, n))
    gram = np.einsum("ip,bij,jq->bpq", basis, g, basis)
    try:
        chol = _fd.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError("metric is not positive definite") from exc
    # E = basis @ chol^{-T}; chol^{-T} is upper triangular, i.e. Gram-Schmidt in order
    return np.einsum("ai,bij->baj", basis, _fd.inv(np.swapaxes(chol, -1, -2)))


# ---------------------------------------------------------------------------
# public point operations
# ---------------------------------------------------------------------------


def _validated(M: ManifoldChart, x) -> tuple[np.ndarray, tuple]:
    X, shape = _fd.as_batch(x, M.dim)
    inside = np.asarray(M.domain(X), dtype=bool)
    if not inside.all():
        raise DomainError(f"point outside the domain of {M.name}: {X[~inside][0]}")
    g = M.metric(X)
    if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=1e-12, atol=1e-14):
        raise DegenerateMetricError(f"metric of {M.name} is not symmetric")
    if np.any(np.linalg.eigvalsh(g.astype(float))[:, 0] <= 0.0):
        raise DegenerateMetricError(f"metric of {M.name} is not positive definite")
    return X, shape


def _unbatch(arr: np.ndarray, shape: tuple) -> np.ndarray:
    return arr.reshape(shape + arr.shape[1:])


def metric(M: ManifoldChart, x) -> np.ndarray:
    X, shape = _validated(M, x)
    return _unbatch(M.metric(X), shape)


def christoffel(M: ManifoldChart, x, h: float = DEFAULT_H) -> np.ndarray:
    """Levi-Civita symbols ``Gamma^k_ij`` at ``x`` (one point or a batch)."""
    if h <= 0:
        raise ParameterError("step size must be positive")
    X, shape = _validated(M, x)
    return _unbatch(_christoffel_batch(M, X, h), shape)


def riemann(M: ManifoldChart, x, h: float = DEFAULT_H) -> np.ndarray:
    """Curvature components ``R^m_ijk`` (array ``[m, i, j, k]``) at ``x``."""
    if h <= 0:
        raise ParameterError("step size must be positive")
    X, shape = _validated(M, x)
    return _unbatch(_riemann_batch(M, X, h), shape)


def orthonormal_frame(M: ManifoldChart, x, seed: Optional[int] = None) -> np.ndarray:
    """Orthonormal frame at ``x``; column ``a`` holds the components of ``e_a``.

    Without a seed the coordinate basis is orthonormalised in index order.  A
    seed replaces it by a seeded random basis, which is handy for checking
    that frame-summed quantities do not depend on the frame.
    """
    X, shape = _validated(M, x)
    return _unbatch(_frames_batch(M.metric(X), seed), shape)


def lower_riemann(g: np.ndarray, riem: np.ndarray) -> np.ndarray:
    """``R_ijkm = g_ml R^l_ijk`` for batched arrays."""
    return np.einsum("bml,blijk->bijkm", g, riem)


def frame_riemann(riem: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Curvature in an orthonormal frame, fully lowered: ``R_ijkm = <R(e_i,e_j)e_k, e_m>``."""
    Einv = _fd.inv(E)
    comps = np.einsum("zma,zapqr,zpi,zqj,zrk->zmijk", Einv, riem, E, E, E)
    return np.einsum("zmijk->zijkm", comps)


def scalar_curvature(M: ManifoldChart, x, h: float = DEFAULT_H, seed: Optional[int] = None):
    """``sum_ij <R(e_i, e_j) e_i, e_j>`` over an orthonormal frame."""
    X, shape = _validated(M, x)
    E = _frames_batch(M.metric(X), seed)
    Rf = frame_riemann(_riemann_batch(M, X, h), E)
    scal = np.einsum("bijij->b", Rf)
    return scal.reshape(shape) if shape else float(scal[0])


# ---------------------------------------------------------------------------
# built-in manifolds
# ---------------------------------------------------------------------------


def _finite(X):
    return np.all(np.isfinite(X), axis=-1)


def flat_torus(n: int = 2, L: float = 2 * np.pi) -> ManifoldChart:
    if int(n) != n or n < 1:
        raise ParameterError(f"dimension must be a positive integer, got {n}")
    if not L > 0:
        raise ParameterError(f"period must be positive, got {L}")
    n = int(n)

    def g(X):
        return np.broadcast_to(np.eye(n), (X.shape[0], n, n)).copy()

    return ManifoldChart(
        name="flat_torus",
        dim=n,
        metric=g,
        domain=_finite,
        exact_christoffel=lambda X: np.zeros((X.shape[0], n, n, n)),
        exact_riemann=lambda X: np.zeros((X.shape[0], n, n, n, n)),
        period=float(L),
        params={"n": n, "L": float(L)},
    )


def _conformal_christoffel(du: np.ndarray) -> np.ndarray:
    """Gamma for ``g = exp(2u) * identity`` given ``du[b, i] = d_i u``."""
    n = du.shape[-1]
    eye = np.eye(n)
    return (
        np.einsum("ki,bj->bkij", eye, du)
        + np.einsum("kj,bi->bkij", eye, du)
        - np.einsum("ij,bk->bkij", eye, du)
    )


def _sphere_factor(X):
    return 4.0 / (1.0 + np.sum(X * X, axis=-1)) ** 2


def round_sphere(n: int = 2) -> ManifoldChart:
    """Unit sphere in the stereographic chart ``g = 4 / (1 + |x|^2)^2 * identity``."""
    if int(n) != n or n < 1:
        raise ParameterError(f"dimension must be a positive integer, got {n}")
    n = int(n)
    eye = np.eye(n)

    def g(X):
        return _sphere_factor(X)[:, None, None] * eye

    def gamma(X):
        du = -2.0 * X / (1.0 + np.sum(X * X, axis=-1))[:, None]
        return _conformal_christoffel(du)

    def riem(X):
        # constant curvature 1: R^m_ijk = g_ik delta^m_j - g_jk delta^m_i
        G = g(X)
        return np.einsum("bik,mj->bmijk", G, eye) - np.einsum("bjk,mi->bmijk", G, eye)

    return ManifoldChart(
        name="round_sphere",
        dim=n,
        metric=g,
        domain=_finite,
        exact_christoffel=gamma,
        exact_riemann=riem,
        params={"n": n},
    )


@dataclass(frozen=True)
class _Bump:
    """Trigonometric polynomial in the ambient coordinates of the embedded sphere.

    Amplitudes sum to one in absolute value, so ``|b| <= 1`` everywhere.
    """

    amps: np.ndarray
    waves: np.ndarray
    phases: np.ndarray

    @classmethod
    def seeded(cls, n: int, seed: int, terms: int = 4) -> "_Bump":
        rng = np.random.default_rng(seed)
        amps = rng.uniform(-1.0, 1.0, terms)
        amps /= np.abs(amps).sum()
        waves = rng.uniform(-1.5, 1.5, (terms, n + 1))
        phases = rng.uniform(0.0, 2 * np.pi, terms)
        return cls(amps, waves, phases)

    @staticmethod
    def embed(X):
        r2 = np.sum(X * X, axis=-1)[:, None]
        return np.concatenate([2.0 * X / (1.0 + r2), (r2 - 1.0) / (1.0 + r2)], axis=-1)

    def value(self, X):
        arg = self.embed(X) @ self.waves.T + self.phases
        return np.cos(arg) @ self.amps

    def grad(self, X):
        n = X.shape[-1]
        r2 = np.sum(X * X, axis=-1)
        arg = self.embed(X) @ self.waves.T + self.phases
        dby = -(np.sin(arg) * self.amps) @ self.waves  # (B, n+1)
        s = 1.0 + r2
        # jacobian of the inverse stereographic map, dy_a / dx_i
        jac = np.empty((X.shape[0], n + 1, n))
        jac[:, :n, :] = 2.0 * np.eye(n) / s[:, None, None] - 4.0 * np.einsum(
            "ba,bi->bai", X, X
        ) / (s**2)[:, None, None]
        jac[:, n, :] = 4.0 * X / (s**2)[:, None]
        return np.einsum("ba,bai->bi", dby, jac)


def perturbed_sphere(n: int = 6, epsilon: float = 0.05, seed: int = 0) -> ManifoldChart:
    """Round metric scaled pointwise by ``1 + epsilon * b`` for a seeded smooth bump ``b``."""
    if not 0.0 <= epsilon <= 0.2:
        raise ParameterError(f"epsilon must lie in [0, 0.2], got {epsilon}")
    base = round_sphere(n)
    bump = _Bump.seeded(base.dim, seed)
    eye = np.eye(base.dim)

    def g(X):
        return (_sphere_factor(X) * (1.0 + epsilon * bump.value(X)))[:, None, None] * eye

    def gamma(X):
        s = 1.0 + np.sum(X * X, axis=-1)
        du = -2.0 * X / s[:, None]
        du = du + 0.5 * epsilon * bump.grad(X) / (1.0 + epsilon * bump.value(X))[:, None]
        return _conformal_christoffel(du)

    return ManifoldChart(
        name="perturbed_sphere",
        dim=base.dim,
        metric=g,
        domain=_finite,
        exact_christoffel=gamma,
        params={"n": base.dim, "epsilon": float(epsilon), "seed": int(seed)},
    )


_REGISTRY = {
    "flat_torus": flat_torus,
    "round_sphere": round_sphere,
    "perturbed_sphere": perturbed_sphere,
}


def builtin_names() -> list[str]:
    return sorted(_REGISTRY)


def builtin(name: str, exact: bool = True, **params) -> ManifoldChart:
    """Look up a built-in manifold by name.

    ``exact=False`` drops the closed-form connection and curvature so that
    everything is computed from the metric by finite differences.
    """
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ParameterError(
            f"unknown manifold {name!r}; choose from {', '.join(builtin_names())}"
        ) from None
    try:
        M = factory(**params)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {name}: {exc}") from None
    return M if exact else M.without_exact_data()


# ---------------------------------------------------------------------------
# sampling and quadrature
# ---------------------------------------------------------------------------


def sample_points(M: ManifoldChart, count: int, seed: int = 0) -> np.ndarray:
    """Random chart points: uniform on the torus cell, uniform in a ball of radius 3 otherwise."""
    rng = np.random.default_rng(seed)
    n = M.dim
    if M.period is not None:
        return rng.uniform(0.0, M.period, (count, n))
    direction = rng.standard_normal((count, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = SPHERE_SAMPLE_RADIUS * rng.uniform(0.0, 1.0, count) ** (1.0 / n)
    return direction * radius[:, None]


def quadrature_grid(M: ManifoldChart, resolution: int) -> tuple[np.ndarray, float]:
    """Nodes and the common weight of the periodic trapezoid rule on a flat torus."""
    if M.period is None:
        raise UnsupportedManifoldError(f"{M.name} has no quadrature rule")
    axes = [np.arange(resolution) * (M.period / resolution)] * M.dim
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, M.dim)
    return nodes, (M.period / resolution) ** M.dim
