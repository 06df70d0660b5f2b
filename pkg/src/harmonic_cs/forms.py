"""Tangent-bundle-valued tensor fields and forms.

A field of valence ``q`` is a coefficient function returning, per point, the
array ``T[k, i_1, ..., i_q] = T^k_{i_1...i_q}``: one tangent (value) index
followed by ``q`` covariant slots.  Operators build new fields lazily; their
coefficient functions evaluate the parent on a central-difference stencil.

Conventions used throughout:

* ``nabla T`` puts the derivative direction in the first covariant slot.
* ``d w (X_0..X_p) = sum_k (-1)^k (nabla_{X_k} w)(X_0..^X_k..X_p)``
* ``delta w (X_1..X_{p-1}) = -g^{jm} (nabla_j w)(d_m, X_1, ...)``
* ``Delta = d delta + delta d`` and ``nabla^2 w = g^{jm} nabla^2_{j,m} w``
* ``S(X_1..X_p) = sum_k (-1)^k sum_i (R(e_i, X_k) w)(e_i, X_1..^X_k..X_p)``

so that ``Delta w = -nabla^2 w + S`` with the curvature sign of
:mod:`harmonic_cs.geometry`.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Optional

import numpy as np

from . import _fd
from ._fd import DEFAULT_H
from .errors import ValenceError
from .geometry import (
    ManifoldChart,
    _christoffel_batch,
    _frames_batch,
    _riemann_batch,
    _validated,
)


class TangentTensorField:
    """A ``TM``-valued covariant tensor field given by its coefficient function."""

    def __init__(self, manifold: ManifoldChart, valence: int, coeff: Callable, name: str = ""):
        if valence < 0:
            raise ValenceError("valence must be non-negative")
        self.manifold = manifold
        self.valence = valence
        self.coeff = coeff
        self.name = name

    @property
    def dim(self) -> int:
        return self.manifold.dim

    def __call__(self, x) -> np.ndarray:
        X, shape = _validated(self.manifold, x)
        vals = self.coeff(X)
        return vals.reshape(shape + vals.shape[1:])

    def _like(self, coeff, name):
        return type(self)(self.manifold, self.valence, coeff, name)

    def __add__(self, other):
        _same_kind(self, other)
        return self._like(lambda X: self.coeff(X) + other.coeff(X), f"({self.name}+{other.name})")

    def __sub__(self, other):
        _same_kind(self, other)
        return self._like(lambda X: self.coeff(X) - other.coeff(X), f"({self.name}-{other.name})")

    def __rmul__(self, c: float):
        c = float(c)
        return self._like(lambda X: c * self.coeff(X), f"{c}*{self.name}")

    def __neg__(self):
        return (-1.0) * self

    def __repr__(self):
        return f"{type(self).__name__}({self.name or '?'}, valence={self.valence}, on {self.manifold.name})"


class BundleForm(TangentTensorField):
    """A field antisymmetric in its covariant slots, i.e. a ``TM``-valued ``p``-form."""

    @property
    def degree(self) -> int:
        return self.valence


def _same_kind(a, b):
    if a.valence != b.valence or a.manifold is not b.manifold:
        raise ValenceError("fields must share valence and manifold")


def _as_form(T: TangentTensorField) -> BundleForm:
    if isinstance(T, BundleForm):
        return T
    return BundleForm(T.manifold, T.valence, T.coeff, T.name)


# ---------------------------------------------------------------------------
# pointwise tensor algebra on batches
# ---------------------------------------------------------------------------


def _contract_slot(T: np.ndarray, A: np.ndarray, axis: int) -> np.ndarray:
    """``sum_i T[..., i, ...] A[b, i, j]`` with ``j`` left at ``axis``."""
    Tm = np.moveaxis(T, axis, -1)
    out = np.einsum("b...i,bij->b...j", Tm, A)
    return np.moveaxis(out, -1, axis)


def _metric_trace(ginv: np.ndarray, T: np.ndarray, a1: int, a2: int) -> np.ndarray:
    """Contract array axes ``a1`` and ``a2`` of ``T`` with ``g^{ij}``."""
    Tm = np.moveaxis(T, (a1, a2), (-2, -1))
    return np.einsum("b...ij,bij->b...", Tm, ginv)


def _inner_values(w: np.ndarray, eta: np.ndarray, g: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """``g_ab g^{s1 t1}...g^{sp tp} w^a_s eta^b_t``; frame-free."""
    low = _contract_slot(w, g, 1)
    for ax in range(2, w.ndim):
        low = _contract_slot(low, ginv, ax)
    return np.einsum("bi,bi->b", low.reshape(len(low), -1), eta.reshape(len(eta), -1))


def curvature_action_values(riem: np.ndarray, w: np.ndarray) -> np.ndarray:
    """All ``R(d_i, d_l) w`` at once, as ``C[b, a, i, l, t_1..t_p]``.

    ``(R(X,Y)w)(Z..) = R(X,Y)(w(Z..)) - sum_s w(.., R(X,Y)Z_s, ..)``
    """
    p = w.ndim - 2
    C = np.einsum("bailc,bc...->bail...", riem, w)
    for s in range(1, p + 1):
        wm = np.moveaxis(w, 1 + s, -1)
        U = np.einsum("b...c,bcilt->b...ilt", wm, riem)
        # U axes: b, a, (p-1 other slots), i, l, t_s
        U = np.moveaxis(U, (p + 1, p + 2), (2, 3))
        C = C - np.moveaxis(U, -1, 3 + s)
    return C


def weitzenboeck_values(riem: np.ndarray, w: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    p = w.ndim - 2
    if p == 0:
        return np.zeros_like(w)
    C = curvature_action_values(riem, w)
    # trace of the frame vector e_i against the first slot of w
    U = _metric_trace(ginv, C, 2, 4)
    return sum((-1) ** k * np.moveaxis(U, 2, 1 + k) for k in range(1, p + 1))


# ---------------------------------------------------------------------------
# differential operators (lazy fields)
# ---------------------------------------------------------------------------


def _nabla_coeff(T: TangentTensorField, h: float):
    M, q, n = T.manifold, T.valence, T.dim

    def coeff(X):
        T0, grad = _fd.split(_fd.on_stencil(T.coeff, X, h), n, h)
        out = np.moveaxis(grad, 1, 2)  # (B, k, j, slots)
        gam = _christoffel_batch(M, X, h)
        out = out + np.einsum("bkjm,bm...->bkj...", gam, T0)
        for a in range(1, q + 1):
            Tm = np.moveaxis(T0, 1 + a, -1)
            U = np.einsum("b...m,bmji->b...ji", Tm, gam)
            U = np.moveaxis(U, -2, 2)
            out = out - np.moveaxis(U, -1, 2 + a)
        return out

    return coeff


def covariant_derivative(T: TangentTensorField, h: float = DEFAULT_H) -> TangentTensorField:
    """``nabla T`` of valence ``q + 1``; the new slot (derivative direction) comes first."""
    return TangentTensorField(T.manifold, T.valence + 1, _nabla_coeff(T, h), f"nabla {T.name}")


def exterior_d(w: TangentTensorField, h: float = DEFAULT_H) -> BundleForm:
    p = w.valence
    if p >= w.dim:
        raise ValenceError(f"d of a {p}-form vanishes identically on a {w.dim}-manifold")
    nab = _nabla_coeff(w, h)

    def coeff(X):
        A = nab(X)
        return sum((-1) ** k * np.moveaxis(A, 2, 2 + k) for k in range(p + 1))

    return BundleForm(w.manifold, p + 1, coeff, f"d {w.name}")


def codifferential(w: TangentTensorField, h: float = DEFAULT_H) -> BundleForm:
    p = w.valence
    if p == 0:
        raise ValenceError("codifferential of a 0-form is not defined")
    M = w.manifold
    nab = _nabla_coeff(w, h)

    def coeff(X):
        ginv = _fd.inv(M.metric(X))
        return -_metric_trace(ginv, nab(X), 2, 3)

    return BundleForm(M, p - 1, coeff, f"delta {w.name}")


def hodge_laplace(w: TangentTensorField, h: float = DEFAULT_H) -> BundleForm:
    """``d delta w + delta d w``; only the defined half is used for ``p = 0`` or ``p = n``."""
    p, n = w.valence, w.dim
    if p == 0:
        return _renamed(codifferential(exterior_d(w, h), h), f"Delta {w.name}")
    if p == n:
        return _renamed(exterior_d(codifferential(w, h), h), f"Delta {w.name}")
    a = exterior_d(codifferential(w, h), h)
    b = codifferential(exterior_d(w, h), h)
    return BundleForm(w.manifold, p, lambda X: a.coeff(X) + b.coeff(X), f"Delta {w.name}")


def _renamed(w, name):
    w.name = name
    return w


def rough_laplacian(w: TangentTensorField, h: float = DEFAULT_H) -> TangentTensorField:
    """Metric trace of the second covariant derivative."""
    M = w.manifold
    hess = _nabla_coeff(covariant_derivative(w, h), h)

    def coeff(X):
        ginv = _fd.inv(M.metric(X))
        return _metric_trace(ginv, hess(X), 2, 3)

    return type(w)(M, w.valence, coeff, f"nabla^2 {w.name}")


def weitzenboeck_term(w: TangentTensorField, h: float = DEFAULT_H) -> BundleForm:
    """The zeroth-order curvature term ``S`` with ``Delta w = -nabla^2 w + S``."""
    M = w.manifold

    def coeff(X):
        ginv = _fd.inv(M.metric(X))
        return weitzenboeck_values(_riemann_batch(M, X, h), w.coeff(X), ginv)

    return BundleForm(M, w.valence, coeff, f"S {w.name}")


def d_squared_defect(w: TangentTensorField, h: float = DEFAULT_H) -> BundleForm:
    """``d(d w)``; zero on flat manifolds, a curvature term otherwise."""
    if w.valence + 2 > w.dim:
        raise ValenceError("d(d w) needs p + 2 <= n")
    return _renamed(exterior_d(exterior_d(w, h), h), f"dd {w.name}")


# ---------------------------------------------------------------------------
# pointwise evaluations
# ---------------------------------------------------------------------------


def curvature_action(
    w: TangentTensorField, i: int, j: int, x, h: float = DEFAULT_H, seed: Optional[int] = None
) -> np.ndarray:
    """Coordinate components of ``R(e_i, e_j) w`` at the single point ``x``.

    ``e_i, e_j`` are vectors of :func:`geometry.orthonormal_frame` (with ``seed``).
    """
    M = w.manifold
    X, _ = _validated(M, np.asarray(x, dtype=float).reshape(1, M.dim))
    E = _frames_batch(M.metric(X), seed)
    C = curvature_action_values(_riemann_batch(M, X, h), w.coeff(X))
    C = np.einsum("bai...,bi->ba...", C, E[:, :, i])
    C = np.einsum("bal...,bl->ba...", C, E[:, :, j])
    return C[0]


def inner(w: TangentTensorField, eta: TangentTensorField, x):
    """Pointwise ``<w, eta>``: the sum over an orthonormal frame of ``g(w(e..), eta(e..))``."""
    if w.valence != eta.valence:
        raise ValenceError(f"valence mismatch: {w.valence} vs {eta.valence}")
    M = w.manifold
    X, shape = _validated(M, x)
    g = M.metric(X)
    vals = _inner_values(w.coeff(X), eta.coeff(X), g, _fd.inv(g))
    return vals.reshape(shape) if shape else float(vals[0])


def norm(w: TangentTensorField, x):
    return np.sqrt(np.maximum(inner(w, w, x), 0.0))


def inner_in_frame(w: TangentTensorField, eta: TangentTensorField, x, seed: Optional[int] = None):
    """``<w, eta>`` by a literal sum over a (seeded) orthonormal frame; cross-check of :func:`inner`."""
    M = w.manifold
    X, shape = _validated(M, x)
    g = M.metric(X)
    E = _frames_batch(g, seed)
    a, b = to_frame(w.coeff(X), E), to_frame(eta.coeff(X), E)
    vals = np.einsum("bi,bi->b", a.reshape(len(a), -1), b.reshape(len(b), -1))
    return vals.reshape(shape) if shape else float(vals[0])


def to_frame(T: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Components of a batched tangent tensor in the frame ``E`` (value and slots)."""
    out = np.einsum("bka,ba...->bk...", _fd.inv(E), T)
    for ax in range(2, T.ndim):
        out = _contract_slot(out, E, ax)
    return out


# ---------------------------------------------------------------------------
# field constructors
# ---------------------------------------------------------------------------


def constant_field(M: ManifoldChart, values, name: str = "const") -> TangentTensorField:
    """Field with the same coordinate components at every point."""
    values = np.asarray(values, dtype=float)
    q = values.ndim - 1
    if values.shape != (M.dim,) * (q + 1):
        raise ValenceError(f"components must have shape {(M.dim,) * (q + 1)}")
    cls = BundleForm if _is_antisymmetric(values) else TangentTensorField
    return cls(M, q, lambda X: np.broadcast_to(values, (len(X),) + values.shape).copy(), name)


def _is_antisymmetric(values) -> bool:
    q = values.ndim - 1
    for a in range(1, q):
        if not np.allclose(values, -np.swapaxes(values, a, a + 1)):
            return False
    return True


def antisymmetrize(T: np.ndarray) -> np.ndarray:
    """Alternating projection over the covariant axes of a batched array."""
    q = T.ndim - 2
    if q < 2:
        return T
    total = np.zeros_like(T)
    for perm in itertools.permutations(range(q)):
        sign = _perm_sign(perm)
        axes = (0, 1) + tuple(2 + p for p in perm)
        total = total + sign * np.transpose(T, axes)
    return total / math.factorial(q)


def _perm_sign(perm) -> int:
    sign, seen = 1, list(perm)
    for i in range(len(seen)):
        while seen[i] != i:
            j = seen[i]
            seen[i], seen[j] = seen[j], seen[i]
            sign = -sign
    return sign


def wave_base(M: ManifoldChart) -> float:
    """Frequency unit for random fields: periodic on tori, O(1) on sphere charts."""
    return 2 * np.pi / M.period if M.period is not None else 0.5


def trig_polynomial(M: ManifoldChart, shape: tuple, seed: int, terms: int = 6, max_mode: int = 2):
    """Seeded smooth array-valued function ``X -> (B, *shape)`` built from cosines."""
    rng = np.random.default_rng(seed)
    n = M.dim
    waves = rng.integers(-max_mode, max_mode + 1, (terms, n)) * wave_base(M)
    phases = rng.uniform(0.0, 2 * np.pi, terms)
    coefs = rng.standard_normal((terms, int(np.prod(shape)))) / np.sqrt(terms)

    def f(X):
        return (np.cos(X @ waves.T + phases) @ coefs).reshape((len(X),) + tuple(shape))

    return f


def random_form(M: ManifoldChart, p: int, seed: int, **kw) -> BundleForm:
    """Smooth seeded ``TM``-valued ``p``-form (antisymmetrised trigonometric polynomial)."""
    if not 0 <= p <= M.dim:
        raise ValenceError(f"degree must lie in [0, {M.dim}]")
    raw = trig_polynomial(M, (M.dim,) * (p + 1), seed, **kw)
    return BundleForm(M, p, lambda X: antisymmetrize(raw(X)), f"rand{p}[{seed}]")


def random_endomorphism(M: ManifoldChart, seed: int, **kw) -> BundleForm:
    """Smooth seeded endomorphism field ``A^k_i``; no algebraic constraint."""
    return BundleForm(M, 1, trig_polynomial(M, (M.dim, M.dim), seed, **kw), f"A[{seed}]")
