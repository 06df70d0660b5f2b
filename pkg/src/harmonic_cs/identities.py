"""Pointwise and integrated residual checks of the harmonic-structure identities.

Each ``check_*`` function evaluates one identity on a set of sample points
and returns a :class:`ResidualReport`.  Scalar Laplacians here are the metric
trace of the Hessian, ``g^{ij}(d_i d_j f - Gamma^k_ij d_k f)``, i.e. the sign
opposite to the Hodge Laplacian on functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _fd
from ._fd import DEFAULT_H
from .errors import ParameterError, UnsupportedManifoldError
from .forms import (
    BundleForm,
    _inner_values,
    _metric_trace,
    _nabla_coeff,
    codifferential,
    exterior_d,
    hodge_laplace,
    rough_laplacian,
    weitzenboeck_term,
)
from .geometry import (
    ManifoldChart,
    _christoffel_batch,
    _frames_batch,
    _riemann_batch,
    _validated,
    frame_riemann,
    quadrature_grid,
)
from .jstructure import (
    _energy_batch,
    integrability_defect,
    pointwise_defects,
    random_pointwise_j,
    standard_matrix,
    tensor_norm,
)

EXACT_TOL = 1e-5
FD_TOL = 1e-4
OBSTRUCTION_MARGIN = 20.0


@dataclass
class ResidualReport:
    name: str
    manifold: str
    samples: int
    h: float
    max_residual: float
    mean_residual: float
    tolerance: float
    passed: bool
    seed: Optional[int] = None
    status: str = "ok"
    details: dict = field(default_factory=dict)

    @classmethod
    def from_residuals(cls, name, manifold, residuals, tolerance, h, seed=None, signed=False, **details):
        r = np.asarray(residuals, dtype=float).ravel()
        if not signed:
            r = np.abs(r)
        worst = float(r.max()) if r.size else 0.0
        return cls(
            name=name,
            manifold=manifold.name if isinstance(manifold, ManifoldChart) else str(manifold),
            samples=int(r.size),
            h=float(h),
            max_residual=worst,
            mean_residual=float(r.mean()) if r.size else 0.0,
            tolerance=float(tolerance),
            passed=bool(worst <= tolerance),
            seed=seed,
            details=details,
        )

    @classmethod
    def merge(cls, name: str, reports: Sequence["ResidualReport"], **details):
        """Combine reports of one check over several fields into a single record.

        Hypothesis-gated members that were skipped contribute no samples.
        """
        used = [r for r in reports if r.samples]
        total = sum(r.samples for r in used)
        statuses = sorted({r.status for r in reports})
        rep = cls(
            name=name,
            manifold=reports[0].manifold if reports else "",
            samples=total,
            h=reports[0].h if reports else 0.0,
            max_residual=max((r.max_residual for r in used), default=0.0),
            mean_residual=sum(r.mean_residual * r.samples for r in used) / total if total else 0.0,
            tolerance=reports[0].tolerance if reports else 0.0,
            passed=all(r.passed for r in reports),
            seed=reports[0].seed if reports else None,
            status="ok" if statuses in ([], ["ok"]) else ",".join(statuses),
            details=dict(details, fields=len(reports)),
        )
        return rep

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = "" if self.status == "ok" else f" [{self.status}]"
        return (
            f"{flag} {self.name:<28s} {self.manifold:<16s} n={self.samples:<6d} "
            f"max={self.max_residual:.3e} tol={self.tolerance:.1e}{extra}"
        )


def default_tolerance(M: ManifoldChart) -> float:
    """Residual budget: tighter when the connection is known in closed form."""
    return EXACT_TOL if M.exact_christoffel is not None else FD_TOL


def _metric_pair(M, X):
    g = M.metric(X)
    return g, _fd.inv(g)


def function_laplacian(M: ManifoldChart, f, X: np.ndarray, h: float = DEFAULT_H) -> np.ndarray:
    """``g^{ij}(d_i d_j f - Gamma^k_ij d_k f)`` for a batched scalar function ``f``."""
    _, ginv = _metric_pair(M, X)
    hess = _fd.hessian(f, X, h)
    grad = _fd.gradient(f, X, h)
    gam = _christoffel_batch(M, X, h)
    return np.einsum("bij,bij->b", ginv, hess - np.einsum("bkij,bk->bij", gam, grad))


# ---------------------------------------------------------------------------
# Weitzenboeck
# ---------------------------------------------------------------------------


def weitzenboeck_residual(w: BundleForm, X: np.ndarray, h: float = DEFAULT_H) -> np.ndarray:
    """Pointwise ``|Delta w + nabla^2 w - S|``."""
    M = w.manifold
    lap = hodge_laplace(w, h).coeff(X)
    rough = rough_laplacian(w, h).coeff(X)
    S = weitzenboeck_term(w, h).coeff(X)
    g, ginv = _metric_pair(M, X)
    return tensor_norm(lap + rough - S, g, ginv)


def check_weitzenboeck(w: BundleForm, points, h=DEFAULT_H, tol=None, seed=None) -> ResidualReport:
    M = w.manifold
    if not 1 <= w.valence <= M.dim - 1:
        raise ParameterError("Weitzenboeck check needs 1 <= p <= n - 1")
    X, _ = _validated(M, points)
    tol = default_tolerance(M) if tol is None else tol
    return ResidualReport.from_residuals(
        "weitzenboeck", M, weitzenboeck_residual(w, X, h), tol, h, seed, field=w.name
    )


# ---------------------------------------------------------------------------
# connection and curvature sanity
# ---------------------------------------------------------------------------


def check_metric_compatibility(M: ManifoldChart, points, h=DEFAULT_H, tol=FD_TOL, seed=None) -> ResidualReport:
    """``d_k g_ij - Gamma^m_ki g_mj - Gamma^m_kj g_im = 0`` (largest component per point)."""
    X, _ = _validated(M, points)
    g, dg = _fd.split(_fd.on_stencil(M.metric, X, h), M.dim, h)
    gam = _christoffel_batch(M, X, h)
    resid = dg - np.einsum("bmki,bmj->bkij", gam, g) - np.einsum("bmkj,bim->bkij", gam, g)
    return ResidualReport.from_residuals(
        "metric_compatibility", M, np.abs(resid).reshape(len(X), -1).max(axis=1), tol, h, seed
    )


def check_curvature_symmetries(M: ManifoldChart, points, h=DEFAULT_H, tol=1e-6, seed=None) -> ResidualReport:
    """Pair antisymmetries, pair exchange and the first Bianchi identity, in a frame."""
    X, _ = _validated(M, points)
    Rf = frame_riemann(_riemann_batch(M, X, h), _frames_batch(M.metric(X), seed))
    parts = {
        "antisym_ij": Rf + np.einsum("bijkm->bjikm", Rf),
        "antisym_km": Rf + np.einsum("bijkm->bijmk", Rf),
        "pair_exchange": Rf - np.einsum("bijkm->bkmij", Rf),
        "bianchi": Rf + np.einsum("bjkim->bijkm", Rf) + np.einsum("bkijm->bijkm", Rf),
    }
    worst = {k: np.abs(v).reshape(len(X), -1).max(axis=1) for k, v in parts.items()}
    resid = np.max(np.stack(list(worst.values())), axis=0)
    return ResidualReport.from_residuals(
        "curvature_symmetries", M, resid, tol, h, seed, **{k: float(v.max()) for k, v in worst.items()}
    )


# ---------------------------------------------------------------------------
# almost complex structures
# ---------------------------------------------------------------------------


def check_integrability(J: BundleForm, points, h=DEFAULT_H, tol=FD_TOL, seed=None) -> ResidualReport:
    """``dJ(X, Y) - dJ(JX, JY) - N(X, Y) = 0`` on coordinate pairs."""
    M = J.manifold
    X, _ = _validated(M, points)
    return ResidualReport.from_residuals(
        "integrability_identity", M, integrability_defect(J, X, h), tol, h, seed, field=J.name
    )


def check_kaehler_harmonic(J: BundleForm, points, h=DEFAULT_H, tol=EXACT_TOL, seed=None) -> ResidualReport:
    """A parallel ``J`` has ``dJ``, ``delta J`` and ``Delta J`` all zero.

    The hypothesis ``nabla J = 0`` is tested first; when it fails the report
    carries the status ``hypothesis-not-met``.
    """
    M = J.manifold
    X, _ = _validated(M, points)
    g, ginv = _metric_pair(M, X)
    grad = tensor_norm(_nabla_coeff(J, h)(X), g, ginv)
    if float(grad.max()) > tol:
        rep = ResidualReport.from_residuals(
            "kaehler_harmonic", M, [], tol, h, seed, field=J.name, nabla_norm=float(grad.max())
        )
        rep.status = "hypothesis-not-met"
        return rep
    d_norm = tensor_norm(exterior_d(J, h).coeff(X), g, ginv)
    dlt = codifferential(J, h).coeff(X)
    delta_norm = np.sqrt(np.maximum(np.einsum("bk,bkl,bl->b", dlt, g, dlt), 0.0))
    lap_norm = tensor_norm(hodge_laplace(J, h).coeff(X), g, ginv)
    resid = np.max(np.stack([grad, d_norm, delta_norm, lap_norm]), axis=0)
    return ResidualReport.from_residuals(
        "kaehler_harmonic",
        M,
        resid,
        tol,
        h,
        seed,
        field=J.name,
        nabla_norm=float(grad.max()),
        d_norm=float(d_norm.max()),
        delta_norm=float(delta_norm.max()),
        laplace_norm=float(lap_norm.max()),
    )


# ---------------------------------------------------------------------------
# Bochner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureTerms:
    """Every scalar entering the Bochner formula, per sample point."""

    term2: np.ndarray  # sum_ij <R(e_i,e_j) J e_i, J e_j>
    term3: np.ndarray  # sum_ij <J R(e_i,e_j) e_i, J e_j>
    grad_norm_sq: np.ndarray  # |nabla J|^2
    energy_laplacian: np.ndarray  # Delta e(J)


def pointwise_curvature_terms(riem_frame: np.ndarray, J_frame: np.ndarray):
    """``(term2, term3)`` from frame components (orthonormal frame, batched)."""
    term2 = np.einsum("bki,bmj,bijkm->b", J_frame, J_frame, riem_frame)
    term3 = np.einsum("bijik,blk,blj->b", riem_frame, J_frame, J_frame)
    return term2, term3


def to_frame_matrix(Jx: np.ndarray, E: np.ndarray) -> np.ndarray:
    return _fd.inv(E) @ Jx @ E


def curvature_terms(J: BundleForm, x, h: float = DEFAULT_H, seed: Optional[int] = None) -> CurvatureTerms:
    M = J.manifold
    X, shape = _validated(M, x)
    terms = _curvature_terms_batch(J, X, h, seed)
    if not shape:
        return CurvatureTerms(*(float(v[0]) for v in terms))
    return CurvatureTerms(*(v.reshape(shape) for v in terms))


def _curvature_terms_batch(J, X, h, seed=None):
    M = J.manifold
    g, ginv = _metric_pair(M, X)
    E = _frames_batch(g, seed)
    Rf = frame_riemann(_riemann_batch(M, X, h), E)
    term2, term3 = pointwise_curvature_terms(Rf, to_frame_matrix(J.coeff(X), E))
    grad_sq = _inner_values(*(2 * [_nabla_coeff(J, h)(X)]), g, ginv)
    lap_e = function_laplacian(M, lambda Y: _energy_batch(J, Y), X, h)
    return term2, term3, grad_sq, lap_e


def check_bochner(J: BundleForm, points, h=DEFAULT_H, tol=FD_TOL, seed=None) -> ResidualReport:
    """``Delta e(J) + <Delta J, J> = |nabla J|^2 - term2 + term3`` for any almost complex ``J``.

    When ``Delta J`` vanishes at every sample the harmonic specialisation
    (pairing term dropped) is evaluated as well and stored in ``details``.
    """
    M = J.manifold
    X, _ = _validated(M, points)
    g, ginv = _metric_pair(M, X)
    term2, term3, grad_sq, lap_e = _curvature_terms_batch(J, X, h)
    lapJ = hodge_laplace(J, h).coeff(X)
    pairing = _inner_values(lapJ, J.coeff(X), g, ginv)
    rhs = grad_sq - term2 + term3
    resid = lap_e + pairing - rhs
    harmonic = float(tensor_norm(lapJ, g, ginv).max())
    details = {
        "harmonic_defect": harmonic,
        "max_abs_terms": {
            "energy_laplacian": float(np.abs(lap_e).max()),
            "pairing": float(np.abs(pairing).max()),
            "grad_norm_sq": float(np.abs(grad_sq).max()),
            "term2": float(np.abs(term2).max()),
            "term3": float(np.abs(term3).max()),
        },
    }
    if harmonic <= EXACT_TOL:
        details["harmonic_form_residual"] = float(np.abs(lap_e - rhs).max())
    return ResidualReport.from_residuals("bochner", M, resid, tol, h, seed, **details)


def check_scal_bound(J: BundleForm, points, h=DEFAULT_H, tol=EXACT_TOL, seed=None) -> ResidualReport:
    """Scalar-curvature bound for a hermitian harmonic ``J``.

    Under the hypotheses ``term3 = scal`` and ``Delta e = 0``, so the Bochner
    formula reads ``scal + |nabla J|^2 - term2 = 0``; that residual is
    reported, together with ``scal <= term2`` and whether equality (Kaehler)
    holds.  Inputs violating the hypotheses yield ``hypothesis-not-met``.
    """
    M = J.manifold
    X, _ = _validated(M, points)
    d = pointwise_defects(J, X, h)
    herm, harm = float(d["hermitian"].max()), float(d["harmonic"].max())
    if herm > tol or harm > tol:
        rep = ResidualReport.from_residuals(
            "scal_bound", M, [], tol, h, seed, hermitian_defect=herm, harmonic_defect=harm
        )
        rep.status = "hypothesis-not-met"
        return rep
    g, _ = _metric_pair(M, X)
    Rf = frame_riemann(_riemann_batch(M, X, h), _frames_batch(g))
    scal = np.einsum("bijij->b", Rf)
    term2, _, grad_sq, _ = _curvature_terms_batch(J, X, h)
    resid = scal + grad_sq - term2
    return ResidualReport.from_residuals(
        "scal_bound",
        M,
        resid,
        tol,
        h,
        seed,
        inequality_holds=bool(np.all(scal <= term2 + tol)),
        equality=bool(np.all(np.abs(scal - term2) <= tol)),
        kaehler=bool(np.all(np.sqrt(np.maximum(grad_sq, 0)) <= tol)),
        max_scal=float(scal.max()),
        max_term2=float(term2.max()),
    )


# ---------------------------------------------------------------------------
# integral statements on flat tori
# ---------------------------------------------------------------------------


def _require_quadrature(M: ManifoldChart):
    if not M.has_quadrature:
        raise UnsupportedManifoldError(f"{M.name} has no quadrature rule; integral checks need a flat torus")


def _batched(fn, X, chunk=4096):
    return np.concatenate([fn(X[i : i + chunk]) for i in range(0, len(X), chunk)])


def _quadrature(M: ManifoldChart, grid: int, extended: bool):
    _require_quadrature(M)
    nodes, weight = quadrature_grid(M, grid)
    return (nodes.astype(_fd.EXTENDED) if extended else nodes), weight


def check_integral_criterion(
    J: BundleForm, grid: int = 64, h=DEFAULT_H, tol=1e-6, zero_tol=1e-8, seed=None, extended=False
) -> ResidualReport:
    """Integrated Bochner criterion on a flat torus.

    The integrand ``|nabla J|^2 - term2 + term3`` integrates to
    ``1/2 ||dJ||^2 + ||delta J||^2``, which vanishes exactly for harmonic
    ``J``.  The residual is the difference of the two quadratures; the
    details record the integral, the sampled harmonic defect and whether
    "integral ~ 0" and "defect ~ 0" agree.  ``extended`` evaluates the
    integrand in extended precision (see :data:`_fd.EXTENDED`).
    """
    M = J.manifold
    nodes, weight = _quadrature(M, grid, extended)

    def per_node(X):
        g, ginv = _metric_pair(M, X)
        term2, term3, grad_sq, _ = _curvature_terms_batch(J, X, h)
        dJ = exterior_d(J, h).coeff(X)
        dlt = codifferential(J, h).coeff(X)
        energy = 0.5 * _inner_values(dJ, dJ, g, ginv) + np.einsum("bk,bkl,bl->b", dlt, g, dlt)
        lap = tensor_norm(hodge_laplace(J, h).coeff(X), g, ginv)
        return np.stack([grad_sq - term2 + term3, energy, lap], axis=1)

    vals = _batched(per_node, nodes)
    integral = float(vals[:, 0].sum() * weight)
    energy = float(vals[:, 1].sum() * weight)
    defect = float(vals[:, 2].max())
    return ResidualReport.from_residuals(
        "integral_criterion",
        M,
        [integral - energy],
        tol,
        h,
        seed,
        integral=integral,
        harmonic_energy=energy,
        harmonic_defect=defect,
        grid=grid,
        equivalence=bool((abs(integral) <= zero_tol) == (defect <= zero_tol)),
    )


def trace_of_laplacian(A: BundleForm, X: np.ndarray, h=DEFAULT_H) -> np.ndarray:
    return np.einsum("bii->b", hodge_laplace(A, h).coeff(X))


def check_trace_theorem(A: BundleForm, points, h=DEFAULT_H, tol=FD_TOL, seed=None) -> ResidualReport:
    """``Trace(Delta A) + Delta(Trace A) = 0`` for any endomorphism field ``A``."""
    M = A.manifold
    X, _ = _validated(M, points)
    tr_lap = trace_of_laplacian(A, X, h)
    lap_tr = function_laplacian(M, lambda Y: np.einsum("bii->b", A.coeff(Y)), X, h)
    return ResidualReport.from_residuals(
        "trace_theorem", M, tr_lap + lap_tr, tol, h, seed, field=A.name,
        max_trace_laplacian=float(np.abs(tr_lap).max()),
    )


def check_integral_trace(
    A: BundleForm, grid: int = 64, h=DEFAULT_H, tol=1e-6, seed=None, extended=False
) -> ResidualReport:
    """``int Trace(Delta A) dv = 0`` by periodic quadrature on a flat torus.

    Rounding in the nested differences has a small bias that the quadrature
    multiplies by the volume; ``extended=True`` removes it on large tori.
    """
    M = A.manifold
    nodes, weight = _quadrature(M, grid, extended)
    vals = _batched(lambda X: trace_of_laplacian(A, X, h), nodes)
    integral = float(vals.sum() * weight)
    return ResidualReport.from_residuals(
        "integral_trace", M, [integral], tol, h, seed, grid=grid,
        max_abs_integrand=float(np.abs(vals).max()),
    )


# ---------------------------------------------------------------------------
# S^6 obstruction
# ---------------------------------------------------------------------------


def brute_force_terms(J_frame: np.ndarray, riem_frame=None):
    """Index-by-index sums of ``term2`` and ``term3`` for one point.

    ``J_frame[k, i]`` are orthonormal-frame components of ``J``; the curvature
    defaults to the unit sphere, ``R_ijkm = d_ik d_jm - d_jk d_im``.  Plain
    loops on purpose: this is the oracle for the vectorised contraction.
    """
    n = len(J_frame)

    def R(i, j, k, m):
        if riem_frame is not None:
            return riem_frame[i, j, k, m]
        return float(i == k and j == m) - float(j == k and i == m)

    term2 = term3 = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for m in range(n):
                    r = R(i, j, k, m)
                    if r == 0.0:
                        continue
                    # <R(e_i,e_j) J e_i, J e_j> = J^k_i J^m_j R_ijkm
                    term2 += J_frame[k, i] * J_frame[m, j] * r
                    # <J R(e_i,e_j) e_i, J e_j> = R_ijik <J e_k, J e_j>  (third slot = i)
                    if k == i:
                        term3 += r * sum(J_frame[l, m] * J_frame[l, j] for l in range(n))
    return term2, term3


def s6_obstruction_scan(
    M: ManifoldChart,
    j_fields: Sequence[BundleForm],
    points,
    pointwise_samples: int = 0,
    margin: float = OBSTRUCTION_MARGIN,
    h: float = DEFAULT_H,
    seed: Optional[int] = None,
) -> ResidualReport:
    """Scan ``term3 - term2`` and the Bochner integrand over points and structures.

    ``j_fields`` supply whole fields (so ``|nabla J|^2`` is available);
    ``pointwise_samples`` random matrices with ``J^2 = -I`` per point widen
    the algebraic scan.  Pass iff the smallest gap is at least ``margin``.
    The report stores the *negated* gap as its residual so that
    ``max_residual <= tolerance`` reads ``min gap >= margin``.
    """
    if M.dim != 6 or M.name not in ("round_sphere", "perturbed_sphere"):
        raise ParameterError("the obstruction scan runs on round_sphere(6) or perturbed_sphere(6)")
    X, _ = _validated(M, points)
    g, _ = _metric_pair(M, X)
    E = _frames_batch(g)
    Rf = frame_riemann(_riemann_batch(M, X, h), E)
    gaps, integrands = [], []
    for J in j_fields:
        t2, t3 = pointwise_curvature_terms(Rf, to_frame_matrix(J.coeff(X), E))
        grad_sq = _inner_values(*(2 * [_nabla_coeff(J, h)(X)]), g, _fd.inv(g))
        gaps.append(t3 - t2)
        integrands.append(grad_sq + t3 - t2)
    if pointwise_samples:
        rng_seed = 0 if seed is None else seed
        Jp = random_pointwise_j(M.dim, pointwise_samples, rng_seed)
        for Jf in Jp:
            t2, t3 = pointwise_curvature_terms(Rf, np.broadcast_to(Jf, (len(X),) + Jf.shape))
            gaps.append(t3 - t2)
    gaps = np.concatenate(gaps)
    integrands = np.concatenate(integrands) if integrands else np.array([np.inf])

    orth_t2, orth_t3 = pointwise_curvature_terms(Rf, np.broadcast_to(standard_matrix(6), (len(X), 6, 6)))
    oracle_t2, oracle_t3 = brute_force_terms(standard_matrix(6))
    rep = ResidualReport.from_residuals(
        "s6_obstruction",
        M,
        -gaps,
        -margin,
        h,
        seed,
        signed=True,
        min_gap=float(gaps.min()),
        min_integrand=float(integrands.min()),
        orthogonal_gap_min=float((orth_t3 - orth_t2).min()),
        orthogonal_gap_max=float((orth_t3 - orth_t2).max()),
        oracle_gap=float(oracle_t3 - oracle_t2),
        factor_six_gap=36.0 - 6.0,
        margin=margin,
    )
    return rep
