"""Central-difference stencils on batches of chart points.

Every coefficient function in the package maps an array of points of shape
``(B, n)`` to an array of shape ``(B, ...)``.  Derivatives are taken by
evaluating the function once on the whole stencil, so nesting two derivative
operators costs two vectorised calls rather than ``(2n+1)**2`` Python calls.
"""

import numpy as np

DEFAULT_H = 1e-4

#: Working dtype for convergence studies.  Nested differences lose about
#: ``eps / h**2`` to rounding, which in double precision swamps the ``O(h**2)``
#: truncation error of some second-order identities at ``h = 1e-4``.  Points
#: passed in this dtype keep it through every coefficient evaluation.
EXTENDED = np.longdouble


def stencil(x, h):
    """Return the points ``[x, x + h e_0, ..., x + h e_{n-1}, x - h e_0, ...]``.

    Shape ``(B, 2n+1, n)`` for ``x`` of shape ``(B, n)``.
    """
    n = x.shape[-1]
    shifts = np.concatenate([np.zeros((1, n)), h * np.eye(n), -h * np.eye(n)])
    return x[:, None, :] + shifts[None, :, :]


def on_stencil(f, x, h):
    """Evaluate ``f`` on the stencil of ``x``; returns shape ``(B, 2n+1, ...)``."""
    b, n = x.shape
    pts = stencil(x, h).reshape(b * (2 * n + 1), n)
    vals = np.asarray(f(pts))
    return vals.reshape((b, 2 * n + 1) + vals.shape[1:])


def split(vals, n, h):
    """Split stencil values into the centre value and the central gradient.

    Returns ``(centre, grad)`` with ``grad`` of shape ``(B, n, ...)``; the
    derivative index is the first non-batch axis.
    """
    centre = vals[:, 0]
    grad = (vals[:, 1 : n + 1] - vals[:, n + 1 :]) / (2.0 * h)
    return centre, grad


def gradient(f, x, h):
    """Central-difference gradient of ``f`` at the points ``x``."""
    return split(on_stencil(f, x, h), x.shape[-1], h)[1]


def hessian(f, x, h):
    """Nested central-difference Hessian, shape ``(B, n, n, ...)``."""
    return gradient(lambda y: gradient(f, y, h), x, h)


def as_batch(x, n):
    """Coerce ``x`` to a float array of shape ``(B, n)``; also return the batch shape.

    Extended-precision input is kept as is; everything else becomes float64.
    """
    arr = np.asarray(x)
    if arr.dtype != EXTENDED:
        arr = arr.astype(float)
    if arr.shape[-1:] != (n,):
        raise ValueError(f"expected points with trailing dimension {n}, got shape {arr.shape}")
    return arr.reshape(-1, n), arr.shape[:-1]


def inv(a):
    """Batched matrix inverse that also accepts extended-precision input.

    LAPACK only runs in double, so extended input is inverted in double and
    then polished with two Newton-Schulz steps, each squaring the relative error.
    """
    a = np.asarray(a)
    if a.dtype != EXTENDED:
        return np.linalg.inv(a)
    X = np.linalg.inv(a.astype(float)).astype(EXTENDED)
    two = 2 * np.eye(a.shape[-1], dtype=EXTENDED)
    for _ in range(2):
        X = X @ (two - a @ X)
    return X


def cholesky(a):
    """Batched lower Cholesky factor; column loop for extended-precision input."""
    a = np.asarray(a)
    if a.dtype != EXTENDED:
        return np.linalg.cholesky(a)
    n = a.shape[-1]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[..., j, j] - np.sum(L[..., j, :j] ** 2, axis=-1)
        if np.any(d <= 0):
            raise np.linalg.LinAlgError("matrix is not positive definite")
        L[..., j, j] = np.sqrt(d)
        L[..., j + 1 :, j] = (
            a[..., j + 1 :, j] - np.einsum("...ik,...k->...i", L[..., j + 1 :, :j], L[..., j, :j])
        ) / L[..., j, j][..., None]
    return L
