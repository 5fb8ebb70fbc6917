"""Put an input body into fat canonical position and thin out its halfspaces.

``canonicalize`` maps the minimum-volume enclosing ellipsoid of the vertices
onto the ball B0 of radius r0 = 1/(2 sqrt d); John's theorem then keeps a ball
of radius r0/d inside the image.  ``reduce_halfspaces`` additionally keeps
only the halfspaces whose dual points survive a directional-width kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .config import DEFAULT, Tolerances
from .geometry import Ball, Polytope, inner_radius0, sphere_sample


class DegenerateBody(ValueError):
    pass


class MVEENotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class AffineMap:
    """x -> matrix @ x + translation."""

    matrix: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, float))
        object.__setattr__(self, "translation", np.asarray(self.translation, float))

    @cached_property
    def inverse_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.matrix))

    def __call__(self, X):
        return np.asarray(X, float) @ self.matrix.T + self.translation

    def inverse(self, Y):
        return (np.asarray(Y, float) - self.translation) @ self.inverse_matrix.T

    def inverted(self) -> "AffineMap":
        Ai = self.inverse_matrix
        return AffineMap(Ai, -Ai @ self.translation)

    def then_scale(self, s: float) -> "AffineMap":
        return AffineMap(s * self.matrix, s * self.translation)

    def apply_body(self, K: Polytope) -> Polytope:
        """Image of K; halfspace order is preserved."""
        return K.affine_image(self.matrix, self.translation)


@dataclass(frozen=True)
class CanonicalForm:
    body: Polytope
    map: AffineMap
    gamma: float
    eps_abs: float
    source_indices: np.ndarray = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.body.dim


@dataclass(frozen=True)
class ExtentSample:
    direction: np.ndarray
    width: float


def mvee(points, rel_tol: float = DEFAULT.mvee_rel, max_iter: int = DEFAULT.mvee_iters):
    """Minimum-volume enclosing ellipsoid {x : (x-c)^T A (x-c) <= 1}.

    Khachiyan's barycentric coordinate ascent, with the away steps of Todd and
    Yildirim so that weight can also leave interior points.  Stops when the
    largest leverage is within ``rel_tol`` of d+1.  The returned ellipsoid is
    rescaled so that it contains every input point exactly.
    """
    P = np.asarray(points, float)
    m, d = P.shape
    if m <= d or np.linalg.matrix_rank(P - P.mean(axis=0), tol=1e-10) < d:
        raise DegenerateBody("points do not span the space")
    Q = np.hstack([P, np.ones((m, 1))])
    u = np.full(m, 1.0 / m)
    for it in range(max_iter):
        X = (Q * u[:, None]).T @ Q
        lev = np.einsum("ij,ij->i", Q @ np.linalg.inv(X), Q)
        j = int(np.argmax(lev))
        mj = lev[j]
        support = np.flatnonzero(u > 0)
        k = support[np.argmin(lev[support])]
        mk = lev[k]
        if mj <= (1 + rel_tol) * (d + 1) and mk >= (1 - rel_tol) * (d + 1):
            break
        if mj - (d + 1) >= (d + 1) - mk:
            step = (mj - d - 1) / ((d + 1) * (mj - 1))
            u *= 1 - step
            u[j] += step
        else:
            step = (d + 1 - mk) / ((d + 1) * (mk - 1))
            step = min(step, u[k] / (1 - u[k]))
            u *= 1 + step
            u[k] -= step
            u[u < 0] = 0.0
    else:
        raise MVEENotConverged(f"no convergence in {max_iter} iterations")
    c = u @ P
    cov = (P * u[:, None]).T @ P - np.outer(c, c)
    A = np.linalg.inv(cov) / d
    D = P - c
    reach = np.einsum("ij,jk,ik->i", D, A, D).max()
    return c, A / reach


def fatness(K: Polytope) -> tuple[float, float]:
    """(gamma, outer radius / r0) of a body around the origin."""
    r0 = inner_radius0(K.dim)
    gamma = float(K.offsets.min()) / r0
    outer = float(np.linalg.norm(K.vertex_array, axis=1).max()) / r0
    return gamma, outer


def canonicalize(K: Polytope, eps_rel: float | None = None, tol: Tolerances = DEFAULT) -> CanonicalForm:
    """Map K so that gamma*B0 is inside and B0 is outside, gamma about 1/d."""
    d = K.dim
    V = K.vertex_array
    c, A = mvee(V, tol.mvee_rel, tol.mvee_iters)
    L = np.linalg.cholesky(A)           # A = L L^T, so L^T sends E to the unit ball
    r0 = inner_radius0(d)
    M = r0 * L.T
    T = AffineMap(M, -M @ c)
    body = T.apply_body(K)
    if body.offsets.min() <= 0:
        raise DegenerateBody("origin is not interior after the map")
    gamma = float(body.offsets.min()) / r0
    eps_abs = float("nan") if eps_rel is None else eps_rel / (d * math.sqrt(d))
    return CanonicalForm(body, T, gamma, eps_abs, np.arange(K.n))


def polar_points(K: Polytope) -> np.ndarray:
    """Dual point n/b of every halfspace <n,x> <= b (needs b > 0)."""
    if np.any(K.offsets <= 0):
        raise ValueError("origin must be interior: some offset is not positive")
    return K.normals / K.offsets[:, None]


def directional_widths(S, U) -> np.ndarray:
    proj = np.asarray(S, float) @ np.asarray(U, float).T
    return proj.max(axis=0) - proj.min(axis=0)


def extents(S, U) -> list[ExtentSample]:
    return [ExtentSample(u, float(w)) for u, w in zip(U, directional_widths(S, U))]


def epsilon_kernel(S, eps: float) -> np.ndarray:
    """Indices (sorted) of a subset whose widths are within 1-eps in every direction.

    A direction net of density sqrt(eps)/4 on the unit sphere is laid down and,
    for every net direction, the extreme points on both sides are kept.
    """
    S = np.asarray(S, float)
    if len(S) == 0:
        raise ValueError("empty point set")
    d = S.shape[1]
    U = sphere_sample(Ball(np.zeros(d), 1.0), min(math.sqrt(eps) / 4, 1.0))
    keep = set()
    for lo in range(0, len(U), 4096):
        proj = S @ U[lo:lo + 4096].T
        keep.update(np.argmax(proj, axis=0).tolist())
        keep.update(np.argmin(proj, axis=0).tolist())
    return np.array(sorted(keep), dtype=np.int64)


def reduce_halfspaces(K: Polytope, eps_rel: float, tol: Tolerances = DEFAULT) -> CanonicalForm:
    """Canonical position plus a kernel-based sub-list of the halfspaces.

    The result is a sub-list of the (transformed) input halfspaces in original
    order, scaled by 1/2 so that the kept body is (1/2d)-canonical; its
    absolute tolerance is eps_rel / (4 d sqrt d).
    """
    if not 0 < eps_rel <= 1:
        raise ValueError("eps_rel must lie in (0, 1]")
    d = K.dim
    base = canonicalize(K, tol=tol)
    eps_kernel = eps_rel / (8 * d * d)
    idx = epsilon_kernel(polar_points(base.body), eps_kernel)
    kept = base.body.subset(idx).scaled(0.5)
    T = base.map.then_scale(0.5)
    gamma = float(kept.offsets.min()) / inner_radius0(d)
    return CanonicalForm(kept, T, gamma, eps_rel / (4 * d * math.sqrt(d)), idx)
