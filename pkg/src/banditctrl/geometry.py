"""Convex decision sets with exact Euclidean projections.

Every set here is origin symmetric and must contain the unit ball, so that a
center kept in the shrunk set plus a unit-sphere perturbation of radius delta
stays feasible.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError


def _as_point(p, dim: int) -> np.ndarray:
    q = np.asarray(p, dtype=float).reshape(-1)
    if q.shape[0] != dim:
        raise ConfigError(f"expected a point of dimension {dim}, got {q.shape[0]}")
    if not np.all(np.isfinite(q)):
        raise ConfigError("point has non-finite entries")
    return q


def _check_shrink(shrink: float) -> float:
    s = float(shrink)
    if not 0.0 <= s < 1.0:
        raise ConfigError(f"shrink factor must be in [0, 1), got {s}")
    return s


class DecisionSet:
    """Origin-symmetric convex body containing the unit ball.

    ``project(p, shrink=s)`` is the exact Euclidean projection onto the
    rescaled body (1-s)*K; ``shrink=0`` projects onto K itself.
    """

    dim: int

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    def project(self, p, shrink: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def contains(self, p, shrink: float = 0.0, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def shrink(self, delta: float) -> "MinkowskiSubset":
        return MinkowskiSubset(self, delta)


class EuclideanBall(DecisionSet):
    """Ball of a given radius (at least 1) centered at the origin."""

    def __init__(self, dim: int, radius: float = 1.0):
        if int(dim) < 1:
            raise ConfigError(f"dimension must be positive, got {dim}")
        if not np.isfinite(radius) or radius < 1.0:
            raise ConfigError(f"ball radius must be >= 1 to contain the unit ball, got {radius}")
        self.dim = int(dim)
        self.radius = float(radius)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def project(self, p, shrink: float = 0.0) -> np.ndarray:
        q = _as_point(p, self.dim)
        r = (1.0 - _check_shrink(shrink)) * self.radius
        norm = np.linalg.norm(q)
        if norm <= r:
            return q
        return q * (r / norm)

    def contains(self, p, shrink: float = 0.0, tol: float = 1e-9) -> bool:
        q = _as_point(p, self.dim)
        r = (1.0 - _check_shrink(shrink)) * self.radius
        return bool(np.linalg.norm(q) <= r + tol)

    def __repr__(self):
        return f"EuclideanBall(dim={self.dim}, radius={self.radius})"


class Box(DecisionSet):
    """Axis-aligned box [-h_1, h_1] x ... x [-h_d, h_d], every h_i >= 1."""

    def __init__(self, halfwidths):
        h = np.asarray(halfwidths, dtype=float).reshape(-1)
        if h.size < 1:
            raise ConfigError("box needs at least one coordinate")
        if not np.all(np.isfinite(h)) or np.any(h < 1.0):
            raise ConfigError("box halfwidths must all be >= 1 to contain the unit ball")
        self.halfwidths = h.copy()
        self.halfwidths.setflags(write=False)
        self.dim = h.size

    @property
    def diameter(self) -> float:
        return 2.0 * float(np.linalg.norm(self.halfwidths))

    def project(self, p, shrink: float = 0.0) -> np.ndarray:
        q = _as_point(p, self.dim)
        h = (1.0 - _check_shrink(shrink)) * self.halfwidths
        return np.clip(q, -h, h)

    def contains(self, p, shrink: float = 0.0, tol: float = 1e-9) -> bool:
        q = _as_point(p, self.dim)
        h = (1.0 - _check_shrink(shrink)) * self.halfwidths
        return bool(np.all(np.abs(q) <= h + tol))

    def __repr__(self):
        return f"Box(halfwidths={self.halfwidths.tolist()})"


def clip_operator_norm(mat: np.ndarray, radius: float) -> np.ndarray:
    """Frobenius-nearest matrix with spectral norm at most ``radius``.

    Returns the input unchanged (same object) when it is already inside.
    """
    m = np.asarray(mat, dtype=float)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] <= radius:
        return m
    return (u * np.minimum(s, radius)) @ vt


class OperatorNormProduct(DecisionSet):
    """Product of spectral-norm balls over a stack of equally shaped matrices.

    A point is a flattened (count, rows, cols) tensor; factor j lives in the
    ball of operator-norm radius radii[j]. Projection clips singular values
    factor by factor, which is the exact Euclidean projection because the
    Frobenius inner product decomposes over factors.
    """

    def __init__(self, count: int, rows: int, cols: int, radii):
        if int(count) < 1 or int(rows) < 1 or int(cols) < 1:
            raise ConfigError("factor count and matrix shape must be positive")
        r = np.asarray(radii, dtype=float).reshape(-1)
        if r.size != int(count):
            raise ConfigError(f"need {count} radii, got {r.size}")
        if not np.all(np.isfinite(r)) or np.any(r < 1.0):
            # operator-norm radius >= 1 per factor keeps the unit Frobenius
            # ball of the flattened tensor inside the product
            raise ConfigError("every operator-norm radius must be >= 1")
        self.count = int(count)
        self.rows = int(rows)
        self.cols = int(cols)
        self.radii = r.copy()
        self.radii.setflags(write=False)
        self.dim = self.count * self.rows * self.cols

    @property
    def diameter(self) -> float:
        # Frobenius norm of factor j is at most radii[j] * sqrt(min(rows, cols))
        sq = float(np.sum(self.radii**2)) * min(self.rows, self.cols)
        return 2.0 * float(np.sqrt(sq))

    def tensor(self, p) -> np.ndarray:
        return _as_point(p, self.dim).reshape(self.count, self.rows, self.cols)

    def project(self, p, shrink: float = 0.0) -> np.ndarray:
        t = self.tensor(p)
        caps = (1.0 - _check_shrink(shrink)) * self.radii
        u, s, vt = np.linalg.svd(t, full_matrices=False)
        over = s[:, 0] > caps
        if not np.any(over):
            return np.asarray(p, dtype=float).reshape(-1)
        clipped = np.minimum(s, caps[:, None])
        out = t.copy()
        out[over] = (u[over] * clipped[over, None, :]) @ vt[over]
        return out.reshape(-1)

    def contains(self, p, shrink: float = 0.0, tol: float = 1e-9) -> bool:
        t = self.tensor(p)
        caps = (1.0 - _check_shrink(shrink)) * self.radii
        norms = np.linalg.svd(t, compute_uv=False)[:, 0]
        return bool(np.all(norms <= caps + tol))

    def __repr__(self):
        return (f"OperatorNormProduct(count={self.count}, rows={self.rows}, "
                f"cols={self.cols}, radii={self.radii.tolist()})")


class MinkowskiSubset(DecisionSet):
    """The shrunk body {x : x / (1 - delta) in K} = (1 - delta) * K.

    For any x here and any unit vector u, x + delta * u stays inside K
    because K contains the unit ball.
    """

    def __init__(self, parent: DecisionSet, delta: float):
        d = float(delta)
        if not 0.0 <= d < 1.0:
            raise ConfigError(f"delta must be in [0, 1), got {delta}")
        self.parent = parent
        self.delta = d
        self.dim = parent.dim

    @property
    def diameter(self) -> float:
        return (1.0 - self.delta) * self.parent.diameter

    def project(self, p, shrink: float = 0.0) -> np.ndarray:
        if shrink != 0.0:
            raise ConfigError("cannot shrink an already shrunk set")
        return self.parent.project(p, shrink=self.delta)

    def contains(self, p, shrink: float = 0.0, tol: float = 1e-9) -> bool:
        if shrink != 0.0:
            raise ConfigError("cannot shrink an already shrunk set")
        return self.parent.contains(p, shrink=self.delta, tol=tol)

    def __repr__(self):
        return f"MinkowskiSubset({self.parent!r}, delta={self.delta})"
