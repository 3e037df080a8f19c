"""Add-one potentials with localisation envelopes.

Each potential exposes the add-one cost ``add_one(x, X) = Psi(X + x) - Psi(X)``
and, for a radius r, a pair of envelopes computed from ``X ∩ B_r(x)`` only::

    lower(x, X, r) <= add_one(x, X) <= upper(x, X, r)

together with the localisation profile ``psi(r)`` that bounds
``exp(-lower) - exp(-upper)``.  The built-in potentials share one compiled
routine (``_bounds``) so the sampler kernel can evaluate them without calling
back into Python.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .geometry import as_points, ball_volume

__all__ = [
    "PotentialError",
    "Potential",
    "NullPotential",
    "StraussPotential",
    "HardCorePotential",
    "AreaInteractionPotential",
    "PairPotential",
    "TruncatedPoissonPotential",
    "pair_add_one",
    "pair_tail_bound",
    "potential_from_dict",
]

INF = math.inf

KIND_NULL = 0
KIND_STRAUSS = 1
KIND_HARDCORE = 2
KIND_AREA = 3
KIND_PAIR = 4
KIND_TRUNCATED = 5


class PotentialError(ValueError):
    pass


# ---------------------------------------------------------------------------
# compiled pieces


@njit(cache=True)
def _dist2(x, Y, i):
    s = 0.0
    for k in range(x.shape[0]):
        t = Y[i, k] - x[k]
        s += t * t
    return s


@njit(cache=True)
def _arc_term(cx, cy, R, t1, t2):
    # integral of (x dy - y dx)/2 along the circle arc from angle t1 to t2
    return 0.5 * (R * R * (t2 - t1) + R * (cx * (math.sin(t2) - math.sin(t1)) - cy * (math.cos(t2) - math.cos(t1))))


@njit(cache=True)
def _uncovered_area_2d(C, R):
    """Area of B_R(C[0]) minus the union of B_R(C[i]), i >= 1 (exact)."""
    n = C.shape[0]
    total = 0.0
    angles = np.empty(2 * n + 2)
    for k in range(n):
        # breakpoints on circle k
        na = 0
        for j in range(n):
            if j == k:
                continue
            dx = C[j, 0] - C[k, 0]
            dy = C[j, 1] - C[k, 1]
            s = math.sqrt(dx * dx + dy * dy)
            if s >= 2.0 * R or s == 0.0:
                continue
            base = math.atan2(dy, dx)
            half = math.acos(s / (2.0 * R))
            angles[na] = (base - half) % (2 * math.pi)
            angles[na + 1] = (base + half) % (2 * math.pi)
            na += 2
        a = np.sort(angles[:na])
        if na == 0:
            m = 1
        else:
            m = na
        for t in range(m):
            if na == 0:
                t1 = 0.0
                t2 = 2.0 * math.pi
            else:
                t1 = a[t]
                t2 = a[t + 1] if t + 1 < na else a[0] + 2.0 * math.pi
            if t2 - t1 <= 0.0:
                continue
            mid = 0.5 * (t1 + t2)
            mx = C[k, 0] + R * math.cos(mid)
            my = C[k, 1] + R * math.sin(mid)
            keep = True
            if k > 0:
                dx = mx - C[0, 0]
                dy = my - C[0, 1]
                if dx * dx + dy * dy > R * R:
                    keep = False
            if keep:
                for j in range(1, n):
                    if j == k:
                        continue
                    dx = mx - C[j, 0]
                    dy = my - C[j, 1]
                    if dx * dx + dy * dy < R * R:
                        keep = False
                        break
            if keep:
                term = _arc_term(C[k, 0], C[k, 1], R, t1, t2)
                total += term if k == 0 else -term
    return max(total, 0.0)


@njit(cache=True)
def _uncovered_volume(x, Y, ny, R, nodes):
    """Volume of B_R(x) not covered by balls B_R(y), y in Y[:ny]."""
    d = x.shape[0]
    # keep distinct neighbours that can overlap the ball
    idx = np.empty(ny, dtype=np.int64)
    m = 0
    for i in range(ny):
        d2 = _dist2(x, Y, i)
        if d2 == 0.0:
            return 0.0
        if d2 >= 4.0 * R * R:
            continue
        dup = False
        for t in range(m):
            same = True
            for k in range(d):
                if Y[idx[t], k] != Y[i, k]:
                    same = False
                    break
            if same:
                dup = True
                break
        if not dup:
            idx[m] = i
            m += 1
    if d == 1:
        lo = x[0] - R
        hi = x[0] + R
        for t in range(m):
            y = Y[idx[t], 0]
            if y <= x[0]:
                lo = max(lo, y + R)
            else:
                hi = min(hi, y - R)
        return max(hi - lo, 0.0)
    if d == 2:
        C = np.empty((m + 1, 2))
        C[0, 0] = 0.0
        C[0, 1] = 0.0
        for t in range(m):
            C[t + 1, 0] = Y[idx[t], 0] - x[0]
            C[t + 1, 1] = Y[idx[t], 1] - x[1]
        return _uncovered_area_2d(C, R)
    # d == 3: exact coverage along each ray from x, fixed directions on the sphere
    nn = nodes.shape[0]
    lo = np.empty(m)
    hi = np.empty(m)
    total = 0.0
    for q in range(nn):
        k = 0
        for t in range(m):
            i = idx[t]
            cx = Y[i, 0] - x[0]
            cy = Y[i, 1] - x[1]
            cz = Y[i, 2] - x[2]
            b = nodes[q, 0] * cx + nodes[q, 1] * cy + nodes[q, 2] * cz
            disc = b * b - (cx * cx + cy * cy + cz * cz - R * R)
            if disc <= 0.0:
                continue
            h = math.sqrt(disc)
            a0 = max(b - h, 0.0)
            a1 = min(b + h, R)
            if a1 <= a0:
                continue
            # insertion into the list sorted by left end
            p = k
            while p > 0 and lo[p - 1] > a0:
                lo[p] = lo[p - 1]
                hi[p] = hi[p - 1]
                p -= 1
            lo[p] = a0
            hi[p] = a1
            k += 1
        free = 0.0
        reach = 0.0
        for t in range(k):
            if lo[t] > reach:
                free += lo[t] ** 3 - reach**3
            if hi[t] > reach:
                reach = hi[t]
        if reach < R:
            free += R**3 - reach**3
        total += free / 3.0
    return total * (4.0 * math.pi / nn)


@njit(cache=True)
def _pair_tail(A, a, r0, d, r):
    """A * sum_{k >= floor(r/r0)} Npack(k) exp(-a k r0)."""
    return _pair_shell_tail(A, a, r0, d, int(math.floor(r / r0)))


@njit(cache=True)
def _pair_shell_tail(A, a, r0, d, k):
    """Bound on the contribution of points at distance >= k r0."""
    if k < 1:
        k = 1
    total = 0.0
    for _ in range(1000000):
        lo = k - 0.5 if k > 0.5 else 0.0
        npack = ((k + 1.5) ** d - lo**d) / 0.5**d
        term = A * npack * math.exp(-a * k * r0)
        total += term
        if term <= 1e-18 * total or term == 0.0:
            break
        k += 1
    return total


@njit(cache=True)
def _ball_count(c, x, N, nn, r2):
    dx = 0.0
    for k in range(x.shape[0]):
        t = c[k] - x[k]
        dx += t * t
    if dx > r2:
        return -1
    cnt = 0
    for i in range(nn):
        s = 0.0
        for k in range(x.shape[0]):
            t = c[k] - N[i, k]
            s += t * t
        if s <= r2:
            cnt += 1
    return cnt


@njit(cache=True)
def _truncated_violation(x, Y, ny, rt, kmax):
    """True if some closed ball of radius rt contains x and at least kmax points of Y."""
    d = x.shape[0]
    N = np.empty((ny, d))
    nn = 0
    for i in range(ny):
        if _dist2(x, Y, i) <= 4.0 * rt * rt * (1.0 + 1e-12):
            for k in range(d):
                N[nn, k] = Y[i, k]
            nn += 1
    if nn < kmax:
        return False
    r2 = rt * rt * (1.0 + 1e-9)
    # generic lowest direction
    e = np.array([0.8090169943749475, 0.4752670638011765, 0.3457886289733469])[:d]
    e = e / math.sqrt(np.sum(e * e))
    P = np.empty((nn + 1, d))
    for k in range(d):
        P[0, k] = x[k]
    for i in range(nn):
        for k in range(d):
            P[i + 1, k] = N[i, k]
    m = nn + 1
    c = np.empty(d)
    # lowest points of single balls
    for i in range(m):
        for k in range(d):
            c[k] = P[i, k] - rt * e[k]
        if _ball_count(c, x, N, nn, r2) >= kmax:
            return True
    if d == 1:
        return False
    for i in range(m):
        for j in range(i + 1, m):
            diff = P[j] - P[i]
            s = math.sqrt(np.sum(diff * diff))
            if s == 0.0 or s > 2.0 * rt:
                continue
            mid = 0.5 * (P[i] + P[j])
            h = math.sqrt(max(rt * rt - 0.25 * s * s, 0.0))
            nvec = diff / s
            if d == 2:
                perp = np.array([-nvec[1], nvec[0]])
                for sg in (-1.0, 1.0):
                    c = mid + sg * h * perp
                    if _ball_count(c, x, N, nn, r2) >= kmax:
                        return True
            else:
                w = e - np.sum(e * nvec) * nvec
                wn = math.sqrt(np.sum(w * w))
                if wn > 0:
                    c = mid - h * w / wn
                    if _ball_count(c, x, N, nn, r2) >= kmax:
                        return True
    if d == 3:
        for i in range(m):
            for j in range(i + 1, m):
                for l in range(j + 1, m):
                    p1 = P[i]
                    ex = P[j] - p1
                    dd = math.sqrt(np.sum(ex * ex))
                    if dd == 0.0 or dd > 2 * rt:
                        continue
                    ex = ex / dd
                    v = P[l] - p1
                    ii = np.sum(ex * v)
                    ey = v - ii * ex
                    eyn = math.sqrt(np.sum(ey * ey))
                    if eyn == 0.0:
                        continue
                    ey = ey / eyn
                    ez = np.array([ex[1] * ey[2] - ex[2] * ey[1], ex[2] * ey[0] - ex[0] * ey[2], ex[0] * ey[1] - ex[1] * ey[0]])
                    jj = np.sum(ey * v)
                    # equal radii: trilateration
                    px = dd / 2.0
                    py = (ii * ii + jj * jj - 2 * ii * px) / (2 * jj)
                    z2 = rt * rt - px * px - py * py
                    if z2 < 0:
                        continue
                    pz = math.sqrt(z2)
                    for sg in (-1.0, 1.0):
                        c = p1 + px * ex + py * ey + sg * pz * ez
                        if _ball_count(c, x, N, nn, r2) >= kmax:
                            return True
    return False


@njit(cache=True)
def _bounds(kind, params, aux, x, Y, ny, r, exact):
    """(lower, upper) envelopes of the add-one cost from Y[:ny] ⊆ B_r(x).

    With ``exact`` the rows of Y are the whole configuration and the exact
    cost is returned twice.
    """
    if kind == 0:
        return 0.0, 0.0
    if kind == 1:  # Strauss: beta * #{|y - x| < r0}
        beta = params[0]
        r0 = params[1]
        cnt = 0
        for i in range(ny):
            if _dist2(x, Y, i) < r0 * r0:
                cnt += 1
        val = beta * cnt
        if exact or r >= r0 or beta == 0.0:
            return val, val
        return val, INF
    if kind == 2:  # hard core: infinite if |y - x| < 2 rh
        dmin = 2.0 * params[0]
        for i in range(ny):
            if _dist2(x, Y, i) < dmin * dmin:
                return INF, INF
        if exact or r >= dmin:
            return 0.0, 0.0
        return 0.0, INF
    if kind == 3:  # area interaction
        gamma = params[0]
        R = params[1]
        val = gamma * _uncovered_volume(x, Y, ny, R, aux)
        if exact or r >= 2.0 * R or gamma == 0.0:
            return val, val
        return 0.0, val
    if kind == 4:  # pair potential A exp(-a s) with hard core r0
        A = params[0]
        a = params[1]
        r0 = params[2]
        # the upper envelope only uses points inside the last whole shell k r0,
        # so it changes at multiples of r0 and never increases with r
        k = int(math.floor(r / r0))
        rk2 = (k * r0) ** 2
        s = 0.0
        s_in = 0.0
        for i in range(ny):
            d2 = _dist2(x, Y, i)
            if d2 <= r0 * r0:
                return INF, INF
            term = A * math.exp(-a * math.sqrt(d2))
            s += term
            if d2 < rk2:
                s_in += term
        if exact:
            return s, s
        if k < 1:
            return s, INF
        return s, s_in + _pair_shell_tail(A, a, r0, x.shape[0], k)
    if kind == 5:  # truncated Poisson
        rt = params[0]
        kmax = int(params[1])
        if _truncated_violation(x, Y, ny, rt, kmax):
            return INF, INF
        if exact or r >= 2.0 * rt:
            return 0.0, 0.0
        return 0.0, INF
    return math.nan, math.nan


@njit(cache=True)
def _total_energy(kind, params, aux, X):
    """Psi(X) as the sum of successive add-one costs."""
    total = 0.0
    n = X.shape[0]
    for i in range(n):
        lo, hi = _bounds(kind, params, aux, X[i], X, i, INF, True)
        total += lo
        if total == INF:
            return INF
    return total


# ---------------------------------------------------------------------------
# Python classes


def pair_tail_bound(A: float, a: float, r0: float, d: int, r: float) -> float:
    """Bound on the pair-potential contribution from points farther than r.

    Valid for configurations whose points are more than r0 apart.
    """
    if r < r0:
        return INF
    return float(_pair_tail(float(A), float(a), float(r0), int(d), float(r)))


class Potential:
    """Base class for add-one potentials.

    Subclasses either set ``kind`` (compiled built-ins) or override
    :meth:`add_one_bounds`.  ``monotone`` is +1 when the add-one cost can only
    grow as points are added to X, -1 when it can only shrink and 0 when
    nothing is known; the sampler uses it to settle points whose ancestors
    are not all resolved.
    """

    kind: int | None = None
    monotone: int = 0
    name = "potential"

    def __init__(self, dimension: int):
        if dimension < 1:
            raise PotentialError("dimension must be at least 1")
        self.dimension = int(dimension)

    # parameters handed to the compiled routines
    def params(self) -> np.ndarray:
        return np.zeros(0)

    def aux(self) -> np.ndarray:
        return np.zeros((0, self.dimension))

    @property
    def interaction_range(self) -> float:
        """Radius beyond which the envelopes coincide (inf if never)."""
        return INF

    @property
    def interaction_scale(self) -> float:
        """Radius beyond which psi vanishes; for infinite range, where its exponential bound starts."""
        rng = self.interaction_range
        return rng if math.isfinite(rng) else self.decay()[1]

    def to_dict(self) -> dict:
        raise NotImplementedError

    # --- add-one costs
    def add_one_bounds(self, x, X, r: float, exact: bool = False):
        x = np.asarray(x, dtype=float).reshape(self.dimension)
        X = as_points(X, self.dimension)
        if not exact:
            X = X[np.sum((X - x) ** 2, axis=1) <= r * r]
        if self.kind is None:
            raise NotImplementedError
        lo, hi = _bounds(self.kind, self.params(), self.aux(), x, X, len(X), float(r), bool(exact))
        return float(lo), float(hi)

    def add_one(self, x, X) -> float:
        return self.add_one_bounds(x, X, INF, exact=True)[0]

    def add_one_lower(self, x, X, r: float) -> float:
        return self.add_one_bounds(x, X, r)[0]

    def add_one_upper(self, x, X, r: float) -> float:
        return self.add_one_bounds(x, X, r)[1]

    def energy(self, X) -> float:
        """Psi(X) with Psi(empty) = 0, built from successive add-one costs."""
        X = as_points(X, self.dimension)
        if self.kind is not None:
            return float(_total_energy(self.kind, self.params(), self.aux(), X))
        total = 0.0
        for i in range(len(X)):
            total += self.add_one(X[i], X[:i])
            if total == INF:
                return INF
        return total

    # --- localisation profile
    def psi(self, r):
        raise NotImplementedError

    def eta_quantile(self, v):
        """Inverse of r -> 1 - psi(r) applied to uniforms v in [0, 1)."""
        v = np.asarray(v, dtype=float)
        grid = np.concatenate([[0.0], np.geomspace(1e-6, 1e3, 4000)])
        cdf = 1.0 - np.asarray([self.psi(r) for r in grid])
        cdf = np.maximum.accumulate(cdf)
        idx = np.searchsorted(cdf, v, side="left")
        if np.any(idx >= len(grid)):
            raise PotentialError("localisation profile does not reach 0 on [0, 1e3]")
        return grid[idx]

    def decay(self):
        """(rate, onset) with psi(r) <= exp(-rate (r - onset)) for all r > 0."""
        rng = self.interaction_range
        if math.isfinite(rng):
            return INF, rng
        raise NotImplementedError

    def validate(self) -> None:
        """Check that adding a point to the empty set has finite cost."""
        if not math.isfinite(self.add_one(np.zeros(self.dimension), np.zeros((0, self.dimension)))):
            raise PotentialError("add-one cost on the empty configuration must be finite")

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


class NullPotential(Potential):
    """Psi = 0: the Gibbs process is the Poisson process itself."""

    kind = KIND_NULL
    monotone = 1
    name = "poisson"

    @property
    def interaction_range(self) -> float:
        return 0.0

    def psi(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def eta_quantile(self, v):
        return np.zeros_like(np.asarray(v, dtype=float))

    def to_dict(self):
        return {"type": "poisson"}


class _FiniteRange(Potential):
    def psi(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.interaction_range, self._psi_inside(), 0.0)

    def _psi_inside(self) -> float:
        return 1.0

    def eta_quantile(self, v):
        v = np.asarray(v, dtype=float)
        p0 = 1.0 - self._psi_inside()
        return np.where(v < p0, 0.0, self.interaction_range)


class StraussPotential(_FiniteRange):
    """beta times the number of points closer than r0."""

    kind = KIND_STRAUSS
    monotone = 1
    name = "strauss"

    def __init__(self, dimension: int, beta: float, r0: float):
        super().__init__(dimension)
        if not (beta >= 0 and math.isfinite(beta)):
            raise PotentialError("Strauss beta must be finite and non-negative")
        if not r0 > 0:
            raise PotentialError("Strauss range r0 must be positive")
        self.beta, self.r0 = float(beta), float(r0)

    def params(self):
        return np.array([self.beta, self.r0])

    @property
    def interaction_range(self):
        return self.r0

    def _psi_inside(self):
        return 1.0 if self.beta > 0 else 0.0

    def to_dict(self):
        return {"type": "strauss", "beta": self.beta, "r0": self.r0}


class HardCorePotential(_FiniteRange):
    """Infinite cost when a point of X is closer than 2r (balls of radius r overlap)."""

    kind = KIND_HARDCORE
    monotone = 1
    name = "hardcore"

    def __init__(self, dimension: int, r: float):
        super().__init__(dimension)
        if not r > 0:
            raise PotentialError("hard-core radius must be positive")
        self.r = float(r)

    def params(self):
        return np.array([self.r])

    @property
    def interaction_range(self):
        return 2.0 * self.r

    def to_dict(self):
        return {"type": "hardcore", "r": self.r}


_SPHERE_NODES: dict[int, np.ndarray] = {}


def sphere_nodes_3d(m: int = 14) -> np.ndarray:
    """2**m deterministic, evenly spread unit vectors (spherical Fibonacci lattice)."""
    if m not in _SPHERE_NODES:
        n = 2**m
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        s = np.sqrt(1.0 - z * z)
        _SPHERE_NODES[m] = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
    return _SPHERE_NODES[m]


class AreaInteractionPotential(_FiniteRange):
    """gamma times the volume of B_r(x) left uncovered by the balls B_r(y).

    Exact for d <= 2; in d = 3 coverage is exact along each of 2**14 fixed
    ray directions and the angular integral is a quadrature (relative error
    well below 1e-3 of the ball volume).
    """

    kind = KIND_AREA
    monotone = -1
    name = "area"
    quadrature_tolerance = {1: 1e-12, 2: 1e-10, 3: 1e-3}

    def __init__(self, dimension: int, gamma: float, r: float):
        super().__init__(dimension)
        if dimension > 3:
            raise PotentialError("area interaction is implemented for d <= 3")
        if not gamma >= 0:
            raise PotentialError("area interaction needs gamma >= 0 (add-one cost must be non-negative)")
        if not r > 0:
            raise PotentialError("area-interaction radius must be positive")
        self.gamma, self.r = float(gamma), float(r)

    def params(self):
        return np.array([self.gamma, self.r])

    def aux(self):
        if self.dimension == 3:
            return sphere_nodes_3d()
        return np.zeros((0, self.dimension))

    @property
    def interaction_range(self):
        return 2.0 * self.r

    def _psi_inside(self):
        return 1.0 - math.exp(-self.gamma * ball_volume(self.dimension, self.r))

    def to_dict(self):
        return {"type": "area", "gamma": self.gamma, "r": self.r}


class PairPotential(Potential):
    """phi(s) = A exp(-a s) for s > r0 and +inf for s <= r0.

    The tail envelope counts at most Npack(k) points in the shell
    [k r0, (k+1) r0), which holds for r0-separated configurations, the only
    ones with finite energy.
    """

    kind = KIND_PAIR
    monotone = 1
    name = "pair"

    def __init__(self, dimension: int, A: float, a: float, r0: float):
        super().__init__(dimension)
        if not (A >= 0 and math.isfinite(A)):
            raise PotentialError("pair amplitude A must be finite and non-negative")
        if not a > 0:
            raise PotentialError("pair decay a must be positive")
        if not r0 > 0:
            raise PotentialError("pair hard-core distance r0 must be positive")
        self.A, self.a, self.r0 = float(A), float(a), float(r0)
        self._table = None

    def params(self):
        return np.array([self.A, self.a, self.r0])

    def tail(self, r: float) -> float:
        return pair_tail_bound(self.A, self.a, self.r0, self.dimension, r)

    def psi(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.array([1.0 if t < self.r0 else -math.expm1(-self.tail(t)) for t in r])
        return out if out.size > 1 else out[0]

    def _cdf_table(self):
        if self._table is None:
            ks, vals = [], []
            k = 1
            while True:
                F = math.exp(-self.tail(k * self.r0))
                ks.append(k)
                vals.append(F)
                if F >= 1.0 or k > 100000:
                    break
                k += 1
            self._table = (np.array(ks, dtype=float), np.array(vals))
        return self._table

    def eta_quantile(self, v):
        ks, F = self._cdf_table()
        idx = np.minimum(np.searchsorted(F, np.asarray(v, dtype=float), side="left"), len(ks) - 1)
        return ks[idx] * self.r0

    def decay(self):
        rate = 0.5 * self.a
        # psi is constant on [k r0, (k+1) r0); the binding point is the right end
        onset = self.r0
        k = 1
        while True:
            tail = self.tail(k * self.r0)
            psi = -math.expm1(-tail) if tail < INF else 1.0
            if psi <= 0.0:
                break
            onset = max(onset, (k + 1) * self.r0 + math.log(psi) / rate)
            if (k + 1) * self.r0 + math.log(psi) / rate < onset - 50.0 / rate:
                break
            k += 1
        return rate, onset

    def to_dict(self):
        return {"type": "pair", "A": self.A, "a": self.a, "r0": self.r0}


class TruncatedPoissonPotential(_FiniteRange):
    """Infinite cost if a closed ball of radius r holds x and at least k other points."""

    kind = KIND_TRUNCATED
    monotone = 1
    name = "truncated_poisson"

    def __init__(self, dimension: int, r: float, k: int):
        super().__init__(dimension)
        if dimension > 3:
            raise PotentialError("truncated Poisson constraint is implemented for d <= 3")
        if not r > 0:
            raise PotentialError("truncation radius must be positive")
        if int(k) != k or k < 1:
            raise PotentialError("truncation count k must be a positive integer")
        self.r, self.k = float(r), int(k)

    def params(self):
        return np.array([self.r, float(self.k)])

    @property
    def interaction_range(self):
        return 2.0 * self.r

    def to_dict(self):
        return {"type": "truncated_poisson", "r": self.r, "k": self.k}


def pair_add_one(potential: Potential, x, y, X) -> float:
    """Cost Psi(X + x + y) - Psi(X) of inserting two points, as add_one(x, X + y) + add_one(y, X)."""
    x = np.asarray(x, dtype=float).reshape(potential.dimension)
    y = np.asarray(y, dtype=float).reshape(potential.dimension)
    if np.array_equal(x, y):
        raise PotentialError("pair insertion needs two distinct points")
    X = as_points(X, potential.dimension)
    second = potential.add_one(y, X)
    if second == INF:
        return INF
    first = potential.add_one(x, np.vstack([X, y[None, :]]))
    return first + second


def potential_from_dict(spec: dict, dimension: int) -> Potential:
    """Build a potential from its JSON description."""
    spec = dict(spec)
    kind = spec.pop("type", None)
    try:
        if kind in ("poisson", "none", "null"):
            return NullPotential(dimension)
        if kind == "strauss":
            return StraussPotential(dimension, float(spec["beta"]), float(spec["r0"]))
        if kind == "hardcore":
            return HardCorePotential(dimension, float(spec["r"]))
        if kind == "area":
            return AreaInteractionPotential(dimension, float(spec["gamma"]), float(spec["r"]))
        if kind == "pair":
            phi = spec.get("phi", spec)
            return PairPotential(dimension, float(phi["A"]), float(phi["a"]), float(phi["r0"]))
        if kind == "truncated_poisson":
            return TruncatedPoissonPotential(dimension, float(spec["r"]), spec["k"])
    except KeyError as exc:
        raise PotentialError(f"potential '{kind}' is missing parameter {exc}") from None
    raise PotentialError(f"unknown potential type {kind!r}")
