"""Chronological acceptance of free births.

Births are visited in time order.  For a birth x the free points alive at its
birth time inside the current radius are its causal ancestors.  With U a
uniform, x is accepted if ``U < exp(-upper)`` and rejected if
``U >= exp(-lower)``, where the envelopes are evaluated on the accepted
ancestors; otherwise the radius is enlarged.  Either way the decision equals
``U < exp(-add_one(x, accepted points alive))``.

Points whose ancestry reaches before the horizon are *undetermined*.  For a
monotone potential a birth with undetermined ancestors may still be settled,
by evaluating the envelopes with and without them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..potentials import Potential, _bounds
from .trajectory import Trajectory

UNDETERMINED = 0
ACCEPTED = 1
REJECTED = 2

_MAX_CELLS = 1 << 22


class EnvelopeError(RuntimeError):
    """A potential produced lower > upper."""


@njit(cache=True, nogil=True)
def _resolve_kernel(pos, birth, death, eta, u, horizon, hw, kind, params, aux, monotone, rstep, cell):
    n, d = pos.shape
    status = np.zeros(n, dtype=np.int8)
    radius = np.zeros(n)
    m = max(1, int(2.0 * hw / cell))
    mmax = max(1, int(_MAX_CELLS ** (1.0 / d)))
    if m > mmax:
        m = mmax
    w = 2.0 * hw / m
    ncell = m**d
    head = np.full(ncell, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    prv = np.full(n, -1, dtype=np.int64)
    cellid = np.full(n, -1, dtype=np.int64)
    alive = np.empty(n, dtype=np.int64)
    apos = np.full(n, -1, dtype=np.int64)
    nalive = 0
    dorder = np.argsort(death)
    dp = 0
    diam = 2.0 * hw * math.sqrt(d)
    par_ptr = np.zeros(n + 1, dtype=np.int64)
    cap = 4 * n + 16
    par = np.empty(cap, dtype=np.int64)
    ne = 0
    gidx = np.empty(n, dtype=np.int64)
    YA = np.empty((n, d))
    YB = np.empty((n, d))
    lo_c = np.empty(d, dtype=np.int64)
    hi_c = np.empty(d, dtype=np.int64)
    cur = np.empty(d, dtype=np.int64)
    err = 0
    for i in range(n):
        b = birth[i]
        while dp < n and death[dorder[dp]] <= b:
            j = dorder[dp]
            dp += 1
            if apos[j] < 0:
                continue
            c = cellid[j]
            if prv[j] >= 0:
                nxt[prv[j]] = nxt[j]
            else:
                head[c] = nxt[j]
            if nxt[j] >= 0:
                prv[nxt[j]] = prv[j]
            k = apos[j]
            last = alive[nalive - 1]
            alive[k] = last
            apos[last] = k
            apos[j] = -1
            nalive -= 1
        x = pos[i]
        cnt = 0
        if b >= -horizon:
            r = eta[i]
            while True:
                exact = r >= diam
                cnt = 0
                if exact:
                    for t in range(nalive):
                        gidx[cnt] = alive[t]
                        cnt += 1
                elif r > 0.0:
                    for k in range(d):
                        a = int((x[k] - r + hw) / w)
                        lo_c[k] = min(max(a, 0), m - 1)
                        a = int((x[k] + r + hw) / w)
                        hi_c[k] = min(max(a, 0), m - 1)
                        cur[k] = lo_c[k]
                    r2 = r * r
                    while True:
                        flat = 0
                        for k in range(d):
                            flat = flat * m + cur[k]
                        j = head[flat]
                        while j >= 0:
                            s = 0.0
                            for k in range(d):
                                t = pos[j, k] - x[k]
                                s += t * t
                            if s <= r2:
                                gidx[cnt] = j
                                cnt += 1
                            j = nxt[j]
                        k = d - 1
                        while k >= 0:
                            cur[k] += 1
                            if cur[k] <= hi_c[k]:
                                break
                            cur[k] = lo_c[k]
                            k -= 1
                        if k < 0:
                            break
                nA = 0
                nU = 0
                for t in range(cnt):
                    j = gidx[t]
                    if status[j] == ACCEPTED:
                        for k in range(d):
                            YA[nA, k] = pos[j, k]
                        nA += 1
                    elif status[j] == UNDETERMINED:
                        nU += 1
                if nU > 0 and monotone == 0:
                    status[i] = UNDETERMINED
                    break
                if nU == 0:
                    lo, hi = _bounds(kind, params, aux, x, YA, nA, r, exact)
                else:
                    for t in range(nA):
                        for k in range(d):
                            YB[t, k] = YA[t, k]
                    q = nA
                    for t in range(cnt):
                        j = gidx[t]
                        if status[j] == UNDETERMINED:
                            for k in range(d):
                                YB[q, k] = pos[j, k]
                            q += 1
                    loA, hiA = _bounds(kind, params, aux, x, YA, nA, r, exact)
                    loB, hiB = _bounds(kind, params, aux, x, YB, q, r, exact)
                    if monotone > 0:
                        lo = loA
                        hi = hiB
                    else:
                        lo = loB
                        hi = hiA
                if lo > hi + 1e-9 * (1.0 + abs(hi)):
                    err = 1
                if u[i] < math.exp(-hi):
                    status[i] = ACCEPTED
                    break
                if u[i] >= math.exp(-lo):
                    status[i] = REJECTED
                    break
                if nU > 0 or exact:
                    status[i] = UNDETERMINED
                    break
                r = min(max(2.0 * r, rstep), diam)
            radius[i] = r
        # ancestors: free points alive at birth inside the final radius
        if ne + cnt > cap:
            cap = 2 * (ne + cnt)
            tmp = np.empty(cap, dtype=np.int64)
            tmp[:ne] = par[:ne]
            par = tmp
        for t in range(cnt):
            par[ne] = gidx[t]
            ne += 1
        par_ptr[i + 1] = ne
        # insert i
        flat = 0
        for k in range(d):
            a = int((x[k] + hw) / w)
            a = min(max(a, 0), m - 1)
            flat = flat * m + a
        cellid[i] = flat
        nxt[i] = head[flat]
        prv[i] = -1
        if head[flat] >= 0:
            prv[head[flat]] = i
        head[flat] = i
        alive[nalive] = i
        apos[i] = nalive
        nalive += 1
    return status, radius, par_ptr, par[:ne].copy(), err


@njit(cache=True, nogil=True)
def _clan_stats(pos, birth, par_ptr, par, roots):
    n, d = pos.shape
    nr = roots.shape[0]
    stamp = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    members = np.empty(n + 1, dtype=np.int64)
    sizes = np.zeros(nr, dtype=np.int64)
    diams = np.zeros(nr)
    depth = np.zeros(nr)
    for q in range(nr):
        root = roots[q]
        top = 0
        stack[0] = root
        stamp[root] = q
        nm = 0
        earliest = birth[root]
        while top >= 0:
            v = stack[top]
            top -= 1
            members[nm] = v
            nm += 1
            if birth[v] < earliest:
                earliest = birth[v]
            for e in range(par_ptr[v], par_ptr[v + 1]):
                p = par[e]
                if stamp[p] != q:
                    stamp[p] = q
                    top += 1
                    stack[top] = p
        best = 0.0
        if nm <= 4000:
            for a in range(nm):
                for c in range(a + 1, nm):
                    s = 0.0
                    for k in range(d):
                        t = pos[members[a], k] - pos[members[c], k]
                        s += t * t
                    if s > best:
                        best = s
            best = math.sqrt(best)
        else:
            for k in range(d):
                mn = pos[members[0], k]
                mx = mn
                for a in range(nm):
                    v = pos[members[a], k]
                    mn = min(mn, v)
                    mx = max(mx, v)
                best += (mx - mn) ** 2
            best = math.sqrt(best)
        sizes[q] = nm
        diams[q] = best
        depth[q] = -earliest
    return sizes, diams, depth


@dataclass
class Resolution:
    """Statuses of a trajectory, in trajectory order, with ancestor links."""

    status: np.ndarray
    radius: np.ndarray
    eta: np.ndarray
    order: np.ndarray  # chronological order of the trajectory's points
    parent_ptr: np.ndarray  # CSR over chronological positions
    parents: np.ndarray

    def ancestors(self, i: int) -> np.ndarray:
        """Causal ancestors of point i (trajectory indices)."""
        pos = int(self._inverse[i])
        return self.order[self.parents[self.parent_ptr[pos] : self.parent_ptr[pos + 1]]]

    @property
    def _inverse(self):
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(len(self.order))
        return inv

    def clan_stats(self, traj: Trajectory, roots: np.ndarray):
        """(size, spatial diameter, depth in time) of each root's clan of ancestors."""
        roots = np.asarray(roots, dtype=np.int64)
        if len(roots) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0)
        inv = self._inverse
        return _clan_stats(
            np.ascontiguousarray(traj.positions[self.order]),
            traj.birth[self.order],
            self.parent_ptr,
            self.parents,
            inv[roots],
        )

    def clan(self, i: int) -> np.ndarray:
        """Trajectory indices of the clan of ancestors of point i (including i)."""
        seen = {int(i)}
        stack = [int(i)]
        while stack:
            v = stack.pop()
            for p in self.ancestors(v):
                p = int(p)
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return np.array(sorted(seen), dtype=np.int64)


def _eta(traj: Trajectory, potential: Potential) -> np.ndarray:
    return np.asarray(potential.eta_quantile(traj.eta_u), dtype=float)


def _grid_cell(potential: Potential, eta: np.ndarray, hw: float) -> float:
    rng = potential.interaction_range
    if math.isfinite(rng) and rng > 0:
        return rng
    pos = eta[eta > 0]
    if len(pos):
        return float(np.median(pos))
    return 2.0 * hw


def resolve_statuses(traj: Trajectory, potential: Potential, engine: str = "auto") -> Resolution:
    """Accept or reject every free birth of the trajectory."""
    if potential.dimension != traj.window.dimension:
        raise ValueError("potential and window dimensions differ")
    if engine == "auto":
        engine = "compiled" if potential.kind is not None else "python"
    eta = _eta(traj, potential)
    order = np.argsort(traj.birth, kind="stable")
    if engine == "python":
        status_s, radius_s, ptr, par = _resolve_python(traj, potential, eta, order)
    elif engine == "compiled":
        if potential.kind is None:
            raise ValueError("compiled engine needs a built-in potential")
        hw = traj.window.half_width
        rstep = potential.interaction_range
        if not (math.isfinite(rstep) and rstep > 0):
            rstep = getattr(potential, "r0", hw)
        status_s, radius_s, ptr, par, err = _resolve_kernel(
            np.ascontiguousarray(traj.positions[order]),
            traj.birth[order],
            traj.death[order],
            eta[order],
            traj.u[order],
            float(traj.horizon),
            float(hw),
            int(potential.kind),
            potential.params(),
            np.ascontiguousarray(potential.aux()),
            int(potential.monotone),
            float(rstep),
            float(_grid_cell(potential, eta, hw)),
        )
        if err:
            raise EnvelopeError(f"{potential!r} returned a lower envelope above the upper one")
    else:
        raise ValueError(f"unknown engine {engine!r}")
    status = np.empty(len(order), dtype=np.int8)
    status[order] = status_s
    radius = np.empty(len(order))
    radius[order] = radius_s
    return Resolution(status, radius, eta, order, ptr, par)


def _resolve_python(traj: Trajectory, potential: Potential, eta: np.ndarray, order: np.ndarray):
    """Reference implementation of the same rule with brute-force searches."""
    n = len(order)
    pos = traj.positions[order]
    birth = traj.birth[order]
    death = traj.death[order]
    u = traj.u[order]
    et = eta[order]
    status = np.zeros(n, dtype=np.int8)
    radius = np.zeros(n)
    ptr = np.zeros(n + 1, dtype=np.int64)
    parents: list[int] = []
    diam = traj.window.diameter
    rstep = potential.interaction_range
    if not (math.isfinite(rstep) and rstep > 0):
        rstep = getattr(potential, "r0", traj.window.half_width)
    alive: list[int] = []
    for i in range(n):
        b = birth[i]
        alive = [j for j in alive if death[j] > b]
        x = pos[i]
        anc: list[int] = []
        if b >= -traj.horizon:
            r = et[i]
            while True:
                exact = r >= diam
                if alive:
                    dist = np.linalg.norm(pos[alive] - x, axis=1)
                    anc = [j for j, s in zip(alive, dist) if exact or s <= r]
                else:
                    anc = []
                A = pos[[j for j in anc if status[j] == ACCEPTED]].reshape(-1, x.size)
                U = pos[[j for j in anc if status[j] == UNDETERMINED]].reshape(-1, x.size)
                if len(U) and potential.monotone == 0:
                    status[i] = UNDETERMINED
                    break
                loA, hiA = potential.add_one_bounds(x, A, r, exact=exact)
                if len(U):
                    loB, hiB = potential.add_one_bounds(x, np.vstack([A, U]), r, exact=exact)
                    lo, hi = (loA, hiB) if potential.monotone > 0 else (loB, hiA)
                else:
                    lo, hi = loA, hiA
                if lo > hi + 1e-9 * (1.0 + abs(hi)):
                    raise EnvelopeError(f"{potential!r} returned a lower envelope above the upper one")
                if u[i] < math.exp(-hi):
                    status[i] = ACCEPTED
                    break
                if u[i] >= math.exp(-lo):
                    status[i] = REJECTED
                    break
                if len(U) or exact:
                    status[i] = UNDETERMINED
                    break
                r = min(max(2.0 * r, rstep), diam)
            radius[i] = r
        parents.extend(anc)
        ptr[i + 1] = len(parents)
        alive.append(i)
    return status, radius, ptr, np.array(parents, dtype=np.int64)
