"""Double integrals against the weakly singular kernel |x - y|^beta, -1 < beta < 0.

Integrals are assembled from "atoms": short sub-intervals, each carrying a
smooth weight function. For atoms a and b the engine returns

    G[a, b] = int_a int_b w_a(x) w_b(y) |x - y|^beta dx dy.

Coinciding atoms use a change of variables that integrates the power
singularity exactly (Gauss-Jacobi in both directions). Touching atoms are
handled by a Duffy split of the corner square plus geometrically graded
rectangles. Separated atoms use tensor Gauss-Legendre.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import special

_BLOCK = 2_000_000  # max kernel-matrix entries held at once


@lru_cache(maxsize=64)
def gauss_legendre01(q):
    x, w = special.roots_legendre(q)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=256)
def gauss_jacobi01(q, power, at_right=False):
    """Nodes and weights for int_0^1 f(s) s^power ds (or (1-s)^power if ``at_right``)."""
    if at_right:
        x, w = special.roots_jacobi(q, power, 0.0)
    else:
        x, w = special.roots_jacobi(q, 0.0, power)
    return 0.5 * (x + 1.0), w * 2.0 ** (-power - 1.0)


class Atoms:
    """Sub-intervals ``[lo[i], hi[i]]`` each tagged with an owner index.

    ``weight(owner, x)`` evaluates the smooth weight function of the owner
    at points ``x``; both arrays broadcast together.
    """

    def __init__(self, lo, hi, owner, weight):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.owner = np.asarray(owner, dtype=int)
        self.weight = weight
        order = np.argsort(self.lo, kind="stable")
        self.lo, self.hi, self.owner = self.lo[order], self.hi[order], self.owner[order]

    def __len__(self):
        return self.lo.size

    @property
    def width(self):
        return self.hi - self.lo


def graded_offsets(length, width, max_ratio=4):
    """Offsets measured back from the right end: 0, w, 2w, 4w, ... then steps of ``max_ratio*w``."""
    out = [0.0]
    step = width
    while out[-1] < length:
        out.append(min(out[-1] + step, length))
        if step < max_ratio * width:
            step *= 2
    if len(out) > 2 and out[-1] - out[-2] < 0.25 * width:
        out.pop(-2)
    return np.asarray(out)


def build_atoms(edges, weight, width, truncation):
    """Split each interval ``[edges[k], edges[k+1]]`` into atoms owned by k.

    Atoms are graded from the right end of each interval (where the weight
    is largest) and the interval is cut to its last ``truncation`` units.
    """
    lo, hi, owner = [], [], []
    for k in range(len(edges) - 1):
        left, right = float(edges[k]), float(edges[k + 1])
        length = min(right - left, truncation)
        if length <= 0:
            continue
        off = graded_offsets(length, width)
        pts = right - off[::-1]
        pts[0] = max(left, right - length)
        lo.extend(pts[:-1])
        hi.extend(pts[1:])
        owner.extend([k] * (len(pts) - 1))
    return Atoms(lo, hi, owner, weight)


def _nodes(atoms, q):
    x, w = gauss_legendre01(q)
    xs = atoms.lo[:, None] + atoms.width[:, None] * x[None, :]
    ws = atoms.width[:, None] * w[None, :] * atoms.weight(atoms.owner[:, None], xs)
    return xs, ws


def _far(atoms, q, beta):
    xs, ws = _nodes(atoms, q)
    na = len(atoms)
    flat_x = xs.ravel()
    flat_w = ws.ravel()
    out = np.empty((na, na))
    rows = max(1, _BLOCK // max(flat_x.size * q, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        for start in range(0, na, rows):
            stop = min(na, start + rows)
            d = np.abs(xs[start:stop, :, None] - flat_x[None, None, :])
            k = d**beta * flat_w[None, None, :]
            k = k.reshape(stop - start, q, na, q).sum(axis=3)
            out[start:stop] = np.einsum("aq,aqb->ab", ws[start:stop], k)
    return out


def _diag(atoms, q, beta):
    lo = atoms.lo[:, None, None]
    h = atoms.width[:, None, None]
    own = atoms.owner[:, None, None]
    so, wo = gauss_jacobi01(q, beta + 1.0, at_right=True)
    ri, wi = gauss_jacobi01(q, beta)
    s = so[None, :, None]
    r = ri[None, None, :]
    y = lo + h * s
    gy = atoms.weight(own, y)
    gz = atoms.weight(own, y + h * (1.0 - s) * r)
    inner = (gz * wi[None, None, :]).sum(axis=2, keepdims=True)
    total = (gy * inner)[:, :, 0] @ wo
    return 2.0 * atoms.width ** (beta + 2.0) * total


def _pair_touching(atoms, a, b, q, beta):
    """Atom a ends where atom b starts."""
    weight = atoms.weight
    oa, ob = atoms.owner[a], atoms.owner[b]
    c = atoms.hi[a]
    A, B = atoms.width[a], atoms.width[b]
    m = min(A, B)
    s, ws = gauss_jacobi01(q, beta + 1.0)
    r, wr = gauss_legendre01(q)
    S, R = s[:, None], r[None, :]
    wgt = ws[:, None] * wr[None, :] * (1.0 + R) ** beta
    # Z <= X and X <= Z triangles of the corner square [0, m]^2.
    t1 = weight(oa, c - m * S) * weight(ob, c + m * S * R)
    t2 = weight(oa, c - m * S * R) * weight(ob, c + m * S)
    total = m ** (beta + 2.0) * np.sum(wgt * (t1 + t2))
    xg, wg = gauss_legendre01(q)
    if A > m:
        total += _graded_rect(weight, oa, ob, c, m, A, m, beta, xg, wg, left_long=True)
    if B > m:
        total += _graded_rect(weight, oa, ob, c, m, B, m, beta, xg, wg, left_long=False)
    return total


def _graded_rect(weight, oa, ob, c, start, stop, short, beta, xg, wg, left_long):
    """Rectangle [start, stop] x [0, short] in distances from the contact point c."""
    cuts = [start]
    while cuts[-1] < stop:
        cuts.append(min(stop, 2 * cuts[-1]))
    cuts = np.asarray(cuts)
    lo, hi = cuts[:-1, None], cuts[1:, None]
    u = lo + (hi - lo) * xg[None, :]
    wu = (hi - lo) * wg[None, :]
    v = short * xg
    wv = short * wg
    dist = u[:, :, None] + v[None, None, :]
    if left_long:
        g = weight(oa, c - u)[:, :, None] * weight(ob, c + v)[None, None, :]
    else:
        g = weight(oa, c - v)[None, None, :] * weight(ob, c + u)[:, :, None]
    return float(np.sum(wu[:, :, None] * wv[None, None, :] * g * dist**beta))


def gram(atoms, beta, q=12):
    """Atom-by-atom matrix of the kernel integrals."""
    out = _far(atoms, q, beta)
    np.fill_diagonal(out, _diag(atoms, q, beta))
    touch = np.nonzero(atoms.hi[:-1] == atoms.lo[1:])[0]
    for a in touch:
        v = _pair_touching(atoms, a, a + 1, q, beta)
        out[a, a + 1] = out[a + 1, a] = v
    return out


def owner_gram(atoms, beta, n_owner, q=12):
    """Sum the atom matrix into an ``n_owner x n_owner`` matrix."""
    g = gram(atoms, beta, q)
    p = np.zeros((n_owner, len(atoms)))
    p[atoms.owner, np.arange(len(atoms))] = 1.0
    out = p @ g @ p.T
    return 0.5 * (out + out.T)


def owner_diag(atoms, n_owner):
    """Brownian-limit analogue: per-owner int w(x)^2 dx (white-noise kernel)."""
    x, w = gauss_legendre01(20)
    xs = atoms.lo[:, None] + atoms.width[:, None] * x[None, :]
    vals = atoms.weight(atoms.owner[:, None], xs) ** 2 * (atoms.width[:, None] * w[None, :])
    out = np.zeros(n_owner)
    np.add.at(out, atoms.owner, vals.sum(axis=1))
    return np.diag(out)
