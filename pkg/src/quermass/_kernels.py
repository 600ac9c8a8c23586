"""Compiled geometry kernels for unions of discs.

Discs are passed as three parallel float64 arrays ``cx, cy, r``. Every
routine works on a subset of them given by an index array so that callers
can restrict to a neighbourhood without copying.

The Euler characteristic is obtained from the boundary arcs with the
Gauss-Bonnet turning-angle sum: each boundary arc turns by its own angle,
each boundary vertex (where two circles meet on the boundary of the union)
turns by minus the angle between the two outward normals, and each
external tangency point on the boundary turns by minus pi on both sides.
"""
import math

import numpy as np
from numba import njit

EPS = 1e-12
TWO_PI = 2.0 * math.pi


@njit(cache=True)
def covered_intervals(i, xi, yi, ri, cx, cy, r, idx, eps, starts, lens, owner):
    """Angular intervals of circle (xi, yi, ri) covered by the discs ``idx``.

    ``i`` is the index of the circle itself in the arrays, or -1 for a query
    disc that is not part of them. Returns the number of intervals written,
    or -1 when the whole circle lies inside another disc.
    """
    m = 0
    for t in range(idx.shape[0]):
        j = idx[t]
        if j == i:
            continue
        rj = r[j]
        dx = cx[j] - xi
        dy = cy[j] - yi
        d = math.sqrt(dx * dx + dy * dy)
        if d >= ri + rj - eps:
            continue
        if d <= eps and abs(ri - rj) <= eps:
            # duplicates: the lowest index survives, a foreign query is covered
            if i < 0 or j < i:
                return -1
            continue
        if d <= rj - ri + eps:
            return -1
        if d <= ri - rj + eps:
            continue
        c = (ri * ri + d * d - rj * rj) / (2.0 * ri * d)
        if c > 1.0:
            c = 1.0
        elif c < -1.0:
            c = -1.0
        h = math.acos(c)
        s = math.atan2(dy, dx) - h
        s = s % TWO_PI
        starts[m] = s
        lens[m] = 2.0 * h
        owner[m] = j
        m += 1
    return m


@njit(cache=True)
def uncovered_gaps(starts, lens, owner, m, out_a0, out_a1, out_j):
    """Complement of ``m`` covered intervals on the circle.

    Writes arcs ``[a0, a1]`` with ``0 <= a0 < 2pi`` and ``a1 > a0``; ``out_j``
    holds the disc whose interval starts where the arc ends (-1 for a full
    circle). Returns the number of arcs.
    """
    if m == 0:
        out_a0[0] = 0.0
        out_a1[0] = TWO_PI
        out_j[0] = -1
        return 1
    ref = starts[0]
    rel = np.empty(m)
    for k in range(m):
        rel[k] = (starts[k] - ref) % TWO_PI
    rel[0] = 0.0
    order = np.argsort(rel, kind="mergesort")
    cur = lens[0]
    for k in range(m):
        e = rel[k] + lens[k] - TWO_PI
        if e > cur:
            cur = e
    g = 0
    for q in range(m):
        k = order[q]
        if rel[k] > cur:
            a0 = (cur + ref) % TWO_PI
            out_a0[g] = a0
            out_a1[g] = a0 + (rel[k] - cur)
            out_j[g] = owner[k]
            g += 1
        e = rel[k] + lens[k]
        if e > cur:
            cur = e
    if cur < TWO_PI:
        a0 = (cur + ref) % TWO_PI
        out_a0[g] = a0
        out_a1[g] = a0 + (TWO_PI - cur)
        out_j[g] = owner[0]
        g += 1
    return g


@njit(cache=True)
def point_covered(i, xi, yi, cx, cy, r, idx, eps):
    """Whether the point (xi, yi) lies in a closed disc of ``idx`` other than ``i``.

    A zero-radius duplicate with a lower index also counts as covering, so
    coincident points are counted once.
    """
    for t in range(idx.shape[0]):
        j = idx[t]
        if j == i:
            continue
        dx = cx[j] - xi
        dy = cy[j] - yi
        d = math.sqrt(dx * dx + dy * dy)
        if d <= r[j] + eps:
            if r[j] > eps or i < 0 or j < i:
                return True
    return False


@njit(cache=True)
def vertex_turn(i, j, cx, cy, r):
    """Exterior angle magnitude at an intersection point of circles i and j."""
    dx = cx[j] - cx[i]
    dy = cy[j] - cy[i]
    d2 = dx * dx + dy * dy
    c = (r[i] * r[i] + r[j] * r[j] - d2) / (2.0 * r[i] * r[j])
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    return math.acos(c)


@njit(cache=True)
def functionals(cx, cy, r, idx, eps):
    """Area, perimeter and Euler characteristic of the union of discs ``idx``."""
    k = idx.shape[0]
    if k == 0:
        return 0.0, 0.0, 0
    starts = np.empty(k)
    lens = np.empty(k)
    owner = np.empty(k, dtype=np.int64)
    a0s = np.empty(k + 1)
    a1s = np.empty(k + 1)
    js = np.empty(k + 1, dtype=np.int64)
    # Green's theorem relative to a local origin keeps the sum well conditioned
    ox = cx[idx[0]]
    oy = cy[idx[0]]
    area = 0.0
    perim = 0.0
    turn = 0.0
    for a in range(k):
        i = idx[a]
        ri = r[i]
        if ri == 0.0:
            if not point_covered(i, cx[i], cy[i], cx, cy, r, idx, eps):
                turn += TWO_PI
            continue
        m = covered_intervals(i, cx[i], cy[i], ri, cx, cy, r, idx, eps, starts, lens, owner)
        if m < 0:
            continue
        g = uncovered_gaps(starts, lens, owner, m, a0s, a1s, js)
        xi = cx[i] - ox
        yi = cy[i] - oy
        for q in range(g):
            t0 = a0s[q]
            t1 = a1s[q]
            dt = t1 - t0
            area += 0.5 * (ri * ri * dt + ri * xi * (math.sin(t1) - math.sin(t0))
                           - ri * yi * (math.cos(t1) - math.cos(t0)))
            perim += ri * dt
            turn += dt
            if js[q] >= 0:
                turn -= vertex_turn(i, js[q], cx, cy, r)
    turn -= TWO_PI * tangent_contacts(cx, cy, r, idx, eps)
    euler = int(round(turn / TWO_PI))
    return area, perim, euler


@njit(cache=True)
def _shadowed(i, cx, cy, r, idx, eps):
    """Whether disc i duplicates a disc of lower index."""
    for t in range(idx.shape[0]):
        j = idx[t]
        if j < i and abs(cx[j] - cx[i]) <= eps and abs(cy[j] - cy[i]) <= eps and abs(r[j] - r[i]) <= eps:
            return True
    return False


@njit(cache=True)
def tangent_contacts(cx, cy, r, idx, eps):
    """Number of external tangency points left on the boundary of the union.

    Such a point joins two arcs without any turning, so the arc sum alone
    would miss the connection it makes; each one lowers the Euler
    characteristic by one.
    """
    k = idx.shape[0]
    count = 0
    for a in range(k):
        i = idx[a]
        if r[i] <= eps or _shadowed(i, cx, cy, r, idx, eps):
            continue
        for b in range(a + 1, k):
            j = idx[b]
            if r[j] <= eps or _shadowed(j, cx, cy, r, idx, eps):
                continue
            dx = cx[j] - cx[i]
            dy = cy[j] - cy[i]
            d = math.sqrt(dx * dx + dy * dy)
            if d <= eps or abs(d - (r[i] + r[j])) > eps:
                continue
            tx = cx[i] + r[i] * dx / d
            ty = cy[i] + r[i] * dy / d
            inside = False
            for c in range(k):
                q = idx[c]
                if q == i or q == j:
                    continue
                ex = cx[q] - tx
                ey = cy[q] - ty
                if math.sqrt(ex * ex + ey * ey) < r[q] - eps:
                    inside = True
                    break
            if not inside:
                count += 1
    return count


@njit(cache=True)
def arcs(cx, cy, r, idx, eps):
    """Boundary arcs of the union as an (m, 3) array of (disc, a0, a1)."""
    k = idx.shape[0]
    starts = np.empty(max(k, 1))
    lens = np.empty(max(k, 1))
    owner = np.empty(max(k, 1), dtype=np.int64)
    a0s = np.empty(k + 1)
    a1s = np.empty(k + 1)
    js = np.empty(k + 1, dtype=np.int64)
    out = np.empty((0, 3))
    rows = []
    for a in range(k):
        i = idx[a]
        if r[i] == 0.0:
            continue
        m = covered_intervals(i, cx[i], cy[i], r[i], cx, cy, r, idx, eps, starts, lens, owner)
        if m < 0:
            continue
        g = uncovered_gaps(starts, lens, owner, m, a0s, a1s, js)
        for q in range(g):
            rows.append((float(i), a0s[q], a1s[q]))
    if len(rows) > 0:
        out = np.empty((len(rows), 3))
        for q in range(len(rows)):
            out[q, 0] = rows[q][0]
            out[q, 1] = rows[q][1]
            out[q, 2] = rows[q][2]
    return out


@njit(cache=True)
def uncovered_length(px, py, pr, cx, cy, r, idx, eps):
    """Length of the circle (px, py, pr) outside the union of discs ``idx``."""
    if pr == 0.0:
        return 0.0
    k = idx.shape[0]
    starts = np.empty(max(k, 1))
    lens = np.empty(max(k, 1))
    owner = np.empty(max(k, 1), dtype=np.int64)
    m = covered_intervals(-1, px, py, pr, cx, cy, r, idx, eps, starts, lens, owner)
    if m < 0:
        return 0.0
    if m == 0:
        return TWO_PI * pr
    a0s = np.empty(m + 1)
    a1s = np.empty(m + 1)
    js = np.empty(m + 1, dtype=np.int64)
    g = uncovered_gaps(starts, lens, owner, m, a0s, a1s, js)
    total = 0.0
    for q in range(g):
        total += a1s[q] - a0s[q]
    return pr * total


@njit(cache=True)
def isolated(px, py, pr, cx, cy, r, idx, eps):
    """True iff the circle (px, py, pr) meets none of the closed discs ``idx``."""
    for t in range(idx.shape[0]):
        j = idx[t]
        dx = cx[j] - px
        dy = cy[j] - py
        d = math.sqrt(dx * dx + dy * dy)
        if d > pr + r[j] + eps:
            continue
        if d < pr - r[j] - eps:
            continue
        return False
    return True


@njit(cache=True)
def neighbours(px, py, reach, cx, cy, r, grow, skip):
    """Indices of discs (radii inflated by ``grow``) within ``reach`` + radius of a point."""
    n = cx.shape[0]
    out = np.empty(n, dtype=np.int64)
    m = 0
    for j in range(n):
        if j == skip:
            continue
        rr = reach + r[j] + grow
        dx = cx[j] - px
        if dx > rr or dx < -rr:
            continue
        dy = cy[j] - py
        if dy > rr or dy < -rr:
            continue
        if dx * dx + dy * dy <= rr * rr:
            out[m] = j
            m += 1
    return out[:m]


@njit(cache=True)
def local_delta(px, py, pr, cx, cy, r, skip, eps):
    """Change of (area, perimeter, euler) when disc p joins the union.

    Only discs meeting p matter: F(U + p) - F(U) = F(p) - F(p & U) by
    additivity, so the difference is taken over that neighbourhood. ``skip``
    excludes one index of the arrays (-1 for none).
    """
    nb = neighbours(px, py, pr + eps, cx, cy, r, 0.0, skip)
    m = nb.shape[0]
    lx = np.empty(m + 1)
    ly = np.empty(m + 1)
    lr = np.empty(m + 1)
    for q in range(m):
        lx[q] = cx[nb[q]]
        ly[q] = cy[nb[q]]
        lr[q] = r[nb[q]]
    lx[m] = px
    ly[m] = py
    lr[m] = pr
    full = np.arange(m + 1)
    a1, l1, e1 = functionals(lx, ly, lr, full, eps)
    a0, l0, e0 = functionals(lx, ly, lr, full[:m], eps)
    return a1 - a0, l1 - l0, e1 - e0


@njit(cache=True)
def f_alpha_query(px, py, pr, alpha, cx, cy, r, skip, eps):
    """Uncovered length of circle (p, pr + alpha) against all radii inflated by alpha."""
    nb = neighbours(px, py, pr + alpha + eps, cx, cy, r, alpha, skip)
    m = nb.shape[0]
    lx = np.empty(m)
    ly = np.empty(m)
    lr = np.empty(m)
    for q in range(m):
        lx[q] = cx[nb[q]]
        ly[q] = cy[nb[q]]
        lr[q] = r[nb[q]] + alpha
    return uncovered_length(px, py, pr + alpha, lx, ly, lr, np.arange(m), eps)


@njit(cache=True)
def iso_query(px, py, pr, cx, cy, r, skip, eps):
    nb = neighbours(px, py, pr + eps, cx, cy, r, 0.0, skip)
    return isolated(px, py, pr, cx, cy, r, nb, eps)


@njit(cache=True)
def table_rows(xs, ys, rs, alphas, want_iso, cx, cy, r, eps):
    """Deltas and test-function values for a batch of dummy discs.

    Returns ``deltas`` of shape (N, 3) and ``values`` of shape (N, len(alphas) + 1)
    whose last column is the isolated-ball indicator (zeros unless ``want_iso``).
    """
    n = xs.shape[0]
    k = alphas.shape[0]
    deltas = np.empty((n, 3))
    values = np.zeros((n, k + 1))
    for t in range(n):
        da, dl, de = local_delta(xs[t], ys[t], rs[t], cx, cy, r, -1, eps)
        deltas[t, 0] = da
        deltas[t, 1] = dl
        deltas[t, 2] = de
        for q in range(k):
            values[t, q] = f_alpha_query(xs[t], ys[t], rs[t], alphas[q], cx, cy, r, -1, eps)
        if want_iso:
            values[t, k] = 1.0 if iso_query(xs[t], ys[t], rs[t], cx, cy, r, -1, eps) else 0.0
    return deltas, values


@njit(cache=True)
def leave_one_out_rows(sel, alphas, want_iso, cx, cy, r, eps):
    """Test-function values of discs ``sel`` against the rest of the configuration."""
    n = sel.shape[0]
    k = alphas.shape[0]
    values = np.zeros((n, k + 1))
    for t in range(n):
        i = sel[t]
        for q in range(k):
            values[t, q] = f_alpha_query(cx[i], cy[i], r[i], alphas[q], cx, cy, r, i, eps)
        if want_iso:
            values[t, k] = 1.0 if iso_query(cx[i], cy[i], r[i], cx, cy, r, i, eps) else 0.0
    return values


@njit(cache=True)
def run_chain(cx0, cy0, r0, z, th1, th2, th3, x0, y0, x1, y1,
              p_birth, p_death, move_sd,
              u_kind, u_pick, u_acc, bx, by, br, gx, gy, mr,
              keep_trace, eps):
    """Birth/death/move Metropolis-Hastings chain for the Quermass density.

    All randomness is supplied as pre-drawn arrays, one entry per step, so
    the chain is a deterministic function of its inputs.
    """
    n_steps = u_kind.shape[0]
    cap = max(16, 2 * cx0.shape[0])
    cx = np.empty(cap)
    cy = np.empty(cap)
    r = np.empty(cap)
    n = cx0.shape[0]
    cx[:n] = cx0
    cy[:n] = cy0
    r[:n] = r0
    area_win = (x1 - x0) * (y1 - y0)
    log_z = math.log(z)
    log_bd = math.log(p_death / p_birth)
    totals = np.zeros(3)
    if n > 0:
        a, l, e = functionals(cx[:n], cy[:n], r[:n], np.arange(n), eps)
        totals[0] = a
        totals[1] = l
        totals[2] = e
    trace = np.empty((n_steps if keep_trace else 0, 4))
    accepted = np.zeros(3, dtype=np.int64)
    proposed = np.zeros(3, dtype=np.int64)
    for s in range(n_steps):
        u = u_kind[s]
        if u < p_birth:
            proposed[0] += 1
            da, dl, de = local_delta(bx[s], by[s], br[s], cx[:n], cy[:n], r[:n], -1, eps)
            energy = th1 * da + th2 * dl + th3 * de
            log_ratio = log_z - energy + math.log(area_win) - math.log(n + 1.0) + log_bd
            if math.log(u_acc[s]) < log_ratio:
                if n == cap:
                    cap *= 2
                    ncx = np.empty(cap)
                    ncy = np.empty(cap)
                    nr = np.empty(cap)
                    ncx[:n] = cx[:n]
                    ncy[:n] = cy[:n]
                    nr[:n] = r[:n]
                    cx = ncx
                    cy = ncy
                    r = nr
                cx[n] = bx[s]
                cy[n] = by[s]
                r[n] = br[s]
                n += 1
                totals[0] += da
                totals[1] += dl
                totals[2] += de
                accepted[0] += 1
        elif u < p_birth + p_death:
            proposed[1] += 1
            if n > 0:
                k = min(int(u_pick[s] * n), n - 1)
                da, dl, de = local_delta(cx[k], cy[k], r[k], cx[:n], cy[:n], r[:n], k, eps)
                energy = th1 * da + th2 * dl + th3 * de
                log_ratio = math.log(n) - log_z + energy - math.log(area_win) - log_bd
                if math.log(u_acc[s]) < log_ratio:
                    cx[k] = cx[n - 1]
                    cy[k] = cy[n - 1]
                    r[k] = r[n - 1]
                    n -= 1
                    totals[0] -= da
                    totals[1] -= dl
                    totals[2] -= de
                    accepted[1] += 1
        else:
            proposed[2] += 1
            if n > 0:
                k = min(int(u_pick[s] * n), n - 1)
                nx = cx[k] + move_sd * gx[s]
                ny = cy[k] + move_sd * gy[s]
                if x0 <= nx <= x1 and y0 <= ny <= y1:
                    oa, ol, oe = local_delta(cx[k], cy[k], r[k], cx[:n], cy[:n], r[:n], k, eps)
                    na, nl, ne = local_delta(nx, ny, mr[s], cx[:n], cy[:n], r[:n], k, eps)
                    log_ratio = -(th1 * (na - oa) + th2 * (nl - ol) + th3 * (ne - oe))
                    if math.log(u_acc[s]) < log_ratio:
                        cx[k] = nx
                        cy[k] = ny
                        r[k] = mr[s]
                        totals[0] += na - oa
                        totals[1] += nl - ol
                        totals[2] += ne - oe
                        accepted[2] += 1
        if keep_trace:
            trace[s, 0] = n
            trace[s, 1] = totals[0]
            trace[s, 2] = totals[1]
            trace[s, 3] = totals[2]
    return cx[:n].copy(), cy[:n].copy(), r[:n].copy(), trace, accepted, proposed
