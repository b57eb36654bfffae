"""Pure numpy implementations of the compiled kernels in ``_core``.

Same signatures and return conventions. Algorithms are vectorized
counterparts rather than line-by-line ports: the ray tracer merges sorted
plane crossings per ray chunk, region growing labels components with
scipy, and harmonic inpainting solves the sparse linear system directly.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

_CHUNK = 2048


# ---------------------------------------------------------------- Siddon

def _segments(origins, dirs, tmax, dims, lo, spacing):
    """Alpha-merge Siddon for a chunk of rays.

    Returns (flat voxel index, length, valid) arrays of shape (R, K).
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    R = origins.shape[0]
    n = np.asarray(dims, dtype=np.int64)
    lo = np.asarray(lo, dtype=np.float64)
    sp = np.asarray(spacing, dtype=np.float64)
    hi = lo + n * sp
    t0 = np.zeros(R)
    t1 = np.asarray(tmax, dtype=np.float64).copy()
    hit = np.ones(R, dtype=bool)
    alphas = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for a in range(3):
            o, d = origins[:, a], dirs[:, a]
            par = d == 0.0
            ta = (lo[a] - o) / d
            tb = (hi[a] - o) / d
            tmin = np.where(par, -np.inf, np.minimum(ta, tb))
            tmaxa = np.where(par, np.inf, np.maximum(ta, tb))
            t0 = np.maximum(t0, tmin)
            t1 = np.minimum(t1, tmaxa)
            hit &= ~(par & ((o < lo[a]) | (o > hi[a])))
            planes = lo[a] + np.arange(n[a] + 1) * sp[a]
            al = (planes[None, :] - o[:, None]) / d[:, None]
            al[par] = np.inf
            alphas.append(al)
    hit &= t0 < t1
    t0 = np.where(hit, t0, 0.0)
    t1 = np.where(hit, t1, 0.0)
    al = np.concatenate([t0[:, None], t1[:, None]] + alphas, axis=1)
    al = np.clip(al, t0[:, None], t1[:, None])
    al.sort(axis=1)
    seg = np.diff(al, axis=1)
    mid = 0.5 * (al[:, 1:] + al[:, :-1])
    idx = np.zeros(seg.shape, dtype=np.int64)
    stride = (1, n[0], n[0] * n[1])
    for a in range(3):
        p = origins[:, a, None] + mid * dirs[:, a, None]
        i = np.floor((p - lo[a]) / sp[a]).astype(np.int64)
        np.clip(i, 0, n[a] - 1, out=i)
        idx += i * stride[a]
    valid = (seg > 0) & hit[:, None]
    return idx, np.where(valid, seg, 0.0), valid


def trace_ray(origin, direction, tmax, dims, lo, spacing):
    idx, seg, valid = _segments(np.asarray(origin, float)[None], np.asarray(direction, float)[None],
                                np.array([tmax], float), dims, lo, spacing)
    keep = valid[0]
    return idx[0][keep].copy(), seg[0][keep].copy()


def project_values(origins, dirs, tmax, vol, lo, spacing):
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    dims = (vol.shape[2], vol.shape[1], vol.shape[0])
    flat = vol.ravel()
    out = np.zeros(origins.shape[0])
    for s in range(0, origins.shape[0], _CHUNK):
        e = s + _CHUNK
        idx, seg, _ = _segments(origins[s:e], dirs[s:e], tmax[s:e], dims, lo, spacing)
        out[s:e] = (flat[idx] * seg).sum(axis=1)
    return out


def project_labels(origins, dirs, tmax, labels, n_labels, lo, spacing):
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    dims = (labels.shape[2], labels.shape[1], labels.shape[0])
    flat = labels.ravel()
    out = np.zeros((origins.shape[0], n_labels))
    for s in range(0, origins.shape[0], _CHUNK):
        e = s + _CHUNK
        idx, seg, _ = _segments(origins[s:e], dirs[s:e], tmax[s:e], dims, lo, spacing)
        lab = flat[idx]
        for k in range(n_labels):
            out[s:e, k] = np.where(lab == k, seg, 0.0).sum(axis=1)
    return out


# --------------------------------------------------------- backprojection

def backproject(proj, angles, sid, sdd, pitch_u, pitch_v, dims, origin, spacing, weighted):
    proj = np.asarray(proj, dtype=np.float64)
    nx, ny, nz = (int(v) for v in dims)
    V, nv, nu = proj.shape
    x = origin[0] + np.arange(nx) * spacing[0]
    y = origin[1] + np.arange(ny) * spacing[1]
    z = origin[2] + np.arange(nz) * spacing[2]
    X, Y = np.meshgrid(x, y)  # (ny, nx)
    cu, cv = nu / 2.0 - 0.5, nv / 2.0 - 0.5
    vol = np.zeros((nz, ny, nx))
    for iv in range(V):
        c, s = np.cos(angles[iv]), np.sin(angles[iv])
        U = sid + X * c + Y * s
        with np.errstate(divide="ignore", invalid="ignore"):
            mag = np.where(U > 0, sdd / U, np.nan)
            fu = (-X * s + Y * c) * mag / pitch_u + cu
            fv = z[:, None, None] * mag[None] / pitch_v + cv
        fu = np.broadcast_to(fu, fv.shape)
        img = proj[iv]
        if weighted:
            ok = (fu >= 0) & (fu <= nu - 1) & (fv >= 0) & (fv <= nv - 1)
            fuo, fvo = fu[ok], fv[ok]
            i0 = np.minimum(np.floor(fuo).astype(np.int64), nu - 2)
            j0 = np.minimum(np.floor(fvo).astype(np.int64), nv - 2)
            au, av = fuo - i0, fvo - j0
            val = ((1 - av) * ((1 - au) * img[j0, i0] + au * img[j0, i0 + 1])
                   + av * ((1 - au) * img[j0 + 1, i0] + au * img[j0 + 1, i0 + 1]))
            w = np.broadcast_to((sid / U) ** 2, fv.shape)[ok]
            vol[ok] += w * val
        else:
            ok = (fu >= -0.5) & (fu < nu - 0.5) & (fv >= -0.5) & (fv < nv - 0.5)
            i0 = np.floor(fu[ok] + 0.5).astype(np.int64)
            j0 = np.floor(fv[ok] + 0.5).astype(np.int64)
            vol[ok] += img[j0, i0]
    return vol


# ------------------------------------------------------------- inpainting

def inpaint_harmonic(img, hole, tol, max_sweeps):
    """Direct sparse solve of the same discrete Laplace system the
    Gauss-Seidel kernel iterates on. Returns (image, 0, max residual)."""
    out = np.array(img, dtype=np.float64, copy=True)
    hole = np.asarray(hole, dtype=bool)
    h, w = out.shape
    ii, jj = np.nonzero(hole)
    m = ii.size
    if m == 0:
        return out, 0, 0.0
    num = -np.ones(hole.shape, dtype=np.int64)
    num[ii, jj] = np.arange(m)
    rows, cols, vals = [], [], []
    rhs = np.zeros(m)
    deg = np.zeros(m)
    for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ni, nj = ii + di, jj + dj
        inside = (ni >= 0) & (ni < h) & (nj >= 0) & (nj < w)
        deg += inside
        k = np.nonzero(inside)[0]
        nb = num[ni[k], nj[k]]
        unk = nb >= 0
        rows.append(k[unk])
        cols.append(nb[unk])
        vals.append(-np.ones(unk.sum()))
        rhs[k[~unk]] += out[ni[k[~unk]], nj[k[~unk]]]
    rows.append(np.arange(m))
    cols.append(np.arange(m))
    vals.append(deg)
    A = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(m, m)).tocsr()
    x = spsolve(A, rhs)
    out[ii, jj] = x
    res = np.abs(A @ x - rhs) / deg
    return out, 0, float(res.max())


# -------------------------------------------------------- region growing

def region_grow(vol, seed_thr, grow_thr, connectivity):
    vol = np.asarray(vol)
    cand = vol > grow_thr
    struct = ndimage.generate_binary_structure(3, 3 if connectivity == 26 else 1)
    lab, _ = ndimage.label(cand, structure=struct)
    seeded = np.unique(lab[(vol > seed_thr) & cand])
    seeded = seeded[seeded > 0]
    return np.isin(lab, seeded).astype(np.uint8)


# ------------------------------------------------------------------ im2col

def im2col3(x):
    n, c, h, w = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x.transpose(0, 2, 3, 1)
    return sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(n * h * w, c * 9)


# -------------------------------------------------- Philox2x32-10 and MC

_M32 = np.uint64(0xFFFFFFFF)
_PM = np.uint64(0xD256D193)
_PW = np.uint64(0x9E3779B9)


def philox2x32(c0, c1, key):
    """Raw Philox2x32-10 output words for counters (c0, c1) under ``key``."""
    c0 = np.asarray(c0, dtype=np.uint64).ravel() & _M32
    c1 = np.asarray(c1, dtype=np.uint64).ravel() & _M32
    k = np.uint64(int(key) & 0xFFFFFFFF)
    for _ in range(10):
        prod = c0 * _PM
        c0, c1 = (prod >> np.uint64(32)) ^ k ^ c1, prod & _M32
        k = (k + _PW) & _M32
    return c0, c1


def philox_uniform(c0, c1, key):
    """Uniform doubles in [0, 1) with 53 random bits from both words."""
    c0, c1 = philox2x32(c0, c1, key)
    return ((c0 >> np.uint64(5)).astype(np.float64) * 67108864.0
            + (c1 >> np.uint64(6)).astype(np.float64)) * (1.0 / 9007199254740992.0)


def _interp_rows(grid, table, rows, e):
    """Linear interpolation of table[rows[i]] at e[i], clamped at the ends."""
    ne = grid.size
    j = np.clip(np.searchsorted(grid, e, side="left") - 1, 0, ne - 2)
    v0, v1 = table[rows, j], table[rows, j + 1]
    g0, g1 = grid[j], grid[j + 1]
    out = v0 + (v1 - v0) * (e - g0) / (g1 - g0)
    out = np.where(e <= grid[0], table[rows, 0], out)
    return np.where(e >= grid[-1], table[rows, ne - 1], out)


def _box_exit(p, d, lo, hi):
    t0 = np.full(p.shape[0], -np.inf)
    t1 = np.full(p.shape[0], np.inf)
    ok = np.ones(p.shape[0], dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for a in range(3):
            par = d[:, a] == 0.0
            ta = (lo[a] - p[:, a]) / d[:, a]
            tb = (hi[a] - p[:, a]) / d[:, a]
            t0 = np.where(par, t0, np.maximum(t0, np.minimum(ta, tb)))
            t1 = np.where(par, t1, np.minimum(t1, np.maximum(ta, tb)))
            ok &= ~(par & ((p[:, a] < lo[a]) | (p[:, a] > hi[a])))
    return ok & (t0 < t1) & (t1 > 0), t0, t1


def _rotate(u, cost, phi):
    sint = np.sqrt(np.maximum(0.0, 1.0 - cost * cost))
    cp, sp = np.cos(phi), np.sin(phi)
    polar = np.abs(u[:, 2]) > 0.99999
    sq = np.sqrt(np.where(polar, 1.0, 1.0 - u[:, 2] ** 2))
    a = np.where(polar, sint * cp, sint * (u[:, 0] * u[:, 2] * cp - u[:, 1] * sp) / sq + u[:, 0] * cost)
    b = np.where(polar, sint * sp, sint * (u[:, 1] * u[:, 2] * cp + u[:, 0] * sp) / sq + u[:, 1] * cost)
    c = np.where(polar, np.where(u[:, 2] > 0, cost, -cost), -sint * cp * sq + u[:, 2] * cost)
    nrm = np.sqrt(a * a + b * b + c * c)
    return np.stack([a / nrm, b / nrm, c / nrm], axis=1)


def mc_view(labels, lo, spacing, mu, cum_pe, cum_co, egrid, mumax, spec_e, spec_cdf,
            src, ec, eu, ev, detc, nu, nv, pu, pv, n_per_pixel, key, e_min, jitter):
    labels = np.asarray(labels)
    nz, ny, nx = labels.shape
    blo = np.asarray(lo, dtype=np.float64)
    sp = np.asarray(spacing, dtype=np.float64)
    bhi = blo + np.array([nx, ny, nz]) * sp
    src, ec, eu, ev, detc = (np.asarray(v, dtype=np.float64) for v in (src, ec, eu, ev, detc))
    P = nv * nu * n_per_pixel
    pid = np.arange(P, dtype=np.uint64)
    dc = np.zeros(P, dtype=np.uint64)

    def draw(ix):
        x = philox_uniform(dc[ix], pid[ix], key)
        dc[ix] += np.uint64(1)
        return x

    everyone = np.arange(P)
    tallies = np.zeros(4)
    counts = np.zeros(3, dtype=np.int64)
    xi = draw(everyone)
    b = np.searchsorted(np.asarray(spec_cdf)[:-1], xi, side="right")
    E = np.asarray(spec_e, dtype=np.float64)[b]
    tallies[0] = E.sum()
    pix = np.arange(P) // n_per_pixel
    offu = (pix % nu + 0.5) - nu / 2.0
    offv = (pix // nu + 0.5) - nv / 2.0
    if jitter:
        offu = offu + draw(everyone) - 0.5
        offv = offv + draw(everyone) - 0.5
    aim = detc + (offu * pu)[:, None] * eu + (offv * pv)[:, None] * ev
    d = aim - src
    d /= np.sqrt((d * d).sum(axis=1))[:, None]
    pos = np.broadcast_to(src, (P, 3)).copy()
    alive = np.ones(P, dtype=bool)
    inbox, tin, tout = _box_exit(pos, d, blo, bhi)
    adv = inbox & (tin > 0)
    pos[adv] += tin[adv, None] * d[adv]
    tout = np.where(adv, tout - tin, tout)
    trem = tout
    act = np.nonzero(inbox)[0]
    while act.size:
        Ea = E[act]
        mm = _interp_rows(egrid, mumax[None, :], np.zeros(act.size, dtype=np.int64), Ea)
        xi = draw(act)
        go = mm > 0
        act, mm, xi = act[go], mm[go], xi[go]
        with np.errstate(divide="ignore"):
            s = -np.log(1.0 - xi) / mm
        leave = s >= trem[act]
        out_ix = act[leave]
        pos[out_ix] += trem[out_ix, None] * d[out_ix]
        act, s, mm = act[~leave], s[~leave], mm[~leave]
        pos[act] += s[:, None] * d[act]
        trem[act] -= s
        vox = [np.clip(np.floor((pos[act, a] - blo[a]) / sp[a]).astype(np.int64), 0, n - 1)
               for a, n in enumerate((nx, ny, nz))]
        m = labels[vox[2], vox[1], vox[0]].astype(np.int64)
        mum = _interp_rows(egrid, mu, m, E[act])
        xi = draw(act)
        real = xi * mm < mum
        virtual = act[~real]
        act, m = act[real], m[real]
        xi = draw(act)
        pe = xi < _interp_rows(egrid, cum_pe, m, E[act])
        co = ~pe & (xi < _interp_rows(egrid, cum_co, m, E[act]))
        counts += [pe.sum(), co.sum(), (~pe & ~co).sum()]
        tallies[2] += E[act[pe]].sum()
        alive[act[pe]] = False
        scat = act[~pe]
        is_co = co[~pe]
        cost = np.empty(scat.size)
        r = np.ones(scat.size)
        kk = E[scat] / 510.99895
        pend = np.arange(scat.size)
        while pend.size:
            cth = 2.0 * draw(scat[pend]) - 1.0
            x2 = draw(scat[pend])
            rr = 1.0 / (1.0 + kk[pend] * (1.0 - cth))
            acc = np.where(is_co[pend],
                           x2 * 2.0 < rr * rr * (rr + 1.0 / rr - (1.0 - cth * cth)),
                           x2 * 2.0 < 1.0 + cth * cth)
            cost[pend[acc]] = cth[acc]
            r[pend[acc]] = np.where(is_co[pend[acc]], rr[acc], 1.0)
            pend = pend[~acc]
        Es = E[scat]
        tallies[2] += (Es - Es * r)[is_co].sum()
        E[scat] = np.where(is_co, Es * r, Es)
        d[scat] = _rotate(d[scat], cost, 2.0 * np.pi * draw(scat))
        low = E[scat] < e_min
        tallies[2] += E[scat[low]].sum()
        alive[scat[low]] = False
        keep = scat[~low]
        ib, _, t1 = _box_exit(pos[keep], d[keep], blo, bhi)
        trem[keep] = t1
        act = np.sort(np.concatenate([virtual, keep[ib]]))
    image = np.zeros((nv, nu))
    fin = np.nonzero(alive)[0]
    dn = d[fin] @ ec
    fwd = dn > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((detc - pos[fin]) @ ec) / dn
    fwd &= t >= 0
    hitp = pos[fin] + t[:, None] * d[fin] - detc
    iu = np.floor((hitp @ eu) / pu + nu / 2.0)
    iv = np.floor((hitp @ ev) / pv + nv / 2.0)
    ok = fwd & (iu >= 0) & (iu < nu) & (iv >= 0) & (iv < nv)
    tallies[3] = E[fin[~ok]].sum()
    np.add.at(image, (iv[ok].astype(np.int64), iu[ok].astype(np.int64)), E[fin[ok]])
    tallies[1] = E[fin[ok]].sum()
    return image, tallies, counts
