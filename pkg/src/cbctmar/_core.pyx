# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.

Each function here has a numpy twin with the same signature in
``_pykernels``; ``cbctmar._kernels`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, log, cos, sin, fabs, INFINITY, M_PI
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint8_t, uint32_t, uint64_t, int64_t

cnp.import_array()

ctypedef fused real_t:
    float
    double


# ---------------------------------------------------------------- Siddon

cdef inline double _dmin(double a, double b) noexcept nogil:
    return a if a < b else b

cdef inline double _dmax(double a, double b) noexcept nogil:
    return a if a > b else b


cdef Py_ssize_t _siddon(double* o, double* d, double tlim, Py_ssize_t* n,
                        double* lo, double* sp, Py_ssize_t* idx, double* seg) noexcept nogil:
    """Incremental voxel walk; writes (flat index, chord length) pairs.

    Returns the number of segments. The flat index is x-fastest.
    """
    cdef double t0 = 0.0, t1 = tlim, ta, tb, hi, tmp
    cdef int a
    for a in range(3):
        hi = lo[a] + n[a] * sp[a]
        if d[a] != 0.0:
            ta = (lo[a] - o[a]) / d[a]
            tb = (hi - o[a]) / d[a]
            if ta > tb:
                tmp = ta; ta = tb; tb = tmp
            t0 = _dmax(t0, ta)
            t1 = _dmin(t1, tb)
        elif o[a] < lo[a] or o[a] > hi:
            return 0
    if not t0 < t1:
        return 0
    cdef Py_ssize_t i[3]
    cdef int step[3]
    cdef double tnext[3]
    cdef double p, f, tm
    tm = 0.5 * (t0 + _dmin(t1, t0 + 1e-9 * (1.0 + fabs(t0))))
    for a in range(3):
        # index of the voxel containing a point just after the entry
        p = o[a] + tm * d[a]
        f = floor((p - lo[a]) / sp[a])
        if f < 0:
            f = 0
        if f > n[a] - 1:
            f = n[a] - 1
        i[a] = <Py_ssize_t>f
        if d[a] > 0:
            step[a] = 1
            tnext[a] = (lo[a] + (i[a] + 1) * sp[a] - o[a]) / d[a]
        elif d[a] < 0:
            step[a] = -1
            tnext[a] = (lo[a] + i[a] * sp[a] - o[a]) / d[a]
        else:
            step[a] = 0
            tnext[a] = INFINITY
    cdef double t = t0, tn
    cdef Py_ssize_t k = 0
    cdef bint out
    while True:
        tn = _dmin(_dmin(tnext[0], tnext[1]), _dmin(tnext[2], t1))
        if tn > t:
            seg[k] = tn - t
            idx[k] = (i[2] * n[1] + i[1]) * n[0] + i[0]
            k += 1
            t = tn
        if tn >= t1:
            break
        out = False
        for a in range(3):
            if tnext[a] <= tn:
                i[a] += step[a]
                if i[a] < 0 or i[a] >= n[a]:
                    out = True
                elif step[a] > 0:
                    tnext[a] = (lo[a] + (i[a] + 1) * sp[a] - o[a]) / d[a]
                else:
                    tnext[a] = (lo[a] + i[a] * sp[a] - o[a]) / d[a]
        if out:
            break
    return k


def trace_ray(origin, direction, double tmax, dims, lo, spacing):
    """Segments of one ray: (flat voxel indices, chord lengths)."""
    cdef double o[3]
    cdef double d[3]
    cdef double l[3]
    cdef double s[3]
    cdef Py_ssize_t n[3]
    cdef int a
    for a in range(3):
        o[a] = origin[a]; d[a] = direction[a]; l[a] = lo[a]; s[a] = spacing[a]; n[a] = dims[a]
    cdef Py_ssize_t cap = n[0] + n[1] + n[2] + 4
    idx = np.empty(cap, dtype=np.int64)
    seg = np.empty(cap, dtype=np.float64)
    cdef int64_t[::1] iv = idx
    cdef double[::1] sv = seg
    cdef Py_ssize_t* ib = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
    cdef Py_ssize_t k, j
    k = _siddon(o, d, tmax, n, l, s, ib, &sv[0])
    for j in range(k):
        iv[j] = ib[j]
    free(ib)
    return idx[:k].copy(), seg[:k].copy()


def project_values(const double[:, ::1] origins, const double[:, ::1] dirs,
                   const double[::1] tmax, const double[:, :, ::1] vol, lo, spacing):
    """Line integral of ``vol`` along every ray."""
    cdef Py_ssize_t R = origins.shape[0], r, j, k
    cdef Py_ssize_t n[3]
    n[0] = vol.shape[2]; n[1] = vol.shape[1]; n[2] = vol.shape[0]
    cdef double l[3]
    cdef double s[3]
    cdef int a
    for a in range(3):
        l[a] = lo[a]; s[a] = spacing[a]
    out = np.zeros(R, dtype=np.float64)
    cdef double[::1] ov = out
    cdef const double* vp = &vol[0, 0, 0]
    cdef Py_ssize_t cap = n[0] + n[1] + n[2] + 4
    cdef Py_ssize_t* ib
    cdef double* sb
    cdef double acc
    with nogil:
        ib = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
        sb = <double*>malloc(cap * sizeof(double))
        for r in range(R):
            k = _siddon(<double*>&origins[r, 0], <double*>&dirs[r, 0], tmax[r], n, l, s, ib, sb)
            acc = 0.0
            for j in range(k):
                acc = acc + vp[ib[j]] * sb[j]
            ov[r] = acc
        free(ib)
        free(sb)
    return out


def project_labels(const double[:, ::1] origins, const double[:, ::1] dirs,
                   const double[::1] tmax, const uint8_t[:, :, ::1] labels,
                   int n_labels, lo, spacing):
    """Path length through each label value along every ray, shape (R, n_labels)."""
    cdef Py_ssize_t R = origins.shape[0], r, j, k
    cdef Py_ssize_t n[3]
    n[0] = labels.shape[2]; n[1] = labels.shape[1]; n[2] = labels.shape[0]
    cdef double l[3]
    cdef double s[3]
    cdef int a, lab
    for a in range(3):
        l[a] = lo[a]; s[a] = spacing[a]
    out = np.zeros((R, n_labels), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef const uint8_t* lp = &labels[0, 0, 0]
    cdef Py_ssize_t cap = n[0] + n[1] + n[2] + 4
    cdef Py_ssize_t* ib
    cdef double* sb
    with nogil:
        ib = <Py_ssize_t*>malloc(cap * sizeof(Py_ssize_t))
        sb = <double*>malloc(cap * sizeof(double))
        for r in range(R):
            k = _siddon(<double*>&origins[r, 0], <double*>&dirs[r, 0], tmax[r], n, l, s, ib, sb)
            for j in range(k):
                lab = lp[ib[j]]
                if lab < n_labels:
                    ov[r, lab] += sb[j]
        free(ib)
        free(sb)
    return out


# --------------------------------------------------------- backprojection

def backproject(const double[:, :, ::1] proj, const double[::1] angles, double sid, double sdd,
                double pitch_u, double pitch_v, dims, origin, spacing, bint weighted):
    """Voxel-driven cone-beam backprojection, summed over views.

    ``weighted``: bilinear detector interpolation times (sid/U)^2 (FDK).
    Otherwise nearest-pixel lookup without weights (indicator counting).
    Voxels projecting off the detector receive nothing from that view.
    """
    cdef Py_ssize_t nx = dims[0], ny = dims[1], nz = dims[2]
    cdef Py_ssize_t nv = proj.shape[1], nu = proj.shape[2], V = proj.shape[0]
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double sx = spacing[0], sy = spacing[1], sz = spacing[2]
    vol = np.zeros((nz, ny, nx), dtype=np.float64)
    cdef double[:, :, ::1] vv = vol
    cdef Py_ssize_t iv, ix, iy, iz, i0, j0
    cdef double c, s, x, y, z, U, t, mag, w, fu, fv, au, av, val
    cdef double cu = nu / 2.0 - 0.5, cv = nv / 2.0 - 0.5
    with nogil:
        for iv in range(V):
            c = cos(angles[iv]); s = sin(angles[iv])
            for iy in range(ny):
                y = oy + iy * sy
                for ix in range(nx):
                    x = ox + ix * sx
                    U = sid + x * c + y * s
                    if U <= 0:
                        continue
                    t = -x * s + y * c
                    mag = sdd / U
                    fu = t * mag / pitch_u + cu
                    w = (sid / U) * (sid / U) if weighted else 1.0
                    if weighted:
                        if fu < 0 or fu > nu - 1:
                            continue
                    elif fu < -0.5 or fu >= nu - 0.5:
                        continue
                    for iz in range(nz):
                        z = oz + iz * sz
                        fv = z * mag / pitch_v + cv
                        if weighted:
                            if fv < 0 or fv > nv - 1:
                                continue
                            i0 = <Py_ssize_t>floor(fu)
                            j0 = <Py_ssize_t>floor(fv)
                            if i0 >= nu - 1:
                                i0 = nu - 2
                            if j0 >= nv - 1:
                                j0 = nv - 2
                            au = fu - i0
                            av = fv - j0
                            val = ((1 - av) * ((1 - au) * proj[iv, j0, i0] + au * proj[iv, j0, i0 + 1])
                                   + av * ((1 - au) * proj[iv, j0 + 1, i0] + au * proj[iv, j0 + 1, i0 + 1]))
                            vv[iz, iy, ix] += w * val
                        else:
                            if fv < -0.5 or fv >= nv - 0.5:
                                continue
                            i0 = <Py_ssize_t>floor(fu + 0.5)
                            j0 = <Py_ssize_t>floor(fv + 0.5)
                            vv[iz, iy, ix] += proj[iv, j0, i0]
    return vol


# ------------------------------------------------------------- inpainting

def inpaint_harmonic(const double[:, ::1] img, const uint8_t[:, ::1] hole,
                     double tol, Py_ssize_t max_sweeps):
    """Lexicographic Gauss-Seidel for the discrete Laplace equation on the hole.

    Image-border pixels average over the neighbours that exist. Stops when the
    largest update of a sweep falls below ``tol``. Returns (image, sweeps, last
    max update).
    """
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], i, j, m, npx = 0, sweep = 0
    out = np.array(img, dtype=np.float64, copy=True)
    cdef double[:, ::1] u = out
    for i in range(h):
        for j in range(w):
            if hole[i, j]:
                npx += 1
    cdef Py_ssize_t* pi = <Py_ssize_t*>malloc((npx + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* pj = <Py_ssize_t*>malloc((npx + 1) * sizeof(Py_ssize_t))
    m = 0
    for i in range(h):
        for j in range(w):
            if hole[i, j]:
                pi[m] = i; pj[m] = j; m += 1
    cdef double acc, cnt, new, diff, maxd = 0.0
    with nogil:
        while sweep < max_sweeps:
            maxd = 0.0
            for m in range(npx):
                i = pi[m]; j = pj[m]
                acc = 0.0; cnt = 0.0
                if i > 0:
                    acc += u[i - 1, j]; cnt += 1
                if i < h - 1:
                    acc += u[i + 1, j]; cnt += 1
                if j > 0:
                    acc += u[i, j - 1]; cnt += 1
                if j < w - 1:
                    acc += u[i, j + 1]; cnt += 1
                new = acc / cnt
                diff = fabs(new - u[i, j])
                if diff > maxd:
                    maxd = diff
                u[i, j] = new
            sweep += 1
            if maxd < tol:
                break
    free(pi)
    free(pj)
    return out, sweep, maxd


# -------------------------------------------------------- region growing

def region_grow(const double[:, :, ::1] vol, double seed_thr, double grow_thr, int connectivity):
    """BFS from every voxel > seed_thr through voxels > grow_thr."""
    cdef Py_ssize_t nz = vol.shape[0], ny = vol.shape[1], nx = vol.shape[2]
    cdef Py_ssize_t N = nx * ny * nz, head = 0, tail = 0, q, x, y, z, xx, yy, zz, nb
    mask = np.zeros((nz, ny, nx), dtype=np.uint8)
    cdef uint8_t[:, :, ::1] mv = mask
    cdef int dz, dy, dx, nn = 0
    cdef int offs[26][3]
    for dz in range(-1, 2):
        for dy in range(-1, 2):
            for dx in range(-1, 2):
                if dz == 0 and dy == 0 and dx == 0:
                    continue
                if connectivity == 6 and abs(dz) + abs(dy) + abs(dx) != 1:
                    continue
                offs[nn][0] = dz; offs[nn][1] = dy; offs[nn][2] = dx
                nn += 1
    cdef Py_ssize_t* queue = <Py_ssize_t*>malloc((N + 1) * sizeof(Py_ssize_t))
    with nogil:
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    if vol[z, y, x] > seed_thr and vol[z, y, x] > grow_thr:
                        mv[z, y, x] = 1
                        queue[tail] = (z * ny + y) * nx + x
                        tail += 1
        while head < tail:
            q = queue[head]
            head += 1
            x = q % nx
            y = (q // nx) % ny
            z = q // (nx * ny)
            for nb in range(nn):
                zz = z + offs[nb][0]; yy = y + offs[nb][1]; xx = x + offs[nb][2]
                if zz < 0 or zz >= nz or yy < 0 or yy >= ny or xx < 0 or xx >= nx:
                    continue
                if mv[zz, yy, xx] == 0 and vol[zz, yy, xx] > grow_thr:
                    mv[zz, yy, xx] = 1
                    queue[tail] = (zz * ny + yy) * nx + xx
                    tail += 1
    free(queue)
    return mask


# ------------------------------------------------------------------ im2col

def im2col3(const real_t[:, :, :, ::1] x):
    """3x3 'same' zero-padded patches of an NCHW tensor, as a
    (n*h*w, c*9) matrix with row order (n, y, x) and column order (c, ky, kx)."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, ch, i, j, ki, kj, r, col, yy, xx
    if real_t is float:
        dt = np.float32
    else:
        dt = np.float64
    cols = np.zeros((n * h * w, c * 9), dtype=dt)
    cdef real_t[:, ::1] cv = cols
    with nogil:
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    r = (b * h + i) * w + j
                    for ch in range(c):
                        col = ch * 9
                        for ki in range(3):
                            yy = i + ki - 1
                            if yy < 0 or yy >= h:
                                continue
                            for kj in range(3):
                                xx = j + kj - 1
                                if xx < 0 or xx >= w:
                                    continue
                                cv[r, col + ki * 3 + kj] = x[b, ch, yy, xx]
    return cols


# -------------------------------------------------- Philox2x32-10 and MC

cdef uint32_t PHILOX_M = 0xD256D193u
cdef uint32_t PHILOX_W = 0x9E3779B9u


cdef inline double _uniform(uint32_t c0, uint32_t c1, uint32_t key) noexcept nogil:
    cdef uint64_t prod
    cdef uint32_t hi, lo, k = key
    cdef int rnd
    for rnd in range(10):
        prod = <uint64_t>PHILOX_M * <uint64_t>c0
        hi = <uint32_t>(prod >> 32)
        lo = <uint32_t>prod
        c0 = hi ^ k ^ c1
        c1 = lo
        k = k + PHILOX_W
    return ((c0 >> 5) * 67108864.0 + (c1 >> 6)) * (1.0 / 9007199254740992.0)


def philox_uniform(c0, c1, key):
    """Vector front end of the in-kernel generator (used to cross-check)."""
    a = np.asarray(c0, dtype=np.uint64).ravel()
    b = np.asarray(c1, dtype=np.uint64).ravel()
    out = np.empty(a.shape[0], dtype=np.float64)
    cdef Py_ssize_t i
    cdef uint32_t k = <uint32_t>(int(key) & 0xFFFFFFFF)
    for i in range(a.shape[0]):
        out[i] = _uniform(<uint32_t>a[i], <uint32_t>b[i], k)
    return out


cdef inline double _interp(const double* grid, const double* vals, Py_ssize_t ne, double e) noexcept nogil:
    cdef Py_ssize_t j
    if e <= grid[0]:
        return vals[0]
    if e >= grid[ne - 1]:
        return vals[ne - 1]
    j = 0
    while grid[j + 1] < e:
        j += 1
    return vals[j] + (vals[j + 1] - vals[j]) * (e - grid[j]) / (grid[j + 1] - grid[j])


cdef inline bint _box_exit(double* p, double* d, double* lo, double* hi,
                           double* tin, double* tout) noexcept nogil:
    cdef double t0 = -INFINITY, t1 = INFINITY, ta, tb, tmp
    cdef int a
    for a in range(3):
        if d[a] != 0.0:
            ta = (lo[a] - p[a]) / d[a]
            tb = (hi[a] - p[a]) / d[a]
            if ta > tb:
                tmp = ta; ta = tb; tb = tmp
            t0 = _dmax(t0, ta)
            t1 = _dmin(t1, tb)
        elif p[a] < lo[a] or p[a] > hi[a]:
            return False
    tin[0] = t0
    tout[0] = t1
    return t0 < t1 and t1 > 0


cdef inline void _rotate(double* u, double cost, double phi) noexcept nogil:
    cdef double sint = sqrt(_dmax(0.0, 1.0 - cost * cost))
    cdef double cp = cos(phi), sp = sin(phi), sq, a, b, c, nrm
    if fabs(u[2]) > 0.99999:
        a = sint * cp
        b = sint * sp
        c = cost if u[2] > 0 else -cost
    else:
        sq = sqrt(1.0 - u[2] * u[2])
        a = sint * (u[0] * u[2] * cp - u[1] * sp) / sq + u[0] * cost
        b = sint * (u[1] * u[2] * cp + u[0] * sp) / sq + u[1] * cost
        c = -sint * cp * sq + u[2] * cost
    nrm = sqrt(a * a + b * b + c * c)
    u[0] = a / nrm; u[1] = b / nrm; u[2] = c / nrm


def mc_view(const uint8_t[:, :, ::1] labels, lo, spacing,
            const double[:, ::1] mu, const double[:, ::1] cum_pe, const double[:, ::1] cum_co,
            const double[::1] egrid, const double[::1] mumax,
            const double[::1] spec_e, const double[::1] spec_cdf,
            src, ec, eu, ev, detc, int nu, int nv, double pu, double pv,
            int n_per_pixel, key, double e_min, bint jitter):
    """Photon histories for one view.

    Returns (image[nv, nu] of deposited keV, tallies[sampled, deposited,
    absorbed, escaped], interaction counts[photo, compton, rayleigh]).
    Random draw ``k`` of photon ``p`` is philox(counter=(k, p), key).
    """
    cdef Py_ssize_t nz = labels.shape[0], ny = labels.shape[1], nx = labels.shape[2]
    cdef double blo[3]
    cdef double bhi[3]
    cdef double sp[3]
    cdef double S[3]
    cdef double EC[3]
    cdef double EU[3]
    cdef double EV[3]
    cdef double DC[3]
    cdef int a
    for a in range(3):
        blo[a] = lo[a]; sp[a] = spacing[a]; S[a] = src[a]; EC[a] = ec[a]; EU[a] = eu[a]
        EV[a] = ev[a]; DC[a] = detc[a]
    bhi[0] = blo[0] + nx * sp[0]; bhi[1] = blo[1] + ny * sp[1]; bhi[2] = blo[2] + nz * sp[2]
    cdef uint32_t k32 = <uint32_t>(int(key) & 0xFFFFFFFF)
    cdef Py_ssize_t ne = egrid.shape[0], nb = spec_e.shape[0]
    image = np.zeros((nv, nu), dtype=np.float64)
    tallies = np.zeros(4, dtype=np.float64)
    counts = np.zeros(3, dtype=np.int64)
    cdef double[:, ::1] img = image
    cdef double[::1] tl = tallies
    cdef int64_t[::1] cn = counts
    cdef Py_ssize_t iu, iv, ip, b, ix, iy, iz
    cdef uint32_t pid, dc
    cdef double E, E0, xi, x2, cost, r, kk, mm, mum, s, tin, tout, trem, dn, t, hu, hv
    cdef double pos[3]
    cdef double d[3]
    cdef double aim[3]
    cdef double offu, offv
    cdef int m
    cdef bint alive, in_box
    with nogil:
        for iv in range(nv):
            for iu in range(nu):
                for ip in range(n_per_pixel):
                    pid = <uint32_t>((iv * nu + iu) * n_per_pixel + ip)
                    dc = 0
                    xi = _uniform(dc, pid, k32); dc += 1
                    b = 0
                    while b < nb - 1 and xi >= spec_cdf[b]:
                        b += 1
                    E = spec_e[b]
                    E0 = E
                    tl[0] += E0
                    offu = (iu + 0.5) - nu / 2.0
                    offv = (iv + 0.5) - nv / 2.0
                    if jitter:
                        offu = offu + _uniform(dc, pid, k32) - 0.5; dc += 1
                        offv = offv + _uniform(dc, pid, k32) - 0.5; dc += 1
                    for a in range(3):
                        aim[a] = DC[a] + offu * pu * EU[a] + offv * pv * EV[a]
                        d[a] = aim[a] - S[a]
                        pos[a] = S[a]
                    dn = sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
                    for a in range(3):
                        d[a] = d[a] / dn
                    alive = True
                    in_box = _box_exit(pos, d, blo, bhi, &tin, &tout)
                    if in_box and tin > 0:
                        for a in range(3):
                            pos[a] = pos[a] + tin * d[a]
                        tout = tout - tin
                    trem = tout
                    while in_box:
                        mm = _interp(&egrid[0], &mumax[0], ne, E)
                        xi = _uniform(dc, pid, k32); dc += 1
                        if mm <= 0:
                            break
                        s = -log(1.0 - xi) / mm
                        if s >= trem:
                            for a in range(3):
                                pos[a] = pos[a] + trem * d[a]
                            break
                        for a in range(3):
                            pos[a] = pos[a] + s * d[a]
                        trem = trem - s
                        ix = <Py_ssize_t>floor((pos[0] - blo[0]) / sp[0])
                        iy = <Py_ssize_t>floor((pos[1] - blo[1]) / sp[1])
                        iz = <Py_ssize_t>floor((pos[2] - blo[2]) / sp[2])
                        if ix < 0: ix = 0
                        if ix >= nx: ix = nx - 1
                        if iy < 0: iy = 0
                        if iy >= ny: iy = ny - 1
                        if iz < 0: iz = 0
                        if iz >= nz: iz = nz - 1
                        m = labels[iz, iy, ix]
                        mum = _interp(&egrid[0], &mu[m, 0], ne, E)
                        xi = _uniform(dc, pid, k32); dc += 1
                        if xi * mm >= mum:
                            continue
                        xi = _uniform(dc, pid, k32); dc += 1
                        if xi < _interp(&egrid[0], &cum_pe[m, 0], ne, E):
                            cn[0] += 1
                            tl[2] += E
                            alive = False
                            break
                        elif xi < _interp(&egrid[0], &cum_co[m, 0], ne, E):
                            cn[1] += 1
                            kk = E / 510.99895
                            while True:
                                cost = 2.0 * _uniform(dc, pid, k32) - 1.0; dc += 1
                                x2 = _uniform(dc, pid, k32); dc += 1
                                r = 1.0 / (1.0 + kk * (1.0 - cost))
                                if x2 * 2.0 < r * r * (r + 1.0 / r - (1.0 - cost * cost)):
                                    break
                            tl[2] += E - E * r
                            E = E * r
                        else:
                            cn[2] += 1
                            while True:
                                cost = 2.0 * _uniform(dc, pid, k32) - 1.0; dc += 1
                                x2 = _uniform(dc, pid, k32); dc += 1
                                if x2 * 2.0 < 1.0 + cost * cost:
                                    break
                        _rotate(d, cost, 2.0 * M_PI * _uniform(dc, pid, k32)); dc += 1
                        if E < e_min:
                            tl[2] += E
                            alive = False
                            break
                        in_box = _box_exit(pos, d, blo, bhi, &tin, &tout)
                        trem = tout
                    if not alive:
                        continue
                    dn = d[0] * EC[0] + d[1] * EC[1] + d[2] * EC[2]
                    if dn <= 0:
                        tl[3] += E
                        continue
                    t = ((DC[0] - pos[0]) * EC[0] + (DC[1] - pos[1]) * EC[1]
                         + (DC[2] - pos[2]) * EC[2]) / dn
                    if t < 0:
                        tl[3] += E
                        continue
                    hu = 0.0; hv = 0.0
                    for a in range(3):
                        aim[a] = pos[a] + t * d[a] - DC[a]
                        hu = hu + aim[a] * EU[a]
                        hv = hv + aim[a] * EV[a]
                    ix = <Py_ssize_t>floor(hu / pu + nu / 2.0)
                    iy = <Py_ssize_t>floor(hv / pv + nv / 2.0)
                    if ix < 0 or ix >= nu or iy < 0 or iy >= nv:
                        tl[3] += E
                        continue
                    img[iy, ix] += E
                    tl[1] += E
    return image, tallies, counts
