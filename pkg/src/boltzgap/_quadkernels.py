"""Hot loops for the collision quadrature: bilinear operator evaluation and
dense linearized-matrix assembly.

Everything works on flat C-ordered node arrays of a uniform tensor grid.
Collision geometry uses the sigma representation
    v' = (v + v*)/2 + (|v - v*|/2) sigma,   cos th = sigma . (v - v*)/|v - v*|.
Off-grid values are interpolated with per-axis Lagrange stencils (order 2 =
multilinear, order 3 = tensor quadratic, the default); points outside the box
contribute zero.  Order 3 reproduces 1, v and |v|^2 exactly, which keeps the
discrete collision invariants of the assembled operators at roundoff level.

Numba compiles these loops when available; a slow numpy fallback with the
same semantics is kept for tiny grids and for cross-checking the compiled
path.  Set BOLTZGAP_DISABLE_NUMBA=1 to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

_NUMBA_DISABLED = os.environ.get("BOLTZGAP_DISABLE_NUMBA", "").lower() in {
    "1",
    "true",
    "yes",
    "on",
}

try:  # pragma: no cover - import guard
    if _NUMBA_DISABLED:
        raise ImportError
    import numba
    from numba import njit, prange

    NUMBA_OK = True
except ImportError:  # pragma: no cover
    NUMBA_OK = False

    def njit(*args, **kwargs):  # type: ignore
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range  # type: ignore


def set_threads(n: int) -> None:
    if NUMBA_OK:
        import numba

        numba.set_num_threads(max(1, int(n)))


@njit(inline="always", cache=True)
def _stencil_1d(p, x0, h, n, order, wout):
    """Per-axis interpolation stencil: base node index, weights in wout[0:3].

    Returns -1 when p falls outside [x0, x0 + (n-1) h].  Points exactly on a
    half-cell admit two quadratic stencils; ties are broken toward the grid
    center so the stencil map commutes with the reflection v -> -v.
    """
    xend = x0 + (n - 1) * h
    if p < x0 or p > xend:
        return -1
    t = (p - x0) / h
    if order == 2:
        b = int(np.floor(t))
        if b < 0:
            b = 0
        if b > n - 2:
            b = n - 2
        s = t - b
        wout[0] = 1.0 - s
        wout[1] = s
        wout[2] = 0.0
        return b
    b = int(np.floor(t + 0.5)) - 1
    th = 2.0 * t
    rh = np.rint(th)
    if np.abs(th - rh) < 1e-9 and int(rh) % 2 != 0:
        k_tie = (int(rh) - 1) // 2
        b = k_tie - 1 if t > 0.5 * (n - 1.0) else k_tie
    if b < 0:
        b = 0
    if b > n - 3:
        b = n - 3
    s = t - b
    wout[0] = 0.5 * (s - 1.0) * (s - 2.0)
    wout[1] = s * (2.0 - s)
    wout[2] = 0.5 * s * (s - 1.0)
    return b


@njit(inline="always", cache=True)
def _angular(cos_th, iso, bconst, tx0, tdx, tvals):
    if iso:
        return bconst
    t = (cos_th - tx0) / tdx
    if t <= 0.0:
        return tvals[0]
    m = tvals.shape[0] - 1
    if t >= m:
        return tvals[m]
    k = int(np.floor(t))
    s = t - k
    return tvals[k] * (1.0 - s) + tvals[k + 1] * s


@njit(inline="always", cache=True)
def _gather(vals, b0, b1, b2, w0, w1, w2, n, ndim, order):
    """Tensor-product gather; bases must be valid (checked by caller)."""
    acc = 0.0
    if ndim == 3:
        for a in range(order):
            wa = w0[a]
            ia = (b0 + a) * n
            for c in range(order):
                wac = wa * w1[c]
                iac = (ia + b1 + c) * n
                for e in range(order):
                    acc += wac * w2[e] * vals[iac + b2 + e]
    else:
        for a in range(order):
            wa = w0[a]
            ia = (b0 + a) * n
            for c in range(order):
                acc += wa * w1[c] * vals[ia + b1 + c]
    return acc


@njit(parallel=True, cache=True)
def _q_bilinear_nb(
    gv,
    fv,
    x0,
    h,
    n,
    ndim,
    aw,
    dirs,
    sw,
    gamma,
    cphi,
    iso,
    bconst,
    tx0,
    tdx,
    tvals,
    order,
    idx_out,
    idx_in,
):
    num = gv.shape[0]
    nk = sw.shape[0]
    nin = idx_in.shape[0]
    gain = np.zeros(num)
    qminus = np.zeros(num)

    vin = np.empty((nin, 3))
    win = np.empty(nin)
    for jj in range(nin):
        r = idx_in[jj]
        wq = 1.0
        for d in range(ndim - 1, -1, -1):
            q = r % n
            r //= n
            vin[jj, d] = x0 + q * h
            wq *= aw[q]
        win[jj] = wq

    for io in prange(idx_out.shape[0]):
        i = idx_out[io]
        vi = np.empty(3)
        r = i
        for d in range(ndim - 1, -1, -1):
            vi[d] = x0 + (r % n) * h
            r //= n
        wp0 = np.empty(3)
        wp1 = np.empty(3)
        wp2 = np.empty(3)
        wq0 = np.empty(3)
        wq1 = np.empty(3)
        wq2 = np.empty(3)
        acc_gain = 0.0
        acc_loss = 0.0
        for jj in range(nin):
            e0 = vi[0] - vin[jj, 0]
            e1 = vi[1] - vin[jj, 1]
            e2 = vi[2] - vin[jj, 2] if ndim == 3 else 0.0
            r2 = e0 * e0 + e1 * e1 + e2 * e2
            if r2 == 0.0:
                continue
            rn = np.sqrt(r2)
            phi = cphi * rn ** gamma
            m0 = vi[0] - 0.5 * e0
            m1 = vi[1] - 0.5 * e1
            m2 = vi[2] - 0.5 * e2
            half = 0.5 * rn
            gj = gv[idx_in[jj]]
            bsum = 0.0
            acck = 0.0
            for k in range(nk):
                if ndim == 3:
                    cs = (dirs[k, 0] * e0 + dirs[k, 1] * e1 + dirs[k, 2] * e2) / rn
                else:
                    cs = (dirs[k, 0] * e0 + dirs[k, 1] * e1) / rn
                b = _angular(cs, iso, bconst, tx0, tdx, tvals)
                if b == 0.0:
                    continue
                bsum += sw[k] * b
                p0 = m0 + half * dirs[k, 0]
                p1 = m1 + half * dirs[k, 1]
                q0 = m0 - half * dirs[k, 0]
                q1 = m1 - half * dirs[k, 1]
                bp0 = _stencil_1d(p0, x0, h, n, order, wp0)
                if bp0 < 0:
                    fp = 0.0
                else:
                    bp1 = _stencil_1d(p1, x0, h, n, order, wp1)
                    if bp1 < 0:
                        fp = 0.0
                    else:
                        if ndim == 3:
                            p2 = m2 + half * dirs[k, 2]
                            bp2 = _stencil_1d(p2, x0, h, n, order, wp2)
                            if bp2 < 0:
                                fp = 0.0
                            else:
                                fp = _gather(fv, bp0, bp1, bp2, wp0, wp1, wp2, n, ndim, order)
                        else:
                            fp = _gather(fv, bp0, bp1, 0, wp0, wp1, wp2, n, ndim, order)
                if fp == 0.0:
                    continue
                bq0 = _stencil_1d(q0, x0, h, n, order, wq0)
                if bq0 < 0:
                    continue
                bq1 = _stencil_1d(q1, x0, h, n, order, wq1)
                if bq1 < 0:
                    continue
                if ndim == 3:
                    q2 = m2 - half * dirs[k, 2]
                    bq2 = _stencil_1d(q2, x0, h, n, order, wq2)
                    if bq2 < 0:
                        continue
                    gq = _gather(gv, bq0, bq1, bq2, wq0, wq1, wq2, n, ndim, order)
                else:
                    gq = _gather(gv, bq0, bq1, 0, wq0, wq1, wq2, n, ndim, order)
                acck += sw[k] * b * gq * fp
            acc_gain += win[jj] * phi * acck
            acc_loss += win[jj] * phi * bsum * gj
        gain[i] = acc_gain
        qminus[i] = acc_loss * fv[i]
    return gain, qminus


@njit(parallel=True, cache=True)
def _assemble_nb(
    mvals,
    x0,
    h,
    n,
    ndim,
    aw,
    dirs,
    sw,
    gamma,
    cphi,
    iso,
    bconst,
    tx0,
    tdx,
    tvals,
    order,
    row_scale,
    mode,
):
    """Gain matrix, convolution matrix and collision frequency.

    mode 0 (relative scaling): row i of the gain gets w_j sw_k phi b M_j
    deposited on the stencils of both post-collision points; the interpolated
    unknown is the ratio h = (f - M)/M.  mode 1 (physical scaling): the
    unknown is d = f - M itself and the companion Maxwellian is interpolated
    from its node values, matching the bilinear evaluator exactly.
    """
    num = mvals.shape[0]
    nk = sw.shape[0]
    a_plus = np.zeros((num, num))
    a_star = np.zeros((num, num))
    nu = np.zeros(num)

    vall = np.empty((num, 3))
    wall = np.empty(num)
    for j in range(num):
        r = j
        wq = 1.0
        for d in range(ndim - 1, -1, -1):
            q = r % n
            r //= n
            vall[j, d] = x0 + q * h
            wq *= aw[q]
        wall[j] = wq

    for i in prange(num):
        rs = row_scale[i]
        arow = a_plus[i]
        srow = a_star[i]
        vi0 = vall[i, 0]
        vi1 = vall[i, 1]
        vi2 = vall[i, 2]
        wp0 = np.empty(3)
        wp1 = np.empty(3)
        wp2 = np.empty(3)
        wq0 = np.empty(3)
        wq1 = np.empty(3)
        wq2 = np.empty(3)
        acc_nu = 0.0
        for j in range(num):
            e0 = vi0 - vall[j, 0]
            e1 = vi1 - vall[j, 1]
            e2 = vi2 - vall[j, 2] if ndim == 3 else 0.0
            r2 = e0 * e0 + e1 * e1 + e2 * e2
            if r2 == 0.0:
                continue
            rn = np.sqrt(r2)
            cphij = wall[j] * cphi * rn ** gamma
            m0 = vi0 - 0.5 * e0
            m1 = vi1 - 0.5 * e1
            m2 = vi2 - 0.5 * e2
            half = 0.5 * rn
            bsum = 0.0
            for k in range(nk):
                if ndim == 3:
                    cs = (dirs[k, 0] * e0 + dirs[k, 1] * e1 + dirs[k, 2] * e2) / rn
                else:
                    cs = (dirs[k, 0] * e0 + dirs[k, 1] * e1) / rn
                b = _angular(cs, iso, bconst, tx0, tdx, tvals)
                if b == 0.0:
                    continue
                bsum += sw[k] * b
                if rs == 0.0:
                    continue
                coef = rs * cphij * sw[k] * b
                p0 = m0 + half * dirs[k, 0]
                p1 = m1 + half * dirs[k, 1]
                q0 = m0 - half * dirs[k, 0]
                q1 = m1 - half * dirs[k, 1]
                bp0 = _stencil_1d(p0, x0, h, n, order, wp0)
                bp1 = _stencil_1d(p1, x0, h, n, order, wp1) if bp0 >= 0 else -1
                bp2 = 0
                if ndim == 3 and bp1 >= 0:
                    bp2 = _stencil_1d(m2 + half * dirs[k, 2], x0, h, n, order, wp2)
                p_ok = bp0 >= 0 and bp1 >= 0 and (ndim == 2 or bp2 >= 0)
                bq0 = _stencil_1d(q0, x0, h, n, order, wq0)
                bq1 = _stencil_1d(q1, x0, h, n, order, wq1) if bq0 >= 0 else -1
                bq2 = 0
                if ndim == 3 and bq1 >= 0:
                    bq2 = _stencil_1d(m2 - half * dirs[k, 2], x0, h, n, order, wq2)
                q_ok = bq0 >= 0 and bq1 >= 0 and (ndim == 2 or bq2 >= 0)

                if mode == 0:
                    cp = coef * mvals[j]
                    cq = cp
                else:
                    mp = (
                        _gather(mvals, bp0, bp1, bp2, wp0, wp1, wp2, n, ndim, order)
                        if p_ok
                        else 0.0
                    )
                    mq = (
                        _gather(mvals, bq0, bq1, bq2, wq0, wq1, wq2, n, ndim, order)
                        if q_ok
                        else 0.0
                    )
                    cp = coef * mq  # deposit on stencil(v') carries M at v'_*
                    cq = coef * mp
                if p_ok and cp != 0.0:
                    if ndim == 3:
                        for a in range(order):
                            wa = cp * wp0[a]
                            ia = (bp0 + a) * n
                            for c in range(order):
                                wac = wa * wp1[c]
                                iac = (ia + bp1 + c) * n
                                for e in range(order):
                                    arow[iac + bp2 + e] += wac * wp2[e]
                    else:
                        for a in range(order):
                            wa = cp * wp0[a]
                            ia = (bp0 + a) * n
                            for c in range(order):
                                arow[ia + bp1 + c] += wa * wp1[c]
                if q_ok and cq != 0.0:
                    if ndim == 3:
                        for a in range(order):
                            wa = cq * wq0[a]
                            ia = (bq0 + a) * n
                            for c in range(order):
                                wac = wa * wq1[c]
                                iac = (ia + bq1 + c) * n
                                for e in range(order):
                                    arow[iac + bq2 + e] += wac * wq2[e]
                    else:
                        for a in range(order):
                            wa = cq * wq0[a]
                            ia = (bq0 + a) * n
                            for c in range(order):
                                arow[ia + bq1 + c] += wa * wq1[c]
            conv = cphij * bsum
            if mode == 0:
                srow[j] = conv * mvals[j]
            else:
                srow[j] = conv * mvals[i]
            acc_nu += conv * mvals[j]
        nu[i] = acc_nu
    return a_plus, a_star, nu


# --- numpy fallback --------------------------------------------------------


def _stencils_np(pts, x0, h, n, order):
    """Vectorized stencil bases/weights; returns (bases, weights, ok_mask)."""
    pts = np.asarray(pts)
    t = (pts - x0) / h
    ok = (pts >= x0) & (pts <= x0 + (n - 1) * h)
    if order == 2:
        b = np.clip(np.floor(t).astype(np.int64), 0, n - 2)
        s = t - b
        w = np.stack([1.0 - s, s, np.zeros_like(s)], axis=-1)
    else:
        b = np.floor(t + 0.5).astype(np.int64) - 1
        th = 2.0 * t
        rh = np.rint(th)
        tie = (np.abs(th - rh) < 1e-9) & (rh.astype(np.int64) % 2 != 0)
        k_tie = (rh.astype(np.int64) - 1) // 2
        b = np.where(tie, np.where(t > 0.5 * (n - 1.0), k_tie - 1, k_tie), b)
        b = np.clip(b, 0, n - 3)
        s = t - b
        w = np.stack(
            [0.5 * (s - 1.0) * (s - 2.0), s * (2.0 - s), 0.5 * s * (s - 1.0)], axis=-1
        )
    return b, w, ok


def _interp_np(vals, pts, x0, h, n, ndim, order):
    """Tensor-Lagrange interpolation of flat node values at points (m, ndim)."""
    m = pts.shape[0]
    out = np.zeros(m)
    bases = []
    wts = []
    ok = np.ones(m, dtype=bool)
    for d in range(ndim):
        b, w, o = _stencils_np(pts[:, d], x0, h, n, order)
        bases.append(b)
        wts.append(w)
        ok &= o
    rng = range(order)
    for a in rng:
        for c in rng:
            if ndim == 3:
                for e in rng:
                    idx = ((bases[0] + a) * n + bases[1] + c) * n + bases[2] + e
                    out += wts[0][:, a] * wts[1][:, c] * wts[2][:, e] * vals[
                        np.clip(idx, 0, len(vals) - 1)
                    ]
            else:
                idx = (bases[0] + a) * n + bases[1] + c
                out += wts[0][:, a] * wts[1][:, c] * vals[np.clip(idx, 0, len(vals) - 1)]
    out[~ok] = 0.0
    return out


def _q_bilinear_np(
    gv, fv, x0, h, n, ndim, aw, dirs, sw, gamma, cphi, iso, bconst, tx0, tdx, tvals,
    order, idx_out, idx_in,
):
    num = gv.shape[0]
    gain = np.zeros(num)
    qminus = np.zeros(num)
    coords = _node_coords(x0, h, n, ndim)
    wnode = _node_weights(aw, n, ndim)
    vin = coords[idx_in]
    win = wnode[idx_in]
    for io, i in enumerate(idx_out):
        vi = coords[i]
        e = vi[None, :] - vin
        r2 = np.sum(e * e, axis=1)
        sel = r2 > 0.0
        ej = e[sel]
        rn = np.sqrt(r2[sel])
        phi = cphi * rn ** gamma
        mid = vi[None, :] - 0.5 * ej
        cos = (ej @ dirs.T) / rn[:, None]
        b = (
            np.full_like(cos, bconst)
            if iso
            else np.interp(cos.ravel(), tx0 + tdx * np.arange(len(tvals)), tvals).reshape(
                cos.shape
            )
        )
        half = 0.5 * rn
        npts = mid[:, None, :] + half[:, None, None] * dirs[None, :, :]
        qpts = mid[:, None, :] - half[:, None, None] * dirs[None, :, :]
        fp = _interp_np(fv, npts.reshape(-1, ndim), x0, h, n, ndim, order).reshape(
            cos.shape
        )
        gq = _interp_np(gv, qpts.reshape(-1, ndim), x0, h, n, ndim, order).reshape(
            cos.shape
        )
        acck = (b * fp * gq) @ sw
        bsum = b @ sw
        wj = win[sel]
        gain[i] = np.sum(wj * phi * acck)
        qminus[i] = fv[i] * np.sum(wj * phi * bsum * gv[idx_in][sel])
    return gain, qminus


def _assemble_np(
    mvals, x0, h, n, ndim, aw, dirs, sw, gamma, cphi, iso, bconst, tx0, tdx, tvals,
    order, row_scale, mode,
):
    num = mvals.shape[0]
    a_plus = np.zeros((num, num))
    a_star = np.zeros((num, num))
    nu = np.zeros(num)
    coords = _node_coords(x0, h, n, ndim)
    wnode = _node_weights(aw, n, ndim)
    osz = order
    for i in range(num):
        vi = coords[i]
        e = vi[None, :] - coords
        r2 = np.sum(e * e, axis=1)
        sel = np.nonzero(r2 > 0.0)[0]
        ej = e[sel]
        rn = np.sqrt(r2[sel])
        phiw = wnode[sel] * cphi * rn ** gamma
        mid = vi[None, :] - 0.5 * ej
        cos = (ej @ dirs.T) / rn[:, None]
        b = (
            np.full_like(cos, bconst)
            if iso
            else np.interp(cos.ravel(), tx0 + tdx * np.arange(len(tvals)), tvals).reshape(
                cos.shape
            )
        )
        bsum = b @ sw
        conv = phiw * bsum
        a_star[i, sel] = conv * (mvals[sel] if mode == 0 else mvals[i])
        nu[i] = np.sum(conv * mvals[sel])
        if row_scale[i] == 0.0:
            continue
        half = 0.5 * rn
        npts = (mid[:, None, :] + half[:, None, None] * dirs[None, :, :]).reshape(
            -1, ndim
        )
        qpts = (mid[:, None, :] - half[:, None, None] * dirs[None, :, :]).reshape(
            -1, ndim
        )
        coef = row_scale[i] * (phiw[:, None] * sw[None, :] * b).ravel()
        if mode == 0:
            cp = coef * np.repeat(mvals[sel], len(sw))
            cq = cp
        else:
            mp = _interp_np(mvals, npts, x0, h, n, ndim, order)
            mq = _interp_np(mvals, qpts, x0, h, n, ndim, order)
            cp = coef * mq
            cq = coef * mp
        for pts, cc in ((npts, cp), (qpts, cq)):
            bases = []
            wts = []
            ok = np.ones(len(pts), dtype=bool)
            for d in range(ndim):
                bb, ww, oo = _stencils_np(pts[:, d], x0, h, n, order)
                bases.append(bb)
                wts.append(ww)
                ok &= oo
            ccm = np.where(ok, cc, 0.0)
            for a in range(osz):
                for c in range(osz):
                    if ndim == 3:
                        for eo in range(osz):
                            idx = ((bases[0] + a) * n + bases[1] + c) * n + bases[2] + eo
                            np.add.at(
                                a_plus[i],
                                np.clip(idx, 0, num - 1),
                                ccm * wts[0][:, a] * wts[1][:, c] * wts[2][:, eo],
                            )
                    else:
                        idx = (bases[0] + a) * n + bases[1] + c
                        np.add.at(
                            a_plus[i],
                            np.clip(idx, 0, num - 1),
                            ccm * wts[0][:, a] * wts[1][:, c],
                        )
    return a_plus, a_star, nu


def _node_coords(x0, h, n, ndim):
    ax = x0 + h * np.arange(n)
    grids = np.meshgrid(*([ax] * ndim), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def _node_weights(aw, n, ndim):
    w = aw.copy()
    for _ in range(ndim - 1):
        w = np.multiply.outer(w, aw).reshape(-1)
    return w


q_bilinear_raw = _q_bilinear_nb if NUMBA_OK else _q_bilinear_np
assemble_raw = _assemble_nb if NUMBA_OK else _assemble_np
