# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: Gauss-Seidel sweeps, JSQ event simulation, coupling."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, fabs, pow, sqrt

cnp.import_array()


def gauss_seidel(const long[:] indptr, const long[:] src, const double[:] rate,
                 const double[:] out_rate, double[:] pi, long max_sweeps,
                 double tol, long check_every):
    """In-place Gauss-Seidel on pi Q = 0 given in-flow CSR; returns (sweeps, residual)."""
    cdef Py_ssize_t n = pi.shape[0]
    cdef Py_ssize_t j, k
    cdef long sweep = 0
    cdef double acc, total, resid = 1e300, r
    while sweep < max_sweeps:
        total = 0.0
        for j in range(n):
            acc = 0.0
            for k in range(indptr[j], indptr[j + 1]):
                acc += pi[src[k]] * rate[k]
            if out_rate[j] > 0:
                pi[j] = acc / out_rate[j]
            total += pi[j]
        for j in range(n):
            pi[j] /= total
        sweep += 1
        if sweep % check_every == 0 or sweep == max_sweeps:
            resid = 0.0
            for j in range(n):
                acc = 0.0
                for k in range(indptr[j], indptr[j + 1]):
                    acc += pi[src[k]] * rate[k]
                r = fabs(acc - pi[j] * out_rate[j])
                if r > resid:
                    resid = r
            if resid <= tol:
                break
    return sweep, resid


cdef inline double _feature_fill(long[:] q, Py_ssize_t nsrv, double[:] f,
                                 const double[:] p_perp, const double[:] p_sum,
                                 const double[:, :] phi, const double[:] thr,
                                 double qsum_center, double tilde_scale,
                                 double tilde_center) nogil:
    cdef Py_ssize_t i, j, idx
    cdef long tot = 0
    cdef long nzero = 0
    cdef double mean_q, d, s2, proj, hat
    for i in range(nsrv):
        tot += q[i]
        if q[i] == 0:
            nzero += 1
    f[0] = 1.0 if tot == 0 else 0.0
    f[1] = nzero
    for i in range(nsrv):
        f[2 + i] = q[i]
    idx = 2 + nsrv
    mean_q = tot / <double>nsrv
    s2 = 0.0
    for i in range(nsrv):
        d = q[i] - mean_q
        s2 += d * d
    for j in range(p_perp.shape[0]):
        f[idx] = pow(s2, 0.5 * p_perp[j])
        idx += 1
    hat = fabs(tot - qsum_center)
    for j in range(p_sum.shape[0]):
        f[idx] = pow(hat, p_sum[j])
        idx += 1
    for j in range(phi.shape[0]):
        proj = 0.0
        for i in range(nsrv):
            proj += phi[j, i] * tilde_scale * (q[i] - tilde_center)
        f[idx] = 1.0 if proj > thr[j] else 0.0
        idx += 1
    return 0.0


def simulate_jsq(double lam, const double[:] mus, double gamma, long[:] q,
                 double t, double t_end, const double[:] u,
                 double burn_in, double batch_len, double[:, :] acc,
                 const double[:] p_perp, const double[:] p_sum,
                 const double[:, :] phi, const double[:] thr,
                 double qsum_center, double tilde_scale, double tilde_center,
                 int tie_uniform=0):
    """Advance the JSQ chain through pre-drawn uniforms (two per event).

    Time integrals of the feature vector are accumulated per batch window of
    length ``batch_len`` after ``burn_in``. With ``tie_uniform`` the arrival
    draw, rescaled, also picks uniformly among tied shortest queues.
    Returns (t, events_used, done).
    """
    cdef Py_ssize_t nsrv = mus.shape[0]
    cdef Py_ssize_t nb = acc.shape[0]
    cdef Py_ssize_t nfeat = acc.shape[1]
    cdef Py_ssize_t m = u.shape[0] // 2
    cdef Py_ssize_t e, i, star, b, nties, pick
    cdef double R, dt, x, t_next, lo, hi, seg_end
    cdef double[:] f = np.zeros(nfeat)
    for e in range(m):
        R = lam
        for i in range(nsrv):
            if q[i] > 0:
                R += mus[i] + gamma * q[i]
        dt = -log(u[2 * e]) / R
        t_next = t + dt
        if t_next > t_end:
            t_next = t_end
        if t_next > burn_in:
            _feature_fill(q, nsrv, f, p_perp, p_sum, phi, thr, qsum_center,
                          tilde_scale, tilde_center)
            lo = t if t > burn_in else burn_in
            while lo < t_next:
                b = <Py_ssize_t>((lo - burn_in) / batch_len)
                if b >= nb:
                    b = nb - 1
                seg_end = burn_in + (b + 1) * batch_len
                # lo sitting on a boundary can round into the previous batch
                while seg_end <= lo and b < nb - 1:
                    b += 1
                    seg_end = burn_in + (b + 1) * batch_len
                hi = t_next if (t_next < seg_end or b == nb - 1) else seg_end
                for i in range(nfeat):
                    acc[b, i] += f[i] * (hi - lo)
                lo = hi
        if t + dt >= t_end:
            return t_end, e + 1, True
        t = t_next
        x = u[2 * e + 1] * R
        if x < lam:
            star = 0
            for i in range(1, nsrv):
                if q[i] < q[star]:
                    star = i
            if tie_uniform:
                nties = 0
                for i in range(nsrv):
                    if q[i] == q[star]:
                        nties += 1
                pick = <Py_ssize_t>(x / lam * nties)
                if pick >= nties:
                    pick = nties - 1
                for i in range(nsrv):
                    if q[i] == q[star]:
                        if pick == 0:
                            star = i
                            break
                        pick -= 1
            q[star] += 1
        else:
            x -= lam
            for i in range(nsrv):
                if q[i] > 0:
                    x -= mus[i] + gamma * q[i]
                    if x < 0:
                        q[i] -= 1
                        break
            else:
                # rounding guard: charge the last nonempty queue
                for i in range(nsrv - 1, -1, -1):
                    if q[i] > 0:
                        q[i] -= 1
                        break
    return t, m, False


cdef inline void _unlink(long k, long[:] prev, long[:] nxt, long[:] head,
                         long[:] tail, Py_ssize_t s) nogil:
    if prev[k] >= 0:
        nxt[prev[k]] = nxt[k]
    else:
        head[s] = nxt[k]
    if nxt[k] >= 0:
        prev[nxt[k]] = prev[k]
    else:
        tail[s] = prev[k]
    prev[k] = -1
    nxt[k] = -1


cdef inline void _append(long k, long[:] prev, long[:] nxt, long[:] head,
                         long[:] tail, Py_ssize_t s) nogil:
    prev[k] = tail[s]
    nxt[k] = -1
    if tail[s] >= 0:
        nxt[tail[s]] = k
    else:
        head[s] = k
    tail[s] = k


def coupling_run(double lam, const double[:] mus, double gamma, const double[:] u,
                 long[:] stats):
    """Three systems on one event stream (two uniforms per event).

    stats receives: epochs, violation epochs, first violating epoch,
    epochs with |JSQ| != |inf-server|, max |inf-server|, final sizes (3).
    """
    cdef Py_ssize_t nsrv = mus.shape[0]
    cdef Py_ssize_t m = u.shape[0] // 2
    cdef double mu = 0.0
    cdef Py_ssize_t i, e, s
    for i in range(nsrv):
        mu += mus[i]
    cdef long cap = m + 1
    cdef long[:] alive = np.full(cap, -1, dtype=np.int64)
    cdef long[:] pos = np.full(cap, -1, dtype=np.int64)
    cdef long[:] srv = np.full(cap, -1, dtype=np.int64)
    cdef long[:] jprev = np.full(cap, -1, dtype=np.int64)
    cdef long[:] jnext = np.full(cap, -1, dtype=np.int64)
    cdef long[:] jhead = np.full(nsrv, -1, dtype=np.int64)
    cdef long[:] jtail = np.full(nsrv, -1, dtype=np.int64)
    cdef long[:] qlen = np.zeros(nsrv, dtype=np.int64)
    cdef long[:] in_ssq = np.zeros(cap, dtype=np.int64)
    cdef long[:] sprev = np.full(cap, -1, dtype=np.int64)
    cdef long[:] snext = np.full(cap, -1, dtype=np.int64)
    cdef long[:] shead = np.full(1, -1, dtype=np.int64)
    cdef long[:] stail = np.full(1, -1, dtype=np.int64)
    cdef long n_inf = 0, n_jsq = 0, n_ssq = 0, labels = 0
    cdef long viol = 0, first = -1, mism = 0, max_inf = 0
    cdef long k, k2, star, last
    cdef double R, x
    cdef int bad
    for e in range(m):
        R = lam + gamma * n_inf + mu
        x = u[2 * e] * R
        k = -1
        k2 = -1
        if x < lam:
            k = labels
            labels += 1
            alive[n_inf] = k
            pos[k] = n_inf
            n_inf += 1
            star = 0
            for i in range(1, nsrv):
                if qlen[i] < qlen[star]:
                    star = i
            srv[k] = star
            _append(k, jprev, jnext, jhead, jtail, star)
            qlen[star] += 1
            n_jsq += 1
            in_ssq[k] = 1
            _append(k, sprev, snext, shead, stail, 0)
            n_ssq += 1
        elif x < lam + gamma * n_inf:
            i = <Py_ssize_t>(u[2 * e + 1] * n_inf)
            if i >= n_inf:
                i = n_inf - 1
            k = alive[i]
            last = alive[n_inf - 1]
            alive[i] = last
            pos[last] = i
            alive[n_inf - 1] = -1
            pos[k] = -1
            n_inf -= 1
            if srv[k] >= 0:
                s = srv[k]
                _unlink(k, jprev, jnext, jhead, jtail, s)
                qlen[s] -= 1
                srv[k] = -1
                n_jsq -= 1
            if in_ssq[k]:
                _unlink(k, sprev, snext, shead, stail, 0)
                in_ssq[k] = 0
                n_ssq -= 1
        else:
            x = u[2 * e + 1] * mu
            s = nsrv - 1
            for i in range(nsrv):
                x -= mus[i]
                if x < 0:
                    s = i
                    break
            if qlen[s] > 0:
                k = jhead[s]
                _unlink(k, jprev, jnext, jhead, jtail, s)
                qlen[s] -= 1
                srv[k] = -1
                n_jsq -= 1
            if k >= 0 and in_ssq[k]:
                _unlink(k, sprev, snext, shead, stail, 0)
                in_ssq[k] = 0
                n_ssq -= 1
            elif shead[0] >= 0:
                k2 = shead[0]
                _unlink(k2, sprev, snext, shead, stail, 0)
                in_ssq[k2] = 0
                n_ssq -= 1
        # inclusion held before the event, so only touched labels can break it
        bad = 0
        if k >= 0:
            if in_ssq[k] and srv[k] < 0:
                bad = 1
            if srv[k] >= 0 and pos[k] < 0:
                bad = 1
        if k2 >= 0:
            if in_ssq[k2] and srv[k2] < 0:
                bad = 1
            if srv[k2] >= 0 and pos[k2] < 0:
                bad = 1
        if n_ssq > n_jsq or n_jsq > n_inf:
            bad = 1
        if bad:
            viol += 1
            if first < 0:
                first = e
        if n_jsq != n_inf:
            mism += 1
        if n_inf > max_inf:
            max_inf = n_inf
    # final exhaustive scan
    for k in range(labels):
        if (in_ssq[k] and srv[k] < 0) or (srv[k] >= 0 and pos[k] < 0):
            viol += 1
            if first < 0:
                first = m
    stats[0] = m
    stats[1] = viol
    stats[2] = first
    stats[3] = mism
    stats[4] = max_inf
    stats[5] = n_ssq
    stats[6] = n_jsq
    stats[7] = n_inf
    return None
