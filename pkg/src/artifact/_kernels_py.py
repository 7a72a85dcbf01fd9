"""Pure-Python twins of the compiled loops in ``_kernels.pyx``.

Signatures and semantics match exactly; used when the extension is absent
or when ARTIFACT_PURE_PYTHON=1 is set.
"""
from __future__ import annotations

import math

import numpy as np


def gauss_seidel(indptr, src, rate, out_rate, pi, max_sweeps, tol, check_every):
    n = len(pi)
    sweep = 0
    resid = 1e300
    indptr = indptr.tolist()
    src_l = src.tolist()
    rate_l = rate.tolist()
    out_l = out_rate.tolist()
    x = pi.tolist()
    while sweep < max_sweeps:
        total = 0.0
        for j in range(n):
            acc = 0.0
            for k in range(indptr[j], indptr[j + 1]):
                acc += x[src_l[k]] * rate_l[k]
            if out_l[j] > 0:
                x[j] = acc / out_l[j]
            total += x[j]
        x = [v / total for v in x]
        sweep += 1
        if sweep % check_every == 0 or sweep == max_sweeps:
            resid = 0.0
            for j in range(n):
                acc = 0.0
                for k in range(indptr[j], indptr[j + 1]):
                    acc += x[src_l[k]] * rate_l[k]
                resid = max(resid, abs(acc - x[j] * out_l[j]))
            if resid <= tol:
                break
    pi[:] = x
    return sweep, resid


def _features(q, f, p_perp, p_sum, phi, thr, qsum_center, tilde_scale, tilde_center):
    n = len(q)
    tot = sum(q)
    f[0] = 1.0 if tot == 0 else 0.0
    f[1] = sum(1 for v in q if v == 0)
    f[2:2 + n] = q
    idx = 2 + n
    m = tot / n
    s2 = sum((v - m) ** 2 for v in q)
    for pp in p_perp:
        f[idx] = s2 ** (0.5 * pp)
        idx += 1
    hat = abs(tot - qsum_center)
    for ps in p_sum:
        f[idx] = hat ** ps
        idx += 1
    for j in range(len(thr)):
        proj = sum(phi[j][i] * tilde_scale * (q[i] - tilde_center) for i in range(n))
        f[idx] = 1.0 if proj > thr[j] else 0.0
        idx += 1


def simulate_jsq(lam, mus, gamma, q, t, t_end, u, burn_in, batch_len, acc,
                 p_perp, p_sum, phi, thr, qsum_center, tilde_scale, tilde_center,
                 tie_uniform=0):
    n = len(mus)
    nb, nfeat = acc.shape
    m = len(u) // 2
    mus_l = list(mus)
    ql = [int(v) for v in q]
    pp, ps = list(p_perp), list(p_sum)
    phil = np.asarray(phi).tolist()
    thrl = list(thr)
    f = [0.0] * nfeat
    ul = u.tolist()
    done = False
    used = m
    for e in range(m):
        R = lam
        for i in range(n):
            if ql[i] > 0:
                R += mus_l[i] + gamma * ql[i]
        dt = -math.log(ul[2 * e]) / R
        t_next = min(t + dt, t_end)
        if t_next > burn_in:
            _features(ql, f, pp, ps, phil, thrl, qsum_center, tilde_scale, tilde_center)
            lo = max(t, burn_in)
            while lo < t_next:
                b = min(int((lo - burn_in) / batch_len), nb - 1)
                seg_end = burn_in + (b + 1) * batch_len
                # lo sitting on a boundary can round into the previous batch
                while seg_end <= lo and b < nb - 1:
                    b += 1
                    seg_end = burn_in + (b + 1) * batch_len
                hi = t_next if (t_next < seg_end or b == nb - 1) else seg_end
                acc[b, :] += np.asarray(f) * (hi - lo)
                lo = hi
        if t + dt >= t_end:
            t, used, done = t_end, e + 1, True
            break
        t = t_next
        x = ul[2 * e + 1] * R
        if x < lam:
            star = min(range(n), key=lambda i: (ql[i], i))
            if tie_uniform:
                ties = [i for i in range(n) if ql[i] == ql[star]]
                star = ties[min(int(x / lam * len(ties)), len(ties) - 1)]
            ql[star] += 1
        else:
            x -= lam
            for i in range(n):
                if ql[i] > 0:
                    x -= mus_l[i] + gamma * ql[i]
                    if x < 0:
                        ql[i] -= 1
                        break
            else:
                for i in range(n - 1, -1, -1):
                    if ql[i] > 0:
                        ql[i] -= 1
                        break
    q[:] = ql
    return t, used, done


class _Fifo:
    """Doubly linked FIFO over integer labels with O(1) removal."""

    def __init__(self):
        self.prev: dict[int, int] = {}
        self.next: dict[int, int] = {}
        self.head = -1
        self.tail = -1
        self.size = 0

    def __contains__(self, k):
        return k in self.prev

    def append(self, k):
        self.prev[k] = self.tail
        self.next[k] = -1
        if self.tail >= 0:
            self.next[self.tail] = k
        else:
            self.head = k
        self.tail = k
        self.size += 1

    def remove(self, k):
        p, nx = self.prev.pop(k), self.next.pop(k)
        if p >= 0:
            self.next[p] = nx
        else:
            self.head = nx
        if nx >= 0:
            self.prev[nx] = p
        else:
            self.tail = p
        self.size -= 1


def coupling_run(lam, mus, gamma, u, stats):
    n = len(mus)
    mus_l = list(mus)
    mu = sum(mus_l)
    m = len(u) // 2
    ul = u.tolist()
    alive: list[int] = []
    pos: dict[int, int] = {}
    srv: dict[int, int] = {}
    jq = [_Fifo() for _ in range(n)]
    ssq = _Fifo()
    labels = 0
    viol, first, mism, max_inf = 0, -1, 0, 0
    n_jsq = 0
    for e in range(m):
        n_inf = len(alive)
        R = lam + gamma * n_inf + mu
        x = ul[2 * e] * R
        k = k2 = -1
        if x < lam:
            k = labels
            labels += 1
            pos[k] = len(alive)
            alive.append(k)
            star = min(range(n), key=lambda i: (jq[i].size, i))
            srv[k] = star
            jq[star].append(k)
            n_jsq += 1
            ssq.append(k)
        elif x < lam + gamma * n_inf:
            i = min(int(ul[2 * e + 1] * n_inf), n_inf - 1)
            k = alive[i]
            last = alive[-1]
            alive[i] = last
            pos[last] = i
            alive.pop()
            del pos[k]
            s = srv.pop(k, -1)
            if s >= 0:
                jq[s].remove(k)
                n_jsq -= 1
            if k in ssq:
                ssq.remove(k)
        else:
            x = ul[2 * e + 1] * mu
            s = n - 1
            for i in range(n):
                x -= mus_l[i]
                if x < 0:
                    s = i
                    break
            if jq[s].size > 0:
                k = jq[s].head
                jq[s].remove(k)
                del srv[k]
                n_jsq -= 1
            if k >= 0 and k in ssq:
                ssq.remove(k)
            elif ssq.head >= 0:
                k2 = ssq.head
                ssq.remove(k2)
        bad = False
        for lab in (k, k2):
            if lab >= 0:
                if lab in ssq and lab not in srv:
                    bad = True
                if lab in srv and lab not in pos:
                    bad = True
        n_inf = len(alive)
        if ssq.size > n_jsq or n_jsq > n_inf:
            bad = True
        if bad:
            viol += 1
            if first < 0:
                first = e
        if n_jsq != n_inf:
            mism += 1
        max_inf = max(max_inf, n_inf)
    for lab in range(labels):
        if (lab in ssq and lab not in srv) or (lab in srv and lab not in pos):
            viol += 1
            if first < 0:
                first = m
    stats[:] = [m, viol, first, mism, max_inf, ssq.size, n_jsq, len(alive)]
    return None
