# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: batch walk advancement and pairwise metric scan.

Must stay bit-for-bit equivalent to vdwalk._python; equality is enforced
by the test suite whenever this extension is importable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, hypot


def fill_states(long[::1] indptr, long[::1] indices, long[::1] degree,
                double[::1] darning_cum, cnp.uint8_t[::1] absorbing,
                long x0, double[:, ::1] u, long[::1] n_events):
    """See vdwalk._python.fill_states."""
    cdef Py_ssize_t n_paths = u.shape[0]
    cdef Py_ssize_t max_ev = 0, p, s
    for p in range(n_paths):
        if n_events[p] > max_ev:
            max_ev = n_events[p]
    out_arr = np.empty((n_paths, max_ev), dtype=np.int64)
    cdef long[:, ::1] out = out_arr
    cdef long cur, d, pick
    cdef double uu
    cdef Py_ssize_t n_darn = darning_cum.shape[0]
    cdef long darn0 = indptr[0] if indptr.shape[0] else 0
    for p in range(n_paths):
        cur = x0
        for s in range(max_ev):
            if s < n_events[p] and absorbing[cur] == 0:
                uu = u[p, s]
                if cur == 0:
                    pick = 0
                    while pick < n_darn - 1 and uu >= darning_cum[pick]:
                        pick += 1
                    cur = indices[darn0 + pick]
                else:
                    d = degree[cur]
                    pick = <long>(uu * d)
                    if pick > d - 1:
                        pick = d - 1
                    cur = indices[indptr[cur] + pick]
            out[p, s] = cur
    return out_arr


def pairwise_rho_max(double[::1] px, double[::1] py, double[::1] rho_norm,
                     cnp.uint8_t[::1] kind, long[::1] idx):
    """See vdwalk._python.pairwise_rho_max."""
    cdef Py_ssize_t n = idx.shape[0]
    if n < 2:
        return 0.0
    cdef double best = 0.0, d, chord, through
    cdef Py_ssize_t a, b
    cdef long i, j
    for a in range(n):
        i = idx[a]
        for b in range(a + 1, n):
            j = idx[b]
            through = rho_norm[i] + rho_norm[j]
            if kind[i] == 2 and kind[j] == 2:
                d = fabs(rho_norm[i] - rho_norm[j])
            elif kind[i] == 1 and kind[j] == 1:
                chord = hypot(px[i] - px[j], py[i] - py[j])
                d = chord if chord < through else through
            else:
                d = through
            if d > best:
                best = d
    return best
