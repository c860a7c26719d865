# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the numeric kernels.

Same contracts as _numpy.py; the bilinear interpolation uses the
identical float64 operation order so the two backends agree bit for
bit on that kernel.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, floor

cnp.import_array()

BACKEND_NAME = "native"


def cosine_parts(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], c = a.shape[1]
    cdef Py_ssize_t i, j, d
    dots_arr = np.empty((n, m), dtype=np.float64)
    na_arr = np.empty(n, dtype=np.float64)
    nb_arr = np.empty(m, dtype=np.float64)
    cdef double[:, ::1] dots = dots_arr
    cdef double[::1] na = na_arr
    cdef double[::1] nb = nb_arr
    cdef double acc
    for i in range(n):
        acc = 0.0
        for d in range(c):
            acc += a[i, d] * a[i, d]
        na[i] = sqrt(acc)
    for j in range(m):
        acc = 0.0
        for d in range(c):
            acc += b[j, d] * b[j, d]
        nb[j] = sqrt(acc)
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for d in range(c):
                acc += a[i, d] * b[j, d]
            dots[i, j] = acc
    return dots_arr, na_arr, nb_arr


def sqdist_matrix(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], k = b.shape[0], c = a.shape[1]
    cdef Py_ssize_t i, j, d
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double acc, diff
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for d in range(c):
                diff = a[i, d] - b[j, d]
                acc += diff * diff
            out[i, j] = acc
    return out_arr


cdef void _assign(double[:, ::1] points, double[:, ::1] cents,
                  Py_ssize_t k, long long[::1] labels):
    # argmin_j ||p - c_j||^2 = argmin_j (||c_j||^2 - 2 p.c_j); the
    # ||p||^2 term is constant per point and cannot change the winner.
    # Dot products run over center chunks of 8 so the loop vectorizes.
    cdef Py_ssize_t n = points.shape[0], c = points.shape[1]
    cdef Py_ssize_t i, j, d, j0, jj
    cdef Py_ssize_t kp = ((k + 7) // 8) * 8
    cdef double best, acc, score, v
    cdef Py_ssize_t best_j
    cdef double lane[8]
    centsT_arr = np.zeros((c, kp), dtype=np.float64)
    cnorm2_arr = np.empty(kp, dtype=np.float64)
    dots_arr = np.empty(kp, dtype=np.float64)
    cdef double[:, ::1] centsT = centsT_arr
    cdef double[::1] cnorm2 = cnorm2_arr
    cdef double[::1] dots = dots_arr
    for j in range(k):
        acc = 0.0
        for d in range(c):
            acc += cents[j, d] * cents[j, d]
            centsT[d, j] = cents[j, d]
        cnorm2[j] = acc
    for i in range(n):
        for j0 in range(0, kp, 8):
            for jj in range(8):
                lane[jj] = 0.0
            for d in range(c):
                v = points[i, d]
                for jj in range(8):
                    lane[jj] += v * centsT[d, j0 + jj]
            for jj in range(8):
                dots[j0 + jj] = lane[jj]
        best_j = 0
        best = 0.0
        for j in range(k):
            score = cnorm2[j] - 2.0 * dots[j]
            if j == 0 or score < best:
                best = score
                best_j = j
        labels[i] = best_j


cdef void _means(double[:, ::1] x, long long[::1] labels, Py_ssize_t k,
                 double[:, ::1] means, long long[::1] counts):
    # means rows keep their previous value for empty groups
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t i, j, d
    sums_arr = np.zeros((k, c), dtype=np.float64)
    cdef double[:, ::1] sums = sums_arr
    for j in range(k):
        counts[j] = 0
    for i in range(n):
        j = labels[i]
        counts[j] += 1
        for d in range(c):
            sums[j, d] += x[i, d]
    for j in range(k):
        if counts[j] > 0:
            for d in range(c):
                means[j, d] = sums[j, d] / counts[j]


def kmeans_lloyd(double[:, ::1] points, centroids_in, int max_iter, double tol):
    cdef Py_ssize_t n = points.shape[0], c = points.shape[1]
    cdef Py_ssize_t k = centroids_in.shape[0]
    cents_arr = np.array(centroids_in, dtype=np.float64, order="C", copy=True)
    labels_arr = np.empty(n, dtype=np.int64)
    new_labels_arr = np.empty(n, dtype=np.int64)
    counts_arr = np.empty(k, dtype=np.int64)
    cdef double[:, ::1] cents = cents_arr
    cdef long long[::1] labels = labels_arr
    cdef long long[::1] new_labels = new_labels_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t it, i, j, d, guard, empty_j, far_i
    cdef double shift, diff, acc, best
    cdef bint same, any_empty

    _assign(points, cents, k, labels)
    prev_arr = cents_arr.copy()
    cdef double[:, ::1] prev = prev_arr
    means_arr = cents_arr.copy()
    cdef double[:, ::1] means = means_arr

    for it in range(max_iter):
        for j in range(k):
            for d in range(c):
                means[j, d] = prev[j, d]
        _means(points, labels, k, means, counts)
        guard = 0
        while guard < 2 * k:
            any_empty = False
            empty_j = -1
            for j in range(k):
                if counts[j] == 0:
                    any_empty = True
                    empty_j = j
                    break
            if not any_empty:
                break
            far_i = 0
            best = -1.0
            for i in range(n):
                acc = 0.0
                j = labels[i]
                for d in range(c):
                    diff = points[i, d] - means[j, d]
                    acc += diff * diff
                if acc > best:
                    best = acc
                    far_i = i
            labels[far_i] = empty_j
            _means(points, labels, k, means, counts)
            guard += 1
        _assign(points, means, k, new_labels)
        same = True
        for i in range(n):
            if new_labels[i] != labels[i]:
                same = False
                break
        if same:
            for j in range(k):
                for d in range(c):
                    prev[j, d] = means[j, d]
            break
        shift = 0.0
        for j in range(k):
            for d in range(c):
                diff = means[j, d] - prev[j, d]
                if diff < 0:
                    diff = -diff
                if diff > shift:
                    shift = diff
        for j in range(k):
            for d in range(c):
                prev[j, d] = means[j, d]
        for i in range(n):
            labels[i] = new_labels[i]
        if shift <= tol:
            _means(points, labels, k, prev, counts)
            break
    return labels_arr, prev_arr


def slic_iterate(double[:, ::1] feat, double[:, ::1] pos,
                 labels_in, Py_ssize_t k, double ratio, int iters):
    cdef Py_ssize_t n = feat.shape[0], c = feat.shape[1]
    cdef Py_ssize_t it, i, j, d, best_j, j0, jj
    cdef Py_ssize_t kp = ((k + 7) // 8) * 8  # centers padded to chunks of 8
    labels_arr = np.array(labels_in, dtype=np.int64, copy=True)
    counts_arr = np.empty(k, dtype=np.int64)
    cf_arr = np.zeros((k, c), dtype=np.float64)
    cp_arr = np.zeros((k, 2), dtype=np.float64)
    cdef long long[::1] labels = labels_arr
    cdef long long[::1] counts = counts_arr
    cdef double[:, ::1] cf = cf_arr
    cdef double[:, ::1] cp = cp_arr
    cdef double acc, diff, dist, best
    cdef bint changed
    fnorm2_arr = np.empty(n, dtype=np.float64)
    cnorm2_arr = np.empty(kp, dtype=np.float64)
    cfT_arr = np.zeros((c, kp), dtype=np.float64)
    dots_arr = np.empty(kp, dtype=np.float64)
    cdef double[::1] fnorm2 = fnorm2_arr
    cdef double[::1] cnorm2 = cnorm2_arr
    cdef double[:, ::1] cfT = cfT_arr
    cdef double[::1] dots = dots_arr
    cdef double dr, dc2, d2, v
    cdef double lane[8]
    for i in range(n):
        acc = 0.0
        for d in range(c):
            acc += feat[i, d] * feat[i, d]
        fnorm2[i] = acc
    _means(feat, labels, k, cf, counts)
    _means(pos, labels, k, cp, counts)
    for it in range(iters):
        for j in range(k):
            acc = 0.0
            for d in range(c):
                acc += cf[j, d] * cf[j, d]
                cfT[d, j] = cf[j, d]
            cnorm2[j] = acc
        changed = False
        for i in range(n):
            for j0 in range(0, kp, 8):
                for jj in range(8):
                    lane[jj] = 0.0
                for d in range(c):
                    v = feat[i, d]
                    for jj in range(8):
                        lane[jj] += v * cfT[d, j0 + jj]
                for jj in range(8):
                    dots[j0 + jj] = lane[jj]
            best_j = 0
            best = 0.0
            for j in range(k):
                d2 = fnorm2[i] + cnorm2[j] - 2.0 * dots[j]
                if d2 < 0.0:
                    d2 = 0.0
                dr = pos[i, 0] - cp[j, 0]
                diff = pos[i, 1] - cp[j, 1]
                dc2 = dr * dr + diff * diff
                dist = sqrt(d2) + ratio * sqrt(dc2)
                if j == 0 or dist < best:
                    best = dist
                    best_j = j
            if labels[i] != best_j:
                labels[i] = best_j
                changed = True
        if not changed:
            break  # fixed point; further rounds cannot change anything
        _means(feat, labels, k, cf, counts)
        _means(pos, labels, k, cp, counts)
    return labels_arr


def bilinear_resize(src, Py_ssize_t out_h, Py_ssize_t out_w):
    s_arr = np.asarray(src, dtype=np.float64)
    cdef double[:, :, ::1] s = np.ascontiguousarray(s_arr)
    cdef Py_ssize_t kc = s.shape[0], h = s.shape[1], w = s.shape[2]
    out_arr = np.empty((kc, out_h, out_w), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    ly_arr = np.empty(out_h, dtype=np.int64)
    lx_arr = np.empty(out_w, dtype=np.int64)
    fy_arr = np.empty(out_h, dtype=np.float64)
    fx_arr = np.empty(out_w, dtype=np.float64)
    cdef long long[::1] ly = ly_arr
    cdef long long[::1] lx = lx_arr
    cdef double[::1] fy = fy_arr
    cdef double[::1] fx = fx_arr
    cdef Py_ssize_t i, j, q, y0, y1, x0, x1
    cdef double posn, a, b, cc, dd, v

    _coords(h, out_h, ly, fy)
    _coords(w, out_w, lx, fx)
    for q in range(kc):
        for i in range(out_h):
            y0 = ly[i]
            y1 = y0 + 1
            if y1 > h - 1:
                y1 = h - 1
            for j in range(out_w):
                x0 = lx[j]
                x1 = x0 + 1
                if x1 > w - 1:
                    x1 = w - 1
                a = s[q, y0, x0]
                b = s[q, y0, x1]
                cc = s[q, y1, x0]
                dd = s[q, y1, x1]
                v = (1.0 - fy[i]) * ((1.0 - fx[j]) * a + fx[j] * b) \
                    + fy[i] * ((1.0 - fx[j]) * cc + fx[j] * dd)
                out[q, i, j] = <float> v
    return out_arr


cdef void _coords(Py_ssize_t n_in, Py_ssize_t n_out,
                  long long[::1] lo, double[::1] frac):
    cdef Py_ssize_t i
    cdef double posn, scale
    cdef long long l, cap
    cap = n_in - 2
    if cap < 0:
        cap = 0
    if n_out == 1 or n_in == 1:
        scale = 0.0
    else:
        scale = (<double> (n_in - 1)) / (<double> (n_out - 1))
    for i in range(n_out):
        posn = i * scale
        l = <long long> floor(posn)
        if l < 0:
            l = 0
        if l > cap:
            l = cap
        lo[i] = l
        frac[i] = posn - l
