"""Pure numpy implementations of the numeric kernels.

This is the fallback backend used when the compiled extension is not
available (or is disabled via PARTPROTO_FORCE_FALLBACK=1). All
accumulation happens in float64; float32 rounding is applied only at
the documented output boundaries so both backends agree to within a
few ulp.
"""

import numpy as np

BACKEND_NAME = "numpy"


def cosine_parts(a, b):
    """Raw dot products and Euclidean norms for a cosine matrix.

    a: (N, C) float64, b: (M, C) float64.
    Returns (dots (N, M), a_norms (N,), b_norms (M,)), all float64.
    """
    dots = a @ b.T
    na = np.sqrt(np.einsum("ij,ij->i", a, a))
    nb = np.sqrt(np.einsum("ij,ij->i", b, b))
    return dots, na, nb


def sqdist_matrix(a, b):
    """Pairwise squared Euclidean distances, (N, K) float64, clamped at 0."""
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    d = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d


def _group_means(x, labels, k, fallback):
    """Per-group means of x; groups with no members keep `fallback` rows."""
    ind = np.zeros((k, labels.shape[0]))
    ind[labels, np.arange(labels.shape[0])] = 1.0
    counts = np.bincount(labels, minlength=k)
    sums = ind @ x
    means = fallback.copy()
    nz = counts > 0
    means[nz] = sums[nz] / counts[nz, None]
    return means, counts.astype(np.int64)


def kmeans_lloyd(points, centroids, max_iter, tol):
    """Lloyd iterations from the given initial centroids.

    points: (N, C) float64, centroids: (K, C) float64 (consumed, not
    mutated). Ties in the assignment break toward the lowest centroid
    index. A cluster that empties is re-seeded from the point farthest
    from its currently assigned centroid. Returns (labels, centroids)
    at a fixed point: centroids are the means of their members and no
    point prefers another centroid (the rare tol-triggered early stop
    keeps the mean property and skips only the final reassignment).
    """
    n, _ = points.shape
    k = centroids.shape[0]
    labels = np.argmin(sqdist_matrix(points, centroids), axis=1)
    prev = np.asarray(centroids, dtype=np.float64)
    for _ in range(max_iter):
        means, counts = _group_means(points, labels, k, prev)
        guard = 0
        while (counts == 0).any() and guard < 2 * k:
            j = int(np.flatnonzero(counts == 0)[0])
            own = points - means[labels]
            d_own = np.einsum("ij,ij->i", own, own)
            i = int(np.argmax(d_own))
            labels[i] = j
            means, counts = _group_means(points, labels, k, means)
            guard += 1
        new_labels = np.argmin(sqdist_matrix(points, means), axis=1)
        if np.array_equal(new_labels, labels):
            prev = means
            break
        shift = float(np.max(np.abs(means - prev)))
        prev = means
        labels = new_labels
        if shift <= tol:
            prev, _ = _group_means(points, labels, k, prev)
            break
    return labels, prev


def slic_iterate(feat, pos, labels, k, ratio, iters):
    """Alternating assign/update rounds of the feature-space SLIC loop.

    feat: (N, C) float64 cell features, pos: (N, 2) float64 cell
    coordinates, labels: (N,) int64 initial assignment covering all of
    0..k-1. Distance is ||df|| + ratio * ||dpos||; ties break toward
    the lowest center index. Centers of emptied regions stay in place.
    """
    cf, _ = _group_means(feat, labels, k, np.zeros((k, feat.shape[1])))
    cp, _ = _group_means(pos, labels, k, np.zeros((k, 2)))
    for _ in range(iters):
        d = np.sqrt(sqdist_matrix(feat, cf)) + ratio * np.sqrt(sqdist_matrix(pos, cp))
        new_labels = np.argmin(d, axis=1)
        if np.array_equal(new_labels, labels):
            break  # fixed point; further rounds cannot change anything
        labels = new_labels
        cf, _ = _group_means(feat, labels, k, cf)
        cp, _ = _group_means(pos, labels, k, cp)
    return labels


def bilinear_resize(src, out_h, out_w):
    """Align-corners bilinear resize of a (K, H, W) float32 stack.

    Interpolation order is fixed so backends agree bit for bit:
    v = (1-fy) * ((1-fx)*a + fx*b) + fy * ((1-fx)*c + fx*d) in float64,
    rounded to float32 at the end.
    """
    s = np.asarray(src, dtype=np.float64)
    _, h, w = s.shape
    ly, fy = _axis_coords(h, out_h)
    lx, fx = _axis_coords(w, out_w)
    hy = np.minimum(ly + 1, h - 1)
    hx = np.minimum(lx + 1, w - 1)
    a = s[:, ly][:, :, lx]
    b = s[:, ly][:, :, hx]
    c = s[:, hy][:, :, lx]
    d = s[:, hy][:, :, hx]
    fy = fy[None, :, None]
    fx = fx[None, None, :]
    out = (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)
    return out.astype(np.float32)


def _axis_coords(n_in, n_out):
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out, dtype=np.float64)
    else:
        pos = np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))
    lo = np.floor(pos).astype(np.int64)
    np.clip(lo, 0, max(n_in - 2, 0), out=lo)
    frac = pos - lo
    return lo, frac
