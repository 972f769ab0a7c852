"""Hot numeric kernels: Mahalanobis scan, box membership, Lloyd iterations.

Each kernel has a numba @njit implementation and a pure-numpy fallback.
The fallback is selected when numba is unavailable or when the
environment variable OMSBENCH_DISABLE_NUMBA is set to a non-empty value
other than "0". `benchmarks/bench_kernels.py` compares the two paths.
"""

import os

import numpy as np

__all__ = [
    "USING_NUMBA",
    "mahalanobis_min_sq",
    "outside_boxes",
    "lloyd",
]


def _numba_disabled_by_env() -> bool:
    return os.environ.get("OMSBENCH_DISABLE_NUMBA", "").strip() not in ("", "0")


# ---------------------------------------------------------------- numpy path


def _mahalanobis_min_sq_numpy(x, means, inv_cov):
    # (N, K, d) deviation tensor; fine at the sample counts this package targets
    diffs = x[:, None, :] - means[None, :, :]
    quad = np.einsum("nkd,de,nke->nk", diffs, inv_cov, diffs)
    return quad.min(axis=1)


def _outside_boxes_numpy(x, lowers, uppers, box_classes, pred):
    inside_any = np.zeros(x.shape[0], dtype=bool)
    for b in range(lowers.shape[0]):
        in_box = np.all((x >= lowers[b]) & (x <= uppers[b]), axis=1)
        inside_any |= in_box & (pred == box_classes[b])
    return (~inside_any).astype(np.float64)


def _lloyd_numpy(x, centers, max_iter):
    n = x.shape[0]
    k = centers.shape[0]
    centers = centers.copy()
    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        # argmin picks the lowest cluster index on exact distance ties
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = x[labels == c]
            if members.shape[0] > 0:
                centers[c] = members.mean(axis=0)
    return labels


# ---------------------------------------------------------------- numba path

_HAVE_NUMBA = False
if not _numba_disabled_by_env():
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True)
    def _mahalanobis_min_sq_numba(x, means, inv_cov):  # pragma: no cover - jit
        n, d = x.shape
        k = means.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            best = np.inf
            for c in range(k):
                acc = 0.0
                for a in range(d):
                    row = 0.0
                    for b in range(d):
                        row += inv_cov[a, b] * (x[i, b] - means[c, b])
                    acc += (x[i, a] - means[c, a]) * row
                if acc < best:
                    best = acc
            out[i] = best
        return out

    @njit(cache=True)
    def _outside_boxes_numba(x, lowers, uppers, box_classes, pred):  # pragma: no cover - jit
        n, d = x.shape
        nb = lowers.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            inside_any = False
            for b in range(nb):
                if box_classes[b] != pred[i]:
                    continue
                inside = True
                for a in range(d):
                    v = x[i, a]
                    if v < lowers[b, a] or v > uppers[b, a]:
                        inside = False
                        break
                if inside:
                    inside_any = True
                    break
            out[i] = 0.0 if inside_any else 1.0
        return out

    @njit(cache=True)
    def _lloyd_numba(x, centers_in, max_iter):  # pragma: no cover - jit
        n, d = x.shape
        k = centers_in.shape[0]
        centers = centers_in.copy()
        labels = np.full(n, -1, dtype=np.int64)
        sums = np.zeros((k, d), dtype=np.float64)
        counts = np.zeros(k, dtype=np.int64)
        for _ in range(max_iter):
            changed = False
            for i in range(n):
                best = np.inf
                bi = 0
                for c in range(k):
                    dist = 0.0
                    for a in range(d):
                        diff = x[i, a] - centers[c, a]
                        dist += diff * diff
                    if dist < best:  # strict: ties keep the lowest index
                        best = dist
                        bi = c
                if labels[i] != bi:
                    labels[i] = bi
                    changed = True
            if not changed:
                break
            sums[:, :] = 0.0
            counts[:] = 0
            for i in range(n):
                counts[labels[i]] += 1
                for a in range(d):
                    sums[labels[i], a] += x[i, a]
            for c in range(k):
                if counts[c] > 0:
                    for a in range(d):
                        centers[c, a] = sums[c, a] / counts[c]
        return labels


USING_NUMBA = _HAVE_NUMBA


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def mahalanobis_min_sq(x, means, inv_cov):
    """Per-row min over classes of (x - mu_k)^T inv_cov (x - mu_k)."""
    x = _as_f64(x)
    means = _as_f64(means)
    inv_cov = _as_f64(inv_cov)
    if USING_NUMBA:
        return _mahalanobis_min_sq_numba(x, means, inv_cov)
    return _mahalanobis_min_sq_numpy(x, means, inv_cov)


def outside_boxes(x, lowers, uppers, box_classes, pred):
    """1.0 where the row lies outside every box of its predicted class, else 0.0."""
    x = _as_f64(x)
    lowers = _as_f64(lowers)
    uppers = _as_f64(uppers)
    box_classes = np.ascontiguousarray(box_classes, dtype=np.int64)
    pred = np.ascontiguousarray(pred, dtype=np.int64)
    if USING_NUMBA:
        return _outside_boxes_numba(x, lowers, uppers, box_classes, pred)
    return _outside_boxes_numpy(x, lowers, uppers, box_classes, pred)


def lloyd(x, init_centers, max_iter=100):
    """Lloyd k-means iterations from fixed initial centers; returns labels.

    Assignment ties break to the lowest cluster index; clusters that empty
    out keep their previous center, so the result is fully deterministic.
    """
    x = _as_f64(x)
    init_centers = _as_f64(init_centers)
    if USING_NUMBA:
        return _lloyd_numba(x, init_centers, max_iter)
    return _lloyd_numpy(x, init_centers, max_iter)


def farthest_point_init(x, k):
    """Deterministic k-means seeding: start at the point farthest from the
    centroid, then repeatedly take the point farthest from the chosen set.
    Ties break to the lowest sample index."""
    x = _as_f64(x)
    d2 = ((x - x.mean(axis=0)) ** 2).sum(axis=1)
    chosen = [int(np.argmax(d2))]
    min_d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(min_d2))
        chosen.append(nxt)
        min_d2 = np.minimum(min_d2, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[np.array(chosen, dtype=np.int64)]
