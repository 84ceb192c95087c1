# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops; see ``_pykernels`` for the reference."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def knn_select(dist2, write_step, valid, Py_ssize_t k):
    cdef double[:, ::1] d = np.ascontiguousarray(dist2, dtype=np.float64)
    cdef long long[:, ::1] ws = np.ascontiguousarray(write_step, dtype=np.int64)
    cdef unsigned char[:, ::1] ok = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef Py_ssize_t nb = d.shape[0], nc = d.shape[1]
    idx_arr = np.full((nb, k), -1, dtype=np.int64)
    cnt_arr = np.zeros(nb, dtype=np.int64)
    cdef long long[:, ::1] idx = idx_arr
    cdef long long[::1] cnt = cnt_arr
    cdef Py_ssize_t b, j, m, pos, n
    cdef double dj
    cdef long long wj
    for b in range(nb):
        n = 0
        for j in range(nc):
            if not ok[b, j]:
                continue
            dj = d[b, j]
            wj = ws[b, j]
            # insertion position among the current n best
            pos = n
            while pos > 0:
                m = idx[b, pos - 1]
                if d[b, m] > dj or (d[b, m] == dj and (ws[b, m] > wj or (ws[b, m] == wj and m > j))):
                    pos -= 1
                else:
                    break
            if pos >= k:
                continue
            m = n if n < k else k - 1
            while m > pos:
                idx[b, m] = idx[b, m - 1]
                m -= 1
            idx[b, pos] = j
            if n < k:
                n += 1
        cnt[b] = n
    return idx_arr, cnt_arr


def vtrace_scan(deltas, discounts, cs):
    cdef double[:, ::1] dl = np.ascontiguousarray(np.asarray(deltas, dtype=np.float64).reshape(len(deltas), -1))
    cdef double[:, ::1] dc = np.ascontiguousarray(np.asarray(discounts, dtype=np.float64).reshape(len(deltas), -1))
    cdef double[:, ::1] c = np.ascontiguousarray(np.asarray(cs, dtype=np.float64).reshape(len(deltas), -1))
    cdef Py_ssize_t nt = dl.shape[0], nb = dl.shape[1], t, b
    out_arr = np.zeros((nt, nb), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double acc
    for b in range(nb):
        acc = 0.0
        for t in range(nt - 1, -1, -1):
            acc = dl[t, b] + dc[t, b] * c[t, b] * acc
            out[t, b] = acc
    return out_arr.reshape(np.shape(deltas))


def ewma(x, double alpha):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xv.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    if n == 0:
        return out_arr
    cdef double[::1] out = out_arr
    cdef double s = xv[0]
    out[0] = s
    for i in range(1, n):
        s = alpha * xv[i] + (1.0 - alpha) * s
        out[i] = s
    return out_arr


def rolling_mean(x, Py_ssize_t window):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xv.shape[0], i, j
    cdef double acc
    if n == 0:
        return np.empty(0)
    if n < window:
        return np.array([np.asarray(xv).mean()])
    out_arr = np.empty(n - window + 1, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n - window + 1):
        # direct sum per window keeps results identical to the numpy reference
        acc = 0.0
        for j in range(i, i + window):
            acc += xv[j]
        out[i] = acc / window
    return out_arr


def distance_field(next_state, goal_mask):
    cdef long long[:, ::1] nxt = np.ascontiguousarray(next_state, dtype=np.int64)
    cdef unsigned char[::1] goal = np.ascontiguousarray(goal_mask, dtype=np.uint8)
    cdef Py_ssize_t n = nxt.shape[0], na = nxt.shape[1], s, a, head = 0, tail = 0
    cdef long long t, u
    dist_arr = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] dist = dist_arr
    # reverse adjacency in CSR form, then breadth-first search from the goal set
    indeg_arr = np.zeros(n + 1, dtype=np.int64)
    cdef long long[::1] indeg = indeg_arr
    for s in range(n):
        for a in range(na):
            indeg[nxt[s, a] + 1] += 1
    for s in range(n):
        indeg[s + 1] += indeg[s]
    fill_arr = indeg_arr[:-1].copy()
    cdef long long[::1] fill = fill_arr
    pred_arr = np.empty(n * na, dtype=np.int64)
    cdef long long[::1] pred = pred_arr
    for s in range(n):
        for a in range(na):
            t = nxt[s, a]
            pred[fill[t]] = s
            fill[t] += 1
    queue_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] queue = queue_arr
    for s in range(n):
        if goal[s]:
            dist[s] = 0
            queue[tail] = s
            tail += 1
    while head < tail:
        t = queue[head]
        head += 1
        for u in range(indeg[t], indeg[t + 1]):
            s = pred[u]
            if dist[s] < 0:
                dist[s] = dist[t] + 1
                queue[tail] = s
                tail += 1
    return dist_arr
