# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph-segmentation kernel. Same contract as ``_pyfh.fh_merge``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t x) noexcept nogil:
    cdef Py_ssize_t root = x, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


cdef inline Py_ssize_t _join(Py_ssize_t[::1] parent, Py_ssize_t[::1] rank,
                             Py_ssize_t[::1] size, Py_ssize_t x, Py_ssize_t y) noexcept nogil:
    cdef Py_ssize_t t
    if rank[x] > rank[y]:
        t = x
        x = y
        y = t
    parent[x] = y
    size[y] += size[x]
    if rank[x] == rank[y]:
        rank[y] += 1
    return y


def fh_merge(a, b, w, Py_ssize_t n_vertices, double k, Py_ssize_t min_size):
    cdef cnp.int64_t[::1] ea = np.ascontiguousarray(a, dtype=np.int64)
    cdef cnp.int64_t[::1] eb = np.ascontiguousarray(b, dtype=np.int64)
    cdef double[::1] ew = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n_edges = ea.shape[0]
    cdef Py_ssize_t[::1] parent = np.arange(n_vertices, dtype=np.intp)
    cdef Py_ssize_t[::1] rank = np.zeros(n_vertices, dtype=np.intp)
    cdef Py_ssize_t[::1] size = np.ones(n_vertices, dtype=np.intp)
    cdef double[::1] thresh = np.full(n_vertices, k, dtype=np.float64)
    cdef cnp.int64_t[::1] labels = np.empty(n_vertices, dtype=np.int64)
    cdef cnp.int64_t[::1] remap = np.full(n_vertices, -1, dtype=np.int64)
    cdef Py_ssize_t i, ra, rb, root, v
    cdef cnp.int64_t next_label = 0
    cdef bint changed = True

    with nogil:
        for i in range(n_edges):
            ra = _find(parent, ea[i])
            rb = _find(parent, eb[i])
            if ra != rb and ew[i] <= thresh[ra] and ew[i] <= thresh[rb]:
                root = _join(parent, rank, size, ra, rb)
                thresh[root] = ew[i] + k / size[root]

        while changed:
            changed = False
            for i in range(n_edges):
                ra = _find(parent, ea[i])
                rb = _find(parent, eb[i])
                if ra != rb and (size[ra] < min_size or size[rb] < min_size):
                    _join(parent, rank, size, ra, rb)
                    changed = True

        for v in range(n_vertices):
            root = _find(parent, v)
            if remap[root] < 0:
                remap[root] = next_label
                next_label += 1
            labels[v] = remap[root]

    return np.asarray(labels)
