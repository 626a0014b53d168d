"""Pure-Python graph-segmentation kernel; reference for the compiled one."""
import numpy as np


def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def fh_merge(a, b, w, n_vertices, k, min_size):
    """Union-find pass over edges pre-sorted by weight.

    Returns a dense label per vertex, numbered by first appearance.
    """
    a = np.asarray(a, dtype=np.int64).tolist()
    b = np.asarray(b, dtype=np.int64).tolist()
    w = np.asarray(w, dtype=np.float64).tolist()
    n = int(n_vertices)
    parent = list(range(n))
    rank = [0] * n
    size = [1] * n
    thresh = [float(k)] * n

    def join(x, y):
        if rank[x] > rank[y]:
            x, y = y, x
        parent[x] = y
        size[y] += size[x]
        if rank[x] == rank[y]:
            rank[y] += 1
        return y

    for i in range(len(a)):
        ra = _find(parent, a[i])
        rb = _find(parent, b[i])
        if ra != rb and w[i] <= thresh[ra] and w[i] <= thresh[rb]:
            root = join(ra, rb)
            thresh[root] = w[i] + k / size[root]

    changed = True
    while changed:
        changed = False
        for i in range(len(a)):
            ra = _find(parent, a[i])
            rb = _find(parent, b[i])
            if ra != rb and (size[ra] < min_size or size[rb] < min_size):
                join(ra, rb)
                changed = True

    labels = np.empty(n, dtype=np.int64)
    remap = {}
    for v in range(n):
        r = _find(parent, v)
        lab = remap.get(r)
        if lab is None:
            lab = remap[r] = len(remap)
        labels[v] = lab
    return labels
