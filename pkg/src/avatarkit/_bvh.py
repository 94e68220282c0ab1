"""Flat-array median-split BVH over triangles (shared by the native
kernels; built once per mesh in numpy)."""

import numpy as np


def build_bvh(verts, tris, leaf_size=8):
    """Median-split BVH over triangles, packed into flat arrays.

    Returns dict with node bounds, children (leaf encoded as
    (-start-1, count) into tri_order), and the triangle order.
    """
    tv = verts[tris]
    tmin = tv.min(axis=1)
    tmax = tv.max(axis=1)
    centroids = tv.mean(axis=1)

    order = np.arange(len(tris))
    nodes_bmin, nodes_bmax, child_a, child_b = [], [], [], []

    def build(idx):
        node = len(nodes_bmin)
        nodes_bmin.append(tmin[idx].min(axis=0))
        nodes_bmax.append(tmax[idx].max(axis=0))
        child_a.append(0)
        child_b.append(0)
        if len(idx) <= leaf_size:
            start = build.cursor
            order[start:start + len(idx)] = idx
            build.cursor += len(idx)
            child_a[node] = -start - 1
            child_b[node] = len(idx)
            return node
        c = centroids[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        half = len(idx) // 2
        part = idx[np.argpartition(c[:, axis], half)]
        left = build(part[:half])
        right = build(part[half:])
        child_a[node] = left
        child_b[node] = right
        return node

    build.cursor = 0
    build(np.arange(len(tris)))
    return {
        "bmin": np.ascontiguousarray(nodes_bmin, dtype=np.float64),
        "bmax": np.ascontiguousarray(nodes_bmax, dtype=np.float64),
        "child_a": np.ascontiguousarray(child_a, dtype=np.int32),
        "child_b": np.ascontiguousarray(child_b, dtype=np.int32),
        "order": np.ascontiguousarray(order, dtype=np.int32),
    }
