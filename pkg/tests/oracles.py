"""Independent geometric oracles shared by the test modules."""
from __future__ import annotations

import numpy as np


def hull_vertices(p):
    """Andrew's monotone chain, CCW, collinear points dropped."""
    order = np.lexsort((p[:, 1], p[:, 0]))

    def half(idx):
        out = []
        for i in idx:
            while len(out) >= 2:
                a, b = p[out[-2]], p[out[-1]]
                if (b[0] - a[0]) * (p[i][1] - a[1]) - (b[1] - a[1]) * (p[i][0] - a[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(i)
        return out

    lower, upper = half(order), half(order[::-1])
    return lower[:-1] + upper[:-1]


def boundary_edges(tris):
    edges = {}
    for t in tris:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    return {e for e, c in edges.items() if c == 1}


def circumcircle_violations(p, tris, rel=1e-9):
    """Brute force: every vertex against every triangle's circumcircle."""
    bad = 0
    for t in tris:
        a, b, c = p[t]
        d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        ux = ((a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1]) + (c @ c) * (a[1] - b[1])) / d
        uy = ((a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0]) + (c @ c) * (b[0] - a[0])) / d
        r2 = (a[0] - ux) ** 2 + (a[1] - uy) ** 2
        dist2 = (p[:, 0] - ux) ** 2 + (p[:, 1] - uy) ** 2
        mask = np.ones(len(p), bool)
        mask[t] = False
        bad += int((dist2[mask] < r2 * (1 - rel)).sum())
    return bad


def hull_edge_set(p):
    hull = hull_vertices(p)
    return {tuple(sorted((hull[i], hull[(i + 1) % len(hull)]))) for i in range(len(hull))}
