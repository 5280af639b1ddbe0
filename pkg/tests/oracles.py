"""Reference computations used by the tests.

Deliberately plain Python (lists, loops) so they share no code path with the
numpy implementations they check.
"""

from __future__ import annotations

import math


def dot(u, v):
    return sum(a * b for a, b in zip(u, v))


def connected_components(vectors, eps):
    """Components of the graph with an edge wherever 1 - cos <= eps.

    Returns a list of frozensets of point indices.
    """
    vecs = [list(map(float, v)) for v in vectors]
    n = len(vecs)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if 1.0 - dot(vecs[i], vecs[j]) <= eps:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), set()).add(i)
    return sorted((frozenset(g) for g in groups.values()), key=min)


def partition(labels):
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, set()).add(i)
    return sorted((frozenset(g) for g in groups.values()), key=min)


def dense_pagerank(weights, damping=0.85, tol=1e-6, max_iter=200):
    """TextRank recurrence with nested loops; dangling nodes spread over the others."""
    n = len(weights)
    out = [sum(weights[j][k] for k in range(n) if k != j) for j in range(n)]
    scores = [1.0] * n
    for _ in range(max_iter):
        new = []
        for i in range(n):
            acc = 0.0
            for j in range(n):
                if j == i:
                    continue
                share = weights[j][i] / out[j] if out[j] > 0 else 1.0 / (n - 1)
                acc += share * scores[j]
            new.append((1 - damping) + damping * acc)
        delta = max(abs(a - b) for a, b in zip(new, scores))
        scores = new
        if delta < tol:
            break
    return scores


def brute_force_score(i, members):
    """members: list of (aspect, polarity) pairs."""
    a_i, s_i = members[i]
    return sum(s_i * s_j for j, (a_j, s_j) in enumerate(members) if j != i and a_j == a_i)


def gram_to_vectors(gram):
    """Cholesky factor rows: unit vectors whose pairwise dots equal ``gram``."""
    n = len(gram)
    L = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1):
            s = gram[i][j] - sum(L[i][k] * L[j][k] for k in range(j))
            L[i][j] = math.sqrt(s) if i == j else s / L[j][j]
    return L
