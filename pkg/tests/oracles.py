"""Slow reference implementations used as test oracles."""

import itertools

import numpy as np


def brute_dbscan(points, eps, min_pts, w):
    """Labels from an O(n^2) neighbourhood table.

    Core points are joined into components through core-core edges; clusters
    are numbered by their lowest-index core point and a border point takes
    the lowest-numbered cluster among its core neighbours.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    w = np.asarray(w, dtype=float)
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            d = pts[i] - pts[j]
            adj[i, j] = float(np.dot(w, d * d)) <= eps * eps
    core = adj.sum(axis=1) >= min_pts

    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if core[i] and core[j] and adj[i, j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    comp_id = {}
    labels = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if core[i]:
            r = find(i)
            if r not in comp_id:
                comp_id[r] = len(comp_id)
            labels[i] = comp_id[r]
    for i in range(n):
        if not core[i]:
            cands = [labels[j] for j in range(n) if core[j] and adj[i, j]]
            if cands:
                labels[i] = min(cands)
    return labels


def path_score(path, log_init, log_emis, log_trans1, log_trans2=None, orders=None):
    s = log_init[path[0]] + log_emis[0][path[0]]
    for t in range(1, len(path)):
        if orders is not None and orders[t] and t >= 2:
            s += log_trans2[t][path[t - 2], path[t - 1], path[t]]
        else:
            s += log_trans1[t][path[t - 1], path[t]]
        s += log_emis[t][path[t]]
    return s


def enumerate_best(log_init, log_emis, log_trans1, log_trans2=None, orders=None):
    """Best log score over every state sequence, and the set of paths reaching it."""
    sizes = [len(e) for e in log_emis]
    best, arg = -np.inf, []
    for path in itertools.product(*[range(s) for s in sizes]):
        s = path_score(path, log_init, log_emis, log_trans1, log_trans2, orders)
        if s > best:
            best, arg = s, [path]
        elif s == best:
            arg.append(path)
    return best, arg


def brute_matching_cost(cost):
    """Minimum total cost of a one-to-one matching of the smaller side."""
    cost = np.asarray(cost, dtype=float)
    r, c = cost.shape
    if r > c:
        cost = cost.T
        r, c = c, r
    return min(sum(cost[i, p[i]] for i in range(r)) for p in itertools.permutations(range(c), r))


def grad_rel_error(a, b, floor: float = 1e-8) -> float:
    """|a - b| / max(|a|, |b|, floor); the floor keeps exact zeros comparable."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_check(loss, arrays, analytic, rng, n_per_array: int = 12, h: float = 1e-5) -> float:
    """Largest relative error between central differences of scalar ``loss()``
    and ``analytic`` gradients, over a random sample of entries of each array.

    ``arrays`` and ``analytic`` are parallel lists; arrays are perturbed in place.
    """
    worst = 0.0
    for arr, g in zip(arrays, analytic):
        flat = rng.choice(arr.size, size=min(n_per_array, arr.size), replace=False)
        for k in flat:
            idx = np.unravel_index(int(k), arr.shape)
            old = arr[idx]
            arr[idx] = old + h
            fp = loss()
            arr[idx] = old - h
            fm = loss()
            arr[idx] = old
            worst = max(worst, grad_rel_error((fp - fm) / (2 * h), g[idx]))
    return worst


def layer_fd_error(layer, x, rng) -> float:
    """Check input and parameter gradients of a layer on the scalar sum(R * y)."""
    y = layer.forward(x)
    R = rng.normal(size=y.shape)
    dx = layer.backward(R)
    names = list(layer.params)
    grads = [layer.grads[k].copy() for k in names]

    def loss():
        return float(np.sum(R * layer.forward(x)))

    return fd_check(loss, [x] + [layer.params[k] for k in names], [dx] + grads, rng)
