"""Slow, independent reference computations used only by the tests."""

import itertools

import numpy as np

from owarank.policy import dcg, perm_matrix


def naive_pool_nonincreasing(s):
    """Isotonic fit by repeatedly pooling the first violating pair of blocks."""
    blocks = [[float(v)] for v in s]
    changed = True
    while changed:
        changed = False
        for i in range(len(blocks) - 1):
            if np.mean(blocks[i]) < np.mean(blocks[i + 1]):
                blocks[i] = blocks[i] + blocks.pop(i + 1)
                changed = True
                break
    return np.concatenate([[np.mean(b)] * len(b) for b in blocks])


def permutahedron_vertices(w):
    return np.array([np.asarray(w)[list(p)] for p in itertools.permutations(range(len(w)))])


def moreau_owa(w, x, beta):
    """``max_y min_sigma w_sigma @ y - |y - x|^2 / (2 beta)`` solved as a QP with one cut per permutation."""
    import cvxpy as cp

    m = len(x)
    y = cp.Variable(m)
    z = cp.Variable()
    cons = [z <= row @ y for row in permutahedron_vertices(w)]
    prob = cp.Problem(cp.Maximize(z - cp.sum_squares(y - x) / (2 * beta)), cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-14, tol_gap_rel=1e-14, tol_feas=1e-14)
    return prob.value


def all_orders(n):
    return [np.array(p) for p in itertools.permutations(range(n))]


def best_vertex(scores, b):
    """Permutation maximizing ``<P, scores b^T>`` by enumeration."""
    return max(all_orders(len(scores)), key=lambda o: dcg(o, scores, b))


def exact_lambda0_subgradient(y_hat, y, b):
    """SPO+ subgradient at lambda = 0 from exhaustive argmax solves."""
    plus = perm_matrix(best_vertex(2 * np.asarray(y_hat) - y, b))
    star = perm_matrix(best_vertex(np.asarray(y, dtype=float), b))
    return (plus - star) @ b
