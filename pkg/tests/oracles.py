"""Independent reference implementations used only by the test suite.

Everything here is deliberately written the slow, obvious way (scalar loops,
full enumeration) so it shares no code path with the package.
"""
import math

import numpy as np


def naive_forward(weights, activations, x):
    """Per-neuron scalar evaluation of the feedforward stack."""
    a = [float(v) for v in x]
    for w, act in zip(weights, activations):
        out_dim, in_dim = w.shape
        z = []
        for i in range(out_dim):
            s = 0.0
            for j in range(in_dim):
                s += float(w[i, j]) * a[j]
            z.append(s)
        if act == "relu":
            a = [v if v > 0 else 0.0 for v in z]
        elif act == "sigmoid":
            a = [1.0 / (1.0 + math.exp(-v)) for v in z]
        elif act == "identity":
            a = z
        else:
            raise ValueError(act)
    return np.array(a)


def fd_gradient(loss_fn, params, step=1e-5):
    """Central finite differences of a scalar loss over every weight entry."""
    grads = []
    for w in params.weights:
        g = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + step
            up = loss_fn(params)
            w[idx] = orig - step
            down = loss_fn(params)
            w[idx] = orig
            g[idx] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def jacobi_svd_values(mat, sweeps=60, tol=1e-14):
    """Singular values by one-sided Jacobi rotations on the columns."""
    a = np.array(mat, dtype=np.float64)
    if a.shape[0] < a.shape[1]:
        a = a.T
    m, n = a.shape
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = float(a[:, p] @ a[:, p])
                beta = float(a[:, q] @ a[:, q])
                g = float(a[:, p] @ a[:, q])
                off = max(off, abs(g) / math.sqrt(alpha * beta) if alpha * beta > 0 else 0.0)
                if g == 0.0:
                    continue
                zeta = (beta - alpha) / (2.0 * g)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                col_p = a[:, p].copy()
                a[:, p] = c * col_p - s * a[:, q]
                a[:, q] = s * col_p + c * a[:, q]
        if off < tol:
            break
    values = np.sqrt(np.sum(a * a, axis=0))
    return np.sort(values)[::-1]


def counting_margin_loss(x, xhat, gamma):
    """Literal per-entry count of margin failures."""
    threshold = 0.5 - gamma
    bad = 0
    for xv, pv in zip(x, xhat):
        if abs(float(xv) - float(pv)) > threshold:
            bad += 1
    return bad / len(x)


def brute_force_cluster_margin(points, ids):
    """All-pairs minimum inter-cluster distance."""
    n = len(points)
    best = math.inf
    pair = None
    for i in range(n):
        for j in range(i + 1, n):
            if ids[i] == ids[j]:
                continue
            d = float(np.sqrt(np.sum((points[i] - points[j]) ** 2)))
            if d < best:
                best = d
                pair = (i, j)
    return best, pair


def scan_knn_predict(labeled_points, labeled_labels, k, query):
    """O(nk) selection-scan k-NN vote with lowest-index and lowest-label ties."""
    d = [float(np.sqrt(np.sum((p - query) ** 2))) for p in labeled_points]
    taken = []
    for _ in range(k):
        best_i = None
        for i in range(len(d)):
            if i in taken:
                continue
            if best_i is None or d[i] < d[best_i]:
                best_i = i
        taken.append(best_i)
    votes = {}
    for i in taken:
        lbl = int(labeled_labels[i])
        votes[lbl] = votes.get(lbl, 0) + 1
    top = max(votes.values())
    return min(l for l, c in votes.items() if c == top)
