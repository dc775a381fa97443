"""Independent reference computations used by the tests.

These deliberately take different routes from the package: scalar
``math`` geometry instead of vectorized tables, normal equations instead of
the SVD, exact fractions for boosting, and exhaustive search for SVM duals.
"""

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import linalg


# ------------------------------------------------------------------ geometry

def wrap(x):
    while x <= -math.pi:
        x += 2 * math.pi
    while x > math.pi:
        x -= 2 * math.pi
    return x


def triangle_oracle(frames, i, j, k):
    """Per-frame (a, b, alpha, beta) deltas for one triangle from first principles.

    The included angle comes from the law of cosines, the base angle from
    ``math.atan2``; ``frames`` is a list of lists of (x, y) tuples.
    """
    comps = []
    for f in frames:
        (xi, yi), (xj, yj), (xk, yk) = f[i], f[j], f[k]
        a = math.dist((xi, yi), (xj, yj))
        b = math.dist((xi, yi), (xk, yk))
        c = math.dist((xj, yj), (xk, yk))
        cos_alpha = max(-1.0, min(1.0, (a * a + b * b - c * c) / (2 * a * b)))
        alpha = math.acos(cos_alpha)
        beta = math.atan2(yj - yi, xj - xi)
        comps.append((a, b, alpha, beta))
    a0, b0, al0, be0 = comps[0]
    return [(a - a0, b - b0, wrap(al - al0), wrap(be - be0)) for a, b, al, be in comps[1:]]


def line_oracle(frames, i, j):
    out = []
    d0 = math.dist(frames[0][i], frames[0][j])
    t0 = math.atan2(frames[0][j][1] - frames[0][i][1], frames[0][j][0] - frames[0][i][0])
    for f in frames[1:]:
        d = math.dist(f[i], f[j])
        t = math.atan2(f[j][1] - f[i][1], f[j][0] - f[i][0])
        out.append((d - d0, wrap(t - t0)))
    return out


# ----------------------------------------------------------------------- ELM

def elm_normal_equations(X, labels, n_hidden, seed, n_classes, weights=None):
    """Output weights from ``(H^T W H) beta = H^T W T`` with a dense LU solve."""
    rng = np.random.default_rng(seed)
    W = rng.uniform(-1.0, 1.0, size=(n_hidden, X.shape[1]))
    b = rng.uniform(-1.0, 1.0, size=n_hidden)
    H = 1.0 / (1.0 + np.exp(-(X @ W.T + b)))
    T = np.zeros((len(labels), n_classes))
    for r, c in enumerate(labels):
        T[r, c] = 1.0
    w = np.ones(len(labels)) if weights is None else np.asarray(weights, dtype=float)
    A = H.T @ (w[:, None] * H)
    rhs = H.T @ (w[:, None] * T)
    return linalg.solve(A, rhs, assume_a="gen")


# --------------------------------------------------------------------- SAMME

EPS = Fraction(1, 10**10)


def samme_trace(predictions, labels, M, K):
    """Exact-arithmetic SAMME over a small prediction table.

    Returns ``[(column, err, alpha), ...]``; ties go to the lowest column.
    Weights are kept as fractions and err is clamped to [1e-10, 1 - 1e-10];
    the update multiplies by ``(1 - err) / err * (K - 1)`` so it stays exact.
    """
    n = len(labels)
    w = [Fraction(1, n)] * n
    used = set()
    trace = []
    for _ in range(M):
        total = sum(w)
        w = [x / total for x in w]
        best = None
        for c in range(len(predictions[0])):
            if c in used:
                continue
            err = sum(w[i] for i in range(n) if predictions[i][c] != labels[i])
            if best is None or err < best[1]:
                best = (c, err)
        if best is None or best[1] >= 1 - Fraction(1, K):
            break
        c, err = best
        e = min(max(err, EPS), 1 - EPS)
        factor = (1 - e) / e * (K - 1)
        w = [w[i] * (factor if predictions[i][c] != labels[i] else 1) for i in range(n)]
        used.add(c)
        trace.append((c, err, math.log(factor)))
    return trace


# ----------------------------------------------------------------------- SVM

def dual_value(alpha, y, K):
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def svm_dual_active_set(K, y, C):
    """Exact optimum of the binary SVM dual by enumerating active sets.

    Every variable is at 0, at C, or free; for each pattern the free part
    solves the equality-constrained stationarity system. Feasible patterns
    are scored and the best objective is returned.
    """
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    best = -np.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        alpha = np.zeros(n)
        free = [i for i, s in enumerate(pattern) if s == 2]
        for i, s in enumerate(pattern):
            if s == 1:
                alpha[i] = C
        if free:
            fixed = [i for i in range(n) if pattern[i] != 2]
            f = np.array(free)
            # [Q_ff  -y_f] [a_f]   [1 - Q_fb a_b]
            # [y_f^T   0 ] [ b ] = [ -y_b^T a_b  ]
            A = np.zeros((len(f) + 1, len(f) + 1))
            A[:-1, :-1] = Q[np.ix_(f, f)]
            A[:-1, -1] = -y[f]
            A[-1, :-1] = y[f]
            rhs = np.empty(len(f) + 1)
            rhs[:-1] = 1.0 - Q[np.ix_(f, fixed)] @ alpha[fixed] if fixed else 1.0
            rhs[-1] = -(y[fixed] @ alpha[fixed]) if fixed else 0.0
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            alpha[f] = sol[:-1]
        if np.any(alpha < -1e-9) or np.any(alpha > C + 1e-9) or abs(alpha @ y) > 1e-9:
            continue
        best = max(best, dual_value(np.clip(alpha, 0, C), y, K))
    return best


def svm_dual_grid(K, y, C, points=41, zooms=4):
    """Brute-force maximum of the dual over a grid, refined around the best cell.

    The last variable is eliminated through the equality constraint.
    """
    n = len(y)
    lo = np.zeros(n - 1)
    hi = np.full(n - 1, C)
    best_val, best = -np.inf, None
    for _ in range(zooms + 1):
        axes = [np.linspace(l, h, points) for l, h in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n - 1)
        last = -(grid @ y[:-1]) * y[-1]
        ok = (last >= 0) & (last <= C)
        A = np.concatenate([grid[ok], last[ok, None]], axis=1)
        ay = A * y
        vals = A.sum(1) - 0.5 * np.einsum("ri,ij,rj->r", ay, K, ay)
        r = int(np.argmax(vals))
        if vals[r] > best_val:
            best_val, best = float(vals[r]), A[r, :-1]
        step = (hi - lo) / (points - 1)
        lo = np.maximum(best - 2 * step, 0.0)
        hi = np.minimum(best + 2 * step, C)
    return best_val
