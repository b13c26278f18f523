"""Naive reference implementations used as test oracles.

Written with plain loops and the math module, independent of the vectorized
package code.
"""

import math


def pearson_abs(xs, ys):
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    sxx = sum((a - mx) ** 2 for a in xs)
    syy = sum((b - my) ** 2 for b in ys)
    if sxx == 0 or syy == 0:
        return 0.0
    return abs(sxy / math.sqrt(sxx * syy))


def entropy_bits(col, bins):
    lo, hi = min(col), max(col)
    if lo == hi:
        return 0.0
    counts = [0] * bins
    for v in col:
        k = int(math.floor((v - lo) / (hi - lo) * bins))
        counts[min(k, bins - 1)] += 1
    total = len(col)
    return math.fsum(-(c / total) * math.log2(c / total) for c in counts if c)


def minmax(vals):
    lo, hi = min(vals), max(vals)
    if lo == hi:
        return [0.0] * len(vals)
    return [(v - lo) / (hi - lo) for v in vals]


def naive_prune(adj, columns, edge_threshold, keep_fraction, alpha, bins):
    """Returns (kept, degrees, entropies, combined, pruned adjacency as nested lists)."""
    n = len(adj)
    degrees = [math.fsum(row) for row in adj]
    entropies = [entropy_bits(columns[i], bins) for i in range(n)]
    d, e = minmax(degrees), minmax(entropies)
    combined = [alpha * d[i] + (1 - alpha) * e[i] for i in range(n)]
    k = max(1, min(n, math.floor(keep_fraction * n + 0.5)))
    ranked = sorted(range(n), key=lambda i: (-combined[i], i))
    kept = sorted(ranked[:k])
    pruned = [[adj[i][j] if adj[i][j] >= edge_threshold else 0.0 for j in kept] for i in kept]
    return kept, degrees, entropies, combined, pruned


def naive_metrics(pred, truth):
    n = len(pred)
    mae = sum(abs(p - t) for p, t in zip(pred, truth)) / n
    rmse = math.sqrt(sum((p - t) ** 2 for p, t in zip(pred, truth)) / n)
    live = [(p, t) for p, t in zip(pred, truth) if abs(t) > 1e-6]
    mape = 100.0 * sum(abs(p - t) / abs(t) for p, t in live) / len(live) if live else math.nan
    return mae, rmse, mape, n - len(live)


def naive_cheb_conv(x, theta, lt):
    """x[b][c][t][n], theta[k][i][o], lt n x n nested lists; builds T_k by recurrence."""
    n = len(lt)
    ks = len(theta)
    eye = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]

    def mm(a, b):
        return [[sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)] for i in range(n)]

    polys = [eye]
    if ks > 1:
        polys.append([row[:] for row in lt])
    while len(polys) < ks:
        two = mm(lt, polys[-1])
        polys.append([[2 * two[i][j] - polys[-2][i][j] for j in range(n)] for i in range(n)])
    c_in, c_out = len(theta[0]), len(theta[0][0])
    out = []
    for xb in x:
        tlen = len(xb[0])
        ob = [[[0.0] * n for _ in range(tlen)] for _ in range(c_out)]
        for k in range(ks):
            for i in range(c_in):
                for tt in range(tlen):
                    prop = [sum(polys[k][m][j] * xb[i][tt][j] for j in range(n)) for m in range(n)]
                    for o in range(c_out):
                        w = theta[k][i][o]
                        for m in range(n):
                            ob[o][tt][m] += w * prop[m]
        out.append(ob)
    return out
