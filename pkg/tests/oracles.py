"""Naive scalar re-implementations used as oracles. Deliberately loop-heavy."""
import math


def brute_distance(treat, Y, a, window):
    N = len(treat)
    rho = [[0.0] * N for _ in range(N)]
    ov = [[0] * N for _ in range(N)]
    for i in range(N):
        for j in range(N):
            s = 0.0
            c = 0
            for t in window:
                if treat[i][t] == a and treat[j][t] == a:
                    d = Y[i][t] - Y[j][t]
                    s += 1.0 * 1.0 * (d * d)
                    c += 1
            ov[i][j] = c
            if i == j:
                rho[i][j] = 0.0
            else:
                rho[i][j] = s / c if c else math.inf
    return rho, ov


def brute_estimate(treat, Y, rho, a, eta, i, t):
    """Returns (value, count, fallback) following the documented rules."""
    N = len(treat)
    T = len(treat[0])
    nbrs = [j for j in range(N) if j != i and rho[i][j] <= eta and treat[j][t] == a]
    if nbrs:
        return sum(Y[j][t] for j in nbrs) / len(nbrs), len(nbrs), "none"
    if treat[i][t] == a:
        return Y[i][t], 0, "self-observation"
    col = [Y[j][t] for j in range(N) if treat[j][t] == a]
    if col:
        return sum(col) / len(col), 0, "column-mean"
    allv = [Y[j][s] for j in range(N) for s in range(T) if treat[j][s] == a]
    return sum(allv) / len(allv), 0, "global-mean"
