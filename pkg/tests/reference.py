"""Straight-line scoring oracle: plain Python loops, no tape, no numpy kernels.

Deliberately shares no code with the package so that it can stand as an
independent check of the batched pipeline.
"""
import math


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _matvec(A, x):
    return [_dot(row, x) for row in A]


def _cos(u, v):
    nu = math.sqrt(_dot(u, u))
    nv = math.sqrt(_dot(v, v))
    if nu <= 1e-12 and nv <= 1e-12:
        return 1.0
    if nu <= 1e-12 or nv <= 1e-12:
        return 0.0
    return _dot(u, v) / (nu * nv)


def _softmax(v, tau):
    m = max(x / tau for x in v)
    e = [math.exp(x / tau - m) for x in v]
    s = sum(e)
    return [x / s for x in e]


def _blocks(u, v, k):
    w = len(u) // k
    return [_cos(u[s * w:(s + 1) * w], v[s * w:(s + 1) * w]) for s in range(k)]


def _columns(X):
    return [[X[r][c] for r in range(len(X))] for c in range(len(X[0]))]


def pair_scores(params, image, text, k, tau1, tau2, use_srm=True, use_irm=True):
    """(s_hat_g, s_hat_l) for one image (d_in x M) and one text (d_in x N), given as nested lists."""
    P_img, P_txt, f_x, f_y, g_w, g_b = params
    patches = [_matvec(P_img, x) for x in _columns(image)]
    words = [_matvec(P_txt, y) for y in _columns(text)]
    d = len(patches[0])
    I_g = [sum(p[e] for p in patches) / len(patches) for e in range(d)]
    T_g = [sum(w[e] for w in words) for e in range(d)]

    S = []
    for w in words:
        a = _softmax([_dot(p, w) for p in patches], tau1)
        V = [sum(a[j] * patches[j][e] for j in range(len(patches))) for e in range(d)]
        S.append(_blocks(w, V, k))
    s_g = _blocks(T_g, I_g, k)

    N = len(words)
    if use_srm:
        src = [_matvec(f_x, s) for s in S]
        dst = [_matvec(f_y, s) for s in S]
        S2 = []
        for y in range(N):
            E = _softmax([_dot(src[x], dst[y]) for x in range(N)], 1.0)
            S2.append([sum(E[x] * src[x][c] for x in range(N)) for c in range(k)])
    else:
        S2 = S
    if use_irm:
        omega = _softmax([_dot(w, T_g) for w in words], tau2)
    else:
        omega = [1.0 / N] * N
    pooled = [sum(omega[i] * S2[i][c] for i in range(N)) for c in range(k)]
    head = lambda x: _dot(g_w, x) + g_b
    return head(s_g), head(pooled)
