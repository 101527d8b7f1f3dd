# cython: language_level=3
"""Compiled chart kernels (CYK inside/outside/expected-count/Viterbi loops).

Operation-for-operation identical to `_pykernels.py`: same cell order, same
accumulation order, same libm calls, so results match the fallback bit for
bit on a given platform.  See that module for the algorithmic commentary.
"""

from libc.math cimport exp, log1p, INFINITY

BACKEND_NAME = "cython"

KIND_NONE = -1
KIND_LEX = 0
KIND_BINARY = 1
KIND_UNARY = 2

cdef double NEG_INF = -INFINITY

cdef inline double _logaddexp(double a, double b) noexcept nogil:
    cdef double tmp
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        tmp = a
        a = b
        b = tmp
    return a + log1p(exp(b - a))


def inside_fill(
    int n,
    int[::1] b_lhs,
    int[::1] b_left,
    int[::1] b_right,
    double[::1] b_logw,
    int[::1] u_lhs,
    int[::1] u_child,
    double[::1] u_logw,
    int[::1] lex_off,
    int[::1] lex_sym,
    double[::1] lex_logw,
    double[:, :, ::1] inside,
):
    cdef int nb = b_lhs.shape[0]
    cdef int nu = u_lhs.shape[0]
    cdef int i, j, k, r, t, e, s, width, lhs, left, right
    cdef double w, a, b, c
    with nogil:
        for i in range(n):
            for e in range(lex_off[i], lex_off[i + 1]):
                s = lex_sym[e]
                inside[i, i + 1, s] = _logaddexp(inside[i, i + 1, s], lex_logw[e])
            for t in range(nu):
                c = inside[i, i + 1, u_child[t]]
                if c != NEG_INF:
                    lhs = u_lhs[t]
                    inside[i, i + 1, lhs] = _logaddexp(
                        inside[i, i + 1, lhs], u_logw[t] + c
                    )
        for width in range(2, n + 1):
            for i in range(n - width + 1):
                j = i + width
                for r in range(nb):
                    lhs = b_lhs[r]
                    left = b_left[r]
                    right = b_right[r]
                    w = b_logw[r]
                    if w == NEG_INF:
                        continue
                    for k in range(i + 1, j):
                        a = inside[i, k, left]
                        if a == NEG_INF:
                            continue
                        b = inside[k, j, right]
                        if b == NEG_INF:
                            continue
                        inside[i, j, lhs] = _logaddexp(inside[i, j, lhs], w + a + b)
                for t in range(nu):
                    c = inside[i, j, u_child[t]]
                    if c != NEG_INF:
                        lhs = u_lhs[t]
                        inside[i, j, lhs] = _logaddexp(
                            inside[i, j, lhs], u_logw[t] + c
                        )


def outside_fill(
    int n,
    int start,
    int[::1] b_lhs,
    int[::1] b_left,
    int[::1] b_right,
    double[::1] b_logw,
    int[::1] u_lhs,
    int[::1] u_child,
    double[::1] u_logw,
    double[:, :, ::1] inside,
    double[:, :, ::1] outside,
):
    cdef int nb = b_lhs.shape[0]
    cdef int nu = u_lhs.shape[0]
    cdef int i, j, k, r, t, width, lhs, left, right, child
    cdef double o, w, a, b
    outside[0, n, start] = 0.0
    with nogil:
        for width in range(n, 0, -1):
            for i in range(n - width + 1):
                j = i + width
                for t in range(nu - 1, -1, -1):
                    o = outside[i, j, u_lhs[t]]
                    if o == NEG_INF:
                        continue
                    child = u_child[t]
                    if inside[i, j, child] != NEG_INF:
                        outside[i, j, child] = _logaddexp(
                            outside[i, j, child], o + u_logw[t]
                        )
                if width < 2:
                    continue
                for r in range(nb):
                    o = outside[i, j, b_lhs[r]]
                    if o == NEG_INF:
                        continue
                    w = b_logw[r]
                    if w == NEG_INF:
                        continue
                    left = b_left[r]
                    right = b_right[r]
                    for k in range(i + 1, j):
                        a = inside[i, k, left]
                        if a == NEG_INF:
                            continue
                        b = inside[k, j, right]
                        if b == NEG_INF:
                            continue
                        outside[i, k, left] = _logaddexp(
                            outside[i, k, left], o + w + b
                        )
                        outside[k, j, right] = _logaddexp(
                            outside[k, j, right], o + w + a
                        )


def count_fill(
    int n,
    double marginal,
    int[::1] b_lhs,
    int[::1] b_left,
    int[::1] b_right,
    double[::1] b_logw,
    int[::1] b_orig,
    int[::1] u_lhs,
    int[::1] u_child,
    double[::1] u_logw,
    int[::1] u_orig,
    int[::1] lex_off,
    int[::1] lex_sym,
    double[::1] lex_logw,
    int[::1] lex_orig,
    double[:, :, ::1] inside,
    double[:, :, ::1] outside,
    double[::1] counts,
):
    cdef int nb = b_lhs.shape[0]
    cdef int nu = u_lhs.shape[0]
    cdef int i, j, k, r, t, e, width, left, right, orig
    cdef double o, a, b, c, base
    with nogil:
        for i in range(n):
            for e in range(lex_off[i], lex_off[i + 1]):
                o = outside[i, i + 1, lex_sym[e]]
                if o != NEG_INF:
                    counts[lex_orig[e]] += exp(o + lex_logw[e] - marginal)
        for width in range(1, n + 1):
            for i in range(n - width + 1):
                j = i + width
                for t in range(nu):
                    o = outside[i, j, u_lhs[t]]
                    if o == NEG_INF:
                        continue
                    c = inside[i, j, u_child[t]]
                    if c != NEG_INF:
                        counts[u_orig[t]] += exp(o + u_logw[t] + c - marginal)
                if width < 2:
                    continue
                for r in range(nb):
                    orig = b_orig[r]
                    if orig < 0:
                        continue
                    o = outside[i, j, b_lhs[r]]
                    if o == NEG_INF:
                        continue
                    base = o + b_logw[r] - marginal
                    left = b_left[r]
                    right = b_right[r]
                    for k in range(i + 1, j):
                        a = inside[i, k, left]
                        if a == NEG_INF:
                            continue
                        b = inside[k, j, right]
                        if b == NEG_INF:
                            continue
                        counts[orig] += exp(base + a + b)


def viterbi_fill(
    int n,
    int[::1] b_lhs,
    int[::1] b_left,
    int[::1] b_right,
    double[::1] b_logw,
    int[::1] u_lhs,
    int[::1] u_child,
    double[::1] u_logw,
    int[::1] lex_off,
    int[::1] lex_sym,
    double[::1] lex_logw,
    double[:, :, ::1] score,
    signed char[:, :, ::1] bp_kind,
    int[:, :, ::1] bp_rule,
    int[:, :, ::1] bp_split,
):
    cdef int nb = b_lhs.shape[0]
    cdef int nu = u_lhs.shape[0]
    cdef int i, j, k, r, t, e, s, width, lhs, left, right
    cdef double w, a, b, c, cand
    with nogil:
        for i in range(n):
            for e in range(lex_off[i], lex_off[i + 1]):
                s = lex_sym[e]
                if lex_logw[e] > score[i, i + 1, s]:
                    score[i, i + 1, s] = lex_logw[e]
                    bp_kind[i, i + 1, s] = 0  # KIND_LEX
                    bp_rule[i, i + 1, s] = e
                    bp_split[i, i + 1, s] = i
            for t in range(nu):
                c = score[i, i + 1, u_child[t]]
                if c == NEG_INF:
                    continue
                cand = u_logw[t] + c
                lhs = u_lhs[t]
                if cand > score[i, i + 1, lhs]:
                    score[i, i + 1, lhs] = cand
                    bp_kind[i, i + 1, lhs] = 2  # KIND_UNARY
                    bp_rule[i, i + 1, lhs] = t
                    bp_split[i, i + 1, lhs] = i
        for width in range(2, n + 1):
            for i in range(n - width + 1):
                j = i + width
                for r in range(nb):
                    lhs = b_lhs[r]
                    left = b_left[r]
                    right = b_right[r]
                    w = b_logw[r]
                    if w == NEG_INF:
                        continue
                    for k in range(i + 1, j):
                        a = score[i, k, left]
                        if a == NEG_INF:
                            continue
                        b = score[k, j, right]
                        if b == NEG_INF:
                            continue
                        cand = w + a + b
                        if cand > score[i, j, lhs]:
                            score[i, j, lhs] = cand
                            bp_kind[i, j, lhs] = 1  # KIND_BINARY
                            bp_rule[i, j, lhs] = r
                            bp_split[i, j, lhs] = k
                for t in range(nu):
                    c = score[i, j, u_child[t]]
                    if c == NEG_INF:
                        continue
                    cand = u_logw[t] + c
                    lhs = u_lhs[t]
                    if cand > score[i, j, lhs]:
                        score[i, j, lhs] = cand
                        bp_kind[i, j, lhs] = 2  # KIND_UNARY
                        bp_rule[i, j, lhs] = t
                        bp_split[i, j, lhs] = i
