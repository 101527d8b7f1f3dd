"""Pure-Python chart kernels.

Loop-for-loop mirror of the compiled backend in `_ckernels.pyx`: the same
cells are visited in the same order and log-sum-exp accumulation happens in
the same sequence, so the two backends produce identical results (both lean
on the platform libm for exp/log1p).  This module is the import-time
fallback when the extension is unavailable and the reference for testing
it; it is one to two orders of magnitude slower.
"""

from __future__ import annotations

import math

BACKEND_NAME = "python"

NEG_INF = float("-inf")

KIND_NONE = -1
KIND_LEX = 0
KIND_BINARY = 1
KIND_UNARY = 2


def _logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def inside_fill(
    n,
    b_lhs,
    b_left,
    b_right,
    b_logw,
    u_lhs,
    u_child,
    u_logw,
    lex_off,
    lex_sym,
    lex_logw,
    inside,
):
    nb = len(b_lhs)
    nu = len(u_lhs)
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
                    inside[i, j, lhs] = _logaddexp(inside[i, j, lhs], u_logw[t] + c)


def outside_fill(
    n,
    start,
    b_lhs,
    b_left,
    b_right,
    b_logw,
    u_lhs,
    u_child,
    u_logw,
    inside,
    outside,
):
    """Top-down pass; outside cells are only materialized where the matching
    inside cell is finite (no-constituent cells stay absent)."""
    nb = len(b_lhs)
    nu = len(u_lhs)
    outside[0, n, start] = 0.0
    for width in range(n, 0, -1):
        for i in range(n - width + 1):
            j = i + width
            # Unary contexts at the same cell, parents before children.
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
                    outside[i, k, left] = _logaddexp(outside[i, k, left], o + w + b)
                    outside[k, j, right] = _logaddexp(outside[k, j, right], o + w + a)


def count_fill(
    n,
    marginal,
    b_lhs,
    b_left,
    b_right,
    b_logw,
    b_orig,
    u_lhs,
    u_child,
    u_logw,
    u_orig,
    lex_off,
    lex_sym,
    lex_logw,
    lex_orig,
    inside,
    outside,
    counts,
):
    nb = len(b_lhs)
    nu = len(u_lhs)
    for i in range(n):
        for e in range(lex_off[i], lex_off[i + 1]):
            o = outside[i, i + 1, lex_sym[e]]
            if o != NEG_INF:
                counts[lex_orig[e]] += math.exp(o + lex_logw[e] - marginal)
    for width in range(1, n + 1):
        for i in range(n - width + 1):
            j = i + width
            for t in range(nu):
                o = outside[i, j, u_lhs[t]]
                if o == NEG_INF:
                    continue
                c = inside[i, j, u_child[t]]
                if c != NEG_INF:
                    counts[u_orig[t]] += math.exp(o + u_logw[t] + c - marginal)
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
                    counts[orig] += math.exp(base + a + b)


def viterbi_fill(
    n,
    b_lhs,
    b_left,
    b_right,
    b_logw,
    u_lhs,
    u_child,
    u_logw,
    lex_off,
    lex_sym,
    lex_logw,
    score,
    bp_kind,
    bp_rule,
    bp_split,
):
    """Max-product chart.  Strict improvement plus fixed iteration order
    (rule index ascending, then split ascending) makes ties deterministic:
    the lowest rule index wins, then the leftmost split."""
    nb = len(b_lhs)
    nu = len(u_lhs)
    for i in range(n):
        for e in range(lex_off[i], lex_off[i + 1]):
            s = lex_sym[e]
            if lex_logw[e] > score[i, i + 1, s]:
                score[i, i + 1, s] = lex_logw[e]
                bp_kind[i, i + 1, s] = KIND_LEX
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
                bp_kind[i, i + 1, lhs] = KIND_UNARY
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
                        bp_kind[i, j, lhs] = KIND_BINARY
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
                    bp_kind[i, j, lhs] = KIND_UNARY
                    bp_rule[i, j, lhs] = t
                    bp_split[i, j, lhs] = i
