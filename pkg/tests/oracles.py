"""Brute-force references for the evaluation code."""
import mpmath


def pr_points(scores, labels):
    """``{threshold: (precision, recall)}`` by direct counting at every distinct score."""
    n_pos = sum(labels)
    out = {}
    for t in set(scores):
        flagged = [y for s, y in zip(scores, labels) if s >= t]
        tp = sum(flagged)
        out[t] = (tp / len(flagged), tp / n_pos)
    return out


def pr_auc(points):
    """Trapezoids over recall, starting at recall 0 with the strictest precision."""
    ordered = sorted(points.items(), reverse=True)  # strictest threshold first
    prev_r, prev_p = 0.0, ordered[0][1][0]
    area = 0.0
    for _, (p, r) in ordered:
        area += (r - prev_r) * (p + prev_p) / 2
        prev_r, prev_p = r, p
    return area


def _binom_upper_tail(k, n, p):
    """P(X >= k) for X ~ Binomial(n, p), summing pmf terms by recurrence."""
    if k <= 0:
        return mpmath.mpf(1)
    if p <= 0:
        return mpmath.mpf(0)
    q = 1 - p
    term = mpmath.binomial(n, k) * p ** k * q ** (n - k)
    total = term
    for j in range(k, n):
        term *= mpmath.mpf(n - j) / (j + 1) * p / q
        total += term
    return total


def _bisect(f, target, increasing, iters=64):
    lo, hi = mpmath.mpf(0), mpmath.mpf(1)
    for _ in range(iters):
        mid = (lo + hi) / 2
        if (f(mid) < target) == increasing:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def clopper_pearson(k, n, level=0.95):
    """Exact interval by inverting the binomial tails with bisection."""
    alpha = mpmath.mpf(1 - level)
    with mpmath.workdps(40):
        lo = mpmath.mpf(0) if k == 0 else _bisect(
            lambda p: _binom_upper_tail(k, n, p), alpha / 2, increasing=True)
        hi = mpmath.mpf(1) if k == n else _bisect(
            lambda p: 1 - _binom_upper_tail(k + 1, n, p), alpha / 2, increasing=False)
    return float(lo), float(hi)
