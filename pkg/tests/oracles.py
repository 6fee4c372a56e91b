"""Independent reference implementations shared by the unit and acceptance tests."""

import math
from collections import Counter
from fractions import Fraction

import numpy as np
from hypothesis import strategies as st

from fcmi.correlation import pearson_batch
from fcmi.table import Dataset


def pearson_oracle(pairs):
    """Definitional Pearson over explicit complete pairs, exact until the final sqrt."""
    n = len(pairs)
    if n < 2:
        return None
    mx = Fraction(sum(p[0] for p in pairs), n)
    my = Fraction(sum(p[1] for p in pairs), n)
    sxy = sum((a - mx) * (b - my) for a, b in pairs)
    sxx = sum((a - mx) ** 2 for a, _ in pairs)
    syy = sum((b - my) ** 2 for _, b in pairs)
    if sxx == 0 or syy == 0:
        return None
    return float(sxy) / math.sqrt(float(sxx * syy))


# per position: 9 complete pairs, x missing (3 y values), y missing (3), both missing
_STATES = (
    [(a, b, False, False) for a in range(3) for b in range(3)]
    + [(7, b, True, False) for b in range(3)]
    + [(a, 7, False, True) for a in range(3)]
    + [(7, 7, True, True)]
)


def pearson_exhaustive_mismatches(max_len: int = 6) -> int:
    """Compare ``pearson_batch`` with the oracle on every masked input up to ``max_len``.

    Inputs are enumerated as base-16 numbers over the per-position states;
    masked cells carry a junk value (7) that must never influence the result.
    The oracle is evaluated once per multiset of complete pairs.
    """
    n_states = len(_STATES)
    states = np.array([s[:2] for s in _STATES], dtype=float)
    missing = np.array([s[2] or s[3] for s in _STATES])
    # base-7 code of the per-pair-type counts (each count <= 6)
    pair_code = np.zeros(n_states, dtype=np.int64)
    pair_code[:9] = 7 ** np.arange(9)
    oracle_cache: dict[int, float] = {}
    bad = 0
    for n in range(1, max_len + 1):
        total = n_states**n
        step = min(total, 1 << 20)
        for start in range(0, total, step):
            idx = np.arange(start, min(start + step, total), dtype=np.int64)
            digits = (idx[:, None] // (n_states ** np.arange(n, dtype=np.int64))) % n_states
            vals = states[digits]
            got = pearson_batch(vals[..., 0], vals[..., 1], ~missing[digits])
            keys = pair_code[digits].sum(axis=1)
            uniq, inverse = np.unique(keys, return_inverse=True)
            expected = np.empty(len(uniq))
            for i, key in enumerate(uniq.tolist()):
                if key not in oracle_cache:
                    counts = [(key // 7**k) % 7 for k in range(9)]
                    pairs = [divmod(k, 3) for k, c in enumerate(counts) for _ in range(c)]
                    e = pearson_oracle(pairs)
                    oracle_cache[key] = math.nan if e is None else e
                expected[i] = oracle_cache[key]
            want = expected[inverse.ravel()]
            definedness = np.isnan(got) != np.isnan(want)
            ok = ~np.isnan(want) & ~np.isnan(got)
            bad += int(definedness.sum() + (np.abs(got[ok] - want[ok]) > 1e-12).sum())
    return bad


def normal_equations(x, y):
    """Independent OLS: solve (A^T A) beta = A^T y with an intercept column."""
    a = np.column_stack([x, np.ones(len(y))])
    beta = np.linalg.solve(a.T @ a, a.T @ y)
    return beta[:-1], beta[-1]


def central_difference(fun, theta, h=1e-6):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (fun(theta + e) - fun(theta - e)) / (2 * h)
    return g


def relative_errors(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)


def knn_oracle(d: Dataset, k: int) -> dict[tuple[int, int], object]:
    """Exhaustive neighbour search in exact rational arithmetic."""
    n, p = d.n_rows, d.n_cols
    enc = []
    for j in range(p):
        col = d.columns[j]
        obs = [col[i] for i in range(n) if not d.mask[j, i]]
        if d.kinds[j].is_numeric:
            enc.append([None if d.mask[j, i] else Fraction(col[i]) for i in range(n)])
        else:
            codes = {c: idx for idx, c in enumerate(sorted(set(obs)))}
            enc.append([None if d.mask[j, i] else Fraction(codes[col[i]]) for i in range(n)])
    var = []
    for j in range(p):
        obs = [v for v in enc[j] if v is not None]
        mu = sum(obs) / len(obs)
        v = sum((x - mu) ** 2 for x in obs) / len(obs)
        var.append(v if v > 0 else Fraction(1))
    out = {}
    for j in range(p):
        for i in range(n):
            if not d.mask[j, i]:
                continue
            scored = []
            for r in range(n):
                if r == i or d.mask[j, r]:
                    continue
                shared = [c for c in range(p) if enc[c][i] is not None and enc[c][r] is not None]
                if not shared:
                    continue
                dist2 = sum((enc[c][i] - enc[c][r]) ** 2 / var[c] for c in shared) / len(shared)
                scored.append((dist2, r))
            scored.sort()
            donors = [r for _, r in scored[:k]]
            if not donors:
                out[(i, j)] = None
                continue
            vals = [d.columns[j][r] for r in donors]
            if d.kinds[j].is_numeric:
                out[(i, j)] = float(sum(Fraction(v) for v in vals) / len(vals))
            else:
                counts = Counter(vals)
                top = max(counts.values())
                out[(i, j)] = min(v for v, c in counts.items() if c == top)
    return out


@st.composite
def small_frames(draw):
    n = draw(st.integers(2, 10))
    p = draw(st.integers(1, 4))
    names, cols, masks = [], [], []
    for j in range(p):
        cat = draw(st.booleans()) and p > 1
        values = draw(st.lists(st.sampled_from("xyz") if cat else st.integers(0, 4), min_size=n, max_size=n))
        mask = draw(st.lists(st.booleans(), min_size=n, max_size=n))
        if all(mask):
            mask[draw(st.integers(0, n - 1))] = False
        names.append(f"c{j}")
        cols.append(values)
        masks.append(mask)
    return Dataset.from_columns(names, cols, masks)
