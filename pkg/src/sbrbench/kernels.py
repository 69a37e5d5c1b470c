"""Hot loops of the baselines, each in a numba flavour and a numpy flavour.

The public names at the bottom of the module dispatch on
:data:`sbrbench._accel.USE_NUMBA`. The ``*_loop`` functions are the compiled
variants; the ``*_numpy`` functions are vectorised equivalents that must agree
with them to floating-point round-off.

Array conventions: sessions and items are dense non-negative integers,
``*_ptr`` arrays are CSR offsets (int64), timestamps are int64 seconds.
A decay parameter ``<= 0`` means "disabled".
"""

import numpy as np

from sbrbench._accel import USE_NUMBA, njit

SECONDS_PER_DAY = 86400.0


# --------------------------------------------------------------------------
# sequential rules: enumerate (antecedent, consequent, 1/distance) pairs
# --------------------------------------------------------------------------


@njit
def rule_pairs_loop(seq_ptr, seq_items, max_steps):
    n_sessions = seq_ptr.shape[0] - 1
    total = 0
    for s in range(n_sessions):
        length = seq_ptr[s + 1] - seq_ptr[s]
        for a in range(length):
            total += min(length - 1 - a, max_steps)
    src = np.empty(total, np.int64)
    dst = np.empty(total, np.int64)
    weight = np.empty(total, np.float64)
    c = 0
    for s in range(n_sessions):
        start = seq_ptr[s]
        length = seq_ptr[s + 1] - start
        for a in range(length):
            stop = min(length, a + max_steps + 1)
            for b in range(a + 1, stop):
                src[c] = seq_items[start + a]
                dst[c] = seq_items[start + b]
                weight[c] = 1.0 / (b - a)
                c += 1
    return src, dst, weight


def rule_pairs_numpy(seq_ptr, seq_items, max_steps):
    lengths = np.diff(seq_ptr)
    if lengths.size == 0 or max_steps < 1:
        empty = np.empty(0, np.int64)
        return empty, empty.copy(), np.empty(0, np.float64)
    owner = np.repeat(np.arange(lengths.size), lengths)
    items = seq_items.astype(np.int64)
    src, dst, weight = [], [], []
    for d in range(1, min(int(max_steps), int(lengths.max()) - 1) + 1):
        idx = np.flatnonzero(owner[:-d] == owner[d:])
        src.append(items[idx])
        dst.append(items[idx + d])
        weight.append(np.full(idx.size, 1.0 / d))
    if not src:
        empty = np.empty(0, np.int64)
        return empty, empty.copy(), np.empty(0, np.float64)
    return np.concatenate(src), np.concatenate(dst), np.concatenate(weight)


def aggregate_rules(src, dst, weight, n_items):
    """Sum pair weights per (antecedent, consequent) into CSR rows."""
    keys = src * n_items + dst
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    rule_ptr = np.zeros(n_items + 1, np.int64)
    if keys.size == 0:
        return rule_ptr, np.empty(0, np.int64), np.empty(0, np.float64)
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    uniq = keys[starts]
    weights = np.add.reduceat(weight[order], starts)
    antecedent = uniq // n_items
    np.add.at(rule_ptr, antecedent + 1, 1)
    return np.cumsum(rule_ptr), uniq % n_items, weights


# --------------------------------------------------------------------------
# neighbour candidates: m most recent sessions sharing an item with the prefix
# --------------------------------------------------------------------------


@njit
def candidates_loop(prefix_items, post_ptr, post_sessions, m):
    # postings are sorted descending, so merge the list heads and keep the
    # m largest distinct session ids without a full sort
    p = prefix_items.shape[0]
    heads = np.empty(p, np.int64)
    ends = np.empty(p, np.int64)
    total = 0
    for i in range(p):
        it = prefix_items[i]
        heads[i] = post_ptr[it]
        ends[i] = min(post_ptr[it + 1], post_ptr[it] + m)
        total += ends[i] - heads[i]
    out = np.empty(min(m, total), np.int64)
    n = 0
    while n < m:
        best = -1
        for i in range(p):
            if heads[i] < ends[i] and post_sessions[heads[i]] > best:
                best = post_sessions[heads[i]]
        if best < 0:
            break
        out[n] = best
        n += 1
        for i in range(p):
            if heads[i] < ends[i] and post_sessions[heads[i]] == best:
                heads[i] += 1
    return out[:n]


def candidates_numpy(prefix_items, post_ptr, post_sessions, m):
    # postings are most-recent-first, so only the head of each list can matter
    parts = [post_sessions[post_ptr[it] : min(post_ptr[it + 1], post_ptr[it] + m)] for it in prefix_items]
    if not parts:
        return np.empty(0, np.int64)
    uniq = np.unique(np.concatenate(parts).astype(np.int64))
    return uniq[::-1][:m].copy()


# --------------------------------------------------------------------------
# session similarity: decayed cosine between prefix and candidate item sets
# --------------------------------------------------------------------------


@njit
def similarity_loop(cands, set_ptr, set_items, start_times, prefix_items, prefix_weights, n_prefix, query_time, lambda2):
    n_p = prefix_items.shape[0]
    sims = np.empty(cands.shape[0], np.float64)
    for c in range(cands.shape[0]):
        s = cands[c]
        i = set_ptr[s]
        stop = set_ptr[s + 1]
        size = stop - i
        j = 0
        dot = 0.0
        while i < stop and j < n_p:
            a = set_items[i]
            b = prefix_items[j]
            if a == b:
                dot += prefix_weights[j]
                i += 1
                j += 1
            elif a < b:
                i += 1
            else:
                j += 1
        sim = dot / np.sqrt(n_prefix * size)
        if lambda2 > 0:
            days = max(0.0, (query_time - start_times[s]) / SECONDS_PER_DAY)
            sim *= np.exp(-days / lambda2)
        sims[c] = sim
    return sims


def similarity_numpy(cands, set_ptr, set_items, start_times, prefix_items, prefix_weights, n_prefix, query_time, lambda2):
    if cands.size == 0:
        return np.empty(0, np.float64)
    lo = set_ptr[cands]
    sizes = set_ptr[cands + 1] - lo
    owner = np.repeat(np.arange(cands.size), sizes)
    flat = np.repeat(lo - np.cumsum(sizes) + sizes, sizes) + np.arange(sizes.sum())
    items = set_items[flat]
    pos = np.searchsorted(prefix_items, items)
    pos_c = np.minimum(pos, prefix_items.size - 1)
    hit = (pos < prefix_items.size) & (prefix_items[pos_c] == items)
    contrib = np.where(hit, prefix_weights[pos_c], 0.0)
    dot = np.bincount(owner, weights=contrib, minlength=cands.size)
    sims = dot / np.sqrt(n_prefix * sizes)
    if lambda2 > 0:
        days = np.maximum(0.0, (query_time - start_times[cands]) / SECONDS_PER_DAY)
        sims = sims * np.exp(-days / lambda2)
    return sims


# --------------------------------------------------------------------------
# item scoring: similarity-weighted votes with neighbour-position decay
# --------------------------------------------------------------------------


@njit
def item_scores_loop(neighbors, sims, seq_ptr, seq_items, prefix_items, prefix_lastpos, last_item, lambda3, sequential_filter):
    n_p = prefix_items.shape[0]
    total = 0
    for r in range(neighbors.shape[0]):
        s = neighbors[r]
        total += seq_ptr[s + 1] - seq_ptr[s]
    out_items = np.empty(total, np.int64)
    out_vals = np.empty(total, np.float64)
    eligible = np.empty(total, np.int64)
    c = 0
    e = 0
    for r in range(neighbors.shape[0]):
        s = neighbors[r]
        a = seq_ptr[s]
        length = seq_ptr[s + 1] - a
        # anchor: neighbour position of the shared item latest in the prefix
        best = -1
        anchor = 0
        for q in range(length):
            it = seq_items[a + q]
            j = np.searchsorted(prefix_items, it)
            if j < n_p and prefix_items[j] == it and prefix_lastpos[j] >= best:
                best = prefix_lastpos[j]
                anchor = q
        if sequential_filter:
            first = length
            for q in range(length):
                if seq_items[a + q] == last_item:
                    first = q
                    break
            for q in range(first + 1, length):
                eligible[e] = seq_items[a + q]
                e += 1
        for q in range(length):
            it = seq_items[a + q]
            d = abs(q - anchor)
            shadowed = False
            for q2 in range(length):
                if q2 != q and seq_items[a + q2] == it:
                    d2 = abs(q2 - anchor)
                    if d2 < d or (d2 == d and q2 < q):
                        shadowed = True
                        break
            if shadowed:
                continue
            w = sims[r]
            if lambda3 > 0:
                w *= np.exp(-d / lambda3)
            out_items[c] = it
            out_vals[c] = w
            c += 1
    out_items = out_items[:c]
    out_vals = out_vals[:c]
    if sequential_filter:
        ok = np.unique(eligible[:e])
        keep = np.zeros(c, np.bool_)
        for i in range(c):
            j = np.searchsorted(ok, out_items[i])
            keep[i] = j < ok.shape[0] and ok[j] == out_items[i]
        out_items = out_items[keep]
        out_vals = out_vals[keep]
    order = np.argsort(out_items, kind="mergesort")
    items = np.empty(order.shape[0], np.int64)
    scores = np.empty(order.shape[0], np.float64)
    n = -1
    for i in range(order.shape[0]):
        it = out_items[order[i]]
        if n < 0 or items[n] != it:
            n += 1
            items[n] = it
            scores[n] = 0.0
        scores[n] += out_vals[order[i]]
    return items[: n + 1].copy(), scores[: n + 1].copy()


def item_scores_numpy(neighbors, sims, seq_ptr, seq_items, prefix_items, prefix_lastpos, last_item, lambda3, sequential_filter):
    if neighbors.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.float64)
    lo = seq_ptr[neighbors]
    sizes = seq_ptr[neighbors + 1] - lo
    owner = np.repeat(np.arange(neighbors.size), sizes)
    starts = np.cumsum(sizes) - sizes
    q = np.arange(sizes.sum()) - np.repeat(starts, sizes)
    items = seq_items[np.repeat(lo, sizes) + q].astype(np.int64)

    pos = np.searchsorted(prefix_items, items)
    pos_c = np.minimum(pos, prefix_items.size - 1)
    hit = (pos < prefix_items.size) & (prefix_items[pos_c] == items)
    width = int(sizes.max()) + 1
    key = np.where(hit, prefix_lastpos[pos_c] * width + q, -1)
    anchor = np.maximum.reduceat(key, starts) % width
    dist = np.abs(q - anchor[owner])

    # one vote per (neighbour, item): the occurrence closest to the anchor
    order = np.lexsort((q, dist, items, owner))
    first = np.r_[True, (owner[order][1:] != owner[order][:-1]) | (items[order][1:] != items[order][:-1])]
    pick = np.sort(order[first])
    v_owner, v_items, v_dist = owner[pick], items[pick], dist[pick]
    votes = sims[v_owner] if lambda3 <= 0 else sims[v_owner] * np.exp(-v_dist / lambda3)

    if sequential_filter:
        is_last = items == last_item
        first_last = np.minimum.reduceat(np.where(is_last, q, width), starts)
        ok = np.unique(items[q > first_last[owner]])
        keep = np.isin(v_items, ok)
        v_owner, v_items, votes = v_owner[keep], v_items[keep], votes[keep]

    if v_items.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.float64)
    order = np.argsort(v_items, kind="stable")
    v_items = v_items[order]
    bounds = np.flatnonzero(np.r_[True, v_items[1:] != v_items[:-1]])
    return v_items[bounds].copy(), np.add.reduceat(votes[order], bounds)


if USE_NUMBA:
    rule_pairs = rule_pairs_loop
    candidates = candidates_loop
    similarity = similarity_loop
    item_scores = item_scores_loop
else:
    rule_pairs = rule_pairs_numpy
    candidates = candidates_numpy
    similarity = similarity_numpy
    item_scores = item_scores_numpy
