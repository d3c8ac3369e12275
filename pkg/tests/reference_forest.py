"""Slow, list-based CART forest written directly from the documented contract.

Used only as a test oracle for the compiled implementation.
"""
from __future__ import annotations

MASK = (1 << 64) - 1


class Stream:
    def __init__(self, seed: int) -> None:
        self.s = seed & MASK

    def uniform(self) -> float:
        self.s = (self.s + 0x9E3779B97F4A7C15) & MASK
        z = self.s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        z ^= z >> 31
        return (z >> 11) * 2.0 ** -53

    def below(self, n: int) -> int:
        return int(self.uniform() * n)


def grow_tree(X, y, seed, mtry, max_depth=None, min_leaf=1):
    """Returns (nodes, importance) with nodes as [feature, threshold, left, right, n0, n1]."""
    n, d = len(X), len(X[0])
    st = Stream(seed)
    counts = [0] * n
    for _ in range(n):
        counts[st.below(n)] += 1
    nodes = [None]
    imp = [0.0] * d
    stack = [(0, [i for i in range(n) if counts[i]], 0)]
    while stack:
        node, members, depth = stack.pop()
        c1 = float(sum(counts[i] for i in members if y[i] == 1))
        c0 = float(sum(counts[i] for i in members if y[i] != 1))
        w = c0 + c1
        nodes[node] = [-1, 0.0, -1, -1, c0, c1]
        if c0 == 0 or c1 == 0 or w < 2 * min_leaf:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        perm = list(range(d))
        cands = []
        for j in range(mtry):
            r = j + st.below(d - j)
            perm[j], perm[r] = perm[r], perm[j]
            cands.append(perm[j])
        best = None  # (score, feature, threshold)
        for f in cands:
            srt = sorted(members, key=lambda i: X[i][f])
            l0 = l1 = 0.0
            for k in range(len(srt) - 1):
                i = srt[k]
                if y[i] == 1:
                    l1 += counts[i]
                else:
                    l0 += counts[i]
                a, b = X[srt[k]][f], X[srt[k + 1]][f]
                if a == b:
                    continue
                wl = l0 + l1
                wr = w - wl
                if wl < min_leaf or wr < min_leaf:
                    continue
                t = 0.5 * a + 0.5 * b
                if not a < t < b:
                    continue
                r0, r1 = c0 - l0, c1 - l1
                score = (l0 * l0 + l1 * l1) / wl + (r0 * r0 + r1 * r1) / wr
                if best is None or score > best[0] or (
                        score == best[0] and (f, t) < (best[1], best[2])):
                    best = (score, f, t)
        parent = (c0 * c0 + c1 * c1) / w
        if best is None or best[0] <= parent + 1e-12 * w:
            continue
        score, f, t = best
        lid, rid = len(nodes), len(nodes) + 1
        nodes += [None, None]
        nodes[node][:4] = [f, t, lid, rid]
        imp[f] += (score - parent) / n
        stack.append((rid, [i for i in members if X[i][f] > t], depth + 1))
        stack.append((lid, [i for i in members if X[i][f] <= t], depth + 1))
    return nodes, imp
