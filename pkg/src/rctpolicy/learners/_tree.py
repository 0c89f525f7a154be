"""Regression tree growth shared by the single-tree and boosted learners.

Trees are grown on residuals under squared error. A node's weight is
``sum(r) / (count + l2)`` and a split's gain is the regularized
squared-error reduction::

    GL**2 / (HL + l2) + GR**2 / (HR + l2) - G**2 / (H + l2)

With ``l2 = 0`` this is exactly the drop in the sum of squared errors.
Missing values take part in split search: every candidate is scored twice,
once with the node's missing rows sent left and once right, and the better
routing is stored as the node's default direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray       # -1 marks a leaf
    threshold: np.ndarray     # go left iff x < threshold
    left: np.ndarray
    right: np.ndarray
    missing_left: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_splits(self) -> int:
        return int((self.feature >= 0).sum())

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            feat = self.feature[node]
            idx = np.flatnonzero(feat >= 0)
            if idx.size == 0:
                break
            cur = node[idx]
            x = X[idx, feat[idx]]
            go_left = np.where(np.isnan(x), self.missing_left[cur], x < self.threshold[cur])
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]

    def gain_by_feature(self, n_features: int) -> np.ndarray:
        out = np.zeros(n_features)
        split = self.feature >= 0
        np.add.at(out, self.feature[split], self.gain[split])
        return out

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"value": float(self.value[node]), "cover": float(self.cover[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "missing_left": bool(self.missing_left[node]),
            "gain": float(self.gain[node]),
            "cover": float(self.cover[node]),
            "value": float(self.value[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        b = _Builder()

        def visit(nd):
            i = b.add(nd["value"], nd["cover"])
            if "feature" in nd:
                b.split(i, nd["feature"], nd["threshold"], nd["missing_left"], nd["gain"],
                        visit(nd["left"]), visit(nd["right"]))
            return i

        visit(d)
        return b.build()


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.missing_left, self.value, self.gain, self.cover = [], [], [], []

    def add(self, value, cover):
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.missing_left.append(True)
        self.value.append(float(value))
        self.gain.append(0.0)
        self.cover.append(float(cover))
        return len(self.feature) - 1

    def split(self, i, feature, threshold, missing_left, gain, left, right):
        self.feature[i] = int(feature)
        self.threshold[i] = float(threshold)
        self.missing_left[i] = bool(missing_left)
        self.gain[i] = float(gain)
        self.left[i] = int(left)
        self.right[i] = int(right)

    def build(self) -> Tree:
        arrs = [np.array(self.feature, dtype=np.intp), np.array(self.threshold, dtype=float),
                np.array(self.left, dtype=np.intp), np.array(self.right, dtype=np.intp),
                np.array(self.missing_left, dtype=bool), np.array(self.value, dtype=float),
                np.array(self.gain, dtype=float), np.array(self.cover, dtype=float)]
        for a in arrs:
            a.setflags(write=False)
        return Tree(*arrs)


def best_split(X: np.ndarray, r: np.ndarray, min_child: float, l2: float, usable=None):
    """Best (feature, threshold, missing_left, gain) for one node, or None.

    Ties resolve to the lowest feature index, then the lowest threshold.
    """
    m, d = X.shape
    if m < 2:
        return None
    order = np.argsort(X, axis=0, kind="stable")   # nan sorts last
    xs = np.take_along_axis(X, order, axis=0)
    obs = ~np.isnan(xs)
    rs = np.where(obs, r[order], 0.0)
    cg = np.cumsum(rs, axis=0)
    ch = np.cumsum(obs, axis=0, dtype=float)
    G, H = r.sum(), float(m)
    g_obs, h_obs = cg[-1], ch[-1]
    g_miss, h_miss = G - g_obs, H - h_obs

    GL, HL = cg[:-1], ch[:-1]
    with np.errstate(invalid="ignore"):
        valid = obs[:-1] & obs[1:] & (xs[:-1] < xs[1:])
    if usable is not None:
        valid &= usable[None, :]
    if not valid.any():
        return None

    def score(g, h):
        with np.errstate(divide="ignore", invalid="ignore"):
            return g * g / (h + l2)

    parent = score(G, H)
    # missing rows routed right
    hl_a, hr_a = HL, H - HL
    gain_a = score(GL, hl_a) + score(G - GL, hr_a) - parent
    ok_a = valid & (hl_a >= min_child) & (hr_a >= min_child)
    # missing rows routed left
    hl_b, hr_b = HL + h_miss, h_obs - HL
    gain_b = score(GL + g_miss, hl_b) + score(g_obs - GL, hr_b) - parent
    ok_b = valid & (hl_b >= min_child) & (hr_b >= min_child)

    gain_a = np.where(ok_a, gain_a, -np.inf)
    gain_b = np.where(ok_b, gain_b, -np.inf)
    # equal gains (always the case when the node has no missing rows):
    # send missing rows to the child holding more training rows, left on ties
    prefer_left = (gain_b > gain_a) | ((gain_b == gain_a) & (HL >= h_obs - HL))
    gain = np.where(prefer_left, gain_b, gain_a)

    flat = gain.T.ravel()       # feature-major, thresholds ascending within a feature
    best = int(np.argmax(flat))
    if not np.isfinite(flat[best]):
        return None
    f, k = divmod(best, m - 1)
    lo, hi = xs[k, f], xs[k + 1, f]
    thr = 0.5 * (lo + hi)
    if not lo < thr:
        thr = hi
    return f, float(thr), bool(prefer_left[k, f]), float(flat[best])


def grow_tree(X: np.ndarray, r: np.ndarray, max_depth: int | None, min_child: float,
              l2: float = 0.0, usable=None, scale: float = 1.0) -> Tree:
    """Grow one tree breadth-first on residuals ``r``.

    ``scale`` multiplies the stored leaf weights (the boosting learning
    rate); gains are recorded unscaled.
    """
    b = _Builder()
    eps = 1e-12 * max(1.0, float(np.dot(r, r)))
    root_rows = np.arange(X.shape[0])
    queue = [(b.add(scale * r.sum() / (len(r) + l2), len(r)), root_rows, 0)]
    while queue:
        nxt = []
        for node, rows, depth in queue:
            if (max_depth is not None and depth >= max_depth) or rows.size < 2 * min_child:
                continue
            found = best_split(X[rows], r[rows], min_child, l2, usable)
            if found is None or found[3] <= eps:
                continue
            f, thr, miss_left, gain = found
            x = X[rows, f]
            go_left = np.where(np.isnan(x), miss_left, x < thr)
            lrows, rrows = rows[go_left], rows[~go_left]
            li = b.add(scale * r[lrows].sum() / (lrows.size + l2), lrows.size)
            ri = b.add(scale * r[rrows].sum() / (rrows.size + l2), rrows.size)
            b.split(node, f, thr, miss_left, gain, li, ri)
            nxt.append((li, lrows, depth + 1))
            nxt.append((ri, rrows, depth + 1))
        queue = nxt
    return b.build()
