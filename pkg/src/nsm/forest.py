"""Random Forest binary classifier (CART trees, Gini impurity) built from scratch.

Trees are grown greedily on bootstrap samples with a random feature subset
per node; leaves store the positive-class fraction so the forest outputs a
continuous score in [0, 1] suitable for thresholding. Everything is
deterministic given the seed: tree t draws its random stream from
(seed, t), so training parallelized across trees gives identical models.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core.container import read_container, write_container

MODEL_KIND = "nsm-rf"
MODEL_VERSION = 1

_DOWNSAMPLE_STREAM = 0xD5
_TREE_STREAM = 0x7E


@dataclass(frozen=True)
class RfParams:
    n_trees: int = 250
    max_depth: int = 50
    min_leaf: int = 1
    features_per_split: int | str = "sqrt"
    bootstrap: float = 1.0
    seed: int = 0
    # Imbalance handling: cap negatives at `neg_pos_ratio` per positive
    # (None disables), optionally reweight classes to equal mass.
    neg_pos_ratio: float | None = 20.0
    class_weight: str = "none"  # "none" | "balanced"

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if not 0.0 < self.bootstrap <= 1.0:
            raise ValueError("bootstrap fraction must be in (0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if isinstance(self.features_per_split, str) and self.features_per_split != "sqrt":
            raise ValueError("features_per_split must be a count or 'sqrt'")
        if self.class_weight not in ("none", "balanced"):
            raise ValueError("class_weight must be 'none' or 'balanced'")

    def resolve_features_per_split(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(round(math.sqrt(n_features))))
        return min(int(self.features_per_split), n_features)


@dataclass(frozen=True)
class TrainingSet:
    features: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) bool, True = match

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=bool).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError("features must be (N, D) with one label per row")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def width(self) -> int:
        return self.features.shape[1]


@dataclass
class _Tree:
    """Flat array encoding: feature[i] == -1 marks a leaf with score value[i]."""

    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64

    def score(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int32)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            n = node[rows]
            go_left = x[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active[rows] = self.feature[node[rows]] >= 0
        return self.value[node]


@dataclass(frozen=True)
class ForestModel:
    trees: list[_Tree]
    n_features: int
    params: RfParams
    oob_score: float | None = None
    fingerprint: str = ""


class _TreeBuilder:
    def __init__(self, x, y, w, params: RfParams, rng: np.random.Generator):
        self.x = x
        self.y = y
        self.w = w
        self.params = params
        self.rng = rng
        self.m = params.resolve_features_per_split(x.shape[1])
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def build(self) -> _Tree:
        self._grow(np.arange(len(self.x)), depth=0)
        return _Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
        )

    def _leaf(self, idx) -> int:
        node = len(self.feature)
        wsum = self.w[idx].sum()
        pos = self.w[idx][self.y[idx]].sum()
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(pos / wsum if wsum > 0 else 0.0)
        return node

    def _grow(self, idx, depth) -> int:
        y = self.y[idx]
        if (
            depth >= self.params.max_depth
            or len(idx) < 2 * self.params.min_leaf
            or y.all()
            or not y.any()
        ):
            return self._leaf(idx)
        split = self._best_split(idx)
        if split is None:
            return self._leaf(idx)
        f, thr = split
        node = len(self.feature)
        self.feature.append(f)
        self.threshold.append(thr)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        mask = self.x[idx, f] <= thr
        self.left[node] = self._grow(idx[mask], depth + 1)
        self.right[node] = self._grow(idx[~mask], depth + 1)
        return node

    def _best_split(self, idx):
        """Lowest weighted-Gini (feature, threshold) over a random feature subset."""
        feats = self.rng.choice(self.x.shape[1], size=self.m, replace=False)
        y = self.y[idx].astype(np.float64)
        w = self.w[idx]
        total_w = w.sum()
        total_pos = (w * y).sum()
        best = None
        best_score = np.inf
        min_leaf = self.params.min_leaf
        for f in feats:
            v = self.x[idx, f]
            order = np.argsort(v, kind="stable")
            sv = v[order]
            cut = np.nonzero(sv[:-1] < sv[1:])[0]  # split after position i
            if len(cut) == 0:
                continue
            if min_leaf > 1:
                cut = cut[(cut + 1 >= min_leaf) & (len(idx) - cut - 1 >= min_leaf)]
                if len(cut) == 0:
                    continue
            wl = np.cumsum(w[order])[cut]
            pl = np.cumsum((w * y)[order])[cut]
            wr = total_w - wl
            pr = total_pos - pl
            # Weighted Gini of the two children: sum_c w_c * (1 - p_c^2 - q_c^2).
            gini_l = wl - (pl**2 + (wl - pl) ** 2) / wl
            gini_r = wr - (pr**2 + (wr - pr) ** 2) / wr
            scores = gini_l + gini_r
            j = int(np.argmin(scores))
            if scores[j] < best_score - 1e-15:
                best_score = float(scores[j])
                thr = 0.5 * (sv[cut[j]] + sv[cut[j] + 1])
                # Guard against midpoint rounding up onto the right value.
                if thr >= sv[cut[j] + 1]:
                    thr = sv[cut[j]]
                best = (int(f), float(thr))
        return best


def _train_one_tree(x, y, w, params: RfParams, tree_idx: int):
    rng = np.random.default_rng([params.seed, _TREE_STREAM, tree_idx])
    n = len(x)
    n_boot = max(1, int(round(params.bootstrap * n)))
    sample = rng.integers(0, n, size=n_boot)
    tree = _TreeBuilder(x[sample], y[sample], w[sample], params, rng).build()
    oob_mask = np.ones(n, dtype=bool)
    oob_mask[sample] = False
    return tree, oob_mask


def _downsample_negatives(data: TrainingSet, params: RfParams) -> TrainingSet:
    if params.neg_pos_ratio is None:
        return data
    pos_idx = np.nonzero(data.labels)[0]
    neg_idx = np.nonzero(~data.labels)[0]
    cap = int(params.neg_pos_ratio * len(pos_idx))
    if len(neg_idx) <= cap:
        return data
    rng = np.random.default_rng([params.seed, _DOWNSAMPLE_STREAM])
    keep_neg = np.sort(rng.choice(neg_idx, size=cap, replace=False))
    keep = np.sort(np.concatenate([pos_idx, keep_neg]))
    return TrainingSet(data.features[keep], data.labels[keep])


def _training_fingerprint(data: TrainingSet, params: RfParams) -> str:
    h = hashlib.sha256()
    h.update(repr(params).encode())
    h.update(np.ascontiguousarray(data.features).tobytes())
    h.update(np.ascontiguousarray(data.labels).tobytes())
    return h.hexdigest()[:16]


def rf_train(data: TrainingSet, params: RfParams | None = None, n_threads: int = 1) -> ForestModel:
    """Train a forest; both classes must be present.

    The model is a pure function of (data, params): thread count only
    changes wall time.
    """
    params = params or RfParams()
    if not data.labels.any() or data.labels.all():
        raise ValueError("training data must contain both classes")
    fingerprint = _training_fingerprint(data, params)
    data = _downsample_negatives(data, params)
    x, y = data.features, data.labels
    if params.class_weight == "balanced":
        n = len(y)
        n_pos = int(y.sum())
        w = np.where(y, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))
    else:
        w = np.ones(len(y))

    def job(t):
        return _train_one_tree(x, y, w, params, t)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(job, range(params.n_trees)))
    else:
        results = [job(t) for t in range(params.n_trees)]

    trees = [tree for tree, _ in results]
    oob_sum = np.zeros(len(x))
    oob_cnt = np.zeros(len(x), dtype=np.int64)
    for tree, oob_mask in results:
        if oob_mask.any():
            oob_sum[oob_mask] += tree.score(x[oob_mask])
            oob_cnt[oob_mask] += 1
    seen = oob_cnt > 0
    oob_score = None
    if seen.any():
        oob_pred = oob_sum[seen] / oob_cnt[seen] >= 0.5
        oob_score = float(np.mean(oob_pred == y[seen]))
    return ForestModel(
        trees=trees,
        n_features=x.shape[1],
        params=params,
        oob_score=oob_score,
        fingerprint=fingerprint,
    )


def rf_score(model: ForestModel, x) -> float | np.ndarray:
    """Mean leaf score over all trees; accepts one vector or an (N, D) batch."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {arr.shape[1]}")
    total = np.zeros(len(arr))
    for tree in model.trees:
        total += tree.score(arr)
    total /= len(model.trees)
    return float(total[0]) if single else total


def rf_save(model: ForestModel, path) -> None:
    counts = [len(t.feature) for t in model.trees]
    meta = {
        "n_features": model.n_features,
        "n_trees": len(model.trees),
        "node_counts": counts,
        "oob_score": model.oob_score,
        "fingerprint": model.fingerprint,
        "params": {
            "n_trees": model.params.n_trees,
            "max_depth": model.params.max_depth,
            "min_leaf": model.params.min_leaf,
            "features_per_split": model.params.features_per_split,
            "bootstrap": model.params.bootstrap,
            "seed": model.params.seed,
            "neg_pos_ratio": model.params.neg_pos_ratio,
            "class_weight": model.params.class_weight,
        },
    }
    arrays = {
        "feature": np.concatenate([t.feature for t in model.trees]),
        "threshold": np.concatenate([t.threshold for t in model.trees]),
        "left": np.concatenate([t.left for t in model.trees]),
        "right": np.concatenate([t.right for t in model.trees]),
        "value": np.concatenate([t.value for t in model.trees]),
    }
    write_container(path, MODEL_KIND, MODEL_VERSION, meta, arrays)


def rf_load(path) -> ForestModel:
    meta, arrays = read_container(path, MODEL_KIND, MODEL_VERSION)
    counts = meta["node_counts"]
    offsets = np.concatenate([[0], np.cumsum(counts)])
    trees = []
    for i in range(meta["n_trees"]):
        lo, hi = offsets[i], offsets[i + 1]
        trees.append(
            _Tree(
                feature=arrays["feature"][lo:hi].astype(np.int32),
                threshold=arrays["threshold"][lo:hi].astype(np.float64),
                left=arrays["left"][lo:hi].astype(np.int32),
                right=arrays["right"][lo:hi].astype(np.int32),
                value=arrays["value"][lo:hi].astype(np.float64),
            )
        )
    p = meta["params"]
    params = RfParams(
        n_trees=p["n_trees"],
        max_depth=p["max_depth"],
        min_leaf=p["min_leaf"],
        features_per_split=p["features_per_split"],
        bootstrap=p["bootstrap"],
        seed=p["seed"],
        neg_pos_ratio=p["neg_pos_ratio"],
        class_weight=p["class_weight"],
    )
    return ForestModel(
        trees=trees,
        n_features=meta["n_features"],
        params=params,
        oob_score=meta.get("oob_score"),
        fingerprint=meta.get("fingerprint", ""),
    )
