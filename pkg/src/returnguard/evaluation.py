"""Ranking and threshold metrics plus the feature-group ablation ladder."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


def _arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if s.size == 0:
        raise ValueError("empty scored set")
    return s, y


def _require_both_classes(y: np.ndarray) -> tuple[int, int]:
    pos = int(y.sum())
    neg = int(y.size - pos)
    if pos == 0 or neg == 0:
        raise ValueError("need at least one positive and one negative label")
    return pos, neg


def average_ranks(s: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean rank."""
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    boundaries = np.flatnonzero(np.diff(sorted_s)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [s.size]))
    ranks = np.empty(s.size, dtype=np.float64)
    mean_rank = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(mean_rank, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: (concordant + 0.5 * tied pairs) / (P * N)."""
    s, y = _arrays(scores, labels)
    pos, neg = _require_both_classes(y)
    r = average_ranks(s)
    u = r[y].sum() - pos * (pos + 1) / 2.0
    return float(u / (pos * neg))


def roc_curve(scores, labels) -> list[tuple[float, float]]:
    """(fpr, tpr) points, one per distinct score, from (0, 0) to (1, 1)."""
    s, y = _arrays(scores, labels)
    pos, neg = _require_both_classes(y)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.flatnonzero(np.r_[np.diff(s) != 0, True])
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    points = [(0.0, 0.0)]
    points += [(float(f / neg), float(t / pos)) for f, t in zip(fp, tp)]
    return points


def trapezoid_area(points: Sequence[tuple[float, float]]) -> float:
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def pr_at_thresholds(scores, labels, thresholds) -> list[tuple[float, float, float]]:
    """(threshold, precision, recall) with positives predicted at score >= threshold.

    Precision is 1.0 when nothing is predicted positive; recall is 0.0 when
    there are no positive labels.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    total_pos = int(y.sum())
    out = []
    for t in thresholds:
        pred = s >= t
        tp = int((pred & y).sum())
        fp = int((pred & ~y).sum())
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = tp / total_pos if total_pos else 0.0
        out.append((float(t), precision, recall))
    return out


def stratified_split(labels, eval_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded per-class shuffle; returns sorted (train_idx, eval_idx)."""
    y = np.asarray(labels).astype(bool)
    rng = np.random.default_rng(seed)
    train, held = [], []
    for cls in (False, True):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        k = int(round(eval_fraction * idx.size))
        held.append(idx[:k])
        train.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(held))


# --------------------------------------------------------------------------
# Ablation ladder

VARIANTS = (
    ("Baseline", ("basic",), "gbdt"),
    ("Higher Level Aggregates", ("basic", "eng"), "gbdt"),
    ("BPR based Embedding", ("basic", "eng", "bpr"), "gbdt"),
    ("Word2Vec based Sizing Vector", ("basic", "eng", "bpr", "size"), "gbdt"),
    ("Fully Connected Network", ("basic", "eng", "bpr", "size"), "mlp"),
)
REPORT_THRESHOLD = 0.5
CURVE_THRESHOLDS = tuple(round(0.01 * i, 2) for i in range(101))


@dataclass
class AblationRow:
    variant: str
    groups: tuple[str, ...]
    model: str
    n_features: int
    auc: float
    precision: float
    recall: float
    eval_scores: np.ndarray


@dataclass
class AblationDataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_eval: np.ndarray
    y_eval: np.ndarray
    names: list[str]

    def columns(self, groups: Sequence[str]) -> np.ndarray:
        return np.array([i for i, n in enumerate(self.names) if n.split(":", 1)[0] in groups],
                        dtype=np.int64)


def ablation_report(data: AblationDataset, gbm_config=None, mlp_config=None) -> list[AblationRow]:
    """Train and score the five model variants in order on a fixed split."""
    from . import cartnet, productgbm

    gbm_config = gbm_config or productgbm.GbmConfig.desk()
    mlp_config = mlp_config or cartnet.TrainConfig()
    rows = []
    for name, groups, kind in VARIANTS:
        cols = data.columns(groups)
        xtr, xev = data.x_train[:, cols], data.x_eval[:, cols]
        if kind == "gbdt":
            model = productgbm.fit(xtr, data.y_train, gbm_config)
            scores = productgbm.predict_many(model, xev)
        else:
            model = cartnet.train(xtr, data.y_train, mlp_config)
            scores = cartnet.predict_many(model, xev)
        (_, precision, recall), = pr_at_thresholds(scores, data.y_eval, [REPORT_THRESHOLD])
        rows.append(AblationRow(name, groups, kind, int(cols.size), auc(scores, data.y_eval),
                                precision, recall, scores))
    return rows


def write_ablation(rows: Sequence[AblationRow], y_eval, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / f for k, f in (("table", "ablation.csv"), ("text", "ablation.txt"),
                                     ("roc", "roc.csv"), ("pr", "pr.csv"))}
    with open(paths["table"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "model", "n_features", "auc", "precision", "recall"])
        for r in rows:
            w.writerow([r.variant, r.model, r.n_features, f"{r.auc:.6f}", f"{r.precision:.6f}",
                        f"{r.recall:.6f}"])
    paths["text"].write_text(render_table(rows))
    with open(paths["roc"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "fpr", "tpr"])
        for r in rows:
            for fpr, tpr in roc_curve(r.eval_scores, y_eval):
                w.writerow([r.variant, f"{fpr:.6f}", f"{tpr:.6f}"])
    with open(paths["pr"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "threshold", "precision", "recall"])
        for r in rows:
            for t, p, rc in pr_at_thresholds(r.eval_scores, y_eval, CURVE_THRESHOLDS):
                w.writerow([r.variant, f"{t:.2f}", f"{p:.6f}", f"{rc:.6f}"])
    return paths


def render_table(rows: Sequence[AblationRow]) -> str:
    header = ("Model", "AUC", "Precision", "Recall")
    body = [(r.variant, f"{100 * r.auc:.1f}", f"{100 * r.precision:.1f}", f"{100 * r.recall:.1f}")
            for r in rows]
    widths = [max(len(x[i]) for x in [header, *body]) for i in range(4)]
    fmt = "  ".join(f"{{:<{w}}}" if i == 0 else f"{{:>{w}}}" for i, w in enumerate(widths))
    lines = [fmt.format(*header), "  ".join("-" * w for w in widths)]
    lines += [fmt.format(*b) for b in body]
    return "\n".join(lines) + "\n"
