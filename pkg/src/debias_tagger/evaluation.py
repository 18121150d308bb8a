"""Token accuracy, confusion matrices and export of the learned bias matrix."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import TagSet


class EvaluationError(ValueError):
    pass


def _flatten(pred: Sequence[Sequence[int]], gold: Sequence[Sequence[int]]):
    if len(pred) != len(gold):
        raise EvaluationError(f"{len(pred)} predicted sentences but {len(gold)} gold sentences")
    p, g = [], []
    for i, (ps, gs) in enumerate(zip(pred, gold)):
        if len(ps) != len(gs):
            raise EvaluationError(f"sentence {i}: {len(ps)} predicted tags but {len(gs)} gold tags")
        p.extend(ps)
        g.extend(gs)
    return np.asarray(p, dtype=np.int64), np.asarray(g, dtype=np.int64)


def token_accuracy(pred, gold) -> float:
    p, g = _flatten(pred, gold)
    if p.size == 0:
        raise EvaluationError("no tokens to score")
    return float(np.mean(p == g))


def confusion(pred, gold, k: int) -> np.ndarray:
    """Counts ``[g, p]`` of tokens with gold tag ``g`` predicted as ``p``."""
    p, g = _flatten(pred, gold)
    m = np.zeros((k, k), dtype=np.int64)
    np.add.at(m, (g, p), 1)
    return m


@dataclass
class EvalReport:
    accuracy: float
    token_count: int
    precision: np.ndarray
    recall: np.ndarray
    confusion: np.ndarray
    tagset: TagSet

    def to_text(self) -> str:
        lines = [f"accuracy {self.accuracy:.4f}", f"tokens {self.token_count}",
                 f"{'tag':<8}{'prec':>8}{'recall':>8}{'support':>9}"]
        support = self.confusion.sum(axis=1)
        for i, label in enumerate(self.tagset.labels):
            lines.append(f"{label:<8}{self.precision[i]:>8.4f}{self.recall[i]:>8.4f}{support[i]:>9d}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["accuracy", f"{self.accuracy:.6f}"])
        w.writerow(["tokens", self.token_count])
        w.writerow([])
        w.writerow(["tag", "precision", "recall", "support"])
        support = self.confusion.sum(axis=1)
        for i, label in enumerate(self.tagset.labels):
            w.writerow([label, f"{self.precision[i]:.6f}", f"{self.recall[i]:.6f}", support[i]])
        w.writerow([])
        w.writerow(["gold\\pred", *self.tagset.labels])
        for label, row in zip(self.tagset.labels, self.confusion):
            w.writerow([label, *row.tolist()])
        return buf.getvalue()


def evaluate(pred, gold, tagset: TagSet) -> EvalReport:
    m = confusion(pred, gold, tagset.size)
    total = int(m.sum())
    if total == 0:
        raise EvaluationError("no tokens to score")
    diag = np.diag(m).astype(float)
    col = m.sum(axis=0)
    row = m.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / col, 0.0)
        recall = np.where(row > 0, diag / row, 0.0)
    return EvalReport(float(diag.sum() / total), total, precision, recall, m, tagset)


def bias_to_csv(A: np.ndarray, gold_tagset: TagSet, proj_tagset: TagSet) -> str:
    """Rows are gold tags, columns projected tags."""
    A = np.asarray(A)
    if A.shape != (gold_tagset.size, proj_tagset.size):
        raise EvaluationError(f"bias matrix shape {A.shape} does not match the tagsets")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["", *proj_tagset.labels])
    for label, row in zip(gold_tagset.labels, A):
        w.writerow([label, *(f"{v:.6f}" for v in row)])
    return buf.getvalue()


def export_bias(model, path) -> None:
    text = bias_to_csv(model.params.A, model.gold_tagset, model.proj_tagset)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def read_bias_csv(path) -> tuple[np.ndarray, TagSet, TagSet]:
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows or len(rows) < 2:
        raise EvaluationError(f"{path}: bias CSV needs a header and at least one row")
    proj = TagSet(rows[0][1:])
    gold = TagSet(r[0] for r in rows[1:])
    try:
        A = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except ValueError as e:
        raise EvaluationError(f"{path}: {e}") from None
    if A.shape != (gold.size, proj.size):
        raise EvaluationError(f"{path}: ragged bias CSV")
    return A, gold, proj
