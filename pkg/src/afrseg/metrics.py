"""Confusion-matrix accumulation and per-class IoU / mIoU."""

import numpy as np


class ConfusionMatrix:
    """C x C counts, rows = ground truth, cols = prediction."""

    def __init__(self, num_classes):
        if num_classes < 1:
            raise ValueError("ConfusionMatrix: need at least one class")
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, pred, truth, ignore_id=255):
        """Count non-ignored pixels; class ids must lie in [0, C)."""
        pred = np.asarray(pred)
        truth = np.asarray(truth)
        if pred.shape != truth.shape:
            raise ValueError(f"accumulate: shape mismatch {pred.shape} vs {truth.shape}")
        keep = truth != ignore_id
        p = pred[keep]
        t = truth[keep]
        c = self.num_classes
        if p.size and (p.min() < 0 or p.max() >= c):
            raise ValueError(f"accumulate: prediction id outside [0,{c})")
        if t.size and (t.min() < 0 or t.max() >= c):
            raise ValueError(f"accumulate: truth id outside [0,{c})")
        self.counts += np.bincount(t * c + p, minlength=c * c).reshape(c, c)
        return self

    def iou(self):
        """(per-class IoU list with None for absent classes, mIoU)."""
        diag = np.diag(self.counts)
        denom = self.counts.sum(axis=0) + self.counts.sum(axis=1) - diag
        per_class = [None if d == 0 else float(i) / float(d)
                     for i, d in zip(diag, denom)]
        present = [v for v in per_class if v is not None]
        if not present:
            raise ValueError("iou: no class present in the matrix")
        return per_class, sum(present) / len(present)
