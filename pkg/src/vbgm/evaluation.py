"""Scoring: label alignment, accuracy metrics, and the session report."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyList, LengthMismatch, NonFiniteCost

UNMATCHED = -1

SCHEMA_VERSION = 1


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost injective row-to-column assignment of size min(k, m).

    Raises
    ------
    NonFiniteCost : any entry is NaN or infinite.
    """
    matrix = np.asarray(cost, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValueError(f"cost must be a non-empty 2-D matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteCost("cost matrix contains NaN or Inf")
    rows, cols = linear_sum_assignment(matrix)
    return sorted(zip((int(r) for r in rows), (int(c) for c in cols)))


@dataclass
class Alignment:
    """Injective map from predicted novel ids to ground-truth ids.

    Ids below `old_count` map to themselves; unmatched predicted ids map to
    the sentinel -1, which never equals a ground-truth label.
    """

    old_count: int
    mapping: dict[int, int]

    def resolve(self, predicted: int) -> int:
        if predicted < self.old_count:
            return predicted
        return self.mapping.get(predicted, UNMATCHED)

    def apply(self, predicted) -> np.ndarray:
        labels = np.asarray(predicted, dtype=np.int64)
        out = labels.copy()
        for i, p in enumerate(labels):
            out[i] = self.resolve(int(p))
        return out


def align_new_labels(pred, truth, old_count: int) -> Alignment:
    """Match predicted novel ids to ground-truth novel ids by overlap.

    Builds the contingency table between predicted ids >= old_count and
    ground-truth ids >= old_count, then solves the assignment on negated
    counts. Equal-count ties break toward the lower ground-truth id.
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"pred length {pred.size} != truth length {truth.size}")
    pred_ids = np.unique(pred[pred >= old_count])
    truth_ids = np.unique(truth[truth >= old_count])
    if pred_ids.size == 0 or truth_ids.size == 0:
        return Alignment(old_count=old_count, mapping={})
    counts = np.zeros((pred_ids.size, truth_ids.size), dtype=np.float64)
    for i, p in enumerate(pred_ids):
        mask = pred == p
        for j, t in enumerate(truth_ids):
            counts[i, j] = np.count_nonzero(truth[mask] == t)
    # Tiny column penalty: among equal-overlap assignments prefer the
    # lower ground-truth id, keeping the result deterministic.
    cost = -counts + 1e-9 * np.arange(truth_ids.size)[None, :]
    pairs = hungarian(cost)
    mapping = {int(pred_ids[i]): int(truth_ids[j]) for i, j in pairs}
    return Alignment(old_count=old_count, mapping=mapping)


def session_accuracies(
    pred_aligned,
    truth,
    old_count_at_session: int,
) -> tuple[float, Optional[float], Optional[float]]:
    """(acc_all, acc_old, acc_new) for one cumulative test set.

    `acc_old` covers samples whose true class predates the session,
    `acc_new` the session's newly introduced classes; either is None when
    its partition is empty.
    """
    pred = np.asarray(pred_aligned, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    if pred.shape != true.shape:
        raise LengthMismatch(f"pred length {pred.size} != truth length {true.size}")
    if pred.size == 0:
        raise EmptyList("cannot score an empty test set")
    hits = pred == true
    acc_all = float(hits.mean())
    old_mask = true < old_count_at_session
    new_mask = ~old_mask
    acc_old = float(hits[old_mask].mean()) if old_mask.any() else None
    acc_new = float(hits[new_mask].mean()) if new_mask.any() else None
    return acc_all, acc_old, acc_new


def forgetting_rate(acc_labeled_at_s0: float, acc_labeled_at_sT: float) -> float:
    """Accuracy drop on the originally labeled classes over the run."""
    return acc_labeled_at_s0 - acc_labeled_at_sT


def novelty_rate(acc_new_per_session) -> float:
    """Mean new-class accuracy across the online sessions."""
    values = [float(v) for v in acc_new_per_session]
    if not values:
        raise EmptyList("novelty rate needs at least one session accuracy")
    return float(np.mean(values))


@dataclass
class SessionScore:
    session: int
    n_all: int
    n_old: int
    n_new: int
    acc_all: float
    acc_old: Optional[float]
    acc_new: Optional[float]


@dataclass
class NoveltyCount:
    session: int
    predicted_novel: int
    true_novel: int
    correct_novel: int
    total: int


@dataclass
class MetricsReport:
    """Per-session accuracies plus run-level forgetting and novelty rates."""

    per_session: list[SessionScore]
    m_f: float
    m_d: float
    novelty_detection: list[NoveltyCount] = field(default_factory=list)
    det_traces: Optional[dict[int, list[float]]] = None

    def __post_init__(self):
        for entry in self.per_session:
            if entry.acc_old is None or entry.acc_new is None:
                continue
            combined = entry.acc_old * entry.n_old + entry.acc_new * entry.n_new
            assert abs(entry.acc_all * entry.n_all - combined) <= 1e-9 * max(1, entry.n_all)
        news = [e.acc_new for e in self.per_session if e.acc_new is not None]
        if news:
            assert abs(self.m_d - float(np.mean(news))) <= 1e-12

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "per_session": [
                {
                    "session": e.session,
                    "acc_all": e.acc_all,
                    "acc_old": e.acc_old,
                    "acc_new": e.acc_new,
                    "n_all": e.n_all,
                    "n_old": e.n_old,
                    "n_new": e.n_new,
                }
                for e in self.per_session
            ],
            "m_f": self.m_f,
            "m_d": self.m_d,
            "novelty_detection": [
                {
                    "session": e.session,
                    "predicted_novel": e.predicted_novel,
                    "true_novel": e.true_novel,
                    "correct_novel": e.correct_novel,
                    "total": e.total,
                }
                for e in self.novelty_detection
            ],
            "det_traces": (
                {str(cid): series for cid, series in sorted(self.det_traces.items())}
                if self.det_traces is not None
                else None
            ),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, payload: dict) -> "MetricsReport":
        if payload.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema: {payload.get('schema_version')}")
        per_session = [
            SessionScore(
                session=int(e["session"]),
                n_all=int(e["n_all"]),
                n_old=int(e["n_old"]),
                n_new=int(e["n_new"]),
                acc_all=float(e["acc_all"]),
                acc_old=None if e["acc_old"] is None else float(e["acc_old"]),
                acc_new=None if e["acc_new"] is None else float(e["acc_new"]),
            )
            for e in payload["per_session"]
        ]
        novelty = [
            NoveltyCount(
                session=int(e["session"]),
                predicted_novel=int(e["predicted_novel"]),
                true_novel=int(e["true_novel"]),
                correct_novel=int(e["correct_novel"]),
                total=int(e["total"]),
            )
            for e in payload.get("novelty_detection", [])
        ]
        traces = payload.get("det_traces")
        det_traces = (
            {int(cid): [float(v) for v in series] for cid, series in traces.items()}
            if traces is not None
            else None
        )
        return cls(
            per_session=per_session,
            m_f=float(payload["m_f"]),
            m_d=float(payload["m_d"]),
            novelty_detection=novelty,
            det_traces=det_traces,
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))

    def write_csv(self, path) -> None:
        """Flat per-session rows; run-level rates repeat on every row."""
        novelty_by_session = {e.session: e for e in self.novelty_detection}
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                [
                    "session",
                    "acc_all",
                    "acc_old",
                    "acc_new",
                    "n_all",
                    "predicted_novel",
                    "true_novel",
                    "correct_novel",
                    "m_f",
                    "m_d",
                ]
            )
            for entry in self.per_session:
                novelty = novelty_by_session.get(entry.session)
                writer.writerow(
                    [
                        entry.session,
                        repr(entry.acc_all),
                        "" if entry.acc_old is None else repr(entry.acc_old),
                        "" if entry.acc_new is None else repr(entry.acc_new),
                        entry.n_all,
                        "" if novelty is None else novelty.predicted_novel,
                        "" if novelty is None else novelty.true_novel,
                        "" if novelty is None else novelty.correct_novel,
                        repr(self.m_f),
                        repr(self.m_d),
                    ]
                )

    def render_table(self) -> str:
        """Human-readable summary for the CLI report command."""

        def fmt(value: Optional[float]) -> str:
            return "   -  " if value is None else f"{100.0 * value:6.2f}"

        lines = ["session   all     old     new   novel(pred/true)"]
        novelty_by_session = {e.session: e for e in self.novelty_detection}
        for entry in self.per_session:
            novelty = novelty_by_session.get(entry.session)
            tail = f"{novelty.predicted_novel:5d}/{novelty.true_novel:<5d}" if novelty else "     -"
            lines.append(
                f"S{entry.session:<7d}{fmt(entry.acc_all)}  {fmt(entry.acc_old)}  "
                f"{fmt(entry.acc_new)}  {tail}"
            )
        lines.append(f"forgetting rate: {100.0 * self.m_f:.2f}")
        lines.append(f"novelty learning rate: {100.0 * self.m_d:.2f}")
        return "\n".join(lines)
