"""End-to-end protocol execution and scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import AUTO, PipelineConfig
from .evaluation import (
    Alignment,
    MetricsReport,
    NoveltyCount,
    SessionScore,
    align_new_labels,
    forgetting_rate,
    novelty_rate,
    session_accuracies,
)
from .pipeline import ModelStore, SessionOutcome, classify_batch, run_offline, run_online_session
from .splits import SessionSplit
from .variational import FitTrace


@dataclass
class RunResult:
    store: ModelStore
    report: MetricsReport
    outcomes: list[SessionOutcome]
    alignment: Alignment
    test_predictions: list[np.ndarray] = field(default_factory=list)


def run_protocol(
    split: SessionSplit,
    config: PipelineConfig,
    collect_det_traces: bool = False,
) -> RunResult:
    """Run offline plus every online session and score the whole run.

    Discovered classes are matched to ground-truth classes once, on the
    final session's cumulative test predictions, and that alignment is held
    fixed for all per-session reporting. The forgetting rate compares
    accuracy on the originally labeled classes' test samples between the
    offline model and the final model.
    """
    store = ModelStore.empty()
    fit_traces: dict[int, FitTrace] = {}
    run_offline(store, split.offline, config, traces_out=fit_traces)

    metric = config.classifier_metric
    test_predictions = [classify_batch(store, split.tests[0].data, metric)[0]]
    outcomes: list[SessionOutcome] = []
    for session in range(1, split.num_sessions + 1):
        num_new = AUTO if config.estimate_new_classes else split.new_classes_per_session[session - 1]
        _, outcome = run_online_session(store, split.masked_online(session), num_new, config)
        outcomes.append(outcome)
        fit_traces.update(outcome.fit_traces)
        test_predictions.append(classify_batch(store, split.tests[session].data, metric)[0])

    labeled_count = split.labeled_class_count
    final_truth = split.tests[-1].labels
    alignment = align_new_labels(test_predictions[-1], final_truth, labeled_count)

    per_session: list[SessionScore] = []
    acc_new_values: list[float] = []
    for session in range(split.num_sessions + 1):
        truth = split.tests[session].labels
        aligned = alignment.apply(test_predictions[session])
        old_count = split.known_classes_before(session) if session >= 1 else labeled_count
        acc_all, acc_old, acc_new = session_accuracies(aligned, truth, old_count)
        if session == 0:
            acc_old, acc_new = None, None
        n_old = int(np.count_nonzero(truth < old_count)) if session >= 1 else 0
        n_new = truth.size - n_old if session >= 1 else 0
        per_session.append(
            SessionScore(
                session=session,
                n_all=int(truth.size),
                n_old=n_old,
                n_new=n_new,
                acc_all=acc_all,
                acc_old=acc_old,
                acc_new=acc_new,
            )
        )
        if session >= 1 and acc_new is not None:
            acc_new_values.append(acc_new)

    offline_truth = split.tests[0].labels
    base_mask = offline_truth < labeled_count
    acc_labeled_s0 = float(np.mean(test_predictions[0][base_mask] == offline_truth[base_mask]))
    final_mask = final_truth < labeled_count
    final_aligned = alignment.apply(test_predictions[-1])
    acc_labeled_final = float(np.mean(final_aligned[final_mask] == final_truth[final_mask]))
    m_f = forgetting_rate(acc_labeled_s0, acc_labeled_final)
    m_d = novelty_rate(acc_new_values) if acc_new_values else 0.0

    novelty_counts: list[NoveltyCount] = []
    for session, outcome in enumerate(outcomes, start=1):
        truth = split.online_truth(session)
        true_new_mask = truth >= split.known_classes_before(session)
        pred_new_mask = outcome.predicted_labels >= outcome.known_classes_before
        novelty_counts.append(
            NoveltyCount(
                session=session,
                predicted_novel=int(pred_new_mask.sum()),
                true_novel=int(true_new_mask.sum()),
                correct_novel=int(np.count_nonzero(pred_new_mask & true_new_mask)),
                total=int(truth.size),
            )
        )

    det_traces = None
    if collect_det_traces:
        det_traces = {cid: list(trace.log_det_cov) for cid, trace in sorted(fit_traces.items())}

    report = MetricsReport(
        per_session=per_session,
        m_f=m_f,
        m_d=m_d,
        novelty_detection=novelty_counts,
        det_traces=det_traces,
    )
    return RunResult(
        store=store,
        report=report,
        outcomes=outcomes,
        alignment=alignment,
        test_predictions=test_predictions,
    )
