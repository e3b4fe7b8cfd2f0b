"""Metric suite: BLEU, length deltas, APT, contrastive accuracy and split reports."""

from .contrastive import (
    contrastive_accuracy,
    contrastive_eval,
    instance_sample,
    is_correct,
    model_scorer,
    random_scorer,
)
from .metrics import EvalReport, MetricError, PronounLexicon, apt, bleu, bleu_from_stats, bleu_stats, length_report
from .report import (
    format_table,
    read_reports,
    reports_from_json,
    reports_table,
    reports_to_json,
    split_eval,
    write_reports,
)
