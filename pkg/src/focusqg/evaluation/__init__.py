from .metrics import (MetricError, UndefinedCorrelation, bleu, count_unique, meteor_simplified,
                      pearson_agreement, rouge_l)
from .report import MetricReport, ReferenceSet, evaluate, write_report

__all__ = ["MetricError", "UndefinedCorrelation", "bleu", "count_unique", "meteor_simplified",
           "pearson_agreement", "rouge_l", "MetricReport", "ReferenceSet", "evaluate",
           "write_report"]
