"""
Fig_eval package scores generated images against true/false questions with a judge model.

Load a dataset with :func:`load_dataset`, then use :func:`evaluate_run` to judge a set of runs and compose the
report. Scores are exact fractions until they are rendered.
"""

from .correlation import Correlations, UndefinedCorrelationError, correlations, kendall_tau_b, pearson, spearman  # noqa: F401,E501
from .dataset import Dataset, DatasetError, EvalQuestion, Judgment, load_dataset  # noqa: F401
from .judging import alignment_score, judge_question, parse_verdict  # noqa: F401
from .report import EvalReport, evaluate_run  # noqa: F401
from .scoring import (AlignmentScore, CoverageError, Grouping, PromptScore, ReportTable,  # noqa: F401
                      macro_average, score_prompt)
