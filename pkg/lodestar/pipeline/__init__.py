"""
Pipeline package runs the retrieval loop and builds the enriched prompt.

Use :func:`run` for a single prompt and :func:`run_batch` for many. The individual stages are exported for callers
that drive the loop themselves.
"""

from .cost import CostReport, CostTracker, STAGES, report_cost  # noqa: F401
from .policy import IterationPolicy  # noqa: F401
from .run import RunBundle, run, run_batch, load_bundle, load_artifact  # noqa: F401
from .stages import (RunContext, bootstrap, plan_round, retrieve_round, accumulate, decide,  # noqa: F401
                     refine_and_extend, extend_without_evidence)
from .state import QueryPlan, SufficiencyDecision, EnrichedPrompt, RunState, RunStatus  # noqa: F401
