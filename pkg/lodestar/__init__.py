"""
Lodestar enriches text-to-image prompts with knowledge retrieved from the open web and evaluates the results.

Sub-packages: :mod:`lodestar.knowledge` (evidence and knowledge base), :mod:`lodestar.gateways` (replayable external
services), :mod:`lodestar.pipeline` (the retrieval loop) and :mod:`lodestar.fig_eval` (evaluation).
"""
