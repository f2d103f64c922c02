"""Test-then-train harness, sweeps and reports.

Sweep and report helpers live in ``streamcash.evaluation.sweep`` and
``streamcash.evaluation.report``; they are not imported here so that the
adaptation layer can use the harness without a cycle.
"""

from .harness import PurityAudit, evaluate_chunk

__all__ = ["PurityAudit", "evaluate_chunk"]
