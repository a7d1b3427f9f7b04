"""Solver run summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SolverReport"]


@dataclass(frozen=True)
class SolverReport:
    """Per-run iterate summary shared by all solvers.

    Traces are aligned: entry k describes iteration k+1, and every trace has
    length ``iterations``.
    """

    iterations: int
    objective_trace: np.ndarray
    primal_residual_trace: np.ndarray
    dual_residual_trace: np.ndarray
    stop_reason: str
    wall_time: float

    def __post_init__(self):
        for name in ("objective_trace", "primal_residual_trace", "dual_residual_trace"):
            trace = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, trace)
            if trace.size != self.iterations:
                raise ValueError(
                    f"{name} has length {trace.size}, expected {self.iterations}"
                )

    def to_dict(self) -> dict:
        return {
            "iterations": int(self.iterations),
            "stop_reason": self.stop_reason,
            "wall_time": float(self.wall_time),
            "final_objective": float(self.objective_trace[-1]) if self.iterations else None,
            "final_primal_residual": float(self.primal_residual_trace[-1]) if self.iterations else None,
            "final_dual_residual": float(self.dual_residual_trace[-1]) if self.iterations else None,
        }
