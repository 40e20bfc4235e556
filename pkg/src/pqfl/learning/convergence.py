"""Convergence-rate analysis of SGD loss traces.

``fit_convergence`` regresses log(f(w_t) - f*) on log(t) over the trailing
half of a trace; the slope is the empirical convergence exponent (-0.5 for a
1/sqrt(t) law). The guarantee being checked is an upper bound, so observed
exponents at or below it are consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import FitError

MIN_TRACE_LEN = 64


@dataclass(frozen=True)
class ConvergenceReport:
    loss_trace: np.ndarray
    fitted_exponent: float
    gradient_bound_B: float
    smoothness_estimate_L: float
    fit_window: tuple[int, int]  # 1-based step range [start, end] of the fit

    def __post_init__(self):
        trace = np.asarray(self.loss_trace, dtype=np.float64)
        trace.setflags(write=False)
        object.__setattr__(self, "loss_trace", trace)


def fit_convergence(
    loss_trace,
    optimum_estimate: float,
    *,
    grad_norms=None,
    smoothness_ratios=None,
) -> ConvergenceReport:
    """Fit the decay exponent of the optimality gap.

    ``optimum_estimate`` is f* from a long reference run or a direct solver;
    it must sit at or below the trace within the fit window, otherwise the
    gap is not positive and there is nothing to fit (:class:`FitError`).
    ``grad_norms`` / ``smoothness_ratios`` are optional run diagnostics; when
    omitted the B and L fields are NaN.
    """
    trace = np.asarray(loss_trace, dtype=np.float64)
    if trace.ndim != 1 or trace.size < MIN_TRACE_LEN:
        raise ValueError(f"need a 1-D trace of >= {MIN_TRACE_LEN} losses")
    if not np.all(np.isfinite(trace)):
        raise ValueError("loss trace contains non-finite values")
    if not np.isfinite(optimum_estimate):
        raise ValueError("optimum_estimate must be finite")

    start = trace.size // 2  # trailing half
    steps = np.arange(1, trace.size + 1)
    gap = trace[start:] - optimum_estimate
    if np.any(gap <= 0):
        raise FitError(
            "optimality gap <= 0 inside the fit window: trace already at (or "
            "below) the supplied optimum"
        )

    slope, _ = np.polyfit(np.log(steps[start:]), np.log(gap), 1)
    B = float(np.max(grad_norms)) if grad_norms is not None else float("nan")
    L = float(np.max(smoothness_ratios)) if smoothness_ratios is not None else float("nan")
    return ConvergenceReport(
        loss_trace=trace,
        fitted_exponent=float(slope),
        gradient_bound_B=B,
        smoothness_estimate_L=L,
        fit_window=(start + 1, trace.size),
    )
