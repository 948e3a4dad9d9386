"""Multinomial logit: probabilities, log likelihood, analytic score, estimation.

Utilities are linear in the coded columns; probabilities are max-subtracted
softmaxes within each task. The log likelihood is globally concave, so
estimation starts from zeros and any converged optimum is the optimum.
"""

from __future__ import annotations

import numpy as np

from .dataset import CodedPanel
from .errors import EstimationError
from .numerics import OptimizerOptions, bfgs_minimize, hessian_from_grad
from .results import EstimationResult, implied_base_levels, two_sided_p

__all__ = [
    "mnl_probabilities",
    "mnl_loglik",
    "mnl_gradient",
    "estimate_mnl",
]


def mnl_probabilities(params: np.ndarray, task_rows: np.ndarray) -> np.ndarray:
    """Choice probabilities for one task: softmax of row utilities."""
    rows = np.atleast_2d(np.asarray(task_rows, dtype=np.float64))
    u = rows @ np.asarray(params, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise EstimationError("non_finite_utility", "non-finite utility in task")
    e = np.exp(u - np.max(u))
    return e / e.sum()


def _check_params(params: np.ndarray, panel: CodedPanel) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (panel.X.shape[1],):
        raise EstimationError(
            "parameter_mismatch",
            f"expected {panel.X.shape[1]} parameters, got {params.shape}")
    return params


def _panel_softmax(params: np.ndarray, panel: CodedPanel):
    """Per-row probabilities and per-task chosen log probabilities."""
    starts = panel.task_ptr[:-1]
    sizes = panel.task_sizes
    u = panel.X @ params
    if not np.all(np.isfinite(u)):
        bad_row = int(np.flatnonzero(~np.isfinite(u))[0])
        task = int(np.searchsorted(panel.task_ptr, bad_row, side="right") - 1)
        raise EstimationError("non_finite_utility",
                              f"non-finite utility at task index {task}")
    shifted = u - np.repeat(np.maximum.reduceat(u, starts), sizes)
    e = np.exp(shifted)
    denom = np.add.reduceat(e, starts)
    prob_rows = e / np.repeat(denom, sizes)
    log_chosen = shifted[panel.chosen_row] - np.log(denom)
    return prob_rows, log_chosen


def mnl_loglik(params: np.ndarray, panel: CodedPanel) -> float:
    params = _check_params(params, panel)
    _, log_chosen = _panel_softmax(params, panel)
    return float(log_chosen.sum())


def mnl_gradient(params: np.ndarray, panel: CodedPanel) -> np.ndarray:
    """Score of the log likelihood: sum over tasks of x_chosen - E[x]."""
    params = _check_params(params, panel)
    prob_rows, _ = _panel_softmax(params, panel)
    return panel.X[panel.chosen_row].sum(axis=0) - prob_rows @ panel.X


def _loglik_and_grad(params: np.ndarray, panel: CodedPanel) -> tuple[float, np.ndarray]:
    prob_rows, log_chosen = _panel_softmax(params, panel)
    grad = panel.X[panel.chosen_row].sum(axis=0) - prob_rows @ panel.X
    return float(log_chosen.sum()), grad


def check_identification(panel: CodedPanel) -> None:
    """Every coded column must vary within at least one task; a column
    constant within every task cancels out of all probabilities."""
    starts = panel.task_ptr[:-1]
    sizes = panel.task_sizes
    means = np.add.reduceat(panel.X, starts, axis=0) / sizes[:, None]
    centered = panel.X - np.repeat(means, sizes, axis=0)
    dead = np.max(np.abs(centered), axis=0) == 0.0
    if np.any(dead):
        names = [panel.index.entries[i].name for i in np.flatnonzero(dead)]
        raise EstimationError("degenerate_column",
                              "no within-task variation for parameter(s): "
                              + ", ".join(names))


def _inference(hessian_of_negll: np.ndarray, params: np.ndarray):
    """Standard errors and p-values from the observed information matrix;
    (None, None) when it is singular or not positive definite."""
    try:
        cov = np.linalg.inv(hessian_of_negll)
    except np.linalg.LinAlgError:
        return None, None
    diag = np.diag(cov)
    if np.any(~np.isfinite(diag)) or np.any(diag <= 0):
        return None, None
    se = np.sqrt(diag)
    p = np.array([two_sided_p(b, s) for b, s in zip(params, se)])
    return se, p


def estimate_mnl(panel: CodedPanel,
                 options: OptimizerOptions | None = None) -> EstimationResult:
    """Maximize the MNL log likelihood from a zero start.

    Standard errors come from the inverse of the finite-difference Hessian of
    the negative log likelihood (observed information) built on the analytic
    gradient; they are flagged unavailable (None) when that matrix is
    singular. Non-convergence is reported through ``converged``, not raised.
    """
    check_identification(panel)
    options = options or OptimizerOptions()

    def objective(x):
        ll, grad = _loglik_and_grad(x, panel)
        return -ll, -grad

    k = panel.X.shape[1]
    res = bfgs_minimize(objective, np.zeros(k), options)

    hess = hessian_from_grad(lambda x: -mnl_gradient(x, panel), res.x)
    se, p = _inference(hess, res.x)

    return EstimationResult(
        index=panel.index,
        params=res.x,
        std_errors=se,
        p_values=p,
        ll_final=float(-res.fun),
        ll_null=panel.null_loglik(),
        converged=res.converged,
        iterations=res.iterations,
        model="mnl",
        base_levels=implied_base_levels(panel.schema, panel.index, res.x),
        n_respondents=panel.n_respondents,
        n_tasks=panel.n_tasks,
    )
