"""Component-wise gradient boosting with linear base-learners.

Each iteration fits every candidate column to the current negative
gradient by simple least squares through the origin (on mean-centered
columns) and moves the coefficient of the best-fitting column by a
step-length fraction ``nu`` of its fit. Fitting stops either after a
fixed number of iterations or once a target number of distinct
base-learners has been selected.

The intercept is handled by an offset fixed to the loss-minimizing
constant before the first iteration; it is not a selectable
base-learner and never counts toward the selection target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Family, empirical_risk, sigmoid

__all__ = [
    "BoostConfig",
    "BoostModel",
    "BoostingError",
    "NoFittableBaseLearner",
    "TargetNotReached",
    "init_offset",
    "boost_step",
    "fit",
    "fit_until_q",
]


class BoostingError(RuntimeError):
    pass


class NoFittableBaseLearner(BoostingError):
    """Every column is constant, nothing can describe the residuals."""


class TargetNotReached(BoostingError):
    """target_q distinct base-learners were not selected within m_max.

    Signals that the target is too large for the data or the step
    length too small for the iteration cap.
    """


@dataclass(frozen=True)
class BoostConfig:
    nu: float = 0.1
    m_max: int = 10000
    target_q: int | None = None

    def __post_init__(self):
        if not (0.0 < self.nu <= 1.0):
            raise ValueError(f"nu must be in (0, 1], got {self.nu}")
        if self.m_max < 1:
            raise ValueError(f"m_max must be >= 1, got {self.m_max}")
        if self.target_q is not None and self.target_q < 1:
            raise ValueError(f"target_q must be >= 1, got {self.target_q}")


@dataclass(frozen=True)
class BoostModel:
    """Fitted model state after ``m_done`` boosting iterations."""

    offset: float
    beta: np.ndarray
    selection_history: tuple[int, ...]
    m_done: int
    config: BoostConfig
    col_means: np.ndarray
    risk_path: tuple[float, ...] | None = None

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.offset + (X - self.col_means) @ self.beta

    @property
    def selected_set(self) -> frozenset[int]:
        return frozenset(self.selection_history)


def init_offset(data: Dataset) -> float:
    """Loss-minimizing constant: the mean for gaussian, clamped log-odds
    for binomial (clamp keeps all-0/all-1 responses finite)."""
    n = data.n
    if data.family == Family.GAUSSIAN:
        return float(np.mean(data.y))
    ybar = float(np.mean(data.y))
    ybar = min(max(ybar, 1.0 / (n + 1)), n / (n + 1.0))
    return float(np.log(ybar / (1.0 - ybar)))


class _FitState:
    """Mutable per-fit working state; one instance per fit call.

    Holds the centered design and its transpose plus the running linear
    predictor. All candidate scans are vectorized; ties in the residual
    sum of squares resolve to the lowest column index via argmax on a
    score array (first maximum wins).
    """

    __slots__ = (
        "data", "config", "Xc", "XT", "inv_colsq", "valid", "offset",
        "eta", "beta", "history", "seen", "n_distinct", "risks",
    )

    def __init__(self, data: Dataset, config: BoostConfig, track_risk: bool):
        X = data.X
        # exact zero-variance test on the raw columns, scale-free
        self.valid = X.min(axis=0) != X.max(axis=0)
        if not self.valid.any():
            raise NoFittableBaseLearner("no fittable base-learner")
        self.data = data
        self.config = config
        self.Xc = np.asfortranarray(X - X.mean(axis=0))
        self.XT = np.ascontiguousarray(self.Xc.T)
        colsq = np.einsum("ij,ij->i", self.XT, self.XT)
        safe = np.where(self.valid, colsq, 1.0)
        self.inv_colsq = np.where(self.valid, 1.0 / safe, 0.0)
        self.offset = init_offset(data)
        self.eta = np.full(data.n, self.offset)
        self.beta = np.zeros(data.p)
        self.history: list[int] = []
        self.seen = np.zeros(data.p, dtype=bool)
        self.n_distinct = 0
        self.risks = [self._risk()] if track_risk else None

    def _risk(self) -> float:
        return empirical_risk(self.data.family, self.data.y, self.eta)

    def step(self) -> int:
        if self.data.family == Family.GAUSSIAN:
            u = self.data.y - self.eta
        else:
            u = self.data.y - sigmoid(self.eta)
        s = self.XT @ u
        # RSS_j = sum(u^2) - score_j, so argmin RSS == argmax score
        score = s * s * self.inv_colsq
        score[~self.valid] = -np.inf
        j = int(np.argmax(score))
        bhat = s[j] * self.inv_colsq[j]
        self.beta[j] += self.config.nu * bhat
        self.eta += (self.config.nu * bhat) * self.Xc[:, j]
        self.history.append(j)
        if not self.seen[j]:
            self.seen[j] = True
            self.n_distinct += 1
        if self.risks is not None:
            self.risks.append(self._risk())
        return j

    def to_model(self) -> BoostModel:
        return BoostModel(
            offset=self.offset,
            beta=self.beta.copy(),
            selection_history=tuple(self.history),
            m_done=len(self.history),
            config=self.config,
            col_means=self.data.X.mean(axis=0),
            risk_path=tuple(self.risks) if self.risks is not None else None,
        )


def boost_step(model: BoostModel, data: Dataset, centered_X: np.ndarray) -> BoostModel:
    """Run a single boosting iteration on an existing model.

    ``centered_X`` must be the mean-centered design of ``data``
    (precomputed once by the caller); it is validated only by shape.
    """
    if centered_X.shape != data.X.shape:
        raise ValueError("centered_X shape does not match data.X")
    state = _FitState(data, model.config, track_risk=False)
    state.offset = model.offset
    state.beta = model.beta.copy()
    state.eta = model.offset + centered_X @ model.beta
    state.history = list(model.selection_history)
    state.seen[list(model.selected_set)] = True
    state.n_distinct = len(model.selected_set)
    state.step()
    return state.to_model()


def fit(data: Dataset, config: BoostConfig, track_risk: bool = False) -> BoostModel:
    """Offset initialization followed by exactly ``m_max`` iterations."""
    if config.target_q is not None:
        raise ValueError("config.target_q is set, use fit_until_q")
    state = _FitState(data, config, track_risk)
    for _ in range(config.m_max):
        state.step()
    return state.to_model()


def fit_until_q(data: Dataset, config: BoostConfig, track_risk: bool = False) -> BoostModel:
    """Iterate until ``target_q`` distinct base-learners are selected.

    The iteration that first selects the q-th distinct base-learner is
    the last one performed.
    """
    q = config.target_q
    if q is None:
        raise ValueError("config.target_q is not set, use fit")
    state = _FitState(data, config, track_risk)
    n_fittable = int(state.valid.sum())
    if q > n_fittable:
        raise ValueError(
            f"target_q={q} exceeds the {n_fittable} fittable base-learners"
        )
    for _ in range(config.m_max):
        state.step()
        if state.n_distinct == q:
            return state.to_model()
    raise TargetNotReached(
        f"q={q} not reached within m_max={config.m_max} iterations"
    )
