"""Stability selection: subsampling schemes, selection frequencies, and
stability paths.

The procedure fits a boosting model on many half-sized subsamples, each
run until ``q`` distinct base-learners are selected, and keeps the
base-learners whose relative selection frequency reaches a threshold.
Two subsampling schemes are supported:

* ``subsample``: B independent draws of size floor(n/2).
* ``complementary_pairs``: B random half-splits, using both halves of
  each split (2B fits). This scheme additionally yields simultaneous
  selection frequencies (selected in both halves of a split), the
  quantity behind the sharper error bounds in :mod:`stabkit.bounds`.

All subsample index sets are pre-generated from the seed, so the fits
can run on a worker pool in any order while the aggregated result stays
bit-identical to a sequential run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._pool import pmap
from .boosting import BoostConfig, BoostingError, fit_until_q
from .data import Dataset

__all__ = [
    "SamplingScheme",
    "StabSelConfig",
    "StabSelResult",
    "FitFailure",
    "draw_subsamples",
    "run",
    "selection_frequencies",
    "simultaneous_frequencies",
    "stability_paths",
]

SUBSAMPLE = "subsample"
COMPLEMENTARY_PAIRS = "complementary_pairs"


class FitFailure(RuntimeError):
    """A subsample fit failed; the message names the subsample index."""


@dataclass(frozen=True)
class SamplingScheme:
    kind: str
    b: int

    def __post_init__(self):
        if self.kind not in (SUBSAMPLE, COMPLEMENTARY_PAIRS):
            raise ValueError(f"unknown sampling scheme {self.kind!r}")
        if self.b < 2:
            raise ValueError(f"need B >= 2 subsamples, got {self.b}")

    @classmethod
    def subsample(cls, b: int = 100) -> "SamplingScheme":
        return cls(SUBSAMPLE, b)

    @classmethod
    def complementary_pairs(cls, b: int = 50) -> "SamplingScheme":
        return cls(COMPLEMENTARY_PAIRS, b)

    @property
    def n_fits(self) -> int:
        return self.b if self.kind == SUBSAMPLE else 2 * self.b


@dataclass(frozen=True)
class StabSelConfig:
    q: int
    pi_thr: float
    scheme: SamplingScheme
    seed: int
    boost: BoostConfig = field(default_factory=BoostConfig)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if not (0.5 < self.pi_thr <= 1.0):
            raise ValueError(f"pi_thr must be in (0.5, 1], got {self.pi_thr}")
        if self.boost.target_q is not None:
            raise ValueError("boost.target_q is owned by stability selection")


@dataclass(frozen=True)
class StabSelResult:
    """Aggregated output of one stability selection run.

    ``path[j, t]`` is the fraction of fits that had selected
    base-learner j within the first t+1 iterations; fits that stopped
    early count as constant afterwards. The last column equals
    ``pi_hat``.
    """

    pi_hat: np.ndarray
    pi_tilde: np.ndarray | None
    stable_set: tuple[int, ...]
    per_run_selected: tuple[tuple[int, ...], ...]
    path: np.ndarray
    col_names: tuple[str, ...]
    config: StabSelConfig

    @property
    def stable_names(self) -> tuple[str, ...]:
        return tuple(self.col_names[j] for j in self.stable_set)


def draw_subsamples(n: int, scheme: SamplingScheme, seed: int) -> list[np.ndarray]:
    """Pre-generate all subsample row-index sets.

    Every set has size floor(n/2), the size the error bounds require.
    For complementary pairs the list holds both halves of each split
    consecutively; with odd n, one random observation is dropped from
    the larger half.
    """
    if n < 4:
        raise ValueError(f"need n >= 4 observations, got {n}")
    rng = np.random.default_rng(seed)
    half = n // 2
    out: list[np.ndarray] = []
    if scheme.kind == SUBSAMPLE:
        for _ in range(scheme.b):
            out.append(np.sort(rng.choice(n, size=half, replace=False)))
        return out
    for _ in range(scheme.b):
        perm = rng.permutation(n)
        first, second = perm[:half], perm[half:]
        if second.shape[0] > half:
            drop = int(rng.integers(second.shape[0]))
            second = np.delete(second, drop)
        out.append(np.sort(first))
        out.append(np.sort(second))
    return out


# worker-process state, set once per pool worker
_WORK: dict = {}


def _init_worker(data: Dataset, boost: BoostConfig) -> None:
    _WORK["data"] = data
    _WORK["boost"] = boost


def _fit_one(job: tuple[int, np.ndarray]) -> tuple[int, ...]:
    idx, rows = job
    data: Dataset = _WORK["data"]
    try:
        model = fit_until_q(data.subset_rows(rows), _WORK["boost"])
    except (BoostingError, ValueError) as exc:
        raise FitFailure(f"subsample {idx}: {exc}") from exc
    return model.selection_history


def selection_frequencies(selected: list[tuple[int, ...]], p: int) -> np.ndarray:
    """Relative selection frequency of each base-learner over all fits."""
    counts = np.zeros(p)
    for sel in selected:
        counts[list(sel)] += 1.0
    return counts / len(selected)


def simultaneous_frequencies(selected: list[tuple[int, ...]], p: int) -> np.ndarray:
    """Fraction of complementary pairs selecting j in both halves.

    ``selected`` must hold the two halves of each pair consecutively.
    """
    if len(selected) % 2:
        raise ValueError("complementary pairs require an even fit count")
    b = len(selected) // 2
    counts = np.zeros(p)
    for k in range(b):
        both = set(selected[2 * k]) & set(selected[2 * k + 1])
        counts[list(both)] += 1.0
    return counts / b


def run(data: Dataset, config: StabSelConfig, workers: int | None = None) -> StabSelResult:
    """Run stability selection on a dataset.

    Raises :class:`FitFailure` if any subsample fit cannot select q
    distinct base-learners.
    """
    if config.q > data.p:
        raise ValueError(f"q={config.q} exceeds p={data.p}")
    subsets = draw_subsamples(data.n, config.scheme, config.seed)
    boost = BoostConfig(
        nu=config.boost.nu, m_max=config.boost.m_max, target_q=config.q
    )
    histories = pmap(
        _fit_one,
        list(enumerate(subsets)),
        workers=workers,
        initializer=_init_worker,
        initargs=(data, boost),
    )
    p = data.p
    per_run = [tuple(sorted(set(h))) for h in histories]
    pi_hat = selection_frequencies(per_run, p)
    if config.scheme.kind == COMPLEMENTARY_PAIRS:
        pi_tilde = simultaneous_frequencies(per_run, p)
    else:
        pi_tilde = None
    stable = tuple(int(j) for j in np.nonzero(pi_hat >= config.pi_thr)[0])

    m_grid = max(len(h) for h in histories)
    counts = np.zeros((p, m_grid))
    for h in histories:
        seen: set[int] = set()
        for t, j in enumerate(h):
            if j not in seen:
                seen.add(j)
                counts[j, t:] += 1.0
    path = counts / len(histories)

    return StabSelResult(
        pi_hat=pi_hat,
        pi_tilde=pi_tilde,
        stable_set=stable,
        per_run_selected=tuple(per_run),
        path=path,
        col_names=data.col_names,
        config=config,
    )


def stability_paths(result: StabSelResult) -> list[tuple[str, int, float]]:
    """Long-format (base_learner, iteration, frequency) table.

    Frequencies are cumulative, hence non-decreasing in the iteration;
    the final iteration reproduces ``pi_hat``.
    """
    rows = []
    p, m_grid = result.path.shape
    for j in range(p):
        name = result.col_names[j]
        for t in range(m_grid):
            rows.append((name, t + 1, float(result.path[j, t])))
    return rows
