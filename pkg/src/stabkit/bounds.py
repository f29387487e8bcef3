"""Error bounds for stability selection and the two-of-three parameter
solver.

Four upper bounds on the expected number of falsely kept base-learners
are implemented, ordered from weakest to sharpest assumption:

* ``pfer_bound_exchangeable``: the original subsampling bound
  q^2 / ((2 pi_thr - 1) p), valid under exchangeable noise variables and
  a better-than-random selection procedure.
* ``pfer_bound_worst_case``: the assumption-free complementary-pairs
  bound theta * q / (2 pi_thr - 1); identical to the exchangeable bound
  when theta = q/p.
* ``pfer_bound_unimodal``: assumes unimodally distributed simultaneous
  selection frequencies; the gain enters through the piecewise constant
  ``unimodal_constant``.
* ``pfer_bound_rconcave``: assumes r-concave selection frequency
  distributions and evaluates extremal tail probabilities over that
  class (``tail_prob_rconcave``).

The unimodal and r-concave bounds require the threshold to sit on the
grid {1/2 + 2/(2B), 1/2 + 3/(2B), ..., 1}; ``snap_threshold`` rounds up
onto it.

The extremal tail computation maximizes P(X >= xi) over random
variables X on the grid {0, 1/B, ..., 1} with E[X] <= theta whose mass
sequence p is r-concave, meaning p^r is convex on a contiguous support
(r < 0). The maximizing distributions belong to a two-scalar family:
mass sequences with p^r affine on a support prefix {0..M}, mean tied to
theta, plus variants carrying one extra atom just past the affine part.
The search runs a bisection for the affine tilt (vectorized over all
support lengths M) and a sweep over the atom variants; tests validate
it against a brute-force enumeration over the discretized simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

__all__ = [
    "Assumption",
    "BoundInput",
    "SolvedParams",
    "threshold_grid",
    "snap_threshold",
    "pfer_bound_exchangeable",
    "pfer_bound_worst_case",
    "unimodal_constant",
    "pfer_bound_unimodal",
    "tail_prob_rconcave",
    "rconcave_tail_factor",
    "pfer_bound_rconcave",
    "evaluate_bound",
    "solve_params",
]

THETA_MAX_UNIMODAL = 1.0 / math.sqrt(3.0)
_GRID_TOL = 1e-9
_SWEEP_POINTS = 128


class Assumption(str, Enum):
    NONE = "none"
    UNIMODAL = "unimodal"
    R_CONCAVE = "r-concave"


# --------------------------------------------------------------------------
# threshold grid
# --------------------------------------------------------------------------

def threshold_grid(b: int) -> np.ndarray:
    """Admissible thresholds {1/2 + 2/(2B), ..., 1} for B subsamples."""
    if b < 2:
        raise ValueError(f"need B >= 2, got {b}")
    k = np.arange(2, b + 1)
    return 0.5 + k / (2.0 * b)


def snap_threshold(pi_thr: float, b: int) -> tuple[float, bool]:
    """Smallest admissible grid value >= pi_thr, and whether it moved."""
    if not (0.5 < pi_thr <= 1.0):
        raise ValueError(f"pi_thr must be in (0.5, 1], got {pi_thr}")
    grid = threshold_grid(b)
    idx = int(np.searchsorted(grid, pi_thr - _GRID_TOL, side="left"))
    snapped = float(grid[idx])
    return snapped, abs(snapped - pi_thr) > _GRID_TOL


def _require_on_grid(pi_thr: float, b: int) -> None:
    snapped, adjusted = snap_threshold(pi_thr, b)
    if adjusted:
        raise ValueError(
            f"pi_thr={pi_thr} is not on the admissible grid for B={b}; "
            f"nearest admissible value above is {snapped}"
        )


# --------------------------------------------------------------------------
# closed-form bounds
# --------------------------------------------------------------------------

def pfer_bound_exchangeable(q: int, p: int, pi_thr: float) -> float:
    """q^2 / ((2 pi_thr - 1) p), the original subsampling bound."""
    _check_qp(q, p)
    if not (0.5 < pi_thr <= 1.0):
        raise ValueError(f"pi_thr must be in (0.5, 1], got {pi_thr}")
    return q * q / ((2.0 * pi_thr - 1.0) * p)


def pfer_bound_worst_case(q: int, theta: float, pi_thr: float) -> float:
    """theta * q / (2 pi_thr - 1), assumption-free."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    _check_theta(theta)
    if not (0.5 < pi_thr <= 1.0):
        raise ValueError(f"pi_thr must be in (0.5, 1], got {pi_thr}")
    return theta * q / (2.0 * pi_thr - 1.0)


def unimodal_constant(pi_thr: float, b: int, theta: float) -> float:
    """Piecewise constant of the unimodal bound.

    Defined for pi_thr in (c_min, 3/4] and (3/4, 1] with
    c_min = min(1/2 + theta^2, 1/2 + 1/(2B) + 3/4 theta^2); the printed
    case split is applied verbatim, so c_min gates only the first
    branch. Requires theta <= 1/sqrt(3).
    """
    _check_theta(theta)
    if theta > THETA_MAX_UNIMODAL + 1e-12:
        raise ValueError(
            f"unimodal bound needs theta <= 1/sqrt(3), got theta={theta}"
        )
    if b < 2:
        raise ValueError(f"need B >= 2, got {b}")
    if pi_thr > 0.75:
        if pi_thr > 1.0:
            raise ValueError(f"pi_thr must be <= 1, got {pi_thr}")
        return (1.0 + 1.0 / b) / (4.0 * (1.0 - pi_thr + 1.0 / (2.0 * b)))
    c_min = min(0.5 + theta**2, 0.5 + 1.0 / (2.0 * b) + 0.75 * theta**2)
    if pi_thr <= c_min:
        raise ValueError(
            f"unimodal bound not applicable at this threshold: "
            f"pi_thr={pi_thr} <= c_min={c_min:.6g}"
        )
    return 2.0 * (2.0 * pi_thr - 1.0 - 1.0 / (2.0 * b))


def pfer_bound_unimodal(q: int, theta: float, pi_thr: float, b: int) -> float:
    """theta * q / c(pi_thr, B); pi_thr must be grid-admissible."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    _require_on_grid(pi_thr, b)
    return theta * q / unimodal_constant(pi_thr, b, theta)


# --------------------------------------------------------------------------
# extremal r-concave tails
# --------------------------------------------------------------------------

def _ceil_index(xi: float, b: int) -> int:
    """Smallest k with k/b >= xi, robust to float noise in xi*b."""
    return max(int(math.ceil(xi * b - 1e-9)), 0)


def _tilt_weights(c: np.ndarray, J: np.ndarray, s: float, M: np.ndarray) -> np.ndarray:
    """Unnormalized masses (1 + c j)^s on supports {0..M}, rows per (c, M)."""
    base = 1.0 + c[:, None] * J[None, :]
    mask = J[None, :] <= M[:, None]
    base = np.where(mask, np.maximum(base, 1e-300), 1.0)
    w = base**s
    return np.where(mask, w, 0.0)


def _solve_tilt(J: np.ndarray, s: float, M: np.ndarray, mu: float) -> np.ndarray:
    """Tilt c (per support end M) making the mean equal mu, by bisection.

    The mean is continuous and decreasing in c, covering (0, M) as c
    runs over (-1/M, inf), so a root exists whenever 0 < mu < M.
    """
    Mf = M.astype(float)
    eps = 10.0 ** (-min(12.0, 250.0 / abs(s)))
    c_lo = -(1.0 - eps) / Mf
    c_hi = np.ones_like(Mf)

    def mean_of(c):
        w = _tilt_weights(c, J, s, M)
        return (w * J).sum(axis=1) / w.sum(axis=1)

    for _ in range(70):
        high = mean_of(c_hi) >= mu
        if not high.any():
            break
        c_hi = np.where(high, 4.0 * c_hi, c_hi)
    for _ in range(90):
        c_mid = 0.5 * (c_lo + c_hi)
        high = mean_of(c_mid) > mu
        c_lo = np.where(high, c_mid, c_lo)
        c_hi = np.where(high, c_hi, c_mid)
    return 0.5 * (c_lo + c_hi)


def _tail_impl(xi: float, theta: float, b: int, r: float) -> float:
    K = _ceil_index(xi, b)
    if K > b:
        return 0.0
    if K == 0:
        return 1.0
    mu = theta * b
    s = 1.0 / r
    J = np.arange(b + 1, dtype=float)

    # affine family: p^r affine on {0..M}, mean exactly mu
    supports = np.arange(max(K - 1, 1), b + 1)
    tilts = _solve_tilt(J, s, supports, mu)
    w = _tilt_weights(tilts, J, s, supports)
    tails_aff = w[:, K:].sum(axis=1) / w.sum(axis=1)
    best = float(tails_aff[supports >= K].max())

    # atom family: affine part on {0..M-1}, one atom at M, mass split so
    # the mean is mu; sweep the affine tilt upward from the mean-tight
    # root (where the atom mass vanishes)
    atom_M = np.arange(max(K, 2), b + 1)
    if atom_M.size:
        sub = atom_M - 1
        root = tilts[np.searchsorted(supports, sub)]
        t = np.linspace(0.0, 1.0, _SWEEP_POINTS) ** 2
        span = 50.0 * np.maximum(np.abs(root), 1.0)
        C = root[:, None] + t[None, :] * span[:, None]
        m, g = atom_M.size, _SWEEP_POINTS
        wa = _tilt_weights(C.ravel(), J, s, np.repeat(sub, g)).reshape(m, g, b + 1)
        Wsum = wa.sum(axis=2)
        mean_a = (wa * J).sum(axis=2) / Wsum
        lam = (atom_M[:, None] - mu) / (atom_M[:, None] - mean_a)
        lam = np.clip(lam, 0.0, 1.0)
        atom_mass = 1.0 - lam
        tail_a = lam * wa[:, :, K:].sum(axis=2) / Wsum + atom_mass
        # r-concavity at the junction: the atom's p^r must sit on or
        # above the affine extension
        p_aff = lam[:, :, None] * wa / Wsum[:, :, None]
        last = np.take_along_axis(p_aff, sub[:, None, None], axis=2)[:, :, 0]
        prev = np.take_along_axis(
            p_aff, np.maximum(sub - 1, 0)[:, None, None], axis=2
        )[:, :, 0]
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            a_last = last**r
            a_prev = prev**r
            a_atom = np.where(atom_mass > 0.0, atom_mass, np.nan) ** r
        convex_ok = a_atom >= 2.0 * a_last - a_prev - 1e-9 * np.abs(a_last)
        tail_a = np.where(convex_ok & (atom_mass > 0.0), tail_a, -1.0)
        best = max(best, float(tail_a.max()))

    return min(best, 1.0)


@lru_cache(maxsize=4096)
def tail_prob_rconcave(xi: float, theta: float, b: int, r: float) -> float:
    """Largest P(X >= xi) over r-concave X on {0, 1/B, ..., 1} with
    E[X] <= theta.

    Returns 1.0 when xi <= theta (the mean constraint cannot bind).
    The result lies in [0, 1], is non-increasing in xi and
    non-decreasing in theta.
    """
    xi, theta, b, r = float(xi), float(theta), int(b), float(r)
    if r >= 0.0:
        raise ValueError(f"r must be negative, got {r}")
    if b < 2:
        raise ValueError(f"need B >= 2, got {b}")
    if not (0.0 < theta < 1.0):
        raise ValueError(f"theta must be in (0, 1), got {theta}")
    if not (0.0 < xi <= 1.0):
        raise ValueError(f"xi must be in (0, 1], got {xi}")
    if xi <= theta:
        return 1.0
    return _tail_impl(xi, theta, b, r)


def rconcave_tail_factor(theta: float, pi_thr: float, b: int) -> float:
    """min of the two extremal tail terms of the r-concave bound.

    This is the per-variable factor; multiplied by the number of
    low-selection-probability variables it gives the diagnostic form of
    the bound, multiplied by p the conservative final form.
    """
    t1 = tail_prob_rconcave(2.0 * pi_thr - 1.0, theta * theta, b, -0.5)
    t2 = tail_prob_rconcave(pi_thr, theta, 2 * b, -0.25)
    return min(t1, t2)


def pfer_bound_rconcave(p: int, theta: float, pi_thr: float, b: int) -> float:
    """r-concave bound: rconcave_tail_factor * p; grid-admissible pi_thr."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    _check_theta(theta)
    _require_on_grid(pi_thr, b)
    return rconcave_tail_factor(theta, pi_thr, b) * p


# --------------------------------------------------------------------------
# bound dispatch and the parameter solver
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundInput:
    """Validated argument bundle for bound evaluation."""

    q: int
    p: int
    pi_thr: float
    b: int
    assumption: Assumption
    theta: float | None = None

    def __post_init__(self):
        _check_qp(self.q, self.p)
        if not (0.5 < self.pi_thr <= 1.0):
            raise ValueError(f"pi_thr must be in (0.5, 1], got {self.pi_thr}")
        if self.b < 2:
            raise ValueError(f"need B >= 2, got {self.b}")
        if self.theta is not None:
            _check_theta(self.theta)

    @property
    def theta_eff(self) -> float:
        return self.q / self.p if self.theta is None else self.theta


def evaluate_bound(bi: BoundInput) -> float:
    theta = bi.theta_eff
    if bi.assumption == Assumption.NONE:
        return pfer_bound_worst_case(bi.q, theta, bi.pi_thr)
    if bi.assumption == Assumption.UNIMODAL:
        return pfer_bound_unimodal(bi.q, theta, bi.pi_thr, bi.b)
    return pfer_bound_rconcave(bi.p, theta, bi.pi_thr, bi.b)


@dataclass(frozen=True)
class SolvedParams:
    q: int
    pi_thr: float
    pfer_max: float
    realized_bound: float
    assumption: Assumption
    b: int
    warnings: tuple[str, ...]
    attainable: bool

    def to_json_dict(self) -> dict:
        return {
            "q": self.q,
            "pi_thr": self.pi_thr,
            "pfer_max": self.pfer_max,
            "realized_bound": self.realized_bound,
            "assumption": self.assumption.value,
            "B": self.b,
            "warnings": list(self.warnings),
        }


def _bound_or_inf(q: int, p: int, pi_thr: float, b: int, assumption: Assumption) -> float:
    try:
        return evaluate_bound(BoundInput(q, p, pi_thr, b, assumption))
    except ValueError:
        return math.inf


def solve_params(
    p: int,
    b: int,
    assumption: Assumption,
    q: int | None = None,
    pi_thr: float | None = None,
    pfer_max: float | None = None,
) -> SolvedParams:
    """Complete a (q, pi_thr, PFER_max) triple assuming equality in the
    chosen bound.

    Exactly two of the three must be given. Solved thresholds are
    rounded up onto the admissible grid under the unimodal and
    r-concave assumptions and clamped into (0.5, 1]; solved q values
    are rounded down. When even pi_thr = 1 cannot push the bound below
    PFER_max, the solver returns pi_thr = 1 with a warning and the
    realized bound it could achieve.
    """
    given = [v is not None for v in (q, pi_thr, pfer_max)]
    if sum(given) != 2:
        raise ValueError(
            "specify exactly two of q, pi_thr, pfer_max "
            f"(got {sum(given)})"
        )
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    warnings: list[str] = []
    gridded = assumption in (Assumption.UNIMODAL, Assumption.R_CONCAVE)

    def prep_pi(value: float) -> float:
        if not (0.5 < value <= 1.0):
            raise ValueError(f"pi_thr must be in (0.5, 1], got {value}")
        if not gridded:
            return value
        snapped, adjusted = snap_threshold(value, b)
        if adjusted:
            warnings.append(
                f"pi_thr adjusted upward to the admissible grid: "
                f"{value} -> {snapped}"
            )
        return snapped

    if q is not None and pi_thr is not None:
        _check_qp(q, p)
        pi = prep_pi(pi_thr)
        realized = evaluate_bound(BoundInput(q, p, pi, b, assumption))
        return _result(q, pi, realized, realized, assumption, b, warnings, True, p)

    if q is not None:  # q + pfer_max -> pi_thr
        _check_qp(q, p)
        if pfer_max <= 0:
            raise ValueError(f"pfer_max must be > 0, got {pfer_max}")
        if assumption == Assumption.NONE:
            pi = 0.5 * (1.0 + q * q / (p * pfer_max))
            if pi <= 1.0:
                realized = evaluate_bound(BoundInput(q, p, pi, b, assumption))
                return _result(q, pi, pfer_max, realized, assumption, b,
                               warnings, True, p)
        else:
            grid = threshold_grid(b)
            lo, hi = 0, len(grid) - 1
            if _bound_or_inf(q, p, float(grid[hi]), b, assumption) <= pfer_max:
                # smallest grid threshold meeting the target; the bound
                # is non-increasing in the threshold
                while lo < hi:
                    mid = (lo + hi) // 2
                    if _bound_or_inf(q, p, float(grid[mid]), b, assumption) <= pfer_max:
                        hi = mid
                    else:
                        lo = mid + 1
                pi = float(grid[lo])
                realized = evaluate_bound(BoundInput(q, p, pi, b, assumption))
                return _result(q, pi, pfer_max, realized, assumption, b,
                               warnings, True, p)
        realized = evaluate_bound(BoundInput(q, p, 1.0, b, assumption))
        warnings.append(
            f"bound not attainable; realized PFER bound = {realized:.6g}"
        )
        return _result(q, 1.0, pfer_max, realized, assumption, b, warnings, False, p)

    # pi_thr + pfer_max -> q
    if pfer_max <= 0:
        raise ValueError(f"pfer_max must be > 0, got {pfer_max}")
    pi = prep_pi(pi_thr)
    if assumption == Assumption.NONE:
        q_solved = int(math.floor(math.sqrt(pfer_max * (2.0 * pi - 1.0) * p) + 1e-12))
    else:
        q_solved = 0
        for cand in range(1, p + 1):
            if _bound_or_inf(cand, p, pi, b, assumption) > pfer_max:
                break
            q_solved = cand
    if q_solved < 1:
        raise ValueError(
            f"no q >= 1 satisfies the {assumption.value} bound at "
            f"pi_thr={pi}, pfer_max={pfer_max}"
        )
    if q_solved > p:
        raise ValueError(f"solved q={q_solved} exceeds p={p}")
    realized = evaluate_bound(BoundInput(q_solved, p, pi, b, assumption))
    return _result(q_solved, pi, pfer_max, realized, assumption, b, warnings, True, p)


def _result(q, pi, pfer, realized, assumption, b, warnings, attainable,
            p) -> SolvedParams:
    # sanity: the per-comparison rate never exceeds the per-family rate
    assert realized / p <= realized + 1e-12
    return SolvedParams(
        q=int(q),
        pi_thr=float(pi),
        pfer_max=float(pfer),
        realized_bound=float(realized),
        assumption=assumption,
        b=int(b),
        warnings=tuple(warnings),
        attainable=bool(attainable),
    )


def _check_qp(q: int, p: int) -> None:
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if q > p:
        raise ValueError(f"q={q} exceeds p={p}")


def _check_theta(theta: float) -> None:
    if not (0.0 < theta < 1.0):
        raise ValueError(f"theta must be in (0, 1), got {theta}")
