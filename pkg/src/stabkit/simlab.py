"""Synthetic benchmark harness for stability selection error control.

Generates logistic-regression classification problems with Gaussian
covariates (independent or banded Toeplitz correlation), runs stability
selection over a grid of settings, and records true positive rates,
false positive counts and bound violations per replicate.

The per-run selection budget q is derived from (pi_thr, PFER_max,
assumption) through the parameter solver, so each grid cell states the
error budget and the harness works out the matching configuration.
"""

from __future__ import annotations

import sys
import zlib
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path

import numpy as np

from ._pool import pmap
from .bounds import Assumption, solve_params
from .data import Dataset, Family, sigmoid
from .stabsel import SamplingScheme, StabSelConfig, run as run_stabsel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "SimSetting",
    "ReplicateRecord",
    "SimResult",
    "GridConfigError",
    "gen_design",
    "gen_response",
    "classification_metrics",
    "run_setting",
    "load_grid_config",
    "run_grid",
]

INDEPENDENT = "independent"
TOEPLITZ = "toeplitz"

DEFAULT_B = {
    Assumption.NONE: 100,
    Assumption.UNIMODAL: 50,
    Assumption.R_CONCAVE: 50,
}

REPLICATE_COLUMNS = (
    "design", "assumption", "n", "p", "p_infl", "pi_thr", "pfer_max",
    "B", "q", "replicate", "tpr", "fp",
)
AGGREGATE_COLUMNS = (
    "design", "assumption", "n", "p", "p_infl", "pi_thr", "pfer_max",
    "B", "q", "realized_bound", "mean_tpr", "mean_fp", "violated",
    "replicates",
)


class GridConfigError(ValueError):
    """Invalid grid configuration; the message names the offending key."""


@dataclass(frozen=True)
class SimSetting:
    n: int
    p: int
    p_infl: int
    design: str
    pi_thr: float
    pfer_max: float
    assumption: Assumption
    replicates: int
    seed: int
    b: int | None = None
    rho: float = 0.9

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"need n >= 4, got {self.n}")
        if self.p_infl > self.p:
            raise ValueError(f"p_infl={self.p_infl} exceeds p={self.p}")
        if self.p_infl < 0:
            raise ValueError(f"p_infl must be >= 0, got {self.p_infl}")
        if self.design not in (INDEPENDENT, TOEPLITZ):
            raise ValueError(f"unknown design {self.design!r}")
        if self.replicates < 1:
            raise ValueError(f"need replicates >= 1, got {self.replicates}")

    @property
    def b_eff(self) -> int:
        return DEFAULT_B[self.assumption] if self.b is None else self.b

    @property
    def scheme(self) -> SamplingScheme:
        if self.assumption == Assumption.NONE:
            return SamplingScheme.subsample(self.b_eff)
        return SamplingScheme.complementary_pairs(self.b_eff)

    def sort_key(self):
        return (
            self.design, self.assumption.value, self.n, self.p, self.p_infl,
            self.pi_thr, self.pfer_max, self.b_eff,
        )


@dataclass(frozen=True)
class ReplicateRecord:
    replicate: int
    tpr: float | None
    fp: int
    n_stable: int


@dataclass(frozen=True)
class SimResult:
    setting: SimSetting
    q: int
    realized_bound: float
    tpr: float | None
    fp: float
    violated: bool
    replicates: tuple[ReplicateRecord, ...]


def gen_design(n: int, p: int, design: str, seed: int, rho: float = 0.9) -> np.ndarray:
    """n x p Gaussian design, independent or Toeplitz-correlated columns.

    Correlated draws apply the lower-triangular Cholesky factor of the
    target covariance to independent standard normals.
    """
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, p))
    if design == INDEPENDENT:
        return Z
    if design != TOEPLITZ:
        raise ValueError(f"unknown design {design!r}")
    cov = toeplitz_covariance(p, rho)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:  # cannot occur for |rho| < 1
        raise RuntimeError(f"covariance factorization failed: {exc}") from exc
    return Z @ L.T


def toeplitz_covariance(p: int, rho: float = 0.9) -> np.ndarray:
    """Banded correlation matrix with entries rho^|k - l|."""
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def gen_response(X: np.ndarray, p_infl: int, seed: int):
    """Binary response from a sparse logistic model.

    Draws p_infl influential positions uniformly without replacement,
    gives each a coefficient of -1 or +1, and samples Bernoulli
    responses through the logistic link. Returns (y, beta, signal_set).
    """
    n, p = X.shape
    if p_infl > p:
        raise ValueError(f"p_infl={p_infl} exceeds p={p}")
    rng = np.random.default_rng(seed)
    beta = np.zeros(p)
    signal: tuple[int, ...] = ()
    if p_infl > 0:
        pos = np.sort(rng.choice(p, size=p_infl, replace=False))
        beta[pos] = rng.choice([-1.0, 1.0], size=p_infl)
        signal = tuple(int(j) for j in pos)
    eta = X @ beta
    y = (rng.random(n) < sigmoid(eta)).astype(float)
    return y, beta, signal


def classification_metrics(
    stable_set, signal_set, p: int
) -> tuple[float | None, int]:
    """(TPR, FP) of a stable set against the true signal set.

    TPR is undefined (None) when there are no signal variables.
    """
    stable = set(stable_set)
    signal = set(signal_set)
    if not stable <= set(range(p)) or not signal <= set(range(p)):
        raise ValueError("index outside [0, p)")
    fp = len(stable - signal)
    if not signal:
        return None, fp
    return len(stable & signal) / len(signal), fp


def _replicate_seeds(setting_seed: int, replicate: int) -> tuple[int, int, int]:
    ss = np.random.SeedSequence((setting_seed, replicate))
    a, b, c = ss.generate_state(3, dtype=np.uint64)
    return int(a), int(b), int(c)


def _run_replicate(job) -> ReplicateRecord:
    setting, q, pi_thr, r = job
    s_design, s_resp, s_stab = _replicate_seeds(setting.seed, r)
    X = gen_design(setting.n, setting.p, setting.design, s_design, setting.rho)
    y, _, signal = gen_response(X, setting.p_infl, s_resp)
    names = tuple(f"x{j + 1}" for j in range(setting.p))
    data = Dataset(X, y, names, Family.BINOMIAL)
    cfg = StabSelConfig(q=q, pi_thr=pi_thr, scheme=setting.scheme, seed=s_stab)
    res = run_stabsel(data, cfg)
    tpr, fp = classification_metrics(res.stable_set, signal, setting.p)
    return ReplicateRecord(
        replicate=r, tpr=tpr, fp=fp, n_stable=len(res.stable_set)
    )


def run_setting(setting: SimSetting, workers: int | None = None) -> SimResult:
    """Solve q for the setting, run all replicates, aggregate."""
    solved = solve_params(
        setting.p,
        setting.b_eff,
        setting.assumption,
        pi_thr=setting.pi_thr,
        pfer_max=setting.pfer_max,
    )
    jobs = [(setting, solved.q, solved.pi_thr, r) for r in range(setting.replicates)]
    try:
        records = pmap(_run_replicate, jobs, workers=workers)
    except Exception as exc:
        raise RuntimeError(
            f"setting {setting.sort_key()}: replicate failed: {exc}"
        ) from exc
    tprs = [rec.tpr for rec in records if rec.tpr is not None]
    mean_tpr = float(np.mean(tprs)) if tprs else None
    mean_fp = float(np.mean([rec.fp for rec in records]))
    return SimResult(
        setting=setting,
        q=solved.q,
        realized_bound=solved.realized_bound,
        tpr=mean_tpr,
        fp=mean_fp,
        violated=mean_fp > setting.pfer_max,
        replicates=tuple(records),
    )


# --------------------------------------------------------------------------
# grid runner
# --------------------------------------------------------------------------

_GRID_KEYS = {
    "n": int,
    "p": int,
    "p_infl": int,
    "design": str,
    "pi_thr": float,
    "pfer_max": float,
    "assumption": str,
    "B": int,
}


def load_grid_config(path: str | Path) -> dict:
    """Parse and validate a TOML grid configuration."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise GridConfigError(f"{path}: invalid TOML: {exc}") from exc
    if "grid" not in raw or not isinstance(raw["grid"], dict):
        raise GridConfigError(f"{path}: missing [grid] table")
    grid = raw["grid"]
    out: dict = {}
    for key, caster in _GRID_KEYS.items():
        if key not in grid:
            if key == "B":
                continue
            raise GridConfigError(f"grid.{key}: missing required key")
        values = grid[key]
        if not isinstance(values, list) or not values:
            raise GridConfigError(f"grid.{key}: expected a non-empty array")
        cast = []
        for i, v in enumerate(values):
            if isinstance(v, bool):
                raise GridConfigError(f"grid.{key}[{i}]: invalid value {v!r}")
            try:
                cast.append(caster(v))
            except (TypeError, ValueError):
                raise GridConfigError(
                    f"grid.{key}[{i}]: invalid value {v!r}"
                ) from None
        out[key] = cast
    for i, a in enumerate(out["assumption"]):
        try:
            out["assumption"][i] = Assumption(a)
        except ValueError:
            valid = ", ".join(x.value for x in Assumption)
            raise GridConfigError(
                f"grid.assumption[{i}]: {a!r} is not one of: {valid}"
            ) from None
    reps = grid.get("replicates", 50)
    if not isinstance(reps, int) or isinstance(reps, bool) or reps < 1:
        raise GridConfigError("grid.replicates: expected a positive integer")
    out["replicates"] = reps
    unknown = set(grid) - set(_GRID_KEYS) - {"replicates"}
    if unknown:
        raise GridConfigError(f"grid.{sorted(unknown)[0]}: unknown key")
    return out


def expand_settings(config: dict, master_seed: int) -> list[SimSetting]:
    """Cartesian product of the configured parameter lists.

    Each setting's seed derives from the master seed and the setting's
    own parameters, so a setting reruns identically regardless of which
    other settings share the grid.
    """
    b_values: list[int | None] = config.get("B", [None])
    settings = []
    for n, p, p_infl, design, pi, pfer, assumption, b in product(
        config["n"], config["p"], config["p_infl"], config["design"],
        config["pi_thr"], config["pfer_max"], config["assumption"], b_values,
    ):
        base = SimSetting(
            n=n, p=p, p_infl=p_infl, design=design, pi_thr=pi,
            pfer_max=pfer, assumption=assumption,
            replicates=config["replicates"], seed=0, b=b,
        )
        fingerprint = zlib.crc32(repr(base.sort_key()).encode())
        seed = int(np.random.SeedSequence(
            (master_seed, fingerprint)).generate_state(1, dtype=np.uint64)[0])
        settings.append(replace(base, seed=seed))
    settings.sort(key=SimSetting.sort_key)
    return settings


def _run_setting_job(setting: SimSetting) -> SimResult:
    return run_setting(setting, workers=1)


def run_grid(
    config: dict | str | Path,
    out_dir: str | Path,
    master_seed: int = 0,
    workers: int | None = None,
) -> tuple[Path, Path]:
    """Run every setting of the grid and write the two CSV reports.

    ``replicates.csv`` holds one row per (setting, replicate);
    ``aggregate.csv`` one row per setting with replicate-averaged
    metrics, keyed by every grouping facet. Returns both paths.
    """
    if not isinstance(config, dict):
        config = load_grid_config(config)
    settings = expand_settings(config, master_seed)
    results = pmap(_run_setting_job, settings, workers=workers)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rep_path = out_dir / "replicates.csv"
    agg_path = out_dir / "aggregate.csv"

    def fmt(v) -> str:
        if v is None:
            return ""
        if isinstance(v, bool):
            return str(v).lower()
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with open(rep_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(REPLICATE_COLUMNS) + "\n")
        for res in results:
            st = res.setting
            for rec in res.replicates:
                row = (
                    st.design, st.assumption.value, st.n, st.p, st.p_infl,
                    st.pi_thr, st.pfer_max, st.b_eff, res.q, rec.replicate,
                    rec.tpr, rec.fp,
                )
                fh.write(",".join(fmt(v) for v in row) + "\n")

    with open(agg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(AGGREGATE_COLUMNS) + "\n")
        for res in results:
            st = res.setting
            row = (
                st.design, st.assumption.value, st.n, st.p, st.p_infl,
                st.pi_thr, st.pfer_max, st.b_eff, res.q, res.realized_bound,
                res.tpr, res.fp, res.violated, st.replicates,
            )
            fh.write(",".join(fmt(v) for v in row) + "\n")

    return rep_path, agg_path
