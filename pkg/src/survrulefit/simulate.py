"""Synthetic randomized-trial generator with Weibull potential outcomes.

Outcome model for arm ``a``::

    T(a | X) = scale_a * (-log U / exp(f_a(X))) ** (1 / shape),   f_a = b(X) + a * h(X)

so that ``S_a(t | x) = exp(-(t / scale_a) ** shape * exp(f_a(x)))`` in closed form.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import BINARY, CONTINUOUS, Dataset, Horizon
from .exceptions import NumericalError
from .expr import Expression

PROPENSITY = "0.4 - 0.3*X1 - 0.2*X6 - 0.3*X2 - 0.35*X7 - 0.2*X3 - 0.25*X8"

SCENARIOS = {
    "S1": dict(
        scale0=16.0,
        scale1=26.0,
        baseline="2*X6 - 1.2*X7",
        effect="2.8*X1 + 1.4*X2",
    ),
    "S2": dict(
        scale0=20.0,
        scale1=22.0,
        baseline="1.6*X1 - 1.4*X6 - 1.2*X7",
        effect="2.5*X1 - 1.8*X2 - 2*X3",
    ),
    "S3": dict(
        scale0=20.0,
        scale1=22.0,
        baseline="1.6*X1 - 1.4*X6 - 1.2*X7 - X1*X7 - 0.8*X8**2",
        effect="2.5*X1 - 1.8*X2 - 2*X3 - 1.4*X1*X3",
    ),
}

SETTINGS = {"independent": 10, "highdim_correlated": 100}


def _binary_columns(setting, p):
    if setting == "independent":
        return np.arange(5)
    # X1..X5 and X11..X55 (one-based)
    cols = np.r_[np.arange(0, 5), np.arange(10, 55)]
    return cols[cols < p]


@dataclass(frozen=True)
class CensoringSpec:
    """Censoring mechanism.

    ``kind="exponential"``: C ~ Exp(rate) independent of everything, ``parameter`` is the rate.
    ``kind="covariate"``: C = -2 log(U) / exp(b0 + b1*X1 + b2*X2), ``parameter`` is b0.
    ``parameter`` stays ``None`` until :func:`calibrate_censoring` fills it in.
    """

    kind: str = "exponential"
    target_rate: float = 0.3
    b1: float = 0.5
    b2: float = -0.5
    parameter: float | None = None

    def __post_init__(self):
        if self.kind not in ("exponential", "covariate"):
            raise ValueError(f"unknown censoring kind {self.kind!r}")
        if not 0 <= self.target_rate < 1:
            raise ValueError("target censoring rate must lie in [0, 1)")

    @property
    def never(self):
        return self.parameter is not None and (
            (self.kind == "exponential" and self.parameter == 0)
            or (self.kind == "covariate" and self.parameter == -np.inf)
        )

    def _linear(self, X, b0):
        return b0 + self.b1 * X[:, 0] + self.b2 * X[:, 1]

    def times_from_exponential(self, E, X, parameter=None):
        """Censoring times from standard-exponential draws ``E = -log U``."""
        par = self.parameter if parameter is None else parameter
        if par is None:
            raise ValueError("censoring spec is not calibrated")
        with np.errstate(divide="ignore", over="ignore"):
            if self.kind == "exponential":
                return np.full_like(E, np.inf) if par == 0 else E / par
            if par == -np.inf:
                return np.full_like(E, np.inf)
            return 2.0 * E / np.exp(self._linear(X, par))

    def survival(self, c, X):
        """P(C > c | X)."""
        c = np.asarray(c, dtype=float)
        if self.parameter is None:
            raise ValueError("censoring spec is not calibrated")
        if self.never:
            return np.ones(np.broadcast(c, X[:, 0]).shape)
        if self.kind == "exponential":
            return np.exp(-self.parameter * c) * np.ones(X.shape[0])
        return np.exp(-0.5 * c * np.exp(self._linear(X, self.parameter)))


@dataclass(frozen=True)
class SimScenario:
    scenario_id: str = "S1"
    setting: str = "independent"
    shape: float = 2.0
    scale0: float = 16.0
    scale1: float = 26.0
    baseline: str = SCENARIOS["S1"]["baseline"]
    effect: str = SCENARIOS["S1"]["effect"]
    propensity: str = PROPENSITY
    censoring: CensoringSpec = field(default_factory=CensoringSpec)
    seed: int = 0

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        if self.shape <= 0 or self.scale0 <= 0 or self.scale1 <= 0:
            raise ValueError("Weibull shape and scales must be positive")
        for text in (self.baseline, self.effect, self.propensity):
            cols = Expression(text).columns
            if cols and max(cols) >= self.p:
                raise ValueError(f"expression {text!r} references a column beyond p={self.p}")

    @property
    def p(self):
        return SETTINGS[self.setting]

    @property
    def binary_columns(self):
        return _binary_columns(self.setting, self.p)

    @property
    def covariate_kinds(self):
        kinds = [CONTINUOUS] * self.p
        for j in self.binary_columns:
            kinds[j] = BINARY
        return tuple(kinds)

    def linear_predictor(self, X, a):
        a = np.asarray(a, dtype=float)
        return Expression(self.baseline)(X) + a * Expression(self.effect)(X)

    def propensity_score(self, X):
        return expit(Expression(self.propensity)(X))

    def survival(self, t, X, a):
        """Closed-form S_a(t | x)."""
        scale = np.where(np.asarray(a) == 1, self.scale1, self.scale0)
        return np.exp(-((np.asarray(t, dtype=float) / scale) ** self.shape) * np.exp(self.linear_predictor(X, a)))

    def with_censoring(self, **changes):
        return replace(self, censoring=replace(self.censoring, **changes))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        cens = raw.pop("censoring", None)
        if isinstance(cens, dict):
            if cens.get("parameter") is not None:
                cens["parameter"] = float(cens["parameter"])
            raw["censoring"] = CensoringSpec(**cens)
        return cls(**raw)


def make_scenario(scenario_id="S1", setting="independent", censoring="exponential", censor_rate=0.3, seed=0, **censor_kw):
    """Built-in scenario S1, S2 or S3 under one of the two covariate settings."""
    key = scenario_id.upper()
    if key not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario_id!r}; choose from {sorted(SCENARIOS)}")
    return SimScenario(
        scenario_id=key,
        setting=setting,
        censoring=CensoringSpec(kind=censoring, target_rate=censor_rate, **censor_kw),
        seed=seed,
        **SCENARIOS[key],
    )


@dataclass(frozen=True)
class TruthTable:
    tau: np.ndarray
    propensity: np.ndarray
    surv0: np.ndarray
    surv1: np.ndarray
    t_star: float


@dataclass(frozen=True)
class Outcomes:
    time: np.ndarray
    event: np.ndarray
    latent_time: np.ndarray
    censor_time: np.ndarray


def gen_covariates(scn: SimScenario, n, rng):
    if n < 1:
        raise ValueError("n must be >= 1")
    p = scn.p
    if scn.setting == "independent":
        X = rng.standard_normal((n, p))
    else:
        idx = np.arange(p)
        sigma = 0.5 * np.exp(-np.abs(idx[:, None] - idx[None, :]))
        X = rng.standard_normal((n, p)) @ np.linalg.cholesky(sigma).T
    b = scn.binary_columns
    X[:, b] = (X[:, b] > 0).astype(float)
    return X


def assign_treatment(X, scn: SimScenario, rng):
    """Bernoulli treatment draws; returns ``(A, e)`` with e the true propensity."""
    e = scn.propensity_score(X)
    A = (rng.random(X.shape[0]) < e).astype(np.int64)
    return A, e


def event_times(X, A, scn, U):
    """Weibull inversion: T = scale_A * (-log U / exp(f_A(X))) ** (1 / shape)."""
    f = scn.linear_predictor(X, A)
    scale = np.where(A == 1, scn.scale1, scn.scale0)
    return scale * (-np.log(U) / np.exp(f)) ** (1.0 / scn.shape)


def gen_outcomes(X, A, scn: SimScenario, rng) -> Outcomes:
    n = X.shape[0]
    U = 1.0 - rng.random(n)  # in (0, 1]
    T = event_times(X, A, scn, U)
    E = -np.log(1.0 - rng.random(n))
    C = scn.censoring.times_from_exponential(E, X)
    event = (T < C).astype(np.int64)
    return Outcomes(np.minimum(T, C), event, T, C)


def _mc_sample(scn, rng, n_mc):
    X = gen_covariates(scn, n_mc, rng)
    A, _ = assign_treatment(X, scn, rng)
    T = event_times(X, A, scn, 1.0 - rng.random(n_mc))
    E = -np.log(1.0 - rng.random(n_mc))
    return X, T, E


def empirical_censoring_rate(scn: SimScenario, rng, n_mc=100_000):
    """Censored fraction under ``scn``'s calibrated censoring on a fresh Monte Carlo sample.

    Given the generator state used for calibration, this reproduces the calibration sample.
    """
    X, T, E = _mc_sample(scn, rng, n_mc)
    C = scn.censoring.times_from_exponential(E, X)
    return float(np.mean(C <= T))


def calibrate_censoring(scn: SimScenario, target_rate, rng, n_mc=100_000, tol=0.005, max_expand=60, max_iter=200):
    """Censoring parameter giving an empirical censoring fraction within ``tol`` of target.

    Bisection over common random numbers so the empirical rate is monotone in the
    parameter.  A zero target returns the degenerate never-censor parameter.
    """
    if not 0 <= target_rate < 1:
        raise ValueError("target_rate must lie in [0, 1)")
    spec = scn.censoring
    if target_rate == 0:
        return 0.0 if spec.kind == "exponential" else -np.inf
    X, T, E = _mc_sample(scn, rng, n_mc)

    if spec.kind == "exponential":
        # search over log(rate); censored iff E <= rate * T
        def rate_at(z):
            return np.mean(E <= np.exp(z) * T)
    else:
        lin = spec.b1 * X[:, 0] + spec.b2 * X[:, 1]

        def rate_at(z):
            return np.mean(2.0 * E / np.exp(z + lin) <= T)

    lo, hi = -1.0, 1.0
    for _ in range(max_expand):
        if rate_at(lo) < target_rate:
            break
        lo -= 2.0 * (hi - lo)
    else:
        raise NumericalError("censoring calibration: lower bracket not found")
    for _ in range(max_expand):
        if rate_at(hi) > target_rate:
            break
        hi += 2.0 * (hi - lo)
    else:
        raise NumericalError("censoring calibration: upper bracket not found")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = rate_at(mid)
        if abs(r - target_rate) < tol:
            return float(np.exp(mid)) if spec.kind == "exponential" else float(mid)
        if r < target_rate:
            lo = mid
        else:
            hi = mid
    raise NumericalError(f"censoring calibration did not reach tolerance {tol} in {max_iter} steps")


def calibrated(scn: SimScenario, rng, **kw) -> SimScenario:
    """Copy of ``scn`` with its censoring parameter calibrated to the target rate."""
    par = calibrate_censoring(scn, scn.censoring.target_rate, rng, **kw)
    return scn.with_censoring(parameter=par)


def true_cate(X, scn: SimScenario, h) -> TruthTable:
    t = h.t_star if isinstance(h, Horizon) else float(h)
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    s0 = scn.survival(t, X, np.zeros(n))
    s1 = scn.survival(t, X, np.ones(n))
    return TruthTable(tau=s1 - s0, propensity=scn.propensity_score(X), surv0=s0, surv1=s1, t_star=t)


@dataclass(frozen=True)
class SimulatedTrial:
    dataset: Dataset
    outcomes: Outcomes
    propensity: np.ndarray


def simulate_trial(scn: SimScenario, n, rng) -> SimulatedTrial:
    """Covariates, treatment and censored outcomes for ``n`` subjects (fixed draw order)."""
    if scn.censoring.parameter is None:
        raise ValueError("calibrate the censoring spec before simulating")
    X = gen_covariates(scn, n, rng)
    A, e = assign_treatment(X, scn, rng)
    out = gen_outcomes(X, A, scn, rng)
    ds = Dataset(
        X,
        A,
        out.time,
        out.event,
        covariate_names=tuple(f"X{j + 1}" for j in range(scn.p)),
        covariate_kinds=scn.covariate_kinds,
        ids=np.arange(1, n + 1),
    )
    return SimulatedTrial(ds, out, e)
