"""Simulation designs and the Monte Carlo replication engine.

Two designs are available:

``sim1``
    logistic outcome, three-level covariate ``z2`` missing at random given
    an auxiliary ``a``; the incomplete-variable model is multinomial and
    linear in ``z1`` (mildly misspecified).
``sim2``
    linear outcome with t(3) errors, response ``y`` missing given
    ``(z1, z2, a)``; ``y`` depends on ``a`` through one of six nonlinear
    functions, so a linear imputation model is misspecified.
"""

from __future__ import annotations

import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import expit, gammaln

from .baselines import bootstrap_variance, complete_case_fit, mib_fit
from .core import IncompleteSpec, peee_fit, variance
from .exceptions import ConfigurationError, PeeeError
from .rng import stream
from .tabular import ObservationTable

SIM1_BETA = (-0.2, 0.5, -0.75, 0.25)
SIM1_Z2_PROBS = (0.5, 0.3, 0.2)
SIM1_COEFS = ("(Intercept)", "z1", "z2[2]", "z2[3]")
SIM2_BETA = (1.0, 1.0, 1.0)
SIM2_COEFS = ("(Intercept)", "z1", "z2")

SCENARIOS = {
    "log": lambda a: np.log(a + 0.5),
    "exp-decay": lambda a: np.exp(-a),
    "steep-logistic": lambda a: 1.0 / (1.0 + np.exp(-5.0 * (a - 2.5))),
    "log-gamma": gammaln,
    "sin": np.sin,
    "cos": np.cos,
}

SIM1_ANALYSIS = "y ~ z1 + cat(z2)"
SIM1_IMPUTATION = "z2 ~ z1 + y + a"
SIM2_ANALYSIS = "y ~ z1 + z2"
SIM2_IMPUTATION = "y ~ z1 + z2 + a"
SIM2_IMPUTATION_FLEX = "y ~ z1 + z2 + bs(a,3,4)"


@dataclass(frozen=True)
class Sim1Config:
    n: int
    eta: float = -1.1
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("n must be >= 1")


@dataclass(frozen=True)
class Sim2Config:
    n: int
    scenario: str = "log"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("n must be >= 1")
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; "
                                     f"expected one of {sorted(SCENARIOS)}")


def gen_sim1(config, rng):
    n, eta = config.n, config.eta
    z1 = rng.standard_normal(n)
    z2 = rng.choice(np.array([1.0, 2.0, 3.0]), p=SIM1_Z2_PROBS, size=n)
    i2, i3 = (z2 == 2).astype(float), (z2 == 3).astype(float)
    b0, b1, b2, b3 = SIM1_BETA
    y = (rng.random(n) < expit(b0 + b1 * z1 + b2 * i2 + b3 * i3)).astype(float)
    a = math.log(1.5) + i2 - i3 - y + rng.standard_normal(n)
    # eta + a is the logit of the probability that z2 is missing
    missing = rng.random(n) < expit(eta + a)
    return ObservationTable(
        subject_id=np.arange(n),
        data={"y": y, "z1": z1, "z2": np.where(missing, np.nan, z2), "a": a},
        roles={"y": "response", "z1": "covariate", "z2": "covariate", "a": "auxiliary"},
        incomplete="z2",
        levels={"z2": ("1", "2", "3")},
    )


def gen_sim2(config, rng):
    n = config.n
    h = SCENARIOS[config.scenario]
    a = rng.uniform(0.0, 5.0, n)
    z1 = rng.standard_normal(n)
    z2 = (rng.random(n) < 0.4).astype(float)
    eps = rng.standard_t(3, n)
    y = SIM2_BETA[0] + SIM2_BETA[1] * z1 + SIM2_BETA[2] * z2 + h(a) + eps
    observed = rng.random(n) < expit(-4.5 + z1 + z2 + 2.0 * a)
    return ObservationTable(
        subject_id=np.arange(n),
        data={"y": np.where(observed, y, np.nan), "z1": z1, "z2": z2, "a": a},
        roles={"y": "response", "z1": "covariate", "z2": "covariate", "a": "auxiliary"},
        incomplete="y",
    )


@lru_cache(maxsize=None)
def sim2_truth(scenario):
    """Analysis-model truth; the intercept absorbs E[h(A)] for A ~ U[0, 5]."""
    h = SCENARIOS[scenario]
    mean_h, _ = integrate.quad(lambda a: float(h(np.array(a))) / 5.0, 0.0, 5.0, limit=200)
    return (SIM2_BETA[0] + mean_h, SIM2_BETA[1], SIM2_BETA[2])


# --------------------------------------------------------------------------- methods

@dataclass(frozen=True)
class StudyConfig:
    design: str = "sim1"
    n: int = 1000
    eta: float = -1.1
    scenario: str = "log"
    methods: tuple = ("PEEE",)
    replications: int = 300
    seed: int = 1
    bootstrap_B: int = 100
    threads: int = 1

    def __post_init__(self):
        if self.design not in ("sim1", "sim2"):
            raise ConfigurationError(f"unknown design {self.design!r}")
        if self.replications < 2:
            raise ConfigurationError("replications must be >= 2")
        object.__setattr__(self, "methods", tuple(self.methods))
        for m in self.methods:
            _parse_method(m, self.design)
        if self.design == "sim2" and self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")

    @property
    def truth(self):
        return SIM1_BETA if self.design == "sim1" else sim2_truth(self.scenario)

    @property
    def coef_names(self):
        return SIM1_COEFS if self.design == "sim1" else SIM2_COEFS


_METHOD = re.compile(r"^(CC|PEEE|MCPEEE|MIB)(\d*)(-flex)?$")


def _parse_method(name, design):
    match = _METHOD.match(name)
    if match is None:
        raise ConfigurationError(f"unknown method {name!r}")
    base, digits, flex = match.groups()
    if base in ("CC", "PEEE") and digits:
        raise ConfigurationError(f"method {base} takes no imputation count")
    if design == "sim1" and (flex or base == "MCPEEE"):
        raise ConfigurationError(f"method {name!r} is only available for sim2")
    default_S = 5 if design == "sim1" else 10
    return base, int(digits) if digits else default_S, bool(flex)


def _method_runner(config, name):
    """Return ``f(table, rng) -> (estimate, se)`` for a named method."""
    base, S, flex = _parse_method(name, config.design)
    if config.design == "sim1":
        analysis, family = SIM1_ANALYSIS, "logistic"
        spec = IncompleteSpec(SIM1_IMPUTATION, "multinomial", "discrete")
        mi_spec = IncompleteSpec(SIM1_IMPUTATION, "multinomial", "monte-carlo", S=S, force=True)
    else:
        analysis, family = SIM2_ANALYSIS, "linear"
        imp = SIM2_IMPUTATION_FLEX if flex else SIM2_IMPUTATION
        spec = IncompleteSpec(imp, "linear-mean", "linear-moment")
        mi_spec = IncompleteSpec(imp, "linear-mean+variance", "monte-carlo", S=S)

    if base == "CC":
        def run(table, rng):
            fit = complete_case_fit(table, analysis, family)
            return fit.coefficients, np.sqrt(np.diag(fit.robust_vcov()))
    elif base == "PEEE":
        def run(table, rng):
            fit = peee_fit(table, analysis, family, spec)
            return fit.theta_hat, np.sqrt(np.diag(variance(fit)))
    elif base == "MCPEEE":
        def run(table, rng):
            fit = peee_fit(table, analysis, family, mi_spec, rng=rng)
            return fit.theta_hat, np.sqrt(np.diag(variance(fit)))
    else:
        def estimate(tbl, r):
            return mib_fit(tbl, analysis, family, mi_spec, S, r).coefficients

        def run(table, rng):
            point = estimate(table, rng)
            boot = bootstrap_variance(table, estimate, config.bootstrap_B, rng, pass_rng=True)
            return point, boot.se
    return run


def _generate(config, rng):
    if config.design == "sim1":
        return gen_sim1(Sim1Config(config.n, config.eta, config.seed), rng)
    return gen_sim2(Sim2Config(config.n, config.scenario, config.seed), rng)


def run_replication(config, r):
    """One replication: data from stream (seed, r), each method on its own stream."""
    table = _generate(config, stream(config.seed, r, "data"))
    out = {}
    for name in config.methods:
        runner = _method_runner(config, name)
        t0 = time.perf_counter()
        try:
            est, se = runner(table, stream(config.seed, r, name))
            error = None
        except PeeeError as exc:
            est = se = None
            error = f"{type(exc).__name__}: {exc}"
        out[name] = (est, se, time.perf_counter() - t0, error)
    return out


def _replication_job(args):
    return run_replication(*args)


# --------------------------------------------------------------------------- reports

@dataclass(eq=False)
class StudyReport:
    """Per-method, per-coefficient Monte Carlo summaries.

    ``timing`` holds wall-clock means and SDs; it is kept out of
    :meth:`to_dict` so that the machine-readable report is reproducible.
    """

    config: dict
    truth: tuple
    coef_names: tuple
    rows: list
    failures: dict
    replications: int
    reference: str
    timing: dict = field(default_factory=dict)

    def metric(self, method, coef, key):
        for row in self.rows:
            if row["method"] == method and row["coef"] == coef:
                return row[key]
        raise KeyError((method, coef))

    def to_dict(self):
        return {
            "config": self.config,
            "truth": dict(zip(self.coef_names, self.truth)),
            "replications": self.replications,
            "reference_method": self.reference,
            "failures": self.failures,
            "results": self.rows,
        }

    def timing_dict(self):
        return {"config": self.config, "timing_seconds": self.timing}

    def format_table(self):
        header = f"{'Method':<12}{'beta':<14}{'Bias (%)':>10}{'MCSD':>8}{'ASE':>8}{'CP':>8}{'RE':>8}"
        lines = [header, "-" * len(header)]
        last = None
        for row in self.rows:
            method = row["method"] if row["method"] != last else ""
            if row["method"] != last and last is not None:
                lines.append("")
            last = row["method"]
            lines.append(f"{method:<12}{row['coef']:<14}{row['bias_pct']:>10.3f}{row['mcsd']:>8.3f}"
                         f"{row['ase']:>8.3f}{row['cp']:>8.3f}{row['re']:>8.3f}")
        return "\n".join(lines)

    def format_timing(self):
        lines = [f"{'Method':<12}{'Mean (s)':>10}{'SD (s)':>10}"]
        for name, t in self.timing.items():
            lines.append(f"{name:<12}{t['mean']:>10.4f}{t['sd']:>10.4f}")
        return "\n".join(lines)


def _summarize(config, results):
    truth = np.asarray(config.truth)
    est, ses, times, failures = {}, {}, {}, {}
    for name in config.methods:
        ok = [res[name] for res in results if res[name][3] is None]
        failures[name] = len(results) - len(ok)
        if len(ok) < 2:
            raise PeeeError(f"method {name} failed in too many replications")
        est[name] = np.vstack([o[0] for o in ok])
        ses[name] = np.vstack([o[1] for o in ok])
        times[name] = np.array([res[name][2] for res in results])
    reference = "PEEE" if "PEEE" in config.methods else config.methods[0]
    ref_var = est[reference].var(axis=0, ddof=1)
    rows = []
    for name in config.methods:
        e, s = est[name], ses[name]
        mean = e.mean(axis=0)
        var = e.var(axis=0, ddof=1)
        covered = np.abs(e - truth) <= 1.96 * s
        for j, coef in enumerate(config.coef_names):
            denom = abs(truth[j])
            bias = mean[j] - truth[j]
            rows.append({
                "method": name,
                "coef": coef,
                "bias_pct": float(100.0 * bias / denom) if denom > 0 else float(bias),
                "mcsd": float(np.sqrt(var[j])),
                "ase": float(s[:, j].mean()),
                "cp": float(covered[:, j].mean()),
                "re": float(var[j] / ref_var[j]),
            })
    timing = {name: {"mean": float(t.mean()), "sd": float(t.std(ddof=1))}
              for name, t in times.items()}
    return StudyReport(config=asdict(config), truth=tuple(float(t) for t in truth),
                       coef_names=tuple(config.coef_names), rows=rows, failures=failures,
                       replications=config.replications, reference=reference, timing=timing)


def run_study(config, progress=None):
    """Run all replications and aggregate.

    Replication ``r`` draws from streams keyed by ``(config.seed, r)`` and
    results are folded in replication order, so the report does not depend
    on ``config.threads``.
    """
    jobs = [(config, r) for r in range(config.replications)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(_replication_job, jobs, chunksize=4))
    else:
        results = []
        for job in jobs:
            results.append(_replication_job(job))
            if progress is not None:
                progress(len(results), len(jobs))
    return _summarize(config, results)


# --------------------------------------------------------------------------- timing

@dataclass(eq=False)
class BenchReport:
    config: dict
    results: list
    timing: list

    def to_dict(self):
        return {"config": self.config, "results": self.results}

    def timing_dict(self):
        return {"config": self.config, "timing_seconds": self.timing}

    def format_table(self):
        lines = [f"{'n':>8}{'closed-form mean':>18}{'sd':>10}{'bootstrap mean':>16}{'sd':>10}{'ratio':>9}"]
        for t in self.timing:
            lines.append(f"{t['n']:>8}{t['closed_form_mean']:>18.4f}{t['closed_form_sd']:>10.4f}"
                         f"{t['bootstrap_mean']:>16.4f}{t['bootstrap_sd']:>10.4f}{t['speedup']:>9.1f}")
        return "\n".join(lines)


def _sd(x):
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def run_bench(grid=(1000, 5000, 10000), eta=-1.1, trials=3, B=100, seed=1, threads=1):
    """Time the closed-form variance against the bootstrap on sim1 data."""
    results, timing = [], []
    for n in grid:
        cf_times, bs_times, per_trial = [], [], []
        for t in range(trials):
            table = gen_sim1(Sim1Config(n, eta, seed), stream(seed, "bench", n, t))

            def estimator(tbl):
                return peee_fit(tbl, SIM1_ANALYSIS, "logistic",
                                IncompleteSpec(SIM1_IMPUTATION)).theta_hat

            fit = peee_fit(table, SIM1_ANALYSIS, "logistic", IncompleteSpec(SIM1_IMPUTATION))
            t0 = time.perf_counter()
            v = variance(fit)
            cf_times.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            boot = bootstrap_variance(table, estimator, B, stream(seed, "boot", n, t),
                                      threads=threads)
            bs_times.append(time.perf_counter() - t0)
            per_trial.append({
                "trial": t,
                "closed_form_se": [float(x) for x in np.sqrt(np.diag(v))],
                "bootstrap_se": [float(x) for x in boot.se],
                "bootstrap_failures": boot.failures,
            })
        results.append({"n": int(n), "trials": per_trial})
        cf, bs = float(np.mean(cf_times)), float(np.mean(bs_times))
        timing.append({"n": int(n), "closed_form_mean": cf, "closed_form_sd": _sd(cf_times),
                       "bootstrap_mean": bs, "bootstrap_sd": _sd(bs_times),
                       "speedup": bs / cf})
    config = {"grid": [int(n) for n in grid], "eta": eta, "trials": trials, "B": B,
              "seed": seed, "threads": threads}
    return BenchReport(config=config, results=results, timing=timing)
