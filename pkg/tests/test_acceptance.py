"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The Monte Carlo checks run at desk scale (a few hundred replications) and
take several minutes in total on one core.
"""

import json

import numpy as np
import statsmodels.api as sm

from peee.augment import draw_uniforms, fit_gamma, augment_discrete, augment_monte_carlo
from peee.baselines import bootstrap_variance, mib_fit
from peee.cli import main
from peee.core import IncompleteSpec, collapse_subject_scores, peee_fit, variance
from peee.formula import build_design, response_vector
from peee.glm import fit_weighted_linear, fit_weighted_logistic, predict_multinomial
from peee.numdiff import jacobian_fd
from peee.rng import stream
from peee.simstudy import (SIM1_ANALYSIS, SIM1_IMPUTATION, SIM2_ANALYSIS, SIM2_IMPUTATION,
                           Sim1Config, Sim2Config, StudyConfig, gen_sim1, gen_sim2,
                           run_bench, run_study)
from peee.splines import SplineBasis, eval_basis
from conftest import record_criterion

DISCRETE = IncompleteSpec(SIM1_IMPUTATION, "multinomial", "discrete")


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def test_criterion_1_exact_reductions():
    t1 = gen_sim1(Sim1Config(2000, -30.0), stream(101, "acc"))
    fit1 = peee_fit(t1, SIM1_ANALYSIS, "logistic", DISCRETE)
    mle1 = fit_weighted_logistic(build_design(SIM1_ANALYSIS, t1).values,
                                 response_vector(SIM1_ANALYSIS, t1))
    t2 = gen_sim2(Sim2Config(2000, "log"), stream(102, "acc"))
    t2 = t2.take(np.flatnonzero(~t2.mask))
    fit2 = peee_fit(t2, SIM2_ANALYSIS, "linear",
                    IncompleteSpec(SIM2_IMPUTATION, "linear-mean", "linear-moment"))
    X2 = build_design(SIM2_ANALYSIS, t2).values
    y2 = response_vector(SIM2_ANALYSIS, t2)
    mle2 = fit_weighted_linear(X2, y2)
    hc0 = sm.OLS(y2, X2).fit(cov_type="HC0").cov_params()
    errs = {
        "logistic coef": _rel(fit1.theta_hat, mle1.coefficients),
        "logistic vcov": _rel(variance(fit1), mle1.robust_vcov()),
        "linear coef": _rel(fit2.theta_hat, mle2.coefficients),
        "linear vcov (statsmodels HC0)": _rel(variance(fit2), hc0),
    }
    worst = max(errs.values())
    ok = record_criterion(1, "zero-missing reductions", worst <= 1e-10,
                          f"max relative error {worst:.2e} (bound 1e-10)")
    assert ok, errs


def test_criterion_2_monte_carlo_equals_stacked_imputation():
    worst, counts_ok = 0.0, True
    for seed in range(3):
        t = gen_sim1(Sim1Config(1000, -1.1), stream(200 + seed, "acc"))
        spec = IncompleteSpec(SIM1_IMPUTATION, "multinomial", "monte-carlo", S=5, force=True)
        u = draw_uniforms(t, 5, stream(200 + seed, "u"))
        pe = peee_fit(t, SIM1_ANALYSIS, "logistic", spec, uniforms=u)
        mi = mib_fit(t, SIM1_ANALYSIS, "logistic", spec, 5, uniforms=u)
        worst = max(worst, _rel(pe.theta_hat, mi.coefficients))
        m = int(t.mask.sum())
        counts_ok &= pe.augmented.n_rows == t.n + m * 4 and mi.scores.shape[0] == t.n * 5

        t2 = gen_sim2(Sim2Config(1000, "log"), stream(210 + seed, "acc"))
        spec2 = IncompleteSpec(SIM2_IMPUTATION, "linear-mean+variance", "monte-carlo", S=10)
        u2 = draw_uniforms(t2, 10, stream(210 + seed, "u"))
        pe2 = peee_fit(t2, SIM2_ANALYSIS, "linear", spec2, uniforms=u2)
        mi2 = mib_fit(t2, SIM2_ANALYSIS, "linear", spec2, 10, uniforms=u2)
        worst = max(worst, _rel(pe2.theta_hat, mi2.coefficients))
        m2 = int(t2.mask.sum())
        counts_ok &= pe2.augmented.n_rows == t2.n + m2 * 9 and mi2.scores.shape[0] == t2.n * 10
    ok = record_criterion(2, "monte-carlo PEEE equals type B imputation", worst <= 1e-11 and counts_ok,
                          f"max relative difference {worst:.2e} (roundoff bound 1e-11); "
                          f"row counts n+m(S-1) vs nS {'ok' if counts_ok else 'WRONG'}")
    assert ok


def test_criterion_3_sim1_desk_scale():
    rep = run_study(StudyConfig(design="sim1", n=1000, eta=-1.1, methods=("PEEE",),
                                replications=300, seed=3))
    rows = [r for r in rep.rows if r["method"] == "PEEE"]
    bias_ok = all(abs(r["bias_pct"]) < 5 for r in rows)
    ratio = [r["ase"] / r["mcsd"] for r in rows]
    ratio_ok = all(0.85 <= x <= 1.15 for x in ratio)
    cp_ok = all(0.92 <= r["cp"] <= 0.98 for r in rows)
    detail = "; ".join(f"{r['coef']} bias {r['bias_pct']:.2f}% ASE/MCSD {x:.3f} CP {r['cp']:.3f}"
                       for r, x in zip(rows, ratio))
    ok = record_criterion(3, "sim1 n=1000 eta=-1.1", bias_ok and ratio_ok and cp_ok, detail)
    assert ok


def test_criterion_4_sim1_high_missingness():
    rep = run_study(StudyConfig(design="sim1", n=5000, eta=-0.2, methods=("PEEE",),
                                replications=300, seed=4))
    mcsd = rep.metric("PEEE", "z2[2]", "mcsd")
    cp = rep.metric("PEEE", "z2[2]", "cp")
    ok = record_criterion(4, "sim1 n=5000 eta=-0.2 beta2",
                          0.085 <= mcsd <= 0.12 and 0.92 <= cp <= 0.98,
                          f"MCSD {mcsd:.4f} (band 0.085-0.12), CP {cp:.3f} (band 0.92-0.98)")
    assert ok


def test_criterion_5_misspecified_vs_flexible():
    rep = run_study(StudyConfig(design="sim2", n=5000, scenario="cos",
                                methods=("PEEE", "PEEE-flex"), replications=200, seed=5))
    cp0 = rep.metric("PEEE", "(Intercept)", "cp")
    bias0 = rep.metric("PEEE", "(Intercept)", "bias_pct")
    flex = [r for r in rep.rows if r["method"] == "PEEE-flex"]
    flex_ok = all(0.92 <= r["cp"] <= 0.98 for r in flex)
    ok = record_criterion(
        5, "cos scenario, linear vs spline imputation",
        cp0 < 0.2 and abs(bias0) > 25 and flex_ok,
        f"linear: beta0 CP {cp0:.3f}, bias {bias0:.1f}%; flexible CP "
        + ", ".join(f"{r['coef']} {r['cp']:.3f}" for r in flex))
    assert ok


def test_criterion_6_closed_form_vs_bootstrap():
    t = gen_sim1(Sim1Config(2000, -1.1), stream(6, "acc"))
    fit = peee_fit(t, SIM1_ANALYSIS, "logistic", DISCRETE)
    se = np.sqrt(np.diag(variance(fit)))
    boot = bootstrap_variance(
        t, lambda tbl: peee_fit(tbl, SIM1_ANALYSIS, "logistic", DISCRETE).theta_hat,
        200, stream(6, "boot"))
    rel = np.abs(se / boot.se - 1)
    ok = record_criterion(6, "closed-form vs bootstrap SEs (n=2000, B=200)", rel.max() <= 0.15,
                          "relative differences " + ", ".join(f"{x:.3f}" for x in rel)
                          + " (bound 0.15)")
    assert ok


def test_criterion_7_timing():
    rep = run_bench(grid=(10_000,), eta=-1.1, trials=2, B=100, seed=7)
    t = rep.timing[0]
    ok = record_criterion(7, "closed-form speedup at n=10000, B=100", t["speedup"] >= 10,
                          f"closed-form {t['closed_form_mean']:.3f}s, bootstrap "
                          f"{t['bootstrap_mean']:.2f}s, ratio {t['speedup']:.0f} (bound 10)")
    assert ok


def test_criterion_8_numerical_kernels():
    rng = np.random.default_rng(8)
    checks = {}
    worst = 0.0
    for _ in range(20):
        A, b, x = rng.normal(size=(4, 5)), rng.normal(size=4), rng.normal(size=5)
        worst = max(worst, np.abs(jacobian_fd(lambda v: A @ v + b, x) - A).max())
    checks["fd jacobian affine"] = (worst, 1e-6)

    worst = 0.0
    for order in range(1, 6):
        for n_int in range(0, 6):
            basis = SplineBasis.from_data(rng.uniform(0, 5, 200), n_int, order)
            B = eval_basis(basis, rng.uniform(-1, 6, 500))
            worst = max(worst, np.abs(B.sum(axis=1) - 1).max())
    checks["spline partition of unity"] = (worst, 1e-10)

    t = gen_sim1(Sim1Config(5000, -1.1), stream(8, "acc"))
    g = fit_gamma(t, SIM1_IMPUTATION, "multinomial")
    P = predict_multinomial(g.fit, g.design.values)
    checks["multinomial rows sum to 1"] = (np.abs(P.sum(axis=1) - 1).max(), 1e-12)

    aug = augment_discrete(t, g)
    sums = np.bincount(aug.source_row, weights=aug.weights, minlength=t.n)
    aug_mc = augment_monte_carlo(t, g, 7, stream(8, "mc"), force=True)
    sums_mc = np.bincount(aug_mc.source_row, weights=aug_mc.weights, minlength=t.n)
    checks["augmentation weights sum to 1"] = (
        max(np.abs(sums - 1).max(), np.abs(sums_mc - 1).max()), 1e-12)

    fits = [peee_fit(t, SIM1_ANALYSIS, "logistic", DISCRETE)]
    t2 = gen_sim2(Sim2Config(3000, "log"), stream(9, "acc"))
    fits.append(peee_fit(t2, SIM2_ANALYSIS, "linear",
                         IncompleteSpec(SIM2_IMPUTATION, "linear-mean", "linear-moment")))
    fits.append(peee_fit(t2, SIM2_ANALYSIS, "linear",
                         IncompleteSpec("y ~ z1 + z2 + bs(a,3,4)", "linear-mean+variance",
                                        "monte-carlo", S=5), rng=stream(9, "mc")))
    score_ratio, psd_ok = 0.0, True
    for fit in fits:
        U = collapse_subject_scores(fit.analysis_fit, fit.augmented)
        score_ratio = max(score_ratio, np.abs(U.sum(axis=0)).max() / fit.n_subjects)
        v = variance(fit)
        psd_ok &= bool(np.array_equal(v, v.T) and np.linalg.eigvalsh(v).min() >= 0)
    checks["collapsed scores sum / n"] = (score_ratio, 1e-6)

    failed = [k for k, (val, bound) in checks.items() if not val <= bound]
    detail = "; ".join(f"{k} {val:.1e} (<= {bound:.0e})" for k, (val, bound) in checks.items())
    detail += f"; sandwich symmetric PSD {'yes' if psd_ok else 'NO'}"
    ok = record_criterion(8, "numerical kernels", not failed and psd_ok, detail)
    assert ok, failed


def test_criterion_9_determinism(tmp_path):
    runs = {
        "simulate": ["simulate", "--design", "sim2", "--scenario", "log", "--n", "400",
                     "--replications", "3", "--methods", "CC,PEEE,MCPEEE,MIB5",
                     "--bootstrap-B", "10", "--seed", "9", "--threads", "2"],
        "bench": ["bench", "--grid", "300,600", "--trials", "2", "--B", "10", "--seed", "9"],
    }
    same = {}
    for name, argv in runs.items():
        out = [tmp_path / f"{name}{i}.json" for i in range(2)]
        codes = [main([*argv, "--output", str(p)]) for p in out]
        same[name] = codes == [0, 0] and out[0].read_bytes() == out[1].read_bytes()
        json.loads(out[0].read_text())
    ok = record_criterion(9, "byte-identical machine-readable output", all(same.values()),
                          ", ".join(f"{k} {'identical' if v else 'DIFFERENT'}"
                                    for k, v in same.items()))
    assert ok
