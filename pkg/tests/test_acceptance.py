"""End-to-end acceptance gate: twelve numbered criteria.

Each test prints one ``CRITERION nn: PASS|FAIL`` line with the measured
quantities before asserting, so the verdicts survive in captured output.
"""

import json

import numpy as np
import pytest
from conftest import random_admissible_params

import ssvi
from ssvi.cli import main as cli_main
from ssvi.dictionary import BasisId
from ssvi.gaussian_oracle import GaussianDist, ssvi_gaussian
from ssvi.objective import SaaSample, free_energy, gradient
from ssvi.optimizer import PgdConfig, run_pgd
from ssvi.targets import mixture_neglog_deriv2


def report(num, ok, detail):
    print(f"CRITERION {num:02d}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, detail


def random_spd(rng, d, jitter=0.5):
    A = rng.normal(size=(d, d))
    S = A @ A.T + jitter * d * np.eye(d)
    Dh = np.diag(1.0 / np.sqrt(np.diag(S)))
    return Dh @ S @ Dh


COV2 = np.array([[1.0, 0.5], [0.5, 1.0]])


@pytest.fixture(scope="module")
def gauss2_fit():
    """Criterion-1 configuration, shared with the rate check (criterion 5)."""
    target = ssvi.GaussianTarget(np.zeros(2), COV2)
    spec = ssvi.build_dictionary(2, 4.0, 0.25)
    gram = ssvi.gram_matrix(spec)
    cfg = PgdConfig(step_size=0.5, max_iters=120, n_samples=20000, seed=0)
    import time
    t0 = time.perf_counter()
    result = run_pgd(target, spec, gram, cfg)
    runtime = time.perf_counter() - t0
    return target, spec, result, runtime


def test_criterion_01_gaussian_exactness_d2(gauss2_fit):
    target, spec, result, runtime = gauss2_fit
    tmap = ssvi.closed_form_star_map(np.zeros(2), COV2)
    dist, dist_se = ssvi.l2_map_distance(result.params, tmap, spec,
                                         mc_n=100000, seed=1)
    mean, cov, mean_se, cov_se = ssvi.pushforward_moments(
        result.params, spec, mc_n=20000, seed=2)
    cov_ok = np.all(np.abs(cov - COV2) <= 4 * cov_se)
    ok = dist <= 0.1 and cov_ok and runtime < 120
    report(1, ok,
           f"l2={dist:.4f} (need <=0.1), cov within 4se: {cov_ok}, "
           f"runtime={runtime:.0f}s (need <120)")


def test_criterion_02_star_covariance_formula():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(3, 11))
        cov = random_spd(rng, d)
        star = ssvi.ssvi_gaussian(np.zeros(d), cov).cov
        P = np.linalg.inv(cov)
        ref = np.empty_like(cov)
        ref[0, :] = cov[0, :]
        ref[:, 0] = cov[:, 0]
        for i in range(1, d):
            for j in range(1, d):
                ref[i, j] = (1.0 / P[i, i] + cov[0, i] ** 2 / cov[0, 0]
                             if i == j
                             else cov[0, i] * cov[0, j] / cov[0, 0])
        worst = max(worst, float(np.abs(star - ref).max()))
    report(2, worst <= 1e-10, f"max abs error {worst:.2e} (need <=1e-10)")


def test_criterion_03_variance_ratio_identity():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 11))
        cov = random_spd(rng, d)
        exact = GaussianDist(np.zeros(d), cov)
        kl_s = ssvi.kl_gaussians(ssvi.ssvi_gaussian(np.zeros(d), cov), exact)
        kl_m = ssvi.kl_gaussians(ssvi.mfvi_gaussian(np.zeros(d), cov), exact)
        worst = max(worst, abs(ssvi.ssvi_mfvi_gap(cov) - (kl_s - kl_m)))
    hand = abs(ssvi.ssvi_mfvi_gap(COV2) - 0.5 * np.log(0.75))
    ok = worst <= 1e-9 and hand <= 1e-10
    report(3, ok, f"max identity residual {worst:.2e} (need <=1e-9), "
                  f"rho=0.5 gap error {hand:.2e} (need <=1e-10)")


def test_criterion_04_gradient_vs_finite_differences():
    rng = np.random.default_rng(4)
    g_rng = np.random.default_rng(5)
    X = g_rng.normal(size=(50, 3))
    targets = {
        "gaussian": ssvi.GaussianTarget(np.zeros(3), random_spd(g_rng, 3)),
        "glm_location": ssvi.GlmLocationTarget(
            X, X @ g_rng.normal(size=3) + g_rng.normal(size=50),
            family="linear"),
        "spike_slab": ssvi.SpikeSlabGlmTarget(
            X, X @ np.array([0.4, 0.0, -0.2]) + g_rng.normal(size=50),
            family="linear", eta=0.2, tau0=5.0, tau1=1.0),
    }
    worst = 0.0
    h = 1e-5
    for name, target in targets.items():
        spec = ssvi.build_dictionary(target.d, 2.0, 0.5)
        sample = SaaSample.build(0, 2000, target.d)
        for _ in range(20):
            params = random_admissible_params(spec, rng, scale=0.15)
            glam, gv = gradient(params, spec, target, sample)
            u_lam = rng.normal(size=spec.p)
            u_v = rng.normal(size=target.d)
            scale = np.sqrt(u_lam @ u_lam + u_v @ u_v)
            u_lam /= scale
            u_v /= scale
            pp, pm = params.copy(), params.copy()
            pp.lam = pp.lam + h * u_lam
            pp.v = pp.v + h * u_v
            pm.lam = pm.lam - h * u_lam
            pm.v = pm.v - h * u_v
            fd = (free_energy(pp, spec, target, sample).value
                  - free_energy(pm, spec, target, sample).value) / (2 * h)
            an = float(glam @ u_lam + gv @ u_v)
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-10))
    report(4, worst < 1e-6,
           f"max relative gradient error {worst:.2e} (need <1e-6)")


def test_criterion_05_pgd_descent_and_rate(gauss2_fit):
    _, _, result, _ = gauss2_fit
    fe = result.free_energy_trace
    monotone = bool(np.all(np.diff(fe) <= 1e-10))
    sub = fe - (fe.min() - 1e-12)
    tail = sub[int(0.2 * len(sub)):]
    ratios = tail[1:] / tail[:-1]
    ratio = float(np.exp(np.mean(np.log(ratios))))
    bound = 1.0 - 1.0 / result.kappa + 0.05
    ok = monotone and ratio <= bound
    report(5, ok, f"monotone={monotone}, geometric ratio {ratio:.4f} "
                  f"<= bound {bound:.4f} (kappa={result.kappa:.3g})")


def test_criterion_06_self_consistency():
    cov = np.array([[1.0, 0.4, 0.3], [0.4, 1.0, 0.2], [0.3, 0.2, 1.2]])
    target = ssvi.GaussianTarget(np.zeros(3), cov)
    tmap = ssvi.closed_form_star_map(np.zeros(3), cov)
    spec = ssvi.build_dictionary(3, 4.0, 0.25)
    alpha = np.concatenate(([tmap.root_scale], tmap.leaf_scale))
    params = ssvi.build_oracle_approximator(tmap, spec, alpha)
    rep = ssvi.self_consistency_residual(params, spec, target,
                                         grid_sizes=(7, 5), mc_n=2000,
                                         seed=0)
    sig = [np.abs(rep.root_residual) / rep.root_std_error]
    sig += [np.abs(r) / s for r, s in zip(rep.leaf_residuals,
                                          rep.leaf_std_errors)]
    minimizer_sigma = float(np.concatenate(sig).max())

    rep_id = ssvi.self_consistency_residual(ssvi.identity_params(spec), spec,
                                            target, grid_sizes=(7, 5),
                                            mc_n=2000, seed=0)
    sig = [np.abs(rep_id.root_residual) / rep_id.root_std_error]
    sig += [np.abs(r) / s for r, s in zip(rep_id.leaf_residuals,
                                          rep_id.leaf_std_errors)]
    control_sigma = float(np.concatenate(sig).max())
    ok = minimizer_sigma <= 5.0 and control_sigma > 10.0
    report(6, ok, f"minimizer max {minimizer_sigma:.2f} sigma (need <=5), "
                  f"identity control max {control_sigma:.1f} sigma (need >10)")


def test_criterion_07_approximation_bound():
    rng = np.random.default_rng(7)
    violations = 0
    for trial in range(20):
        S = random_spd(rng, 3)
        t = 1.0
        while True:
            cov = np.eye(3) + t * (S - np.eye(3))
            target = ssvi.GaussianTarget(np.zeros(3), cov)
            consts = target.regularity_constants()
            if consts.ell_root > 0 and consts.ell > 0:
                break
            t *= 0.7
        cert = ssvi.approximation_bound(
            target, consts, mc_n=20000, seed=trial,
            star=ssvi_gaussian(np.zeros(3), cov))
        if cert.kl_exact > cert.rhs + 5 * cert.std_error:
            violations += 1
    report(7, violations == 0,
           f"{violations}/20 certificates violated (need 0)")


def test_criterion_08_jacobian_algebra():
    rng = np.random.default_rng(8)
    spec = ssvi.build_dictionary(3, 1.0, 0.5)
    cases = 0
    worst = 0.0
    classes_seen = set()
    B = spec.breakpoints
    one_per_class = [spec.index_of(b) for b in (
        BasisId("M0", None, B[0]),
        BasisId("M1", 1, B[1], B[2]),
        BasisId("M2", 2, B[2], B[1]),
        BasisId("M3", 1, B[1]),
        BasisId("M4", 2, B[0]),
        BasisId("M5", 1, B[3]))]
    for _ in range(10):
        params = random_admissible_params(spec, rng, scale=0.15)
        for x in rng.normal(0.0, 1.5, size=(10, 3)):
            jac = ssvi.jacobian(params, spec, x)
            dense = jac.dense()
            worst = max(worst, abs(ssvi.log_det(jac)
                                   - np.linalg.slogdet(dense)[1]))
            Jinv = np.linalg.inv(dense)
            idxs = list(rng.choice(spec.p, 4, replace=False)) + one_per_class
            for idx in idxs:
                bid = spec.id_of(idx)
                classes_seen.add(bid.cls)
                c = 0 if bid.cls == "M0" else bid.i
                dd, dr = spec.basis_partials(bid, x)
                D = np.zeros((3, 3))
                D[c, c] = dd
                if c != 0:
                    D[c, 0] = dr
                ref = float(np.trace(Jinv @ D))
                got = float(ssvi.inverse_trace_weight(jac, (dd, dr), c))
                worst = max(worst, abs(got - ref))
                cases += 1
    ok = worst <= 1e-10 and cases >= 1000 and len(classes_seen) == 6
    report(8, ok, f"{cases} cases, classes {sorted(classes_seen)}, "
                  f"max abs error {worst:.2e} (need <=1e-10)")


def test_criterion_09_mixture_semi_log_concavity():
    rng = np.random.default_rng(9)
    x = np.linspace(-10.0, 10.0, 8001)
    worst = np.inf
    for _ in range(20):
        eta = rng.uniform(0.02, 0.98)
        tau1 = rng.uniform(0.2, 2.0)
        tau0 = tau1 * rng.uniform(1.1, 8.0)
        bound = ssvi.mixture_log_concavity_bound(eta, tau0, tau1)
        margin = mixture_neglog_deriv2(x, eta, tau0, tau1).min() - bound
        worst = min(worst, margin)
    report(9, worst >= -1e-9,
           f"min grid margin over bound {worst:.3e} (need >=-1e-9)")


def test_criterion_10_approximator_convergence():
    tmap = ssvi.closed_form_star_map(np.zeros(2), COV2)
    alpha = np.array([tmap.root_scale, tmap.leaf_scale[0]])
    errs = {}
    for delta in (1.0, 0.5, 0.25):
        spec = ssvi.build_dictionary(2, 4.0, delta)
        params = ssvi.build_oracle_approximator(tmap, spec, alpha)
        errs[delta], _ = ssvi.l2_map_distance(params, tmap, spec,
                                              mc_n=100000, seed=10)
    ratios = (errs[1.0] / errs[0.5], errs[0.5] / errs[0.25])
    delta_ok = (errs[1.0] > errs[0.5] > errs[0.25]
                and all(1.5 <= r <= 2.5 for r in ratios))
    r_errs = {}
    for R in (2.0, 4.0):
        spec = ssvi.build_dictionary(2, R, 0.5)
        params = ssvi.build_oracle_approximator(tmap, spec, alpha)
        r_errs[R], _ = ssvi.l2_map_distance(params, tmap, spec,
                                            mc_n=100000, seed=10)
    r_ok = r_errs[2.0] > r_errs[4.0]
    report(10, delta_ok and r_ok,
           f"delta errors {[f'{errs[d]:.5f}' for d in (1.0, 0.5, 0.25)]} "
           f"ratios {[f'{r:.2f}' for r in ratios]} (need [1.5,2.5]); "
           f"R errors 2->{r_errs[2.0]:.5f}, 4->{r_errs[4.0]:.5f} "
           f"(decrease: {r_ok})")


def test_criterion_11_spike_slab_condition_rate():
    rng = np.random.default_rng(11)
    cov = np.full((20, 20), 0.05) + 0.95 * np.eye(20)
    passes = 0
    for seed in range(100):
        X = ssvi.gaussian_ensemble_design(cov, 2000, seed)
        y = X @ rng.normal(size=20) * 0.1 + rng.normal(size=2000)
        target = ssvi.SpikeSlabGlmTarget(X, y, family="linear", eta=0.1,
                                         tau0=10.0, tau1=1.0)
        if target.regularity_constants().ell_root > 0:
            passes += 1
    report(11, passes >= 95,
           f"root-domination condition held on {passes}/100 seeds (need >=95)")


def test_criterion_12_cli_determinism(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({
        "target": {"family": "gaussian", "mean": [0.0, 0.0],
                   "cov": [[1.0, 0.5], [0.5, 1.0]]},
        "dictionary": {"R": 2.0, "delta": 1.0},
        "optimizer": {"step_size": 0.5, "max_iters": 25, "n_samples": 4000},
        "seed": 0}))
    outs = []
    for name, threads in (("a", "1"), ("b", "2")):
        out = tmp_path / name
        assert cli_main(["fit", "--config", str(cfg), "--out", str(out),
                         "--threads", threads]) == 0
        assert cli_main(["oracle-gaussian", "--config", str(cfg),
                         "--out", str(out)]) == 0
        outs.append(out)
    a, b = outs
    same = all((a / f).read_bytes() == (b / f).read_bytes()
               for f in ("params.json", "trace.csv", "oracle.json"))
    report(12, same, "byte-identical primary outputs across thread counts: "
                     f"{same}")
