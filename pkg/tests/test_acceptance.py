"""Acceptance suite: one test per criterion, tolerances pinned up front.

Each test prints a single PASS line with the measured quantities; a pytest
failure on any test is the corresponding FAIL line.
"""

import math
import time

import numpy as np
import pytest

from qsa_lab import envs, linmodel, probe, qsa, qsgd
from qsa_lab.gain import GainKind, GainSchedule


def _rate_case(rho: float, g: float):
    inst = envs.rates_instance()
    gs = GainSchedule(g=g, rho=rho)
    t0 = time.perf_counter()
    traj = qsa.integrate_qsa(inst.f, inst.probe, gs, [1.0], T=1e4, h=1e-3)
    elapsed = time.perf_counter() - t0
    fit = qsa.estimate_rate(qsa.error_series(traj, inst.theta_star), (1e2, 1e4))
    return fit.rho_hat, elapsed


@pytest.mark.parametrize("rho", [0.5, 0.7, 0.9])
def test_criterion_01_rate_dichotomy(rho):
    """rho in (0,1): fitted decay exponent equals rho +/- 0.1; <= 30 s per case."""
    rho_hat, elapsed = _rate_case(rho, g=1.0)
    assert elapsed <= 30.0, f"case exceeded the 30 s budget: {elapsed:.1f} s"
    assert abs(rho_hat - rho) <= 0.1
    print(f"\nACCEPTANCE 1 PASS: rho={rho} -> rho_hat={rho_hat:.4f} ({elapsed:.1f} s)")


def test_criterion_02_rho_one_gain_gate():
    """rho=1: g=0.5 degrades the rate (I + gA* not Hurwitz); g=2 restores 1/t."""
    rho_hat_small, el1 = _rate_case(1.0, g=0.5)
    rho_hat_large, el2 = _rate_case(1.0, g=2.0)
    assert max(el1, el2) <= 30.0
    assert rho_hat_small <= 0.7
    assert abs(rho_hat_large - 1.0) <= 0.1
    print(
        f"\nACCEPTANCE 2 PASS: g=0.5 -> rho_hat={rho_hat_small:.4f} (<= 0.7); "
        f"g=2 -> rho_hat={rho_hat_large:.4f} (= 1 +/- 0.1)"
    )


def test_criterion_03_qmc_reproduction():
    """Medians within 0.02 of -0.4841 over 10^3 quasi-random starts; 100x variance drop."""
    t0 = time.perf_counter()
    res = envs.qmc_experiment([1.0, 2.0], T=100.0, h=1e-3, trials=1000, init_spread=math.sqrt(10.0))
    elapsed = time.perf_counter() - t0
    assert elapsed <= 300.0, f"exceeded the 5 min budget: {elapsed:.0f} s"
    med1 = float(np.median(res.estimates[1.0]))
    med2 = float(np.median(res.estimates[2.0]))
    var1 = float(np.var(res.estimates[1.0]))
    var2 = float(np.var(res.estimates[2.0]))
    assert abs(med1 - (-0.4841)) <= 0.02
    assert abs(med2 - (-0.4841)) <= 0.02
    assert var2 <= var1 / 100.0
    print(
        f"\nACCEPTANCE 3 PASS: medians g=1: {med1:.4f}, g=2: {med2:.4f} "
        f"(target -0.4841 +/- 0.02); var ratio {var2 / var1:.2e} <= 1e-2 ({elapsed:.0f} s)"
    )


def test_criterion_04_linear_closed_form():
    """Closed form vs Euler on a 2-d Hurwitz instance: <= 10h, Richardson ratio 2 +/- 0.5."""
    m = linmodel.LinearModel(
        np.array([[0.0, 1.0], [-1.0, -2.1]]), np.array([[1.0], [0.5]]), np.array([0.3, -0.2])
    )
    pr = probe.sinusoid_mixture([((1.0,), 1.0, 0.1)])
    alpha, h = 0.1, 1e-3
    theta0 = m.theta_star + np.array([1.0, -1.0])
    gs = GainSchedule(g=alpha, kind=GainKind.CONSTANT)
    devs = {}
    for step in (h, h / 2.0):
        traj = qsa.integrate_qsa(m.f, pr, gs, theta0, T=50.0, h=step)
        idx = np.arange(0, len(traj), max(1, len(traj) // 2000))
        closed = linmodel.linear_qsa_closed_form(m, pr, alpha, theta0, traj.times[idx])
        devs[step] = float(np.max(np.linalg.norm(traj.states[idx] - closed, axis=1)))
        assert devs[step] <= 10.0 * step, f"deviation {devs[step]:.2e} exceeds 10h at h={step}"
    ratio = devs[h] / devs[h / 2.0]
    assert 1.5 <= ratio <= 2.5
    print(
        f"\nACCEPTANCE 4 PASS: dev(h)={devs[h]:.2e} <= {10 * h:.0e}, "
        f"dev(h/2)={devs[h / 2.0]:.2e}, ratio={ratio:.2f}"
    )


def test_criterion_05_rp_averaging_rates():
    """Averaged estimates: additive noise reaches 1/T; nonzero bias degrades to a_T."""
    gs = GainSchedule(g=1.0, rho=0.7)
    window = (1e2, 1e4)

    inst_add = envs.additive_instance()
    traj = qsa.integrate_qsa(inst_add.f, inst_add.probe, gs, [5.0], T=1e4, h=1e-3)
    rp = qsa.rp_average(traj, mode="ode")
    slope_add = qsa.estimate_rate(qsa.error_series(rp, inst_add.theta_star), window).rho_hat

    inst_mul = envs.multiplicative_instance()
    traj2 = qsa.integrate_qsa(inst_mul.f, inst_mul.probe, gs, [0.0], T=1e4, h=1e-3)
    rp2 = qsa.rp_average(traj2, mode="ode")
    slope_mul = qsa.estimate_rate(qsa.error_series(rp2, inst_mul.theta_star), window).rho_hat

    assert abs(slope_add - 1.0) <= 0.15
    assert slope_mul <= 0.85
    print(
        f"\nACCEPTANCE 5 PASS: additive slope {slope_add:.3f} (= 1 +/- 0.15); "
        f"multiplicative slope {slope_mul:.3f} (<= 0.85)"
    )


def test_criterion_06_y_bar_identity():
    """Tail average of the scaled error matches (A* + r I)^{-1} Upsilon-bar within 10%."""
    inst = envs.multiplicative_instance()
    rho = 0.7
    gs = GainSchedule(g=1.0, rho=rho)
    f_vec = lambda th, xi: np.array([inst.f(th[0], xi[0])])
    ub = linmodel.upsilon_bar_numeric(f_vec, inst.probe, [inst.theta_star], T=5e3, h=1e-2)
    bias = linmodel.y_bar(np.array([[inst.a_star]]), rho, ub)
    traj = qsa.integrate_qsa(inst.f, inst.probe, gs, [inst.theta_star], T=2e4, h=1e-2)
    z = qsa.scaled_error(traj, [inst.theta_star], gs)
    tail_mean = float(np.mean(z.values[int(0.9 * len(z)):, 0]))
    rel = abs(tail_mean - bias.y_bar[0]) / abs(bias.y_bar[0])
    assert rel <= 0.10
    print(
        f"\nACCEPTANCE 6 PASS: tail mean Z = {tail_mean:.5f} vs y_bar = {bias.y_bar[0]:.5f} "
        f"(rel gap {rel:.1%} <= 10%)"
    )


def test_criterion_07_poisson_fourier_identity():
    """Random 2-frequency series: integral identity on 10 intervals + coefficient bound."""
    rng = np.random.default_rng(17)
    omegas = [0.9, 2.3]
    coeffs = {}
    for n1 in range(3):
        for n2 in range(3):
            coeffs[(n1, n2)] = 0.5 * complex(rng.normal(), rng.normal())
    coeffs[(0, 0)] = complex(coeffs[(0, 0)].real, 0.0)
    series = probe.FourierSeries(coeffs)
    hat = probe.poisson_fourier(series, omegas)
    gbar = coeffs[(0, 0)].real
    hq = 1e-4
    worst = 0.0
    for _ in range(10):
        t0, t1 = np.sort(rng.uniform(0.0, 20.0, size=2))
        ts = np.linspace(t0, t1, max(2, int(round((t1 - t0) / hq))))
        vals = series.eval_at(omegas, ts).real - gbar
        integral = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts)))
        lhs = float(hat.eval_at(omegas, [t0])[0].real)
        rhs = integral + float(hat.eval_at(omegas, [t1])[0].real)
        worst = max(worst, abs(lhs - rhs))
    assert worst <= 10.0 * hq
    for n, c in hat.coeffs.items():
        assert abs(c) <= abs(coeffs[n]) / omegas[0] + 1e-14
    print(f"\nACCEPTANCE 7 PASS: worst identity gap {worst:.2e} <= {10 * hq:.0e}; bound holds")


def _quartic(th):
    return 0.5 * float(th[0] ** 2) + float(th[0] ** 3) / 6.0 + 0.25 * float(th[0] ** 4)


def _quartic_field_root(eps: float) -> float:
    """Bisection on the quadrature-averaged symmetric-difference field."""
    ts = np.arange(0.0, 4000.0, 0.02)
    xi = math.sqrt(2.0) * np.sin(ts)

    def fbar(theta: float) -> float:
        plus = theta + eps * xi
        minus = theta - eps * xi
        lp = 0.5 * plus**2 + plus**3 / 6.0 + 0.25 * plus**4
        lm = 0.5 * minus**2 + minus**3 / 6.0 + 0.25 * minus**4
        return float(np.mean(-xi * (lp - lm) / (2 * eps)))

    lo, hi = -0.5, 0.5
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if fbar(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_08_qsgd_bias_scaling():
    """Quartic-loss bias sweep: successive ratios in [2.5, 5.5], oracle-confirmed."""
    pr = probe.make_normalized_probe(1, [1.0])
    gs = GainSchedule(g=1.0, rho=0.8)
    cfg = qsgd.QsgdConfig(variant=qsgd.QsgdVariant.THREE, G=np.eye(1), epsilon=0.1)
    eps_list = [0.05, 0.1, 0.2]
    rows = qsgd.epsilon_bias_sweep(cfg, _quartic, pr, gs, eps_list, T=2e4, h=0.05, theta_star=[0.0])
    biases = {eps: bias for eps, bias in rows}
    oracle = {eps: abs(_quartic_field_root(eps)) for eps in eps_list}
    for eps in eps_list:
        rel = abs(biases[eps] - oracle[eps]) / oracle[eps]
        assert rel <= 0.25, f"run bias at eps={eps} off the oracle by {rel:.1%}"
    for lo, hi in ((0.05, 0.1), (0.1, 0.2)):
        run_ratio = biases[hi] / biases[lo]
        oracle_ratio = oracle[hi] / oracle[lo]
        assert 2.5 <= run_ratio <= 5.5
        assert 2.5 <= oracle_ratio <= 5.5
    print(
        "\nACCEPTANCE 8 PASS: biases "
        + ", ".join(f"eps={e}: {biases[e]:.2e} (oracle {oracle[e]:.2e})" for e in eps_list)
        + f"; ratios {biases[0.1] / biases[0.05]:.2f}, {biases[0.2] / biases[0.1]:.2f} in [2.5, 5.5]"
    )


def test_criterion_09_softmin_landscape():
    """Annealing meta-parameters on the soft-min landscape: final average within 0.5% of optimal."""
    pr = probe.make_normalized_probe(2, [0.25, math.exp(-2.0)])
    gs = GainSchedule(g=1.0, rho=0.9, cap=1e-3)
    cfg = qsgd.QsgdConfig(
        variant=qsgd.QsgdVariant.ONE,
        G=np.eye(2),
        epsilon=0.15,
        box=(np.array([-4.0, -4.0]), np.array([4.0, 4.0])),
    )
    t0 = time.perf_counter()
    _, theta_rp = qsgd.run_qsgd(cfg, envs.softmin_loss, pr, gs, np.array([-2.0, -2.0]), T=5e4, h=1.0)
    elapsed = time.perf_counter() - t0
    assert elapsed <= 120.0, f"exceeded the 2 min budget: {elapsed:.0f} s"
    span = np.linspace(0.9, 1.1, 201)
    X, Y = np.meshgrid(span, span, indexing="ij")
    L_star = float(np.min(envs.softmin_loss(np.stack([X, Y], axis=-1))))
    L_rp = float(envs.softmin_loss(theta_rp))
    rel = abs(L_rp - L_star) / abs(L_star)
    assert rel <= 0.005
    print(
        f"\nACCEPTANCE 9 PASS: theta_rp={np.round(theta_rp, 4)}, L={L_rp:.3f} vs L*={L_star:.3f} "
        f"(rel gap {rel:.2e} <= 5e-3, {elapsed:.0f} s)"
    )


def test_criterion_10_lqr_evaluation_and_pia():
    """Policy-evaluation coefficients within 5% of the Lyapunov oracle; PIA within 0.05 of K*."""
    p = envs.LqrProblem(
        A=np.array([[0.0, 1.0], [0.0, -0.1]]),
        B=np.array([[0.0], [1.0]]),
        M=np.eye(2),
        R=np.array([[10.0]]),
        K=np.array([[-1.0, 0.0]]),
        K0=np.array([[-1.0, -2.0]]),
    )
    pr = envs.lqr_excitation_probe()
    gs = GainSchedule(g=2.0, rho=0.8)
    T, h = 4000.0, 0.01

    t0 = time.perf_counter()
    theta_hat = envs.lqr_policy_eval(p, pr, gs, T=T, h=h)
    eval_elapsed = time.perf_counter() - t0
    assert eval_elapsed <= 120.0, f"evaluation exceeded 2 min: {eval_elapsed:.0f} s"
    oracle = envs.q_function_coefficients(p)
    rel = np.abs(theta_hat - oracle) / np.abs(oracle)
    assert rel.max() <= 0.05

    ks = envs.lqr_pia(p, rounds=10, probe=pr, gain=gs, T=T, h=h)
    k_star = envs.kleinman_gain(p.A, p.B, p.M, p.R, p.K0)
    gap = float(np.max(np.abs(ks[-1] - k_star)))
    assert gap <= 0.05

    # monotone improvement under the exact policy-cost oracle
    costs = [float(np.trace(envs.value_matrix(p, K))) for K in ks]
    for earlier, later in zip(costs, costs[1:]):
        assert later <= earlier + 1e-6

    # a PIA step from the optimum barely moves
    p_star = envs.LqrProblem(A=p.A, B=p.B, M=p.M, R=p.R, K=k_star, K0=p.K0)
    theta_star_fit = envs.lqr_policy_eval(p_star, pr, gs, T=T, h=h)
    move = float(np.max(np.abs(envs.greedy_gain_from_theta(theta_star_fit) - k_star)))
    assert move <= 1e-2
    print(
        f"\nACCEPTANCE 10 PASS: eval max rel err {rel.max():.2e} <= 5%; "
        f"PIA gap {gap:.2e} <= 0.05 in {len(ks) - 1} rounds; costs monotone; "
        f"fixed-point move {move:.1e} <= 1e-2 ({eval_elapsed:.0f} s/eval)"
    )


def test_criterion_11_mountain_car():
    """Episodic search lands the final average in [-1.0, -0.6]; scan oracle agrees."""
    t0 = time.perf_counter()
    _, theta_rp = envs.mountain_car_pg(N=10_000, alpha=0.1, epsilon=0.05)
    grid, costs = envs.threshold_scan(np.arange(-1.2, 0.001, 0.1), n_states=400)
    elapsed = time.perf_counter() - t0
    assert elapsed <= 300.0, f"exceeded the 5 min budget: {elapsed:.0f} s"
    scan_best = float(grid[int(np.argmin(costs))])
    assert -1.0 <= theta_rp <= -0.6
    assert -1.0 <= scan_best <= -0.6
    print(
        f"\nACCEPTANCE 11 PASS: theta_rp={theta_rp:.3f}, scan argmin={scan_best:.2f} "
        f"(both in [-1.0, -0.6], {elapsed:.0f} s)"
    )


def test_criterion_12_property_suite():
    """Module invariants re-checked: Euler consistency, time change, probe limits,
    semigroup, Lyapunov residuals."""
    # Euler Richardson on a smooth instance
    pr = probe.sinusoid_mixture([((1.0,), 1.0, 0.0)])
    gs = GainSchedule(g=1.0, rho=1.0)
    f = lambda th, xi: -th + xi
    ref = qsa.integrate_qsa(f, pr, gs, [2.0], T=20.0, h=1e-4).final[0]
    errs = [abs(qsa.integrate_qsa(f, pr, gs, [2.0], T=20.0, h=hh).final[0] - ref) for hh in (4e-3, 2e-3)]
    ratio = errs[0] / errs[1]
    assert 1.5 <= ratio <= 2.5

    # time-transformation equivalence
    gpow = GainSchedule(g=1.5, rho=0.7)
    mean = qsa.integrate_mean_flow(lambda th: -th, gpow, [2.0], t0=0.0, T=50.0, h=1e-3)
    auto = qsa.integrate_autonomous(lambda th: -th, [2.0], T=gpow.integral(50.0), h=1e-4)
    tau = gpow.integral(50.0)
    k_auto = min(len(auto) - 1, int(round(tau / auto.h)))
    assert mean.final[0] == pytest.approx(auto.states[k_auto, 0], abs=1e-2)

    # probe normalization limit
    pn = probe.make_normalized_probe(2, [0.25, math.exp(-2.0)])
    mean_v, second = probe.ergodic_average(pn, 1e4, 1e-2)
    assert np.max(np.abs(mean_v)) <= 1e-2
    assert np.max(np.abs(second - np.eye(2))) <= 1e-2

    # matrix exponential semigroup
    rng = np.random.default_rng(9)
    A = rng.normal(size=(3, 3))
    A = A - (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(3)
    s, t = 1.3, 2.4
    gap = np.max(
        np.abs(
            linmodel.matrix_exponential(A, s + t)
            - linmodel.matrix_exponential(A, s) @ linmodel.matrix_exponential(A, t)
        )
    )
    assert gap <= 1e-6

    # Lyapunov residual
    Acl = np.array([[0.0, 1.0], [-1.0, -0.1]])
    Q = np.eye(2) + np.array([[10.0, 0.0], [0.0, 0.0]])
    P = linmodel.solve_lyapunov(Acl, Q)
    resid = np.linalg.norm(Acl.T @ P + P @ Acl + Q) / np.linalg.norm(Q)
    assert resid <= 1e-8
    print(
        f"\nACCEPTANCE 12 PASS: richardson {ratio:.2f}; time-change ok; probe limits ok; "
        f"semigroup gap {gap:.1e}; lyapunov residual {resid:.1e}"
    )
