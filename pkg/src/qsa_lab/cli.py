"""Command-line front end: parse a TOML config, run one named experiment,
write CSV/JSON artifacts plus a manifest with content hashes.

Usage:
    qsa-lab run <config.toml> [--override k=v]... [--jobs N]
    qsa-lab list

Every experiment is pure with respect to its resolved config: rerunning an
identical config yields byte-identical outputs.  Unknown config keys are
fatal (exit 2); runtime divergence exits 3 after flagging partial outputs
in the manifest.  The environment variable QSA_LAB_OUT overrides out_dir.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import envs, linmodel, qsa, qsgd
from .gain import GainSchedule
from .probe import FourierSeries, ProbeSpec, make_normalized_probe, poisson_fourier, sinusoid_mixture
from .qsa import DivergenceError


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

_PROBE_SCHEMA = {"kind": None, "terms": "term_list"}
_GAIN_SCHEMA = {"g": None, "rho": None, "cap": None, "kind": None}


def _validate_keys(user: dict, schema: dict, path: str = "") -> None:
    for key, value in user.items():
        if key not in schema:
            raise ConfigError(f"unknown key '{path}{key}'")
        sub = schema[key]
        if sub == "term_list":
            if not isinstance(value, list):
                raise ConfigError(f"'{path}{key}' must be an array of tables")
            for i, entry in enumerate(value):
                _validate_keys(entry, {"v": None, "omega": None, "phi": None}, f"{path}{key}[{i}].")
        elif isinstance(sub, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{path}{key}' must be a table")
            _validate_keys(value, sub, f"{path}{key}.")


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _apply_override(cfg: dict, spec: str) -> None:
    if "=" not in spec:
        raise ConfigError(f"override '{spec}' is not of the form key=value")
    key, raw = spec.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path '{key}' crosses a non-table value")
    node[parts[-1]] = value


def _probe_from_cfg(cfg: dict | None, default: ProbeSpec) -> ProbeSpec:
    if not cfg:
        return default
    return ProbeSpec.from_config(cfg)


def _gain_from_cfg(cfg: dict | None, default: GainSchedule) -> GainSchedule:
    if not cfg:
        return default
    merged = _deep_merge(default.to_config(), cfg)
    return GainSchedule.from_config(merged)


# ---------------------------------------------------------------------------
# Deterministic artifact writing
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class OutputWriter:
    """Writes CSV/JSON into out_dir and remembers what it wrote."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.names: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list[str], rows) -> None:
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
        self.names.append(name)

    def json(self, name: str, obj) -> None:
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.names.append(name)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _pmap(fn, items, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Experiment runners
# ---------------------------------------------------------------------------


def _qmc_gain_worker(args):
    g, T, h, trials, spread, seed, init, subsamples = args
    res = envs.qmc_experiment([g], T, h, trials, spread, seed=seed, init=init, subsamples=subsamples)
    return res.estimates[g]


def run_qmc(cfg: dict, writer: OutputWriter, jobs: int) -> dict:
    p = cfg["params"]
    T, h = float(cfg["T"]), float(cfg["h"])
    gains = [float(g) for g in p["gains"]]
    trials = int(p["trials"])
    spread = float(p["init_spread"])
    work = [(g, T, h, trials, spread, int(p["seed"]), p["init"], int(p["subsamples"])) for g in gains]
    per_gain = _pmap(_qmc_gain_worker, work, jobs)
    mc = envs.qmc_experiment([], T, h, trials, spread, seed=int(p["seed"]), init=p["init"]).mc_estimates
    summary = {"theta_star": envs.QMC_THETA_STAR, "gains": {}}
    for g, est in zip(gains, per_gain):
        writer.csv(f"hist_g{g:g}.csv", ["trial", "estimate"], list(enumerate(est)))
        summary["gains"][f"{g:g}"] = {"median": float(np.median(est)), "variance": float(np.var(est))}
    writer.csv("hist_mc.csv", ["trial", "estimate"], list(enumerate(mc)))
    summary["monte_carlo"] = {"median": float(np.median(mc)), "variance": float(np.var(mc))}
    return summary


_INSTANCES = {
    "rates": envs.rates_instance,
    "additive": envs.additive_instance,
    "multiplicative": envs.multiplicative_instance,
}


def run_rates(cfg: dict, writer: OutputWriter, jobs: int) -> dict:
    p = cfg["params"]
    inst = _INSTANCES[p["instance"]]()
    gs = _gain_from_cfg(cfg.get("gain"), GainSchedule(g=1.0, rho=0.7))
    T, h = float(cfg["T"]), float(cfg["h"])
    traj = qsa.integrate_qsa(inst.f, inst.probe, gs, [float(p["theta0"])], T, h)
    errors = qsa.error_series(traj, inst.theta_star)
    window = (float(p["window"][0]), float(p["window"][1]))
    fit = qsa.estimate_rate(errors, window)
    step = max(1, len(errors) // int(p["max_csv_rows"]))
    writer.csv("errors.csv", ["t", "error"], errors[::step])
    writer.json("ratefit.json", fit.to_json_dict())
    writer.csv(
        "rates.csv",
        ["g", "rho", "rho_hat", "intercept", "residual"],
        [(gs.g, gs.rho, fit.rho_hat, fit.intercept, fit.residual)],
    )
    return {"rho": gs.rho, "g": gs.g, "rho_hat": fit.rho_hat}


def run_linear_check(cfg: dict, writer: OutputWriter, jobs: int) -> dict:
    p = cfg["params"]
    model = linmodel.LinearModel(np.array(p["A"]), np.array(p["B"]), np.array(p["theta_star"]))
    pr = _probe_from_cfg(cfg.get("probe"), sinusoid_mixture([((1.0,), 1.0, 0.1)]))
    alpha = float(p["alpha"])
    theta0 = np.array(p["theta0"], dtype=float)
    T, h = float(cfg["T"]), float(cfg["h"])
    gs = GainSchedule(g=alpha, kind="constant")
    devs = {}
    rows = None
    for step in (h, h / 2.0):
        traj = qsa.integrate_qsa(model.f, pr, gs, theta0, T, step)
        idx = np.arange(0, len(traj), max(1, len(traj) // 2000))
        ts = traj.times[idx]
        closed = linmodel.linear_qsa_closed_form(model, pr, alpha, theta0, ts)
        dev = np.linalg.norm(traj.states[idx] - closed, axis=1)
        devs[step] = float(dev.max())
        if step == h:
            rows = [
                tuple([t] + list(e) + list(c) + [d])
                for t, e, c, d in zip(ts, traj.states[idx], closed, dev)
            ]
    d = model.dim
    header = ["t"] + [f"euler_{i+1}" for i in range(d)] + [f"closed_{i+1}" for i in range(d)] + ["deviation"]
    writer.csv("linear_check.csv", header, rows)
    ratio = devs[h] / devs[h / 2.0] if devs[h / 2.0] > 0 else float("inf")
    summary = {"max_dev_h": devs[h], "max_dev_h2": devs[h / 2.0], "ratio": ratio, "bound_h": 10 * h}
    return summary


def run_rp_averaging(cfg: dict, writer: OutputWriter, jobs: int) -> dict:
    p = cfg["params"]
    inst = _INSTANCES[p["instance"]]()
    gs = _gain_from_cfg(cfg.get("gain"), GainSchedule(g=1.0, rho=0.7))
    T, h = float(cfg["T"]), float(cfg["h"])
    traj = qsa.integrate_qsa(inst.f, inst.probe, gs, [float(p["theta0"])], T, h)
    rp = qsa.rp_average(traj, mode=p["mode"], K=float(p["K"]))
    errors = qsa.error_series(rp, inst.theta_star)
    fit = qsa.estimate_rate(errors, (float(p["window"][0]), float(p["window"][1])))
    step = max(1, len(errors) // int(p["max_csv_rows"]))
    writer.csv("rp.csv", ["t", "error"], errors[::step])
    writer.json("ratefit.json", fit.to_json_dict())
    return {"instance": inst.name, "slope": fit.rho_hat}


_LOSSES = {
    "quadratic": lambda th: 0.5 * float(np.dot(th, th)),
    "quartic": lambda th: 0.5 * th[0] ** 2 + th[0] ** 3 / 6.0 + 0.25 * th[0] ** 4,
    "softmin": envs.softmin_loss,
}


def _sweep_worker(args):
    cfg_fields, loss_name, probe_cfg, gain_cfg, eps, T, h, theta_star = args
    cfg = qsgd.QsgdConfig(**cfg_fields, epsilon=eps)
    L = _LOSSES[loss_name]
    pr = ProbeSpec.from_config(probe_cfg)
    gs = GainSchedule.from_config(gain_cfg)
    rows = qsgd.epsilon_bias_sweep(cfg, L, pr, gs, [eps], T, h, theta_star)
    return rows[0]


def run_qsgd_experiment(cfg: dict, writer: OutputWriter, jobs: int) -> dict:
    p = cfg["params"]
    loss_name = p["loss"]
    L_base = _LOSSES[loss_name]
    dim = 2 if loss_name == "softmin" else int(p["dim"])
    theta0 = np.array(p["theta0"], dtype=float) if p.get("theta0") is not None else np.zeros(dim)
    default_probe = make_normalized_probe(dim, [0.25, math.exp(-2.0)][:dim] if dim <= 2 else [0.25 + 0.37 * i for i in range(dim)])
    pr = _probe_from_cfg(cfg.get("probe"), default_probe)
    gs = _gain_from_cfg(cfg.get("gain"), GainSchedule(g=1.0, rho=0.8))
    T, h = float(cfg["T"]), float(cfg["h"])
    box = None
    if p.get("box") is not None:
        half = float(p["box"])
        box = (-half * np.ones(dim), half * np.ones(dim))
    base_fields = {
        "variant": qsgd.QsgdVariant(p["variant"]),
        "G": np.eye(dim) * float(p["G_scale"]),
        "box": box,
        "delta": float(p["delta"]) if p.get("delta") is not None else None,
    }
    if p.get("eps_list"):
        theta_star = np.array(p["theta_star"], dtype=float)
        work = [
            (base_fields, loss_name, pr.to_config(), gs.to_config(), float(e), T, h, theta_star)
            for e in p["eps_list"]
        ]
        rows = _pmap(_sweep_worker, work, jobs)
        rows.sort(key=lambda r: r[0])
        writer.csv("sweep.csv", ["epsilon", "bias"], rows)
        return {"loss": loss_name, "sweep": {f"{e:g}": b for e, b in rows}}
    evals = {"n": 0}

    def counted(th):
        evals["n"] += 1
        return L_base(th)

    run_cfg = qsgd.QsgdConfig(**base_fields, epsilon=float(p["epsilon"]))
    traj, theta_rp = qsgd.run_qsgd(run_cfg, counted, pr, gs, theta0, T, h)
    step = max(1, len(traj) // int(p["max_csv_rows"]))
    thin = qsa.Trajectory(traj.t0, traj.h * step, traj.states[::step])
    thin.write_csv(writer.out_dir / "trajectory.csv")
    writer.names.append("trajectory.csv")
    summary = {"theta_rp": theta_rp.tolist(), "L_at_rp": float(L_base(theta_rp)), "evals": evals["n"]}
    return summary


def run_softmin(cfg: dict, writer: OutputWriter, jobs: int) -> dict:
    p = cfg["params"]
    pr = _probe_from_cfg(cfg.get("probe"), make_normalized_probe(2, [0.25, math.exp(-2.0)]))
    gs = _gain_from_cfg(cfg.get("gain"), GainSchedule(g=1.0, rho=0.9, cap=1e-3))
    T, h = float(cfg["T"]), float(cfg["h"])
    half = float(p["box"])
    run_cfg = qsgd.QsgdConfig(
        variant=qsgd.QsgdVariant(p["variant"]),
        G=np.eye(2),
        epsilon=float(p["epsilon"]),
        box=(-half * np.ones(2), half * np.ones(2)),
    )
    evals = {"n": 0}

    def counted(th):
        evals["n"] += 1
        return envs.softmin_loss(th)

    theta0 = np.array(p["theta0"], dtype=float)
    traj, theta_rp = qsgd.run_qsgd(run_cfg, counted, pr, gs, theta0, T, h)
    traj.write_csv(writer.out_dir / "trajectory.csv")
    writer.names.append("trajectory.csv")
    L_rp = float(envs.softmin_loss(theta_rp))
    L_ref = float(envs.softmin_loss(np.array([1.0, 1.0])))
    return {
        "theta_rp": theta_rp.tolist(),
        "L_at_rp": L_rp,
        "L_reference": L_ref,
        "rel_gap": abs(L_rp - L_ref) / abs(L_ref),
        "evals": evals["n"],
    }


def _lqr_problem(p: dict) -> envs.LqrProblem:
    return envs.LqrProblem(
        A=np.array(p["A"], dtype=float),
        B=np.array(p["B"], dtype=float),
        M=np.array(p["M"], dtype=float),
        R=np.array(p["R"], dtype=float),
        K=np.array(p["K"], dtype=float),
        K0=np.array(p["K0"], dtype=float),
    )


def _lqr_probe(cfg: dict, p: dict) -> ProbeSpec:
    return _probe_from_cfg(
        cfg.get("probe"),
        envs.lqr_excitation_probe(
            n_tones=int(p["n_tones"]),
            freq_lo=float(p["freq_lo"]),
            freq_hi=float(p["freq_hi"]),
            seed=int(p["probe_seed"]),
        ),
    )


def run_lqr_eval(cfg: dict, writer: OutputWriter, jobs: int) -> dict:
    p = cfg["params"]
    problem = _lqr_problem(p)
    pr = _lqr_probe(cfg, p)
    gs = _gain_from_cfg(cfg.get("gain"), GainSchedule(g=2.0, rho=0.8))
    T, h = float(cfg["T"]), float(cfg["h"])
    data = envs.simulate_lqr_features(problem, pr, T, h)
    theta_hat = envs.lqr_policy_eval(problem, pr, gs, T, h, matrix_gain=bool(p["matrix_gain"]), data=data)
    oracle = envs.q_function_coefficients(problem)
    theta_ls = data.least_squares()
    rel = np.abs(theta_hat - oracle) / np.abs(oracle)
    writer.csv(
        "theta.csv",
        ["coefficient", "estimate", "oracle", "rel_err"],
        [
            (name, theta_hat[i], oracle[i], rel[i])
            for i, name in enumerate(["x1x1", "x2x2", "x1x2", "x1u", "x2u", "uu"])
        ],
    )
    return {
        "theta_hat": theta_hat.tolist(),
        "theta_oracle": oracle.tolist(),
        "theta_lstsq": theta_ls.tolist(),
        "max_rel_err": float(rel.max()),
        "bellman_mse_hat": data.bellman_mse(theta_hat),
        "bellman_mse_oracle": data.bellman_mse(oracle),
    }


def run_lqr_pia(cfg: dict, writer: OutputWriter, jobs: int) -> dict:
    p = cfg["params"]
    problem = _lqr_problem(p)
    pr = _lqr_probe(cfg, p)
    gs = _gain_from_cfg(cfg.get("gain"), GainSchedule(g=2.0, rho=0.8))
    T, h = float(cfg["T"]), float(cfg["h"])
    ks = envs.lqr_pia(problem, int(p["rounds"]), pr, gs, T, h, matrix_gain=bool(p["matrix_gain"]), tol=float(p["tol"]))
    k_star = envs.kleinman_gain(problem.A, problem.B, problem.M, problem.R, problem.K0)
    rows = [
        (j, K[0, 0], K[0, 1], float(np.linalg.norm(K - k_star)))
        for j, K in enumerate(ks)
    ]
    writer.csv("pia.csv", ["round", "k1", "k2", "weighted_error"], rows)
    return {
        "K_final": ks[-1].tolist(),
        "K_star": k_star.tolist(),
        "gap": float(np.max(np.abs(ks[-1] - k_star))),
        "rounds": len(ks) - 1,
    }


def run_mountain_car(cfg: dict, writer: OutputWriter, jobs: int) -> dict:
    p = cfg["params"]
    thetas, theta_rp = envs.mountain_car_pg(
        N=int(p["N"]),
        alpha=float(p["alpha"]),
        epsilon=float(p["epsilon"]),
        J_max=int(p["J_max"]),
        theta0=float(p["theta0"]),
    )
    writer.csv("mountain_car.csv", ["episode", "theta"], list(enumerate(thetas)))
    summary = {"theta_rp": theta_rp}
    if p["scan"]:
        grid, costs = envs.threshold_scan(
            np.arange(-1.2, 0.001, 0.1), n_states=int(p["scan_states"]), J_max=int(p["J_max"])
        )
        writer.csv("scan.csv", ["theta", "avg_cost"], list(zip(grid, costs)))
        summary["scan_argmin"] = float(grid[int(np.argmin(costs))])
    return summary


def run_poisson_check(cfg: dict, writer: OutputWriter, jobs: int) -> dict:
    p = cfg["params"]
    omegas = [float(w) for w in p["omegas"]]
    rng = envs.Lcg64(int(p["seed"]))
    coeffs = {}
    order = int(p["max_order"])
    for n1 in range(order + 1):
        for n2 in range(order + 1):
            re = 2.0 * rng.uniform() - 1.0
            im = 2.0 * rng.uniform() - 1.0
            coeffs[(n1, n2)] = complex(re, 0.0) if n1 == n2 == 0 else 0.5 * complex(re, im)
    series = FourierSeries(coeffs)
    hat = poisson_fourier(series, omegas)
    gbar = coeffs[(0, 0)].real
    quad_h = float(p["quad_h"])
    t_range = float(p["t_range"])
    rows = []
    for _ in range(int(p["n_intervals"])):
        a = t_range * rng.uniform()
        b = t_range * rng.uniform()
        t0, t1 = min(a, b), max(a, b)
        ts = np.linspace(t0, t1, max(2, int(round((t1 - t0) / quad_h))))
        gvals = series.eval_at(omegas, ts).real - gbar
        integral = float(np.sum(0.5 * (gvals[1:] + gvals[:-1]) * np.diff(ts)))
        lhs = float(hat.eval_at(omegas, [t0])[0].real)
        rhs = integral + float(hat.eval_at(omegas, [t1])[0].real)
        rows.append((t0, t1, lhs, rhs, abs(lhs - rhs)))
    writer.csv("poisson.csv", ["t0", "t1", "lhs", "rhs", "abs_gap"], rows)
    w1 = min(omegas)
    bound_ok = all(abs(hat.coeffs[n]) <= abs(coeffs[n]) / w1 + 1e-14 for n in hat.coeffs)
    return {
        "max_gap": max(r[4] for r in rows),
        "tol": 10.0 * quad_h,
        "bound_ok": bool(bound_ok),
        "n_coeffs": len(series.coeffs),
    }


# ---------------------------------------------------------------------------
# Registry: name -> (description, runner, defaults, params schema)
# ---------------------------------------------------------------------------

_LQR_BENCHMARK = {
    "A": [[0.0, 1.0], [0.0, -0.1]],
    "B": [[0.0], [1.0]],
    "M": [[1.0, 0.0], [0.0, 1.0]],
    "R": [[10.0]],
    "K": [[-1.0, 0.0]],
    "K0": [[-1.0, -2.0]],
    "n_tones": 24,
    "freq_lo": 0.5,
    "freq_hi": 50.0,
    "probe_seed": 1,
    "matrix_gain": True,
}

EXPERIMENTS: dict = {
    "qmc": (
        "scalar quasi Monte Carlo histograms vs seeded Monte Carlo baseline",
        run_qmc,
        {"T": 100.0, "h": 1e-3,
         "params": {"gains": [1.0, 2.0], "trials": 1000, "init_spread": math.sqrt(10.0),
                    "seed": 0, "init": "quasi", "subsamples": 10}},
        {"gains": None, "trials": None, "init_spread": None, "seed": None, "init": None, "subsamples": None},
    ),
    "rates": (
        "convergence-rate fit for the scalar root-finding instance",
        run_rates,
        {"T": 1e4, "h": 1e-3,
         "params": {"instance": "rates", "theta0": 1.0, "window": [1e2, 1e4], "max_csv_rows": 20000}},
        {"instance": None, "theta0": None, "window": None, "max_csv_rows": None},
    ),
    "linear-check": (
        "constant-gain closed form vs Euler on a 2-d linear instance",
        run_linear_check,
        {"T": 50.0, "h": 1e-3,
         "params": {"A": [[0.0, 1.0], [-1.0, -2.1]], "B": [[1.0], [0.5]],
                    "theta_star": [0.3, -0.2], "theta0": [1.3, -1.2], "alpha": 0.1}},
        {"A": None, "B": None, "theta_star": None, "theta0": None, "alpha": None},
    ),
    "rp-averaging": (
        "iterate-averaging convergence rate on additive/multiplicative instances",
        run_rp_averaging,
        {"T": 1e4, "h": 1e-3,
         "params": {"instance": "additive", "theta0": 5.0, "mode": "ode", "K": 5.0,
                    "window": [1e2, 1e4], "max_csv_rows": 20000}},
        {"instance": None, "theta0": None, "mode": None, "K": None, "window": None, "max_csv_rows": None},
    ),
    "qsgd": (
        "gradient-free descent run or epsilon-bias sweep on a configurable loss",
        run_qsgd_experiment,
        {"T": 2e4, "h": 0.05,
         "params": {"loss": "quartic", "variant": "three", "dim": 1, "epsilon": 0.1,
                    "G_scale": 1.0, "theta0": None, "theta_star": [0.0], "eps_list": None,
                    "box": None, "delta": None, "max_csv_rows": 20000}},
        {"loss": None, "variant": None, "dim": None, "epsilon": None, "G_scale": None,
         "theta0": None, "theta_star": None, "eps_list": None, "box": None, "delta": None,
         "max_csv_rows": None},
    ),
    "softmin": (
        "soft-min landscape descent with annealing probe (2-d)",
        run_softmin,
        {"T": 5e4, "h": 1.0,
         "params": {"variant": "one", "epsilon": 0.15, "theta0": [-2.0, -2.0], "box": 4.0}},
        {"variant": None, "epsilon": None, "theta0": None, "box": None},
    ),
    "lqr-eval": (
        "model-free LQR policy evaluation vs the Lyapunov oracle",
        run_lqr_eval,
        {"T": 4000.0, "h": 0.01, "params": dict(_LQR_BENCHMARK)},
        {k: None for k in _LQR_BENCHMARK},
    ),
    "lqr-pia": (
        "approximate policy iteration to the optimal LQR gain",
        run_lqr_pia,
        {"T": 4000.0, "h": 0.01, "params": dict(_LQR_BENCHMARK, rounds=10, tol=1e-4)},
        {**{k: None for k in _LQR_BENCHMARK}, "rounds": None, "tol": None},
    ),
    "mountain-car": (
        "episodic policy-gradient search for the threshold policy",
        run_mountain_car,
        {"T": 0.0, "h": 1.0,
         "params": {"N": 10000, "alpha": 0.1, "epsilon": 0.05, "theta0": -0.5,
                    "J_max": 5000, "scan": True, "scan_states": 400}},
        {"N": None, "alpha": None, "epsilon": None, "theta0": None, "J_max": None,
         "scan": None, "scan_states": None},
    ),
    "poisson-check": (
        "Poisson-equation identity and coefficient bound for a random series",
        run_poisson_check,
        {"T": 0.0, "h": 1.0,
         "params": {"seed": 7, "omegas": [0.9, 2.3], "max_order": 2, "n_intervals": 10,
                    "t_range": 20.0, "quad_h": 1e-4}},
        {"seed": None, "omegas": None, "max_order": None, "n_intervals": None,
         "t_range": None, "quad_h": None},
    ),
}


def resolve_config(raw: dict, overrides: list[str]) -> dict:
    cfg = dict(raw)
    for spec in overrides:
        _apply_override(cfg, spec)
    if "experiment" not in cfg:
        raise ConfigError("missing required key 'experiment'")
    name = cfg["experiment"]
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{name}' (see `qsa-lab list`)")
    _, _, defaults, params_schema = EXPERIMENTS[name]
    schema = {
        "experiment": None,
        "out_dir": None,
        "T": None,
        "h": None,
        "probe": _PROBE_SCHEMA,
        "gain": _GAIN_SCHEMA,
        "params": params_schema,
    }
    _validate_keys(cfg, schema)
    merged = _deep_merge(defaults, cfg)
    merged["experiment"] = name
    env_out = os.environ.get("QSA_LAB_OUT")
    if env_out:
        merged["out_dir"] = env_out
    merged.setdefault("out_dir", os.path.join("out", name))
    return merged


def run(config_path: str, overrides: list[str] | None = None, jobs: int = 1) -> int:
    """Execute the named experiment; returns the process exit status."""
    try:
        with open(config_path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        print(f"config not found: {config_path}", file=sys.stderr)
        return 2
    except tomllib.TOMLDecodeError as exc:
        print(f"config parse error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = resolve_config(raw, overrides or [])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    name = cfg["experiment"]
    _, runner, _, _ = EXPERIMENTS[name]
    writer = OutputWriter(Path(cfg["out_dir"]))
    status = "ok"
    summary: dict = {}
    exit_code = 0
    try:
        summary = runner(cfg, writer, jobs)
    except DivergenceError as exc:
        status = "diverged"
        summary = {"error": str(exc), "t": exc.t}
        exit_code = 3
    writer.json("summary.json", _jsonable(summary))
    manifest = {
        "experiment": name,
        "config": _jsonable(cfg),
        "status": status,
        "outputs": {},
    }
    if status != "ok":
        manifest["partial_outputs"] = sorted(writer.names)
    for fname in sorted(writer.names):
        manifest["outputs"][fname] = _sha256(writer.out_dir / fname)
    with open(writer.out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if status == "ok":
        print(f"{name}: ok -> {writer.out_dir}")
    else:
        print(f"{name}: {status} -> {writer.out_dir}", file=sys.stderr)
    return exit_code


def list_experiments() -> list[tuple[str, str]]:
    """Registry contents as (name, description) rows."""
    return [(name, entry[0]) for name, entry in EXPERIMENTS.items()]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qsa-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a TOML config")
    p_run.add_argument("config", help="path to the experiment config")
    p_run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (dotted path, TOML literal value)")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel workers for independent trials")
    sub.add_parser("list", help="list available experiments")
    args = parser.parse_args(argv)
    if args.command == "list":
        for name, desc in list_experiments():
            print(f"{name:14s} {desc}")
        return 0
    return run(args.config, args.override, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
