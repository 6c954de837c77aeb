"""Command-line experiment runner.

Each command writes delimited data plus a JSON report into the output
directory, renders matplotlib figures alongside them (disable with
--no-figures), and finalises a checksummed manifest.  Reruns with the
same config and seed are byte-identical.

Exit codes: 0 success, 1 validation failure, 2 numerical failure (the
failing check is named on stderr), 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import acceptance, extensions, gaussian, models
from .core import BAProblem, free_energy
from .errors import NumericalError
from .flow import IntegratorConfig, ba_fixed_point, integrate_flow, verify_dissipation
from .reporting import (
    OutputWriter,
    render_decay_figure,
    render_line_figure,
    render_spectrum_figure,
)
from .simplex import ProbVec
from .spectral import gram_kernel, jacobian_spectrum, tangent_spectrum

LN2 = float(np.log(2.0))


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; we map to 1
        raise _CliError(message)


def _nats(value: float, units: str) -> float:
    return value / LN2 if units == "bits" else value


def _build_problem(args) -> tuple[BAProblem, dict]:
    if args.model == "two-point":
        spec = models.TwoPointSpec(args.alpha, args.beta_d)
        return models.two_point_problem(spec), {"model": "two-point",
                                                "alpha": args.alpha, "beta_d": args.beta_d}
    if args.model == "three-cluster":
        weights = tuple(args.weights)
        spec = models.ThreeClusterSpec(args.m, args.delta, args.beta, weights)
        return models.three_cluster_problem(spec), {
            "model": "three-cluster", "m": args.m, "delta": args.delta,
            "beta": args.beta, "weights": list(weights),
        }
    if args.model == "circulant":
        rng = np.random.default_rng(args.seed)
        prob = models.random_circulant_problem(rng, args.n, beta=args.beta)
        return prob, {"model": "circulant", "n": args.n, "beta": args.beta, "seed": args.seed}
    if args.model == "random":
        rng = np.random.default_rng(args.seed)
        prob = models.random_problem(rng, args.n, args.n, beta=args.beta)
        return prob, {"model": "random", "n": args.n, "beta": args.beta, "seed": args.seed}
    raise _CliError(f"unknown model {args.model!r}")


def _initial_state(prob: BAProblem, args) -> ProbVec:
    n = prob.n_output
    if args.q0 == "uniform":
        return ProbVec(np.full(n, 1.0 / n))
    if args.q0 == "perturbed":
        rng = np.random.default_rng(args.seed)
        raw = np.abs(1.0 + 0.05 * rng.standard_normal(n))
        return ProbVec.normalize(raw)
    if args.q0 == "corner":
        raw = np.full(n, 0.02 / (n - 1))
        raw[0] = 0.98
        return ProbVec.normalize(raw)
    raise _CliError(f"unknown q0 mode {args.q0!r}")


def _add_model_flags(p: _Parser):
    p.add_argument("--model", default="two-point",
                   choices=["two-point", "three-cluster", "circulant", "random"])
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta-d", type=float, default=2.0, dest="beta_d")
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--delta", type=float, default=3.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--weights", type=float, nargs=3, default=[0.5, 0.3, 0.2])
    p.add_argument("--n", type=int, default=4)


def _add_integrator_flags(p: _Parser):
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--t-max", type=float, default=20.0, dest="t_max")
    p.add_argument("--method", default="rk4", choices=["rk4", "euler"])
    p.add_argument("--sample-every", type=int, default=1, dest="sample_every")
    p.add_argument("--q0", default="perturbed", choices=["uniform", "perturbed", "corner"])


def _writer(args, command: str) -> OutputWriter:
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func", "config", "output_dir")}
    return OutputWriter(args.output_dir, command, config,
                        figures=args.figures, data_format=args.format)


def _trajectory_rows(traj, units):
    n = traj.states.shape[1]
    header = ["t"] + [f"q_{i}" for i in range(n)] + [
        "free_energy", "dissipation", "residual_l1", "dist_l1"]
    rows = []
    for i in range(traj.n_samples):
        dist = "" if traj.dist_to_ref_l1 is None else float(traj.dist_to_ref_l1[i])
        rows.append([float(traj.times[i]), *map(float, traj.states[i]),
                     _nats(float(traj.free_energy[i]), units),
                     float(traj.dissipation[i]), float(traj.residual_l1[i]), dist])
    return header, rows


def cmd_flow(args) -> int:
    prob, model_info = _build_problem(args)
    q0 = _initial_state(prob, args)
    ref = ba_fixed_point(prob, q0, tol=1e-12).q
    cfg = IntegratorConfig(dt=args.dt, t_max=args.t_max, method=args.method,
                           sample_every=args.sample_every)
    traj = integrate_flow(prob, q0, cfg, ref=ref)
    writer = _writer(args, "flow")
    header, rows = _trajectory_rows(traj, args.units)
    writer.write_csv("trajectory.csv", header, rows)
    writer.write_json("flow_report.json", {
        "model": model_info,
        "final_residual_l1": float(traj.residual_l1[-1]),
        "final_free_energy": _nats(float(traj.free_energy[-1]), args.units),
        "units": args.units,
    })
    render_line_figure(writer, "flow_diagnostics.png", traj.times,
                       {"dissipation": traj.dissipation,
                        "residual_l1": traj.residual_l1},
                       "t", "value", "flow diagnostics", logy=True)
    render_decay_figure(writer, "flow_distance.png", traj.times,
                        traj.dist_to_ref_l1, None, "distance to fixed point")
    writer.finalize()
    return 0


def cmd_fixed_point(args) -> int:
    prob, model_info = _build_problem(args)
    q0 = _initial_state(prob, args)
    result = ba_fixed_point(prob, q0, tol=args.tol)
    if not result.converged:
        raise NumericalError(
            f"fixed-point: not converged after {result.iterations} iterations "
            f"(residual {result.residual:.3e})")
    writer = _writer(args, "fixed-point")
    writer.write_json("fixed_point.json", {
        "model": model_info,
        "q_star": result.q.values.tolist(),
        "dual_residual": result.residual,
        "iterations": result.iterations,
        "free_energy": _nats(free_energy(prob, result.q), args.units),
        "units": args.units,
    })
    writer.write_csv("fixed_point.csv", ["index", "q_star"],
                     list(enumerate(map(float, result.q.values))))
    fig_x = np.arange(result.q.dim)
    render_line_figure(writer, "fixed_point.png", fig_x,
                       {"q*": result.q.values}, "output symbol", "mass",
                       "fixed point")
    writer.finalize()
    return 0


def cmd_dissipation_check(args) -> int:
    prob, model_info = _build_problem(args)
    q0 = _initial_state(prob, args)
    errors = {}
    reports = {}
    for dt in (args.dt, args.dt / 2.0):
        cfg = IntegratorConfig(dt=dt, t_max=args.t_max, sample_every=1)
        traj = integrate_flow(prob, q0, cfg)
        reports[dt] = verify_dissipation(prob, traj)
        errors[dt] = reports[dt].max_abs_err
    ratio = errors[args.dt] / errors[args.dt / 2.0]
    writer = _writer(args, "dissipation-check")
    base = reports[args.dt]
    writer.write_csv("dissipation_error.csv", ["t", "abs_error"],
                     list(zip(map(float, base.times), map(float, base.per_sample_err))))
    writer.write_json("dissipation_report.json", {
        "model": model_info,
        "max_abs_err": errors[args.dt],
        "max_abs_err_half_dt": errors[args.dt / 2.0],
        "halving_ratio": ratio,
        "dt": args.dt,
    })
    render_line_figure(writer, "dissipation_error.png", base.times,
                       {"|dF/dt + D|": base.per_sample_err}, "t", "abs error",
                       "dissipation identity check", logy=True)
    writer.finalize()
    if errors[args.dt] > 1e-5:
        raise NumericalError(
            f"dissipation-check: max error {errors[args.dt]:.3e} above 1e-5")
    return 0


def cmd_spectrum(args) -> int:
    prob, model_info = _build_problem(args)
    q0 = _initial_state(prob, args)
    result = ba_fixed_point(prob, q0, tol=1e-12)
    if not result.converged:
        raise NumericalError("spectrum: fixed point not certified")
    gram = gram_kernel(prob, result.q)
    spec_gram = tangent_spectrum(gram)
    spec_jac = jacobian_spectrum(prob, result.q)
    writer = _writer(args, "spectrum")
    writer.write_csv(
        "spectrum.csv", ["index", "gram_eigenvalue", "relaxation_rate"],
        [(i, float(a), float(b)) for i, (a, b) in enumerate(
            zip(spec_gram.eigenvalues, spec_jac.eigenvalues))],
    )
    writer.write_json("spectrum.json", {
        "model": model_info,
        "gram": json.loads(spec_gram.to_json()),
        "relaxation": json.loads(spec_jac.to_json()),
    })
    n = gram.dim
    writer.write_csv("gram_matrix.csv", ["y", "y_prime", "value"],
                     [(i, j, float(gram.matrix[i, j]))
                      for i in range(n) for j in range(n)])
    render_spectrum_figure(writer, "spectrum.png", {
        "gram (lambda*)": np.maximum(spec_gram.eigenvalues, 1e-16),
        "relaxation rates": np.maximum(spec_jac.eigenvalues, 1e-16),
    }, "tangent spectra at the fixed point")
    writer.finalize()
    return 0


def cmd_fr_compare(args) -> int:
    from .spectral import fr_linearization_check

    rng = np.random.default_rng(args.seed)
    gen = np.concatenate([[0.0], rng.uniform(0.4, 1.4, args.n - 1)])
    rows = []
    worst = 0.0
    for beta in args.betas:
        cases = [
            ("two-point-symmetric",
             BAProblem(np.array([0.5, 0.5]), np.array([[0.0, 2.0], [2.0, 0.0]]), beta)),
            ("circulant", models.circulant_problem(gen, beta=beta)),
        ]
        for name, prob in cases:
            n = prob.n_output
            q_star = ba_fixed_point(prob, ProbVec(np.full(n, 1.0 / n)), tol=1e-13).q
            report = fr_linearization_check(prob, q_star)
            rows.append((name, float(beta), report.max_abs_err, 1.0 / beta))
            worst = max(worst, report.max_abs_err)
    writer = _writer(args, "fr-compare")
    writer.write_csv("fr_compare.csv",
                     ["problem", "beta", "max_abs_err", "beta_inv"], rows)
    writer.write_json("fr_compare.json", {"max_abs_err": worst, "betas": list(args.betas)})
    betas = sorted({r[1] for r in rows})
    render_line_figure(
        writer, "fr_compare.png", np.array(betas),
        {"max error": np.array([max(r[2] for r in rows if r[1] == b) for b in betas]),
         "1/beta (difference magnitude)": 1.0 / np.array(betas)},
        "beta", "value", "FR vs flow linearisation difference", logy=True)
    writer.finalize()
    if worst > 1e-5:
        raise NumericalError(f"fr-compare: max |diff - I/beta| = {worst:.3e} above 1e-5")
    return 0


def cmd_gaussian(args) -> int:
    gp = gaussian.GaussianParams(sigma2=args.sigma2, beta=args.beta)
    writer = _writer(args, f"gaussian-{args.sub}")
    if args.sub == "phase":
        s_grid = np.linspace(0.0, args.s_max, args.points)
        betas = args.betas or [args.beta]
        rows = []
        for beta in betas:
            gpb = gaussian.GaussianParams(sigma2=args.sigma2, beta=beta)
            for s in s_grid:
                rows.append((float(beta), float(s),
                             gaussian.variance_field(float(s), gpb)))
        writer.write_csv("phase_portrait.csv", ["beta", "s", "field"], rows)
        series = {}
        for beta in betas:
            gpb = gaussian.GaussianParams(sigma2=args.sigma2, beta=beta)
            series[f"beta={beta}"] = np.array(
                [gaussian.variance_field(float(s), gpb) for s in s_grid])
        render_line_figure(writer, "phase_portrait.png", s_grid, series,
                           "s", "ds/dtau", "variance phase portrait")
        writer.write_json("phase_report.json", {
            "s_star": {str(b): gaussian.GaussianParams(args.sigma2, b).s_star
                       for b in betas}})
    elif args.sub == "spectrum":
        ladder = gaussian.hermite_spectrum(gp, n_max=args.n_modes)
        writer.write_csv("hermite_spectrum.csv",
                         ["n", "mode_rate_alpha_n", "update_eigenvalue"],
                         [(i + 1, float(r), float(u)) for i, (r, u) in enumerate(
                             zip(ladder.mode_rates, ladder.update_eigenvalues))])
        writer.write_json("hermite_spectrum.json", {
            "alpha": ladder.alpha,
            "mode_rates": ladder.mode_rates.tolist(),
            "update_eigenvalues": ladder.update_eigenvalues.tolist(),
            "lambda_star_formula": gaussian.gaussian_gap(gp).lambda_star,
            "tau_relax_formula": gaussian.gaussian_gap(gp).tau_relax,
        })
        render_spectrum_figure(writer, "hermite_spectrum.png",
                               {"alpha^n": ladder.mode_rates}, "Hermite mode ladder")
    elif args.sub == "grid-check":
        prob = gaussian.discretize_gaussian(gp, n_points=args.points_grid)
        axis = gaussian.grid_axis(gp, 6.0, args.points_grid)
        q_star = gaussian.solve_grid_fixed_point(prob)
        moment = float(np.dot(q_star.values, axis ** 2))
        evals = gaussian.grid_relaxation_eigenvalues(prob, q_star, axis, n_modes=4)
        cfg = gaussian.grid_integrator_config(dt=0.02, t_max=10.0, sample_every=5)
        rows = []
        sup_dev = 0.0
        for shape in ("gaussian", "bimodal", "uniform"):
            q0 = gaussian.grid_density_with_moment(axis, shape, args.s0)
            traj = integrate_flow(prob, q0, cfg)
            series = gaussian.second_moment_series(traj, axis)
            _, ode = gaussian.integrate_variance_ode(gp, float(series[0]),
                                                     dt=cfg.dt, t_max=cfg.t_max)
            ode_s = ode[::cfg.sample_every][:series.size]
            sup_dev = max(sup_dev, float(np.abs(series - ode_s).max()))
            rows += [(shape, float(t), float(s), float(o))
                     for t, s, o in zip(traj.times, series, ode_s)]
        writer.write_csv("grid_moments.csv", ["shape", "t", "grid_moment", "ode_moment"], rows)
        writer.write_json("grid_check.json", {
            "fixed_point_moment": moment,
            "s_star": gp.s_star,
            "fd_relaxation_eigenvalues": evals.tolist(),
            "max_moment_deviation": sup_dev,
        })
        shapes = {}
        times = None
        for shape in ("gaussian", "bimodal", "uniform"):
            data = [(t, s) for sh, t, s, _ in rows if sh == shape]
            times = np.array([d[0] for d in data])
            shapes[shape] = np.array([d[1] for d in data])
        render_line_figure(writer, "grid_moments.png", times, shapes,
                           "t", "second moment", "shape independence of the moment flow")
        failing = []
        if abs(moment - gp.s_star) > 1e-3:
            failing.append(f"fixed-point moment {moment:.6f} vs s* = {gp.s_star}")
        if sup_dev > 1e-3:
            failing.append(
                f"moment trajectories deviate from the scalar ODE by {sup_dev:.2e} "
                f"(documented defect, see README)")
        if failing:
            writer.finalize()
            raise NumericalError("gaussian grid-check: " + "; ".join(failing))
    elif args.sub == "moment-bound":
        consts = gaussian.moment_bound_constants(args.sigma2, 1.0, args.beta, v0=args.v0)
        prob = gaussian.discretize_gaussian(gp, n_points=args.points_grid)
        axis = gaussian.grid_axis(gp, 6.0, args.points_grid)
        q0 = gaussian.grid_gaussian_density(axis, args.v0)
        traj = integrate_flow(prob, q0, gaussian.grid_integrator_config(dt=0.02, t_max=10.0, sample_every=5))
        series = gaussian.second_moment_series(traj, axis)
        writer.write_csv("moment_series.csv", ["t", "trace_moment"],
                         list(zip(map(float, traj.times), map(float, series))))
        writer.write_json("moment_bound.json", {
            "C1": consts.c1, "C2": consts.c2, "c": consts.c,
            "bound": consts.bound, "sup_measured": float(series.max()),
        })
        render_line_figure(writer, "moment_bound.png", traj.times,
                           {"tr Sigma(t)": series,
                            "bound": np.full_like(series, consts.bound)},
                           "t", "second moment", "uniform moment bound")
        if series.max() > consts.bound + 1e-3:
            writer.finalize()
            raise NumericalError("moment bound violated along the grid trajectory")
    writer.finalize()
    return 0


def cmd_model(args) -> int:
    writer = _writer(args, f"model-{args.sub}")
    if args.sub == "two-point":
        alphas = np.linspace(args.alpha_min, args.alpha_max, args.grid)
        beta_ds = np.linspace(args.beta_d_min, args.beta_d_max, args.grid)

        def gap_row(alpha):
            return acceptance.two_point_gap_grid([alpha], beta_ds)

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            chunks = list(pool.map(gap_row, alphas))
        rows = [row for chunk in chunks for row in chunk]
        writer.write_csv("gap_surface.csv",
                         ["alpha", "beta_d", "closed_form", "pipeline_gap"], rows)
        dev = max(abs(r[2] - r[3]) for r in rows)
        writer.write_json("two_point.json", {
            "max_formula_pipeline_dev": dev,
            "note": "closed form at the true fixed point is alpha-independent; "
                    "the Euclidean pipeline gap is not (see README)",
        })
        series = {}
        for alpha in (alphas[0], alphas[len(alphas) // 2], alphas[-1]):
            vals = [r[3] for r in rows if abs(r[0] - alpha) < 1e-12]
            series[f"alpha={alpha:.2f}"] = np.array(vals)
        series["closed form"] = np.array([r[2] for r in rows if r[0] == rows[0][0]])
        render_line_figure(writer, "gap_slices.png", beta_ds, series,
                           "beta*d", "gap", "two-point gap slices")
    elif args.sub == "three-cluster":
        spec = models.ThreeClusterSpec(args.m, args.delta, args.beta, tuple(args.weights))
        prob = models.three_cluster_problem(spec)
        n = prob.n_output
        res = ba_fixed_point(prob, ProbVec(np.full(n, 1.0 / n)), tol=1e-12)
        report = models.three_cluster_reduced(spec, res.q)
        writer.write_csv("reduced_gram.csv", ["k", "l", "value"],
                         [(k, l, float(report.reduced_gram[k, l]))
                          for k in range(3) for l in range(3)])
        writer.write_json("three_cluster.json", {
            "masses": report.masses.tolist(),
            "reduced_gap_mass": report.reduced_gap_mass,
            "reduced_gap_perentry": report.reduced_gap_perentry,
            "zero_modes": report.zero_modes,
            "expected_zero_modes": 3 * (spec.m - 1),
        })
        spec_full = tangent_spectrum(gram_kernel(prob, res.q))
        render_spectrum_figure(writer, "three_cluster_spectrum.png",
                               {"full tangent spectrum":
                                np.maximum(spec_full.eigenvalues, 1e-16)},
                               "three-cluster Gram spectrum")
    elif args.sub == "two-scale":
        spec = models.ThreeClusterSpec(args.m, args.delta, args.beta, tuple(args.weights))
        result = models.two_scale_experiment(
            spec, cfg=IntegratorConfig(dt=args.dt, t_max=args.t_max), seed=args.seed)
        traj = result.trajectory
        bound_line = result.trajectory.dist_to_ref_l1[0] * np.exp(
            -result.bound_rate * traj.times)
        writer.write_csv("two_scale.csv",
                         ["t", "dist_l1", "residual_l1", "bound_line"],
                         list(zip(map(float, traj.times),
                                  map(float, traj.dist_to_ref_l1),
                                  map(float, traj.residual_l1),
                                  map(float, bound_line))))
        writer.write_json("two_scale.json", {
            "fitted_rate": None if result.fitted is None else result.fitted.rate,
            "fit_r_squared": None if result.fitted is None else result.fitted.r_squared,
            "t_plateau_end": result.t_plateau_end,
            "bound_rate_quarter_gap": result.bound_rate,
            "fd_min_rate": result.fd_min_rate,
            "reduced_gap_mass": result.reduced.reduced_gap_mass,
            "reduced_gap_perentry": result.reduced.reduced_gap_perentry,
            "reference_gap": 0.08,
            "degenerate": result.degenerate,
        })
        render_decay_figure(writer, "two_scale.png", traj.times,
                            traj.dist_to_ref_l1, bound_line, "two-scale experiment")
    writer.finalize()
    return 0


def cmd_mimo(args) -> int:
    gains = np.asarray(args.gains, dtype=float)
    powers_grid = np.linspace(args.p_min, args.p_max, args.points)

    def solve(total):
        spec = extensions.MimoSpec(gains, float(total), args.beta)
        alloc = extensions.water_filling(spec)
        report = extensions.mimo_direction_gaps(spec, alloc)
        return alloc, report

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        solved = list(pool.map(solve, powers_grid))
    writer = _writer(args, "mimo")
    alloc_rows, gap_rows = [], []
    for total, (alloc, report) in zip(powers_grid, solved):
        for i, value in enumerate(alloc):
            alloc_rows.append((float(total), i, float(value)))
        active_idx = np.nonzero(report.active)[0]
        for j, i in enumerate(active_idx):
            gap_rows.append((float(total), int(i),
                             float(report.per_direction[j]),
                             float(report.per_direction_variance_form[j])))
    writer.write_csv("allocation.csv", ["total_power", "channel", "power"], alloc_rows)
    writer.write_csv("direction_gaps.csv",
                     ["total_power", "channel", "gap", "gap_variance_form"], gap_rows)
    final_spec = extensions.MimoSpec(gains, float(powers_grid[-1]), args.beta)
    final_alloc = extensions.water_filling(final_spec)
    final = extensions.mimo_direction_gaps(final_spec, final_alloc)
    writer.write_json("mimo.json", {
        "gains": gains.tolist(),
        "system_gap_at_pmax": final.system_gap,
        "stiffness_ratio_at_pmax": final.stiffness_ratio,
    })
    series = {f"channel {i}": np.array([row[2] for row in alloc_rows if row[1] == i])
              for i in range(gains.size)}
    render_line_figure(writer, "allocation.png", powers_grid, series,
                       "total power", "allocated power", "water-filling allocation")
    sys_gap = np.array([rep.system_gap for _, rep in solved])
    render_line_figure(writer, "system_gap.png", powers_grid,
                       {"system gap": sys_gap}, "total power", "gap",
                       "per-direction bottleneck", logy=True)
    writer.finalize()
    return 0


def cmd_wz(args) -> int:
    rhos = np.asarray(args.rhos, dtype=float)
    writer = _writer(args, "wz")
    rows = []
    for rho in rhos:
        spec = extensions.WynerZivSpec(args.sigma2, float(rho), args.beta)
        for s in np.linspace(0.0, 0.9 * args.sigma2, args.points):
            rows.append((float(rho), float(s),
                         extensions.wz_effective_beta(spec, float(s)) / args.beta))
    writer.write_csv("effective_beta.csv", ["rho", "s", "beta_eff_over_beta"], rows)
    gap_rows = [(float(r), _nats(extensions.wz_rate_gap(float(r)), args.units))
                for r in rhos]
    writer.write_csv("rate_gap.csv", ["rho", "rate_gap"], gap_rows)
    phase_rows = []
    fixed_points = {}
    for rho in rhos:
        spec = extensions.WynerZivSpec(args.sigma2, float(rho), args.beta)
        taus, series = extensions.wz_variance_ode(spec, s0=args.s0, t_max=30.0)
        fixed_points[f"{rho}"] = float(series[-1])
        phase_rows += [(float(rho), float(t), float(s))
                       for t, s in zip(taus[::20], series[::20])]
    writer.write_csv("wz_variance.csv", ["rho", "tau", "s"], phase_rows)
    writer.write_json("wz.json", {
        "interpreted_ode": True,
        "fixed_points_by_rho": fixed_points,
        "units": args.units,
    })
    render_line_figure(writer, "rate_gap.png", rhos,
                       {"rate gap": np.array([g for _, g in gap_rows])},
                       "rho", f"rate gap ({args.units})", "side-information rate gap")
    series = {}
    for rho in rhos:
        data = [(t, s) for r, t, s in phase_rows if r == float(rho)]
        series[f"rho={rho}"] = np.array([s for _, s in data])
    times = np.array(sorted({t for _, t, _ in phase_rows}))
    render_line_figure(writer, "wz_variance.png", times, series,
                       "tau", "s", "WZ variance flow (interpreted ODE)")
    writer.finalize()
    return 0


def cmd_verify_all(args) -> int:
    if args.criterion is not None:
        results = [acceptance.run_criterion(args.criterion, seed=args.seed)]
    else:
        results = acceptance.run_all(seed=args.seed)
    writer = _writer(args, "verify-all")
    payload = []
    for res in results:
        print(res.line())
        for failure in res.failures:
            print(f"       - {failure}")
        payload.append({
            "number": res.number, "name": res.name, "passed": res.passed,
            "failures": res.failures, "details": res.details,
        })
    writer.write_json("acceptance.json", {"results": payload, "seed": args.seed})
    writer.write_csv("acceptance.csv", ["number", "name", "passed"],
                     [(r.number, r.name, int(r.passed)) for r in results])
    writer.finalize()
    failed = [r for r in results if not r.passed]
    if failed:
        expected = [r.number for r in failed if r.number in acceptance.EXPECTED_DEFECTS]
        unexpected = [r.number for r in failed if r.number not in acceptance.EXPECTED_DEFECTS]
        print(f"failing criteria: {[r.number for r in failed]}", file=sys.stderr)
        if expected:
            print(f"  documented defects (see README): {expected}", file=sys.stderr)
        if unexpected:
            print(f"  UNEXPECTED failures: {unexpected}", file=sys.stderr)
        return 2
    return 0


def _add_global_flags(parser, suppress: bool):
    # global flags are accepted both before and after the subcommand; the
    # subparser copies use SUPPRESS defaults so they only override when given
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--output-dir", default=default(None),
                        help="defaults to $BAFLOW_OUTPUT_DIR or ./baflow_out")
    parser.add_argument("--seed", type=int, default=default(0))
    parser.add_argument("--format", default=default("csv"), choices=["csv", "json"],
                        help="primary data format (JSON reports always written)")
    parser.add_argument("--units", default=default("nats"), choices=["nats", "bits"])
    parser.add_argument("--config", default=default(None),
                        help="JSON file with flag defaults")
    parser.add_argument("--jobs", type=int, default=default(1))
    parser.add_argument("--figures", dest="figures", action="store_true",
                        default=default(True))
    parser.add_argument("--no-figures", dest="figures", action="store_false",
                        default=argparse.SUPPRESS)


def build_parser() -> _Parser:
    parser = _Parser(prog="baflow", description=__doc__)
    _add_global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _add_global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("flow", parents=[common], help="integrate the flow and export diagnostics")
    _add_model_flags(p)
    _add_integrator_flags(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("fixed-point", parents=[common], help="solve the fixed point by the discrete iteration")
    _add_model_flags(p)
    p.add_argument("--q0", default="uniform", choices=["uniform", "perturbed", "corner"])
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_fixed_point)

    p = sub.add_parser("dissipation-check", parents=[common], help="verify dF/dt = -D along a trajectory")
    _add_model_flags(p)
    p.add_argument("--q0", default="corner", choices=["uniform", "perturbed", "corner"])
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-max", type=float, default=0.5, dest="t_max")
    p.set_defaults(func=cmd_dissipation_check)

    p = sub.add_parser("spectrum", parents=[common], help="Gram and relaxation spectra at the fixed point")
    _add_model_flags(p)
    p.add_argument("--q0", default="uniform", choices=["uniform", "perturbed", "corner"])
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("fr-compare", parents=[common], help="Fisher-Rao gradient-flow comparison suite")
    p.add_argument("--betas", type=float, nargs="+", default=[1.0, 10.0, 100.0])
    p.add_argument("--n", type=int, default=4)
    p.set_defaults(func=cmd_fr_compare)

    p = sub.add_parser("gaussian", parents=[common], help="Gaussian reduction suite")
    p.add_argument("sub", choices=["phase", "spectrum", "grid-check", "moment-bound"])
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--betas", type=float, nargs="*", default=None)
    p.add_argument("--s-max", type=float, default=2.0, dest="s_max")
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--points-grid", type=int, default=201, dest="points_grid")
    p.add_argument("--n", "--n-modes", type=int, default=4, dest="n_modes")
    p.add_argument("--s0", type=float, default=1.5)
    p.add_argument("--v0", type=float, default=1.0)
    p.set_defaults(func=cmd_gaussian)

    p = sub.add_parser("model", parents=[common], help="exactly solvable model suites")
    p.add_argument("sub", choices=["two-point", "three-cluster", "two-scale"])
    p.add_argument("--alpha-min", type=float, default=0.32, dest="alpha_min")
    p.add_argument("--alpha-max", type=float, default=0.68, dest="alpha_max")
    p.add_argument("--beta-d-min", type=float, default=1.0, dest="beta_d_min")
    p.add_argument("--beta-d-max", type=float, default=4.0, dest="beta_d_max")
    p.add_argument("--grid", type=int, default=10)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--delta", type=float, default=3.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--weights", type=float, nargs=3, default=[0.5, 0.3, 0.2])
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--t-max", type=float, default=40.0, dest="t_max")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("mimo", parents=[common], help="water-filling allocation and direction gaps")
    p.add_argument("--gains", type=float, nargs="+", default=[2.0, 1.0, 0.25, 0.1])
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--p-min", type=float, default=0.1, dest="p_min")
    p.add_argument("--p-max", type=float, default=6.0, dest="p_max")
    p.add_argument("--points", type=int, default=40)
    p.set_defaults(func=cmd_mimo)

    p = sub.add_parser("wz", parents=[common], help="Wyner-Ziv effective temperature suite")
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--rhos", type=float, nargs="+", default=[0.0, 0.3, 0.6])
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--s0", type=float, default=1.0)
    p.set_defaults(func=cmd_wz)

    p = sub.add_parser("verify-all", parents=[common], help="run the acceptance suite")
    p.add_argument("--criterion", type=int, default=None, choices=sorted(acceptance.CRITERIA))
    p.set_defaults(func=cmd_verify_all)

    return parser


def _apply_config(args, parser: _Parser, argv) -> None:
    if not args.config:
        return
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise _CliError(f"cannot read config file: {exc}") from None
    if not isinstance(config, dict):
        raise _CliError("config file must hold a JSON object")
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token.split("=")[0].lstrip("-").replace("-", "_"))
    for key, value in config.items():
        attr = key.replace("-", "_")
        if attr in explicit or not hasattr(args, attr):
            continue
        setattr(args, attr, value)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args, parser, argv)
        if args.output_dir is None:
            args.output_dir = os.environ.get("BAFLOW_OUTPUT_DIR", "baflow_out")
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
