"""Command-line interface: configuration-driven runs and reports.

Subcommands: analyze, rates, asymptotics, capacity, testfn, evolve, verify.
Exit codes: 0 success, 2 configuration error, 3 numerical failure (a failed
verification threshold counts as a numerical failure).
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, asymptotics, elliptic, evolution, rates
from .config import load_config
from .errors import ConfigError, MetawellError
from .landscape import CriticalKind, analyze as analyze_landscape
from .reporting import write_csv, write_json
from .svgplot import heatmap, line_plot


def _grid_label(grid):
    return "x".join(str(n) for n in grid.shape)


def _map_ordered(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class Runner:
    """Shared state for one CLI invocation."""

    def __init__(self, cfg, out_dir, threads=1, plot=True):
        self.cfg = cfg
        self.out = out_dir
        self.threads = threads
        self.plot = plot
        self._decompositions = {}

    def decomposition(self, eta):
        key = eta
        if key not in self._decompositions:
            self._decompositions[key] = analyze_landscape(
                self.cfg.potential, self.cfg.grid, eta=eta,
                seed_spacing=self.cfg.seed_spacing,
            )
        return self._decompositions[key]

    def meta(self):
        return {
            "version": __version__,
            "config_hash": self.cfg.config_hash,
            "grid": _grid_label(self.cfg.grid),
        }

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    # ------------------------------------------------------------------
    def run_analyze(self):
        decomp = self.decomposition(self.cfg.eta)
        points = []
        for p in decomp.minima + decomp.saddles + decomp.excluded_saddles:
            points.append({
                "location": p.location,
                "kind": p.kind.value,
                "value": p.value,
                "eigenvalues": p.eigenvalues,
                "grad_norm": p.grad_norm,
            })
        payload = {
            **self.meta(),
            "K": decomp.K,
            "H": decomp.H,
            "h": decomp.h,
            "eta": decomp.eta,
            "valley_measures": decomp.measures,
            "adjacency": decomp.adjacency().astype(int),
            "saddle_partition": {
                f"{i + 1}-{j + 1}": [s.location for s in saddles]
                for (i, j), saddles in sorted(decomp.saddle_partition.items())
            },
            "critical_points": points,
        }
        write_json(self.path("analyze", "landscape.json"), payload)
        if self.plot:
            grid = decomp.grid
            if grid.ndim == 1:
                x = grid.axis_centers(0)
                line_plot(
                    self.path("analyze", "potential.svg"), x,
                    {
                        "Phi": decomp.phi,
                        "H": np.full(grid.shape[0], decomp.H),
                        "H-eta": np.full(grid.shape[0], decomp.H - decomp.eta),
                    },
                    title="potential and barrier levels", xlabel="xi",
                    ylabel="Phi",
                )
            else:
                heatmap(
                    self.path("analyze", "potential.svg"), decomp.phi.T,
                    (grid.lo[0], grid.hi[0], grid.lo[1], grid.hi[1]),
                    title="potential", xlabel="xi1", ylabel="xi2",
                )
        return decomp

    # ------------------------------------------------------------------
    def run_rates(self):
        decomp = self.decomposition(self.cfg.eta)
        a = self.cfg.scenario.a
        chain = rates.build_chain(decomp, a=a if not callable(a) else 1.0)
        payload = {
            **self.meta(),
            "K": chain.K,
            "kappa": chain.kappa,
            "mu_i": chain.mu_i,
            "mu": chain.mu,
            "mu_hat": chain.mu_hat,
            "r": chain.r,
            "M": chain.M,
            "generator_eigenvalues": rates.generator_eigenvalues(chain),
            "a_i": chain.a_i,
        }
        write_json(self.path("rates", "rates.json"), payload)
        return chain

    # ------------------------------------------------------------------
    def run_asymptotics(self):
        stage = self.cfg.stage("asymptotics")
        decomp = self.decomposition(self.cfg.stage_eta("asymptotics"))
        epsilons = self.cfg.stage_epsilons("asymptotics")
        report = asymptotics.laplace_check(decomp, epsilons)
        boundary_min = float(np.min(decomp.phi[decomp.grid.boundary_mask()]))
        level = stage.tail_level if stage.tail_level is not None else \
            0.5 * (boundary_min - decomp.H)
        region = decomp.phi >= decomp.H + level
        tails = [asymptotics.tail_mass(decomp, eps, region) for eps in epsilons]

        header = (["epsilon", "grid", "Z", "rho_Z"]
                  + [f"rho_V{i + 1}" for i in range(decomp.K)]
                  + ["rho_Delta", "tail_mass"])
        rows = []
        for row, tail in zip(report.rows, tails):
            rows.append([row.epsilon, _grid_label(decomp.grid), row.Z, row.rho_Z]
                        + list(row.rho_V) + [row.rho_delta, tail.value])
        write_csv(self.path("asymptotics", "laplace.csv"), header, rows)
        payload = {
            **self.meta(),
            "epsilons": epsilons,
            "eta": decomp.eta,
            "tail_level": level,
            "rho_Z_decreasing": report.rho_Z_decreasing,
            "rho_V_decreasing": report.rho_V_decreasing,
            "rho_delta_decreasing": report.rho_delta_decreasing,
            "converged": report.converged,
        }
        write_json(self.path("asymptotics", "trends.json"), payload)
        if self.plot:
            eps_arr = np.asarray(epsilons)
            line_plot(
                self.path("asymptotics", "ratios.svg"), eps_arr,
                {
                    "|rho_Z-1|": np.abs([r.rho_Z - 1 for r in report.rows]),
                    "|rho_V1-1|": np.abs([r.rho_V[0] - 1 for r in report.rows]),
                    "rho_Delta": [r.rho_delta for r in report.rows],
                },
                title="Laplace ratios", xlabel="epsilon", ylabel="log10",
                logy=True,
            )
        return report

    # ------------------------------------------------------------------
    def run_capacity(self):
        stage = self.cfg.stage("capacity")
        decomp = self.decomposition(self.cfg.stage_eta("capacity"))
        chain = rates.build_chain(decomp)
        b = np.asarray(stage.b if stage.b is not None
                       else _default_balance_vector(decomp.K), dtype=float)
        d_b = rates.dirichlet_form(chain, b)
        epsilons = self.cfg.stage_epsilons("capacity")

        def solve(eps):
            op = elliptic.build_weighted_operator(decomp, eps)
            return elliptic.capacity(op, decomp, b)

        results = _map_ordered(solve, epsilons, self.threads)
        oracle = None
        if decomp.grid.ndim == 1:
            oracle = [capacity_oracle_1d(decomp, eps, b) for eps in epsilons]

        header = ["epsilon", "grid", "energy", "dirichlet", "ratio",
                  "iterations", "residual"]
        if oracle is not None:
            header += ["oracle", "oracle_ratio"]
        rows = []
        for k, (eps, res) in enumerate(zip(epsilons, results)):
            row = [eps, _grid_label(decomp.grid), res.energy, d_b,
                   res.energy / d_b if d_b else np.nan, res.iterations,
                   res.residual]
            if oracle is not None:
                row += [oracle[k], res.energy / oracle[k] if oracle[k] else np.nan]
            rows.append(row)
        write_csv(self.path("capacity", "capacity.csv"), header, rows)
        payload = {
            **self.meta(),
            "b": b,
            "dirichlet": d_b,
            "eta": decomp.eta,
            "epsilons": epsilons,
            "ratios": [r.energy / d_b for r in results],
        }
        write_json(self.path("capacity", "capacity.json"), payload)
        if self.plot and decomp.grid.ndim == 1:
            finest = results[-1].minimizer
            line_plot(
                self.path("capacity", "minimizer.svg"),
                decomp.grid.axis_centers(0),
                {"psi": finest.values},
                title=f"capacity minimizer, eps={epsilons[-1]:g}",
                xlabel="xi", ylabel="psi",
            )
        return epsilons, results, d_b, oracle

    # ------------------------------------------------------------------
    def run_testfn(self):
        stage = self.cfg.stage("testfn")
        decomp = self.decomposition(self.cfg.stage_eta("testfn"))
        chain = rates.build_chain(decomp)
        c = np.asarray(stage.c if stage.c is not None
                       else _default_balance_vector(decomp.K), dtype=float)
        balance = rates.solve_balance(chain, c)
        b = balance.b
        d_b = rates.dirichlet_form(chain, b)
        epsilons = self.cfg.stage_epsilons("testfn")

        def solve(eps):
            op = elliptic.build_weighted_operator(decomp, eps)
            return elliptic.test_function(op, decomp, c, b)

        results = _map_ordered(solve, epsilons, self.threads)
        header = (["epsilon", "grid", "energy", "lambda", "lambda_ratio"]
                  + [f"lambda_{i + 1}" for i in range(decomp.K)]
                  + [f"flatness_{i + 1}" for i in range(decomp.K)]
                  + ["identity_gap", "dc_gap", "iterations", "residual"])
        rows = []
        for eps, res in zip(epsilons, results):
            dc_gap = abs(
                (rates.dirichlet_form(chain, res.lambda_i)
                 - 2 * float(c @ res.lambda_i)) - balance.d_c
            )
            rows.append(
                [eps, _grid_label(decomp.grid), res.energy, res.lam,
                 res.lam / (d_b / 2.0)]
                + list(res.lambda_i) + list(res.flatness_i)
                + [res.identity_gap, dc_gap, res.iterations, res.residual]
            )
        write_csv(self.path("testfn", "testfn.csv"), header, rows)
        payload = {
            **self.meta(),
            "c": c,
            "b": b,
            "dirichlet": d_b,
            "eta": decomp.eta,
            "epsilons": epsilons,
            "lambda_ratios": [r.lam / (d_b / 2.0) for r in results],
            "flatness": [float(np.max(r.flatness_i)) for r in results],
            "lambda_bounded": [abs(r.lam) <= 2.0 * d_b for r in results],
        }
        write_json(self.path("testfn", "testfn.json"), payload)
        if self.plot and decomp.grid.ndim == 1:
            x = decomp.grid.axis_centers(0)
            series = {f"eps={eps:g}": res.psi.values
                      for eps, res in zip(epsilons, results)}
            line_plot(self.path("testfn", "psi.svg"), x, series,
                      title="elliptic test function", xlabel="xi", ylabel="psi")
        return epsilons, results, d_b, balance

    # ------------------------------------------------------------------
    def run_evolve(self):
        decomp = self.decomposition(self.cfg.stage_eta("evolve"))
        scen_cfg = self.cfg.scenario
        if len(scen_cfg.alpha0) != decomp.K:
            raise ConfigError(
                f"scenario.alpha0: needs {decomp.K} entries (one per valley), "
                f"got {len(scen_cfg.alpha0)}"
            )
        scenario = evolution.EvolutionScenario(
            decomposition=decomp,
            a=scen_cfg.a,
            alpha0=scen_cfg.alpha0,
            T=scen_cfg.T,
            output_times=scen_cfg.output_times,
            grid_x=self.cfg.grid_x,
            dt=scen_cfg.dt,
        )
        epsilons = self.cfg.stage_epsilons("evolve")
        report = evolution.convergence_report(epsilons, scenario)

        for entry in report.entries:
            series = entry.masses
            header = (["epsilon", "grid", "t"]
                      + [f"mass_V{i + 1}" for i in range(decomp.K)]
                      + ["mass_Delta", "total"])
            rows = []
            for k, t in enumerate(series.times):
                rows.append([entry.epsilon, _grid_label(decomp.grid), t]
                            + list(series.masses[k])
                            + [series.delta_mass[k], series.total[k]])
            write_csv(self.path("evolve", f"masses_eps{entry.epsilon:g}.csv"),
                      header, rows)
        payload = {
            **self.meta(),
            "epsilons": epsilons,
            "eta": decomp.eta,
            "mode": report.mode,
            "errors": {f"{e.epsilon:g}": e.error for e in report.entries},
            "monotone": report.monotone,
        }
        write_json(self.path("evolve", "convergence.json"), payload)
        if self.plot:
            entry = report.entries[-1]
            series = {f"V{i + 1}": entry.masses.masses[:, i]
                      for i in range(decomp.K)}
            series["Delta"] = entry.masses.delta_mass
            line_plot(self.path("evolve", f"masses_eps{entry.epsilon:g}.svg"),
                      entry.masses.times, series,
                      title=f"valley masses, eps={entry.epsilon:g}",
                      xlabel="t", ylabel="mass")
        return report

    # ------------------------------------------------------------------
    def run_verify(self):
        checks = []

        def check(name, ok, detail):
            checks.append({"name": name, "pass": bool(ok), "detail": detail})
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")

        decomp = self.run_analyze()
        grad_ok = all(p.grad_norm <= 1e-8 * decomp.grid.extent
                      for p in decomp.minima + decomp.saddles)
        check("landscape.critical_points", grad_ok,
              f"K={decomp.K}, H={decomp.H:.6g}, h={decomp.h:.6g}")

        chain = self.run_rates()
        balance_gap = float(np.max(np.abs(
            chain.mu_hat[:, None] * chain.r - (chain.mu_hat[:, None] * chain.r).T
        )))
        check("rates.detailed_balance", balance_gap <= 1e-14,
              f"max asymmetry {balance_gap:.2e}")
        eigenvalues = np.linalg.eigvalsh(chain.M)
        psd_ok = eigenvalues[0] >= -1e-12 and np.sum(np.abs(eigenvalues) < 1e-12) == 1
        check("rates.M_psd_nullspace", psd_ok,
              f"eigenvalues {np.array2string(eigenvalues, precision=3)}")
        name = self.cfg.potential_spec.get("name")
        if name == "double_well":
            target = np.sqrt(2.0) / (2.0 * np.pi)
            gap = abs(chain.r[0, 1] - target)
            check("rates.double_well_oracle", gap <= 1e-12,
                  f"|r12 - sqrt(2)/(2pi)| = {gap:.2e}")
        if name == "triple_well":
            check("rates.triple_well_adjacency", chain.kappa[0, 2] == 0.0,
                  f"kappa13 = {chain.kappa[0, 2]}")

        cap_eps, cap_results, d_b, oracle = self.run_capacity()
        ratios = [abs(r.energy / d_b - 1.0) for r in cap_results]
        in_box = all(0.75 <= r.energy / d_b <= 1.3 for r in cap_results)
        closer = all(a > b2 for a, b2 in zip(ratios, ratios[1:]))
        check("capacity.ratio_window", in_box,
              f"ratios {[round(r.energy / d_b, 4) for r in cap_results]}")
        check("capacity.ratio_improves", closer,
              f"|ratio-1| {[round(v, 4) for v in ratios]}")
        if oracle is not None:
            worst = max(abs(r.energy / o - 1.0)
                        for r, o in zip(cap_results, oracle))
            check("capacity.oracle_3pct", worst <= 0.03,
                  f"worst oracle mismatch {worst:.4f}")

        tf_eps, tf_results, tf_db, balance = self.run_testfn()
        identity_ok = all(
            r.identity_gap <= max(10 * r.residual, 1e-9) for r in tf_results
        )
        check("testfn.energy_identity", identity_ok,
              f"gaps {[f'{r.identity_gap:.1e}' for r in tf_results]}")
        lam_gaps = [abs(r.lam / (tf_db / 2.0) - 1.0) for r in tf_results]
        check("testfn.lambda_trend",
              all(a > b2 for a, b2 in zip(lam_gaps, lam_gaps[1:])),
              f"|lambda ratio - 1| {[round(v, 4) for v in lam_gaps]}")
        flats = [float(np.max(r.flatness_i)) for r in tf_results]
        check("testfn.flatness_trend",
              all(a > b2 for a, b2 in zip(flats, flats[1:])),
              f"flatness {[round(v, 4) for v in flats]}")

        report = self.run_evolve()
        errors = [e.error for e in report.entries]
        check("evolve.error_monotone", report.monotone,
              f"e(eps) {[round(v, 4) for v in errors]}")
        threshold = 0.15 if self.cfg.potential_spec.get("name") == "triple_well" \
            else 0.1
        check("evolve.final_error", errors[-1] <= threshold,
              f"e({report.entries[-1].epsilon:g}) = {errors[-1]:.4f} "
              f"<= {threshold}")

        all_pass = all(c["pass"] for c in checks)
        payload = {**self.meta(), "checks": checks, "pass": all_pass}
        write_json(self.path("verify", "summary.json"), payload)
        print(f"[{'PASS' if all_pass else 'FAIL'}] verify: "
              f"{sum(c['pass'] for c in checks)}/{len(checks)} checks passed")
        return all_pass


def _default_balance_vector(K):
    c = np.zeros(K)
    c[0], c[-1] = 1.0, -1.0
    return c


def capacity_oracle_1d(decomposition, epsilon, b, refinement=4097):
    """Exact 1-d capacity by quadrature of the explicit minimizer.

    Between consecutive valleys the minimizer has w psi' constant, so each
    gap contributes (Delta b)^2 / int_gap w^{-1}; gaps are in series.
    """
    from .asymptotics import scale_set

    grid = decomposition.grid
    scales = scale_set(decomposition, epsilon)
    x = grid.axis_centers(0)
    spans = []
    for left_mask, right_mask in zip(decomposition.valley_masks,
                                     decomposition.valley_masks[1:]):
        left = float(x[left_mask.ravel()].max())
        right = float(x[right_mask.ravel()].min())
        spans.append((left, right))
    total = 0.0
    for (left, right), (b_l, b_r) in zip(spans, zip(b, b[1:])):
        ts = np.linspace(left, right, refinement)
        phi = decomposition.potential.value_many(ts[:, None])
        inv_w = np.exp((phi - decomposition.h) / epsilon) / scales.weight_factor
        resistance = float(np.trapezoid(inv_w, ts))
        total += (b_r - b_l) ** 2 / resistance
    return total


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="metawell",
        description="Metastable structure, Kramers rates, and scaling limits "
                    "of multi-well potentials.",
    )
    parser.add_argument("subcommand", choices=[
        "analyze", "rates", "asymptotics", "capacity", "testfn", "evolve",
        "verify",
    ])
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="parallel workers for epsilon sweeps")
    parser.add_argument("--seed", type=int, default=0,
                        help="reserved; runs are deterministic")
    parser.add_argument("--plot", dest="plot", action="store_true", default=True)
    parser.add_argument("--no-plot", dest="plot", action="store_false")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    runner = Runner(cfg, args.out, threads=max(1, args.threads), plot=args.plot)
    try:
        if args.subcommand == "analyze":
            runner.run_analyze()
        elif args.subcommand == "rates":
            runner.run_rates()
        elif args.subcommand == "asymptotics":
            runner.run_asymptotics()
        elif args.subcommand == "capacity":
            runner.run_capacity()
        elif args.subcommand == "testfn":
            runner.run_testfn()
        elif args.subcommand == "evolve":
            runner.run_evolve()
        elif args.subcommand == "verify":
            if not runner.run_verify():
                return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MetawellError as exc:
        print(f"numerical failure [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
