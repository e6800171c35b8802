"""Command-line interface: model construction, bound/rate evaluation,
trajectory simulation, bound-vs-simulation comparison, inequality reports,
and the fixture check suite.

Exit codes: 0 success, 1 validation error, 2 numerical failure. Errors are
emitted on stderr as one JSON object {code, message, context}. Every output
file is accompanied by a run manifest recording input digests, the seed,
and the parameters, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .deviation import MeasurementSetup, direct_variational_crosscheck, main_bound, rate_function
from .inequalities import (
    LipschitzContext,
    concentration_bound,
    lipschitz_norm,
    lsi_depolarizing,
    spectral_gap,
    ti_from_lsi,
    tilde_observable,
)
from .linalg import NumericalError, QdevError, ValidationError
from .lindblad import bohr_frequencies, check_detailed_balance
from .models import (
    ClassicalChain,
    CommutingHamiltonian,
    appendix_b_fixtures,
    classical_embedding,
    depolarizing,
    heat_bath,
    maximally_mixed,
    tensor_product,
)
from .trajectories import compare_with_bound, run_ensemble


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise ValidationError(f"cannot parse float list {text!r}")


def _resolve_seed(args) -> int | None:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("QDEV_SEED")
    return int(env) if env else None


def build_parser() -> _Parser:
    parser = _Parser(prog="qdev", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="worker threads for ensemble runs")
    parser.add_argument("--format", default="csv", choices=["csv", "json"],
                        help="tabular output format; json embeds the run manifest")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_model = sub.add_parser("model", help="construct model files")
    model_sub = p_model.add_subparsers(dest="model_verb", required=True)
    p_new = model_sub.add_parser("new")
    p_new.add_argument("--template", required=True,
                       choices=["depolarizing", "classical", "tensor", "heat-bath", "appendix-b"])
    p_new.add_argument("--dim", type=int)
    p_new.add_argument("--sigma", help="state JSON for the depolarizing target")
    p_new.add_argument("--rates-file", help="JSON rate matrix for classical chains")
    p_new.add_argument("--factors", nargs="*", help="model files for tensor products")
    p_new.add_argument("--lattice-file", help="JSON heat-bath description")
    p_new.add_argument("--which", default="psi", choices=["psi", "psi-tilde", "p-channel"])
    p_new.add_argument("--p", type=float, default=0.3)
    p_new.add_argument("-o", "--output", required=True)

    p_bound = sub.add_parser("bound", help="finite-time deviation bound")
    p_bound.add_argument("--model", required=True)
    p_bound.add_argument("--setup", required=True)
    p_bound.add_argument("--state", help="initial state JSON (default: stationary)")
    p_bound.add_argument("--r", required=True, help="comma-separated thresholds")
    p_bound.add_argument("--t", required=True, help="comma-separated times")
    p_bound.add_argument("-o", "--output", required=True)

    p_rate = sub.add_parser("rate", help="large-deviation rate function table")
    p_rate.add_argument("--model", required=True)
    p_rate.add_argument("--setup", required=True)
    p_rate.add_argument("--grid", help="lo:hi:n for single-channel setups")
    p_rate.add_argument("--grid-file", help="JSON list of grid points")
    p_rate.add_argument("-o", "--output", required=True)

    p_sim = sub.add_parser("simulate", help="trajectory ensemble")
    p_sim.add_argument("--model", required=True)
    p_sim.add_argument("--setup", required=True)
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--state")
    p_sim.add_argument("--r", required=True)
    p_sim.add_argument("--seed", type=int, help="overrides QDEV_SEED and the config seed")
    p_sim.add_argument("--paths-dump", help="per-path estimator CSV")
    p_sim.add_argument("-o", "--output", required=True)

    p_cmp = sub.add_parser("compare", help="join simulate and bound CSVs")
    p_cmp.add_argument("--simulate-csv", required=True)
    p_cmp.add_argument("--bound-csv", required=True)
    p_cmp.add_argument("-o", "--output", required=True)

    p_ineq = sub.add_parser("inequalities", help="constants and symmetry report")
    p_ineq.add_argument("--model", required=True)
    p_ineq.add_argument("--setup", help="optional setup for per-direction Lipschitz norms")
    p_ineq.add_argument("-o", "--output", required=True, help="prefix; writes .json and .csv")

    p_conc = sub.add_parser("concentrate", help="closed-form concentration bounds")
    p_conc.add_argument("--variant", required=True,
                        choices=["ti_gaussian", "ti_lipschitz", "poincare", "depolarizing",
                                 "tensor", "gibbs"])
    p_conc.add_argument("--t", required=True)
    p_conc.add_argument("--r", required=True)
    p_conc.add_argument("--prefactor", type=float, default=1.0)
    p_conc.add_argument("--ti-constant", type=float)
    p_conc.add_argument("--lipschitz-value", type=float)
    p_conc.add_argument("--gap", type=float)
    p_conc.add_argument("--sup-norm", type=float)
    p_conc.add_argument("--dim", type=int)
    p_conc.add_argument("--eigenvalue-spread", type=float)
    p_conc.add_argument("--lsi-alpha2", type=float)
    p_conc.add_argument("--n-factors", type=int)
    p_conc.add_argument("--alpha-u", type=float)
    p_conc.add_argument("--beta-h-norm", type=float)
    p_conc.add_argument("--attest-hypothesis", action="store_true")
    p_conc.add_argument("-o", "--output", required=True)

    p_check = sub.add_parser("check", help="run the fixture suite")
    p_check.add_argument("--suite", default="paper-fixtures", choices=["paper-fixtures"])
    return parser


# ---------------------------------------------------------------------------
# Verb implementations
# ---------------------------------------------------------------------------

def _cmd_model_new(args, argv) -> int:
    template = args.template
    if template == "depolarizing":
        if args.sigma:
            doc = fileio.load_json(args.sigma)
            if "dim" not in doc:
                raise ValidationError(f"{args.sigma}: missing field 'dim'")
            rho = fileio.load_state(args.sigma, int(doc["dim"]))
            from .linalg import FaithfulState
            lind = depolarizing(FaithfulState(rho))
        else:
            if not args.dim:
                raise ValidationError("depolarizing template needs --dim or --sigma")
            lind = depolarizing(maximally_mixed(args.dim))
        fileio.save_model(args.output, hamiltonian=lind.hamiltonian, jumps=lind.jumps,
                          template="depolarizing")
    elif template == "classical":
        if not args.rates_file:
            raise ValidationError("classical template needs --rates-file")
        rates = np.asarray(fileio.load_json(args.rates_file), dtype=float)
        lind = classical_embedding(ClassicalChain(rates))
        fileio.save_model(args.output, hamiltonian=lind.hamiltonian, jumps=lind.jumps,
                          template="classical")
    elif template == "tensor":
        if not args.factors:
            raise ValidationError("tensor template needs --factors")
        factors = []
        for f in args.factors:
            model = fileio.load_model(f)
            factors.append(model.context.require_jumps())
        lind = tensor_product(factors)
        fileio.save_model(args.output, hamiltonian=lind.hamiltonian, jumps=lind.jumps,
                          template="tensor")
    elif template == "heat-bath":
        if not args.lattice_file:
            raise ValidationError("heat-bath template needs --lattice-file")
        doc = fileio.load_json(args.lattice_file)
        terms = [(tuple(t["support"]), fileio.decode_complex_matrix(t["matrix"], "term"))
                 for t in doc["terms"]]
        ham = CommutingHamiltonian(int(doc["n_sites"]), int(doc["local_dim"]), terms,
                                   float(doc["beta"]))
        model = heat_bath(ham)
        channel = sum(psi.matrix for psi in model.site_channels)
        # sum_v Psi_v - (n-1) id is unital; store the channel whose difference
        # with the identity is the generator.
        n = ham.n_sites
        channel = channel - (n - 1) * np.eye(channel.shape[0])
        fileio.save_model(args.output, channel=channel, template="heat-bath")
    elif template == "appendix-b":
        fx = appendix_b_fixtures(p=args.p)
        which = {"psi": fx.psi, "psi-tilde": fx.psi_tilde, "p-channel": fx.p_channel}[args.which]
        fileio.save_model(args.output, channel=which.matrix, template=f"appendix-b:{args.which}")
    fileio.write_manifest(args.output, argv, _existing_inputs(args), {"template": template})
    return 0


def _existing_inputs(args) -> list[str]:
    paths = []
    for name in ("model", "setup", "config", "state", "sigma", "rates_file", "lattice_file",
                 "simulate_csv", "bound_csv", "grid_file"):
        value = getattr(args, name, None)
        if value and Path(value).exists():
            paths.append(value)
    for f in getattr(args, "factors", None) or []:
        if Path(f).exists():
            paths.append(f)
    return paths


def _cmd_bound(args, argv) -> int:
    model = fileio.load_model(args.model)
    setup = fileio.load_setup(args.setup, model.context)
    r = np.asarray(_float_list(args.r))
    ts = _float_list(args.t)
    bad = np.nonzero(r < 0)[0]
    if bad.size:
        raise ValidationError(f"r[{bad[0]}] = {r[bad[0]]} is negative")
    rho = (fileio.load_state(args.state, model.context.dim) if args.state
           else model.context.sigma.matrix)
    report = main_bound(setup, rho, r)
    header = (["t"] + [f"r{i}" for i in range(setup.ell)]
              + ["exponent", "prefactor", "bound", "status"])
    rows = []
    for t in ts:
        rows.append([t, *r.tolist(), report.exponent, report.prefactor, report.bound(t),
                     report.status])
    fileio.emit_report(args.output, header, rows, args.format, argv,
                       _existing_inputs(args), {"r": r.tolist(), "t": ts})
    return 0


def _cmd_rate(args, argv) -> int:
    model = fileio.load_model(args.model)
    setup = fileio.load_setup(args.setup, model.context)
    if args.grid_file:
        grid = np.asarray(fileio.load_json(args.grid_file), dtype=float)
    elif args.grid:
        try:
            lo, hi, count = args.grid.split(":")
            grid = np.linspace(float(lo), float(hi), int(count))[:, None]
        except ValueError:
            raise ValidationError(f"cannot parse grid spec {args.grid!r} (expected lo:hi:n)")
        if setup.ell != 1:
            raise ValidationError("--grid is for single-channel setups; use --grid-file")
    else:
        raise ValidationError("rate needs --grid or --grid-file")
    points = rate_function(setup, grid)
    header = [f"s{i}" for i in range(setup.ell)] + ["rate", "status"]
    rows = [[*p.s.tolist(), p.value if math.isfinite(p.value) else math.inf, p.status]
            for p in points]
    fileio.emit_report(args.output, header, rows, args.format, argv,
                       _existing_inputs(args), {"n_points": len(points)})
    return 0


def _cmd_simulate(args, argv) -> int:
    model = fileio.load_model(args.model)
    setup = fileio.load_setup(args.setup, model.context)
    config = fileio.load_config(args.config, seed_override=_resolve_seed(args))
    r = np.asarray(_float_list(args.r))
    rho = (fileio.load_state(args.state, model.context.dim) if args.state
           else model.context.sigma.matrix)
    result = run_ensemble(setup, rho, config, r, n_threads=max(1, args.threads))
    header = (["t"] + [f"r{i}" for i in range(setup.ell)]
              + [f"estimator_mean{i}" for i in range(setup.ell)]
              + [f"estimator_stderr{i}" for i in range(setup.ell)]
              + ["count", "n_paths", "estimate", "ci_low", "ci_high",
                 "clip_violation_fraction", "n_resampled", "status"])
    rows = []
    for i, t in enumerate(result.checkpoint_times):
        tail = result.tails[i]
        status = "ok" if np.all(np.isfinite(result.estimator_mean[i])) else "failed"
        rows.append([t, *r.tolist(), *result.estimator_mean[i].tolist(),
                     *result.estimator_stderr[i].tolist(), tail.count, tail.n_paths,
                     tail.estimate, tail.ci_low, tail.ci_high,
                     result.clip_violation_fraction, result.n_resampled, status])
    fileio.emit_report(args.output, header, rows, args.format, argv,
                       _existing_inputs(args),
                       {"r": r.tolist(), "n_paths": config.n_paths, "dt": config.dt,
                        "t_max": config.t_max}, base_seed=config.base_seed)
    if args.paths_dump:
        _dump_paths(args, setup, rho, config)
    return 0


def _dump_paths(args, setup, rho, config):
    from .trajectories import simulate_path

    header = ["path", "t"] + [f"estimator{i}" for i in range(setup.ell)]
    rows = []
    for p in range(config.n_paths):
        record = simulate_path(setup, rho, config, p)
        for i, t in enumerate(record.checkpoint_times):
            rows.append([p, t, *record.estimators[i].tolist()])
    fileio.write_csv(args.paths_dump, header, rows)


def _cmd_compare(args, argv) -> int:
    _, sim_rows = fileio.read_csv(args.simulate_csv)
    _, bound_rows = fileio.read_csv(args.bound_csv)
    if not sim_rows or not bound_rows:
        raise ValidationError("compare needs nonempty simulate and bound CSVs")
    bounds_by_t = {float(row["t"]): row for row in bound_rows}
    header = ["t", "bound", "estimate", "ci_low", "ci_high", "consistent", "margin"]
    rows = []
    for row in sim_rows:
        t = float(row["t"])
        match = None
        for tb, brow in bounds_by_t.items():
            if abs(tb - t) <= 1e-12 * max(1.0, abs(t)):
                match = brow
                break
        if match is None:
            continue
        bound_value = float(match["bound"])
        estimate = float(row["estimate"])
        ci_low = float(row["ci_low"])
        rows.append([t, bound_value, estimate, ci_low, float(row["ci_high"]),
                     ci_low <= bound_value, bound_value - estimate])
    if not rows:
        raise ValidationError("no matching times between the two CSVs")
    fileio.emit_report(args.output, header, rows, args.format, argv,
                       _existing_inputs(args), {"n_rows": len(rows)})
    return 0


def _cmd_inequalities(args, argv) -> int:
    model = fileio.load_model(args.model)
    ctx = model.context
    report: dict = {
        "dim": ctx.dim,
        "primitive": ctx.primitive,
        "stationary_state": fileio.encode_complex_matrix(ctx.sigma.matrix),
    }
    symmetry = {}
    for kind in ("GNS", "KMS", "BKM"):
        sym = check_detailed_balance(kind, ctx)
        symmetry[kind] = {"symmetric": sym.symmetric, "deviation": sym.deviation}
    report["symmetry"] = symmetry
    gap = spectral_gap(ctx)
    report["spectral_gap"] = gap
    alpha2 = None
    if model.template == "depolarizing":
        alpha2 = lsi_depolarizing(ctx.require_faithful())
        report["lsi_alpha2"] = alpha2
        report["lsi_provenance"] = "closed_form"
        report["ti_constant"] = ti_from_lsi(alpha2)
        report["ti_provenance"] = "computed"
    if ctx.lindbladian is not None:
        report["bohr_frequencies"] = bohr_frequencies(ctx)
    lipschitz_rows = []
    if args.setup and ctx.lindbladian is not None:
        setup = fileio.load_setup(args.setup, ctx)
        lip = LipschitzContext.from_context(ctx)
        for j in range(setup.ell):
            obs = tilde_observable(ctx, setup.directions[j])
            lipschitz_rows.append([j, lipschitz_norm(lip, obs), float(np.linalg.norm(obs, 2))])
        report["tilde_lipschitz"] = [row[1] for row in lipschitz_rows]
    Path(args.output + ".json").write_text(json.dumps(report, indent=1))
    header = ["quantity", "value"]
    rows = [["spectral_gap", gap], ["primitive", ctx.primitive]]
    for kind in ("GNS", "KMS", "BKM"):
        rows.append([f"{kind.lower()}_deviation", symmetry[kind]["deviation"]])
        rows.append([f"{kind.lower()}_symmetric", symmetry[kind]["symmetric"]])
    if alpha2 is not None:
        rows.append(["lsi_alpha2", alpha2])
        rows.append(["ti_constant", ti_from_lsi(alpha2)])
    for j, lip_norm, sup in lipschitz_rows:
        rows.append([f"tilde_lipschitz{j}", lip_norm])
        rows.append([f"tilde_sup{j}", sup])
    fileio.write_csv(args.output + ".csv", header, rows)
    fileio.write_manifest(args.output + ".csv", argv, _existing_inputs(args), {})
    return 0


def _cmd_concentrate(args, argv) -> int:
    bound = concentration_bound(
        args.variant,
        prefactor=args.prefactor,
        ti_constant=args.ti_constant,
        lipschitz_value=args.lipschitz_value,
        gap=args.gap,
        sup_norm=args.sup_norm,
        dim=args.dim,
        eigenvalue_spread=args.eigenvalue_spread,
        lsi_alpha2=args.lsi_alpha2,
        n_factors=args.n_factors,
        alpha_u=args.alpha_u,
        beta_h_norm=args.beta_h_norm,
        hypothesis_attested=args.attest_hypothesis,
    )
    ts = _float_list(args.t)
    rs = _float_list(args.r)
    header = ["t", "r", "bound"]
    rows = [[t, r, bound.bound(t, r)] for t in ts for r in rs]
    fileio.emit_report(args.output, header, rows, args.format, argv, [],
                       {"variant": args.variant})
    return 0


# ---------------------------------------------------------------------------
# Fixture check suite
# ---------------------------------------------------------------------------

def _cmd_check(args, argv) -> int:
    from . import checks

    results = checks.run_paper_fixtures()
    failed = 0
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failed += 0 if ok else 1
    print(f"{len(results) - failed}/{len(results)} fixture checks passed")
    return 0 if failed == 0 else 2


HANDLERS = {
    "bound": _cmd_bound,
    "rate": _cmd_rate,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "inequalities": _cmd_inequalities,
    "concentrate": _cmd_concentrate,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verb == "model":
            return _cmd_model_new(args, argv)
        return HANDLERS[args.verb](args, argv)
    except ValidationError as exc:
        fileio.emit_error("validation", str(exc), {"argv": argv})
        return 1
    except NumericalError as exc:
        fileio.emit_error("numerical", str(exc), {"argv": argv})
        return 2
    except QdevError as exc:
        fileio.emit_error("error", str(exc), {"argv": argv})
        return 2


if __name__ == "__main__":
    sys.exit(main())
