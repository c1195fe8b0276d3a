"""Command-line front end.

Every subcommand reads a market file (except ``generate``), writes one
self-describing JSON report (or a CSV table with ``--format csv``) and exits
with 0 on success, 1 with a JSON error object on stderr when a precondition or
validation check fails, and 2 on I/O or parse errors.

CSV tables (fixed headers):

* ``spectrum``: ``index,eigenvalue,q_image,is_kernel``
* ``simulate``: ``t,alpha_bar_B_norm``
* ``noise``: ``mode,bin_left,bin_right,count`` (needs ``--bins``)
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import io
from .dynamics import build_D_analytic, mode_direction, simulate_ctpt
from .equilibrium import solve_equilibrium
from .errors import CLIError, MarketError, TatonnementError
from .generators import (gen_exp_gap_chain, gen_price_chain, gen_random_db,
                         gen_uniform_circulant)
from .market import Market, potentials, validate
from .noise import simulate_ou
from .spectral import comparison_bounds, market_laplacian

EXIT_OK, EXIT_FAIL, EXIT_IO = 0, 1, 2
MARKET_KINDS = ("uniform_circulant", "price_chain", "exp_gap_chain", "random_db")


@dataclass(frozen=True)
class RunConfig:
    command: str
    args: argparse.Namespace


def _report(kind: str, body: dict, **extra) -> dict:
    return {"schema_version": io.SCHEMA_VERSION, "kind": kind, **extra, **body}


def _require(cond: bool, message: str, flag: str) -> None:
    if not cond:
        raise CLIError(message, operation="dispatch", witness={"flag": flag})


def _load_market(args) -> Market:
    _require(args.input is not None, "--input is required", "--input")
    m = io.market_from_dict(io.read_json(args.input))
    bad = validate(m).first_failure
    if bad is not None:
        raise MarketError(f"{bad.name} violated: {bad.message}", condition=bad.name,
                          operation="validate", witness=bad.witness)
    return m


def _solved(args):
    m = _load_market(args)
    pot = potentials(m)
    eq = solve_equilibrium(m, pot, tol=args.tol)
    return m, pot, eq


# -- subcommands ----------------------------------------------------------------


def cmd_validate(args):
    _require(args.input is not None, "--input is required", "--input")
    m = io.market_from_dict(io.read_json(args.input))
    rep = validate(m)
    bad = rep.first_failure
    if bad is not None:
        raise MarketError(f"{bad.name} violated: {bad.message}", condition=bad.name,
                          operation="validate", witness=bad.witness)
    return _report("validation", rep.to_dict(), n=m.n, delta=m.delta), None


def cmd_generate(args):
    try:
        return _generate(args)
    except TatonnementError:
        raise
    except (ValueError, RuntimeError) as exc:
        raise CLIError(str(exc), operation="generate", witness={"kind": args.kind}) from exc


def _generate(args):
    kind = args.kind
    _require(args.n is not None, "--n is required", "--n")
    params = {"n": args.n}
    if kind == "uniform_circulant":
        params.update(half_degree=args.half_degree, self_loop=args.self_loop)
        m = gen_uniform_circulant(args.n, args.half_degree, args.self_loop, args.delta)
    elif kind == "price_chain":
        params.update(a=args.a)
        m = gen_price_chain(args.n, args.a, args.delta)
    elif kind == "exp_gap_chain":
        params.update(A=args.A)
        m = gen_exp_gap_chain(args.n, args.A)
    else:
        params.update(density=args.density, phi_spread=args.phi_spread)
        m = gen_random_db(args.n, args.density, args.seed, args.delta, args.phi_spread)
    out = io.market_to_dict(m)
    out["generator"] = {"kind": kind, "parameters": params, "seed": args.seed}
    return out, None


def cmd_solve(args):
    m, pot, eq = _solved(args)
    body = {"equilibrium": eq.to_dict(), "psi": pot.psi, "psi_tilde": pot.psi_tilde,
            "gamma": pot.gamma, "base_vertex": pot.base_vertex}
    return _report("equilibrium", body, n=m.n, delta=m.delta), None


def cmd_spectrum(args):
    m, pot, eq = _solved(args)
    rep = market_laplacian(m, eq, pot)
    q = rep.q_images
    rows = [(k, rep.eigenvalues[k], q[k], int(k == rep.kernel_index)) for k in range(m.n)]
    table = (("index", "eigenvalue", "q_image", "is_kernel"), rows)
    return _report("spectrum", rep.to_dict(full=args.full), n=m.n), table


def cmd_bounds(args):
    m, pot, eq = _solved(args)
    rep = market_laplacian(m, eq, pot)
    b = comparison_bounds(m, eq, pot, rep)
    body = b.to_dict()
    body["laplacian"] = rep.bounds["laplacian"].to_dict()
    if "uniform" in rep.bounds:
        body["uniform"] = rep.bounds["uniform"].to_dict()
    failed = b.violations() + [k for k, s in rep.bounds.items() if not s.holds]
    if failed:
        raise TatonnementError("damping-rate bounds violated", operation="comparison_bounds",
                               witness=failed)
    return _report("bounds", body, n=m.n, delta=m.delta), None


def cmd_simulate(args):
    m, pot, eq = _solved(args)
    kernel = build_D_analytic(m, eq, pot)
    _require(0 < args.amplitude <= 0.1, "--amplitude must lie in (0, 0.1]", "--amplitude")
    if args.random:
        rng = np.random.default_rng(args.seed)
        direction = rng.uniform(-1.0, 1.0, size=m.n)
        direction /= np.max(np.abs(direction))
        source = {"random": True, "seed": args.seed}
    else:
        _require(0 <= args.mode < m.n - 1, f"--mode must lie in [0, {m.n - 2}]", "--mode")
        direction = mode_direction(kernel, args.mode)
        source = {"random": False, "mode": args.mode}
    window = (args.window_low, args.window_high)
    _require(0 < window[0] < window[1] <= 1, "fit window must satisfy 0 < low < high <= 1", "--window-low")
    tr = simulate_ctpt(m, eq, args.amplitude * direction, T=args.T, dt=args.dt, kernel=kernel,
                       record_every=args.record_every, window=window, settle=args.settle)
    body = tr.to_dict(include_prices=args.prices)
    body.update(initial_condition=source, amplitude=args.amplitude,
                damping_rate=kernel.damping_rate, seed=args.seed)
    rows = zip(tr.times, tr.alpha_bar_B_norm)
    return _report("trajectory", body, n=m.n, delta=m.delta), (("t", "alpha_bar_B_norm"), rows)


def cmd_noise(args):
    m, pot, eq = _solved(args)
    kernel = build_D_analytic(m, eq, pot)
    rep = simulate_ou(kernel, args.kappa, T=args.T, dt=args.dt, seed=args.seed,
                      trials=args.trials, burn_in=args.burn_in, histogram_bins=args.bins)
    body = rep.to_dict()
    body["histograms"] = rep.histograms
    rows = []
    for h in rep.histograms:
        e = h["edges"]
        rows += [(h["mode"], e[k], e[k + 1], c) for k, c in enumerate(h["counts"])]
    return _report("noise", body, n=m.n, delta=m.delta), (("mode", "bin_left", "bin_right", "count"), rows)


COMMANDS: dict[str, Callable] = {
    "validate": cmd_validate,
    "generate": cmd_generate,
    "solve": cmd_solve,
    "spectrum": cmd_spectrum,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "noise": cmd_noise,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", "-i", help="market file (JSON)")
    common.add_argument("--output", "-o", help="report path (default: stdout)")
    common.add_argument("--tol", type=float, default=1e-12, help="equilibrium solver tolerance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json")

    p = argparse.ArgumentParser(prog="tatonnement", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check the structural market conditions")

    g = sub.add_parser("generate", parents=[common], help="write a generated market file")
    g.add_argument("--kind", choices=MARKET_KINDS, required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--delta", type=float, default=1.0)
    g.add_argument("--half-degree", type=int, default=1)
    g.add_argument("--self-loop", action="store_true")
    g.add_argument("--a", type=float, default=2.0, help="price-chain ratio")
    g.add_argument("--A", type=float, default=2.0, help="exponential-gap chain base")
    g.add_argument("--density", type=float, default=0.4)
    g.add_argument("--phi-spread", type=float, default=1.0)

    sub.add_parser("solve", parents=[common], help="detailed-balance equilibrium")
    s = sub.add_parser("spectrum", parents=[common], help="market Laplacian and damping rate")
    s.add_argument("--full", action="store_true", help="include matrices and eigenvectors")
    sub.add_parser("bounds", parents=[common], help="comparison bounds on the damping rate")

    sim = sub.add_parser("simulate", parents=[common], help="nonlinear tatonnement trajectory")
    sim.add_argument("--amplitude", type=float, default=1e-3)
    sim.add_argument("--mode", type=int, default=0, help="eigenmode index (0 = slowest)")
    sim.add_argument("--random", action="store_true", help="random direction drawn from --seed")
    sim.add_argument("--T", type=float)
    sim.add_argument("--dt", type=float)
    sim.add_argument("--record-every", type=int, default=1)
    sim.add_argument("--window-low", type=float, default=1e-8)
    sim.add_argument("--window-high", type=float, default=1e-2)
    sim.add_argument("--settle", action="store_true", help="exclude the fast-mode transient from the fit")
    sim.add_argument("--prices", action="store_true", help="include the price path in the report")

    nz = sub.add_parser("noise", parents=[common], help="noise-driven stationary statistics")
    nz.add_argument("--kappa", type=float, default=0.1)
    nz.add_argument("--T", type=float)
    nz.add_argument("--dt", type=float)
    nz.add_argument("--trials", type=int, default=1)
    nz.add_argument("--burn-in", type=float)
    nz.add_argument("--bins", type=int, default=0)
    return p


def dispatch(config: RunConfig) -> int:
    args = config.args
    try:
        report, table = COMMANDS[config.command](args)
        if args.format == "csv":
            if table is None:
                raise CLIError(f"{config.command} has no CSV output", operation="dispatch",
                               witness={"flag": "--format"})
            text = io.to_csv(*table)
        else:
            text = io.dumps(report)
        io.write_text(args.output, text)
    except TatonnementError as exc:
        print(io.dumps(exc.to_dict()), file=sys.stderr)
        return EXIT_FAIL
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        err = {"module": "cli", "operation": "io", "message": str(exc), "witness": None}
        print(io.dumps(err), file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return dispatch(RunConfig(args.command, args))


if __name__ == "__main__":
    sys.exit(main())
