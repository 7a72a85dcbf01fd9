"""Command-line front door (``artifact`` / ``python -m artifact``).

Exit codes: 0 success, 2 validation error, 3 a consumed bound is flagged
invalid or misses its truth value under ``--strict-regime``.
"""
from __future__ import annotations

import json
import sys
from functools import wraps

import click

from . import harness
from .jsq_engine import exact_stationary_small, simulate_stationary
from .model_core import ParamError, QueueParams
from .ssq_exact import mean, moment_lp, prob_empty, stationary_pmf
from .stein_certificate import certificate_bound
from .wasserstein_metrics import wp_lattice_vs_gaussian

EXIT_VALIDATION = 2
EXIT_STRICT = 3


class StrictFailure(Exception):
    pass


def _load_config(ctx, param, value):
    if value is None:
        return None
    try:
        with open(value) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.BadParameter(str(exc)) from None
    if not isinstance(data, dict):
        raise click.BadParameter("config must be a JSON object")
    # keys use the option names with dashes or underscores
    ctx.default_map = {k.replace("-", "_"): v for k, v in data.items()}
    return data


def common(fn):
    """Shared flags: --config, --format, --out, --seed, --strict-regime."""
    @click.option("--config", type=click.Path(dir_okay=False), callback=_load_config,
                  is_eager=True, expose_value=False, help="JSON file supplying option values.")
    @click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                  show_default=True)
    @click.option("--out", type=click.Path(dir_okay=False), default=None,
                  help="Write here instead of stdout.")
    @click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=0, show_default=True)
    @click.option("--strict-regime", is_flag=True,
                  help="Exit 3 if any reported bound is invalid or misses the truth.")
    @wraps(fn)
    def inner(*args, **kw):
        return fn(*args, **kw)
    return inner


def params_options(multi: bool):
    def deco(fn):
        fn = click.option("--lam", type=float, required=True, help="Arrival rate.")(fn)
        if multi:
            fn = click.option("--mus", type=str, required=True,
                              help="Comma-separated service rates.")(fn)
        else:
            fn = click.option("--mu", type=float, required=True, help="Service rate.")(fn)
        fn = click.option("--gamma", type=float, required=True, help="Abandonment rate.")(fn)
        fn = click.option("--C", "C", type=float, default=1.5, show_default=True)(fn)
        fn = click.option("--alpha", type=float, default=0.0, show_default=True)(fn)
        fn = click.option("--epsilon", type=float, default=None)(fn)
        return fn
    return deco


def _mus(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    try:
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise ParamError(f"cannot parse service rates {text!r}") from None


def _params(lam, mus, gamma, C, alpha, epsilon) -> QueueParams:
    return QueueParams(lam, mus, gamma, C, alpha, epsilon)


def _template(params: QueueParams) -> dict:
    d = params.to_dict()
    d.pop("gamma")
    return d


def _write(rows, fmt, out, strict, columns=None):
    text = harness.emit(rows, fmt, out, columns)
    if out is None:
        click.echo(text, nl=False)
    if strict:
        bad = [r for r in rows if ("valid" in r and not r["valid"])
               or ("contains" in r and r["valid"] and not r["contains"])]
        if bad:
            raise StrictFailure(f"{len(bad)} row(s) invalid or outside their bracket")


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """Exact solvers, explicit bounds and simulation for queues with abandonment."""


@cli.command("ssq-exact")
@params_options(multi=False)
@click.option("--tol", type=float, default=1e-12, show_default=True)
@click.option("--pmf", "show_pmf", is_flag=True, help="Emit the pmf instead of a summary.")
@common
def ssq_exact_cmd(lam, mu, gamma, C, alpha, epsilon, tol, show_pmf, fmt, out, seed,
                  strict_regime):
    """Stationary law of the single-server queue."""
    params = _params(lam, (mu,), gamma, C, alpha, epsilon)
    pmf = stationary_pmf(params, tol)
    if show_pmf:
        rows = [{"k": k, "prob": float(v)} for k, v in enumerate(pmf.probs)]
    else:
        c = (lam - mu) / gamma
        rows = [{"lambda": lam, "mu": mu, "gamma": gamma, "support": pmf.size,
                 "truncation_tail": pmf.truncation_tail, "p_empty": prob_empty(pmf),
                 "mean": mean(pmf), "lp2_centered": moment_lp(pmf, c, 2.0)}]
    _write(rows, fmt, out, strict_regime)


def _grid_options(fn):
    fn = click.option("--p", "p_grid", type=float, multiple=True)(fn)
    fn = click.option("--a", "a_grid", type=float, multiple=True)(fn)
    return fn


@cli.command("ssq-bounds")
@params_options(multi=False)
@click.option("--kind", "kinds", type=click.Choice(harness.SSQ_KINDS), multiple=True,
              default=("p0",), show_default=True)
@_grid_options
@click.option("--theta", "theta_grid", type=float, multiple=True)
@common
def ssq_bounds_cmd(lam, mu, gamma, C, alpha, epsilon, kinds, p_grid, a_grid, theta_grid,
                   fmt, out, seed, strict_regime):
    """Explicit single-server bounds next to their exact values."""
    params = _params(lam, (mu,), gamma, C, alpha, epsilon)
    cfg = harness.SweepConfig(model="ssq", params=_template(params), gamma_grid=[gamma],
                              outputs=list(kinds), p_grid=list(p_grid) or None,
                              a_grid=list(a_grid) or None,
                              theta_grid=list(theta_grid) or None, seed=seed, format=fmt)
    _write(harness.run_sweep(cfg), fmt, out, strict_regime, harness.COLUMNS)


@cli.command("jsq-solve")
@params_options(multi=True)
@click.option("--cap", type=int, default=60, show_default=True)
@click.option("--tie-rule", type=click.Choice(["lexicographic", "uniform"]),
              default="lexicographic", show_default=True)
@click.option("--pmf", "show_pmf", is_flag=True, help="Emit nonzero joint probabilities.")
@click.option("--min-prob", type=float, default=1e-15, show_default=True)
@common
def jsq_solve_cmd(lam, mus, gamma, C, alpha, epsilon, cap, tie_rule, show_pmf, min_prob,
                  fmt, out, seed, strict_regime):
    """Exact stationary law of JSQ on a truncated box."""
    params = _params(lam, _mus(mus), gamma, C, alpha, epsilon)
    j = exact_stationary_small(params, cap, tie_rule=tie_rule)
    if show_pmf:
        st = j.states()
        pr = j.probs.ravel()
        keep = pr >= min_prob
        rows = [{"state": ";".join(map(str, s)), "prob": float(v)}
                for s, v in zip(st[keep], pr[keep])]
    else:
        row = {"n": params.n, "cap": cap, "tie_rule": tie_rule,
               "p_empty": float(j.probs.flat[0]),
               "zero_mass": float(sum(j.marginal(i)[0] for i in range(params.n))),
               "residual": j.residual, "leak": j.leak, "sweeps": j.sweeps}
        for i in range(params.n):
            m = j.marginal(i)
            row[f"mean_q{i}"] = float((m * range(len(m))).sum())
        rows = [row]
    _write(rows, fmt, out, strict_regime)


@cli.command("jsq-sim")
@params_options(multi=True)
@click.option("--horizon", type=float, required=True)
@click.option("--burn-in", type=float, default=0.0, show_default=True)
@click.option("--estimand", "estimands", multiple=True, default=("p_empty",),
              show_default=True, help="p_empty, zero_mass, mean:i, perp:p, qhat:p, "
              "tail:phi1,...,phin:a")
@click.option("--batches", type=int, default=30, show_default=True)
@click.option("--tie-rule", type=click.Choice(["lexicographic", "uniform"]),
              default="lexicographic", show_default=True)
@click.option("--backend", type=click.Choice(["cython", "python"]), default=None)
@common
def jsq_sim_cmd(lam, mus, gamma, C, alpha, epsilon, horizon, burn_in, estimands, batches,
                tie_rule, backend, fmt, out, seed, strict_regime):
    """Batch-means simulation of JSQ with abandonment."""
    params = _params(lam, _mus(mus), gamma, C, alpha, epsilon)
    res = simulate_stationary(params, horizon, burn_in, seed, list(estimands), batches,
                              backend=backend, tie_rule=tie_rule)
    rows = [{"estimand": k, "value": e.value, "ci": e.ci_halfwidth, "batches": e.batches,
             "seed": e.seed, "horizon": e.horizon, "burn_in": e.burn_in,
             "backend": res.backend} for k, e in res.estimates.items()]
    _write(rows, fmt, out, strict_regime)


@cli.command("wp")
@params_options(multi=True)
@click.option("--p", "p_grid", type=float, multiple=True, default=(2.0,), show_default=True)
@click.option("--cap", type=int, default=60, show_default=True)
@common
def wp_cmd(lam, mus, gamma, C, alpha, epsilon, p_grid, cap, fmt, out, seed, strict_regime):
    """Numeric W_p of the scaled (total) queue against N(0,1), with bounds."""
    params = _params(lam, _mus(mus), gamma, C, alpha, epsilon)
    model, kind = ("ssq", "wp") if params.n == 1 else ("jsq", "wp_jsq")
    cfg = harness.SweepConfig(model=model, params=_template(params), gamma_grid=[gamma],
                              outputs=[kind], p_grid=list(p_grid), cap=cap, seed=seed)
    _write(harness.run_sweep(cfg), fmt, out, strict_regime, harness.COLUMNS)


@cli.command("certify")
@params_options(multi=True)
@click.option("--p", type=float, default=2.0, show_default=True)
@click.option("--t0", type=float, default=None)
@click.option("--kmax", type=int, default=25, show_default=True)
@click.option("--cap", type=int, default=60, show_default=True)
@common
def certify_cmd(lam, mus, gamma, C, alpha, epsilon, p, t0, kmax, cap, fmt, out, seed,
                strict_regime):
    """Generator-comparison W_p certificate against the numeric distance."""
    params = _params(lam, _mus(mus), gamma, C, alpha, epsilon)
    if params.n == 1:
        pmf = stationary_pmf(params)
        rep = certificate_bound(params, p, t0, kmax, pmf=pmf)
    else:
        j = exact_stationary_small(params, cap)
        pmf = j.sum_marginal()
        rep = certificate_bound(params, p, t0, kmax, pmf=j, model="jsq_sum")
    w = wp_lattice_vs_gaussian(pmf, p)
    row = {"p": p, "wp_numeric": w.value, "quad_error": w.quad_error}
    row.update(rep.to_record())
    row["contains"] = rep.contains(w.value)
    _write([row], fmt, out, strict_regime)


@cli.command("sweep")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="SweepConfig as JSON.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None)
@click.option("--strict-regime", is_flag=True)
def sweep_cmd(config_path, fmt, out, seed, strict_regime):
    """Bound-vs-truth table over a parameter grid."""
    with open(config_path) as fh:
        data = json.load(fh)
    if seed is not None:
        data["seed"] = seed
    if fmt is not None:
        data["format"] = fmt
    cfg = harness.SweepConfig.from_dict(data)
    _write(harness.run_sweep(cfg), cfg.format, out, strict_regime, harness.COLUMNS)


@cli.command("phase")
@click.option("--lam", type=float, default=2.0, show_default=True)
@click.option("--mu", type=float, default=1.0, show_default=True)
@click.option("--gamma", "gamma_grid", type=float, multiple=True,
              default=(1e-2, 1e-3, 1e-4), show_default=True)
@click.option("--delta", "delta_grid", type=float, multiple=True,
              default=(0.0, 0.25, 0.5, 1.0), show_default=True)
@click.option("--D", "D_grid", type=float, multiple=True, default=(1.0, 10.0, 100.0),
              show_default=True)
@common
def phase_cmd(lam, mu, gamma_grid, delta_grid, D_grid, fmt, out, seed, strict_regime):
    """Normalised tail exponents across the deviation scale a = D gamma^-delta."""
    cfg = harness.SweepConfig(model="ssq", params={"lambda": lam, "mus": [mu]},
                              gamma_grid=list(gamma_grid), outputs=["tail"],
                              delta_grid=list(delta_grid), D_grid=list(D_grid), seed=seed)
    _write(harness.phase_diagram(cfg), fmt, out, False, harness.PHASE_COLUMNS)


def _is_validation(exc: BaseException) -> bool:
    while exc is not None:
        if isinstance(exc, ParamError):
            return True
        exc = exc.__cause__
    return False


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="artifact", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return EXIT_VALIDATION
    except StrictFailure as exc:
        click.echo(f"strict-regime: {exc}", err=True)
        return EXIT_STRICT
    except Exception as exc:
        if _is_validation(exc):
            click.echo(f"error: {exc}", err=True)
            return EXIT_VALIDATION
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
