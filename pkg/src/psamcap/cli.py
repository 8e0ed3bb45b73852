"""Command line: ``psamcap {simulate,sweep,figure,optimize}``.

Exit codes: 0 success, 2 config error, 3 numeric contract violation,
4 I/O error.
"""

import argparse
import sys
from dataclasses import replace

from .allocopt import closed_form_alpha, numeric_alpha, numeric_phi, optimal_pilot_length, scan_training_length
from .capacity import Ccf, CgfDelayed, SimSettings, evaluate
from .config import KEYS, parse_config, parse_sim
from .errors import ConfigError, ContractViolation
from .experiments import FIGURES, ResultRow, _scheme_name, emit, figure_spec, run

EXIT_OK, EXIT_CONFIG, EXIT_CONTRACT, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(p):
    p.add_argument("--trials", help="Monte-Carlo trials per point (default 10000)")
    p.add_argument("--seed", help="base seed (default 42)")
    p.add_argument("--out", help="CSV path; stdout when omitted")
    p.add_argument("--workers", type=int, default=1, help="processes for trial generation")
    p.add_argument("--deterministic", action="store_true", help="omit the timestamp comment line")


def _add_scheme_flags(p):
    p.add_argument("--config", help="key = value config file")
    for key in KEYS:
        if key in ("trials", "seed", "out"):
            continue
        p.add_argument("--" + key.replace("_", "-"), dest=key)
    _add_common(p)


def build_parser():
    parser = _Parser(prog="psamcap", description="Capacity bounds for pilot-assisted MIMO links.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    _add_scheme_flags(sub.add_parser("simulate", help="one config point"))
    sweep = sub.add_parser("sweep", help="grid over snr_db, rho and alpha lists")
    _add_scheme_flags(sweep)
    sweep.add_argument("--gap", action="store_true", help="also estimate the upper/lower bound gap")
    fig = sub.add_parser("figure", help="canonical figure presets")
    fig.add_argument("name", choices=sorted(FIGURES))
    _add_common(fig)
    opt = sub.add_parser("optimize", help="search alpha, phi or the training length")
    opt.add_argument("target", choices=("alpha", "phi", "lp"))
    _add_scheme_flags(opt)
    return parser


def _spec(args):
    text = ""
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    overrides = {k: getattr(args, k, None) for k in KEYS}
    spec = parse_config(text, overrides)
    sim = SimSettings(spec.sim.trials, spec.sim.seed, args.workers)
    return spec, sim


def _with_sim(spec, sim, **kw):
    return replace(spec, sim=sim, **kw)


def _optimize(target, spec, sim):
    rows = []
    for pt in spec.grid:
        cfg = pt.cfg
        base = dict(scheme=_scheme_name(cfg), nt=cfg.nt, nr=cfg.nr, block_len=cfg.L, snr_db=pt.snr_db, rho=pt.rho)
        if target == "alpha":
            search = numeric_alpha(cfg, sim)
            cells = dict(
                base,
                pilot_len=cfg.lp,
                alpha_numeric=search.alpha,
                alpha_closed_form=closed_form_alpha(cfg),
                capacity=search.capacity,
                flagged=search.flagged,
            )
            rows.append(ResultRow(cells))
        elif target == "phi":
            scan = numeric_phi(cfg, sim)
            at_beta = evaluate(cfg.with_(scheme=CgfDelayed(cfg.d, cfg.beta)), sim)
            cells = dict(
                base,
                pilot_len=cfg.lp,
                delay=cfg.d,
                alpha=cfg.alpha,
                beta=cfg.beta,
                phi_opt=scan.phi,
                mean_phi_opt=scan.capacity,
                mean_phi_beta=at_beta.mean,
            )
            rows.append(ResultRow(cells))
        elif isinstance(cfg.scheme, Ccf):
            best, table = optimal_pilot_length(cfg.scheme.cov, cfg.nt, cfg.nr, cfg.L, cfg.P, sim)
            for r in table:
                cells = dict(
                    base,
                    pilot_len=r.lp,
                    alpha=r.alpha,
                    mean=r.estimate.mean,
                    stderr=r.estimate.stderr,
                    reduced=r.reduced,
                    best=r.lp == best,
                )
                rows.append(ResultRow(cells))
        else:
            lps = range(max(cfg.nt, 1), min(2 * cfg.nt, cfg.L - 1) + 1)
            if isinstance(cfg.scheme, CgfDelayed):
                raise ConfigError("training length search covers delayless schemes", field="delay")
            table = scan_training_length(cfg, lps, sim)
            best = max(table, key=lambda r: r.estimate.mean).lp
            for r in table:
                cells = dict(
                    base,
                    pilot_len=r.lp,
                    alpha=r.alpha,
                    mean=r.estimate.mean,
                    stderr=r.estimate.stderr,
                    reduced=r.reduced,
                    best=r.lp == best,
                )
                rows.append(ResultRow(cells))
    return rows


def _dispatch(args):
    stamp = not args.deterministic
    if args.verb == "figure":
        pairs = {k: getattr(args, k) for k in ("trials", "seed") if getattr(args, k) is not None}
        sim = parse_sim(pairs, args.workers)
        rows = run(figure_spec(args.name, sim))
        emit(rows, args.out, stamp)
        return
    spec, sim = _spec(args)
    out = args.out or spec.out
    if args.verb == "simulate":
        if len(spec.grid) != 1:
            raise ConfigError("simulate takes a single point; use sweep for lists", field="grid")
        rows = run(_with_sim(spec, sim, out=None))
    elif args.verb == "sweep":
        rows = run(_with_sim(spec, sim, out=None, gap=args.gap))
    else:
        rows = _optimize(args.target, spec, sim)
    emit(rows, out, stamp)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "workers", 1) < 1:
            raise ConfigError("--workers must be at least 1", field="workers")
        _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractViolation as exc:
        print(f"numeric contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
