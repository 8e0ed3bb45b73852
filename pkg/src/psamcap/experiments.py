"""Experiment runner and figure presets, written out as CSV.

Every preset is a deterministic function of ``(trials, seed)``: capacities
use common random numbers, so rerunning with the same settings reproduces
the file byte for byte (the timestamp comment aside).
"""

import csv
import datetime as _dt
import math
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

from .allocopt import (
    alpha_star,
    best_ccf_split,
    critical_rho,
    equal_power_alpha,
    gamma_beamforming,
    gamma_ccf,
    gamma_nonfeedback,
    numeric_alpha,
    numeric_phi,
    phi_star_perfect_csi,
)
from .capacity import Ccf, CgfDelayed, CgfDelayless, SchemeConfig, SimSettings, evaluate, gap_estimate
from .channelmodel import exp_correlation
from .config import CUSTOM, ExperimentSpec, db_to_linear
from .errors import ConfigError, ContractViolation
from .estimation import ccf_pilots

SIG_DIGITS = 12


@dataclass(frozen=True)
class ResultRow:
    """One CSV row; ``cells`` keeps column order."""

    cells: dict

    def __getitem__(self, key):
        return self.cells[key]


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ContractViolation(f"refusing to write non-finite value {value}")
        return format(float(value), f".{SIG_DIGITS}g")
    return str(value)


def render_csv(rows, stamp=True):
    """CSV text for ``rows``; all rows must share the same columns."""
    if not rows:
        raise ContractViolation("no rows to write")
    columns = list(rows[0].cells)
    lines = []
    if stamp:
        now = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()
        lines.append(f"# generated {now}\n")

    class _Sink:
        def write(self, s):
            lines.append(s)

    writer = csv.writer(_Sink(), lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if list(row.cells) != columns:
            raise ContractViolation("rows of one experiment must share their columns")
        writer.writerow([_cell(v) for v in row.cells.values()])
    return "".join(lines)


def write_csv(path, rows, stamp=True):
    """Write atomically: a temp file in the target directory, then rename."""
    text = render_csv(rows, stamp)
    target = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".csv", dir=os.path.dirname(target))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- custom sweeps ----------------------------------------------------------------


def _custom_rows(spec):
    rows = []
    for pt in spec.grid:
        cfg = pt.cfg
        if pt.phi_source == "auto":
            cfg = cfg.with_(scheme=CgfDelayed(cfg.d, numeric_phi(cfg, spec.sim).phi))
        est = evaluate(cfg, spec.sim)
        cells = dict(
            scheme=_scheme_name(cfg),
            nt=cfg.nt,
            nr=cfg.nr,
            block_len=cfg.L,
            pilot_len=cfg.lp,
            delay=cfg.d,
            snr_db=pt.snr_db,
            rho=pt.rho,
            alpha=cfg.alpha,
            alpha_source=pt.alpha_source,
            phi=cfg.phi,
            phi_source=pt.phi_source,
            beta=cfg.beta,
            mean=est.mean,
            stderr=est.stderr,
            trials=est.trials,
        )
        if spec.gap:
            cells["gap_ratio"] = gap_estimate(cfg, spec.sim)[2]
        rows.append(ResultRow(cells))
    return rows


def _scheme_name(cfg):
    return {
        "NonFeedback": "nonfeedback",
        "CgfDelayless": "cgf",
        "CgfDelayed": "cgf",
        "Ccf": "ccf",
        "Beamforming": "beamforming",
    }[type(cfg.scheme).__name__]


# --- figure presets ----------------------------------------------------------------

PHI_SYSTEMS = ((2, 2, 0.1), (2, 2, 0.2), (4, 4, 0.2), (4, 2, 0.2))
SNR_SYSTEMS = ((4, 2), (4, 4), (4, 6))  # Nt = 4 keeps L*p = 4 for all sizes
RHO_GRID = tuple(np.round(np.arange(0.0, 0.96, 0.05), 2))


def _phi_sweep(spec):
    rows = []
    for nt, nr, beta in PHI_SYSTEMS:
        for pd_db in spec.grid:
            sol = phi_star_perfect_csi(nt, nr, beta, db_to_linear(pd_db), spec.sim)
            rows.append(
                ResultRow(
                    dict(
                        nt=nt,
                        nr=nr,
                        beta=beta,
                        pd_db=float(pd_db),
                        phi_star=sol.phi_star,
                        residual=sol.residual,
                        flagged=sol.flagged,
                    )
                )
            )
    return rows


def _snr_sweep_delayless(spec, L=100, lp_opt=4):
    rows = []
    for nt, nr in SNR_SYSTEMS:
        for snr in spec.grid:
            P = db_to_linear(snr)
            alpha = alpha_star(gamma_nonfeedback(nt, P, L, L - lp_opt))
            opt = evaluate(SchemeConfig(nt, nr, L, lp_opt, P, alpha, CgfDelayless()), spec.sim)
            best_lp, best = None, None
            for lp in range(nt, L // 2 + 1):
                est = evaluate(SchemeConfig(nt, nr, L, lp, P, equal_power_alpha(L, lp), CgfDelayless()), spec.sim)
                if best is None or est.mean > best.mean:
                    best_lp, best = lp, est
            rows.append(
                ResultRow(
                    dict(
                        nt=nt,
                        nr=nr,
                        snr_db=float(snr),
                        opt_pilot_len=lp_opt,
                        opt_alpha=alpha,
                        opt_mean=opt.mean,
                        opt_stderr=opt.stderr,
                        equal_pilot_len=best_lp,
                        equal_alpha=equal_power_alpha(L, best_lp),
                        equal_mean=best.mean,
                        equal_stderr=best.stderr,
                        gain=opt.mean / best.mean - 1.0,
                    )
                )
            )
    return rows


def _snr_sweep_delayed(spec, L=100, lp=4, d=20):
    rows = []
    for nt, nr in SNR_SYSTEMS:
        for snr in spec.grid:
            P = db_to_linear(snr)
            alpha = alpha_star(gamma_nonfeedback(nt, P, L, L - lp))
            cfg = SchemeConfig(nt, nr, L, lp, P, alpha, CgfDelayed(d, d / (L - lp)))
            at_beta = evaluate(cfg, spec.sim)
            scan = numeric_phi(cfg, spec.sim)
            rows.append(
                ResultRow(
                    dict(
                        nt=nt,
                        nr=nr,
                        snr_db=float(snr),
                        pilot_len=lp,
                        delay=d,
                        alpha=alpha,
                        beta=cfg.beta,
                        mean_phi_beta=at_beta.mean,
                        stderr_phi_beta=at_beta.stderr,
                        phi_opt=scan.phi,
                        mean_phi_opt=scan.capacity,
                    )
                )
            )
    return rows


def _alpha_vs_rho(spec, nt=4, nr=4, L=20, snr=10.0):
    P = db_to_linear(snr)
    rows = []
    for rho in spec.grid:
        cov = exp_correlation(nt, rho)
        for lp in range(1, nt + 1):
            cfg = SchemeConfig(nt, nr, L, lp, P, 0.5, Ccf(cov))
            search = numeric_alpha(cfg, spec.sim)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                closed = alpha_star(gamma_ccf(L - lp, lp))
            beam = alpha_star(gamma_beamforming(float(cov.eigvalues[0]), P, L)) if lp == 1 else closed
            rows.append(
                ResultRow(
                    dict(
                        rho=float(rho),
                        pilot_len=lp,
                        alpha_numeric=search.alpha,
                        alpha_closed_form=closed,
                        alpha_beamforming=beam,
                        capacity=search.capacity,
                        reduced=ccf_pilots(cov, cfg.with_(alpha=search.alpha).pp, lp).reduced,
                        flagged=search.flagged,
                    )
                )
            )
    return rows


def _ccf_point(cov, nt, nr, L, lp, P, sim):
    alpha = alpha_star(gamma_ccf(L - lp, lp))
    cfg = SchemeConfig(nt, nr, L, lp, P, alpha, Ccf(cov))
    return cfg, evaluate(cfg, sim)


def _cap_vs_rho_2x2(spec, L=20, snr=10.0):
    P = db_to_linear(snr)
    crit = critical_rho(2, 2, L, P, 2, 1, spec.sim)
    rows = []
    for rho in spec.grid:
        cov = exp_correlation(2, rho)
        _, one = _ccf_point(cov, 2, 2, L, 1, P, spec.sim)
        cfg2, two = _ccf_point(cov, 2, 2, L, 2, P, spec.sim)
        if ccf_pilots(cov, cfg2.pp, 2).reduced:
            split_best, split = two.mean, (1.0, 0.0)
        else:
            search = best_ccf_split(cfg2, spec.sim)
            split_best, split = search.capacity, search.split
        rows.append(
            ResultRow(
                dict(
                    rho=float(rho),
                    lp1_mean=one.mean,
                    lp1_stderr=one.stderr,
                    lp2_equal_mean=two.mean,
                    lp2_equal_stderr=two.stderr,
                    lp2_best_split_mean=split_best,
                    lp2_best_split=split[0],
                    equal_loss=1.0 - two.mean / split_best,
                    best_pilot_len=2 if two.mean > one.mean else 1,
                    critical_rho=crit,
                )
            )
        )
    return rows


def _cap_vs_rho_4x4(spec, nt=4, nr=4, L=20, snr=10.0):
    P = db_to_linear(snr)
    rows = []
    for rho in spec.grid:
        cov = exp_correlation(nt, rho)
        for lp in range(1, nt + 1):
            cfg, est = _ccf_point(cov, nt, nr, L, lp, P, spec.sim)
            rows.append(
                ResultRow(
                    dict(
                        rho=float(rho),
                        pilot_len=lp,
                        alpha=cfg.alpha,
                        mean=est.mean,
                        stderr=est.stderr,
                        reduced=ccf_pilots(cov, cfg.pp, lp).reduced,
                    )
                )
            )
    return rows


FIGURES = {
    "phi-sweep": (_phi_sweep, tuple(range(-10, 31, 2))),
    "snr-sweep-delayless": (_snr_sweep_delayless, tuple(range(0, 21, 2))),
    "snr-sweep-delayed": (_snr_sweep_delayed, tuple(range(0, 21, 2))),
    "alpha-vs-rho": (_alpha_vs_rho, RHO_GRID),
    "cap-vs-rho-2x2": (_cap_vs_rho_2x2, RHO_GRID),
    "cap-vs-rho-4x4": (_cap_vs_rho_4x4, RHO_GRID),
}


def figure_spec(name, sim=SimSettings(), out=None, grid=None):
    if name not in FIGURES:
        raise ConfigError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}", field="figure")
    return ExperimentSpec(name, tuple(FIGURES[name][1] if grid is None else grid), sim, out)


def run(spec, stamp=True):
    """Rows for ``spec``, in grid order; also writes ``spec.out`` when set."""
    if spec.kind == CUSTOM:
        rows = _custom_rows(spec)
    elif spec.kind in FIGURES:
        rows = FIGURES[spec.kind][0](spec)
    else:
        raise ConfigError(f"unknown experiment kind {spec.kind!r}", field="kind")
    if spec.out:
        write_csv(spec.out, rows, stamp)
    return rows


def emit(rows, out=None, stamp=True, stream=None):
    """Write rows to ``out`` or print them."""
    if out:
        write_csv(out, rows, stamp)
    else:
        (stream or sys.stdout).write(render_csv(rows, stamp))
