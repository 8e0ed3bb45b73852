"""Flat ``key = value`` experiment configs.

A config describes one scheme and a grid over SNR, correlation and alpha::

    scheme = ccf        # nonfeedback | cgf | ccf | beamforming
    nt = 4
    nr = 4
    block_len = 20
    pilot_len = 2
    snr_db = 0, 10, 20
    rho = 0.5
    alpha = auto

Command-line flags reuse the same keys and override the file.
"""

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Optional

from .allocopt import closed_form_alpha
from .capacity import (
    Beamforming,
    Ccf,
    CgfDelayed,
    CgfDelayless,
    NonFeedback,
    SchemeConfig,
    SimSettings,
)
from .channelmodel import exp_correlation
from .errors import ConfigError, ContractViolation

KEYS = (
    "scheme",
    "nt",
    "nr",
    "block_len",
    "pilot_len",
    "delay",
    "snr_db",
    "rho",
    "alpha",
    "phi",
    "trials",
    "seed",
    "out",
)
REQUIRED = ("scheme", "nt", "nr", "block_len", "snr_db")
SCHEMES = ("nonfeedback", "cgf", "ccf", "beamforming")
CUSTOM = "custom-sweep"


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class GridPoint:
    cfg: SchemeConfig
    snr_db: float
    rho: float
    alpha_source: str  # "fixed" or "closed-form"
    phi_source: str  # "fixed", "beta" or "auto"


@dataclass(frozen=True)
class ExperimentSpec:
    """A validated experiment: what to run, over which grid, with which seed.

    ``grid`` holds ``GridPoint`` objects for custom sweeps and plain swept
    values for the figure presets. ``base`` is the first grid point's config
    (``None`` for presets, which build their own).
    """

    kind: str
    grid: tuple
    sim: SimSettings = SimSettings()
    out: Optional[str] = None
    base: Optional[SchemeConfig] = None
    gap: bool = False

    def __post_init__(self):
        if len(self.grid) == 0:
            raise ConfigError("experiment grid is empty", field="grid")


def read_pairs(text):
    """``{key: (raw_value, line_number)}`` from config text."""
    pairs = {}
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=num)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", field=key, line=num)
        if key in pairs:
            raise ConfigError(f"duplicate key {key!r}", field=key, line=num)
        pairs[key] = (value, num)
    return pairs


class _Fields:
    """Typed access to raw pairs, raising errors that carry the source line."""

    def __init__(self, pairs):
        self.pairs = pairs

    def line(self, key):
        return self.pairs.get(key, (None, None))[1]

    def fail(self, key, message):
        return ConfigError(message, field=key, line=self.line(key))

    def raw(self, key, default=None):
        if key not in self.pairs:
            if default is None:
                raise ConfigError(f"missing required key {key!r}", field=key)
            return default
        return self.pairs[key][0]

    def _number(self, key, text, kind):
        try:
            val = kind(text)
        except ValueError:
            raise self.fail(key, f"{key} must be {'an integer' if kind is int else 'a number'}, got {text!r}") from None
        if isinstance(val, float) and not math.isfinite(val):
            raise self.fail(key, f"{key} must be finite, got {text!r}")
        return val

    def integer(self, key, default=None, low=None):
        val = self._number(key, self.raw(key, None if default is None else str(default)), int)
        if low is not None and val < low:
            raise self.fail(key, f"{key} must be at least {low}, got {val}")
        return val

    def number_list(self, key, default=None, words=()):
        text = self.raw(key, default)
        items = [t.strip() for t in text.split(",")] if text.strip() else []
        return [t if t in words else self._number(key, t, float) for t in items]


def _sim(f, workers=1):
    return SimSettings(f.integer("trials", default=10_000, low=2), f.integer("seed", default=42, low=0), workers)


def parse_sim(values, workers=1):
    """``SimSettings`` from raw ``trials``/``seed`` strings (missing keys take defaults)."""
    return _sim(_Fields({k: (str(v), None) for k, v in values.items()}), workers)


def parse_config(text, overrides=None):
    """Validated custom-sweep ``ExperimentSpec`` from config text.

    ``overrides`` maps keys to raw string values (command-line flags); they
    replace the file's values and report no line number.
    """
    pairs = read_pairs(text)
    for key, value in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", field=key)
        if value is not None:
            pairs[key] = (str(value), None)
    f = _Fields(pairs)
    for key in REQUIRED:
        f.raw(key)

    scheme = f.raw("scheme")
    if scheme not in SCHEMES:
        raise f.fail("scheme", f"scheme must be one of {', '.join(SCHEMES)}, got {scheme!r}")
    nt = f.integer("nt", low=1)
    nr = f.integer("nr", low=1)
    L = f.integer("block_len", low=2)
    lp = f.integer("pilot_len", default=1 if scheme == "beamforming" else nt, low=1)
    delay = f.integer("delay", default=0, low=0)
    sim = _sim(f)

    snrs = f.number_list("snr_db")
    rhos = f.number_list("rho", default="0")
    alphas = f.number_list("alpha", default="auto", words=("auto",))
    phis = f.number_list("phi", default="beta", words=("beta", "auto"))
    if len(phis) != 1:
        raise f.fail("phi", "phi takes a single value")
    phi = phis[0]
    for key, vals in (("snr_db", snrs), ("rho", rhos), ("alpha", alphas)):
        if not vals:
            raise f.fail(key, f"{key} list is empty")
    for rho in rhos:
        if not 0 <= rho < 1:
            raise f.fail("rho", f"rho must lie in [0, 1), got {rho}")
    if scheme == "cgf" and any(rhos):
        raise f.fail("rho", "gain feedback is modelled for i.i.d. channels only (rho = 0)")
    if scheme != "cgf" and delay:
        raise f.fail("delay", "delay applies to scheme = cgf only")
    if phi != "beta" and not (scheme == "cgf" and delay > 0):
        raise f.fail("phi", "phi applies to scheme = cgf with delay > 0")

    points = []
    for snr, rho, alpha in itertools.product(snrs, rhos, alphas):
        try:
            points.append(_point(scheme, nt, nr, L, lp, delay, snr, rho, alpha, phi))
        except ConfigError as exc:
            raise exc.at_line(f.line(exc.field)) if exc.field in pairs else exc
        except ContractViolation as exc:
            raise ConfigError(str(exc), field="rho", line=f.line("rho")) from exc
    return ExperimentSpec(CUSTOM, tuple(points), sim, pairs.get("out", (None,))[0], points[0].cfg)


def _scheme(name, nt, rho, delay, phi):
    if name == "nonfeedback":
        return NonFeedback(exp_correlation(nt, rho) if rho else None)
    if name == "ccf":
        return Ccf(exp_correlation(nt, rho))
    if name == "beamforming":
        return Beamforming(exp_correlation(nt, rho))
    return CgfDelayed(delay, phi) if delay else CgfDelayless()


def _point(scheme, nt, nr, L, lp, delay, snr, rho, alpha, phi):
    P = db_to_linear(snr)
    if not 0 < lp < L:
        raise ConfigError(f"need 1 <= pilot_len < block_len, got {lp}, {L}", field="pilot_len")
    beta = delay / (L - lp)
    # placeholder phi for "auto"; the runner replaces it with the searched value
    phi_val = beta if phi in ("beta", "auto") else phi
    s = _scheme(scheme, nt, rho, delay, phi_val)
    if alpha == "auto":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                a = closed_form_alpha(SchemeConfig(nt, nr, L, lp, P, 0.5, s))
            except ContractViolation as exc:
                raise ConfigError(f"no closed-form alpha here: {exc}", field="alpha") from exc
        source = "closed-form"
    else:
        a, source = alpha, "fixed"
    cfg = SchemeConfig(nt, nr, L, lp, P, a, s)
    phi_source = phi if isinstance(phi, str) else "fixed"
    if not delay:
        phi_source = "fixed"
    return GridPoint(cfg, float(snr), float(rho), source, phi_source)
