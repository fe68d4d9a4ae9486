"""NFDRS ignition component as a chain of tape primitives.

Order of evaluation: EMC -> dead fuel moistures -> live fuel moistures ->
TMPPRM -> QIGN -> SCN -> P(F/I) -> IC.  Every coefficient is looked up by
name in a coefficient mapping, which is either plain floats (from a
:class:`~pyric.params.ParameterSet`) or tape variables (from
``ParameterSet.view(tape)``).  Inputs may be scalars or arrays of lanes.

Temperatures are in degrees Fahrenheit, moistures in percent.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Var, exp, maximum, minimum, sqrt, value_of
from .params import ALPHA_PREFIX, ParameterSet
from .smoothing import SmoothBranchParams, smooth_branch

MODES = ("smooth", "hard")

VEGETATION_STAGES = {"cured": 1, "pre-green": 2, "green": 3, "transition": 4}
FUEL_MODELS = {"A": 1, "C": 2, "G": 3, "L": 4, "T": 5, "U": 6}
CLIMATE_ZONES = {"A": 1, "B": 2, "C": 3, "D": 4, "E": 5}
VEGETATION_COVER = {"sparse": 1, "grass": 2, "shrub": 3, "forest": 4}
SLOPE_CLASSES = (1, 2, 3, 4, 5)

SPINUP_DAYS = 30
BOUNDARY_WINDOW = 7  # days averaged into the 1000-h boundary

_STAGE_KEYS = {1: "cured", 2: "pregreen", 3: "green", 4: "transition"}


@dataclass
class CellInputs:
    """Weather and site inputs for one cell-day (or for many lanes at once).

    Categorical fields hold integer codes; :meth:`create` also accepts the
    names in ``VEGETATION_STAGES``, ``FUEL_MODELS`` and so on.
    """

    temp: object
    temp_max: object
    temp_min: object
    rh: object
    rh_max: object
    rh_min: object
    wind_speed: object
    cloud_cover: object
    precip_duration: object
    annual_precip_mean: object
    vegetation_stage: object
    vegetation_cover: object
    slope_class: object
    fuel_model: object
    climate_zone: object

    @classmethod
    def create(cls, **kw) -> "CellInputs":
        for name, table in (("vegetation_stage", VEGETATION_STAGES), ("fuel_model", FUEL_MODELS),
                            ("climate_zone", CLIMATE_ZONES), ("vegetation_cover", VEGETATION_COVER)):
            v = kw.get(name)
            if isinstance(v, str):
                if v not in table:
                    raise ValueError(f"{name}: unknown class {v!r}")
                kw[name] = table[v]
        obj = cls(**kw)
        obj.validate()
        return obj

    def validate(self) -> None:
        """Raise ValueError naming the first field that breaks an invariant."""
        def arr(name):
            return np.asarray(getattr(self, name), dtype=np.float64)

        for f in fields(self):
            if not np.all(np.isfinite(arr(f.name))):
                raise ValueError(f"{f.name}: non-finite value")
        checks = [
            ("temp_min", np.all(arr("temp_min") <= arr("temp")), "temp_min must not exceed temp"),
            ("temp_max", np.all(arr("temp") <= arr("temp_max")), "temp must not exceed temp_max"),
            ("rh_min", np.all(arr("rh_min") <= arr("rh")), "rh_min must not exceed rh"),
            ("rh_max", np.all(arr("rh") <= arr("rh_max")), "rh must not exceed rh_max"),
        ]
        for name in ("rh", "rh_max", "rh_min"):
            a = arr(name)
            checks.append((name, np.all((a >= 0) & (a <= 100)), "must lie in [0, 100]"))
        cc = arr("cloud_cover")
        checks.append(("cloud_cover", np.all((cc >= 0) & (cc <= 1)), "must lie in [0, 1]"))
        pd = arr("precip_duration")
        checks.append(("precip_duration", np.all((pd >= 0) & (pd <= 24)), "must lie in [0, 24]"))
        checks.append(("wind_speed", np.all(arr("wind_speed") >= 0), "must be non-negative"))
        checks.append(("annual_precip_mean", np.all(arr("annual_precip_mean") >= 0), "must be non-negative"))
        for name, codes in (("vegetation_stage", VEGETATION_STAGES.values()),
                            ("slope_class", SLOPE_CLASSES),
                            ("fuel_model", FUEL_MODELS.values()),
                            ("climate_zone", CLIMATE_ZONES.values()),
                            ("vegetation_cover", VEGETATION_COVER.values())):
            checks.append((name, np.all(np.isin(arr(name), list(codes))), f"must be one of {sorted(codes)}"))
        for name, ok, msg in checks:
            if not ok:
                raise ValueError(f"{name}: {msg}")

    def take(self, index) -> "CellInputs":
        return CellInputs(**{f.name: np.asarray(getattr(self, f.name))[index] for f in fields(self)})


@dataclass
class MoistureCarry:
    """Day-to-day state of the slow dead-fuel classes.

    ``history`` holds up to six previous 1000-h boundary values, oldest first.
    """

    prev_mc100: object
    prev_mc1000: object
    history: tuple = ()

    def take(self, index) -> "MoistureCarry":
        return MoistureCarry(np.asarray(self.prev_mc100)[index], np.asarray(self.prev_mc1000)[index],
                             tuple(np.asarray(h)[index] for h in self.history))


@dataclass
class IntermediateState:
    emc: object
    mc1: object
    mc10: object
    mc100: object
    mc1000: object
    live_herb_mc: object
    live_woody_mc: object
    tmpprm: object
    qign: object
    scn: object
    p_fi: object
    ic: object
    ignition_ratio: object = None  # ((chi_base - QIGN)/chi_scale)^3.6 * PNORM3
    ignition_prob: object = None  # 0..100 before the P(F/I) factor

    def numeric(self) -> "IntermediateState":
        return IntermediateState(**{f.name: value_of(getattr(self, f.name)) for f in fields(self)})


class _Chain:
    """Coefficient lookup plus branch evaluation for one pass."""

    def __init__(self, params, mode: str, trace: list | None = None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.c = params.values() if isinstance(params, ParameterSet) else params
        self.hard = mode == "hard"
        self.trace = trace

    def __getitem__(self, name):
        return self.c[name]

    def branch(self, site: str, x, a, y, z):
        alpha = exp(self.c[ALPHA_PREFIX + site])
        if self.trace is not None:
            self.trace.append((site, np.asarray(value_of(x) - value_of(a)), float(value_of(alpha))))
        return smooth_branch(x, a, y, z, SmoothBranchParams(alpha, self.hard))

    def floor(self, name: str, x, c: float):
        if self.trace is not None:
            self.trace.append((name, np.asarray(value_of(x)) - c, None))
        return maximum(x, c)

    def cap(self, name: str, x, c: float):
        if self.trace is not None:
            self.trace.append((name, np.asarray(value_of(x)) - c, None))
        return minimum(x, c)

    def pick(self, field_name: str, codes, prefix: str, keys: Mapping[int, str] | None = None, suffix=""):
        """Select a coefficient row by categorical code (exact, not smoothed)."""
        keys = keys or {}
        if np.ndim(codes) == 0:
            code = int(codes)
            name = f"{prefix}{keys.get(code, code)}{suffix}"
            if name not in self.c:
                raise ValueError(f"{field_name}: unknown class {code!r}")
            return self.c[name]
        codes = np.asarray(codes)
        out = None
        for code in np.unique(codes):
            name = f"{prefix}{keys.get(int(code), int(code))}{suffix}"
            if name not in self.c:
                raise ValueError(f"{field_name}: unknown class {code!r}")
            term = self.c[name] * (codes == code).astype(np.float64)
            out = term if out is None else out + term
        return out


_FUEL_KEYS = {v: k for k, v in FUEL_MODELS.items()}


# --- equilibrium moisture -------------------------------------------------

def _emc(ch: _Chain, temp, rh):
    dry = ch["emc.dry.c0"] + ch["emc.dry.c1"] * rh - ch["emc.dry.c2"] * temp * rh
    mid = ch["emc.mid.c0"] + ch["emc.mid.c1"] * rh - ch["emc.mid.c2"] * temp
    rh_sq = np.power(rh, ch["emc.wet.rh_exponent"])
    wet = ch["emc.wet.c0"] + ch["emc.wet.c1"] * rh_sq - ch["emc.wet.c2"] * rh * temp - ch["emc.wet.c3"] * rh
    upper = ch.branch("emc_high", rh, ch["emc.rh_high"], mid, wet)
    emc = ch.branch("emc_low", rh, ch["emc.rh_low"], dry, upper)
    return ch.floor("emc_floor", emc, 0.0)


def compute_emc(inputs: CellInputs, params, mode: str = "smooth", *, _chain=None):
    """Equilibrium moisture content (percent) from air temperature and RH."""
    ch = _chain or _Chain(params, mode)
    return _emc(ch, np.asarray(inputs.temp, dtype=np.float64), np.asarray(inputs.rh, dtype=np.float64))


# --- dead fuels -------------------------------------------------------------

def _slow_boundaries(ch: _Chain, inputs: CellInputs):
    """Daily boundary moistures for the 100-h and 1000-h classes."""
    emc_min = _emc(ch, np.asarray(inputs.temp_max, dtype=np.float64), np.asarray(inputs.rh_min, dtype=np.float64))
    emc_max = _emc(ch, np.asarray(inputs.temp_min, dtype=np.float64), np.asarray(inputs.rh_max, dtype=np.float64))
    day = ch["dead.daylight_hours"]
    emcbar = (day * emc_min + (24.0 - day) * emc_max) / 24.0
    pdur = np.asarray(inputs.precip_duration, dtype=np.float64)
    dry_hours = 24.0 - pdur
    b100 = (dry_hours * emcbar + pdur * (ch["dead.mc100_rain_slope"] * pdur + ch["dead.mc100_rain_base"])) / 24.0
    b1000 = (dry_hours * emcbar + pdur * (ch["dead.mc1000_rain_slope"] * pdur + ch["dead.mc1000_rain_base"])) / 24.0
    return b100, b1000


def _relax(ch: _Chain, carry: MoistureCarry, b100, b1000):
    mc100 = carry.prev_mc100 + (b100 - carry.prev_mc100) * ch["dead.mc100_response"]
    window = tuple(carry.history)[-(BOUNDARY_WINDOW - 1):]
    total = b1000
    for h in window:
        total = total + h
    mc1000 = carry.prev_mc1000 + (total / float(len(window) + 1) - carry.prev_mc1000) * ch["dead.mc1000_response"]
    return mc100, mc1000, window


def compute_dead_fuel_moistures(inputs: CellInputs, carry: MoistureCarry, emc, params,
                                mode: str = "smooth", *, _chain=None):
    """1-, 10-, 100- and 1000-hour dead fuel moistures and tomorrow's carry.

    The fast classes respond to today's EMC, wetted toward saturation by
    precipitation duration.  The slow classes relax toward a daily boundary
    value; the carry is returned as plain numbers (no gradient through days).
    """
    ch = _chain or _Chain(params, mode)
    pdur = np.asarray(inputs.precip_duration, dtype=np.float64)
    sat = ch["dead.rain_saturation"]
    dry1 = ch["dead.mc1_factor"] * emc
    dry10 = ch["dead.mc10_factor"] * emc
    mc1 = dry1 + (sat - dry1) * (1.0 - exp(-ch["dead.mc1_rain_rate"] * pdur))
    mc10 = dry10 + (sat - dry10) * (1.0 - exp(-ch["dead.mc10_rain_rate"] * pdur))
    mc1 = ch.floor("mc1_floor", mc1, 0.0)
    mc10 = ch.floor("mc10_floor", mc10, 0.0)
    b100, b1000 = _slow_boundaries(ch, inputs)
    mc100, mc1000, window = _relax(ch, carry, b100, b1000)
    mc100 = ch.floor("mc100_floor", mc100, 0.0)
    mc1000 = ch.floor("mc1000_floor", mc1000, 0.0)
    new_carry = MoistureCarry(value_of(mc100), value_of(mc1000), window + (value_of(b1000),))
    new_carry.history = new_carry.history[-(BOUNDARY_WINDOW - 1):]
    return mc1, mc10, mc100, mc1000, new_carry


def climatology_carry(annual_precip_mean, params) -> MoistureCarry:
    """Starting moisture for the slow classes from mean annual precipitation."""
    c = params.values() if isinstance(params, ParameterSet) else {k: value_of(v) for k, v in params.items()}
    p = np.asarray(annual_precip_mean, dtype=np.float64)
    start = np.clip(c["carry.init_base"] + c["carry.init_per_inch"] * p, 5.0, 35.0)
    start = np.float64(start) if np.ndim(start) == 0 else start
    return MoistureCarry(start, start, ())


def initial_carry(days: Sequence[CellInputs], params, mode: str = "hard",
                  spinup_days: int = SPINUP_DAYS) -> MoistureCarry:
    """Spin the slow classes up over the first ``spinup_days`` days.

    Starts from :func:`climatology_carry` and iterates the daily relaxation;
    the result is the carry to use before day 0.
    """
    if not days:
        raise ValueError("spin-up needs at least one day of inputs")
    ch = _Chain(params, mode)
    ch.c = {k: value_of(v) for k, v in ch.c.items()}
    carry = climatology_carry(days[0].annual_precip_mean, ch.c)
    for d in days[:spinup_days]:
        b100, b1000 = _slow_boundaries(ch, d)
        mc100, mc1000, window = _relax(ch, carry, b100, b1000)
        carry = MoistureCarry(np.maximum(mc100, 0.0), np.maximum(mc1000, 0.0),
                              (window + (b1000,))[-(BOUNDARY_WINDOW - 1):])
    return carry


# --- live fuels ---------------------------------------------------------------

def compute_live_fuel_moistures(inputs: CellInputs, params, mode: str = "smooth", *, _chain=None):
    """Herbaceous and woody live fuel moisture (percent).

    The vegetation stage selects the row exactly.  Herbaceous moisture of the
    cured stage is the floor the other stages build on.
    """
    ch = _chain or _Chain(params, mode)
    stage = inputs.vegetation_stage
    cured = ch["live.herb.cured"]
    rows = {1: cured}
    for code in (2, 3, 4):
        rows[code] = cured + ch.floor(f"herb_excess_{code}", ch[f"live.herb.{_STAGE_KEYS[code]}_excess"], 0.0)
    herb_base = _pick_rows(ch, "vegetation_stage", stage, rows)
    woody_base = ch.pick("vegetation_stage", stage, "live.woody.", _STAGE_KEYS)
    zone = ch.pick("climate_zone", inputs.climate_zone, "live.woody_zone.")
    p = np.asarray(inputs.annual_precip_mean, dtype=np.float64)
    wetness = ch.floor("live_wetness", 1.0 + ch["live.precip_coeff"] * (p - ch["live.precip_ref"]), 0.5)
    herb = ch.floor("herb_floor", herb_base, 0.0) * wetness
    woody = ch.floor("woody_floor", woody_base * zone, 0.0) * wetness
    return herb, woody


def _pick_rows(ch: _Chain, field_name, codes, rows: Mapping[int, object]):
    if np.ndim(codes) == 0:
        code = int(codes)
        if code not in rows:
            raise ValueError(f"{field_name}: unknown class {code!r}")
        return rows[code]
    codes = np.asarray(codes)
    out = None
    for code in np.unique(codes):
        if int(code) not in rows:
            raise ValueError(f"{field_name}: unknown class {code!r}")
        term = rows[int(code)] * (codes == code).astype(np.float64)
        out = term if out is None else out + term
    return out


# --- fuel temperature and heat of ignition -----------------------------------

def compute_tmpprm(inputs: CellInputs, params, mode: str = "smooth", *, _chain=None):
    """Fuel-atmosphere interface temperature: air temperature plus solar heating.

    The increment is a four-row table on cloud cover percent (clear,
    scattered, broken, overcast).
    """
    ch = _chain or _Chain(params, mode)
    cc = 100.0 * np.asarray(inputs.cloud_cover, dtype=np.float64)
    inc = ch.branch("cloud_broken", cc, ch["tmpprm.cloud_broken"], ch["tmpprm.inc_broken"], ch["tmpprm.inc_overcast"])
    inc = ch.branch("cloud_scattered", cc, ch["tmpprm.cloud_scattered"], ch["tmpprm.inc_scattered"], inc)
    inc = ch.branch("cloud_clear", cc, ch["tmpprm.cloud_clear"], ch["tmpprm.inc_clear"], inc)
    return np.asarray(inputs.temp, dtype=np.float64) + inc


def compute_qign(tmpprm, mc1, params):
    """Heat of ignition.

    QIGN = c0 - c1*T - c2*T**2 - c3*T*MC1 + c4*(1 - exp(-c5*MC1)) + c6*MC1,
    with T = TMPPRM.  The square uses a fixed exponent, so TMPPRM may be
    negative.
    """
    c = params.values() if isinstance(params, ParameterSet) else params
    t_sq = _pow(tmpprm, c["qign.tmpprm_exponent"])
    return (c["qign.c0"] - c["qign.c1"] * tmpprm - c["qign.c2"] * t_sq - c["qign.c3"] * tmpprm * mc1
            + c["qign.c4"] * (1.0 - exp(-c["qign.c5"] * mc1)) + c["qign.c6"] * mc1)


# --- spread -------------------------------------------------------------------

def _damping(ch: _Chain, ratio):
    p2, p3 = ch["spread.damp.p2"], ch["spread.damp.p3"]
    return 1.0 - ch["spread.damp.c1"] * ratio + ch["spread.damp.c2"] * _pow(ratio, p2) - ch["spread.damp.c3"] * _pow(ratio, p3)


def _pow(x, p):
    return x ** p if isinstance(x, Var) else np.power(x, p)


def compute_scn(intermediates: IntermediateState, inputs: CellInputs, params, mode: str = "smooth", *, _chain=None):
    """Normalized rate of spread in [0, 1].

    Dead and live moisture damping (cubic in moisture/extinction ratio) scale
    the fuel loading; wind and slope multiply; the heat sink grows with dead
    fuel moisture.  The result is divided by the fuel model's spread maximum
    and clamped.
    """
    ch = _chain or _Chain(params, mode)
    fm = inputs.fuel_model

    def fuel(field):
        return ch.pick("fuel_model", fm, "fuel.", _FUEL_KEYS, f".{field}")

    w1, w10, w100 = fuel("w1"), fuel("w10"), fuel("w100")
    cover = ch.pick("vegetation_cover", inputs.vegetation_cover, "veg.herb_factor.")
    wherb = fuel("wherb") * cover
    wwood = fuel("wwood")
    mxd, mxl = fuel("mxd"), fuel("mxl")

    i = intermediates
    wdead = w1 + w10 + w100
    mf_dead = (w1 * i.mc1 + w10 * i.mc10 + w100 * i.mc100) / wdead

    def damped(site, moisture, extinction):
        ratio = ch.floor(f"{site}_ratio", moisture / extinction, 0.0)
        ratio = ch.branch(site, ratio, 1.0, ratio, 1.0)
        return ch.floor(f"{site}_damping", _damping(ch, ratio), 0.0)

    eta_dead = damped("dead_extinction", mf_dead, mxd)
    eta_herb = damped("herb_extinction", i.live_herb_mc, mxl)
    eta_wood = damped("wood_extinction", i.live_woody_mc, mxl)

    wind = np.asarray(inputs.wind_speed, dtype=np.float64)
    phi_wind = ch["spread.wind_coef"] * np.power(wind, ch["spread.wind_exponent"])
    phi_slope = ch.pick("slope_class", inputs.slope_class, "slope.phi.")
    heat_sink = ch["spread.qig_base"] + ch["spread.qig_slope"] * mf_dead / 100.0
    reaction = ch["spread.react_coef"] * (wdead * eta_dead + wherb * eta_herb + wwood * eta_wood)
    sc = reaction * (1.0 + phi_wind + phi_slope) / heat_sink
    scn = sc / fuel("scm")
    scn = ch.branch("scn_cap", scn, 1.0, scn, 1.0)
    return ch.cap("scn_cap_guard", ch.floor("scn_floor", scn, 0.0), 1.0)


def compute_pfi(scn):
    """Probability of a reportable fire, sqrt(SCN)."""
    if not isinstance(scn, Var) and np.any(np.asarray(scn) < 0):
        raise ValueError("scn must be non-negative")
    return sqrt(scn)


def compute_ic(qign, p_fi, params, mode: str = "smooth", branch: SmoothBranchParams | None = None, *,
               _chain=None, _detail: dict | None = None):
    """Ignition component on a 0-100 scale.

    IC is zero when ((chi_base - QIGN)/chi_scale)**3.6 * PNORM3 <= PNORM1;
    otherwise IC = P(I) * P(F/I) with
    P(I) = (ratio - PNORM1) * 100 / PNORM2 clamped to [0, 100].
    ``branch`` overrides the sharpness of the zero branch.
    """
    ch = _chain or _Chain(params, mode)
    chi = (ch["ic.chi_base"] - qign) / ch["ic.chi_scale"]
    chi = ch.branch("chi_floor", chi, 0.0, 0.0, chi)
    chi = ch.floor("chi_floor_guard", chi, 0.0)
    ratio = _pow(chi, ch["ic.chi_exponent"]) * ch["ic.pnorm3"]
    p_ign = (ratio - ch["ic.pnorm1"]) * 100.0 / ch["ic.pnorm2"]
    p_ign = ch.branch("pi_floor", p_ign, 0.0, 0.0, p_ign)
    p_ign = ch.branch("pi_cap", p_ign, 100.0, p_ign, 100.0)
    p_ign = ch.cap("pi_cap_guard", ch.floor("pi_floor_guard", p_ign, 0.0), 100.0)
    ic_raw = p_ign * p_fi
    if branch is not None:
        ic = smooth_branch(ch["ic.pnorm1"], ratio, ic_raw, 0.0, branch)
    else:
        # zero side owns the tie: pnorm1 >= ratio -> 0
        ic = ch.branch("ic_zero", ch["ic.pnorm1"], ratio, ic_raw, 0.0)
    ic = ch.cap("ic_cap_guard", ch.floor("ic_floor_guard", ic, 0.0), 100.0)
    if _detail is not None:
        _detail["ratio"], _detail["p_ign"] = ratio, p_ign
    return ic


def forward(inputs: CellInputs, carry: MoistureCarry, params, mode: str = "smooth", *,
            tape=None, trace: list | None = None, validate: bool = True):
    """Run the full chain for one cell-day (or a batch of independent lanes).

    ``params`` is a ParameterSet or a coefficient mapping.  Passing a tape
    (smooth or hard mode) records the pass: unfrozen parameters become tape
    variables and the returned state holds tape nodes.
    Returns ``(IntermediateState, new_carry)``.
    """
    if validate:
        inputs.validate()
    if tape is not None and isinstance(params, ParameterSet):
        params, _ = params.view(tape)
    ch = _Chain(params, mode, trace)
    emc = compute_emc(inputs, None, _chain=ch)
    mc1, mc10, mc100, mc1000, new_carry = compute_dead_fuel_moistures(inputs, carry, emc, None, _chain=ch)
    herb, woody = compute_live_fuel_moistures(inputs, None, _chain=ch)
    tmpprm = compute_tmpprm(inputs, None, _chain=ch)
    qign = compute_qign(tmpprm, mc1, ch.c)
    partial = IntermediateState(emc, mc1, mc10, mc100, mc1000, herb, woody, tmpprm, qign, None, None, None)
    scn = compute_scn(partial, inputs, None, _chain=ch)
    p_fi = compute_pfi(scn)
    detail: dict = {}
    ic = compute_ic(qign, p_fi, None, _chain=ch, _detail=detail)
    state = IntermediateState(emc, mc1, mc10, mc100, mc1000, herb, woody, tmpprm, qign, scn, p_fi, ic,
                              detail["ratio"], detail["p_ign"])
    return state, new_carry


@dataclass
class SeriesResult:
    """Daily chain output for lanes of cells: arrays shaped (days, lanes)."""

    state: IntermediateState
    prev_mc100: np.ndarray
    prev_mc1000: np.ndarray
    history: np.ndarray  # (window, days, lanes)

    def carry_at(self, index) -> MoistureCarry:
        return MoistureCarry(self.prev_mc100[index], self.prev_mc1000[index],
                             tuple(h[index] for h in self.history))


def simulate(inputs: CellInputs, params, mode: str = "hard", valid=None,
             spinup_days: int = SPINUP_DAYS) -> SeriesResult:
    """Run the chain over consecutive days.

    ``inputs`` fields are arrays shaped (days, lanes).  Only the slow
    moisture recursion is sequential; everything else is evaluated for all
    cell-days at once.  Lanes flagged invalid keep their carry unchanged for
    that day.
    """
    ch = _Chain(params, mode)
    ch.c = {k: value_of(v) for k, v in ch.c.items()}
    b100, b1000 = _slow_boundaries(ch, inputs)
    n_days = b100.shape[0]
    if valid is None:
        valid = np.ones(b100.shape, dtype=bool)

    carry = climatology_carry(np.asarray(inputs.annual_precip_mean, dtype=np.float64)[0], ch.c)
    for t in range(min(spinup_days, n_days)):
        carry = _step(ch, carry, b100[t], b1000[t], valid[t])

    prev100 = np.empty_like(b100)
    prev1000 = np.empty_like(b100)
    hist_len = len(carry.history)
    history = np.empty((hist_len,) + b100.shape)
    for t in range(n_days):
        prev100[t], prev1000[t] = carry.prev_mc100, carry.prev_mc1000
        for k, h in enumerate(carry.history):
            history[k, t] = h
        carry = _step(ch, carry, b100[t], b1000[t], valid[t])
        if len(carry.history) != hist_len:
            raise ValueError("series too short for the boundary window")

    day_carry = MoistureCarry(prev100, prev1000, tuple(history))
    state, _ = forward(inputs, day_carry, ch.c, mode, validate=False)
    return SeriesResult(state.numeric(), prev100, prev1000, history)


def _step(ch: _Chain, carry: MoistureCarry, b100, b1000, valid) -> MoistureCarry:
    mc100, mc1000, window = _relax(ch, carry, b100, b1000)
    mc100, mc1000 = np.maximum(mc100, 0.0), np.maximum(mc1000, 0.0)
    new_hist = (window + (b1000,))[-(BOUNDARY_WINDOW - 1):]
    if len(new_hist) == len(carry.history):
        new_hist = tuple(np.where(valid, n, o) for n, o in zip(new_hist, carry.history))
    return MoistureCarry(np.where(valid, mc100, carry.prev_mc100),
                         np.where(valid, mc1000, carry.prev_mc1000), new_hist)
