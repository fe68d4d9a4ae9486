"""Branch-literal hard-mode IC for one cell-day, written with ``math`` only.

Independent of the package's chain: every threshold is an explicit if/else,
every value a Python float.  Coefficients come from a plain name -> float
mapping (``ParameterSet.values()``).
"""
import math

FUEL_LETTERS = {1: "A", 2: "C", 3: "G", 4: "L", 5: "T", 6: "U"}
STAGE_NAMES = {1: "cured", 2: "pregreen", 3: "green", 4: "transition"}


def emc(temp, rh, c):
    if rh < c["emc.rh_low"]:
        e = c["emc.dry.c0"] + c["emc.dry.c1"] * rh - c["emc.dry.c2"] * temp * rh
    elif rh < c["emc.rh_high"]:
        e = c["emc.mid.c0"] + c["emc.mid.c1"] * rh - c["emc.mid.c2"] * temp
    else:
        e = (c["emc.wet.c0"] + c["emc.wet.c1"] * rh ** c["emc.wet.rh_exponent"]
             - c["emc.wet.c2"] * rh * temp - c["emc.wet.c3"] * rh)
    return e if e > 0.0 else 0.0


def fast_moisture(factor, rate, e, pdur, c):
    dry = factor * e
    wet = c["dead.rain_saturation"]
    m = dry + (wet - dry) * (1.0 - math.exp(-rate * pdur))
    return m if m > 0.0 else 0.0


def boundaries(x, c):
    e_lo = emc(x["temp_max"], x["rh_min"], c)
    e_hi = emc(x["temp_min"], x["rh_max"], c)
    day = c["dead.daylight_hours"]
    mean = (day * e_lo + (24.0 - day) * e_hi) / 24.0
    p = x["precip_duration"]
    b100 = ((24.0 - p) * mean + p * (c["dead.mc100_rain_base"] + c["dead.mc100_rain_slope"] * p)) / 24.0
    b1000 = ((24.0 - p) * mean + p * (c["dead.mc1000_rain_base"] + c["dead.mc1000_rain_slope"] * p)) / 24.0
    return b100, b1000


def slow_moisture(x, prev100, prev1000, history, c):
    b100, b1000 = boundaries(x, c)
    window = list(history)[-6:] + [b1000]
    mean1000 = sum(window) / len(window)
    m100 = prev100 + c["dead.mc100_response"] * (b100 - prev100)
    m1000 = prev1000 + c["dead.mc1000_response"] * (mean1000 - prev1000)
    return max(m100, 0.0), max(m1000, 0.0)


def live(x, c):
    stage = int(x["vegetation_stage"])
    herb = c["live.herb.cured"]
    if stage != 1:
        extra = c[f"live.herb.{STAGE_NAMES[stage]}_excess"]
        herb += extra if extra > 0.0 else 0.0
    woody = c[f"live.woody.{STAGE_NAMES[stage]}"] * c[f"live.woody_zone.{int(x['climate_zone'])}"]
    wet = 1.0 + c["live.precip_coeff"] * (x["annual_precip_mean"] - c["live.precip_ref"])
    if wet < 0.5:
        wet = 0.5
    return max(herb, 0.0) * wet, max(woody, 0.0) * wet


def tmpprm(x, c):
    cc = 100.0 * x["cloud_cover"]
    if cc < c["tmpprm.cloud_clear"]:
        inc = c["tmpprm.inc_clear"]
    elif cc < c["tmpprm.cloud_scattered"]:
        inc = c["tmpprm.inc_scattered"]
    elif cc < c["tmpprm.cloud_broken"]:
        inc = c["tmpprm.inc_broken"]
    else:
        inc = c["tmpprm.inc_overcast"]
    return x["temp"] + inc


def qign(t, m1, c):
    return (c["qign.c0"] - c["qign.c1"] * t - c["qign.c2"] * t * t - c["qign.c3"] * t * m1
            + c["qign.c4"] * (1.0 - math.exp(-c["qign.c5"] * m1)) + c["qign.c6"] * m1)


def damping(m, ext, c):
    r = m / ext
    if r < 0.0:
        r = 0.0
    if r >= 1.0:
        r = 1.0
    eta = (1.0 - c["spread.damp.c1"] * r + c["spread.damp.c2"] * r ** c["spread.damp.p2"]
           - c["spread.damp.c3"] * r ** c["spread.damp.p3"])
    return eta if eta > 0.0 else 0.0


def scn(x, m1, m10, m100, herb_mc, woody_mc, c):
    f = f"fuel.{FUEL_LETTERS[int(x['fuel_model'])]}."
    w1, w10, w100 = c[f + "w1"], c[f + "w10"], c[f + "w100"]
    wherb = c[f + "wherb"] * c[f"veg.herb_factor.{int(x['vegetation_cover'])}"]
    wwood = c[f + "wwood"]
    wdead = w1 + w10 + w100
    mdead = (w1 * m1 + w10 * m10 + w100 * m100) / wdead
    reaction = c["spread.react_coef"] * (wdead * damping(mdead, c[f + "mxd"], c)
                                         + wherb * damping(herb_mc, c[f + "mxl"], c)
                                         + wwood * damping(woody_mc, c[f + "mxl"], c))
    phi_w = c["spread.wind_coef"] * x["wind_speed"] ** c["spread.wind_exponent"]
    phi_s = c[f"slope.phi.{int(x['slope_class'])}"]
    sink = c["spread.qig_base"] + c["spread.qig_slope"] * mdead / 100.0
    s = reaction * (1.0 + phi_w + phi_s) / sink / c[f + "scm"]
    if s >= 1.0:
        return 1.0
    return s if s > 0.0 else 0.0


def ignition_component(q, s, c):
    chi = (c["ic.chi_base"] - q) / c["ic.chi_scale"]
    if chi < 0.0:
        chi = 0.0
    ratio = chi ** c["ic.chi_exponent"] * c["ic.pnorm3"]
    if ratio <= c["ic.pnorm1"]:
        return 0.0
    p = (ratio - c["ic.pnorm1"]) * 100.0 / c["ic.pnorm2"]
    if p >= 100.0:
        p = 100.0
    if p < 0.0:
        p = 0.0
    ic = p * math.sqrt(s)
    return min(max(ic, 0.0), 100.0)


def reference_ic(x: dict, prev100: float, prev1000: float, history, c: dict) -> dict:
    e = emc(x["temp"], x["rh"], c)
    m1 = fast_moisture(c["dead.mc1_factor"], c["dead.mc1_rain_rate"], e, x["precip_duration"], c)
    m10 = fast_moisture(c["dead.mc10_factor"], c["dead.mc10_rain_rate"], e, x["precip_duration"], c)
    m100, m1000 = slow_moisture(x, prev100, prev1000, history, c)
    herb, woody = live(x, c)
    t = tmpprm(x, c)
    q = qign(t, m1, c)
    s = scn(x, m1, m10, m100, herb, woody, c)
    return {"emc": e, "mc1": m1, "mc10": m10, "mc100": m100, "mc1000": m1000, "live_herb_mc": herb,
            "live_woody_mc": woody, "tmpprm": t, "qign": q, "scn": s, "ic": ignition_component(q, s, c)}
