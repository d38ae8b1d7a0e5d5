"""Field-unit conversions. Everything inside the package is SI."""

import re

DARCY = 9.869233e-13          # m^2
BAR = 1.0e5                   # Pa
DAY = 86400.0                 # s
CENTIPOISE = 1.0e-3           # Pa s

# unit string -> (factor to SI, dimension tag)
_UNITS = {
    "m": (1.0, "length"),
    "km": (1.0e3, "length"),
    "ft": (0.3048, "length"),
    "s": (1.0, "time"),
    "day": (DAY, "time"),
    "days": (DAY, "time"),
    "d": (DAY, "time"),
    "year": (365.0 * DAY, "time"),
    "pa": (1.0, "pressure"),
    "bar": (BAR, "pressure"),
    "mpa": (1.0e6, "pressure"),
    "psi": (6894.757293168, "pressure"),
    "1/pa": (1.0, "compressibility"),
    "1/bar": (1.0 / BAR, "compressibility"),
    "pa*s": (1.0, "viscosity"),
    "pa.s": (1.0, "viscosity"),
    "cp": (CENTIPOISE, "viscosity"),
    "m2": (1.0, "permeability"),
    "m^2": (1.0, "permeability"),
    "d_perm": (DARCY, "permeability"),
    "darcy": (DARCY, "permeability"),
    "md": (1.0e-3 * DARCY, "permeability"),
    "kg/m3": (1.0, "density"),
    "kg/m^3": (1.0, "density"),
    "kg/m2/s": (1.0, "mass_flux"),
    "kg/(m2*s)": (1.0, "mass_flux"),
    "kg/day/m2": (1.0 / DAY, "mass_flux"),
    "kg/m2/day": (1.0 / DAY, "mass_flux"),
    "kg/(day*m2)": (1.0 / DAY, "mass_flux"),
    "m/s": (1.0, "velocity"),
    "m/day": (1.0 / DAY, "velocity"),
    "ppm": (1.0, "concentration"),
    "1": (1.0, "dimensionless"),
    "-": (1.0, "dimensionless"),
    "rad": (1.0, "angle"),
    "deg": (3.141592653589793 / 180.0, "angle"),
}

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(?![\d.eE])\s*(\S.*?)?\s*$")


class UnitError(ValueError):
    pass


def parse_quantity(text, expect=None):
    """Parse ``"103.4 bar"`` into SI. ``expect`` names the required dimension.

    Bare numbers are refused for dimensional inputs; a dimensionless
    quantity may be written without a unit.
    """
    if isinstance(text, bool):
        raise UnitError(f"cannot parse quantity {text!r}")
    m = _QTY.match(str(text))
    if m is None:
        raise UnitError(f"cannot parse quantity {text!r}")
    value, unit = float(m.group(1)), (m.group(2) or "").strip()
    if not unit:
        if expect == "dimensionless":
            return value
        raise UnitError(f"quantity {text!r} has no unit")
    key = unit.lower().replace(" ", "")
    # 'D' alone means Darcy; lower-case 'd' is a day
    if unit == "D":
        key = "darcy"
    if key not in _UNITS:
        raise UnitError(f"unknown unit {unit!r} in {text!r}")
    factor, dim = _UNITS[key]
    if expect is not None and dim != expect:
        raise UnitError(f"{text!r} is a {dim}, expected {expect}")
    return value * factor


def to_bar(p):
    return p / BAR


def to_day(t):
    return t / DAY


def to_darcy(k):
    return k / DARCY
