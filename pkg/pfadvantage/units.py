import numpy as np
import pint

_global_unit_registry = None


def get_unit_registry():
    """Return the shared ``pint.UnitRegistry``, creating it on first use."""
    global _global_unit_registry
    if _global_unit_registry is None:
        # Instantiating the registry is heavy; do it once.
        _global_unit_registry = pint.UnitRegistry()
    return _global_unit_registry


def convert_unit(value, from_units: str, to_units: str):
    """
    Convert ``value`` from ``from_units`` to ``to_units`` using ``pint``.

    Parameters
    ----------
    value : float or array_like
        The starting value(s) for the conversion.
    from_units : str
        The starting unit of the provided value.
    to_units : str
        The desired unit to convert the value to.

    Returns
    -------
    new_value : float or numpy.ndarray
        The starting value, but converted to the new unit.
    """
    registry = get_unit_registry()
    expr = registry.parse_expression(from_units)
    if not np.isscalar(value):
        value = np.asarray(value, dtype=float)
    return (value * expr).to(to_units).magnitude


def per_unit(power_mw, base_mva):
    """
    Express real power in MW as per-unit on a ``base_mva`` system base.

    Parameters
    ----------
    power_mw : float or array_like
    base_mva : float
        System base in MVA; must be positive.

    Returns
    -------
    float or numpy.ndarray
    """
    registry = get_unit_registry()
    power = registry.Quantity(np.asarray(power_mw, dtype=float), "MW")
    base = registry.Quantity(float(base_mva), "MVA")
    return (power / base).to("dimensionless").magnitude


def radians_to_degrees(angles):
    return convert_unit(angles, "radian", "degree")
