import logging

from .errors import *  # noqa: F401, F403

logger = logging.getLogger(__name__)


def is_power_of_two(n):
    "True for 1, 2, 4, 8, ..."
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n):
    "Smallest power of two that is >= n (and >= 1)"
    if n <= 1:
        return 1
    return 1 << (int(n) - 1).bit_length()


def check_open_unit(name, value, *, closed_right=False):
    """Validate ``0 < value < 1`` (or ``<= 1`` with ``closed_right``)

    Raises
    ------
    DomainError
    """
    upper_ok = value <= 1 if closed_right else value < 1
    if not (value > 0 and upper_ok):
        bracket = "]" if closed_right else ")"
        raise DomainError(f"{name} must lie in (0, 1{bracket}, got {value!r}")
    return float(value)


def check_positive(name, value):
    if not value > 0:
        raise DomainError(f"{name} must be positive, got {value!r}")
    return value
