import math

import numpy as np
import pytest

from pfadvantage.units import convert_unit, get_unit_registry, per_unit, radians_to_degrees


def test_registry_is_shared():
    assert get_unit_registry() is get_unit_registry()


@pytest.mark.parametrize(
    "power, base, expected",
    [(100.0, 100.0, 1.0), (-50.0, 100.0, -0.5), (0.0, 250.0, 0.0), (1500.0, 1000.0, 1.5)],
)
def test_per_unit(power, base, expected):
    assert per_unit(power, base) == pytest.approx(expected)


def test_per_unit_array():
    np.testing.assert_allclose(per_unit([10.0, 20.0], 100.0), [0.1, 0.2])


def test_convert_unit():
    assert convert_unit(1.0, "MW", "kW") == pytest.approx(1000.0)
    assert convert_unit(math.pi, "radian", "degree") == pytest.approx(180.0)


def test_radians_to_degrees_array():
    np.testing.assert_allclose(radians_to_degrees([0.0, math.pi / 2, -math.pi]), [0.0, 90.0, -180.0])
