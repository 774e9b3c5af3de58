import math
import re

# Quantity strings as they appear in device files, e.g. "5.627 GHz" or "-123 kHz".
FREQ_REGEX = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(GHz|MHz|kHz|Hz)\s*$")

# Ordinary frequency scale of each unit, expressed in MHz.
UNIT_SCALE_MHZ = {"GHz": 1e3, "MHz": 1.0, "kHz": 1e-3, "Hz": 1e-6}

TWO_PI = 2.0 * math.pi


def parse_frequency(text: str, unit: str) -> float:
    """
    Parse a unit-suffixed frequency string and express it in ``unit``.

    Args:
        text: Quantity such as "5.627 GHz"
        unit: Target unit, one of GHz, MHz, kHz, Hz

    Returns:
        The ordinary frequency as a float in the target unit

    Raises:
        ValueError: If the string has no recognised unit suffix
    """
    match = FREQ_REGEX.match(text)
    if not match:
        raise ValueError(f"expected a number with a GHz/MHz/kHz/Hz suffix, got {text!r}")
    value, source = match.groups()
    return float(value) * UNIT_SCALE_MHZ[source] / UNIT_SCALE_MHZ[unit]


def format_frequency(value: float, unit: str) -> str:
    """Render a frequency the way device files store it."""
    return f"{value:.12g} {unit}"


def mhz_to_rad(value_mhz):
    """Ordinary MHz to angular rad/µs; works on floats and arrays."""
    return TWO_PI * value_mhz


def ghz_to_rad(value_ghz):
    return TWO_PI * 1e3 * value_ghz


def rad_to_mhz(value_rad):
    return value_rad / TWO_PI


def rad_to_khz(value_rad):
    return value_rad / TWO_PI * 1e3


def rad_to_ghz(value_rad):
    return value_rad / TWO_PI * 1e-3


def wrap_phase(phase: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(float(phase), TWO_PI)
    return math.pi if wrapped == -math.pi else wrapped
