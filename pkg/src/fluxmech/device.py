"""Device parameters, flux operating points and their file format.

All frequencies and rates are angular (rad/s) once inside a
:class:`DeviceParams`. Device files store ordinary frequencies in Hz
(``omega_c: 5.846e9`` means omega_c / 2 pi = 5.846 GHz) and are converted on
load.
"""

from dataclasses import MISSING, asdict, dataclass, fields, replace
import math
from pathlib import Path

import yaml

from .errors import ConfigError

TWO_PI = 2 * math.pi

# fields stored as rad/s internally and as Hz in files
_FREQUENCY_FIELDS = (
    "omega_c", "kappa_b", "kappa_in", "kappa_e", "kappa_0",
    "omega_q_max", "J", "alpha_T", "omega_m", "gamma_m",
)
_OPTIONAL_FIELDS = ("kappa_in", "kappa_e", "kappa_0")


@dataclass(frozen=True)
class DeviceParams:
    """Physical constants of one cavity-transmon-mechanics device.

    Attributes
    ----------
    omega_c, omega_q_max, omega_m : float
        Bare cavity, maximum transmon and mechanical angular frequencies.
    kappa_b : float
        Total bare cavity decay rate. ``kappa_in``, ``kappa_e`` and
        ``kappa_0`` (input port, output port, internal) are optional.
    J : float
        Transmon-cavity exchange coupling.
    alpha_T : float
        Transmon anharmonicity magnitude, stored positive.
    gamma_m : float
        Intrinsic mechanical energy decay rate.
    mass, length_l : float
        Mechanical mass (kg) and beam length (m).
    atten_product : float
        Input calibration constant A / kappa_in in seconds. The drive
        amplitude follows from ``eps**2 = P / (hbar * omega * atten_product)``.
    gain_dB : float
        Net output-line power gain.
    xi : float
        Mode-shape factor in ``g = xi * G * B_par * l * x_zpf``.
    """

    omega_c: float
    kappa_b: float
    omega_q_max: float
    J: float
    alpha_T: float
    omega_m: float
    gamma_m: float
    mass: float
    length_l: float
    atten_product: float = 1.0
    gain_dB: float = 0.0
    xi: float = 1.0
    kappa_in: float | None = None
    kappa_e: float | None = None
    kappa_0: float | None = None
    name: str = ""
    kappa_tolerance: float = 0.05

    def __post_init__(self):
        positive = ("omega_c", "kappa_b", "omega_q_max", "J", "alpha_T",
                    "omega_m", "gamma_m", "mass", "length_l", "atten_product")
        for key in positive:
            value = getattr(self, key)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"must be positive and finite, got {value!r}", field=key)
        for key in _OPTIONAL_FIELDS:
            value = getattr(self, key)
            if value is not None and not (math.isfinite(value) and value >= 0):
                raise ConfigError(f"must be non-negative, got {value!r}", field=key)
        if not (0 < self.xi <= 1):
            raise ConfigError(f"must lie in (0, 1], got {self.xi!r}", field="xi")
        if not math.isfinite(self.gain_dB):
            raise ConfigError("must be finite", field="gain_dB")
        parts = [self.kappa_in, self.kappa_e, self.kappa_0]
        if all(p is not None for p in parts):
            total = sum(parts)
            if abs(total - self.kappa_b) > self.kappa_tolerance * self.kappa_b:
                raise ConfigError(
                    f"kappa_in + kappa_e + kappa_0 = {total:.4e} differs from "
                    f"kappa_b = {self.kappa_b:.4e} by more than "
                    f"{self.kappa_tolerance:.0%}", field="kappa_0")

    def with_(self, **changes):
        """Copy with some fields replaced (validation re-runs)."""
        return replace(self, **changes)

    @classmethod
    def from_hz(cls, **values):
        """Build from ordinary frequencies in Hz (rates as kappa / 2 pi)."""
        converted = {}
        for key, value in values.items():
            if key in _FREQUENCY_FIELDS and value is not None:
                converted[key] = TWO_PI * float(value)
            else:
                converted[key] = value
        return cls(**converted)

    def to_hz_dict(self):
        """Plain dict in file units, the inverse of :meth:`from_hz`."""
        out = {}
        for key, value in asdict(self).items():
            if key in _FREQUENCY_FIELDS and value is not None:
                out[key] = value / TWO_PI
            else:
                out[key] = value
        return out


@dataclass(frozen=True)
class FluxPoint:
    """Flux bias (in units of the flux quantum) and applied magnetic fields (T)."""

    phi_ratio: float
    b_par: float = 0.0
    b_perp: float = 0.0

    def __post_init__(self):
        for key in ("phi_ratio", "b_par", "b_perp"):
            if not math.isfinite(getattr(self, key)):
                raise ConfigError("must be finite", field=key)


def as_flux(flux):
    """Accept a FluxPoint or a bare flux ratio."""
    if isinstance(flux, FluxPoint):
        return flux
    return FluxPoint(float(flux))


DEVICE_1 = DeviceParams.from_hz(
    name="device-1",
    omega_c=5.846e9,
    kappa_b=8e6,
    omega_q_max=7.38e9,
    J=72e6,
    alpha_T=284e6,
    omega_m=3.97e6,
    gamma_m=6.0,
    mass=0.75e-15,
    length_l=40e-6,
    atten_product=17444.0,
    gain_dB=58.5,
    kappa_e=6.2e6,
)

DEVICE_2 = DeviceParams.from_hz(
    name="device-2",
    omega_c=5.744e9,
    kappa_b=8e6,
    omega_q_max=8.26e9,
    J=193e6,
    alpha_T=300e6,
    omega_m=3.97e6,
    gamma_m=6.0,
    mass=0.75e-15,
    length_l=40e-6,
    atten_product=1647.0,
    gain_dB=64.3,
)

PRESETS = {"device-1": DEVICE_1, "device-2": DEVICE_2}


def _find_line(text, key):
    for i, raw in enumerate(text.splitlines(), start=1):
        if raw.strip().startswith(f"{key}:"):
            return i
    return None


def device_from_mapping(mapping, text=""):
    """Validate a mapping in file units and build :class:`DeviceParams`."""
    if not isinstance(mapping, dict):
        raise ConfigError("device block must be a mapping")
    known = {f.name for f in fields(DeviceParams)}
    values = {}
    preset = mapping.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}", field="preset",
                              line=_find_line(text, "preset"))
        values.update(PRESETS[preset].to_hz_dict())
    for key, value in mapping.items():
        if key == "preset":
            continue
        if key not in known:
            raise ConfigError("unknown device field", field=key, line=_find_line(text, key))
        if key != "name" and isinstance(value, str):
            # YAML 1.1 reads exponents without a sign (5.8e9) as strings
            try:
                value = float(value)
            except ValueError:
                pass
        if key != "name" and value is not None and (
                isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(f"expected a number, got {value!r}", field=key,
                              line=_find_line(text, key))
        values[key] = value
    missing = [f.name for f in fields(DeviceParams)
               if f.default is MISSING and f.name not in values]
    if missing:
        raise ConfigError(f"missing required fields {missing}")
    try:
        return DeviceParams.from_hz(**values)
    except ConfigError as exc:
        raise ConfigError(exc.message, field=exc.field,
                          line=_find_line(text, exc.field or "")) from None


def load_device(path):
    """Read a YAML device file (frequencies in Hz) into :class:`DeviceParams`.

    The file either holds the fields at top level or under a ``device:`` key;
    ``preset: device-1`` seeds values that later keys override.
    """
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML parse error: {exc}",
                          line=None if mark is None else mark.line + 1) from None
    if isinstance(data, dict) and "device" in data:
        data = data["device"]
    return device_from_mapping(data or {}, text)


def dump_device(params, path):
    Path(path).write_text(yaml.safe_dump({"device": params.to_hz_dict()}, sort_keys=False))
