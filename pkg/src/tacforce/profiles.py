"""Sensor profiles: gel mechanics plus illumination.

A profile bundles everything that turns a contact into numbers: the
sensing area and pixel grid, the elastic-foundation stiffnesses, the
friction cap, the force readout quantum, the light rig, and the resting
background appearance. Built-in profiles cover a 3x3 grid of sensor
bodies (light rigs) and gel sheets (stiffness + background tint), plus
one compact two-light sensor with a much stiffer gel.

Profiles can be written to and parsed from a small `key = value` text
format so experiments can ship custom ones.
"""

import dataclasses
import functools
import io

import numpy as np
from scipy import ndimage

from .errors import ContractError, FormatError


@dataclasses.dataclass(frozen=True)
class Light:
    """One directional light: where it sits and what it emits.

    azimuth/elevation are degrees; the light at azimuth ``a`` sits on
    the ``a`` side of the sensor and shines toward the center, tilted
    ``elevation`` degrees above the gel plane. ``color`` is an RGB
    triple in [0, 1] and ``gain`` scales it into 8-bit intensity units,
    so a fully lit facet adds up to ``gain * color`` counts per channel.
    """

    azimuth: float
    elevation: float
    color: tuple
    gain: float

    def direction(self):
        """Unit propagation vector (points from the source into the scene)."""
        az = np.deg2rad(self.azimuth)
        el = np.deg2rad(self.elevation)
        return np.array([
            -np.cos(az) * np.cos(el),
            -np.sin(az) * np.cos(el),
            -np.sin(el),
        ])


@dataclasses.dataclass(frozen=True)
class SensorProfile:
    """Mechanics and optics of one sensor + gel combination."""

    name: str
    normal_stiffness: float   # N per mm^3 of displaced gel volume
    shear_stiffness: float    # N per mm^3 per mm of tangential drag
    friction: float           # Coulomb cap: |F_xy| <= friction * F_z
    gel_thickness: float = 3.0
    force_quantum: float = 0.04
    width_mm: float = 24.0    # sensing area
    height_mm: float = 18.0
    width_px: int = 64        # pixel grid
    height_px: int = 48
    lights: tuple = ()
    background_seed: int = 0
    background_level: float = 0.35
    background_amplitude: float = 0.08
    noise_sigma: float = 0.0  # readout noise, 8-bit counts

    def __post_init__(self):
        if self.normal_stiffness <= 0 or self.shear_stiffness <= 0:
            raise ContractError("gel stiffnesses must be positive")
        if self.friction < 0:
            raise ContractError("friction cap must be non-negative")
        if self.gel_thickness <= 0:
            raise ContractError("gel thickness must be positive")
        if self.force_quantum <= 0:
            raise ContractError("force quantum must be positive")
        if self.width_mm <= 0 or self.height_mm <= 0:
            raise ContractError("sensing area must be positive")
        if self.width_px < 2 or self.height_px < 2:
            raise ContractError("pixel grid must be at least 2x2")
        if len(self.lights) < 2:
            raise ContractError("a profile needs at least two lights")
        pitch_u = self.width_mm / self.width_px
        pitch_v = self.height_mm / self.height_px
        if abs(pitch_u - pitch_v) > 1e-9 * pitch_u:
            raise ContractError("pixels must be square (area and grid aspect must agree)")

    @property
    def pixel_pitch(self):
        """Pixel center spacing in mm (pixels are square)."""
        return self.width_mm / self.width_px

    @property
    def pixel_area(self):
        return self.pixel_pitch ** 2

    def background(self, height=None, width=None):
        """Resting image (H, W, 3) uint8: seeded low-frequency clouds.

        Deterministic in (seed, shape); every gel gets its own pattern
        and overall brightness so images identify the gel they came
        from. The returned array is cached and read-only.
        """
        height = self.height_px if height is None else height
        width = self.width_px if width is None else width
        return _render_background(self.background_seed, self.background_level,
                                  self.background_amplitude, height, width)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@functools.lru_cache(maxsize=256)
def _render_background(seed, level, amplitude, height, width):
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(-1.0, 1.0, size=(6, 8, 3))
    zoom = (height / coarse.shape[0], width / coarse.shape[1], 1.0)
    clouds = ndimage.zoom(coarse, zoom, order=1, mode="nearest", grid_mode=True)
    img = np.rint(np.clip(level + amplitude * clouds, 0.0, 1.0) * 255.0).astype(np.uint8)
    img.flags.writeable = False
    return img


def _rig_one():
    return (
        Light(0.0, 30.0, (1.0, 0.15, 0.1), 230.0),
        Light(120.0, 30.0, (0.1, 1.0, 0.15), 230.0),
        Light(240.0, 30.0, (0.15, 0.1, 1.0), 230.0),
    )


def _rig_two():
    return (
        Light(60.0, 25.0, (1.0, 0.3, 0.05), 204.0),
        Light(180.0, 25.0, (0.05, 0.9, 0.4), 204.0),
        Light(300.0, 25.0, (0.3, 0.05, 1.0), 204.0),
    )


def _rig_three():
    return (
        Light(0.0, 35.0, (1.0, 0.1, 0.1), 178.0),
        Light(90.0, 35.0, (0.1, 1.0, 0.1), 178.0),
        Light(180.0, 35.0, (0.1, 0.1, 1.0), 178.0),
        Light(270.0, 35.0, (0.8, 0.8, 0.6), 128.0),
    )


def _rig_digit():
    # near-grazing pair so a stiff gel's shallow dimples still catch light
    return (
        Light(90.0, 8.0, (0.2, 0.6, 1.0), 255.0),
        Light(270.0, 8.0, (1.0, 0.5, 0.2), 255.0),
    )


_GELS = {
    # stiffnesses in N/mm^3; softer gels look darker at rest
    "gel1": dict(normal_stiffness=0.08, shear_stiffness=0.025, background_level=0.32),
    "gel2": dict(normal_stiffness=0.06, shear_stiffness=0.020, background_level=0.40),
    "gel3": dict(normal_stiffness=0.10, shear_stiffness=0.030, background_level=0.48),
}

_RIGS = {"sensor1": _rig_one, "sensor2": _rig_two, "sensor3": _rig_three}


def _make_builtin():
    out = {}
    for si, (sname, rig) in enumerate(_RIGS.items()):
        for gi, (gname, gel) in enumerate(_GELS.items()):
            name = f"{sname}-{gname}"
            out[name] = SensorProfile(
                name=name,
                friction=0.3,
                lights=rig(),
                background_seed=1000 + 101 * si + 7 * gi,
                **gel,
            )
    out["digit"] = SensorProfile(
        name="digit",
        normal_stiffness=0.16,
        shear_stiffness=0.05,
        friction=0.3,
        lights=_rig_digit(),
        background_seed=4242,
        background_level=0.30,
        background_amplitude=0.06,
    )
    return out


PROFILES = _make_builtin()
PROFILE_NAMES = tuple(PROFILES)
PROFILE_IDS = {name: i for i, name in enumerate(PROFILE_NAMES)}


def get_profile(name):
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown profile {name!r}; choices: {', '.join(PROFILE_NAMES)}") from None


# -- text format -----------------------------------------------------------

_SCALAR_FIELDS = {
    "normal_stiffness": float,
    "shear_stiffness": float,
    "friction": float,
    "gel_thickness": float,
    "force_quantum": float,
    "width_mm": float,
    "height_mm": float,
    "width_px": int,
    "height_px": int,
    "background_seed": int,
    "background_level": float,
    "background_amplitude": float,
    "noise_sigma": float,
}


def format_profile(profile):
    buf = io.StringIO()
    buf.write(f"name = {profile.name}\n")
    for field in _SCALAR_FIELDS:
        buf.write(f"{field} = {getattr(profile, field)!r}\n")
    for lt in profile.lights:
        color = ",".join(repr(float(c)) for c in lt.color)
        buf.write(
            f"light = az:{lt.azimuth!r} el:{lt.elevation!r} color:{color} gain:{lt.gain!r}\n"
        )
    return buf.getvalue()


def parse_profile(text):
    fields = {}
    lights = []
    name = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"profile line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "name":
            name = value
        elif key == "light":
            lights.append(_parse_light(value, lineno))
        elif key in _SCALAR_FIELDS:
            try:
                fields[key] = _SCALAR_FIELDS[key](value)
            except ValueError:
                raise FormatError(f"profile line {lineno}: bad value for {key}: {value!r}") from None
        else:
            raise FormatError(f"profile line {lineno}: unknown key {key!r}")
    if name is None:
        raise FormatError("profile has no 'name' line")
    missing = [k for k in ("normal_stiffness", "shear_stiffness", "friction") if k not in fields]
    if missing:
        raise FormatError(f"profile {name!r} is missing required keys: {', '.join(missing)}")
    try:
        return SensorProfile(name=name, lights=tuple(lights), **fields)
    except ContractError as exc:
        raise FormatError(f"profile {name!r}: {exc}") from None


def _parse_light(value, lineno):
    parts = {}
    for tok in value.split():
        if ":" not in tok:
            raise FormatError(f"profile line {lineno}: bad light token {tok!r}")
        k, _, v = tok.partition(":")
        parts[k] = v
    try:
        color = tuple(float(c) for c in parts["color"].split(","))
        if len(color) != 3:
            raise ValueError
        return Light(
            azimuth=float(parts["az"]),
            elevation=float(parts["el"]),
            color=color,
            gain=float(parts["gain"]),
        )
    except (KeyError, ValueError):
        raise FormatError(f"profile line {lineno}: light needs az, el, color (r,g,b), gain") from None


def save_profile(path, profile):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_profile(profile))


def load_profile(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_profile(fh.read())
