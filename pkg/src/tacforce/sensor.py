"""Elastic-foundation contact and tactile image rendering.

The gel pad is a bed of independent springs over the profile's pixel
grid (64 x 48 pixels covering 24 x 18 mm by default). Pressing a rigid
tool to vertical depth d compresses each pixel column by the
penetration field

    delta(u, v) = max(0, -(lowest z of the tool over that column)),

computed exactly from the tool's line-solid intersection. Forces follow
from the displaced volume: the normal load is stiffness * volume, and
lateral drag of the tool (from pressing along a tilted axis) produces a
shear force capped by Coulomb friction. Readout forces are quantized to
the profile's force quantum, mimicking an F/T sensor's resolution.

Rendering shades the penetration field with the profile's directional
lights on top of the resting background; an untouched gel reproduces
the background exactly.
"""

import dataclasses

import numpy as np

from .errors import ContractError, SafetyError
from .geometry import euler_to_matrix

GRID_WIDTH_PX = 64
GRID_HEIGHT_PX = 48
GRID_WIDTH_MM = 24.0
GRID_HEIGHT_MM = 18.0
PIXEL_PITCH = GRID_WIDTH_MM / GRID_WIDTH_PX  # 0.375 mm, same along both axes
PIXEL_AREA = PIXEL_PITCH * PIXEL_PITCH
DEFAULT_GEL_THICKNESS = 3.0
FORCE_QUANTUM_N = 0.04
GRAVITY_MS2 = 9.81

_MIN_AXIS_Z = 0.1  # pressing axis must keep some downward component


def quantize(force, quantum=FORCE_QUANTUM_N):
    """Snap a force (scalar or vector) onto the readout lattice."""
    if quantum <= 0.0:
        raise ContractError("force quantum must be positive")
    out = np.round(np.asarray(force, dtype=np.float64) / quantum) * quantum
    return float(out) if out.ndim == 0 else out


@dataclasses.dataclass(frozen=True)
class ToolPose:
    """Where the tool meets the gel: offsets in mm, angles in degrees.

    (x, y) place the tool axis on the pad (pad center is 0, 0); roll and
    pitch tilt it; yaw spins it about its own axis.
    """

    x: float = 0.0
    y: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def as_array(self):
        return np.array([self.x, self.y, self.roll, self.pitch, self.yaw])

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(v) for v in arr[:5]))


@dataclasses.dataclass
class ContactState:
    """Geometry of one indentation, before any profile is applied."""

    penetration: np.ndarray  # (H, W) mm, zero outside the contact patch
    pose: ToolPose
    depth: float
    drag: np.ndarray         # (2,) lateral surface drag in mm
    pixel_area: float        # mm^2 per grid cell (differs when supersampled)

    @property
    def mask(self):
        return self.penetration > 0.0

    @property
    def contact_area(self):
        return float(self.mask.sum() * self.pixel_area)

    @property
    def displaced_volume(self):
        return float(self.penetration.sum() * self.pixel_area)


def pixel_grid(profile=None, scale=1):
    """Pixel-center coordinates (u, v) in mm, each (H*scale, W*scale)."""
    if profile is None:
        width_mm, height_mm = GRID_WIDTH_MM, GRID_HEIGHT_MM
        width_px, height_px = GRID_WIDTH_PX, GRID_HEIGHT_PX
    else:
        width_mm, height_mm = profile.width_mm, profile.height_mm
        width_px, height_px = profile.width_px, profile.height_px
    pitch = width_mm / width_px / scale
    u = -width_mm / 2 + pitch * (np.arange(width_px * scale) + 0.5)
    v = -height_mm / 2 + pitch * (np.arange(height_px * scale) + 0.5)
    return np.meshgrid(u, v)


def tool_transform(indenter, pose, depth):
    """World rotation and translation placing the tool at the given pose.

    The tool is driven along its own (tilted) axis until the vertical
    indentation reaches ``depth``, so the contact point slides sideways
    by drag = -depth * w_xy / w_z where w is the world tool axis. The
    vertical placement uses the support function so the tool's lowest
    point sits exactly at z = -depth.
    """
    rot = euler_to_matrix(pose.roll, pose.pitch, pose.yaw)
    axis = rot[:, 2]  # world direction of the tool's +z
    if axis[2] < _MIN_AXIS_Z:
        raise ContractError(
            f"tool axis nearly parallel to the gel (w_z={axis[2]:.3f}); cannot press"
        )
    drag = -depth * axis[:2] / axis[2]
    down = -rot.T @ np.array([0.0, 0.0, 1.0])
    support = indenter.support(down)
    tz = -depth + support
    translation = np.array([pose.x + drag[0], pose.y + drag[1], tz])
    return rot, translation, drag


def penetration_field(indenter, rotation, translation, profile=None, scale=1):
    """Per-pixel penetration for a tool at an explicit world transform."""
    uu, vv = pixel_grid(profile, scale)
    points = np.stack([uu.ravel(), vv.ravel(), np.zeros(uu.size)], axis=1)
    origins = (points - translation) @ rotation  # rotation.T applied row-wise
    direction = rotation.T @ np.array([0.0, 0.0, 1.0])

    hit, smin = indenter.line_min(origins, direction)
    delta = np.zeros(uu.size)
    np.copyto(delta, -smin, where=hit & (smin < 0.0))
    return delta.reshape(uu.shape)


def compute_contact(indenter, pose, depth, profile=None, scale=1):
    """Penetration field for a tool pressed to ``depth`` mm.

    Poses outside the tool's safe envelope and depths beyond the gel
    raise SafetyError before any geometry is evaluated. ``scale``
    supersamples the grid (for integration accuracy studies); the pixel
    area shrinks accordingly so volumes stay comparable.
    """
    if depth < 0:
        raise ContractError(f"indentation depth must be >= 0, got {depth}")
    gel_thickness = DEFAULT_GEL_THICKNESS if profile is None else profile.gel_thickness
    if depth > gel_thickness:
        raise SafetyError(
            f"commanded depth {depth:.3f} mm exceeds the {gel_thickness:.3f} mm gel"
        )
    if not indenter.safe_pose_range.contains(pose.x, pose.y, pose.roll, pose.pitch, pose.yaw):
        raise SafetyError(f"pose {pose} is outside the safe envelope for {indenter.name}")
    rot, translation, drag = tool_transform(indenter, pose, depth)
    delta = penetration_field(indenter, rot, translation, profile, scale)

    pitch = (GRID_WIDTH_MM / GRID_WIDTH_PX if profile is None else profile.pixel_pitch) / scale
    return ContactState(
        penetration=delta,
        pose=pose,
        depth=float(depth),
        drag=drag,
        pixel_area=pitch * pitch,
    )


def oracle_force(contact, profile):
    """Ground-truth force readout (Fx, Fy, Fz) for a contact.

    Fz is the elastic-foundation load normal_stiffness * volume; shear
    follows the tool's lateral drag with a Coulomb cap; all three
    components are quantized to the profile's force quantum.
    """
    vol = contact.displaced_volume
    fz = profile.normal_stiffness * vol
    ft = profile.shear_stiffness * vol * contact.drag
    cap = profile.friction * fz
    norm = float(np.hypot(ft[0], ft[1]))
    if norm > cap and norm > 0.0:
        ft = ft * (cap / norm)
    return quantize(np.array([ft[0], ft[1], fz]), profile.force_quantum)


def sphere_normal_force(radius, depth, stiffness):
    """Closed-form elastic-foundation load for a sphere: k pi d^2 (R - d/3)."""
    if depth <= 0:
        return 0.0
    return float(stiffness * np.pi * depth * depth * (radius - depth / 3.0))


def depth_for_normal_force(indenter, pose, profile, fz):
    """Invert the foundation model: depth that yields raw load fz.

    Only valid for untilted poses: with zero roll/pitch the tool moves
    straight down, each pixel's penetration is max(0, d - h_i) for a
    fixed per-pixel height h_i, and the displaced volume is piecewise
    linear in d, so the inversion is exact. fz is the *unquantized*
    normal force normal_stiffness * volume.
    """
    pose = pose if isinstance(pose, ToolPose) else ToolPose.from_array(np.asarray(pose))
    if pose.roll != 0.0 or pose.pitch != 0.0:
        raise ContractError("force inversion requires an untilted pose")
    if fz < 0.0:
        raise ContractError("normal force cannot be negative")
    if fz == 0.0:
        return 0.0
    d0 = profile.gel_thickness
    contact = compute_contact(indenter, pose, d0, profile=profile)
    delta = contact.penetration[contact.mask]
    target = fz / (profile.normal_stiffness * contact.pixel_area)
    if target > delta.sum():
        raise SafetyError(
            f"{fz:.3f} N needs more volume than the gel offers at this pose")
    heights = np.sort(d0 - delta)
    csum = np.concatenate([[0.0], np.cumsum(heights)])
    counts = np.arange(len(heights) + 1)
    # displaced column-sum when the tool face reaches height[m]
    engaged_at = counts[1:] * heights - csum[1:]
    m = int(np.searchsorted(engaged_at, target, side="right"))
    m = max(m, 1)
    return float((target + csum[m]) / m)


def sphere_penetration(radius, depth, r):
    """Closed-form penetration profile of a sphere at radial distance r."""
    r = np.asarray(r, dtype=np.float64)
    cap = np.sqrt(np.maximum(radius * radius - r * r, 0.0)) - (radius - depth)
    return np.where(r <= radius, np.maximum(cap, 0.0), 0.0)


def surface_normals(penetration, pixel_pitch):
    """Unit normals of the deformed gel surface, (H, W, 3).

    The surface height is -penetration; its upward normal is
    proportional to (d(delta)/du, d(delta)/dv, 1).
    """
    gv, gu = np.gradient(penetration, pixel_pitch)
    n = np.stack([gu, gv, np.ones_like(penetration)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return n


def render_tactile(contact, profile, rng_seed=None):
    """Render a contact: returns (uint8 RGB image, float32 depth map).

    Shading is Lambertian off the deformed surface: each light adds
    gain * color * max(0, n . l) 8-bit counts, with l its propagation
    direction, so a flat (untouched) gel adds nothing and the background
    shows through unchanged. Walls of the dent facing a light catch its
    color. With a positive noise sigma, Gaussian readout noise seeded by
    ``rng_seed`` is added before the clamp to [0, 255].
    """
    h, w = contact.penetration.shape
    pitch = float(np.sqrt(contact.pixel_area))
    img = profile.background(h, w).astype(np.float64)
    if contact.mask.any():
        normals = surface_normals(contact.penetration, pitch)
        for light in profile.lights:
            lam = np.maximum(normals @ light.direction(), 0.0)
            img += light.gain * lam[..., None] * np.asarray(light.color)
    if profile.noise_sigma > 0.0:
        if rng_seed is None:
            raise ContractError("profile has sensor noise; pass rng_seed to render_tactile")
        rng = np.random.default_rng(rng_seed)
        img += rng.normal(0.0, profile.noise_sigma, size=img.shape)
    image = np.rint(np.clip(img, 0.0, 255.0)).astype(np.uint8)
    return image, contact.penetration.astype(np.float32)
