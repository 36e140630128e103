"""Few-shot sensor calibration against a known-mass rig.

A rig presses the big sphere into the gel under a set of reference
masses, so every captured frame carries an exact normal-force label
(quantized m*g). Mount tilt adds a small, bounded shear component.
Fine-tuning then adapts a pretrained force network to the new profile,
touching only the parameters inside an explicit scope.
"""

import dataclasses
import enum

import numpy as np
from scipy.optimize import brentq

from . import autodiff as ad
from .dataset import TactileSample, preprocess
from .errors import ContractError
from .indenters import INDENTER_IDS, get_indenter
from .optim import Adam
from .profiles import PROFILE_IDS, PROFILE_NAMES, get_profile
from .sensor import (GRAVITY_MS2, ToolPose, compute_contact, quantize,
                     render_tactile, sphere_normal_force)
from .training import (loss_depth, loss_force, loss_total, model_estimator,
                       normalized_error)

SPHERE_RADIUS_MM = 8.0


@dataclasses.dataclass(frozen=True)
class CalibrationRig:
    """Fixed big-sphere indenter loaded by reference masses.

    ``masses`` are in kg; a zero mass means an unloaded (background)
    capture. ``max_tilt_deg`` bounds the mount tilt, which converts a
    slice of the weight into shear.
    """

    masses: tuple = (0.0, 0.05, 0.102, 0.2, 0.35, 0.5, 0.75, 1.02)
    max_tilt_deg: float = 4.0
    placement_mm: float = 3.0

    def __post_init__(self):
        if not self.masses:
            raise ContractError("rig needs at least one mass")
        if any(m < 0 for m in self.masses):
            raise ContractError("masses must be non-negative")
        forces = [quantize(m * GRAVITY_MS2) for m in self.masses]
        if min(forces) > 0.5 or max(forces) < 10.0:
            raise ContractError(
                f"rig forces span [{min(forces)}, {max(forces)}] N; "
                "they must cover at least [0.5, 10] N")
        if self.max_tilt_deg < 0:
            raise ContractError("tilt must be non-negative")
        shear = max(forces) * np.sin(np.radians(self.max_tilt_deg))
        if shear > 1.0:
            raise ContractError(f"max tilt yields {shear:.2f} N shear; limit is 1 N")
        if self.placement_mm < 0:
            raise ContractError("placement radius must be non-negative")


def sphere_depth_for_force(force, profile):
    """Invert the closed-form sphere/foundation law for the depth."""
    if force <= 0:
        return 0.0
    top = profile.gel_thickness

    def gap(d):
        return sphere_normal_force(SPHERE_RADIUS_MM, d, profile.normal_stiffness) - force

    if gap(top) < 0:
        raise ContractError(
            f"{force:.2f} N exceeds what the gel takes at full depth")
    return brentq(gap, 0.0, top, xtol=1e-12)


def rig_sample(profile, rig, mass, rng):
    """One calibration frame: known-mass force label plus rendered image.

    The normal label is quantize(m*g) by construction. Tilt redirects
    the weight, producing a small quantized shear label.
    """
    fz = quantize(mass * GRAVITY_MS2, profile.force_quantum)
    tool = get_indenter("big_sphere")
    x = rng.uniform(-rig.placement_mm, rig.placement_mm)
    y = rng.uniform(-rig.placement_mm, rig.placement_mm)
    tilt = rng.uniform(0.0, rig.max_tilt_deg)
    heading = rng.uniform(0.0, 2 * np.pi)
    seed = int(rng.integers(0, 2**63 - 1))
    if mass == 0.0:
        image = profile.background()
        depth_map = np.zeros(image.shape[:2], dtype=np.float32)
        force = np.zeros(3)
        pose = np.zeros(6)
    else:
        depth = sphere_depth_for_force(mass * GRAVITY_MS2, profile)
        roll = tilt * np.cos(heading)
        pitch = tilt * np.sin(heading)
        contact = compute_contact(tool, ToolPose(x, y, roll, pitch, 0.0),
                                  depth, profile=profile)
        image, depth_map = render_tactile(contact, profile, rng_seed=seed)
        shear = mass * GRAVITY_MS2 * np.sin(np.radians(tilt))
        force = np.array([quantize(shear * np.cos(heading), profile.force_quantum),
                          quantize(shear * np.sin(heading), profile.force_quantum),
                          fz])
        pose = np.array([x, y, -depth, roll, pitch, 0.0])
    return TactileSample(image=image, depth=depth_map, force=force, pose=pose,
                         indenter_id=INDENTER_IDS["big_sphere"],
                         profile_id=PROFILE_IDS[profile.name])


def collect_calibration(profile, rig=None, n=100, seed=0):
    """Capture n frames at random placements over the rig's mass set."""
    rig = rig or CalibrationRig()
    rng = np.random.default_rng(seed)
    masses = [m for m in rig.masses if m > 0] or list(rig.masses)
    return [rig_sample(profile, rig, masses[int(rng.integers(len(masses)))], rng)
            for _ in range(n)]


class FinetuneScope(enum.Enum):
    FINAL_LAYER = "final-layer"
    REGRESSOR_HEAD = "regressor-head"
    FULL = "full"


def default_scope(profile_name):
    """Cross-type targets retune the whole regressor; same-type targets
    only need the output layer."""
    return (FinetuneScope.REGRESSOR_HEAD if profile_name == "digit"
            else FinetuneScope.FINAL_LAYER)


def scope_params(net, scope):
    named = net.named_params()
    if scope is FinetuneScope.FINAL_LAYER:
        return {k: p for k, p in named.items() if k.startswith("regressor.out.")}
    if scope is FinetuneScope.REGRESSOR_HEAD:
        return {k: p for k, p in named.items() if k.startswith("regressor.")}
    if scope is FinetuneScope.FULL:
        return named
    raise ContractError(f"unknown finetune scope {scope!r}")


@dataclasses.dataclass
class FinetuneReport:
    scope: FinetuneScope
    steps: int
    pre_error: float          # held-out slice, before
    post_error: float         # held-out slice, after
    pre_fit_error: float      # calibration (training) slice, before
    post_fit_error: float


def _sample_arrays(samples, normalizer):
    backgrounds = {}
    images, forces, depths = [], [], []
    for s in samples:
        if s.profile_id not in backgrounds:
            profile = get_profile(PROFILE_NAMES[s.profile_id])
            backgrounds[s.profile_id] = profile.background(*s.image.shape[:2])
        t, d = preprocess(s.image, backgrounds[s.profile_id], s.depth, normalizer)
        images.append(t)
        forces.append(s.force.astype(np.float64))
        depths.append(d)
    return np.stack(images), np.stack(forces), np.stack(depths)


def _force_error(net, images, forces):
    return normalized_error(forces, model_estimator(net)({"images": images}))


def finetune(net, samples, normalizer, scope=FinetuneScope.FINAL_LAYER,
             steps=200, lr=1e-5, batch_size=16, seed=0, holdout_frac=0.2):
    """Adapt a pretrained net to one profile's calibration samples.

    Only parameters inside ``scope`` move; everything else is
    bit-identical afterwards. Head scopes train on the force loss
    alone; the full scope also keeps the depth reconstruction alive.
    Returns a FinetuneReport with held-out error before and after.
    """
    if not samples:
        raise ContractError("no calibration samples")
    if len({s.profile_id for s in samples}) != 1:
        raise ContractError("calibration samples must come from one profile")
    if steps < 0:
        raise ContractError("steps must be non-negative")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_hold = int(round(holdout_frac * len(samples)))
    hold_idx, fit_idx = order[:n_hold], order[n_hold:]
    if fit_idx.size == 0:
        raise ContractError("holdout fraction leaves no samples to fit")
    images, forces, depths = _sample_arrays(samples, normalizer)

    def hold_error(model):
        if n_hold == 0:
            return float("nan")
        return _force_error(model, images[hold_idx], forces[hold_idx])

    pre_error = hold_error(net)
    pre_fit = _force_error(net, images[fit_idx], forces[fit_idx])

    named = net.named_params()
    scoped = scope_params(net, scope)
    frozen = [p for k, p in named.items() if k not in scoped]
    with_depth = scope is FinetuneScope.FULL
    for p in frozen:
        p.requires_grad = False
    try:
        opt = Adam([{"params": list(scoped.values()), "lr": lr}])
        done = 0
        while done < steps:
            epoch_order = fit_idx[rng.permutation(len(fit_idx))]
            for start in range(0, len(epoch_order), batch_size):
                if done == steps:
                    break
                sel = epoch_order[start:start + batch_size]
                force_pred, depth_pred = net.forward(images[sel], with_depth=with_depth)
                l_f = loss_force(ad.Tensor(forces[sel]), force_pred)
                if with_depth:
                    l_d = loss_depth(ad.Tensor(depths[sel][:, None]), depth_pred)
                else:
                    l_d = ad.Tensor(0.0)
                total = loss_total(l_f, l_d, 1.0, 1.0 if with_depth else 0.0)
                opt.zero_grad()
                ad.backward(total)
                opt.step()
                done += 1
    finally:
        for p in frozen:
            p.requires_grad = True

    return FinetuneReport(scope=scope, steps=steps,
                          pre_error=pre_error, post_error=hold_error(net),
                          pre_fit_error=pre_fit,
                          post_fit_error=_force_error(net, images[fit_idx], forces[fit_idx]))


def catastrophic_forgetting_check(net_before, net_after, eval_sets):
    """Relative error increment per evaluation cell after calibration."""
    before_names = set(net_before.named_params())
    after_names = set(net_after.named_params())
    if before_names != after_names:
        raise ContractError("models do not share an architecture")
    deltas = {}
    for name, cell in eval_sets.items():
        e0 = _force_error(net_before, np.asarray(cell["images"], dtype=np.float64),
                          cell["forces"])
        e1 = _force_error(net_after, np.asarray(cell["images"], dtype=np.float64),
                          cell["forces"])
        if e0 == 0.0:
            deltas[name] = 0.0 if e1 == 0.0 else float("inf")
        else:
            deltas[name] = (e1 - e0) / e0
    return deltas
