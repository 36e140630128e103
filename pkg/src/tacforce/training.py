"""Losses, the training loop, and evaluation metrics.

The objective is a weighted sum of a force term (mean L1 norm of the
3-vector residual) and a depth term (mean Euclidean norm of the
flattened depth-map residual). The loop runs Adam with two parameter
groups so the encoder and the heads can use different learning rates,
and the ablation variants (no decoder, frozen backbone, conv encoder)
are all reachable through config flags alone.
"""

import dataclasses

import numpy as np

from . import autodiff as ad
from . import dataset as dsmod
from .errors import ContractError, TrainingDiverged
from .optim import Adam
from .profiles import PROFILE_NAMES, get_profile

# Full-scale force range per axis (N); the denominator of the
# normalized error metric.
FORCE_RANGES = np.array([4.0, 4.0, 15.0])


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 100
    backbone_lr: float = 5e-5
    head_lr: float = 1e-5
    alpha: float = 1.0     # force-loss weight
    beta_w: float = 1.0    # depth-loss weight
    seed: int = 0
    frozen_backbone: bool = False
    with_decoder: bool = True

    def __post_init__(self):
        # lr = 0 is allowed so "train for zero effect" stays expressible
        if self.backbone_lr < 0 or self.head_lr < 0:
            raise ContractError("learning rates must be non-negative")
        if self.alpha < 0 or self.beta_w < 0:
            raise ContractError("loss weights must be non-negative")
        if self.alpha + self.beta_w <= 0:
            raise ContractError("at least one loss weight must be positive")
        if self.batch_size < 1:
            raise ContractError("batch size must be at least 1")
        if self.epochs < 0:
            raise ContractError("epochs must be non-negative")


def loss_force(target, pred):
    """Mean over the batch of |residual|_1 for the 3-vector force."""
    diff = ad.abs_(ad.sub(pred, target))
    return ad.mean(ad.sum_(diff, axis=1))


def loss_depth(target, pred):
    """Mean over the batch of the Euclidean norm of the depth residual."""
    diff = ad.sub(pred, target)
    flat = ad.reshape(diff, (diff.shape[0], -1))
    return ad.mean(ad.sqrt(ad.sum_(ad.square(flat), axis=1)))


def loss_total(l_force, l_depth, alpha, beta_w):
    return ad.add(ad.mul(l_force, alpha), ad.mul(l_depth, beta_w))


def normalized_error(target, pred):
    """Force error as a fraction of the per-axis full-scale range.

    Mean over axes of |residual| / range, averaged over the batch.
    """
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    return float((np.abs(pred - target) / FORCE_RANGES).mean())


def per_axis_mae(target, pred):
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    return np.abs(pred - target).mean(axis=0)


# -- data assembly ----------------------------------------------------------

def make_training_arrays(samples, normalizer, input_size=32, output_size=32):
    """Preprocess raw samples into model-ready arrays.

    Returns a dict with images (N, S, S, 3) in [-1, 1], forces (N, 3),
    and depths (N, S, S) in [0, 1].
    """
    if not samples:
        raise ContractError("cannot assemble arrays from an empty sample list")
    backgrounds = {}
    images, forces, depths = [], [], []
    for s in samples:
        pid = s.profile_id
        if pid not in backgrounds:
            profile = get_profile(PROFILE_NAMES[pid])
            backgrounds[pid] = profile.background(*s.image.shape[:2])
        t, d = dsmod.preprocess(s.image, backgrounds[pid], s.depth, normalizer,
                                input_size=input_size, output_size=output_size)
        images.append(t)
        forces.append(s.force.astype(np.float64))
        depths.append(d)
    return {
        "images": np.stack(images),
        "forces": np.stack(forces),
        "depths": np.stack(depths),
    }


def split_unseen(samples, unseen_tool_id):
    """Partition samples into (seen, unseen) by indenter id."""
    seen = [s for s in samples if s.indenter_id != unseen_tool_id]
    unseen = [s for s in samples if s.indenter_id == unseen_tool_id]
    return seen, unseen


# -- the loop ---------------------------------------------------------------

def build_optimizer(net, cfg):
    """Adam over two groups: encoder at backbone_lr, heads at head_lr.

    With a frozen backbone the encoder parameters are marked
    requires_grad=False and left out entirely, so no state is ever
    created for them.
    """
    groups = []
    if cfg.frozen_backbone:
        for p in net.backbone_params():
            p.requires_grad = False
    else:
        groups.append({"params": net.backbone_params(), "lr": cfg.backbone_lr})
    groups.append({"params": net.head_params(), "lr": cfg.head_lr})
    return Adam(groups)


def train_step(net, opt, images, forces, depths, cfg):
    """One forward/backward/update; returns (L_F, L_D, L) floats."""
    pred_force, pred_depth = net.forward(images, with_depth=cfg.with_decoder)
    l_f = loss_force(ad.Tensor(forces), pred_force)
    if cfg.with_decoder:
        labels = ad.Tensor(depths[:, None, :, :])
        l_d = loss_depth(labels, pred_depth)
    else:
        l_d = ad.Tensor(0.0)
    total = loss_total(l_f, l_d, cfg.alpha, cfg.beta_w)
    values = (float(l_f.data), float(l_d.data), float(total.data))
    if not np.isfinite(values).all():
        raise TrainingDiverged(-1, -1)
    opt.zero_grad()
    ad.backward(total)
    opt.step()
    return values


def train(data, net, cfg):
    """Train in place; returns the per-epoch loss curve (epochs, 4).

    Curve columns are (epoch, L_F, L_D, L), each loss averaged over the
    epoch's batches. Deterministic in (data, net seed, cfg.seed).
    """
    n = len(data["images"])
    if n == 0:
        raise ContractError("training set is empty")
    opt = build_optimizer(net, cfg)
    rng = np.random.default_rng(cfg.seed)
    curve = np.zeros((cfg.epochs, 4))
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            try:
                values = train_step(net, opt, data["images"][sel], data["forces"][sel],
                                    data["depths"][sel], cfg)
            except TrainingDiverged:
                raise TrainingDiverged(epoch, batches) from None
            sums += values
            batches += 1
        curve[epoch] = (epoch, *(sums / batches))
    return curve


# -- evaluation -------------------------------------------------------------

def model_estimator(net, chunk=64):
    """Batched no-tape force predictor for a trained network."""
    def predict(cell):
        images = np.asarray(cell["images"], dtype=np.float64)
        outs = [net.predict_force(images[i:i + chunk])
                for i in range(0, len(images), chunk)]
        return np.concatenate(outs, axis=0)
    return predict


def oracle_estimator():
    """The pass-through estimator: report the recorded force itself."""
    return lambda cell: cell["forces"]


@dataclasses.dataclass
class EvalReport:
    """Per-cell metrics: cells map a name to count, error, and MAE."""

    cells: dict

    @property
    def mean_normalized_error(self):
        total = sum(c["count"] for c in self.cells.values())
        return sum(c["count"] * c["normalized_error"] for c in self.cells.values()) / total

    def rows(self):
        """CSV-friendly rows: (cell, count, normalized_error, mae x, y, z)."""
        out = []
        for name in sorted(self.cells):
            c = self.cells[name]
            out.append((name, c["count"], c["normalized_error"], *c["mae"]))
        return out


def evaluate(eval_sets, predict):
    """Run an estimator over named evaluation cells.

    ``eval_sets`` maps a cell name to a dict with "images" and
    "forces"; ``predict`` maps a cell to (B, 3) forces. The oracle
    estimator passes the truth through and every cell reports zero.
    """
    if not eval_sets:
        raise ContractError("no evaluation cells given")
    cells = {}
    for name, cell in eval_sets.items():
        forces = np.asarray(cell["forces"], dtype=np.float64)
        if forces.size == 0:
            raise ContractError(f"evaluation cell {name!r} is empty")
        pred = np.asarray(predict(cell), dtype=np.float64)
        cells[name] = {
            "count": int(len(forces)),
            "normalized_error": normalized_error(forces, pred),
            "mae": per_axis_mae(forces, pred),
        }
    return EvalReport(cells)
