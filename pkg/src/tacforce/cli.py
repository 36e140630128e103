"""Command-line pipeline: every experiment is a subcommand writing CSV/SVG.

Subcommands
    dataset gen|balance|stats   build, rebalance, or summarize FAF1 files
    train                       fit the force estimator, save a checkpoint
    eval                        score checkpoints per (profile, tool) cell
    calibrate                   few-shot adapt a checkpoint to a new sensor
    task weigh|deform           run the downstream manipulation experiments

Every subcommand is a pure function of its flags and --seed: re-runs
overwrite the same output files with byte-identical content. Numeric
CSV cells carry 6 significant digits. Exit codes are listed in the
--help epilog; 0 means no error was raised.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import dataset as ds
from . import svgplot
from .calibration import (FinetuneScope, collect_calibration, default_scope,
                          catastrophic_forgetting_check, finetune)
from .checkpoint import load_arrays, load_model, save_model
from .errors import (ContractError, DegenerateInputError, FormatError,
                     SafetyError, ShapeError, TacforceError, TaskFailure,
                     TrainingDiverged)
from .geometry import PoseRange
from .indenters import INDENTER_IDS, INDENTER_NAMES
from .model import ForceNet, ModelConfig
from .profiles import PROFILE_IDS, PROFILE_NAMES, get_profile
from .tasks import (CupModel, PushScenario, estimate_weight, grasp_to_force,
                    net_estimator, oracle_readout_estimator, simulate_push)
from .training import (TrainConfig, evaluate, make_training_arrays,
                       model_estimator, oracle_estimator, train)

EXIT_CODES = {
    ShapeError: 3,
    ContractError: 4,
    SafetyError: 5,
    DegenerateInputError: 6,
    FormatError: 7,
    TrainingDiverged: 8,
    TaskFailure: 9,
}

_ENCODERS = ("vit", "conv")


@dataclasses.dataclass
class RunConfig:
    """Resolved invocation: subcommand, paths, profiles, seed, overrides."""

    subcommand: str
    out_dir: str
    seed: int = 0
    data: str = None
    checkpoints: tuple = ()
    profiles: tuple = ()
    model_overrides: dict = dataclasses.field(default_factory=dict)
    train_overrides: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        os.makedirs(self.out_dir, exist_ok=True)
        if not os.access(self.out_dir, os.W_OK):
            raise ContractError(f"output directory {self.out_dir!r} is not writable")
        for name in self.profiles:
            if name not in PROFILE_IDS:
                raise ContractError(f"unknown profile {name!r}")

    def path(self, name):
        return os.path.join(self.out_dir, name)


# -- small shared helpers -----------------------------------------------------

def _cell_text(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.6g}"


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell_text(v) for v in row) + "\n")


def _read_config(path):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {path!r} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise FormatError(f"config {path!r} must hold a JSON object")
    unknown = set(raw) - {"model", "train"}
    if unknown:
        raise ContractError(f"unknown config sections {sorted(unknown)}")
    for section, cls in (("model", ModelConfig), ("train", TrainConfig)):
        fields = {f.name for f in dataclasses.fields(cls)}
        bad = set(raw.get(section, {})) - fields
        if bad:
            raise ContractError(f"unknown {section} config keys {sorted(bad)}")
    return raw


def _model_config(rc):
    return ModelConfig(**rc.model_overrides)


def _train_config(rc, args):
    merged = dict(rc.train_overrides)
    for key in ("epochs", "batch_size", "backbone_lr", "head_lr", "alpha", "beta_w"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    merged["seed"] = rc.seed
    merged["frozen_backbone"] = bool(getattr(args, "frozen_backbone", False))
    merged["with_decoder"] = not getattr(args, "no_decoder", False)
    return TrainConfig(**merged)


def _meta_arrays(config, normalizer):
    """Model architecture and depth scaling, stored beside the weights."""
    fields = (config.input_size, config.patch_size, config.embed_dim,
              config.depth, config.heads, config.mlp_ratio,
              config.decoder_channels, _ENCODERS.index(config.encoder))
    return {
        "meta.model": np.array(fields, dtype=np.float64),
        "meta.normalizer": np.array([normalizer.min_val, normalizer.max_val,
                                     normalizer.eps], dtype=np.float64),
    }


def _load_net(path):
    """Rebuild a network (architecture + weights + normalizer) from a file."""
    arrays = load_arrays(path)
    meta = arrays.get("meta.model")
    norm = arrays.get("meta.normalizer")
    if meta is None or norm is None:
        raise FormatError(f"checkpoint {path!r} lacks the meta.* records")
    config = ModelConfig(input_size=int(meta[0]), patch_size=int(meta[1]),
                         embed_dim=int(meta[2]), depth=int(meta[3]),
                         heads=int(meta[4]), mlp_ratio=int(meta[5]),
                         decoder_channels=int(meta[6]),
                         encoder=_ENCODERS[int(meta[7])])
    net = ForceNet(config, seed=0)
    load_model(path, net.named_params())
    normalizer = ds.DepthNormalizer(float(norm[0]), float(norm[1]), float(norm[2]))
    return net, normalizer, config


def _save_net(path, net, config, normalizer):
    save_model(path, net.named_params(), extra=_meta_arrays(config, normalizer))


def _eval_cells(samples, normalizer, input_size=32):
    """Group samples into named (profile, tool) cells of model-ready arrays."""
    groups = {}
    for s in samples:
        name = f"{PROFILE_NAMES[s.profile_id]}/{INDENTER_NAMES[s.indenter_id]}"
        groups.setdefault(name, []).append(s)
    return {name: make_training_arrays(group, normalizer, input_size=input_size)
            for name, group in sorted(groups.items())}


def _histogram_rows(report):
    rows = []
    for tool in sorted(report["per_indenter"]):
        entry = report["per_indenter"][tool]
        for b in sorted(entry["fz_bins"]):
            rows.append((tool, b * report["bin_width"],
                         (b + 1) * report["bin_width"], entry["fz_bins"][b]))
    return rows


def _bin_ratio(report, lo=0.5, hi=12.0):
    """Max/min pooled count over nonempty fz bins inside [lo, hi] N."""
    width = report["bin_width"]
    pooled = {}
    for entry in report["per_indenter"].values():
        for b, c in entry["fz_bins"].items():
            if b * width >= lo - 1e-9 and (b + 1) * width <= hi + 1e-9:
                pooled[b] = pooled.get(b, 0) + c
    counts = [c for c in pooled.values() if c > 0]
    if not counts:
        return float("nan")
    return max(counts) / min(counts)


# -- dataset ------------------------------------------------------------------

def cmd_dataset_gen(rc, args):
    tools = args.tool or ["big_sphere", "cube"]
    for name in tools:
        if name not in INDENTER_IDS:
            raise ContractError(f"unknown indenter {name!r}")
    if args.count < 0:
        raise ContractError("--count must be non-negative")
    pose_range = PoseRange(*args.pose_range) if args.pose_range else PoseRange()
    if args.count == 0:
        samples = []
    else:
        samples = ds.generate_dataset(tools, list(rc.profiles), args.count,
                                      pose_range=pose_range, step=args.step,
                                      f_max=args.f_max, seed=rc.seed,
                                      workers=args.workers)
    ds.store(samples, rc.path("dataset.faf"))
    report = ds.stats(samples, bin_width=args.bin)
    write_csv(rc.path("histogram.csv"), ("tool", "bin_lo_n", "bin_hi_n", "count"),
              _histogram_rows(report))
    print(f"wrote {len(samples)} samples to {rc.path('dataset.faf')}")
    return 0


def cmd_dataset_balance(rc, args):
    samples = ds.load(args.data)
    balanced = ds.balance(samples, bin_width=args.bin, seed=rc.seed)
    ds.store(balanced, rc.path("balanced.faf"))
    report = ds.stats(balanced, bin_width=args.bin)
    write_csv(rc.path("histogram.csv"), ("tool", "bin_lo_n", "bin_hi_n", "count"),
              _histogram_rows(report))
    print(f"balanced {len(samples)} -> {len(balanced)} samples")
    return 0


def cmd_dataset_stats(rc, args):
    samples = ds.load(args.data)
    report = ds.stats(samples, bin_width=args.bin)
    rows = _histogram_rows(report)
    write_csv(rc.path("stats.csv"), ("tool", "bin_lo_n", "bin_hi_n", "count"), rows)
    for tool, lo, hi, count in rows:
        print(f"{tool}  [{lo:.2f}, {hi:.2f}) N  {count}")
    if samples:
        forces = np.stack([s.force for s in samples])
        for k, axis in enumerate("xyz"):
            print(f"f{axis} range [{forces[:, k].min():.6g}, {forces[:, k].max():.6g}] N")
    ratio = _bin_ratio(report)
    print(f"count {report['count']}  bin ratio (0.5-12 N window) {ratio:.6g}")
    return 0


# -- train / eval -------------------------------------------------------------

def cmd_train(rc, args):
    samples = ds.load(rc.data)
    normalizer = ds.DepthNormalizer.from_samples(samples)
    data = make_training_arrays(samples, normalizer)
    config = _model_config(rc)
    cfg = _train_config(rc, args)
    net = ForceNet(config, seed=rc.seed)
    curve = train(data, net, cfg)
    _save_net(rc.path("model.fafw"), net, config, normalizer)
    write_csv(rc.path("loss.csv"),
              ("epoch", "loss_force", "loss_depth", "loss_total"), curve)
    if len(curve):
        svgplot.line_plot([("L_F", curve[:, 0], curve[:, 1]),
                           ("L_D", curve[:, 0], curve[:, 2]),
                           ("L", curve[:, 0], curve[:, 3])],
                          title="training loss", xlabel="epoch", ylabel="loss",
                          path=rc.path("loss.svg"))
    final = curve[-1, 3] if len(curve) else float("nan")
    print(f"trained {cfg.epochs} epochs on {len(samples)} samples, "
          f"final loss {final:.6g}")
    return 0


def _pooled_mae(report):
    total = sum(c["count"] for c in report.cells.values())
    mae = np.zeros(3)
    for c in report.cells.values():
        mae += c["count"] * np.asarray(c["mae"])
    return mae / total


def cmd_eval(rc, args):
    samples = ds.load(rc.data)
    summary = []
    if args.estimator == "oracle":
        cells = _eval_cells(samples, ds.DepthNormalizer.identity())
        report = evaluate(cells, oracle_estimator())
        labels = [("oracle", report)]
    else:
        if not rc.checkpoints:
            raise ContractError("eval with the net estimator needs --checkpoint")
        labels = []
        seen = {}
        for path in rc.checkpoints:
            net, normalizer, config = _load_net(path)
            cells = _eval_cells(samples, normalizer, input_size=config.input_size)
            report = evaluate(cells, model_estimator(net))
            stem = os.path.splitext(os.path.basename(path))[0]
            seen[stem] = seen.get(stem, 0) + 1
            label = stem if seen[stem] == 1 else f"{stem}-{seen[stem]}"
            labels.append((label, report))
    for label, report in labels:
        write_csv(rc.path(f"eval_{label}.csv"),
                  ("cell", "count", "normalized_error", "mae_x", "mae_y", "mae_z"),
                  report.rows())
        total = sum(c["count"] for c in report.cells.values())
        summary.append((label, total, report.mean_normalized_error,
                        *_pooled_mae(report)))
        print(f"{label}: normalized error {report.mean_normalized_error:.6g} "
              f"over {total} samples")
    write_csv(rc.path("summary.csv"),
              ("model", "count", "normalized_error", "mae_x", "mae_y", "mae_z"),
              summary)
    return 0


# -- calibration ---------------------------------------------------------------

def cmd_calibrate(rc, args):
    if len(rc.profiles) != 1:
        raise ContractError("calibrate expects exactly one --profile")
    profile_name = rc.profiles[0]
    path = rc.checkpoints[0]
    net, normalizer, config = _load_net(path)
    net_before, _, _ = _load_net(path)
    samples = collect_calibration(get_profile(profile_name), n=args.samples,
                                  seed=rc.seed)
    if args.scope == "auto":
        scope = default_scope(profile_name)
    else:
        scope = FinetuneScope(args.scope)
    report = finetune(net, samples, normalizer, scope=scope, steps=args.steps,
                      lr=args.lr, seed=rc.seed, holdout_frac=args.holdout)
    _save_net(rc.path("calibrated.fafw"), net, config, normalizer)
    write_csv(rc.path("calibration.csv"),
              ("profile", "scope", "steps", "samples", "pre_error", "post_error",
               "pre_fit_error", "post_fit_error"),
              [(profile_name, scope.value, report.steps, len(samples),
                report.pre_error, report.post_error, report.pre_fit_error,
                report.post_fit_error)])
    print(f"{profile_name} ({scope.value}, {report.steps} steps): "
          f"held-out force error {report.pre_error:.6g} -> {report.post_error:.6g} N")
    if rc.data:
        cells = _eval_cells(ds.load(rc.data), normalizer,
                            input_size=config.input_size)
        deltas = catastrophic_forgetting_check(net_before, net, cells)
        write_csv(rc.path("forgetting.csv"), ("cell", "error_increment_frac"),
                  sorted(deltas.items()))
    return 0


# -- downstream tasks -----------------------------------------------------------

def _task_estimator(rc, args, profile):
    if len(rc.profiles) != 1:
        raise ContractError("tasks run on exactly one --profile")
    if args.estimator == "oracle":
        return oracle_readout_estimator(profile), None
    if not rc.checkpoints:
        raise ContractError("the net estimator needs --checkpoint")
    net, normalizer, _ = _load_net(rc.checkpoints[0])
    return net_estimator(net, normalizer), net


def cmd_task_weigh(rc, args):
    profile_name = rc.profiles[0]
    profile = get_profile(profile_name)
    estimator, _ = _task_estimator(rc, args, profile)
    scenario = PushScenario(mass=args.mass, mu=args.mu, profile_name=profile_name,
                            n_frames=args.frames, ramp_frames=args.ramp,
                            noise_n=args.noise)
    traces = [simulate_push(scenario, seed=rc.seed + t) for t in range(args.trials)]
    rows = []
    series = []
    for t, trace in enumerate(traces):
        m_hat, rep = estimate_weight(trace, args.mu, estimator)
        rows.append((f"{t + 1}", rep.estimated_force, m_hat, rep.mass_error))
        est = np.asarray(estimator(trace.samples), dtype=np.float64)
        series.append((f"push {t + 1}", np.arange(len(trace.samples)), est[:, 2]))
    mass, pooled = estimate_weight(traces, args.mu, estimator)
    rows.append(("pooled", pooled.estimated_force, mass, pooled.mass_error))
    write_csv(rc.path("weigh.csv"),
              ("trial", "estimated_force_n", "estimated_mass_kg", "mass_error_kg"),
              rows)
    svgplot.line_plot(series, title=f"pushes, m={args.mass} kg, mu={args.mu}",
                      xlabel="frame", ylabel="estimated F^z (N)",
                      path=rc.path("weigh.svg"))
    print(f"estimated mass {mass:.6g} kg (true {args.mass} kg, "
          f"error {pooled.mass_error:.6g} kg)")
    return 0


def cmd_task_deform(rc, args):
    profile_name = rc.profiles[0]
    profile = get_profile(profile_name)
    estimator, _ = _task_estimator(rc, args, profile)
    cup = CupModel(rim_noise_px=args.rim_noise)
    report = grasp_to_force(args.target, args.step_mm, estimator, cup=cup,
                            profile_name=profile_name, seed=rc.seed)
    write_csv(rc.path("deform.csv"),
              ("target_n", "achieved_n", "estimated_n", "steps",
               "deformation_pct", "estimated_deformation_pct"),
              [(args.target, report.true_force, report.estimated_force,
                report.steps, report.deformation_pct,
                report.estimated_deformation_pct)])
    steps = np.arange(report.steps + 1)
    grip = np.array([cup.grip_force(k * args.step_mm) for k in steps])
    svgplot.line_plot([("grip force", steps, grip),
                       ("target", steps, np.full(len(steps), args.target))],
                      title="grasp to force", xlabel="closure step",
                      ylabel="F^z (N)", path=rc.path("deform.svg"))
    print(f"reached {report.true_force:.6g} N for target {args.target} N in "
          f"{report.steps} steps; deformation {report.deformation_pct:.6g}%")
    return 0


# -- parsing ------------------------------------------------------------------

def _epilog():
    lines = ["exit codes:", "  0  success"]
    for klass, code in sorted(EXIT_CODES.items(), key=lambda kv: kv[1]):
        lines.append(f"  {code}  {klass.__name__}: {klass.__doc__.splitlines()[0]}")
    lines.append("  1  unexpected failure, 2  usage error")
    lines.append("env: FAF_THREADS bounds dataset worker pools")
    return "\n".join(lines)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="single seed driving every random draw")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--config", default=None,
                        help="JSON file with optional 'model' and 'train' sections")
    common.add_argument("--profile", action="append", default=None,
                        help="sensor profile name (repeatable)")

    top = argparse.ArgumentParser(
        prog="tacforce", description=__doc__, epilog=_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = top.add_subparsers(dest="command", required=True)

    p_data = sub.add_parser("dataset", help="build or inspect FAF1 datasets")
    dsub = p_data.add_subparsers(dest="action", required=True)

    p_gen = dsub.add_parser("gen", parents=[common], help="simulate indentations")
    p_gen.add_argument("--tool", action="append", default=None,
                       help="indenter name (repeatable)")
    p_gen.add_argument("--count", type=int, default=8,
                       help="poses per (tool, profile) pair")
    p_gen.add_argument("--step", type=float, default=ds.DEFAULT_STEP_MM)
    p_gen.add_argument("--f-max", type=float, default=ds.DEFAULT_FORCE_LIMIT_N)
    p_gen.add_argument("--bin", type=float, default=ds.DEFAULT_BIN_WIDTH_N)
    p_gen.add_argument("--pose-range", type=float, nargs=5, default=None,
                       metavar=("X", "Y", "ROLL", "PITCH", "YAW"))
    p_gen.add_argument("--workers", type=int, default=None)

    p_bal = dsub.add_parser("balance", parents=[common],
                            help="cap per-bin counts at the median")
    p_bal.add_argument("--data", required=True)
    p_bal.add_argument("--bin", type=float, default=ds.DEFAULT_BIN_WIDTH_N)

    p_stats = dsub.add_parser("stats", parents=[common],
                              help="print per-bin counts and force ranges")
    p_stats.add_argument("--data", required=True)
    p_stats.add_argument("--bin", type=float, default=ds.DEFAULT_BIN_WIDTH_N)

    p_train = sub.add_parser("train", parents=[common], help="fit the estimator")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--batch-size", type=int, default=None)
    p_train.add_argument("--backbone-lr", type=float, default=None)
    p_train.add_argument("--head-lr", type=float, default=None)
    p_train.add_argument("--alpha", type=float, default=None)
    p_train.add_argument("--beta-w", type=float, default=None)
    p_train.add_argument("--frozen-backbone", action="store_true")
    p_train.add_argument("--no-decoder", action="store_true")
    p_train.add_argument("--conv-encoder", action="store_true")

    p_eval = sub.add_parser("eval", parents=[common], help="score checkpoints")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--checkpoint", action="append", default=None,
                        help="model file (repeatable; one summary row each)")
    p_eval.add_argument("--estimator", choices=("net", "oracle"), default="net")

    p_cal = sub.add_parser("calibrate", parents=[common],
                           help="few-shot adapt to a new sensor")
    p_cal.add_argument("--checkpoint", required=True)
    p_cal.add_argument("--data", default=None,
                       help="optional eval set for the forgetting table")
    p_cal.add_argument("--samples", type=int, default=100)
    p_cal.add_argument("--steps", type=int, default=200)
    p_cal.add_argument("--lr", type=float, default=1e-5)
    p_cal.add_argument("--holdout", type=float, default=0.2)
    p_cal.add_argument("--scope", default="auto",
                       choices=("auto",) + tuple(s.value for s in FinetuneScope))

    p_task = sub.add_parser("task", help="downstream manipulation experiments")
    tsub = p_task.add_subparsers(dest="action", required=True)

    p_weigh = tsub.add_parser("weigh", parents=[common],
                              help="estimate an object's mass from pushes")
    p_weigh.add_argument("--estimator", choices=("oracle", "net"), default="oracle")
    p_weigh.add_argument("--checkpoint", action="append", default=None)
    p_weigh.add_argument("--trials", type=int, default=5)
    p_weigh.add_argument("--mass", type=float, default=1.0)
    p_weigh.add_argument("--mu", type=float, default=0.3)
    p_weigh.add_argument("--noise", type=float, default=0.0)
    p_weigh.add_argument("--frames", type=int, default=30)
    p_weigh.add_argument("--ramp", type=int, default=5)

    p_def = tsub.add_parser("deform", parents=[common],
                            help="close a gripper to a target force")
    p_def.add_argument("--target", type=float, required=True)
    p_def.add_argument("--estimator", choices=("oracle", "net"), default="oracle")
    p_def.add_argument("--checkpoint", action="append", default=None)
    p_def.add_argument("--step-mm", type=float, default=0.05)
    p_def.add_argument("--rim-noise", type=float, default=0.0)
    return top


_DEFAULT_PROFILES = {
    "dataset": ("sensor1-gel1",),
    "train": (),
    "eval": (),
    "calibrate": ("digit",),
    "task": ("digit",),
}


def _dispatch(args):
    config = _read_config(args.config)
    name = args.command + (f" {args.action}" if getattr(args, "action", None) else "")
    checkpoint = getattr(args, "checkpoint", None) or ()
    if isinstance(checkpoint, str):
        checkpoint = (checkpoint,)
    rc = RunConfig(
        subcommand=name,
        out_dir=args.out,
        seed=args.seed,
        data=getattr(args, "data", None),
        checkpoints=tuple(checkpoint),
        profiles=tuple(args.profile or _DEFAULT_PROFILES[args.command]),
        model_overrides={**config.get("model", {}),
                         **({"encoder": "conv"}
                            if getattr(args, "conv_encoder", False) else {})},
        train_overrides=dict(config.get("train", {})),
    )
    handlers = {
        "dataset gen": cmd_dataset_gen,
        "dataset balance": cmd_dataset_balance,
        "dataset stats": cmd_dataset_stats,
        "train": cmd_train,
        "eval": cmd_eval,
        "calibrate": cmd_calibrate,
        "task weigh": cmd_task_weigh,
        "task deform": cmd_task_deform,
    }
    return handlers[name](rc, args)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except TacforceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES.get(type(exc), 1)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
