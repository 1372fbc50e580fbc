"""Command-line front end.

Subcommands: verify-conv, bench-conv, pilot1d, align2d, toy3d, gradcheck.
Configuration is a flat JSON object of dotted keys (see
--print-config-reference); unknown keys are rejected before any work runs.
Exit codes: 0 success, 1 runtime failure, 2 bad configuration/usage.
"""

import os


def _configure_threads() -> None:
    n = os.environ.get("TENSORPOSE_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, n)


_configure_threads()

import argparse
import csv
import dataclasses
import json
import sys
import time

import numpy as np
from PIL import Image, ImageDraw

from . import __version__
from . import align2d as a2
from . import joint3d as j3
from .geometry import save_tangents, warp2d
from .kernels import KernelSchedule, default_length, make_kernel_1d
from .optim import grad_check
from .render import render_image
from .seeding import substream
from .sepconv import bench_compare, brute_force_conv3d, filter_components_3d
from .spectral1d import PilotConfig, run_pilot, transfer_grid
from .tensorfield import VMTensor3D, save_field


class ConfigError(ValueError):
    pass


# (key, default, description).  The defaults here are the desk-scale runs;
# every key can be overridden from the JSON config file.
CONFIG_REFERENCE = [
    ("run.seed", 0, "root seed; all named substreams derive from it"),
    # scheduled kernels for the 3D experiment
    ("kernel.sigma0_3d", 3.0, "initial volume kernel sigma, base-grid units"),
    ("kernel.sigma0_2d", 3.0, "initial supervision-image blur sigma, pixels"),
    ("kernel.cutoff_step", 600, "step at and after which sigma is exactly 0"),
    ("kernel.half_life", 150.0, "steps per halving of sigma"),
    ("kernel.random_scaling", True,
     "draw U[0,1] width multipliers for density/supervision kernels"),
    ("kernel.max_length", 101, "odd cap on kernel tap count"),
    # optimizer (3D experiment)
    ("optim.lr_tensor", 0.02, "Adam lr for tensor components"),
    ("optim.lr_pose", 3e-3, "Adam lr for pose tangents"),
    ("optim.lr_mlp", 1e-3, "Adam lr for the decoder"),
    ("optim.gamma", 0.1, "lr decay factor reached at the final step"),
    ("optim.warmup_steps", 100, "linear pose-lr warmup length"),
    ("optim.pose_reset_step", 0,
     "reset poses to identity at this step (0 = never)"),
    # 1D pilot
    ("pilot.mode", "filtered", "filtered | unfiltered | full-joint"),
    ("pilot.u0", 4.0, "initial misalignment"),
    ("pilot.trials", 20, "number of random signals"),
    ("pilot.steps", 600, "descent steps per trial"),
    ("pilot.lr", 0.05, "Adam lr on the misalignment"),
    ("pilot.sigma0", 4.0, "initial filter sigma"),
    ("pilot.cutoff_step", 300, "pilot schedule cutoff"),
    ("pilot.half_life", 60.0, "pilot schedule half-life"),
    ("pilot.period", 64.0, "signal period"),
    ("pilot.log_every", 10, "trajectory row interval"),
    ("pilot.sampled_loss", False,
     "use the grid-sampled spline loss instead of the closed form"),
    ("pilot.grid_n", 1024, "samples per period for the sampled loss"),
    # 2D alignment experiment
    ("align2d.texture_size", 256, "square texture side"),
    ("align2d.patch_size", 64, "observed patch side"),
    ("align2d.n_patches", 5, "number of patches (first anchors the gauge)"),
    ("align2d.rank", 8, "per-channel content rank"),
    ("align2d.channels", 3, "content channels"),
    ("align2d.iters", 1500, "optimization steps"),
    ("align2d.init_scale", 0.01, "content factor init scale"),
    ("align2d.perturb_scale", 0.06, "warp perturbation scale"),
    ("align2d.lr_tensor", 0.02, "Adam lr for content components"),
    ("align2d.lr_pose", 5e-3, "Adam lr for warp tangents"),
    ("align2d.pose_warmup", 250, "warp lr warm-up steps"),
    ("align2d.pose_gamma", 1.0, "warp lr decay factor"),
    ("align2d.gamma", 0.1, "lr decay factor"),
    ("align2d.sigma0", 12.0, "initial content-filter sigma, pixels"),
    ("align2d.cutoff_step", 900, "schedule cutoff"),
    ("align2d.half_life", 200.0, "schedule half-life"),
    ("align2d.smooth_supervision", True,
     "also blur the observed patches with the scheduled kernel"),
    ("align2d.log_every", 50, "metric row interval"),
    ("align2d.dtype", "float32", "training dtype"),
    # 3D experiment
    ("joint3d.n_views", 6, "training views"),
    ("joint3d.image_size", 48, "square image side"),
    ("joint3d.grid_base", 16, "initial grid side"),
    ("joint3d.grid_final", 48, "grid side after the last upsample"),
    ("joint3d.rank_density", 8, "density VM rank"),
    ("joint3d.rank_appearance", 24, "appearance VM rank"),
    ("joint3d.feature_dim", 12, "appearance feature length"),
    ("joint3d.hidden", 32, "decoder hidden width"),
    ("joint3d.iters", 1000, "optimization steps"),
    ("joint3d.batch_rays", 256, "rays per step"),
    ("joint3d.pose_noise", 0.05, "stddev of the initial pose tangent noise"),
    ("joint3d.sigma_color_factor", 0.25,
     "appearance kernel sigma as a fraction of the density sigma"),
    ("joint3d.edge_factor", 1.25, "Sobel threshold factor over the mean"),
    ("joint3d.edge_boost", 1.5, "edge pixel loss weight on odd steps"),
    ("joint3d.w1", 1.0, "photometric weight"),
    ("joint3d.w2", 1e-4, "L1 sparsity weight"),
    ("joint3d.w3", 1e-3, "total-variation weight"),
    ("joint3d.log_every", 100, "metric row interval"),
    ("joint3d.dtype", "float32", "training dtype"),
    ("joint3d.fov_x_deg", 60.0, "horizontal field of view"),
    ("joint3d.camera_radius", 2.8, "camera ring radius"),
]
DEFAULTS = {k: d for k, d, _ in CONFIG_REFERENCE}


def load_config(path) -> dict:
    """Flat dotted-key JSON -> validated config dict over the defaults."""
    cfg = dict(DEFAULTS)
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object of dotted keys")
    for key, value in raw.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key!r}")
        default = DEFAULTS[key]
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key}: expected an integer, got {value!r}")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{key}: expected a number, got {value!r}")
            value = float(value)
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"{key}: expected a string, got {value!r}")
        cfg[key] = value
    return cfg


def print_config_reference(file=None) -> None:
    file = file if file is not None else sys.stdout
    width = max(len(k) for k, _, _ in CONFIG_REFERENCE)
    for key, default, desc in CONFIG_REFERENCE:
        print(f"{key:<{width}}  {json.dumps(default):>8}  {desc}", file=file)


def pilot_config(cfg: dict) -> PilotConfig:
    return PilotConfig(
        mode=cfg["pilot.mode"], u0=cfg["pilot.u0"],
        trials=cfg["pilot.trials"], lr=cfg["pilot.lr"],
        steps=cfg["pilot.steps"],
        schedule=KernelSchedule(cfg["pilot.sigma0"], cfg["pilot.cutoff_step"],
                                cfg["pilot.half_life"]),
        period=cfg["pilot.period"], log_every=cfg["pilot.log_every"],
        sampled_loss=cfg["pilot.sampled_loss"], grid_n=cfg["pilot.grid_n"])


def align_config(cfg: dict) -> a2.Align2DConfig:
    return a2.Align2DConfig(
        texture_size=cfg["align2d.texture_size"],
        patch_size=cfg["align2d.patch_size"],
        n_patches=cfg["align2d.n_patches"], rank=cfg["align2d.rank"],
        channels=cfg["align2d.channels"], iters=cfg["align2d.iters"],
        init_scale=cfg["align2d.init_scale"],
        perturb_scale=cfg["align2d.perturb_scale"],
        lr_tensor=cfg["align2d.lr_tensor"], lr_pose=cfg["align2d.lr_pose"],
        pose_warmup=cfg["align2d.pose_warmup"],
        pose_gamma=cfg["align2d.pose_gamma"],
        gamma=cfg["align2d.gamma"], sigma0=cfg["align2d.sigma0"],
        cutoff_step=cfg["align2d.cutoff_step"],
        half_life=cfg["align2d.half_life"],
        max_kernel_length=cfg["kernel.max_length"],
        smooth_supervision=cfg["align2d.smooth_supervision"],
        log_every=cfg["align2d.log_every"], dtype=cfg["align2d.dtype"])


def joint_config(cfg: dict) -> j3.Joint3DConfig:
    return j3.Joint3DConfig(
        n_views=cfg["joint3d.n_views"], image_size=cfg["joint3d.image_size"],
        gt_grid=cfg["joint3d.grid_final"],
        feature_dim=cfg["joint3d.feature_dim"],
        fov_x_deg=cfg["joint3d.fov_x_deg"],
        camera_radius=cfg["joint3d.camera_radius"],
        grid_base=cfg["joint3d.grid_base"],
        grid_final=cfg["joint3d.grid_final"],
        rank_density=cfg["joint3d.rank_density"],
        rank_appearance=cfg["joint3d.rank_appearance"],
        hidden=cfg["joint3d.hidden"], dtype=cfg["joint3d.dtype"],
        iters=cfg["joint3d.iters"], sigma0_3d=cfg["kernel.sigma0_3d"],
        sigma0_2d=cfg["kernel.sigma0_2d"],
        sigma_color_factor=cfg["joint3d.sigma_color_factor"],
        cutoff_step=cfg["kernel.cutoff_step"],
        half_life=cfg["kernel.half_life"],
        random_scaling=cfg["kernel.random_scaling"],
        max_kernel_length=cfg["kernel.max_length"],
        batch_rays=cfg["joint3d.batch_rays"],
        lr_tensor=cfg["optim.lr_tensor"], lr_mlp=cfg["optim.lr_mlp"],
        lr_pose=cfg["optim.lr_pose"], gamma=cfg["optim.gamma"],
        warmup_steps=cfg["optim.warmup_steps"],
        pose_reset_step=cfg["optim.pose_reset_step"],
        w1=cfg["joint3d.w1"], w2=cfg["joint3d.w2"], w3=cfg["joint3d.w3"],
        edge_factor=cfg["joint3d.edge_factor"],
        edge_boost=cfg["joint3d.edge_boost"],
        pose_noise=cfg["joint3d.pose_noise"],
        log_every=cfg["joint3d.log_every"])


# -- reporting helpers --------------------------------------------------


def format_value(x) -> str:
    """CSV cell: strings/integers verbatim, floats at 9 significant digits."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(x) for x in row])


def save_png(path, img: np.ndarray) -> None:
    """8-bit PNG; values clamped to [0,1], no gamma transform."""
    arr = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(path)


def write_manifest(out_dir, command: str, cfg: dict, seed: int,
                   wall_time: float, deterministic: bool) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "deterministic": deterministic,
        "wall_time_s": round(wall_time, 3),
        "config": {k: cfg[k] for k in sorted(cfg)},
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _prepare_out(args):
    os.makedirs(args.out, exist_ok=True)


# -- subcommands --------------------------------------------------------


def cmd_verify_conv(args) -> int:
    rng = substream(args.seed, "verify-conv")
    worst = 0.0
    for case in range(args.cases):
        dims = tuple(int(d) for d in rng.integers(4, args.max_dim + 1, 3))
        rank = int(rng.integers(1, 5))
        sigma = float(rng.uniform(0.5, 2.0))
        t = VMTensor3D.random(dims, rank, scale=1.0, rng=rng)
        kernel = make_kernel_1d(sigma, default_length(sigma))
        view = filter_components_3d(t, kernel)
        sep = view.field.reconstruct_dense()
        w = kernel.weights
        k3 = w[:, None, None] * w[None, :, None] * w[None, None, :]
        brute = brute_force_conv3d(t.reconstruct_dense(), k3)
        err = float(np.abs(sep - brute).max())
        worst = max(worst, err)
        print(f"case {case:2d}  dims={dims}  rank={rank}  "
              f"sigma={sigma:.3f}  max_abs_err={err:.3e}")
    ok = worst <= args.tol
    print(f"worst error {worst:.3e} ({'OK' if ok else 'FAIL'}, "
          f"tolerance {args.tol:g})")
    return 0 if ok else 1


def cmd_bench_conv(args) -> int:
    dims = tuple(int(x) for x in args.dims.split(","))
    if len(dims) != 3:
        raise ConfigError("--dims must be I,J,K")
    report = bench_compare(dims, args.rank, args.klen, reps=args.reps,
                           rng=substream(args.seed, "bench-conv"))
    keys = sorted(report)
    for k in keys:
        print(f"{k}: {format_value(report[k])}")
    if args.out:
        _prepare_out(args)
        write_csv(os.path.join(args.out, "report.csv"), keys,
                  [[report[k] for k in keys]])
    return 0


def cmd_pilot1d(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config)
    _prepare_out(args)
    pcfg = pilot_config(cfg)
    seed = cfg["run.seed"] if args.seed is None else args.seed
    result = run_pilot(pcfg, seed)
    write_csv(os.path.join(args.out, "trajectories.csv"),
              ["trial", "step", "u", "loss"], result["rows"])
    us = np.linspace(-6.0, 6.0, 49)
    kappas = [k / pcfg.period for k in range(1, 9)]
    write_csv(os.path.join(args.out, "transfer_grid.csv"),
              ["u", "kappa", "H", "H_tilde"],
              transfer_grid(us, kappas, pcfg.schedule.sigma0))
    final = np.array(result["final_u"])
    print(f"pilot mode={pcfg.mode}: {np.isfinite(final).sum()}/{final.size} "
          f"finite, median |u| = {np.nanmedian(np.abs(final)):.4g}")
    write_manifest(args.out, "pilot1d", cfg, seed,
                   time.monotonic() - t0, args.deterministic)
    return 0


def _warp_overlay(problem, state) -> np.ndarray:
    """Texture with ground-truth (green) and recovered (red) patch outlines."""
    size = problem.texture.shape[0]
    img = Image.fromarray(
        np.round(np.clip(problem.texture, 0, 1) * 255).astype(np.uint8))
    draw = ImageDraw.Draw(img)
    m = float(np.abs(problem.coords).max())
    corners = np.array([[-m, -m], [m, -m], [m, m], [-m, m]]).T
    for tangents, color in ((problem.gt_tangents, (0, 255, 0)),
                            ([w.value for w in state.warps], (255, 0, 0))):
        for xi in tangents:
            warped = warp2d(np.asarray(xi), corners)
            px = a2.norm_to_pixel(np.asarray(warped.value), size)
            # image array is indexed [x, y]; PIL draws in (col, row) = (y, x)
            pts = [(float(px[1, i]), float(px[0, i])) for i in range(4)]
            draw.polygon(pts, outline=color)
    return np.asarray(img, dtype=float) / 255.0


def cmd_align2d(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config)
    _prepare_out(args)
    acfg = align_config(cfg)
    seed = cfg["run.seed"] if args.seed is None else args.seed
    texture = None
    if args.image:
        arr = np.asarray(Image.open(args.image).convert("RGB"), float) / 255.0
        side = min(arr.shape[:2])
        texture = np.transpose(arr[:side, :side], (1, 0, 2)).copy()
        acfg = dataclasses.replace(acfg, texture_size=side)
    sigma0 = 0.0 if args.naive else None
    state, problem, rows = a2.train_planar(acfg, seed, sigma0=sigma0,
                                           texture=texture)
    write_csv(os.path.join(args.out, "metrics.csv"),
              ["step", "warp_error", "psnr", "sigma"], rows)
    recovered = np.clip(state.field.reconstruct_dense(), 0.0, 1.0)
    save_png(os.path.join(args.out, "recovered_content.png"),
             np.transpose(recovered, (1, 0, 2)))
    save_png(os.path.join(args.out, "warp_overlay.png"),
             np.transpose(_warp_overlay(problem, state), (1, 0, 2)))
    err, q = a2.eval_planar(state, problem)
    print(f"align2d: warp_error={err:.5f} psnr={q:.2f} dB")
    write_manifest(args.out, "align2d", cfg, seed,
                   time.monotonic() - t0, args.deterministic)
    return 0


def cmd_toy3d(args) -> int:
    t0 = time.monotonic()
    cfg = load_config(args.config)
    _prepare_out(args)
    jcfg = joint_config(cfg)
    seed = cfg["run.seed"] if args.seed is None else args.seed
    sigma0_3d = 0.0 if args.naive else None
    sigma0_2d = 0.0 if args.naive else None
    result = j3.train_joint(jcfg, seed, sigma0_3d=sigma0_3d,
                            sigma0_2d=sigma0_2d)
    write_csv(os.path.join(args.out, "metrics.csv"),
              ["step", "rot_err_deg", "trans_err", "psnr",
               "sigma_3d", "sigma_2d"], result["rows"])
    state, problem = result["state"], result["problem"]
    rcfg = dataclasses.replace(problem.render,
                               n_samples=2 * state.density.dims[0])
    for i in range(jcfg.n_views):
        save_png(os.path.join(args.out, f"gt_{i}.png"), problem.images[i])
        img = render_image(state.density, state.feature, state.decoder,
                           state.poses[i].value, problem.intrinsics,
                           problem.image_size, problem.image_size, rcfg)
        save_png(os.path.join(args.out, f"view_{i}.png"), img)
    save_field(os.path.join(args.out, "density.tpt"), state.density)
    save_field(os.path.join(args.out, "appearance.tpt"), state.feature)
    save_tangents(os.path.join(args.out, "poses.txt"),
                  [p.value for p in state.poses])
    np.savez(os.path.join(args.out, "decoder.npz"),
             **{p_name: p.value for p_name, p in
                zip(("w1", "b1", "w2", "b2"), state.decoder.params())})
    rot0, tr0 = result["initial_errors"]
    rot1, tr1 = result["final_errors"]
    print(f"toy3d: rotation error {rot0:.3f} -> {rot1:.3f} deg, "
          f"center error {tr0:.4f} -> {tr1:.4f}")
    write_manifest(args.out, "toy3d", cfg, seed,
                   time.monotonic() - t0, args.deterministic)
    return 0


def cmd_gradcheck(args) -> int:
    from . import autodiff as ad

    failures = []

    def report(name, result):
        err = result["max_rel_error"]
        ok = err <= args.tol
        print(f"{name:<24} max_rel_error={err:.3e} "
              f"({result['n_checked']} coords) {'OK' if ok else 'FAIL'}")
        if not ok:
            failures.append(name)

    rng = substream(args.seed, "gradcheck")
    a = ad.leaf(rng.normal(size=(4, 5)))
    b = ad.leaf(rng.normal(size=(5, 3)))
    c = ad.leaf(rng.normal(size=3))

    def composite():
        y = ad.sigmoid(a @ b) + ad.softplus(c)
        z = ad.conv1d_same(y * y, np.array([0.25, 0.5, 0.25]))
        return (ad.exp(-0.5 * z) * ad.sin(z)).sum()

    report("ops-composite", grad_check(composite, [a, b, c], rng=rng))

    field = VMTensor3D.random((5, 4, 6), 2, scale=0.5, rng=rng)
    qx = ad.Tensor(rng.uniform(0, 4, 30))
    qy = ad.Tensor(rng.uniform(0, 3, 30))
    qz = ad.Tensor(rng.uniform(0, 5, 30))

    def field_loss():
        view = filter_components_3d(field, make_kernel_1d(0.8, 5))
        return (view.sample(qx, qy, qz) ** 2).sum()

    report("filtered-field-sample",
           grad_check(field_loss, field.params(), rng=rng, max_coords=8))
    return 0 if not failures else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tensorpose",
        description="Joint pose/content refinement with filtered low-rank "
                    "tensor fields.")
    parser.add_argument("--version", action="version",
                        version=f"tensorpose {__version__}")
    parser.add_argument("--print-config-reference", action="store_true",
                        help="print all config keys with defaults and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p, out_required=True):
        p.add_argument("--config", default=None,
                       help="flat dotted-key JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override run.seed")
        p.add_argument("--out", required=out_required,
                       help="output directory (all writes stay inside)")
        p.add_argument("--deterministic", action="store_true",
                       help="single-threaded, byte-stable outputs")

    p = sub.add_parser("verify-conv",
                       help="check component filtering against dense "
                            "brute-force convolution")
    p.add_argument("--cases", type=int, default=20)
    p.add_argument("--max-dim", type=int, default=16)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_conv)

    p = sub.add_parser("bench-conv",
                       help="time component filtering vs brute force")
    p.add_argument("--dims", default="32,32,32")
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--klen", type=int, default=9)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench_conv)

    p = sub.add_parser("pilot1d", help="1D alignment basin experiment")
    common(p)
    p.set_defaults(func=cmd_pilot1d)

    p = sub.add_parser("align2d", help="planar patch alignment experiment")
    common(p)
    p.add_argument("--image", default=None,
                   help="optional PNG to use as the texture")
    p.add_argument("--naive", action="store_true",
                   help="disable the filter schedule (sigma0 = 0)")
    p.set_defaults(func=cmd_align2d)

    p = sub.add_parser("toy3d", help="3D joint pose/content experiment")
    common(p)
    p.add_argument("--naive", action="store_true",
                   help="disable the filter schedule (sigma0 = 0)")
    p.set_defaults(func=cmd_toy3d)

    p = sub.add_parser("gradcheck",
                       help="finite-difference audit of the gradient engine")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config_reference:
        print_config_reference()
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if getattr(args, "deterministic", False):
            # pin BLAS pools to one thread so reduction order is stable
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=1):
                return args.func(args)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
