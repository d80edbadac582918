"""CLI entrypoint for pnp-sr."""

from __future__ import annotations

import argparse
import dataclasses
import shlex
import sys
import tomllib
from pathlib import Path
from typing import Any, Callable, Iterable, List, Sequence, Tuple

import yaml
from PIL import UnidentifiedImageError

from . import bench, config as config_module, degrade as degrade_module, dpsr, image_core, kernels, metrics, plotting
from .logging import RunLogger
from .prior import parse_prior_selector, prior_from_config
from .types import DegradationSpec, SolverParams, Trace
from .validate import InvalidArgumentError, PnpSrError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _pick(flag: Any, fallback: Any) -> Any:
    return fallback if flag is None else flag


def _repro(command: str, options: Sequence[Tuple[str, Any]]) -> str:
    """Command line that reruns *command* with every effective parameter spelled out."""

    words: List[str] = ["pnp-sr", command]
    for name, value in options:
        if value is None or value is False:
            continue
        if value is True:
            words.append(name)
            continue
        if not name:
            words.append(str(value))
            continue
        if isinstance(value, (list, tuple)):
            if value:
                words.extend([name, *(str(v) for v in value)])
            continue
        words.extend([name, repr(value) if isinstance(value, float) else str(value)])
    return "repro: " + shlex.join(words)


def _load_config(ns: argparse.Namespace) -> config_module.Config:
    return config_module.Config.load(ns.config)


def _logger(ns: argparse.Namespace, cfg: config_module.Config) -> RunLogger:
    return RunLogger(_pick(ns.log_dir, cfg.logging.dir), stream=True if cfg.logging.stream else None)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _cmd_kernel(ns: argparse.Namespace) -> int:
    family = ns.family
    if family == "gaussian":
        sigma_x = _pick(ns.sigma_x, ns.sigma)
        if sigma_x is None:
            raise InvalidArgumentError("gaussian kernels need --sigma or --sigma-x")
        spec = {
            "family": family,
            "size": _pick(ns.size, 15),
            "sigma_x": sigma_x,
            "sigma_y": _pick(ns.sigma_y, sigma_x),
            "theta": _pick(ns.theta, 0.0),
        }
        options = [("--size", spec["size"]), ("--sigma-x", spec["sigma_x"]), ("--sigma-y", spec["sigma_y"]), ("--theta", spec["theta"])]
    elif family == "disk":
        if ns.radius is None:
            raise InvalidArgumentError("disk kernels need --radius")
        spec = {"family": family, "radius": ns.radius}
        options = [("--radius", ns.radius)]
    elif family == "motion":
        spec = {
            "family": family,
            "seed": _pick(ns.seed, 0),
            "size": _pick(ns.size, 25),
            "steps": _pick(ns.steps, 64),
            "anxiety": _pick(ns.anxiety, 0.1),
        }
        options = [("--seed", spec["seed"]), ("--size", spec["size"]), ("--steps", spec["steps"]), ("--anxiety", spec["anxiety"])]
    else:
        spec = {"family": "delta"}
        options = []
    kernel = kernels.kernel_from_spec(spec)
    kernels.write_kernel(kernel, ns.out)
    if ns.preview:
        kernels.kernel_to_png(kernel, ns.preview, zoom=ns.zoom)
    print(_repro("kernel", [("", family), *options, ("-o", ns.out), ("--preview", ns.preview), ("--zoom", ns.zoom if ns.preview else None)]))
    return EXIT_OK


def _cmd_degrade(ns: argparse.Namespace) -> int:
    hr = image_core.read_png(ns.hr)
    kernel = kernels.read_kernel(ns.kernel)
    if ns.modcrop:
        hr = image_core.crop_to_multiple(hr, ns.scale)
    spec = DegradationSpec(kernel, ns.scale, ns.sigma, ns.seed)
    lr = degrade_module.degrade(hr, spec)
    image_core.write_png(lr, ns.out)
    print(
        _repro(
            "degrade",
            [
                ("--hr", ns.hr),
                ("--kernel", ns.kernel),
                ("--scale", spec.scale),
                ("--sigma", float(spec.sigma)),
                ("--seed", spec.seed),
                ("--modcrop", ns.modcrop),
                ("-o", ns.out),
            ],
        )
    )
    return EXIT_OK


def _cmd_sr(ns: argparse.Namespace) -> int:
    cfg = _load_config(ns)
    params = SolverParams(
        lam=float(_pick(ns.lam, cfg.solver.lam)),
        iterations=int(_pick(ns.iters, cfg.solver.iterations)),
        nu_start=float(_pick(ns.nu_start, cfg.solver.nu_start)),
        nu_floor_min=float(_pick(ns.nu_floor, cfg.solver.nu_floor_min)),
        edge_taper=bool(ns.edge_taper or cfg.solver.edge_taper),
    )
    base_prior = dataclasses.replace(
        cfg.prior,
        threshold_factor=float(_pick(ns.prior_threshold, cfg.prior.threshold_factor)),
        window=int(_pick(ns.prior_window, cfg.prior.window)),
        stride=int(_pick(ns.prior_stride, cfg.prior.stride)),
        timeout_sec=_pick(ns.prior_timeout, cfg.prior.timeout_sec),
    )
    prior_cfg = parse_prior_selector(ns.prior, base_prior) if ns.prior else base_prior
    y = image_core.read_png(ns.lr)
    kernel = kernels.read_kernel(ns.kernel)
    ground_truth = image_core.read_png(ns.gt) if ns.gt else None
    prior = prior_from_config(prior_cfg)
    out = Path(ns.out)
    trace_path = Path(ns.trace) if ns.trace else out.with_suffix(".csv")
    builtin = prior_cfg.kind == "builtin"
    prior_flag = "builtin" if builtin else f"exec:{prior_cfg.command}"
    repro = _repro(
        "sr",
        [
            ("--lr", ns.lr),
            ("--kernel", ns.kernel),
            ("--scale", ns.scale),
            ("--sigma", float(ns.sigma)),
            ("--iters", params.iterations),
            ("--lambda", params.lam),
            ("--nu-start", params.nu_start),
            ("--nu-floor", params.nu_floor_min),
            ("--prior", prior_flag),
            ("--prior-threshold", float(prior_cfg.threshold_factor) if builtin else None),
            ("--prior-window", prior_cfg.window if builtin else None),
            ("--prior-stride", prior_cfg.stride if builtin else None),
            ("--prior-timeout", None if builtin or prior_cfg.timeout_sec is None else float(prior_cfg.timeout_sec)),
            ("--edge-taper", params.edge_taper),
            ("--gt", ns.gt),
            ("-o", str(out)),
            ("--trace", str(trace_path)),
            ("--config", ns.config),
        ],
    )

    logger = _logger(ns, cfg)
    logger.log_text("repro", repro + "\n")
    x, trace = dpsr.run_dpsr(y, kernel, ns.scale, ns.sigma, params, prior, ground_truth, logger=logger)
    image_core.write_png(x, out)
    trace.write_csv(trace_path)
    print(repro)
    last = trace.records[-1]
    if last.psnr is not None:
        print(f"psnr={last.psnr:.2f} after {len(trace)} iterations")
    return EXIT_OK


def _cmd_eval(ns: argparse.Namespace) -> int:
    a = image_core.read_png(ns.a)
    b = image_core.read_png(ns.b)
    report = metrics.evaluate(a, b, border_crop=ns.crop)
    print(f"psnr={report.psnr:.4f} ssim={report.ssim:.4f}")
    if ns.per_channel:
        for c, (p, s) in enumerate(report.per_channel):
            print(f"channel {c}: psnr={p:.4f} ssim={s:.4f}")
    return EXIT_OK


def _cmd_bench(ns: argparse.Namespace) -> int:
    cfg = _load_config(ns)
    if ns.dataset is not None:
        cfg = dataclasses.replace(cfg, bench=dataclasses.replace(cfg.bench, dataset=ns.dataset))
    logger = _logger(ns, cfg)
    jobs = _pick(ns.jobs, cfg.bench.jobs)
    output_dir = _pick(ns.out, cfg.bench.output_dir)
    repro = _repro(
        "bench",
        [
            ("--config", ns.config),
            ("--dataset", cfg.bench.dataset),
            ("--jobs", jobs),
            ("--out", output_dir),
        ],
    )
    logger.log_text("repro", repro + "\n")
    logger.log_json("bench_config", dataclasses.asdict(cfg.bench))
    result = bench.run_bench(cfg, jobs=jobs, output_dir=output_dir, logger=logger)
    print(repro)
    for row in result.summary:
        print(
            f"x{row['scale']} {row['kernel_id']} sigma={row['sigma']!r} {row['method']}: "
            f"psnr={row['psnr']:.2f} ssim={row['ssim']:.4f}"
        )
    if result.failures:
        print(f"{result.failures} cell(s) failed; see {result.cells_path}", file=sys.stderr)
    return EXIT_OK


def _cmd_plot(ns: argparse.Namespace) -> int:
    paths = [ns.trace, *(ns.compare or [])]
    labels = list(ns.labels or [])
    if labels and len(labels) != len(paths):
        raise InvalidArgumentError(f"got {len(labels)} labels for {len(paths)} traces")
    labels = labels or [Path(p).stem for p in paths]
    traces = [(label, Trace.read_csv(p)) for label, p in zip(labels, paths)]
    plotting.save_trace_plot(traces, ns.out)
    print(_repro("plot", [("", ns.trace), ("--compare", ns.compare), ("--labels", ns.labels), ("-o", ns.out)]))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonnegative_float(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"expected a value >= 0, got {text}")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pnp-sr", description="Plug-and-play super-resolution for arbitrary blur kernels.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel", help="Generate a blur kernel file")
    p.add_argument("family", choices=("gaussian", "disk", "motion", "delta"))
    p.add_argument("--size", type=_positive_int, default=None)
    p.add_argument("--sigma", type=float, default=None, help="Isotropic Gaussian width")
    p.add_argument("--sigma-x", type=float, default=None)
    p.add_argument("--sigma-y", type=float, default=None)
    p.add_argument("--theta", type=float, default=None, help="Gaussian rotation in radians")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=_positive_int, default=None, help="Motion trajectory steps")
    p.add_argument("--anxiety", type=_nonnegative_float, default=None)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--preview", default=None, help="Also write a max-normalized PNG preview")
    p.add_argument("--zoom", type=_positive_int, default=8)
    p.set_defaults(handler=_cmd_kernel)

    p = sub.add_parser("degrade", help="Synthesize an LR image from an HR image")
    p.add_argument("--hr", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--scale", type=_positive_int, required=True)
    p.add_argument("--sigma", type=_nonnegative_float, default=0.0, help="Noise level in 8-bit units")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--modcrop", action="store_true", help="Crop the HR image to a multiple of the scale first")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=_cmd_degrade)

    p = sub.add_parser("sr", help="Super-resolve a blurry, noisy LR image")
    p.add_argument("--lr", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--scale", type=_positive_int, required=True)
    p.add_argument("--sigma", type=_nonnegative_float, default=0.0)
    p.add_argument("--iters", type=_positive_int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--nu-start", type=float, default=None)
    p.add_argument("--nu-floor", type=float, default=None)
    p.add_argument("--prior", default=None, help="builtin | exec:<command>")
    p.add_argument("--prior-threshold", type=_nonnegative_float, default=None, help="Built-in prior hard-threshold factor")
    p.add_argument("--prior-window", type=_positive_int, default=None)
    p.add_argument("--prior-stride", type=_positive_int, default=None)
    p.add_argument("--prior-timeout", type=float, default=None, help="Seconds per external prior call")
    p.add_argument("--edge-taper", action="store_true")
    p.add_argument("--gt", default=None, help="Ground-truth HR image for the PSNR column")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--trace", default=None, help="Trace CSV path (defaults to the output with .csv)")
    p.add_argument("--config", default=None)
    p.add_argument("--log-dir", default=None)
    p.set_defaults(handler=_cmd_sr)

    p = sub.add_parser("eval", help="PSNR/SSIM between two images")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--crop", type=int, default=0, help="Border pixels excluded from PSNR")
    p.add_argument("--per-channel", action="store_true")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("bench", help="Run a degradation grid over a dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--jobs", type=_positive_int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--log-dir", default=None)
    p.set_defaults(handler=_cmd_bench)

    p = sub.add_parser("plot", help="Plot convergence traces")
    p.add_argument("trace")
    p.add_argument("--compare", nargs="*", default=None)
    p.add_argument("--labels", nargs="*", default=None)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=_cmd_plot)
    return parser


def main(argv: Iterable[str] | None = None) -> int:
    ns = _build_parser().parse_args(list(argv) if argv is not None else None)
    handler: Callable[[argparse.Namespace], int] = ns.handler
    try:
        return handler(ns)
    except InvalidArgumentError as exc:
        print(f"pnp-sr {ns.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PnpSrError as exc:
        print(f"pnp-sr {ns.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (FileNotFoundError, UnidentifiedImageError, yaml.YAMLError, tomllib.TOMLDecodeError, ValueError) as exc:
        print(f"pnp-sr {ns.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
