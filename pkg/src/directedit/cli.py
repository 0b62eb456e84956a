"""Command-line entry point: ``synth``, ``edit``, ``mask`` and ``metrics``.

Exit codes: 0 success, 2 input or configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path


from . import config as run_config
from . import metrics, plotting, safc
from .core import DirectEditError, InvalidArgument, NotFound, SeedSpec, make_schedule
from .engine import EditRuntimeError, run_edit
from .io import atomic_write, encode_pgm, encode_ppm, read_fdt, write_fdt
from .scenes import build_field, make_condition, parse_manifest, relevance_maps, render_scene

log = logging.getLogger("directedit")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
DIAGNOSTIC_COLUMNS = ("step_index", "t", "n_samples", "v_norm", "mask_coverage", "d_bar_norm")
REPORT_COLUMNS = ("ssim_mean", "warp_ssim", "warp_l1", "warp_l2", "bg_preservation")


def _load_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InvalidArgument(f"{what} not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{what} is not valid JSON: {exc}") from None


def _read_tensor(path, what, channels=None):
    try:
        arr = read_fdt(path)
    except FileNotFoundError:
        raise InvalidArgument(f"{what} not found: {path}") from None
    if channels is not None and arr.shape[3] != channels:
        raise InvalidArgument(f"{what} must have {channels} channel(s), got {arr.shape[3]}")
    return arr


def _write_frames(directory: Path, prefix: str, video) -> None:
    for t, frame in enumerate(video):
        atomic_write(directory / f"{prefix}_{t:03d}.ppm", encode_ppm(frame))


def _csv(rows, columns) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue().encode()


def _out_dir(args, fallback=None) -> Path:
    out = getattr(args, "out", None) or fallback
    if out is None:
        raise InvalidArgument("no output directory: pass --out")
    return Path(out)


# -- commands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    doc = _load_json(args.manifest, "manifest")
    spec = parse_manifest(doc)
    seed = SeedSpec(args.seed) if getattr(args, "seed", None) is not None else None
    bundle = render_scene(spec, seed, manifest=doc)
    out = _out_dir(args)
    write_fdt(out / "video.fdt", bundle.video)
    write_fdt(out / "flow.fdt", bundle.flow)
    for i, m in enumerate(bundle.object_masks):
        write_fdt(out / f"mask_{i}.fdt", m[..., None])
    _write_frames(out / "frames", "frame", bundle.video)
    atomic_write(out / "manifest.json", (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode())
    log.info("scene %s written to %s (flow exact: %s)", spec.canvas, out, bundle.flow_exact)
    return EXIT_OK


def run_from_config(cfg: dict, out: Path, plots: bool = True):
    """Execute a resolved run config and write every artifact into ``out``."""
    spec = parse_manifest(_load_json(cfg["scene"], "scene manifest"))
    bundle = render_scene(spec)
    field = build_field(spec)
    c_src = make_condition(spec, cfg["c_src"])
    c_tar = make_condition(spec, cfg["c_tar"])
    mask_cfg = run_config.mask_config(cfg) if cfg["safc"]["enabled"] else None
    attention = None
    if mask_cfg is not None and mask_cfg.provider == "scripted":
        attention = safc.ScriptedAttention(relevance_maps(spec), cfg["safc"]["attention_noise"], cfg["master_seed"])
    result = run_edit(
        bundle.video, c_src, c_tar,
        make_schedule(cfg["schedule"]["n_total"], cfg["schedule"]["n_skip"]),
        field,
        safc=mask_cfg,
        dag=run_config.dag_config(cfg) if cfg["dag"]["enabled"] else None,
        seed=SeedSpec(cfg["master_seed"]),
        cfg=(cfg["cfg"]["s_src"], cfg["cfg"]["s_tar"]),
        n_samples=cfg["n_samples"],
        attention=attention,
    )
    write_fdt(out / "edited.fdt", result.video)
    _write_frames(out / "frames", "edited", result.video)
    rows = [(d.step_index, d.t, d.n_samples, d.v_norm, d.mask_coverage, d.d_bar_norm) for d in result.diagnostics]
    atomic_write(out / "diagnostics.csv", _csv(rows, DIAGNOSTIC_COLUMNS))
    if plots:
        plotting.plot_diagnostics(result.diagnostics, out / "diagnostics.png")
    atomic_write(out / "resolved-config.json", run_config.echo(cfg).encode())
    return result


def cmd_edit(args) -> int:
    cfg = run_config.load(args.config)
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2**64:
            raise run_config.ConfigError("--seed", "must be a 64-bit unsigned integer")
        cfg["master_seed"] = args.seed
    out = _out_dir(args, cfg["output"])
    result = run_from_config(cfg, out, plots=not args.no_plots)
    log.info("edited %d steps into %s", len(result.diagnostics), out)
    return EXIT_OK


def cmd_mask(args) -> int:
    if args.kernel < 1 or args.kernel % 2 == 0:
        raise InvalidArgument(f"--kernel must be an odd integer >= 1, got {args.kernel}")
    a_src = _read_tensor(args.a_src, "source attention", channels=1)[..., 0]
    a_tar = _read_tensor(args.a_tar, "target attention", channels=1)[..., 0]
    if a_src.shape != a_tar.shape:
        raise InvalidArgument(f"attention shapes differ: {a_src.shape} vs {a_tar.shape}")
    cfg = safc.MaskConfig(args.kernel, args.delta, args.soften)
    mask = safc.build_mask(a_src, a_tar, cfg)
    out = _out_dir(args)
    write_fdt(out / "mask.fdt", mask[..., None])
    for t, frame in enumerate(mask):
        atomic_write(out / f"mask_{t:03d}.pgm", encode_pgm(frame))
    log.info("mask coverage %.4f written to %s", float(mask.mean()), out)
    return EXIT_OK


def cmd_metrics(args) -> int:
    edited = _read_tensor(args.edited, "edited video")
    source = _read_tensor(args.source, "source video")
    flow = _read_tensor(args.flow, "flow", channels=2)
    if edited.shape != source.shape:
        raise InvalidArgument(f"edited {edited.shape} and source {source.shape} shapes differ")
    region = None
    if args.region:
        region = _read_tensor(args.region, "edit region", channels=1)[..., 0]
    report = metrics.evaluate(edited, source, flow, region, args.pairing)
    out = _out_dir(args)
    values = report.as_dict()
    atomic_write(out / "report.json", (json.dumps(values, indent=2) + "\n").encode())
    atomic_write(out / "report.csv", _csv([[values[k] for k in REPORT_COLUMNS]], REPORT_COLUMNS))
    if not args.no_plots:
        plotting.plot_warp_pairs(metrics.warp_pairs(edited, flow, source, args.pairing), out / "warp_pairs.png")
    log.info("metrics written to %s", out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="override the master seed")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="only report errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="directedit", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="render a synthetic scene from a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("edit", parents=[common], help="run an edit from a JSON config")
    p.add_argument("config")
    p.add_argument("--no-plots", action="store_true", help="skip the diagnostics figure")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("mask", parents=[common], help="build an editing mask from two attention tensors")
    p.add_argument("a_src")
    p.add_argument("a_tar")
    p.add_argument("--kernel", type=int, default=11)
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--soften", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("metrics", parents=[common], help="SSIM and warp metrics for an edited video")
    p.add_argument("edited")
    p.add_argument("source")
    p.add_argument("flow")
    p.add_argument("region", nargs="?")
    p.add_argument("--pairing", choices=metrics.PAIRINGS, default="consecutive")
    p.add_argument("--no-plots", action="store_true", help="skip the per-pair figure")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s", force=True)
    try:
        return args.func(args)
    except EditRuntimeError as exc:
        log.error("runtime error: %s", exc)
        return EXIT_RUNTIME
    except (InvalidArgument, NotFound, OSError) as exc:
        log.error("error: %s", exc)
        return EXIT_INPUT
    except DirectEditError as exc:
        log.error("runtime error: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
