"""Command-line entry points.

``mosvox`` runs the segmentation pipeline over a scan directory;
``mosvox-synth`` materializes the synthetic reference scene.  Exit codes:
0 success, 1 manifest/config error, 2 data-format error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import _kernels, __version__
from .config import MODES, Config, load_config
from .errors import ConfigError, EvaluationError, FormatError, ManifestError
from .pipeline import build_manifest, run
from .scan_io import SCAN_FORMATS, read_scan, write_ply
from .synthetic import reference_scene, write_dataset

log = logging.getLogger("mosvox")

EXIT_OK = 0
EXIT_MANIFEST = 1
EXIT_FORMAT = 2
EXIT_INTERNAL = 3


def _setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _run_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mosvox",
        description="Label each LiDAR scan point static or dynamic via voxel "
        "HMM occupancy filtering.",
    )
    p.add_argument("--scans", required=True, help="directory of scan files")
    p.add_argument("--poses", required=True, help="pose file (12 reals per line, 3x4)")
    p.add_argument("--out", required=True, help="output directory for label files")
    p.add_argument("--gt", help="ground-truth label directory (sparse allowed)")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--mode", choices=MODES, help="override config mode")
    p.add_argument(
        "--range-limit", type=float, help="evaluate only points within this range (m)"
    )
    p.add_argument("--export-ply", help="directory for colored debug clouds")
    p.add_argument("--scan-format", choices=SCAN_FORMATS, default="kitti-bin")
    p.add_argument("--verbose", action="store_true", help="per-scan debug logging")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = _run_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        config = load_config(args.config) if args.config else Config()
        if args.mode:
            config.mode = args.mode
            config.validate()
        manifest = build_manifest(
            scan_dir=args.scans,
            pose_path=args.poses,
            out_dir=args.out,
            config=config,
            gt_dir=args.gt,
            range_limit=args.range_limit,
            export_ply_dir=args.export_ply,
            scan_format=args.scan_format,
        )
        log.info("backend: %s", _kernels.active_name())
        report = run(manifest)
    except (ConfigError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    except (FormatError, EvaluationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except Exception as exc:  # invariant violation or bug
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    print(report.latency_line())
    table = report.table()
    if table is not None:
        print(table)
    return EXIT_OK


def export_debug_cloud(scan_path, label_path, out_path, scan_format="kitti-bin"):
    """Colorize one scan with its labels and write a ply debug cloud."""
    from .scan_io import read_labels

    scan = read_scan(scan_path, scan_format)
    labels = read_labels(label_path)
    if len(scan) != labels.shape[0]:
        raise FormatError("scan/label length mismatch in debug export")
    write_ply(scan.points, labels, out_path)


def _synth_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mosvox-synth",
        description="Write the synthetic reference scene (scans, poses, labels).",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=120, help="number of scans")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument(
        "--jitter", type=float, default=0.0, help="uniform range jitter (m)"
    )
    p.add_argument("--no-movers", action="store_true", help="static world variant")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def synth_main(argv=None) -> int:
    args = _synth_parser().parse_args(argv)
    _setup_logging(False)
    try:
        spec = reference_scene(count=args.count, seed=args.seed, range_jitter=args.jitter)
        if args.no_movers:
            spec = replace(spec, movers=())
        paths = write_dataset(spec, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    print(
        f"wrote {paths['count']} scans to {paths['scan_dir']}, poses to "
        f"{paths['pose_file']}, labels to {paths['label_dir']}"
    )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
