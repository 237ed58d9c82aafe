"""Backend benchmark: native extension vs numpy fallback on the reference
scene, with a per-kernel breakdown and an output-equality check."""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import _kernels
from .config import Config
from .pipeline import Pipeline
from .synthetic import generate, reference_scene


def _time_pipeline(backend_name: str, scans, poses):
    backend = _kernels.get_backend(backend_name)
    pipeline = Pipeline(Config(), backend=backend)
    seconds = []
    label_blobs = []
    for k, (scan, pose) in enumerate(zip(scans, poses)):
        result = pipeline.process(scan.points, pose, k)
        seconds.append(result.stats.seconds)
        label_blobs.append(result.labels)
    return np.array(seconds), label_blobs


def _time_kernels(backend_name: str, scans, poses, repeats=3):
    """Micro-times the individual kernels on a representative mid-run scan."""
    from .core import build_transition_model
    from .integrate import build_voxelized_scan, compute_edf, enumerate_observed

    backend = _kernels.get_backend(backend_name)
    cfg = Config()
    warm = Pipeline(cfg, backend=backend)
    mid = len(scans) // 2
    for k in range(mid):
        warm.process(scans[k].points, poses[k], k)
    pts = scans[mid].points
    pose = poses[mid]
    keep = np.linalg.norm(pts, axis=1) >= cfg.min_range
    vscan = build_voxelized_scan(pose.apply(pts), pose.translation, cfg.delta, keep)
    model = build_transition_model(cfg.self_transition)

    out = {}

    def clock(name, fn):
        best = min(_timed(fn) for _ in range(repeats))
        out[name] = best

    def _timed(fn):
        t0 = time.perf_counter()
        fn()
        return time.perf_counter() - t0

    clock("raycast", lambda: enumerate_observed(vscan, cfg.r_max, cfg.delta, backend))
    keys, packed = enumerate_observed(vscan, cfg.r_max, cfg.delta, backend)
    clock(
        "edf",
        lambda: compute_edf(keys, vscan.keys, cfg.delta, cfg.edf_truncation, backend),
    )
    edf = compute_edf(keys, vscan.keys, cfg.delta, cfg.edf_truncation, backend)
    lik = np.exp(-(edf * edf) / (2.0 * cfg.sigma_o**2))
    clock(
        "hmm",
        lambda: warm.map.observe_batch(packed, keys, lik, model, cfg.p_min, mid),
    )
    seeds = warm.map.changed_within(mid, cfg.w_local)
    clock(
        "convolve",
        lambda: backend.neighbor_counts(vscan.packed, seeds, (cfg.kernel_size - 1) // 2),
    )
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mosvox-bench", description="Compare kernel backends."
    )
    parser.add_argument("--count", type=int, default=40, help="scans to process")
    args = parser.parse_args(argv)

    spec = reference_scene(count=args.count)
    scans, poses, _ = generate(spec)
    backends = _kernels.available()
    print(f"backends: {', '.join(backends)} (active: {_kernels.active_name()})")
    print(f"scene: {args.count} scans x {scans[0].points.shape[0]} rays\n")

    results = {}
    labels = {}
    for name in backends:
        seconds, blobs = _time_pipeline(name, scans, poses)
        results[name] = seconds
        labels[name] = blobs
        kern = _time_kernels(name, scans, poses)
        kern_txt = "  ".join(f"{k} {v * 1e3:6.1f} ms" for k, v in kern.items())
        print(
            f"{name:>6}: mean {seconds.mean() * 1e3:7.1f} ms/scan  "
            f"p95 {np.percentile(seconds, 95) * 1e3:7.1f} ms   [{kern_txt}]"
        )

    if len(backends) == 2:
        a, b = (results[n].mean() for n in backends)
        fast, slow = (backends[0], backends[1]) if a < b else (backends[1], backends[0])
        ratio = results[slow].mean() / results[fast].mean()
        print(f"\n{fast} is {ratio:.2f}x faster than {slow}")
        same = all(
            np.array_equal(x, y) for x, y in zip(labels[backends[0]], labels[backends[1]])
        )
        print(f"label agreement: {'identical' if same else 'MISMATCH'}")
        if not same:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
