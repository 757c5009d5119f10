"""Command line entry point.

Subcommands: `run` (start the service), `process` (one frame through the
whole pipeline), `train-ngram` (fit and save the native backend model),
`score` (meaning-survey report from a responses CSV), and `bench` (per-stage
timing percentiles against the latency budget). Everything except `run` is
headless: no network, no UI.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import numpy as np

from .config import ConfigError, load_assets, load_config
from .engine import PipelineError, run_pipeline_once
from .metrics import (
    component_report,
    correlation_matrix,
    default_component_map,
    load_component_map,
    load_responses_csv,
    render_report,
    report_to_dict,
)
from .poet import save_ngram, train_ngram, load_corpus
from .vision import read_pgm

DEFAULT_BUDGET_MS = 800.0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affectmirror",
        description="affective mirror: detection, classification, poem generation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="start the mirror service")
    p_run.add_argument("--config", required=True)

    p_proc = sub.add_parser("process", help="run one image through the pipeline")
    p_proc.add_argument("--image", required=True, help="binary PGM (P5) frame")
    p_proc.add_argument("--config", required=True)
    p_proc.add_argument("--seed", type=int, default=None, help="rng seed")

    p_train = sub.add_parser("train-ngram", help="train the native n-gram backend")
    p_train.add_argument("--corpus", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--order", type=int, default=3)
    p_train.add_argument("--alpha", type=float, default=0.01)

    p_score = sub.add_parser("score", help="score meaning-survey responses")
    p_score.add_argument("--responses", required=True, help="CSV: participant_id,q1..q15")
    p_score.add_argument("--component-map", default=None)
    p_score.add_argument("--json", default=None, help="write machine-readable summary")

    p_bench = sub.add_parser("bench", help="pipeline timing percentiles")
    p_bench.add_argument("--frames", required=True, help="PGM file or directory of PGMs")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--iterations", type=int, default=30)
    p_bench.add_argument("--budget-ms", type=float, default=DEFAULT_BUDGET_MS)

    return parser


def _cmd_run(args) -> int:
    from .service import MirrorService, StartupError

    try:
        config = load_config(args.config)
        service = MirrorService(config)
    except (ConfigError, StartupError) as exc:
        print(f"startup error: {exc}", file=sys.stderr)
        return 1
    try:
        asyncio.run(service.serve_forever())
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_process(args) -> int:
    try:
        config = load_config(args.config)
        assets = load_assets(config)
        frame = read_pgm(args.image)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"startup error: {exc}", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    try:
        poem, _entry = run_pipeline_once(frame, assets.pipeline_deps(config), rng)
    except PipelineError as exc:
        print(f"error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return 1
    if poem is None:
        print("no face")
    else:
        print(poem.body)
    return 0


def _cmd_train_ngram(args) -> int:
    try:
        docs = load_corpus(args.corpus)
        model = train_ngram(docs, order=args.order, alpha=args.alpha)
        save_ngram(model, args.out)
    except (OSError, ValueError) as exc:
        print(f"train-ngram failed: {exc}", file=sys.stderr)
        return 1
    contexts = sum(len(level) for level in model.counts)
    print(
        f"trained order-{model.order} model: {len(docs)} documents, "
        f"{len(model.vocab)} vocabulary entries, {contexts} contexts -> {args.out}"
    )
    return 0


def _cmd_score(args) -> int:
    try:
        responses = load_responses_csv(args.responses)
        cmap = (
            load_component_map(args.component_map)
            if args.component_map
            else default_component_map()
        )
        report = component_report(responses, cmap)
    except (OSError, ValueError) as exc:
        print(f"score failed: {exc}", file=sys.stderr)
        return 1
    print(render_report(report, cmap))

    corr = None
    if len(responses) >= 3:
        corr = correlation_matrix(responses)
        pairs = []
        for i in range(corr.r.shape[0]):
            for j in range(i + 1, corr.r.shape[1]):
                if np.isfinite(corr.r[i, j]):
                    pairs.append((abs(corr.r[i, j]), i + 1, j + 1))
        pairs.sort(reverse=True)
        if pairs:
            print("\nStrongest correlations:")
            for _, qi, qj in pairs[:3]:
                print(
                    f"  Q{qi}-Q{qj}: r={corr.r[qi - 1, qj - 1]:.2f} "
                    f"p={corr.p[qi - 1, qj - 1]:.2g}"
                )
    else:
        print("\n(fewer than 3 participants: correlations skipped)")

    if args.json:
        doc = {"report": report_to_dict(report, cmap)}
        if corr is not None:
            clean = lambda m: [[None if not np.isfinite(v) else v for v in row] for row in m]
            doc["correlations"] = {
                "r": clean(corr.r),
                "p": clean(corr.p),
                "constant": corr.constant.tolist(),
            }
        with open(args.json, "w") as fh:
            json.dump(doc, fh, indent=2)
        print(f"\nwrote summary to {args.json}")
    return 0


def _percentile_line(name: str, values: list[float], extra: str = "") -> str:
    arr = np.array(values)
    return (
        f"{name:<12} median {np.percentile(arr, 50):8.1f} ms   "
        f"p90 {np.percentile(arr, 90):8.1f} ms{extra}"
    )


def _cmd_bench(args) -> int:
    from pathlib import Path

    try:
        config = load_config(args.config)
        assets = load_assets(config)
    except ConfigError as exc:
        print(f"startup error: {exc}", file=sys.stderr)
        return 1
    frames_path = Path(args.frames)
    paths = (
        sorted(frames_path.glob("*.pgm")) if frames_path.is_dir() else [frames_path]
    )
    if not paths:
        print(f"no .pgm frames found in {frames_path}", file=sys.stderr)
        return 1
    try:
        frames = [read_pgm(p) for p in paths]
    except (OSError, ValueError) as exc:
        print(f"cannot read frames: {exc}", file=sys.stderr)
        return 1

    deps = assets.pipeline_deps(config)
    rng = np.random.default_rng(0)
    detect, classify, generate, total = [], [], [], []
    no_face = 0
    for i in range(args.iterations):
        _poem, entry = run_pipeline_once(frames[i % len(frames)], deps, rng)
        detect.append(entry.detect_ms)
        if entry.classify_ms is None:
            no_face += 1
            continue
        classify.append(entry.classify_ms)
        generate.append(entry.generate_ms)
        total.append(entry.detect_ms + entry.classify_ms + entry.generate_ms)

    print(f"frames: {len(frames)}, iterations: {args.iterations}, no_face: {no_face}")
    print(_percentile_line("detect_ms", detect))
    if not total:
        print("no frame produced a face; per-stage totals unavailable")
        return 1
    print(_percentile_line("classify_ms", classify))
    print(_percentile_line("generate_ms", generate))
    median_total = float(np.percentile(np.array(total), 50))
    verdict = "PASS" if median_total <= args.budget_ms else "FAIL"
    print(
        _percentile_line("total_ms", total, f"   (budget {args.budget_ms:.0f} ms: {verdict})")
    )
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "process": _cmd_process,
        "train-ngram": _cmd_train_ngram,
        "score": _cmd_score,
        "bench": _cmd_bench,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
