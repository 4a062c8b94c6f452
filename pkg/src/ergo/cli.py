"""``ergo`` command line: corpus generation, GWD scoring, sweeps, search.

Exit codes: 0 success, 1 invalid input, 2 runtime or numerical failure.
``ERGO_LOG=error|info|debug`` sets the log level (default: warning).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .corpus import CORPUS_INDEX, DEMO_SAMPLES, DEMO_SCENE, Corpus, demo_corpus, load_corpus, make_corpus
from .errors import ErgoError, NumericalError, ValidationError
from .experiments import (
    descent_plot,
    preset_baselines,
    sweep_blur,
    sweep_channels,
    sweep_samples,
)
from .gw.invariance import AFFINE_A, AFFINE_B, run_invariance_suites
from .gw.pipeline import gwd_batch
from .gw.solver import SolverConfig
from .report import RunManifest, file_digest, write_json
from .representations import PRESET_NAMES, resolve_builder
from .search import STRATEGIES, CandidateSpace, ProposalStrategy, stagewise_search
from .synthetic import PATTERNS, SyntheticSceneConfig

log = logging.getLogger("ergo")

DEMO = "demo"


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract reserves 2 for runtime errors
    def error(self, message):
        raise ValidationError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ValidationError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--corpus", default=DEMO,
                   help=f"corpus directory, or '{DEMO}' for the bundled recipe (default)")
    g.add_argument("--out", default="ergo-out", help="output directory")
    g.add_argument("--jobs", type=int, default=1, help="worker processes (1 = serial)")
    g.add_argument("--seed", type=int, default=0, help="seed (subsampling; scene noise for gen)")
    g.add_argument("--epsilon", type=float, default=None, help="entropic regularization")
    g.add_argument("--event-cap", type=int, default=None, help="max events per sample")
    g.add_argument("--n", type=int, default=None, help="number of samples N in GWD_N")
    g.add_argument("--solver-config", default=None, help="JSON file with solver settings")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="ergo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ergo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic corpus")
    g.add_argument("--demo", action="store_true", help="use the bundled demo recipe")
    g.add_argument("--pattern", choices=PATTERNS, default=DEMO_SCENE.pattern)
    g.add_argument("--width", type=int, default=DEMO_SCENE.width)
    g.add_argument("--height", type=int, default=DEMO_SCENE.height)
    g.add_argument("--duration", type=float, default=None, help="seconds (demo: scales with --samples)")
    g.add_argument("--speed", type=float, default=DEMO_SCENE.speed)
    g.add_argument("--contrast", type=float, default=DEMO_SCENE.contrast_threshold)
    g.add_argument("--noise-rate", type=float, default=DEMO_SCENE.noise_rate)
    g.add_argument("--samples", type=int, default=DEMO_SAMPLES)
    g.add_argument("--slicing", choices=("time", "count"), default="time")
    g.add_argument("--format", choices=("evb", "csv"), default="evb")

    w = sub.add_parser("gwd", parents=[common], help="GWD_N of one representation")
    w.add_argument("--repr", required=True, help="preset name or spec JSON path")

    c = sub.add_parser("sweep-channels", parents=[common], help="GWD_N against channel count")
    c.add_argument("--family", choices=("voxel", "mdes"), default="voxel")
    c.add_argument("--channels", type=_ints, default=[1, 2, 4, 8, 12])

    b = sub.add_parser("sweep-blur", parents=[common], help="GWD_N against blur sigma")
    b.add_argument("--repr", default="voxel12")
    b.add_argument("--sigmas", type=_floats, default=[0.0, 1.0, 2.0, 4.0])

    s = sub.add_parser("sweep-samples", parents=[common], help="GWD_N against sample count")
    s.add_argument("--reprs", type=_names, default=["hist2", "timesurface12", "voxel12", "mdes12"])
    s.add_argument("--ns", type=_ints, default=None, help="sample counts (default: 10,50,100 capped at corpus size)")

    r = sub.add_parser("search", parents=[common], help="stage-wise representation search")
    r.add_argument("--strategy", default="exhaustive", help=f"one of {', '.join(STRATEGIES)}")
    r.add_argument("--k", type=int, default=100, help="budget per stage for sampled strategies")
    r.add_argument("--strategy-seed", type=int, default=0)
    r.add_argument("--channels", type=int, default=12)
    r.add_argument("--baselines", type=_names, default=list(PRESET_NAMES))

    i = sub.add_parser("invariance", parents=[common], help="similarity-matrix invariance checks")
    i.add_argument("--affine-a", type=_floats, default=list(AFFINE_A))
    i.add_argument("--affine-b", type=_floats, default=list(AFFINE_B))
    i.add_argument("--constant", type=_floats, default=[7.0])
    i.add_argument("--sets", type=int, default=10)
    return parser


def solver_config(args) -> SolverConfig:
    base = {}
    if args.solver_config:
        try:
            base = json.loads(Path(args.solver_config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read solver config: {exc}") from exc
        if not isinstance(base, dict):
            raise ValidationError("solver config must be a JSON object")
    cfg = SolverConfig.from_dict(base) if base else SolverConfig()
    over = {"seed": args.seed}
    if args.epsilon is not None:
        over["epsilon"] = args.epsilon
    if args.event_cap is not None:
        over["event_cap"] = args.event_cap
    return cfg.replace(**over)


def open_corpus(args) -> tuple[Corpus, dict]:
    if args.corpus == DEMO:
        corpus = demo_corpus()
        return corpus, {"corpus": DEMO, "corpus_index": corpus.index_dict()}
    d = Path(args.corpus)
    corpus = load_corpus(d)
    index = json.loads((d / CORPUS_INDEX).read_text())
    return corpus, {"corpus": str(d), "corpus_index": index,
                    "events_sha256": file_digest(d / index["events"])}


def _default_n(args, corpus: Corpus) -> int:
    if args.n is None:
        return min(100, len(corpus))
    if args.n < 1:
        raise ValidationError("--n must be at least 1")
    if args.n > len(corpus):
        raise ValidationError(f"--n {args.n} exceeds the corpus size {len(corpus)}")
    return args.n


def _check_jobs(args) -> None:
    if args.jobs < 1:
        raise ValidationError("--jobs must be at least 1")


def cmd_gen(args, out: Path, manifest: RunManifest) -> dict:
    if args.samples < 1:
        raise ValidationError("--samples must be at least 1")
    if args.demo:
        scene = SyntheticSceneConfig(**{**DEMO_SCENE.to_dict(), "seed": args.seed,
                                        "duration": DEMO_SCENE.duration * args.samples / DEMO_SAMPLES})
    else:
        duration = args.duration if args.duration is not None else \
            DEMO_SCENE.duration * args.samples / DEMO_SAMPLES
        scene = SyntheticSceneConfig(
            width=args.width, height=args.height, duration=duration, pattern=args.pattern,
            speed=args.speed, contrast_threshold=args.contrast, noise_rate=args.noise_rate,
            seed=args.seed,
        )
    corpus = make_corpus(scene, args.samples, args.slicing)
    corpus.save(out, args.format)
    manifest.inputs.update(scene=scene.to_dict(), samples=args.samples, slicing=args.slicing,
                           format=args.format)
    manifest.seeds["scene"] = scene.seed
    manifest.outputs += ["corpus.json", f"events.{args.format}"]
    return {"samples": len(corpus), "events": len(corpus.stream), "out": str(out)}


def cmd_gwd(args, out, manifest, corpus, cfg) -> dict:
    N = _default_n(args, corpus)
    name, builder = resolve_builder(args.repr)
    rep = gwd_batch(corpus.samples(), builder, cfg, N, args.jobs)
    doc = {"representation": name, **rep.to_dict()}
    write_json(out / "gwd_report.json", doc)
    manifest.inputs.update(repr=args.repr, N=N)
    manifest.outputs.append("gwd_report.json")
    return {"representation": name, "mean": rep.mean, "n": rep.n, "skipped": rep.skipped}


def cmd_sweep_channels(args, out, manifest, corpus, cfg) -> dict:
    N = _default_n(args, corpus)
    rep = sweep_channels(corpus.samples(), args.family, args.channels, cfg, N, args.jobs)
    stem = f"sweep_channels_{args.family}"
    write_json(out / f"{stem}.json", rep.to_dict())
    rep.plot(f"GWD vs channels ({args.family})", "channels").save(out / f"{stem}.svg")
    manifest.inputs.update(family=args.family, channels=args.channels, N=N)
    manifest.outputs += [f"{stem}.json", f"{stem}.svg"]
    return {"channels": [p.value for p in rep.points], "means": rep.means}


def cmd_sweep_blur(args, out, manifest, corpus, cfg) -> dict:
    N = _default_n(args, corpus)
    rep = sweep_blur(corpus.samples(), args.repr, args.sigmas, cfg, N, args.jobs)
    write_json(out / "sweep_blur.json", rep.to_dict())
    rep.plot(f"GWD vs blur ({rep.representation})", "sigma [px]").save(out / "sweep_blur.svg")
    manifest.inputs.update(repr=args.repr, sigmas=args.sigmas, N=N)
    manifest.outputs += ["sweep_blur.json", "sweep_blur.svg"]
    return {"sigmas": [p.value for p in rep.points], "means": rep.means}


def cmd_sweep_samples(args, out, manifest, corpus, cfg) -> dict:
    ns = args.ns if args.ns is not None else sorted({min(n, len(corpus)) for n in (10, 50, 100)})
    study = sweep_samples(corpus.samples(), args.reprs, ns, cfg, args.jobs)
    write_json(out / "sweep_samples.json", study.to_dict())
    study.plot().save(out / "sweep_samples.svg")
    manifest.inputs.update(reprs=args.reprs, ns=ns)
    manifest.outputs += ["sweep_samples.json", "sweep_samples.svg"]
    return {"ranking": study.ranking}


def cmd_search(args, out, manifest, corpus, cfg) -> dict:
    N = _default_n(args, corpus)
    strategy = ProposalStrategy(args.strategy, args.k, args.strategy_seed)
    samples = corpus.samples()
    for name in args.baselines:
        resolve_builder(name)  # fail before the long run, not after
    result = stagewise_search(samples, CandidateSpace(), strategy, cfg, args.channels, N, args.jobs)
    result.save(out)
    baselines = preset_baselines(samples, args.baselines, cfg, N, args.jobs)
    final = result.state.stage_scores[-1]
    doc = {
        "final_score": final,
        "stage_scores": result.state.stage_scores,
        "baselines": baselines,
        "beats_all_baselines": all(final <= v for v in baselines.values()),
        "descent_violations": result.state.violations,
    }
    write_json(out / "search_report.json", doc)
    descent_plot(result.state.stage_scores, baselines).save(out / "search_descent.svg")
    manifest.inputs.update(strategy=strategy.to_dict(), channels=args.channels, N=N,
                           baselines=args.baselines)
    manifest.seeds["strategy"] = args.strategy_seed
    manifest.outputs += ["spec.json", "search_log.json", "search_report.json", "search_descent.svg"]
    return {"final_score": final, "baselines": baselines}


def cmd_invariance(args, out, manifest, cfg) -> dict:
    if args.sets < 1:
        raise ValidationError("--sets must be at least 1")
    suites = run_invariance_suites(args.seed, args.sets, args.affine_a, args.affine_b,
                                   tuple(args.constant), cfg)
    doc = {"suites": [s.to_dict() for s in suites], "passed": all(s.passed for s in suites)}
    write_json(out / "invariance_report.json", doc)
    manifest.inputs.update(affine_a=args.affine_a, affine_b=args.affine_b,
                           constant=args.constant, sets=args.sets)
    manifest.outputs.append("invariance_report.json")
    return {s.name: {"max_deviation": s.max_deviation, "passed": s.passed} for s in suites}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _check_jobs(args)
    out = Path(args.out)
    manifest = RunManifest(args.command, {"argv": list(argv) if argv is not None else sys.argv[1:]},
                           {"seed": args.seed})
    if args.command == "gen":
        summary = cmd_gen(args, out, manifest)
    else:
        cfg = solver_config(args)
        manifest.inputs["solver"] = cfg.to_dict()
        if args.command == "invariance":
            summary = cmd_invariance(args, out, manifest, cfg)
        else:
            corpus, corpus_info = open_corpus(args)
            manifest.inputs.update(corpus_info)
            handler = {
                "gwd": cmd_gwd,
                "sweep-channels": cmd_sweep_channels,
                "sweep-blur": cmd_sweep_blur,
                "sweep-samples": cmd_sweep_samples,
                "search": cmd_search,
            }[args.command]
            summary = handler(args, out, manifest, corpus, cfg)
    manifest.finish()
    manifest.save(out)
    print(json.dumps(summary, sort_keys=True))
    return 0


def main(argv=None) -> int:
    level = os.environ.get("ERGO_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, ErgoError, OSError, RuntimeError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
