"""Command-line entry point.

Exit codes: 0 success, 1 invalid arguments, 2 I/O or file-format failure,
3 embed plan violation, 4 attack detected (``detect``), 5 reveal mismatch
(``verify``). Structured results go to stdout as JSON lines; diagnostics go
to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .attack import EmbedPlan, PlanError, generate_attack
from .detect import DEFAULT_THRESHOLD, ImageTooSmallError, detect, spectrum
from .harness.corpus import synthesize_corpus
from .harness.experiment import ConfigError, ExperimentConfig, corpus_paths, dumps_record, run_experiment, summary_table
from .image import ImageFormatError, PixelCoord, load_image, save_image
from .metrics import compare
from .resize import ANTIALIASED, Mode, ResizePolicy, ScaleSpec, contribution_map, resize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_PLAN = 3
EXIT_ATTACKED = 4
EXIT_MISMATCH = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _size(text: str) -> ScaleSpec:
    try:
        return ScaleSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _pixel(text: str) -> tuple[int, int]:
    try:
        i, j = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected i,j, got {text!r}") from None
    return i, j


def _embed(text: str) -> tuple[Path, ScaleSpec]:
    path, sep, size = text.rpartition(":")
    if not sep or not path:
        raise argparse.ArgumentTypeError(f"expected PATH:WxH, got {text!r}")
    return Path(path), _size(size)


def _emit(record: dict) -> None:
    sys.stdout.write(dumps_record(record) + "\n")


def _check_distinct(out: Path, *inputs: Path) -> None:
    for p in inputs:
        if Path(out).resolve() == Path(p).resolve():
            raise UsageError(f"output {out} would overwrite input {p}")


def _policy(args) -> ResizePolicy:
    return ResizePolicy(Mode(args.policy), args.step_limit)


# ---------------------------------------------------------------------------


def cmd_attack(args) -> int:
    _check_distinct(args.out, args.carrier, *(p for p, _ in args.embed))
    carrier = load_image(args.carrier)
    embeds = []
    for path, at in args.embed:
        small = load_image(path)
        if small.size != at.size:
            print(f"note: resizing {path} from {small.width}x{small.height} to {at} (antialiased)", file=sys.stderr)
            small = resize(small, at, ANTIALIASED)
        embeds.append((small, at))
    combined, report = generate_attack(EmbedPlan(carrier, tuple(embeds)))
    save_image(combined, args.out)
    record = {"type": "embed_report", "out": str(args.out), **report.to_record()}
    if args.report:
        Path(args.report).write_text(dumps_record(record) + "\n")
    _emit(record)
    return EXIT_OK


def cmd_resize(args) -> int:
    _check_distinct(args.out, args.input)
    img = load_image(args.input)
    out = resize(img, args.size, _policy(args))
    save_image(out, args.out)
    _emit({"type": "resize", "in": str(args.input), "out": str(args.out), "size": str(args.size),
           "policy": args.policy})
    return EXIT_OK


def cmd_detect(args) -> int:
    img = load_image(args.input)
    if args.spectrum_out:
        _check_distinct(args.spectrum_out, args.input)
    try:
        report = detect(img, args.threshold)
    except ImageTooSmallError as exc:
        raise UsageError(str(exc)) from None
    if args.spectrum_out:
        save_image(spectrum(img).to_image(), args.spectrum_out)
    _emit(report.to_record(str(args.input)))
    return EXIT_ATTACKED if report.attacked else EXIT_OK


def cmd_probe(args) -> int:
    i, j = args.pixel
    try:
        probe = PixelCoord.within(i, j, args.target.out_width, args.target.out_height)
        cmap = contribution_map(args.size.out_width, args.size.out_height, args.target, probe, _policy(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_image(cmap.to_image(), args.out)
    _emit({"type": "probe", "size": str(args.size), "target": str(args.target), "pixel": [i, j],
           "policy": args.policy, "support": cmap.support, "max_weight": cmap.max_weight, "total": cmap.total})
    return EXIT_OK


def cmd_verify(args) -> int:
    combined = load_image(args.combined)
    small = load_image(args.small)
    if small.size != args.size.size or small.channels != combined.channels:
        raise UsageError(f"small image is {small.width}x{small.height}x{small.channels}, "
                         f"expected {args.size} with {combined.channels} channels")
    revealed = resize(combined, args.size)
    report = compare(revealed, small)
    _emit({"type": "verify", "combined": str(args.combined), "small": str(args.small), "size": str(args.size),
           **report.to_record()})
    return EXIT_OK if report.exact else EXIT_MISMATCH


def cmd_bench(args) -> int:
    try:
        cfg = ExperimentConfig.from_file(
            args.config,
            seed=args.seed,
            corpus_dir=args.corpus.resolve() if args.corpus else None,
            out_dir=args.out.resolve() if args.out else None,
            workers=args.workers,
            limit=args.limit,
        )
    except ConfigError as exc:
        raise UsageError(f"bad config: {exc}") from None
    if args.synthesize and not (cfg.corpus_dir.is_dir() and corpus_paths(cfg.corpus_dir)):
        print(f"synthesizing {args.synthesize} images into {cfg.corpus_dir}", file=sys.stderr)
        synthesize_corpus(cfg.corpus_dir, args.synthesize, cfg.seed)
    if not cfg.corpus_dir.is_dir():
        raise FileNotFoundError(f"corpus directory {cfg.corpus_dir} does not exist")
    try:
        result = run_experiment(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for c in result.conditions:
        _emit(c.to_record())
    sys.stderr.write(summary_table(result))
    if cfg.out_dir is not None:
        print(f"records written to {cfg.out_dir / 'records.jsonl'}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="scaleattack", description="Generate, detect and defuse image downscaling attacks.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("attack", help="embed small images into a carrier")
    p.add_argument("--carrier", type=Path, required=True)
    p.add_argument("--embed", type=_embed, action="append", required=True, metavar="PATH:WxH",
                   help="small image and the size it is revealed at; repeat to embed several, in order")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--report", type=Path)
    p.set_defaults(func=cmd_attack)

    policies = [m.value for m in Mode]
    p = sub.add_parser("resize", help="resize an image")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--size", type=_size, required=True, metavar="WxH")
    p.add_argument("--policy", choices=policies, default="vulnerable")
    p.add_argument("--step-limit", type=float, default=2.0, help="max shrink per pass for multistep")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_resize)

    p = sub.add_parser("detect", help="check an image for an attack lattice (exit 4 if found)")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--spectrum-out", type=Path)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("probe", help="map each source pixel's weight in one output pixel")
    p.add_argument("--size", type=_size, required=True, metavar="WxH", help="source size")
    p.add_argument("--target", type=_size, required=True, metavar="WxH")
    p.add_argument("--pixel", type=_pixel, required=True, metavar="i,j", help="output column,row")
    p.add_argument("--policy", choices=policies, default="vulnerable")
    p.add_argument("--step-limit", type=float, default=2.0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("verify", help="check that a combined image reveals the small image exactly")
    p.add_argument("--combined", type=Path, required=True)
    p.add_argument("--small", type=Path, required=True)
    p.add_argument("--size", type=_size, required=True, metavar="WxH")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="run the corpus experiment")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--corpus", type=Path, help="override corpus_dir")
    p.add_argument("--out", type=Path, help="override out_dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--limit", type=int)
    p.add_argument("--synthesize", type=int, metavar="N",
                   help="fill an empty or missing corpus_dir with N synthetic images first")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors, --help and --version all end here
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlanError as exc:
        print(f"error: invalid embed plan: {exc}", file=sys.stderr)
        return EXIT_PLAN
    except (OSError, ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
