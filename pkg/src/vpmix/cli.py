"""Command-line entry point: ``vpmix {mix,replay,eval,overlap-stats,split,analyze}``.

Exit codes: 0 success, 1 usage or configuration error, 2 majority-failure batch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .audio import WavError, read_wav
from .midi import MidiFormatError
from .pipeline import (
    BatchFailure, ConfigError, PipelineConfig, SourceCatalog, analyze_clip, cmd_eval, cmd_mix,
    cmd_overlap_stats, cmd_replay, cmd_split,
)

EXIT_OK, EXIT_USAGE, EXIT_BATCH = 0, 1, 2

log = logging.getLogger("vpmix")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="global seed (overrides config)")
    p.add_argument("--out", help="output directory or file (overrides config)")
    p.add_argument("--jobs", type=int, help="worker processes (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="vpmix", description="Violin-piano mixing and transcription evaluation.")
    parser.add_argument("--version", action="version", version=f"vpmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mix", parents=[common], help="generate a batch of mixtures")
    p.add_argument("--strategy", help="override the configured mixing strategy")
    p.add_argument("--count", type=int, help="override the configured item count")
    p.add_argument("--replay", metavar="MANIFEST", help="rebuild the WAVs named in MANIFEST instead")

    p = sub.add_parser("replay", parents=[common], help="rebuild mixtures from a manifest")
    p.add_argument("manifest")
    p.add_argument("--catalog", help="catalog CSV (default: the one recorded in the manifest)")

    p = sub.add_parser("eval", parents=[common], help="score estimated MIDI against references")
    p.add_argument("ref_dir")
    p.add_argument("est_dir")
    p.add_argument("--no-velocity", action="store_true", help="skip the velocity metric family")

    p = sub.add_parser("overlap-stats", parents=[common], help="onset-overlap counts for sampled pairs (CSV)")
    p.add_argument("--catalog", help="catalog CSV (overrides config)")
    p.add_argument("--pairs", type=int, help="number of sampled pairs (overrides config)")

    p = sub.add_parser("split", parents=[common], help="piece-level train/validation/test split")
    p.add_argument("--catalog", help="catalog CSV (overrides config)")
    p.add_argument("--ratios", help="three comma-separated ratios, e.g. 0.8,0.1,0.1")

    p = sub.add_parser("analyze", parents=[common], help="dump key and onsets for audio files")
    p.add_argument("paths", nargs="+")
    return parser


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {}
    for name in ("seed", "out", "jobs", "strategy", "count", "pairs"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "catalog", None):
        overrides["catalog"] = str(Path(args.catalog).resolve())
    if getattr(args, "no_velocity", False):
        overrides["velocity"] = False
    if getattr(args, "ratios", None):
        overrides["split_ratios"] = tuple(float(r) for r in args.ratios.split(","))
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _write_or_print(text: str, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _run(args) -> int:
    cfg = _load_config(args)
    if args.command == "mix" and args.replay:
        n = cmd_replay(args.replay, cfg.out, cfg.catalog)
        log.info("replayed %d mixtures into %s", n, cfg.out)
    elif args.command == "mix":
        print(cmd_mix(cfg))
    elif args.command == "replay":
        n = cmd_replay(args.manifest, cfg.out, args.catalog)
        log.info("replayed %d mixtures into %s", n, cfg.out)
    elif args.command == "eval":
        result = cmd_eval(args.ref_dir, args.est_dir, cfg, out_dir=args.out)
        if not args.out:
            print(json.dumps({"mean": result["mean"], "pooled": result["pooled"]}, indent=2))
    elif args.command == "overlap-stats":
        if not cfg.catalog:
            raise ConfigError("no catalog given")
        out = args.out or str(Path(cfg.out) / "overlap_stats.csv")
        rows = cmd_overlap_stats(SourceCatalog.load(cfg.catalog), cfg, out_path=out)
        log.info("wrote %d rows to %s", len(rows), out)
    elif args.command == "split":
        if not cfg.catalog:
            raise ConfigError("no catalog given")
        split = cmd_split(SourceCatalog.load(cfg.catalog), cfg.split_ratios, cfg.seed)
        _write_or_print(json.dumps(split, indent=2) + "\n", args.out)
    elif args.command == "analyze":
        result = {p: analyze_clip(read_wav(p), cfg.onset_params()) for p in args.paths}
        _write_or_print(json.dumps(result, indent=2) + "\n", args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except BatchFailure as exc:
        log.error("%s", exc)
        return EXIT_BATCH
    except (ConfigError, FileNotFoundError, WavError, MidiFormatError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
