"""``farfield`` command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 I/O error.
Logs go to stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from pydantic import ValidationError

from farfield.cli import commands
from farfield.cli.config import load_config
from farfield.cli.manifest import write_manifest
from farfield.errors import ConfigError, FarfieldError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 1, 2, 3


class JsonFormatter(logging.Formatter):
    def format(self, record):
        entry = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        entry.update(getattr(record, "fields", {}))
        if record.exc_info:
            entry["exc"] = self.formatException(record.exc_info)
        return json.dumps(entry, sort_keys=True, default=str)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="JSON pipeline configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--manifest-out", help="where to write the manifest JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="farfield", description="Far-field speech simulation and enhancement.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rir-gen", help="sample scenarios and write image-method RIRs")
    _common(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("extract-noise", help="cut non-speech regions into noise chunks")
    _common(p)
    p.add_argument("--recordings", required=True, help='JSON list of {"session_id", "path"}')
    p.add_argument("--annotations", required=True, help="JSON segment annotations")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--channel", type=int, help="recording channel to cut from")

    p = sub.add_parser("augment", help="simulate far-field copies of clean utterances")
    _common(p)
    p.add_argument("--input", required=True, help='JSON list of {"id", "path"[, "session_id"]}')
    p.add_argument("--noise-dir", help="directory of {session}_{channel}_{offset}.wav chunks")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--input-channel", type=int, help="channel of the clean recordings to use")
    p.add_argument("--subset", type=int, help="randomly keep this many utterances")
    p.add_argument(
        "--reuse-session-scenario",
        action="store_true",
        help="one room scenario per session instead of per utterance",
    )

    p = sub.add_parser("enhance", help="WPE dereverberation then delay-and-sum")
    _common(p)
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--no-wpe", action="store_true")
    p.add_argument("--no-beamform", action="store_true")
    p.add_argument("--taps", type=int)
    p.add_argument("--delay", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--block-seconds", type=float, help="blockwise WPE with this block length")
    p.add_argument("--reference-channel", type=int)
    p.add_argument("--cost-out", help="write the WPE cost trace as JSON")
    p.add_argument("--tdoa-out", help="write the TDOA track as JSON")

    p = sub.add_parser("select-reliable", help="filter a CTM to reliable regions")
    _common(p)
    p.add_argument("ctm")
    p.add_argument("--regions-out", required=True)
    p.add_argument("--mask-out")
    p.add_argument("--utt2dur", help="'utt duration' lines; default is the last word end")
    p.add_argument("--frame-shift", type=float, default=0.01)
    p.add_argument("--min-posterior", type=float)
    p.add_argument("--max-duration", type=float)
    p.add_argument("--exclude", nargs="*", help="tokens to exclude (replaces the default set)")
    p.add_argument("--exclude-file", help="file with one excluded token per line")
    return parser


def _section(cfg_dict, key, **values):
    section = dict(cfg_dict.get(key, {}))
    section.update({k: v for k, v in values.items() if v is not None})
    return section


def _configure(args):
    overrides = {"master_seed": args.seed, "workers": args.workers}
    config = load_config(args.config)
    data = config.model_dump()
    if args.command == "augment":
        data["augment"] = _section(
            data, "augment", input_channel=args.input_channel, subset=args.subset
        )
        if args.reuse_session_scenario:
            data["augment"]["resample_per_utterance"] = False
    elif args.command == "extract-noise":
        data["noise"] = _section(data, "noise", channel=args.channel)
    elif args.command == "enhance":
        data["wpe"] = _section(
            data, "wpe", taps=args.taps, delay=args.delay, iterations=args.iterations
        )
        data["beamform"] = _section(data, "beamform", reference_channel=args.reference_channel)
    elif args.command == "select-reliable":
        excluded = None
        if args.exclude is not None or args.exclude_file:
            excluded = set(args.exclude or [])
            if args.exclude_file:
                with open(args.exclude_file, encoding="utf-8") as fh:
                    excluded.update(line.strip() for line in fh if line.strip())
        data["reliability"] = _section(
            data,
            "reliability",
            min_posterior=args.min_posterior,
            max_duration=args.max_duration,
            excluded_tokens=excluded,
        )
    data.update({k: v for k, v in overrides.items() if v is not None})
    return load_config(None, **data)


def _run(args) -> int:
    config = _configure(args)
    if args.command == "rir-gen":
        if args.count < 0:
            raise ConfigError("--count must be >= 0")
        records = commands.cmd_rir_gen(config, args.count, args.out_dir)
        default_manifest = os.path.join(args.out_dir, "manifest.json")
    elif args.command == "extract-noise":
        records = commands.cmd_extract_noise(config, args.recordings, args.annotations, args.out_dir)
        default_manifest = os.path.join(args.out_dir, "manifest.json")
    elif args.command == "augment":
        records = commands.cmd_augment(config, args.input, args.noise_dir, args.out_dir)
        default_manifest = os.path.join(args.out_dir, "manifest.json")
    elif args.command == "enhance":
        records = commands.cmd_enhance(
            config,
            args.input,
            args.output,
            use_wpe=not args.no_wpe,
            use_beamform=not args.no_beamform,
            block_seconds=args.block_seconds,
            cost_out=args.cost_out,
            tdoa_out=args.tdoa_out,
        )
        default_manifest = None
    else:
        records = commands.cmd_select_reliable(
            config,
            args.ctm,
            args.regions_out,
            mask_out=args.mask_out,
            utt2dur=args.utt2dur,
            frame_shift=args.frame_shift,
        )
        default_manifest = None
    manifest = args.manifest_out or default_manifest
    if manifest:
        write_manifest(manifest, args.command, config.echo(), records)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    logger = logging.getLogger("farfield")
    logger.handlers[:] = [handler]
    logger.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    logger.propagate = False
    try:
        return _run(args)
    except FarfieldError as exc:
        logger.error(str(exc), extra={"fields": {"error": type(exc).__name__}})
        return exc.exit_code
    except ValidationError as exc:
        logger.error(str(exc), extra={"fields": {"error": "ValidationError"}})
        return EXIT_USAGE
    except OSError as exc:
        logger.error(str(exc), extra={"fields": {"error": type(exc).__name__}})
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
