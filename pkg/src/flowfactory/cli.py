# ABOUTME: CLI entry point for flowfactory (`flowfab`).
# ABOUTME: Thin wrapper that routes generate/refilter/eval/inspect to the pipeline and prints results.

import json
import logging
import sys

from flowfactory.config import ConfigError, load_pipeline_config
from flowfactory.evalmetrics import FL_ALL_RULES
from flowfactory.helpers import FactoryError, dumps, format_table, oneline_report, save_json
from flowfactory.pipeline import evaluate, generate_dataset, inspect_pixel, refilter_dataset


USAGE = """\
Usage: flowfab [-v] <command> [options]

Commands:
  generate --config <path> --out <dir> [--compact]
                                   — render pose pairs and write a labeled dataset
  refilter --root <dir> [--th-conf x] [--th-ssim x] [--th-dc x] [--th-occ x]
                                   — re-threshold stored masks without re-rendering
  eval --pred <dir> --gt <dir> [--fl-all-rule and|or] [--report <path>]
                                   — score predicted flow against ground truth
  inspect --root <dir> --sample <id> --pixel <u,v>
                                   — per-ray diagnostics for one pixel

Output is JSON except for 'eval' (table), 'inspect' (text) and --compact.
Exit codes: 0 success, 1 failure or failed samples, 2 configuration error.
"""

EVAL_COLUMNS = [
    ("id", "sample", ""),
    ("fl_epe", "Fl-epe", ".4f"),
    ("fl_all", "Fl-all%", ".2f"),
    ("pixel_count", "pixels", "d"),
    ("mid_error", "Mid_error", ".2f"),
    ("s_loss_bg", "S_bg", ".4f"),
    ("p_loss_bg", "P_bg", ".3f"),
    ("s_loss_fg", "S_fg", ".4f"),
    ("p_loss_fg", "P_fg", ".3f"),
]

THRESHOLD_FLAGS = {"--th-conf": "th_conf", "--th-ssim": "th_ssim", "--th-dc": "th_dc", "--th-occ": "th_occ"}


def main(args=None):
    if args is None:
        args = sys.argv[1:]
    verbose = "-v" in args
    args = [a for a in args if a != "-v"]
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not args:
        print(USAGE)
        return

    try:
        _run(args)
    except ConfigError as e:
        _error(e, {"key": e.key, "path": e.path})
        sys.exit(2)
    except FactoryError as e:
        _error(e, e.fields())
        sys.exit(1)
    except KeyboardInterrupt:
        sys.exit(130)
    except Exception as e:
        _error(e, {})
        sys.exit(1)


def _error(exc, fields):
    json.dump({"error": str(exc), **fields}, sys.stderr)
    print(file=sys.stderr)


def _usage(line):
    print(f"Usage: flowfab {line}", file=sys.stderr)
    sys.exit(2)


def _options(rest, names, switches=()):
    """Parse `--name value` pairs and bare switches; unknown flags are config errors."""
    opts = {}
    i = 0
    while i < len(rest):
        flag = rest[i]
        if flag in switches:
            opts[flag] = True
            i += 1
        elif flag in names:
            if i + 1 >= len(rest):
                raise ConfigError(f"{flag} needs a value", key=flag)
            opts[flag] = rest[i + 1]
            i += 2
        else:
            raise ConfigError(f"unknown option {flag!r}", key=flag)
    return opts


def _threshold(flag, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}", key=flag) from None


def _pixel(text):
    try:
        u, v = (int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"expected u,v integers, got {text!r}", key="--pixel") from None
    return u, v


def _run(args):
    cmd = args[0]
    rest = args[1:]

    if cmd == "generate":
        opts = _options(rest, ("--config", "--out"), ("--compact",))
        if "--config" not in opts or "--out" not in opts:
            _usage("generate --config <path> --out <dir> [--compact]")
        config = load_pipeline_config(opts["--config"], out=opts["--out"])
        summary = generate_dataset(config, opts["--out"])
        if opts.get("--compact"):
            print(oneline_report(summary["per_sample"]))
        else:
            print(dumps(summary))
        if summary["failed"]:
            sys.exit(1)
        return

    elif cmd == "refilter":
        opts = _options(rest, ("--root",) + tuple(THRESHOLD_FLAGS))
        if "--root" not in opts:
            _usage("refilter --root <dir> [--th-conf x] [--th-ssim x] [--th-dc x] [--th-occ x]")
        changes = {
            THRESHOLD_FLAGS[flag]: _threshold(flag, value)
            for flag, value in opts.items()
            if flag in THRESHOLD_FLAGS
        }
        result = refilter_dataset(opts["--root"], changes)

    elif cmd == "eval":
        opts = _options(rest, ("--pred", "--gt", "--fl-all-rule", "--report"))
        if "--pred" not in opts or "--gt" not in opts:
            _usage("eval --pred <dir> --gt <dir> [--fl-all-rule and|or] [--report <path>]")
        rule = opts.get("--fl-all-rule", "and")
        if rule not in FL_ALL_RULES:
            raise ConfigError(f"must be one of {', '.join(FL_ALL_RULES)}, got {rule!r}", key="--fl-all-rule")
        report = evaluate(opts["--pred"], opts["--gt"], rule)
        if "--report" in opts:
            save_json(opts["--report"], report)
        print(format_table(report["samples"] + [report["mean"]], EVAL_COLUMNS))
        return

    elif cmd == "inspect":
        opts = _options(rest, ("--root", "--sample", "--pixel"))
        if not {"--root", "--sample", "--pixel"} <= set(opts):
            _usage("inspect --root <dir> --sample <id> --pixel <u,v>")
        u, v = _pixel(opts["--pixel"])
        print(inspect_pixel(opts["--root"], opts["--sample"], u, v))
        return

    else:
        print(f"Unknown command: {cmd}", file=sys.stderr)
        print(USAGE, file=sys.stderr)
        sys.exit(1)

    print(dumps(result))
