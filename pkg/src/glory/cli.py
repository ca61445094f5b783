"""Command line front end: ``glory {run,study,semiflow,certify,inspect}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .diagnostics import energy_csv
from .errors import ConfigError, CorruptFrame, FormatVersionMismatch, GloryError
from .harness import (
    EXIT_CERTIFICATE,
    EXIT_CONFIG,
    EXIT_OK,
    certify_trajectory,
    convergence_study,
    run,
    semiflow_test,
    trajectory_from_trace,
)
from .trace import read_trace

log = logging.getLogger("glory")


def _levels(text: str):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "/" in tok:
            a, b = tok.split("/")
            out.append(float(a) / float(b))
        else:
            v = float(tok)
            out.append(int(v) if v.is_integer() and "." not in tok else v)
    return out


def _emit(obj, out: Path | None, name: str, quiet: bool):
    text = json.dumps(obj, indent=2, sort_keys=True, default=float)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    if not quiet:
        print(text)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    res = run(cfg, args.out, quiet=args.quiet)
    if not args.quiet:
        print(json.dumps(res.summary(), indent=2, sort_keys=True, default=float))
    return res.exit_code


def cmd_study(args) -> int:
    cfg = load_config(args.config)
    study = cfg.data.get("study", {})
    axis = args.axis or study.get("axis")
    levels = _levels(args.levels) if args.levels else study.get("levels")
    if axis is None or levels is None:
        raise ConfigError("a study needs --axis and --levels (or a 'study' section)")
    rep = convergence_study(cfg, axis.replace("-", "_"), levels, study.get("times"))
    _emit(rep.to_dict(), Path(args.out) if args.out else None, "study.json", args.quiet)
    return EXIT_OK


def cmd_semiflow(args) -> int:
    cfg = load_config(args.config)
    sf = cfg.data.get("semiflow", {})
    rep = semiflow_test(cfg, args.split if args.split is not None else sf.get("split_time"),
                        args.horizon if args.horizon is not None else sf.get("horizon"))
    _emit(rep.to_dict(), Path(args.out) if args.out else None, "semiflow.json", args.quiet)
    return EXIT_OK if rep.passed else EXIT_CERTIFICATE


def cmd_certify(args) -> int:
    cfg = load_config(args.config) if args.config else None
    traj, cfg = trajectory_from_trace(args.trace, cfg)
    certs, residuals, ok = certify_trajectory(traj, cfg.data.get("certify"))
    summary = {"certificates": {k: c.summary() for k, c in certs.items()},
               "weak_residuals": [r.to_dict() for r in residuals], "passed": ok}
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for form, c in certs.items():
            (out / f"energy_{form}.csv").write_text(energy_csv(c.records))
    _emit(summary, out, "certificate.json", args.quiet)
    return EXIT_OK if ok else EXIT_CERTIFICATE


def cmd_inspect(args) -> int:
    tf = read_trace(args.trace, require_footer=False)
    h = {k: v for k, v in tf.header.items() if k != "config"}
    ts = tf.times
    info = {
        "header": h,
        "frames": len(tf.frames),
        "t_first": ts[0] if ts else None,
        "t_last": ts[-1] if ts else None,
        "max_abs_coeff": float(max((np.abs(c).max() for c in tf.coeffs), default=0.0)),
        "footer": tf.footer,
    }
    print(json.dumps(info, indent=2, sort_keys=True, default=float))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glory", description="Galerkin simulator and energy certifier.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="JSON run configuration")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--quiet", action="store_true", help="suppress console output")

    sp = sub.add_parser("run", help="simulate and certify one configuration")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("study", help="convergence study over modes, domain level or time step")
    common(sp)
    sp.add_argument("--axis", choices=["modes", "domain_level", "domain-level", "time_step", "time-step"])
    sp.add_argument("--levels", help="comma separated levels, e.g. 16,32,64 or 1/40,1/80,1/160")
    sp.set_defaults(func=cmd_study)

    sp = sub.add_parser("semiflow", help="restart consistency test")
    common(sp)
    sp.add_argument("--split", type=float, help="restart time s (default t_end/2)")
    sp.add_argument("--horizon", type=float, help="final time t (default t_end)")
    sp.set_defaults(func=cmd_semiflow)

    sp = sub.add_parser("certify", help="re-certify an existing trace")
    sp.add_argument("trace")
    common(sp, need_config=False)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("inspect", help="print a trace header and frame summary")
    sp.add_argument("trace")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatVersionMismatch, CorruptFrame) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GloryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
