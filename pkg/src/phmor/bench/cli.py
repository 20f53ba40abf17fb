"""``phmor`` command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical or validation
failure, 4 I/O or parse error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import (ConfigError, DenseLimitExceeded, ParseError, PHMORError, StageError,
                      StructureError)
from ..phcore import validate_ph_structure
from .config import ExperimentConfig
from .experiment import certify_prop1_cmd, run_experiment
from .mmio import load_matrices, write_matrices
from .models import generate_msd_chain


EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (ParseError, DenseLimitExceeded, OSError)):
        return EXIT_IO
    return EXIT_NUMERIC


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    over = {"out": args.out, "seed": args.seed}
    if getattr(args, "fom_solver", None):
        over["fom_solver"] = args.fom_solver
    if getattr(args, "bounds", None):
        over["bounds"] = [b.strip() for b in args.bounds.split(",") if b.strip()]
    cfg = cfg.merged(**over)
    if getattr(args, "prop1_tol", None) is not None:
        cfg.tolerances.prop1_tol = args.prop1_tol
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    art = run_experiment(cfg)
    print(f"wrote {', '.join(sorted(art.files))} to {art.out_dir}")
    for name, s in art.summary.items():
        print(f"  {name:13s} max_eff={s['max_effectivity']:.6g}  min_eff={s['min_effectivity']:.6g}")
    return EXIT_OK


def _cmd_prop1(args) -> int:
    cfg = _load_config(args)
    if args.x0:
        cfg.prop1.x0 = args.x0
    if args.negative_control:
        cfg.prop1.x0 = "random"
        cfg.prop1.scale_secondary = True
        cfg.prop1.mix_primal = True
    code, _ = certify_prop1_cmd(cfg, out_dir=args.out, stream=sys.stdout)
    return code


def _cmd_validate(args) -> int:
    sys_ = load_matrices(args.path, validate=False)
    report = validate_ph_structure(sys_)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def _cmd_gen(args) -> int:
    sys_ = generate_msd_chain(args.n_masses, args.mass, args.stiffness, args.damping)
    path = write_matrices(sys_, args.out, name=f"msd_chain_{args.n_masses}")
    print(f"wrote N={sys_.N} model, manifest {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phmor", description=__doc__.splitlines()[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                epilog="exit codes: 0 ok, 2 config, 3 numerical, 4 I/O")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--fom-solver", choices=("auto", "oracle", "midpoint"))

    r = sub.add_parser("run", help="train/test experiment with error bounds")
    common(r)
    r.add_argument("--bounds", help="comma-separated subset of standard,alp,hier")
    r.set_defaults(func=_cmd_run)

    q = sub.add_parser("prop1", help="certify equality of the ALP and hierarchical bounds")
    common(q)
    q.add_argument("--prop1-tol", type=float)
    q.add_argument("--x0", choices=("zero", "span", "random"))
    q.add_argument("--negative-control", action="store_true",
                   help="random x0 and a non-orthonormal secondary basis mixed with V")
    q.set_defaults(func=_cmd_prop1)

    v = sub.add_parser("validate", help="structural checks on a model directory")
    v.add_argument("path", help="model directory, manifest.json or .mtx directory")
    v.set_defaults(func=_cmd_validate)

    g = sub.add_parser("gen", help="write a mass-spring-damper chain as MatrixMarket files")
    g.add_argument("--n-masses", type=int, default=100)
    g.add_argument("--mass", type=float, default=1.0)
    g.add_argument("--stiffness", type=float, default=1.0e4)
    g.add_argument("--damping", type=float, default=200.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except (PHMORError, OSError, ValueError) as exc:
        if isinstance(exc, StructureError) and exc.report is not None:
            print(exc.report.summary(), file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
