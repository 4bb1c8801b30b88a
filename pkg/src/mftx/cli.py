"""Command-line entry point (``mftx``)."""

from __future__ import annotations

import argparse
import ast
import dataclasses
import sys

from .harness import (PARAM_KEYS, PRESET_IDS, ExperimentSpec, SpecError, reproduce, run)
from .params import SECTIONS, ParameterError, load_config

# subcommand -> (target, scenario or None when selectable, mode or None when selectable)
COMMANDS = {
    "eigen": ("eigen", "static", "analytic"),
    "release": ("release", "static", None),
    "cir-static": ("cir", "static", None),
    "cir-mobile": ("cir", "mobile", None),
    "ber-static": ("ber", "static", "analytic"),
    "ber-mobile": ("ber", "mobile", "analytic"),
    "pmf": ("pmf", None, None),
    "simulate": (None, None, "simulate"),
    "validate": (None, None, "validate"),
}


# seed and xi have dedicated flags
_FLAG_PARAMS = [name for name in PARAM_KEYS if name not in ("seed", "xi")]


def _value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _param_type(name: str):
    cls = SECTIONS[PARAM_KEYS[name][0]]
    default = cls.__dataclass_fields__[name].default
    if isinstance(default, bool):
        return lambda s: s.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def _sweep(text: str):
    """``name=v1,v2,...`` or, for joint axes, ``a,b=a1:b1,a2:b2``."""
    if "=" not in text:
        raise argparse.ArgumentTypeError("sweep must look like name=v1,v2")
    name, vals = text.split("=", 1)
    joint = "," in name
    values = []
    for tok in vals.split(","):
        tok = tok.strip()
        if not tok:
            continue
        values.append(tuple(_value(x) for x in tok.split(":")) if joint else _value(tok))
    return name, values


def _option(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("option must look like key=value")
    k, v = text.split("=", 1)
    return k, _value(v)


def _xi(text: str):
    if ":" in text:
        lo, hi = (int(x) for x in text.split(":"))
        return list(range(lo, hi + 1))
    return [int(x) for x in text.split(",")]


def _add_common(p: argparse.ArgumentParser, target_choice=False, scenario_choice=False,
                mode_choice=False):
    p.add_argument("--config", help="configuration file providing parameter defaults")
    p.add_argument("--output", "-o", default="results", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="root seed (default 0)")
    p.add_argument("--sweep", action="append", type=_sweep, default=[],
                   help="sweep axis, e.g. D_v=9,18,50 or D_v,k_f=9:30,50:30")
    p.add_argument("--option", action="append", type=_option, default=[],
                   help="target option, e.g. horizon=10")
    p.add_argument("--horizon", type=float, help="time horizon of curves (s)")
    p.add_argument("--quantity", help="curve quantity, e.g. e2e_pdf, e2e_cdf, uniform_pdf")
    p.add_argument("--xi", type=_xi, help="detection thresholds, e.g. 1:60 or 5,10,20")
    if target_choice:
        p.add_argument("--target", choices=("release", "cir", "pmf"), default="cir")
    if scenario_choice:
        p.add_argument("--scenario", choices=("static", "mobile"), default="static")
    if mode_choice:
        p.add_argument("--mode", choices=("analytic", "simulate", "validate"), default="analytic")
    g = p.add_argument_group("parameters")
    for name in _FLAG_PARAMS:
        g.add_argument(f"--{name}", dest=f"param_{name}", type=_param_type(name), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mftx", description=(
        "Membrane-fusion transmitter channel: analytic curves, particle simulation and "
        "validation runs written as CSV."))
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (target, scenario, mode) in COMMANDS.items():
        p = sub.add_parser(name, help=f"{name} experiment")
        _add_common(p, target_choice=target is None, scenario_choice=scenario is None,
                    mode_choice=mode is None)
    p = sub.add_parser("reproduce", help="run a figure/table preset")
    p.add_argument("figure_id", nargs="?", help=f"one of: {', '.join(PRESET_IDS)}")
    p.add_argument("--list", action="store_true", help="list preset ids")
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--realizations", type=int, default=None)
    p.add_argument("--dry-run", action="store_true", help="print the preset without running")
    return parser


def spec_from_args(args) -> ExperimentSpec:
    target, scenario, mode = COMMANDS[args.command]
    base = load_config(args.config) if args.config else {}
    overrides = {name: getattr(args, f"param_{name}") for name in _FLAG_PARAMS
                 if getattr(args, f"param_{name}", None) is not None}
    options = dict(args.option)
    if args.horizon is not None:
        options["horizon"] = args.horizon
    if args.quantity is not None:
        options["quantity"] = args.quantity
    if args.xi is not None:
        options["xi"] = args.xi
    seed = args.seed
    if seed is None:
        seed = base["SimParams"].seed if "SimParams" in base else 0
    return ExperimentSpec(scenario=scenario or args.scenario, mode=mode or args.mode,
                          target=target or args.target, overrides=overrides,
                          sweeps=list(args.sweep), output=args.output, seed=seed,
                          options=options, base=base)


def _describe(spec: ExperimentSpec) -> str:
    d = dataclasses.asdict(spec)
    d.pop("base")
    return "\n".join(f"{k}={v}" for k, v in d.items())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce":
            if args.list or not args.figure_id:
                print("\n".join(PRESET_IDS))
                return 0
            spec = reproduce(args.figure_id)
            if args.output:
                spec.output = args.output
            if args.seed is not None:
                spec.seed = args.seed
            if args.realizations is not None:
                spec.overrides["realizations"] = args.realizations
            if args.dry_run:
                print(_describe(spec))
                return 0
        else:
            spec = spec_from_args(args)
        result = run(spec)
    except (SpecError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for row in result.rows:
        if row:
            print(" ".join(f"{k}={v}" for k, v in row.items()))
    print(f"wrote {len(result.files)} files; manifest {result.manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
