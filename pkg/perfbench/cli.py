"""Command-line interface.

    perfbench run <scenario.json> [overrides]
    perfbench preset <name> [overrides]
    perfbench sweep (<scenario.json> | --preset NAME) --axis rate|tenants [--values ...]
    perfbench list-presets

``switch`` and ``proxy`` start the emulated components and are used by the
runner, which passes their configuration as JSON.

Log level: ``PERFBENCH_LOG_LEVEL`` (default INFO); ``-v`` forces DEBUG.

Exit codes: 0 ok, 1 unexpected error, 2 bad scenario or usage,
3 component launch failed, 4 one or more runs failed.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import ComponentLaunchFailed, InvalidScenario, ParseError
from .scenario import HYPERVISORS, Scenario, describe_presets, load_scenario, preset

log = logging.getLogger("perfbench")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_LAUNCH = 3
EXIT_RUNS_FAILED = 4


def configure_logging(verbose: bool = False) -> None:
    level = "DEBUG" if verbose else os.environ.get("PERFBENCH_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)-7s %(process)d %(message)s",
        stream=sys.stderr,
    )


def install_uvloop() -> bool:
    try:
        import uvloop
    except ImportError:
        return False
    asyncio.set_event_loop_policy(uvloop.EventLoopPolicy())
    return True


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", type=Path, default=Path("results"), help="results directory")
    p.add_argument("--seed", type=int, help="seed for tenant phase offsets")
    p.add_argument("--duration", type=int, help="run duration in seconds")
    p.add_argument("--trim", type=float, help="seconds cut from each end of a run")
    p.add_argument("--runs", type=int, help="repetitions per configuration")
    p.add_argument("--nodelay", type=int, nargs="+", choices=(0, 1),
                   help="TCP_NODELAY on tenant connections (0 keeps Nagle)")
    p.add_argument("--hypervisor", nargs="+", choices=HYPERVISORS, help="hypervisor mode(s)")
    p.add_argument("--rate", type=int, nargs="+", help="total message rate(s) per second")
    p.add_argument("--tenants", type=int, nargs="+", help="tenant count(s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perfbench", description="Multi-tenant OpenFlow hypervisor benchmark")
    parser.add_argument("--version", action="version", version=f"perfbench {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario", type=Path)
    _add_overrides(p)

    p = sub.add_parser("preset", help="run a bundled preset")
    p.add_argument("name")
    _add_overrides(p)

    p = sub.add_parser("sweep", help="sweep one axis of a scenario")
    p.add_argument("scenario", type=Path, nargs="?")
    p.add_argument("--preset", dest="preset_name")
    p.add_argument("--axis", choices=("rate", "tenants"), required=True)
    p.add_argument("--values", type=int, nargs="+")
    _add_overrides(p)

    sub.add_parser("list-presets", help="list bundled presets")

    for kind in ("switch", "proxy"):
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="component configuration as JSON")
    return parser


def apply_overrides(scenario: Scenario, args: argparse.Namespace) -> Scenario:
    nodelay = [bool(n) for n in args.nodelay] if args.nodelay else None
    return scenario.override(
        seed=args.seed, duration=args.duration, trim=args.trim, runs=args.runs,
        nodelay=nodelay, hypervisor=args.hypervisor,
        total_rate=args.rate, tenants=args.tenants,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _announce_ready() -> None:
    print("READY", flush=True)


def _run_component(kind: str, config: str) -> int:
    data = json.loads(config)
    if kind == "switch":
        from .switch import SwitchConfig, serve_switch

        asyncio.run(serve_switch(SwitchConfig(**data), on_ready=_announce_ready))
    else:
        from .hypervisor.proxy import ProxyConfig, serve_proxy

        asyncio.run(serve_proxy(ProxyConfig(**data), on_ready=_announce_ready))
    return EXIT_OK


def _exit_code(results) -> int:
    if any(r.launch_failed for r in results):
        return EXIT_LAUNCH
    if any(r.failed for r in results):
        return EXIT_RUNS_FAILED
    return EXIT_OK


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "list-presets":
        for line in describe_presets():
            print(line)
        return EXIT_OK
    if args.command in ("switch", "proxy"):
        return _run_component(args.command, args.config)

    from .runner import RunnerOptions, run_scenario, sweep

    if args.command == "run":
        scenario = load_scenario(args.scenario)
    elif args.command == "preset":
        scenario = preset(args.name)
    elif args.preset_name:
        scenario = preset(args.preset_name)
    elif args.scenario:
        scenario = load_scenario(args.scenario)
    else:
        raise ParseError("sweep needs a scenario file or --preset")
    scenario = apply_overrides(scenario, args)
    opts = RunnerOptions(out_dir=args.out_dir)

    if args.command == "sweep":
        _, results = sweep(scenario, args.axis, args.values, opts)
    else:
        results = [run_scenario(scenario, opts)]
    print(f"Results in {opts.out_dir / scenario.name}")
    return _exit_code(results)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    if install_uvloop():
        log.debug("Using uvloop")
    try:
        return _dispatch(args)
    except InvalidScenario as e:
        for problem in e.problems:
            log.error("Invalid scenario: %s", problem)
        return EXIT_USAGE
    except ParseError as e:
        log.error("%s", e)
        return EXIT_USAGE
    except ComponentLaunchFailed as e:
        log.error("%s", e)
        return EXIT_LAUNCH
    except KeyboardInterrupt:
        return EXIT_UNEXPECTED
    except Exception:
        log.exception("Unexpected error")
        return EXIT_UNEXPECTED
