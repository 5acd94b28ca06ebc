"""Command line entry points.

    dirmon run      launch (or reconnect to) a gateway and drive a run
    dirmon replay   re-fold a finished run and verify its snapshot
    dirmon inject   fire one fault at a live gateway
    dirmon gateway  serve the monitoring gateway in the foreground
"""
from __future__ import annotations

import argparse
import json
import sys
import urllib.error
import urllib.request
from pathlib import Path

from .faults import DEFAULT_OBSERVATION_WINDOW, FaultKind, FaultSpec
from .gateway import DEFAULT_POLL_INTERVAL, Gateway
from .model import ConfigError, DirmonError, NotFoundError, SimConfig
from .runner import RunConfig, execute_run
from .store import replay_check


def _address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _thread_ref(text: str) -> tuple[int, int]:
    node, _, idx = text.partition(":")
    try:
        return int(node), int(idx)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NODE:INDEX, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dirmon",
        description="Simulated fault-tolerant cluster with live monitoring and fault injection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="launch a run (gateway + simulated system)")
    run.add_argument("--nodes", type=int, default=4, help="number of nodes")
    run.add_argument("--manager", type=int, default=0, help="node hosting the manager")
    run.add_argument("--backups", type=_int_list, default=(1,),
                     help="comma-separated backup agent nodes")
    run.add_argument("--seed", type=int, default=0, help="run seed, echoed into the store")
    run.add_argument("--watchdog-timeout", type=int, default=3, metavar="TICKS")
    run.add_argument("--recovery-ticks", type=int, default=2, metavar="TICKS")
    run.add_argument("--threads-per-node", type=int, default=2)
    run.add_argument("--seconds-per-tick", type=float, default=1.0)
    run.add_argument("--unwatched", type=_thread_ref, action="append", default=[],
                     metavar="NODE:IDX", help="thread with no detection tools (repeatable)")
    run.add_argument("--no-recovery", type=int, action="append", default=[], metavar="NODE",
                     help="node without recovery tools (repeatable)")
    run.add_argument("--store", type=Path, required=True, help="run directory")
    run.add_argument("--scenario", type=Path, help="scenario file to execute")
    run.add_argument("--headless", action="store_true",
                     help="no gateway: capture notifications to a file")
    run.add_argument("--http", type=_address, default=("127.0.0.1", 8787), metavar="HOST:PORT")
    run.add_argument("--notify", type=_address, default=("127.0.0.1", 8788), metavar="HOST:PORT")
    run.add_argument("--ticks", type=int, help="run length; default: last directive + window")
    run.add_argument("--window", type=int, default=DEFAULT_OBSERVATION_WINDOW,
                     help="observation window in ticks")
    run.add_argument("--poll-interval", type=float, default=DEFAULT_POLL_INTERVAL)
    run.add_argument("--static", type=Path, help="static files dir for a spawned gateway")
    run.add_argument("--fast", action="store_true",
                     help="do not pace ticks even with a gateway attached")

    replay = sub.add_parser("replay", help="verify a finished run directory")
    replay.add_argument("store", type=Path, help="run directory to verify")

    inject = sub.add_parser("inject", help="send one fault to a live gateway")
    inject.add_argument("--http", type=_address, default=("127.0.0.1", 8787), metavar="HOST:PORT")
    inject.add_argument("--at", type=int, dest="at_tick", help="tick to fire at")
    inject.add_argument("--request-id", default="", help="client token for the receipt")
    inject.add_argument("kind", choices=[k.value for k in FaultKind])
    inject.add_argument("target", type=int, nargs="+",
                        help="target: node/thread/link endpoints per fault kind")

    gateway = sub.add_parser("gateway", help="serve the gateway in the foreground")
    gateway.add_argument("--store", type=Path, required=True)
    gateway.add_argument("--http", type=_address, default=("127.0.0.1", 8787), metavar="HOST:PORT")
    gateway.add_argument("--notify", type=_address, default=("127.0.0.1", 8788),
                         metavar="HOST:PORT")
    gateway.add_argument("--poll-interval", type=float, default=DEFAULT_POLL_INTERVAL)
    gateway.add_argument("--static", type=Path, help="directory of frontend files to serve")

    return parser


def _cmd_run(args) -> int:
    sim = SimConfig(
        node_count=args.nodes,
        manager_node=args.manager,
        backup_nodes=tuple(args.backups),
        watchdog_timeout_ticks=args.watchdog_timeout,
        recovery_ticks=args.recovery_ticks,
        rng_seed=args.seed,
        threads_per_node=args.threads_per_node,
        seconds_per_tick=args.seconds_per_tick,
        unwatched_threads=tuple(args.unwatched),
        no_recovery_nodes=tuple(args.no_recovery),
    )
    sim.validate()
    run = RunConfig(
        sim=sim,
        store_dir=args.store,
        scenario_path=args.scenario,
        headless=args.headless,
        http_bind=args.http,
        notify_bind=args.notify,
        ticks=args.ticks,
        window=args.window,
        poll_interval=args.poll_interval,
        static_dir=args.static,
        pace=False if args.fast else None,
    )
    result = execute_run(run)
    if result.report.entries:
        print(result.report.render_table())
    print(result.summary_line())
    return result.exit_code


def _cmd_replay(args) -> int:
    report = replay_check(args.store)
    print(report.describe())
    return 0 if report.agree else 1


def _cmd_inject(args) -> int:
    spec = FaultSpec(
        kind=FaultKind(args.kind),
        target=tuple(args.target),
        at_tick=args.at_tick,
        request_id=args.request_id,
    )
    host, port = args.http
    url = f"http://{host}:{port}/api/inject"
    request = urllib.request.Request(
        url,
        data=json.dumps(spec.to_dict()).encode("utf-8"),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=30) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        payload = json.loads(exc.read().decode("utf-8"))
    except (urllib.error.URLError, OSError) as exc:
        print(f"gateway unreachable at {host}:{port}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(payload, indent=2))
    return 0 if payload.get("accepted") else 1


def _cmd_gateway(args) -> int:
    gw = Gateway(
        store_dir=args.store,
        http_bind=args.http,
        notify_bind=args.notify,
        poll_interval=args.poll_interval,
        static_dir=args.static,
    )
    host, port = args.http
    print(f"gateway on http://{host}:{port} (notifications on {args.notify[0]}:{gw.notify_port})")
    gw.serve_forever()
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "replay": _cmd_replay,
        "inject": _cmd_inject,
        "gateway": _cmd_gateway,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, NotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DirmonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
