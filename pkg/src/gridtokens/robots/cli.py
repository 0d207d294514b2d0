"""``robotmgr``: keep robot broker tokens renewed and distributed.

Environment (flags win over environment):

  ROBOTMGR_STATE_DIR          state directory (journal, robot keys)
  ROBOTMGR_BROKER             broker URL
  ROBOTMGR_ADMIN_SECRET_FILE  file holding the broker admin credential (onboarding only)
  ROBOTMGR_NODES              comma-separated NODE=DIR pairs for the local-directory transport
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import webbrowser
from pathlib import Path

import yaml

from ..broker.client import BrokerClient
from ..broker.errors import BrokerError
from ..clock import SYSTEM_CLOCK
from .manager import DEFAULT_THRESHOLD, RobotError, RobotManager
from .transport import LocalDirectoryTransport

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CYCLE_FAILURES = 2


def _nodes(values) -> dict[str, str]:
    out = {}
    for item in values:
        for pair in filter(None, item.split(",")):
            node, sep, root = pair.partition("=")
            if not sep or not node or not root:
                raise ValueError(f"bad node mapping {pair!r}; expected NODE=DIR")
            out[node.strip()] = root.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robotmgr", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--state-dir")
    p.add_argument("--broker")
    p.add_argument("--admin-secret-file")
    p.add_argument("--node", action="append", default=[], help="NODE=DIR; may repeat")
    p.add_argument("--threshold", type=int, default=DEFAULT_THRESHOLD,
                   help="renew when less than this many seconds remain (default: %(default)s)")
    p.add_argument("--log-file", help="also append cycle JSON lines here")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    on = sub.add_parser("onboard", help="bootstrap and enroll a new robot")
    on.add_argument("--config", required=True, help="robot config file (YAML or JSON)")
    on.add_argument("--timeout", type=int, default=900)
    on.add_argument("--no-browser", action="store_true", help="print the URL without opening a browser")
    run = sub.add_parser("run", help="run renewal cycles")
    mode = run.add_mutually_exclusive_group()
    mode.add_argument("--once", action="store_true")
    mode.add_argument("--interval", type=int, help="seconds between cycles (default: 21600)")
    run.add_argument("--cycles", type=int, help="stop after this many cycles")
    sub.add_parser("status", help="show robots and token expiry")
    return p


def main(argv=None, env=None, http=None, clock=SYSTEM_CLOCK, stdout=None, stderr=None, open_url=None) -> int:
    env = dict(os.environ if env is None else env)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)

    handlers = []
    diag = logging.StreamHandler(stderr)
    diag.setFormatter(logging.Formatter("robotmgr: %(levelname)s %(message)s"))
    pkg_log = logging.getLogger("gridtokens")
    pkg_log.addHandler(diag)
    previous = pkg_log.level
    pkg_log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    handlers.append((pkg_log, diag))
    cycle_log = logging.getLogger("gridtokens.robots.cycle")
    cycle_log.propagate = False
    lines = logging.StreamHandler(stdout)
    cycle_log.addHandler(lines)
    handlers.append((cycle_log, lines))
    if args.log_file:
        fh = logging.FileHandler(args.log_file)
        cycle_log.addHandler(fh)
        handlers.append((cycle_log, fh))
    try:
        return _run(args, env, http, clock, stdout, stderr, open_url)
    except (RobotError, BrokerError, ValueError, OSError) as exc:
        print(f"robotmgr: {exc}", file=stderr)
        return EXIT_ERROR
    finally:
        for logger, h in handlers:
            logger.removeHandler(h)
            h.close()
        cycle_log.propagate = True
        pkg_log.setLevel(previous)


def _run(args, env, http, clock, stdout, stderr, open_url) -> int:
    state_dir = args.state_dir or env.get("ROBOTMGR_STATE_DIR")
    broker_url = args.broker or env.get("ROBOTMGR_BROKER")
    if not state_dir or not broker_url:
        print("robotmgr: --state-dir and --broker (or ROBOTMGR_STATE_DIR / ROBOTMGR_BROKER) are required", file=stderr)
        return EXIT_ERROR
    nodes = _nodes(args.node or [env.get("ROBOTMGR_NODES", "")])
    mgr = RobotManager(
        state_dir,
        BrokerClient(broker_url, http=http),
        LocalDirectoryTransport(nodes),
        clock=clock,
        threshold=args.threshold,
        http=http,
    )

    if args.command == "status":
        for row in mgr.status():
            print(json.dumps(row, sort_keys=True), file=stdout)
        return EXIT_OK

    if args.command == "onboard":
        secret_file = args.admin_secret_file or env.get("ROBOTMGR_ADMIN_SECRET_FILE")
        if not secret_file:
            print("robotmgr: onboarding needs --admin-secret-file", file=stderr)
            return EXIT_ERROR
        config = yaml.safe_load(Path(args.config).read_text())
        if not isinstance(config, dict):
            raise ValueError(f"{args.config}: expected a mapping")

        def show(url):
            print(f"robotmgr: complete the authentication for the robot at:\n\n    {url}\n", file=stderr)
            if open_url is not None:
                open_url(url)
            elif not args.no_browser:
                webbrowser.open(url)

        rec, report = mgr.onboard_robot(config, Path(secret_file).read_text().strip(), show, timeout=args.timeout)
        print(f"robotmgr: onboarded {rec.name}", file=stderr)
        return EXIT_OK if report.ok else EXIT_CYCLE_FAILURES

    interval = args.interval or 6 * 3600
    limit = 1 if args.once else args.cycles
    done, failures = 0, False
    while True:
        report = mgr.run_cycle()
        failures |= not report.ok
        done += 1
        if limit is not None and done >= limit:
            break
        clock.sleep(interval)
    return EXIT_CYCLE_FAILURES if failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
