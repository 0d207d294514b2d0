"""``gettoken``: fetch an access token through the broker.

Environment (flags win over environment):

  GETTOKEN_BROKER          broker URL (--broker)
  GETTOKEN_SECONDARY_KEY   enrolled Ed25519 key used for browser-free renewal
  GETTOKEN_CREDDIR         directory for broker token files
  BEARER_TOKEN, BEARER_TOKEN_FILE, XDG_RUNTIME_DIR
                           bearer token discovery and default output location
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..broker.client import BrokerClient
from ..broker.secondary import SecondaryKey
from ..clock import SYSTEM_CLOCK
from ..profile import ScopeError
from .gettoken import EXIT_ERROR, EXIT_OK, ClientError, ClientOptions, get_token, parse_scope_list


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gettoken", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-e", "--experiment", required=True, help="experiment (issuer alias) to get a token for")
    p.add_argument("-r", "--role", help="role within the experiment (default: analysis)")
    p.add_argument("--scopes", action="append", help="comma-separated reduced scopes; may repeat")
    p.add_argument("--audience", help="restrict the token to this audience")
    p.add_argument("--broker", help="broker URL")
    p.add_argument("-o", "--out", help="write the access token here instead of the default location")
    p.add_argument("--credkey", help="principal name to authenticate as (default: $USER)")
    p.add_argument("--secondary-key", help="path of the enrolled secondary key")
    p.add_argument("--nobootstrap", action="store_true", help="fail instead of starting a browser authentication")
    p.add_argument("--showtoken", action="store_true", help="print the token itself instead of its path")
    g = p.add_mutually_exclusive_group()
    g.add_argument("-q", "--quiet", action="store_true")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None, env=None, http=None, clock=SYSTEM_CLOCK, uid=None, stdout=None, stderr=None, open_url=None) -> int:
    env = dict(os.environ if env is None else env)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(stderr)
    handler.setFormatter(logging.Formatter("gettoken: %(message)s"))
    pkg_log = logging.getLogger("gridtokens")
    pkg_log.addHandler(handler)
    previous = pkg_log.level
    pkg_log.setLevel(logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO)
    try:
        return _run(args, env, http, clock, uid, stdout, stderr, open_url)
    finally:
        pkg_log.removeHandler(handler)
        pkg_log.setLevel(previous)


def _run(args, env, http, clock, uid, stdout, stderr, open_url) -> int:
    broker_url = args.broker or env.get("GETTOKEN_BROKER")
    if not broker_url:
        print("gettoken: no broker given (--broker or GETTOKEN_BROKER)", file=stderr)
        return EXIT_ERROR
    try:
        opts = ClientOptions(
            experiment=args.experiment,
            role=args.role,
            scopes=parse_scope_list(args.scopes),
            audience=args.audience,
            out=args.out,
            credkey=args.credkey,
            broker=broker_url,
            quiet=args.quiet,
            verbose=args.verbose,
        )
    except (ScopeError, ValueError) as exc:
        print(f"gettoken: {exc}", file=stderr)
        return EXIT_ERROR

    key = None
    key_path = args.secondary_key or env.get("GETTOKEN_SECONDARY_KEY")
    if key_path and Path(key_path).is_file():
        key = SecondaryKey.load(key_path)

    try:
        result = get_token(
            opts,
            BrokerClient(broker_url, http=http),
            env,
            os.getuid() if uid is None else uid,
            clock=clock,
            secondary_key=key,
            open_url=open_url,
            interactive=not args.nobootstrap,
            stderr=stderr,
        )
    except ClientError as exc:
        print(f"gettoken: {exc}", file=stderr)
        return exc.exit_code
    if not args.quiet:
        print(f"gettoken: {result.source} token, expires at {result.expires_at}", file=stderr)
    print(result.access_token if args.showtoken else result.access_path, file=stdout)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
